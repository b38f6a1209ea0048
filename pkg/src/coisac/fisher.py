"""Sensing response operators, equivalent FIM, and the position error bound.

The echo model stacks all receive BSs: block (n, m) of the response matrix
couples transmit BS m to receive BS n through the target with reflection
coefficient ``alphas[m, n]``.  Localization information about the 2*n_bs
look angles is what survives after projecting out the subspace spanned by
the (unknown) reflection coefficients; the angle information then maps to
position through the geometry Jacobian.

Everything here is pure numpy/complex128.  The training loss uses a torch
twin of `efim`/`speb` (see `fisher_torch`), cross-checked by tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSample, upa_steering, upa_steering_derivs
from .errors import DimensionError, IllConditionedWarning, SingularOperatorWarning
from .scenario import ScenarioConfig

__all__ = [
    "SensingOperators",
    "FimResult",
    "build_operators",
    "efim",
    "speb",
    "fim_report",
    "full_fim_oracle",
]

SPEB_JITTER = 1e-12   # relative diagonal loading used inside `speb`


@dataclass(frozen=True)
class SensingOperators:
    """Immutable per-sample sensing matrices (single target).

    ``deriv_stack[i]`` is the derivative of the masked response ``A ⊙ B``
    with respect to look angle i (elevations first, then azimuths).
    ``proj_perp`` is the orthogonal projector onto the complement of the
    nuisance-derivative column space.
    """

    response: np.ndarray       # A, (n_tx, n_tx)
    reflection: np.ndarray     # B, (n_tx, n_tx)
    nuisance: np.ndarray       # A_tilde, (n_tx, n_bs^2 * n_tx)
    deriv_stack: np.ndarray    # (2*n_bs, n_tx, n_tx)
    proj_perp: np.ndarray      # (n_tx, n_tx)
    sample_id: int

    @property
    def deriv_theta(self) -> np.ndarray:
        """Elevation derivatives side by side, shape (n_tx, n_bs * n_tx)."""
        return np.hstack(list(self.deriv_stack[:self.n_bs]))

    @property
    def deriv_beta(self) -> np.ndarray:
        """Azimuth derivatives side by side, shape (n_tx, n_bs * n_tx)."""
        return np.hstack(list(self.deriv_stack[self.n_bs:]))

    @property
    def deriv_concat(self) -> np.ndarray:
        """Both derivative blocks, shape (n_tx, 2 * n_bs * n_tx)."""
        return np.hstack(list(self.deriv_stack))

    @property
    def n_bs(self) -> int:
        return self.deriv_stack.shape[0] // 2


def _steering_stacks(cfg: ScenarioConfig, angles):
    """Stacked steering vector and its per-BS angle derivatives."""
    L = cfg.n_antennas
    stack = np.zeros(cfg.n_tx, dtype=np.complex128)
    d_theta = np.zeros((cfg.n_bs, cfg.n_tx), dtype=np.complex128)
    d_beta = np.zeros((cfg.n_bs, cfg.n_tx), dtype=np.complex128)
    for n in range(cfg.n_bs):
        sl = slice(n * L, (n + 1) * L)
        stack[sl] = upa_steering(angles.theta[n], angles.beta[n],
                                 cfg.array_x, cfg.array_z, cfg.spacing, cfg.wavelength)
        dth, dbe = upa_steering_derivs(angles.theta[n], angles.beta[n],
                                       cfg.array_x, cfg.array_z, cfg.spacing, cfg.wavelength)
        d_theta[n, sl] = dth
        d_beta[n, sl] = dbe
    return stack, d_theta, d_beta


def build_operators(sample: ChannelSample, cfg: ScenarioConfig) -> SensingOperators:
    """Assemble the response, nuisance, derivative, and projector matrices.

    Requires a single sensing target (the bound below is single-target).
    """
    if cfg.n_targets != 1:
        raise DimensionError("sensing FIM is defined for exactly one target")
    if sample.alphas.shape != (1, cfg.n_bs, cfg.n_bs):
        raise DimensionError(f"alphas shape {sample.alphas.shape} != (1, n_bs, n_bs)")
    n, L = cfg.n_bs, cfg.n_antennas
    ntx = cfg.n_tx
    angles = sample.angles[0]
    stack, d_th, d_be = _steering_stacks(cfg, angles)

    response = np.outer(stack, stack.conj())
    alphas = sample.alphas[0]
    reflection = np.kron(alphas.T, np.ones((L, L)))    # block (rx, tx) = alphas[tx, rx]

    deriv = np.empty((2 * n, ntx, ntx), dtype=np.complex128)
    for i in range(n):
        d_a = np.outer(d_th[i], stack.conj()) + np.outer(stack, d_th[i].conj())
        deriv[i] = d_a * reflection
        d_a = np.outer(d_be[i], stack.conj()) + np.outer(stack, d_be[i].conj())
        deriv[n + i] = d_a * reflection

    # Nuisance derivatives, one n_tx x n_tx block per (tx, rx) coefficient in
    # tx-major order; block (tx, rx) keeps only rows rx, columns tx of A.
    nuisance = np.zeros((ntx, n * n * ntx), dtype=np.complex128)
    for tx in range(n):
        for rx in range(n):
            col0 = (tx * n + rx) * ntx + tx * L
            nuisance[rx * L:(rx + 1) * L, col0:col0 + L] = \
                response[rx * L:(rx + 1) * L, tx * L:(tx + 1) * L]

    proj_perp = _perp_projector(nuisance, expected_rank=n)
    return SensingOperators(response=response, reflection=reflection,
                            nuisance=nuisance, deriv_stack=deriv,
                            proj_perp=proj_perp, sample_id=sample.sample_id)


def _perp_projector(nuisance: np.ndarray, expected_rank: int) -> np.ndarray:
    """I - Ã (ÃᴴÃ)⁺ Ãᴴ via SVD with tolerance-based rank truncation."""
    u, s, _ = np.linalg.svd(nuisance, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        tol = max(nuisance.shape) * np.finfo(float).eps * s[0]
        rank = int(np.sum(s > tol))
    if rank < expected_rank:
        warnings.warn(
            f"nuisance operator rank {rank} < {expected_rank}; geometry is degenerate",
            SingularOperatorWarning)
    basis = u[:, :rank]
    proj = np.eye(nuisance.shape[0], dtype=np.complex128) - basis @ basis.conj().T
    return 0.5 * (proj + proj.conj().T)


def _angle_gram(beams, ops, sigma2):
    """Sum over beam columns of Re{G^H proj G}, G[:, i] = deriv_stack[i] @ p."""
    two_n = ops.deriv_stack.shape[0]
    out = np.zeros((two_n, two_n))
    for col in range(beams.shape[1]):
        g = ops.deriv_stack @ beams[:, col]          # (2n, n_tx)
        out += np.real(np.conj(g) @ ops.proj_perp @ g.T)
    return (2.0 / sigma2) * out


def efim(beams, ops: SensingOperators, sigma2: float) -> np.ndarray:
    """Equivalent FIM of the stacked look angles, shape (2*n_bs, 2*n_bs).

    Sums the projected information of the sensing beam and every user beam
    (unit-power independent symbol streams).  Output is symmetrized.
    """
    beams = np.asarray(beams, dtype=np.complex128)
    ntx = ops.deriv_stack.shape[1]
    if beams.ndim != 2 or beams.shape[0] != ntx:
        raise DimensionError(f"beams shape {beams.shape} incompatible with n_tx={ntx}")
    j_ang = _angle_gram(beams, ops, sigma2)
    return 0.5 * (j_ang + j_ang.T)


def speb(beams, ops: SensingOperators, jac: np.ndarray, sigma2: float,
         jitter_rel: float = SPEB_JITTER):
    """Squared position error bound (m^2) and the diagonal loading applied.

    The position FIM is ``jac^T @ efim @ jac``; its inverse trace is computed
    through linear solves against ``J + jitter_rel * tr(J)/3 * I`` so the
    value stays finite (and differentiable in the torch twin) near rank
    deficiency.  Warns when the condition number exceeds 1e12.
    """
    j_ang = efim(beams, ops, sigma2)
    jac = np.asarray(jac, dtype=float)
    if jac.shape != (j_ang.shape[0], 3):
        raise DimensionError(f"jacobian shape {jac.shape} != ({j_ang.shape[0]}, 3)")
    j_pos = jac.T @ j_ang @ jac
    j_pos = 0.5 * (j_pos + j_pos.T)
    loading = jitter_rel * np.trace(j_pos) / 3.0
    cond = np.linalg.cond(j_pos)
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn(f"position FIM condition number {cond:.3e} > 1e12",
                      IllConditionedWarning)
    try:
        solved = np.linalg.solve(j_pos + loading * np.eye(3), np.eye(3))
    except np.linalg.LinAlgError:
        return float("inf"), float(loading)
    return float(np.trace(solved)), float(loading)


@dataclass(frozen=True)
class FimResult:
    """Bundle of the angle FIM, the geometry Jacobian, the position FIM,
    and the resulting bound (with the diagonal loading that produced it)."""

    angle_fim: np.ndarray      # (2n, 2n)
    jacobian: np.ndarray       # (2n, 3)
    position_fim: np.ndarray   # (3, 3)
    speb: float                # m^2
    loading: float             # absolute jitter added before inversion


def fim_report(beams, ops: SensingOperators, jac, sigma2: float) -> FimResult:
    """Evaluate the whole information chain for one beam matrix."""
    j_ang = efim(beams, ops, sigma2)
    jac = np.asarray(jac, dtype=float)
    j_pos = jac.T @ j_ang @ jac
    value, loading = speb(beams, ops, jac, sigma2)
    return FimResult(angle_fim=j_ang, jacobian=jac,
                     position_fim=0.5 * (j_pos + j_pos.T),
                     speb=value, loading=loading)


def full_fim_oracle(sample: ChannelSample, beams, cfg: ScenarioConfig, sigma2=None):
    """Brute-force FIM blocks and Schur-complement EFIM (test oracle).

    Treats each beam column as an independent unit-power symbol stream and,
    per stream, eliminates the complex reflection coefficients (expanded
    into real/imag parts) from the full parameter FIM.  Returns
    ``(j_angles, j_cross, j_nuis, j_schur)`` where the cross/nuisance
    blocks are the complex stream-summed Gram matrices and ``j_schur`` is
    the eliminated angle FIM that must match `efim`.

    Small instances only (n_bs <= 3, n_antennas <= 8): cost is cubic in the
    nuisance dimension per stream.
    """
    if cfg.n_bs > 3 or cfg.n_antennas > 8:
        raise DimensionError("oracle is restricted to n_bs <= 3, n_antennas <= 8")
    if sigma2 is None:
        sigma2 = cfg.noise_power
    ops = build_operators(sample, cfg)
    beams = np.asarray(beams, dtype=np.complex128)
    n, ntx = cfg.n_bs, cfg.n_tx
    scale = 2.0 / sigma2

    nuis_blocks = [ops.nuisance[:, b * ntx:(b + 1) * ntx] for b in range(n * n)]
    two_n = 2 * n
    j_angles = np.zeros((two_n, two_n))
    j_cross = np.zeros((two_n, n * n), dtype=np.complex128)
    j_nuis = np.zeros((n * n, n * n), dtype=np.complex128)
    j_schur = np.zeros((two_n, two_n))
    for col in range(beams.shape[1]):
        p = beams[:, col]
        g = np.stack([ops.deriv_stack[i] @ p for i in range(two_n)], axis=1)
        m = np.stack([blk @ p for blk in nuis_blocks], axis=1)
        jww = scale * np.real(g.conj().T @ g)
        v = g.conj().T @ m
        w = m.conj().T @ m
        # complex coefficients -> [real parts, imag parts] real parametrization
        jwa = scale * np.hstack([v.real, -v.imag])
        jaa = scale * np.block([[w.real, -w.imag], [w.imag, w.real]])
        j_schur += jww - jwa @ np.linalg.pinv(jaa, hermitian=True) @ jwa.T
        j_angles += jww
        j_cross += scale * v
        j_nuis += scale * w
    return j_angles, j_cross, j_nuis, 0.5 * (j_schur + j_schur.T)
