"""Differentiable (torch) twin of the angle-FIM / position-bound path.

The per-sample operator tensors are constants with respect to the beams,
so the bound is a smooth quadratic-then-solve function of the beamforming
matrix.  Tests pin this module against the numpy implementation in
`fisher` at 1e-12.
"""

from __future__ import annotations

import numpy as np
import torch

from .fisher import SPEB_JITTER

__all__ = ["FimConstants", "efim_torch", "speb_torch"]


class FimConstants:
    """Per-sample constant tensors for the differentiable bound.

    ``deriv`` (B, 2n, n_tx, n_tx) complex128, ``proj`` (B, n_tx, n_tx)
    complex128, ``jac`` (B, 2n, 3) float64.
    """

    def __init__(self, ops_list, jac_list):
        self.deriv = torch.from_numpy(np.stack([o.deriv_stack for o in ops_list]))
        self.proj = torch.from_numpy(np.stack([o.proj_perp for o in ops_list]))
        self.jac = torch.from_numpy(np.stack(jac_list).astype(np.float64))

    def __len__(self):
        return self.deriv.shape[0]

    def subset(self, indices) -> "FimConstants":
        out = FimConstants.__new__(FimConstants)
        idx = torch.as_tensor(indices, dtype=torch.long)
        out.deriv = self.deriv[idx]
        out.proj = self.proj[idx]
        out.jac = self.jac[idx]
        return out

    @classmethod
    def from_samples(cls, samples, cfg, target_index=0) -> "FimConstants":
        from .fisher import build_operators
        from .scenario import position_jacobian
        ops = [build_operators(s, cfg) for s in samples]
        jac = position_jacobian(cfg, target_index)
        return cls(ops, [jac] * len(samples))


def efim_torch(beams: torch.Tensor, consts: FimConstants, sigma2: float) -> torch.Tensor:
    """Batched equivalent angle FIM, (B, 2n, 2n) float64.

    ``beams`` is (B, n_tx, n_columns) complex (any complex dtype; upcast
    to complex128 internally).
    """
    beams = beams.to(torch.complex128)
    g = torch.einsum("bitm,bmc->bitc", consts.deriv, beams)   # (B, 2n, n_tx, C)
    pg = torch.einsum("btm,bimc->bitc", consts.proj, g)
    j_ang = (torch.einsum("bitc,bjtc->bij", g.conj(), pg)).real * (2.0 / sigma2)
    return 0.5 * (j_ang + j_ang.transpose(1, 2))


def speb_torch(beams: torch.Tensor, consts: FimConstants, sigma2: float,
               jitter_rel: float = SPEB_JITTER) -> torch.Tensor:
    """Batched position error bound, (B,) float64; same jitter as `fisher.speb`."""
    j_ang = efim_torch(beams, consts, sigma2)
    j_pos = torch.einsum("bia,bij,bjc->bac", consts.jac, j_ang, consts.jac)
    j_pos = 0.5 * (j_pos + j_pos.transpose(1, 2))
    trace = j_pos.diagonal(dim1=1, dim2=2).sum(dim=1)
    loading = jitter_rel * trace / 3.0
    eye = torch.eye(3, dtype=j_pos.dtype).expand_as(j_pos)
    solved = torch.linalg.solve(j_pos + loading[:, None, None] * eye, eye)
    return solved.diagonal(dim1=1, dim2=2).sum(dim=1)
