"""UPA steering vectors, synthetic channel generation, and dataset I/O.

The panel lies in the x-z plane.  Flattening order of the antenna grid is
fixed globally: index ``i_x * array_z + i_z`` (z index fastest).  The FIM
derivative code relies on this order, so it must never change.

Channels are stored at 32-bit complex precision (matching the on-disk
format); all physics downstream upcasts to complex128.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .errors import DegenerateGeometry, DimensionError, FormatError
from .scenario import AngleSet, ScenarioConfig, target_angles

__all__ = [
    "upa_steering",
    "upa_steering_derivs",
    "ChannelSample",
    "PerturbationSpec",
    "synth_channels",
    "perturb",
    "save_dataset",
    "load_dataset",
]


def _grid_indices(array_x: int, array_z: int):
    ix = np.repeat(np.arange(array_x), array_z)
    iz = np.tile(np.arange(array_z), array_x)
    return ix, iz


def upa_steering(theta, beta, array_x, array_z, spacing, wavelength):
    """Unit-norm planar-array steering vector toward (theta, beta).

    Entry for antenna (i_x, i_z) is
    ``exp(j * 2*pi/wavelength * spacing * (i_x cos(beta) cos(theta) + i_z sin(theta))) / sqrt(L)``
    flattened with i_z fastest.
    """
    if array_x < 1 or array_z < 1:
        raise DimensionError("array dimensions must be >= 1")
    ix, iz = _grid_indices(array_x, array_z)
    phase = (2.0 * np.pi / wavelength) * spacing * (
        ix * np.cos(beta) * np.cos(theta) + iz * np.sin(theta))
    return np.exp(1j * phase) / np.sqrt(array_x * array_z)


def upa_steering_derivs(theta, beta, array_x, array_z, spacing, wavelength):
    """Analytic d(steering)/d(theta) and d(steering)/d(beta)."""
    ix, iz = _grid_indices(array_x, array_z)
    a = upa_steering(theta, beta, array_x, array_z, spacing, wavelength)
    scale = 1j * (2.0 * np.pi / wavelength) * spacing
    d_theta = a * (scale * (-ix * np.cos(beta) * np.sin(theta) + iz * np.cos(theta)))
    d_beta = a * (scale * (-ix * np.sin(beta) * np.cos(theta)))
    return d_theta, d_beta


@dataclass
class ChannelSample:
    """One training/evaluation instance.

    ``chan`` is the stacked user-channel matrix, shape (n_tx, n_users),
    column k the concatenation of BS-block channels of user k, complex64.
    ``alphas[z, m, n]`` is the reflection coefficient of target z for the
    (transmit BS m, receive BS n) path, complex128.
    """

    chan: np.ndarray                 # (n_tx, n_users) complex64
    target_pos: np.ndarray           # (n_targets, 3) float64
    alphas: np.ndarray               # (n_targets, n_bs, n_bs) complex128
    angles: list                     # AngleSet per target
    sample_id: int = 0
    rng_seed: Optional[int] = None


@dataclass(frozen=True)
class PerturbationSpec:
    """Input-noise model for robustness runs.

    ``csi_snr_db`` sets the channel-estimate SNR (per link); the position
    error draws each coordinate magnitude uniformly from
    ``[pos_err_lo, pos_err_hi)`` with an independent random sign.
    """

    csi_snr_db: float
    pos_err_lo: float = 0.0
    pos_err_hi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pos_err_lo < 0 or not (self.pos_err_hi > self.pos_err_lo
                                       or (self.pos_err_lo == 0 and self.pos_err_hi == 0)):
            raise DimensionError("position error range must satisfy 0 <= lo < hi (or 0, 0)")


def _sample_rng(master_seed: int, index: int) -> np.random.Generator:
    # Documented splitting rule: child i of the master entropy pool.
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def _link_channel(cfg: ScenarioConfig, bs, user, rng) -> np.ndarray:
    """Geometric multipath channel of one (user, BS) link: LoS + scatterers."""
    theta, beta, dist, _ = target_angles(bs, user)
    los_gain = cfg.wavelength / (4.0 * np.pi * dist)
    los_phase = np.exp(-2j * np.pi * dist / cfg.wavelength)
    h = los_gain * los_phase * upa_steering(
        theta, beta, cfg.array_x, cfg.array_z, cfg.spacing, cfg.wavelength)
    if cfg.n_paths > 0:
        # Scattered power 10 dB below LoS in total (fixed Rician-style split).
        path_std = los_gain * np.sqrt(10.0 ** (-1.0) / cfg.n_paths)
        for _ in range(cfg.n_paths):
            th = rng.uniform(-np.pi / 4, np.pi / 4)
            be = rng.uniform(-np.pi, np.pi)
            gain = path_std * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
            h = h + gain * upa_steering(
                th, be, cfg.array_x, cfg.array_z, cfg.spacing, cfg.wavelength)
    return h


def _draw_alphas(cfg: ScenarioConfig, rng) -> np.ndarray:
    """Bistatic reflection coefficients: magnitude rcs/(d_m d_n), random phase."""
    alphas = np.empty((cfg.n_targets, cfg.n_bs, cfg.n_bs), dtype=np.complex128)
    for z_idx, tgt in enumerate(cfg.target_positions):
        dists = np.array([target_angles(bs, tgt)[2] for bs in cfg.bs_positions])
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.n_bs, cfg.n_bs))
        mags = cfg.rcs_scale / np.outer(dists, dists)
        alphas[z_idx] = mags * np.exp(1j * phases)
    return alphas


def _make_sample(cfg: ScenarioConfig, index: int, master_seed: int) -> ChannelSample:
    rng = _sample_rng(master_seed, index)
    L = cfg.n_antennas
    lo, hi = cfg.user_region
    chan = np.empty((cfg.n_tx, cfg.n_users), dtype=np.complex128)
    for k in range(cfg.n_users):
        user = rng.uniform(lo, hi)
        for n_idx, bs in enumerate(cfg.bs_positions):
            chan[n_idx * L:(n_idx + 1) * L, k] = _link_channel(cfg, bs, user, rng)
    # Scale so the sample-mean per-link SNR at full single-beam power hits the
    # reference: mean_{k,n} P_n * ||h_{k,n}||^2 / sigma^2 = 10^(ref/10).
    blocks = chan.reshape(cfg.n_bs, L, cfg.n_users)
    link_pow = np.sum(np.abs(blocks) ** 2, axis=1)          # (n_bs, n_users)
    mean_snr = np.mean(cfg.power_budget[:, None] * link_pow) / cfg.noise_power
    chan *= np.sqrt(10.0 ** (cfg.ref_snr_db / 10.0) / mean_snr)

    angles = [AngleSet.from_positions(cfg.bs_positions, tgt)
              for tgt in cfg.target_positions]
    return ChannelSample(
        chan=chan.astype(np.complex64),
        target_pos=cfg.target_positions.copy(),
        alphas=_draw_alphas(cfg, rng),
        angles=angles,
        sample_id=index,
        rng_seed=master_seed,
    )


def synth_channels(cfg: ScenarioConfig, n_samples: int, seed: int = 0) -> list:
    """Generate ``n_samples`` ChannelSamples, deterministic in ``seed``.

    Per-sample randomness comes from independent child streams of the master
    seed, so generation order (or parallel fan-out) cannot change results.
    """
    if n_samples < 1:
        raise DimensionError("n_samples must be >= 1")
    return [_make_sample(cfg, i, seed) for i in range(n_samples)]


def perturb(sample: ChannelSample, spec: PerturbationSpec, cfg: ScenarioConfig) -> ChannelSample:
    """Noisy copy of a sample: estimated channel plus estimated target position.

    The channel noise is circular complex Gaussian calibrated per link so
    ``E||dh||^2 / ||h||^2 = 10^(-csi_snr_db/10)``.  Position error magnitudes
    are uniform in [lo, hi) per coordinate with random signs; angles and
    steering inputs downstream are recomputed from the noisy position.
    The clean sample is never mutated.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(sample.sample_id,)))
    L = cfg.n_antennas
    chan = np.array(sample.chan, dtype=np.complex128, copy=True)
    noise_ratio = 10.0 ** (-spec.csi_snr_db / 10.0)
    for k in range(chan.shape[1]):
        for n_idx in range(cfg.n_bs):
            block = chan[n_idx * L:(n_idx + 1) * L, k]
            var = noise_ratio * np.sum(np.abs(block) ** 2) / L
            noise = np.sqrt(var / 2.0) * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
            chan[n_idx * L:(n_idx + 1) * L, k] = block + noise

    target_pos = np.array(sample.target_pos, dtype=float, copy=True)
    if spec.pos_err_hi > spec.pos_err_lo:
        for z_idx in range(target_pos.shape[0]):
            noisy = _noisy_position(target_pos[z_idx], spec, rng, cfg)
            target_pos[z_idx] = noisy
    angles = [AngleSet.from_positions(cfg.bs_positions, tgt) for tgt in target_pos]
    return ChannelSample(
        chan=chan.astype(np.complex64),
        target_pos=target_pos,
        alphas=sample.alphas.copy(),
        angles=angles,
        sample_id=sample.sample_id,
        rng_seed=spec.seed,
    )


def _noisy_position(pos, spec, rng, cfg):
    for _ in range(2):   # one resample allowed if the draw is degenerate
        mags = rng.uniform(spec.pos_err_lo, spec.pos_err_hi, size=3)
        signs = rng.choice([-1.0, 1.0], size=3)
        candidate = pos + mags * signs
        ok = all(np.hypot(candidate[0] - bs[0], candidate[1] - bs[1]) > 1e-9
                 for bs in cfg.bs_positions)
        if ok:
            return candidate
    raise DegenerateGeometry("perturbed target fell on a BS vertical axis twice")


# ---------------------------------------------------------------------------
# Dataset container.  Little-endian throughout:
#   magic 'CISD' | version u16 | n_bs u32 | n_users u32 | n_targets u32
#   | n_antennas u32 | array_x u32 | array_z u32 | n_samples u32
#   | wavelength f64 | spacing f64
# then per sample:
#   chan     n_tx*n_users complex64  (interleaved re/im f32)
#   targets  n_targets*3  f64
#   alphas   n_targets*n_bs*n_bs complex128 (interleaved f64)
# ---------------------------------------------------------------------------

_MAGIC = b"CISD"
_VERSION = 1
_HEADER = struct.Struct("<4sH7Idd")


def save_dataset(path, samples: Sequence[ChannelSample], cfg: ScenarioConfig) -> None:
    """Write samples to the binary container (lossless round trip)."""
    with open(path, "wb") as fh:
        _write_stream(fh, samples, cfg)


def _write_stream(fh: BinaryIO, samples, cfg):
    fh.write(_HEADER.pack(_MAGIC, _VERSION, cfg.n_bs, cfg.n_users, cfg.n_targets,
                          cfg.n_antennas, cfg.array_x, cfg.array_z, len(samples),
                          cfg.wavelength, cfg.spacing))
    for s in samples:
        if s.chan.shape != (cfg.n_tx, cfg.n_users):
            raise DimensionError(f"sample {s.sample_id}: chan shape {s.chan.shape} "
                                 f"!= {(cfg.n_tx, cfg.n_users)}")
        fh.write(np.ascontiguousarray(s.chan, dtype="<c8").tobytes())
        fh.write(np.ascontiguousarray(s.target_pos, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(s.alphas, dtype="<c16").tobytes())


def load_dataset(path, cfg: Optional[ScenarioConfig] = None) -> list:
    """Read samples back; verifies magic/version and (optionally) the scenario dims."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_bs, n_users, n_targets, n_ant, array_x, array_z, n_samples, \
        wavelength, spacing = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if array_x * array_z != n_ant:
        raise FormatError(f"{path}: header antenna count {n_ant} != {array_x}x{array_z}")
    if cfg is not None:
        got = (n_bs, n_users, n_targets, n_ant)
        want = (cfg.n_bs, cfg.n_users, cfg.n_targets, cfg.n_antennas)
        if got != want:
            raise DimensionError(f"{path}: header dims {got} conflict with config {want}")
        bs_positions = cfg.bs_positions
    else:
        bs_positions = None

    n_tx = n_bs * n_ant
    chan_bytes = n_tx * n_users * 8
    tgt_bytes = n_targets * 3 * 8
    alpha_bytes = n_targets * n_bs * n_bs * 16
    per_sample = chan_bytes + tgt_bytes + alpha_bytes
    expected = _HEADER.size + n_samples * per_sample
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} != expected {expected}")

    samples = []
    off = _HEADER.size
    for i in range(n_samples):
        chan = np.frombuffer(data, dtype="<c8", count=n_tx * n_users, offset=off)
        chan = chan.reshape(n_tx, n_users).copy()
        off += chan_bytes
        tgt = np.frombuffer(data, dtype="<f8", count=n_targets * 3, offset=off)
        tgt = tgt.reshape(n_targets, 3).copy()
        off += tgt_bytes
        alphas = np.frombuffer(data, dtype="<c16", count=n_targets * n_bs * n_bs, offset=off)
        alphas = alphas.reshape(n_targets, n_bs, n_bs).copy()
        off += alpha_bytes
        if bs_positions is not None:
            angles = [AngleSet.from_positions(bs_positions, t) for t in tgt]
        else:
            angles = []
        samples.append(ChannelSample(chan=chan, target_pos=tgt, alphas=alphas,
                                     angles=angles, sample_id=i))
    return samples
