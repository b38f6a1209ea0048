"""Unsupervised penalty-loss trainer and evaluation helpers.

The loss is the negative batch-mean sum rate plus two epoch-growing hinge
penalties: one on the position-bound constraint, one on a per-user rate
floor that steers optimization away from starved-user local optima.  When
an input perturbation is configured, the network consumes the noisy
features while every loss term is evaluated on the clean data.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from . import commetrics
from .baselines import reference_beamformer
from .channel import PerturbationSpec, perturb
from .errors import DimensionError, NonFiniteLoss
from .fisher import SPEB_JITTER, build_operators, speb
from .fisher_torch import FimConstants, speb_torch
from .lhgnn import init_features_batch
from .scenario import ScenarioConfig, position_jacobian

__all__ = [
    "TrainConfig",
    "TrainReport",
    "penalty_schedule",
    "rates_torch",
    "loss_batch",
    "default_gamma",
    "train",
    "evaluate_beams",
    "model_beams",
]


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    ``speb_limit`` is the sensing-bound threshold (m^2); leave None to
    calibrate it from the reference beamformer before training.  Penalty
    weights grow linearly with the (1-based) epoch index.
    """

    epochs: int = 800
    batch_size: int = 64
    learning_rate: float = 2e-4
    weight_decay: float = 5e-4
    speb_penalty_slope: float = 0.8
    rate_penalty_slope: float = 0.5
    rate_floor: float = 0.05
    speb_limit: Optional[float] = None
    seed: int = 0
    perturbation: Optional[PerturbationSpec] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.rate_floor < 0:
            raise ValueError("rate_floor must be >= 0")
        if self.speb_limit is not None and self.speb_limit <= 0:
            raise ValueError("speb_limit must be positive")


@dataclass
class TrainReport:
    """Per-epoch records plus run metadata.

    Each record: (epoch, loss, mean_rate, mean_speb, viol_speb_frac,
    viol_rate_frac).  ``meta`` keeps the resolved gamma, its provenance,
    seeds, and timing.
    """

    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    wall_time: float = 0.0
    optimizer: object = None   # live AdamW of the finished run (not serialized)

    COLUMNS = ("epoch", "loss", "mean_rate", "mean_speb",
               "viol_speb_frac", "viol_rate_frac")

    def add(self, **kwargs):
        self.records.append({c: kwargs[c] for c in self.COLUMNS})

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}: {self.meta[key]}\n")
            fh.write(f"# wall_time_s: {self.wall_time:.3f}\n")
            fh.write(",".join(self.COLUMNS) + "\n")
            for rec in self.records:
                fh.write(",".join(repr(rec[c]) for c in self.COLUMNS) + "\n")


def penalty_schedule(epoch: int, cfg: TrainConfig):
    """Penalty weights for a 1-based epoch index."""
    return cfg.speb_penalty_slope * epoch, cfg.rate_penalty_slope * epoch


def rates_torch(chan: torch.Tensor, beams: torch.Tensor, noise_power: float,
                n_sensing: int) -> torch.Tensor:
    """Per-user achievable rates, differentiable.  chan (B, n_tx, K),
    beams (B, n_tx, n_sensing + K), both complex; returns (B, K) float."""
    chan = chan.to(torch.complex128)
    beams = beams.to(torch.complex128)
    gains = torch.abs(torch.einsum("bmk,bmc->bkc", chan.conj(), beams)) ** 2
    signal = torch.diagonal(gains[:, :, n_sensing:], dim1=1, dim2=2)
    interference = gains.sum(dim=2) - signal
    snr = signal / (interference + noise_power)
    return torch.log2(1.0 + snr)


def loss_batch(beams, chan, consts: FimConstants, noise_power, n_sensing,
               rho1, rho2, gamma, rate_floor):
    """Penalty loss of one batch plus the detached per-sample diagnostics."""
    rates = rates_torch(chan, beams, noise_power, n_sensing)
    bound = speb_torch(beams, consts, noise_power)
    sum_rates = rates.sum(dim=1)
    loss = (-sum_rates.mean()
            + rho1 * torch.relu(bound - gamma).mean()
            + rho2 * torch.relu(rate_floor - rates).sum(dim=1).mean())
    return loss, rates.detach(), bound.detach()


def default_gamma(cfg: ScenarioConfig, calib_samples, sensing_fraction=0.3) -> float:
    """Sensing-bound threshold: median bound of the reference beamformer
    at full power over the calibration set."""
    if len(calib_samples) < 16:
        raise ValueError("need at least 16 calibration samples")
    jac = position_jacobian(cfg)
    values = []
    for s in calib_samples:
        ops = build_operators(s, cfg)
        beams = reference_beamformer(s, cfg, sensing_fraction)
        values.append(speb(beams, ops, jac, cfg.noise_power)[0])
    return float(np.median(values))


def _clean_digest(samples) -> str:
    digest = hashlib.sha256()
    for s in samples:
        digest.update(s.chan.tobytes())
        digest.update(s.target_pos.tobytes())
    return digest.hexdigest()


class _Batches:
    """Precomputed tensors for the whole dataset."""

    def __init__(self, samples, cfg: ScenarioConfig, dtype, perturbation):
        self.consts = FimConstants.from_samples(samples, cfg)
        self.chan = torch.from_numpy(np.stack(
            [s.chan.astype(np.complex128) for s in samples]))
        clean_feats = init_features_batch(samples, cfg)
        self.clean_feats = torch.from_numpy(clean_feats).to(dtype)
        if perturbation is not None:
            noisy = [perturb(s, perturbation, cfg) for s in samples]
            self.input_feats = torch.from_numpy(
                init_features_batch(noisy, cfg)).to(dtype)
        else:
            self.input_feats = self.clean_feats


def train(model, samples, cfg: ScenarioConfig, tcfg: TrainConfig,
          optimizer=None, start_epoch=1):
    """Run the unsupervised training loop; returns (model, TrainReport).

    Deterministic given ``tcfg.seed`` (data order, any perturbation draws,
    and parameter updates all derive from it); per-epoch state depends only
    on the epoch index, so a checkpointed run resumed via ``start_epoch``
    (with its optimizer tensors) replays identically.  If the loss goes
    non-finite the epoch restarts once at half the learning rate; a second
    occurrence raises NonFiniteLoss.
    """
    if len(samples) == 0:
        raise ValueError("empty dataset")
    if cfg.n_targets != 1:
        raise DimensionError("training loss requires a single sensing target")

    t0 = time.perf_counter()
    torch.manual_seed(tcfg.seed)
    dtype = next(model.parameters()).dtype
    data = _Batches(samples, cfg, dtype, tcfg.perturbation)
    clean_digest = _clean_digest(samples)

    gamma = tcfg.speb_limit
    gamma_origin = "config"
    if gamma is None:
        calib = samples[:max(16, min(64, len(samples)))]
        gamma = default_gamma(cfg, calib)
        gamma_origin = "reference_beamformer_median"

    power = torch.as_tensor(cfg.power_budget)
    if optimizer is None:
        optimizer = torch.optim.AdamW(model.parameters(), lr=tcfg.learning_rate,
                                      weight_decay=tcfg.weight_decay)
    report = TrainReport(meta={
        "gamma": gamma,
        "gamma_origin": gamma_origin,
        "seed": tcfg.seed,
        "epochs": tcfg.epochs,
        "batch_size": tcfg.batch_size,
        "learning_rate": tcfg.learning_rate,
        "weight_decay": tcfg.weight_decay,
        "rate_floor": tcfg.rate_floor,
        "n_samples": len(samples),
        "perturbation": repr(tcfg.perturbation),
        "model": type(model).__name__,
        "speb_jitter_rel": SPEB_JITTER,
    })

    n = len(samples)
    guard_used = False
    for epoch in range(start_epoch, tcfg.epochs + 1):
        rho1, rho2 = penalty_schedule(epoch, tcfg)
        # Stateless per-epoch permutation so checkpoint resume replays it.
        perm = np.random.default_rng(
            np.random.SeedSequence(tcfg.seed, spawn_key=(0xE0, epoch))).permutation(n)
        snapshot = {k: v.detach().clone() for k, v in model.state_dict().items()}
        opt_snapshot = _optimizer_tensors(optimizer, model, clone=True)
        result = _run_epoch(model, optimizer, data, cfg, tcfg, perm,
                            rho1, rho2, gamma, power)
        if result is None:                      # non-finite loss
            if guard_used:
                raise NonFiniteLoss(
                    f"loss non-finite twice (epoch {epoch}); aborting")
            guard_used = True
            model.load_state_dict(snapshot)
            _restore_optimizer_tensors(optimizer, model, opt_snapshot)
            for group in optimizer.param_groups:
                group["lr"] *= 0.5
            result = _run_epoch(model, optimizer, data, cfg, tcfg, perm,
                                rho1, rho2, gamma, power)
            if result is None:
                raise NonFiniteLoss(
                    f"loss non-finite after halving learning rate (epoch {epoch})")
        loss_mean, rates_all, bound_all = result
        report.add(
            epoch=epoch,
            loss=loss_mean,
            mean_rate=float(rates_all.sum(axis=1).mean()),
            mean_speb=float(bound_all.mean()),
            viol_speb_frac=float(np.mean(bound_all > gamma)),
            viol_rate_frac=float(np.mean(rates_all < tcfg.rate_floor)),
        )
        if _clean_digest(samples) != clean_digest:
            raise RuntimeError("clean dataset was mutated during training")
    report.wall_time = time.perf_counter() - t0
    report.meta["final_learning_rate"] = optimizer.param_groups[0]["lr"]
    report.optimizer = optimizer
    return model, report


def _run_epoch(model, optimizer, data, cfg, tcfg, perm, rho1, rho2, gamma, power):
    n = len(perm)
    losses = []
    rates_all = np.zeros((n, cfg.n_users))
    bound_all = np.zeros(n)
    for start in range(0, n, tcfg.batch_size):
        idx = perm[start:start + tcfg.batch_size]
        beams = model(data.input_feats[idx], power)
        loss, rates, bound = loss_batch(
            beams, data.chan[idx], data.consts.subset(idx), cfg.noise_power,
            cfg.n_targets, rho1, rho2, gamma, tcfg.rate_floor)
        if not torch.isfinite(loss):
            return None
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
        rates_all[idx] = rates.numpy()
        bound_all[idx] = bound.numpy()
    return float(np.mean(losses)), rates_all, bound_all


def _optimizer_tensors(optimizer, model, clone=False):
    """Flatten AdamW state to named f32-compatible tensors."""
    out = {}
    names = {id(p): name for name, p in model.named_parameters()}
    for param, state in optimizer.state.items():
        base = names.get(id(param))
        if base is None:
            continue
        for key, val in state.items():
            tensor = val if torch.is_tensor(val) else torch.tensor(float(val))
            out[f"opt/{base}/{key}"] = tensor.detach().clone() if clone else tensor.detach()
    return out


def _restore_optimizer_tensors(optimizer, model, tensors):
    params = dict(model.named_parameters())
    optimizer.state.clear()
    grouped = {}
    for full, tensor in tensors.items():
        _, base, key = full.split("/", 2)
        grouped.setdefault(base, {})[key] = tensor
    for base, state in grouped.items():
        param = params[base]
        optimizer.state[param] = {k: v.clone() for k, v in state.items()}


def save_model_checkpoint(path, model, optimizer=None, extra=None):
    """Persist model (and optionally optimizer) tensors with a header that
    suffices to rebuild the model.  32-bit exact for float32 models."""
    from .checkpoint import save_checkpoint

    header = model.config_header()
    if extra:
        header["extra"] = extra
    tensors = {name: tensor.detach().numpy()
               for name, tensor in model.state_dict().items()}
    if optimizer is not None:
        tensors.update({name: t.numpy() for name, t
                        in _optimizer_tensors(model=model, optimizer=optimizer).items()})
    save_checkpoint(path, header, tensors)


def load_model_checkpoint(path, dtype=torch.float32):
    """Rebuild (model, header, optimizer_tensors) from a checkpoint file."""
    from .baselines import model_from_header
    from .checkpoint import load_checkpoint

    header, tensors = load_checkpoint(path)
    model = model_from_header(header, dtype=dtype)
    state = {name: torch.from_numpy(arr).to(dtype)
             for name, arr in tensors.items() if not name.startswith("opt/")}
    model.load_state_dict(state)
    opt_tensors = {name: torch.from_numpy(arr)
                   for name, arr in tensors.items() if name.startswith("opt/")}
    return model, header, opt_tensors


def resume_optimizer(model, opt_tensors, tcfg: TrainConfig):
    """Fresh AdamW with restored moment/step tensors."""
    optimizer = torch.optim.AdamW(model.parameters(), lr=tcfg.learning_rate,
                                  weight_decay=tcfg.weight_decay)
    if opt_tensors:
        _restore_optimizer_tensors(optimizer, model, opt_tensors)
    return optimizer


# ---------------------------------------------------------------------------
# Evaluation helpers (numpy path, shared by the CLI and the test suites).
# ---------------------------------------------------------------------------

def model_beams(model, samples, cfg: ScenarioConfig, feature_samples=None) -> np.ndarray:
    """Forward a model over a sample list; returns (B, n_tx, Z+K) complex128.

    ``feature_samples`` (e.g. noisy twins) override the inputs the network
    sees; metrics downstream still come from the clean ``samples``.
    """
    dtype = next(model.parameters()).dtype
    feats = init_features_batch(feature_samples or samples, cfg)
    power = torch.as_tensor(cfg.power_budget)
    with torch.no_grad():
        beams = model(torch.from_numpy(feats).to(dtype), power)
    return beams.numpy().astype(np.complex128)


def evaluate_beams(beams_batch, samples, cfg: ScenarioConfig, gamma=None,
                   rate_floor=0.0) -> dict:
    """Mean sum rate / bound / violation fractions of per-sample beams."""
    jac = position_jacobian(cfg)
    rates, bounds = [], []
    for s, beams in zip(samples, beams_batch):
        rates.append([commetrics.rate(s.chan, beams, k, cfg.noise_power,
                                      cfg.n_targets)
                      for k in range(cfg.n_users)])
        ops = build_operators(s, cfg)
        bounds.append(speb(beams, ops, jac, cfg.noise_power)[0])
    rates = np.array(rates)
    bounds = np.array(bounds)
    out = {
        "mean_sum_rate": float(rates.sum(axis=1).mean()),
        "mean_speb": float(bounds.mean()),
        "viol_rate_frac": float(np.mean(rates < rate_floor)),
    }
    out["viol_speb_frac"] = float(np.mean(bounds > gamma)) if gamma is not None else 0.0
    return out
