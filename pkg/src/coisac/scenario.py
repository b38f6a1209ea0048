"""Physical scenario description and 3-D sensing geometry.

Positions are Cartesian triples in meters, angles in radians, double
precision throughout.  The elevation/azimuth convention follows the
standard bistatic setup: elevation measured from the horizontal plane
(``arcsin(dz / dist)``), azimuth measured in the x-y plane with the
branch correction that keeps it single-valued on ``(-pi, pi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .errors import ConfigError, DegenerateGeometry

__all__ = [
    "ScenarioConfig",
    "AngleSet",
    "target_angles",
    "angle_jacobian",
    "position_jacobian",
    "load_scenario",
]

_MIN_PLANAR_DIST = 1e-9


@dataclass(frozen=True)
class ScenarioConfig:
    """Full physical description of one cooperative ISAC deployment.

    ``power_budget`` is per-BS transmit power in watts (scalar broadcasts to
    all BSs).  ``user_region`` is an axis-aligned box given as (lo, hi)
    corner triples; degenerate axes (lo == hi) pin that coordinate.
    """

    n_bs: int
    n_users: int
    n_targets: int
    array_x: int
    array_z: int
    spacing: float
    wavelength: float
    bs_positions: np.ndarray          # (n_bs, 3) meters
    target_positions: np.ndarray      # (n_targets, 3) meters
    user_region: np.ndarray           # (2, 3) lo/hi corners, meters
    power_budget: np.ndarray          # (n_bs,) watts
    noise_power: float = 1.0          # watts
    rcs_scale: float = 1.0
    n_paths: int = 3                  # scatterers per synthetic link
    ref_snr_db: float = 10.0          # mean per-link SNR at full single-beam power

    def __post_init__(self):
        object.__setattr__(self, "bs_positions",
                           np.asarray(self.bs_positions, dtype=float).reshape(self.n_bs, 3))
        object.__setattr__(self, "target_positions",
                           np.asarray(self.target_positions, dtype=float).reshape(self.n_targets, 3))
        object.__setattr__(self, "user_region",
                           np.asarray(self.user_region, dtype=float).reshape(2, 3))
        budget = np.asarray(self.power_budget, dtype=float).ravel()
        if budget.size == 1:
            budget = np.full(self.n_bs, budget[0])
        object.__setattr__(self, "power_budget", budget)
        self._validate()

    def _validate(self):
        if min(self.n_bs, self.n_users, self.n_targets) < 1:
            raise ConfigError("n_bs, n_users and n_targets must all be >= 1")
        if min(self.array_x, self.array_z) < 1:
            raise ConfigError("array_x and array_z must be >= 1")
        if self.spacing <= 0 or self.wavelength <= 0:
            raise ConfigError("spacing and wavelength must be positive")
        if self.noise_power <= 0:
            raise ConfigError("noise_power must be positive")
        if self.power_budget.shape != (self.n_bs,) or np.any(self.power_budget <= 0):
            raise ConfigError("power_budget must be positive, one value per BS")
        if np.any(self.user_region[1] < self.user_region[0]):
            raise ConfigError("user_region upper corner below lower corner")
        for t_idx, tgt in enumerate(self.target_positions):
            for n_idx, bs in enumerate(self.bs_positions):
                if math.hypot(tgt[0] - bs[0], tgt[1] - bs[1]) <= _MIN_PLANAR_DIST:
                    raise ConfigError(
                        f"target {t_idx} sits on the vertical axis of BS {n_idx}; "
                        "azimuth geometry is undefined there")

    @property
    def n_antennas(self) -> int:
        """Antennas per BS panel."""
        return self.array_x * self.array_z

    @property
    def n_tx(self) -> int:
        """Total stacked transmit dimension (n_bs * n_antennas)."""
        return self.n_bs * self.n_antennas

    @property
    def n_beams(self) -> int:
        """Columns of a joint beamforming matrix (sensing + per-user)."""
        return self.n_targets + self.n_users

    def with_power_dbm(self, dbm: float) -> "ScenarioConfig":
        """Copy of the config with every BS budget set to ``dbm`` dBm."""
        watts = 10.0 ** (dbm / 10.0) / 1000.0
        return replace(self, power_budget=np.full(self.n_bs, watts))


@dataclass(frozen=True)
class AngleSet:
    """Per-BS look geometry toward one target."""

    theta: np.ndarray     # (n_bs,) elevation, rad
    beta: np.ndarray      # (n_bs,) azimuth, rad
    dist: np.ndarray      # (n_bs,) meters
    dist_xy: np.ndarray   # (n_bs,) planar distance, meters

    @classmethod
    def from_positions(cls, bs_positions, target) -> "AngleSet":
        rows = [target_angles(bs, target) for bs in np.asarray(bs_positions, float)]
        arr = np.array(rows, dtype=float)
        return cls(theta=arr[:, 0], beta=arr[:, 1], dist=arr[:, 2], dist_xy=arr[:, 3])


def target_angles(bs, tgt):
    """Elevation, azimuth, distance and planar distance from a BS to a target.

    Returns ``(theta, beta, dist, dist_xy)`` with ``theta`` in
    ``[-pi/2, pi/2]`` and ``beta`` in ``(-pi, pi]``.

    Raises DegenerateGeometry when the target sits on the BS vertical axis.
    """
    bs = np.asarray(bs, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    diff = tgt - bs
    dist_xy = math.hypot(diff[0], diff[1])
    dist = math.sqrt(dist_xy * dist_xy + diff[2] * diff[2])
    if dist_xy <= _MIN_PLANAR_DIST or dist <= _MIN_PLANAR_DIST:
        raise DegenerateGeometry(
            f"target {tgt.tolist()} is on the vertical axis of BS {bs.tolist()}")
    theta = math.asin(diff[2] / dist)
    beta = math.atan2(diff[1], diff[0])
    if beta <= -math.pi:   # atan2 may return -pi for dy = -0.0; keep (-pi, pi]
        beta = math.pi
    return theta, beta, dist, dist_xy


def angle_jacobian(bs, tgt):
    """Rows d(theta)/d(target) and d(beta)/d(target) as 3-vectors (rad/m).

    Closed-form gradients of `target_angles` with respect to the target
    position; the azimuth row always has a zero third component.
    """
    bs = np.asarray(bs, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    dx, dy, dz = tgt - bs
    dist_xy_sq = dx * dx + dy * dy
    dist_xy = math.sqrt(dist_xy_sq)
    if dist_xy <= _MIN_PLANAR_DIST:
        raise DegenerateGeometry(
            f"target {tgt.tolist()} is on the vertical axis of BS {bs.tolist()}")
    dist_sq = dist_xy_sq + dz * dz
    dtheta = np.array([
        -dx * dz / (dist_sq * dist_xy),
        -dy * dz / (dist_sq * dist_xy),
        dist_xy / dist_sq,
    ])
    dbeta = np.array([-dy / dist_xy_sq, dx / dist_xy_sq, 0.0])
    return dtheta, dbeta


def position_jacobian(cfg: ScenarioConfig, target_index: int = 0) -> np.ndarray:
    """Stacked angle-to-position Jacobian, shape (2 * n_bs, 3).

    Row order: all elevation rows (BS 0..n-1), then all azimuth rows.
    """
    tgt = cfg.target_positions[target_index]
    rows_theta, rows_beta = [], []
    for n_idx, bs in enumerate(cfg.bs_positions):
        try:
            dtheta, dbeta = angle_jacobian(bs, tgt)
        except DegenerateGeometry as exc:
            raise DegenerateGeometry(f"BS {n_idx}: {exc}") from exc
        rows_theta.append(dtheta)
        rows_beta.append(dbeta)
    return np.vstack(rows_theta + rows_beta)


def _as_region(raw) -> np.ndarray:
    region = np.asarray(raw, dtype=float)
    if region.shape == (2, 3):
        return region
    if region.shape == (3, 2):   # per-axis (lo, hi) pairs
        return region.T
    raise ConfigError(f"user_region must be 2x3 (lo/hi corners), got {region.shape}")


def load_scenario(path) -> ScenarioConfig:
    """Read a ScenarioConfig from a YAML file.

    Top-level key ``scenario`` (optional) holds keys mirroring the
    ScenarioConfig field names; positions are 3-element arrays.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    section = doc.get("scenario", doc)
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: 'scenario' must be a mapping")
    known = {f.name for f in ScenarioConfig.__dataclass_fields__.values()}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{path}: unknown scenario keys {sorted(unknown)}")
    missing = {"n_bs", "n_users", "n_targets", "array_x", "array_z", "spacing",
               "wavelength", "bs_positions", "target_positions", "user_region",
               "power_budget"} - set(section)
    if missing:
        raise ConfigError(f"{path}: missing scenario keys {sorted(missing)}")
    kwargs = dict(section)
    kwargs["user_region"] = _as_region(kwargs["user_region"])
    return ScenarioConfig(**kwargs)
