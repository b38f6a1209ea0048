"""Built-in experiment profiles.

``paper`` is the full-scale reference setup (3 BSs, 16-antenna panels at
28 GHz, 5 users, 4000 training samples, 800 epochs);
``smoke`` is the desk-scale configuration used by the fast verification
suite (2 BSs, 4 antennas, 2 users, 128 samples, 100 epochs).

The reflection-magnitude constant of each profile is calibrated so the
reference beamformer's position bound lands near 1 m^2; bound thresholds
for training are then derived at run time from the reference beamformer,
so this constant only fixes the overall scale.
"""

from __future__ import annotations

from .channel import PerturbationSpec
from .scenario import ScenarioConfig
from .training import TrainConfig

__all__ = ["PROFILES", "scenario_profile", "train_profile", "dataset_size"]

_WAVELENGTH_28GHZ = 299792458.0 / 28e9
_DBM20 = 0.1   # 20 dBm in watts


def _paper_scenario() -> ScenarioConfig:
    lam = _WAVELENGTH_28GHZ
    return ScenarioConfig(
        n_bs=3, n_users=5, n_targets=1, array_x=4, array_z=4,
        spacing=lam / 2, wavelength=lam,
        bs_positions=[[236.0, 390.0, 6.0], [288.0, 390.0, 6.0], [236.0, 490.0, 6.0]],
        target_positions=[[244.0, 456.0, 22.0]],
        user_region=[[236.0, 390.0, 1.5], [288.0, 490.0, 1.5]],
        power_budget=_DBM20,
        noise_power=1.0,
        rcs_scale=2.6e5,
        ref_snr_db=10.0,
    )


def _smoke_scenario() -> ScenarioConfig:
    # Users clustered between the BSs at a high reference SNR: the regime is
    # interference-limited, so coordinated beamforming (not just power) is
    # what the trained models must learn.
    lam = _WAVELENGTH_28GHZ
    return ScenarioConfig(
        n_bs=2, n_users=2, n_targets=1, array_x=2, array_z=2,
        spacing=lam / 2, wavelength=lam,
        bs_positions=[[0.0, 0.0, 6.0], [60.0, 0.0, 6.0]],
        target_positions=[[30.0, 40.0, 20.0]],
        user_region=[[20.0, 10.0, 1.5], [40.0, 30.0, 1.5]],
        power_budget=_DBM20,
        noise_power=1.0,
        rcs_scale=3.5e5,
        ref_snr_db=20.0,
    )


PROFILES = {
    "paper": {
        "scenario": _paper_scenario,
        "train": lambda: TrainConfig(epochs=800, batch_size=64,
                                     learning_rate=2e-4, weight_decay=5e-4),
        "schedule": None,          # model default: [2L,128,128,128,256,512,256,128,2L]
        "head_width": None,        # model default: 4L
        "n_samples": 4000,
    },
    "smoke": {
        # Calibrated for the desk-scale gates: the steeper bound-penalty
        # slope and smaller batches keep held-out bound violations near
        # zero while the sum rate stays well above the random baseline.
        "scenario": _smoke_scenario,
        "train": lambda: TrainConfig(epochs=100, batch_size=32,
                                     learning_rate=2e-3, weight_decay=5e-4,
                                     speb_penalty_slope=8.0),
        "schedule": [32, 64, 32],
        "head_width": 128,
        "n_samples": 128,
    },
}


def scenario_profile(name: str) -> ScenarioConfig:
    return PROFILES[name]["scenario"]()


def train_profile(name: str) -> TrainConfig:
    return PROFILES[name]["train"]()


def dataset_size(name: str) -> int:
    return PROFILES[name]["n_samples"]


def default_perturbation(csi_snr_db=20.0, pos_err_lo=2.0, pos_err_hi=3.0,
                         seed=0) -> PerturbationSpec:
    """Baseline robustness noise: 20 dB channel SNR, 2-3 m coordinate error."""
    return PerturbationSpec(csi_snr_db=csi_snr_db, pos_err_lo=pos_err_lo,
                            pos_err_hi=pos_err_hi, seed=seed)
