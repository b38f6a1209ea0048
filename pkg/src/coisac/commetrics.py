"""Communication-side metrics: SINR, achievable rate, per-BS power.

Beamforming matrices are complex (n_tx, n_targets + n_users) arrays with
column layout [sensing beams | user beams]; block n of each column holds
BS n's antenna weights.  Rates are log2-based (bits/s/Hz).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = ["sinr", "rate", "sum_rate", "per_bs_power"]


def _check(chan, beams, n_sensing):
    chan = np.asarray(chan)
    beams = np.asarray(beams)
    if chan.ndim != 2 or beams.ndim != 2:
        raise DimensionError("chan and beams must be 2-D")
    if chan.shape[0] != beams.shape[0]:
        raise DimensionError(
            f"stacked dims differ: chan {chan.shape[0]}, beams {beams.shape[0]}")
    if beams.shape[1] <= n_sensing:
        raise DimensionError("beam matrix has no user columns")
    return chan.astype(np.complex128, copy=False), beams.astype(np.complex128, copy=False)


def sinr(chan, beams, user, noise_power, n_sensing=1):
    """SINR of one user (0-based) under the joint beam set."""
    chan, beams = _check(chan, beams, n_sensing)
    n_users = beams.shape[1] - n_sensing
    if not 0 <= user < n_users:
        raise DimensionError(f"user index {user} out of range 0..{n_users - 1}")
    if chan.shape[1] != n_users:
        raise DimensionError("channel column count != user beam count")
    gains = np.abs(chan[:, user].conj() @ beams) ** 2    # per-column |h^H p|^2
    signal = gains[n_sensing + user]
    interference = gains.sum() - signal
    return float(signal / (interference + noise_power))


def rate(chan, beams, user, noise_power, n_sensing=1):
    """Achievable rate log2(1 + SINR) of one user, bits/s/Hz."""
    return float(np.log2(1.0 + sinr(chan, beams, user, noise_power, n_sensing)))


def sum_rate(chan, beams, noise_power, n_sensing=1):
    """Sum of per-user achievable rates."""
    n_users = np.asarray(beams).shape[1] - n_sensing
    return float(sum(rate(chan, beams, k, noise_power, n_sensing)
                     for k in range(n_users)))


def per_bs_power(beams, n_bs):
    """Transmit power spent by each BS: squared norm of its antenna block
    across every beam column.  Partitions ||beams||_F^2."""
    beams = np.asarray(beams)
    if beams.shape[0] % n_bs:
        raise DimensionError(f"stacked dim {beams.shape[0]} not divisible by n_bs={n_bs}")
    per_ant = beams.shape[0] // n_bs
    blocks = beams.reshape(n_bs, per_ant, -1)
    return np.sum(np.abs(blocks) ** 2, axis=(1, 2))
