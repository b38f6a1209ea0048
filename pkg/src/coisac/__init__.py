"""Cooperative ISAC joint beamforming toolkit.

Submodules:

- ``scenario``    geometry, angles, position Jacobians, config loading
- ``channel``     steering vectors, synthetic channels, dataset I/O
- ``commetrics``  SINR / rate / per-BS power
- ``fisher``      sensing operators, equivalent FIM, position error bound
- ``fisher_torch`` differentiable twin of the bound for training
- ``hetgraph``    typed link graph construction
- ``lhgnn``       the attention-enhanced link-graph network
- ``baselines``   homogeneous GNN, naive conv net, reference/random beams
- ``training``    penalty loss, trainer, evaluation helpers
- ``profiles``    built-in paper/smoke experiment profiles
- ``cli``         the ``coisac`` command-line driver
"""

from . import (baselines, channel, checkpoint, commetrics, errors, fisher,
               fisher_torch, hetgraph, lhgnn, profiles, scenario, training)

__all__ = [
    "baselines", "channel", "checkpoint", "commetrics", "errors", "fisher",
    "fisher_torch", "hetgraph", "lhgnn", "profiles", "scenario", "training",
]

__version__ = "0.1.0"
