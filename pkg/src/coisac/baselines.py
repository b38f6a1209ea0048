"""Comparison methods: homogeneous GNN, a naive convolutional net, a
matched-filter reference beamformer, and a random beamformer.

The learned baselines reuse the feature construction, beam assembly, and
power normalization of the main model; only the feature extractor
differs.  The reference beamformer doubles as the calibrator for the
sensing-bound threshold used in training.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .channel import ChannelSample, upa_steering
from .errors import DimensionError
from .hetgraph import HeteroGraph, build_graph
from .lhgnn import NEG_SLOPE, BeamformerBase, Lhgnn, LinkAttentionBlock, default_schedule
from .scenario import ScenarioConfig

__all__ = [
    "BASELINE_KINDS",
    "HomoGnn",
    "NaiveConv",
    "reference_beamformer",
    "random_beamformer",
    "build_model",
    "model_from_header",
]

BASELINE_KINDS = ("homo_gnn", "naive_conv", "random", "reference")


def _union_table(graph: HeteroGraph) -> np.ndarray:
    """Every node's full neighbor list (all relations merged), one row per
    node; total degree is uniform, so the table is rectangular."""
    rows = []
    for node in range(graph.n_nodes):
        kind = graph.node_type[node]
        row = node if kind == "c" else node - graph.n_comm_nodes
        merged = []
        for rel in graph.relations_of(kind):
            merged.extend(graph.adjacency[rel][row].tolist())
        rows.append(sorted(merged))
    return np.array(rows, dtype=np.int64)


class HomoGnnLayer(nn.Module):
    """One aggregation layer with a single edge type over the merged
    neighbor lists; same attention arithmetic as the heterogeneous layer."""

    def __init__(self, union_table: np.ndarray, in_dim, out_dim, attention=True):
        super().__init__()
        self.block = LinkAttentionBlock(in_dim, out_dim)
        self.norm = nn.LayerNorm(out_dim)
        self.act = nn.LeakyReLU(NEG_SLOPE)
        self.attention = attention
        self.register_buffer("idx", torch.from_numpy(union_table), persistent=False)

    def forward(self, feats):
        neigh = feats[:, self.idx]
        agg = self.block.aggregate(feats, neigh, self.attention)
        return self.norm(self.act(agg))


class HomoGnn(BeamformerBase):
    """Type-blind variant: one node type, one edge type (merged adjacency),
    shared transforms and a single output head.  Same schedule, features,
    and output normalization as the heterogeneous model."""

    def __init__(self, graph: HeteroGraph, n_antennas: int, schedule=None,
                 attention=True, head_width=None, dtype=torch.float32):
        super().__init__(graph, n_antennas)
        two_l = 2 * n_antennas
        self.schedule = list(schedule) if schedule is not None \
            else default_schedule(n_antennas)
        self.attention = attention
        self.head_width = int(head_width) if head_width else 4 * n_antennas
        union = _union_table(graph)
        self.embed = nn.LayerNorm(two_l)   # type-blind input embedding
        widths = [two_l] + self.schedule
        self.layers = nn.ModuleList(
            HomoGnnLayer(union, widths[u], widths[u + 1], attention)
            for u in range(len(self.schedule)))
        self.head = Lhgnn._head(widths[-1], n_antennas, self.head_width)
        self.to(dtype)

    def forward(self, feats, power_budget):
        if feats.shape[-1] != 2 * self.n_antennas:
            raise DimensionError(f"feature width {feats.shape[-1]} != 2L")
        feats = self.embed(feats)
        for layer in self.layers:
            feats = layer(feats)
        return self.assemble(self.head(feats), power_budget)

    def config_header(self):
        return {
            "model": "homo_gnn",
            "schedule": self.schedule,
            "attention": self.attention,
            "head_width": self.head_width,
            "n_bs": self.graph.n_bs,
            "n_users": self.graph.n_users,
            "n_targets": self.graph.n_targets,
            "n_antennas": self.n_antennas,
        }


class NaiveConv(BeamformerBase):
    """Convolutional extractor over the (nodes x 2L) feature grid followed
    by two fully connected layers that emit every beam at once.

    ``fc_width`` defaults to whatever matches a reference parameter count
    (pass ``match_params``) so comparisons run at equal capacity.
    """

    def __init__(self, graph: HeteroGraph, n_antennas: int, fc_width=None,
                 match_params=None, channels=(8, 16), dtype=torch.float32):
        super().__init__(graph, n_antennas)
        two_l = 2 * n_antennas
        n_nodes = graph.n_nodes
        c1, c2 = channels
        flat = c2 * n_nodes * two_l
        out = n_nodes * two_l
        if fc_width is None:
            target = match_params if match_params is not None else 8 * flat
            conv_params = (9 * c1 + c1) + (9 * c1 * c2 + c2)
            fc_width = max(8, round((target - conv_params - out) / (flat + out + 1)))
        self.fc_width = int(fc_width)
        self.channels = (c1, c2)
        self.conv = nn.Sequential(
            nn.Conv2d(1, c1, kernel_size=3, padding=1),
            nn.LeakyReLU(NEG_SLOPE),
            nn.Conv2d(c1, c2, kernel_size=3, padding=1),
            nn.LeakyReLU(NEG_SLOPE),
        )
        self.fc = nn.Sequential(
            nn.Flatten(),
            nn.Linear(flat, self.fc_width),
            nn.LeakyReLU(NEG_SLOPE),
            nn.Linear(self.fc_width, out),
        )
        self.to(dtype)

    def forward(self, feats, power_budget):
        if feats.shape[-1] != 2 * self.n_antennas:
            raise DimensionError(f"feature width {feats.shape[-1]} != 2L")
        grid = feats.unsqueeze(1)                      # (B, 1, nodes, 2L)
        node_beams = self.fc(self.conv(grid))
        node_beams = node_beams.reshape(feats.shape[0], self.graph.n_nodes, -1)
        return self.assemble(node_beams, power_budget)

    def config_header(self):
        return {
            "model": "naive_conv",
            "fc_width": self.fc_width,
            "channels": list(self.channels),
            "n_bs": self.graph.n_bs,
            "n_users": self.graph.n_users,
            "n_targets": self.graph.n_targets,
            "n_antennas": self.n_antennas,
        }


def reference_beamformer(sample: ChannelSample, cfg: ScenarioConfig,
                         sensing_fraction: float = 0.3) -> np.ndarray:
    """Deterministic matched-filter construction at exact per-BS power.

    Per BS: user beams proportional to the link channels, sensing beams
    steered at the (clean) target directions; ``sensing_fraction`` of the
    budget goes to sensing (split across targets), the rest equally across
    users.
    """
    if not 0.0 <= sensing_fraction <= 1.0:
        raise ValueError("sensing_fraction must lie in [0, 1]")
    L = cfg.n_antennas
    beams = np.zeros((cfg.n_tx, cfg.n_targets + cfg.n_users), dtype=np.complex128)
    chan = sample.chan.astype(np.complex128)
    for n in range(cfg.n_bs):
        sl = slice(n * L, (n + 1) * L)
        budget = cfg.power_budget[n]
        sense_p = sensing_fraction * budget / cfg.n_targets
        for z in range(cfg.n_targets):
            ang = sample.angles[z]
            steer = upa_steering(ang.theta[n], ang.beta[n], cfg.array_x,
                                 cfg.array_z, cfg.spacing, cfg.wavelength)
            beams[sl, z] = np.sqrt(sense_p) * steer      # unit-norm steering
        comm_p = (1.0 - sensing_fraction) * budget / cfg.n_users
        for k in range(cfg.n_users):
            h = chan[sl, k]
            norm = np.linalg.norm(h)
            if norm > 0:
                beams[sl, cfg.n_targets + k] = np.sqrt(comm_p) * h / norm
    return beams


def random_beamformer(seed: int, cfg: ScenarioConfig) -> np.ndarray:
    """Complex Gaussian beams scaled to exact per-BS power."""
    rng = np.random.default_rng(seed)
    L = cfg.n_antennas
    beams = (rng.standard_normal((cfg.n_tx, cfg.n_targets + cfg.n_users))
             + 1j * rng.standard_normal((cfg.n_tx, cfg.n_targets + cfg.n_users)))
    for n in range(cfg.n_bs):
        sl = slice(n * L, (n + 1) * L)
        power = np.sum(np.abs(beams[sl]) ** 2)
        beams[sl] *= np.sqrt(cfg.power_budget[n] / power)
    return beams


def build_model(kind: str, cfg: ScenarioConfig, schedule=None,
                dtype=torch.float32, match_params=None, head_width=None):
    """Construct a trainable model by method name; ``naive_conv`` sizes its
    hidden width to match the heterogeneous model's parameter count."""
    graph = build_graph(cfg.n_bs, cfg.n_users, cfg.n_targets)
    if kind == "lhgnn":
        return Lhgnn(graph, cfg.n_antennas, schedule=schedule,
                     head_width=head_width, dtype=dtype)
    if kind == "lhgnn_no_attention":
        return Lhgnn(graph, cfg.n_antennas, schedule=schedule,
                     head_width=head_width, attention=False, dtype=dtype)
    if kind == "homo_gnn":
        return HomoGnn(graph, cfg.n_antennas, schedule=schedule,
                       head_width=head_width, dtype=dtype)
    if kind == "naive_conv":
        if match_params is None:
            match_params = Lhgnn(build_graph(cfg.n_bs, cfg.n_users, cfg.n_targets),
                                 cfg.n_antennas, schedule=schedule,
                                 head_width=head_width).parameter_count()
        return NaiveConv(graph, cfg.n_antennas, match_params=match_params, dtype=dtype)
    raise ValueError(f"unknown trainable method {kind!r}")


def model_from_header(header: dict, dtype=torch.float32):
    """Rebuild an untrained model instance from a checkpoint header."""
    graph = build_graph(header["n_bs"], header["n_users"], header["n_targets"])
    kind = header["model"]
    if kind == "lhgnn":
        return Lhgnn(graph, header["n_antennas"], schedule=header["schedule"],
                     attention=header.get("attention", True),
                     head_width=header.get("head_width"), dtype=dtype)
    if kind == "homo_gnn":
        return HomoGnn(graph, header["n_antennas"], schedule=header["schedule"],
                       attention=header.get("attention", True),
                       head_width=header.get("head_width"), dtype=dtype)
    if kind == "naive_conv":
        return NaiveConv(graph, header["n_antennas"], fc_width=header["fc_width"],
                         channels=tuple(header["channels"]), dtype=dtype)
    raise ValueError(f"unknown model kind {kind!r} in checkpoint header")
