"""Attention-enhanced link-graph beamforming network.

Pure forward map from per-link input features to a power-feasible joint
beamforming matrix.  Hidden layers aggregate neighbor features per
relation with softmax attention, normalize, and average over relation
types; two fully connected head layers per node type emit real/imag beam
weights; the output layer rescales each BS block onto its power budget.

All models in this package (including the baselines) share the feature
construction, beam assembly, and output normalization defined here.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import DimensionError, EmptyNeighborSet
from .hetgraph import HeteroGraph
from .scenario import ScenarioConfig

__all__ = [
    "default_schedule",
    "init_features",
    "init_features_batch",
    "attention_weights",
    "normalize_beams",
    "LinkAttentionBlock",
    "LhgnnLayer",
    "BeamformerBase",
    "Lhgnn",
]

NEG_SLOPE = 0.01   # leaky-rectifier slope used everywhere


def default_schedule(n_antennas: int) -> list:
    """Hidden-layer output widths: 9 aggregation layers, bookended at 2L."""
    two_l = 2 * n_antennas
    return [two_l, 128, 128, 128, 256, 512, 256, 128, two_l]


def init_features(sample, cfg: ScenarioConfig) -> np.ndarray:
    """Layer-0 node features, shape (n_nodes, 2L) float64.

    Communication node (n, k): [Re, Im] of that link's channel block.
    Sensing node (n, z): [Re, Im] of the BS transmit steering vector toward
    the (possibly estimated) target position carried by the sample.
    """
    from .channel import upa_steering

    L = cfg.n_antennas
    if sample.chan.shape != (cfg.n_tx, cfg.n_users):
        raise DimensionError(f"chan shape {sample.chan.shape} != "
                             f"{(cfg.n_tx, cfg.n_users)}")
    n_nodes = cfg.n_bs * (cfg.n_users + cfg.n_targets)
    feats = np.zeros((n_nodes, 2 * L))
    chan = sample.chan.astype(np.complex128)
    idx = 0
    for n in range(cfg.n_bs):
        for k in range(cfg.n_users):
            block = chan[n * L:(n + 1) * L, k]
            feats[idx, :L] = block.real
            feats[idx, L:] = block.imag
            idx += 1
    for n in range(cfg.n_bs):
        for z in range(cfg.n_targets):
            ang = sample.angles[z]
            steer = upa_steering(ang.theta[n], ang.beta[n], cfg.array_x,
                                 cfg.array_z, cfg.spacing, cfg.wavelength)
            feats[idx, :L] = steer.real
            feats[idx, L:] = steer.imag
            idx += 1
    return feats


def init_features_batch(samples, cfg: ScenarioConfig) -> np.ndarray:
    """Stacked layer-0 features for a list of samples, (B, n_nodes, 2L)."""
    return np.stack([init_features(s, cfg) for s in samples])


def attention_weights(center, neighbors, query_map, key_map):
    """Softmax attention weights of one center node over its neighbors.

    Scores are scaled dot products of the mapped center (query) and mapped
    neighbors (keys), divided by the map output width; the max score is
    subtracted before exponentiation (identical result, stable).  The
    softmax itself runs in double precision so the weights sum to 1 to
    better than 1e-7 regardless of the maps' dtype.
    """
    if neighbors.shape[0] == 0:
        raise EmptyNeighborSet("attention over zero neighbors")
    query = query_map(center).double()
    keys = key_map(neighbors).double()
    scores = keys @ query / query.shape[-1]
    scores = scores - scores.max()
    w = torch.exp(scores)
    return w / w.sum()


def normalize_beams(raw, power_budget, n_bs):
    """Rescale each BS antenna block so its total power meets the budget.

    ``raw`` is (..., n_tx, n_columns) complex; blocks whose summed power
    exceeds the budget are scaled by sqrt(budget/power), others pass
    through.  Zero input stays zero.  At the (measure-zero) tie where a
    block sits exactly on its budget, the pass-through subgradient is used
    (torch's clamp convention).
    """
    lead = raw.shape[:-2]
    per_ant = raw.shape[-2] // n_bs
    blocks = raw.reshape(*lead, n_bs, per_ant, raw.shape[-1])
    power = (blocks.real ** 2 + blocks.imag ** 2).sum(dim=(-2, -1))
    budget = torch.as_tensor(power_budget, dtype=power.dtype, device=power.device)
    budget = budget.expand_as(power)
    ratio = budget / power.clamp_min(torch.finfo(power.dtype).tiny)
    scale = ratio.clamp(max=1.0).sqrt()
    out = blocks * scale[..., None, None]
    return out.reshape(raw.shape)


class LinkAttentionBlock(nn.Module):
    """The four affine maps of one (layer, relation): self, neighbor,
    query, and key transforms."""

    def __init__(self, in_dim, out_dim):
        super().__init__()
        self.self_map = nn.Linear(in_dim, out_dim)
        self.neighbor_map = nn.Linear(in_dim, out_dim)
        self.query_map = nn.Linear(in_dim, out_dim)
        self.key_map = nn.Linear(in_dim, out_dim)
        self.out_dim = out_dim

    def aggregate(self, center, neigh, use_attention=True):
        """center (B, M, in), neigh (B, M, deg, in) -> (B, M, out).

        Self term plus the degree-averaged, attention-weighted neighbor
        term; without attention every neighbor weight is 1 (plain mean).
        """
        agg = self.neighbor_map(neigh)                     # (B, M, deg, out)
        if use_attention:
            scores = torch.einsum("bmo,bmdo->bmd", self.query_map(center),
                                  self.key_map(neigh)) / self.out_dim
            lam = torch.softmax(scores, dim=-1)
            neigh_term = torch.einsum("bmd,bmdo->bmo", lam, agg) / neigh.shape[-2]
        else:
            neigh_term = agg.mean(dim=-2)
        return self.self_map(center) + neigh_term


class LhgnnLayer(nn.Module):
    """One aggregation layer: per-relation attention blocks, activation,
    per-type normalization, mean over the relations present."""

    def __init__(self, graph: HeteroGraph, in_dim, out_dim, attention=True):
        super().__init__()
        self.attention = attention
        self.blocks = nn.ModuleDict(
            {rel: LinkAttentionBlock(in_dim, out_dim) for rel in graph.adjacency})
        self.norm_c = nn.LayerNorm(out_dim)
        self.norm_s = nn.LayerNorm(out_dim)
        self.act = nn.LeakyReLU(NEG_SLOPE)
        # Index tables, not learnable state.
        for rel, table in graph.adjacency.items():
            self.register_buffer(f"idx_{rel}", torch.from_numpy(table),
                                 persistent=False)
        self._comm_rels = graph.relations_of("c")
        self._sense_rels = graph.relations_of("s")
        self._n_comm = graph.n_comm_nodes

    def _update(self, feats, center_feats, rels, norm):
        terms = []
        for rel in rels:
            idx = getattr(self, f"idx_{rel}")
            neigh = feats[:, idx]                      # (B, M, deg, in)
            agg = self.blocks[rel].aggregate(center_feats, neigh, self.attention)
            terms.append(norm(self.act(agg)))
        return torch.stack(terms).mean(dim=0)

    def forward(self, feats):
        nc = self._n_comm
        out_c = self._update(feats, feats[:, :nc], self._comm_rels, self.norm_c)
        out_s = self._update(feats, feats[:, nc:], self._sense_rels, self.norm_s)
        return torch.cat([out_c, out_s], dim=1)


class BeamformerBase(nn.Module):
    """Shared beam assembly and power normalization for every model.

    Subclasses map input features (B, n_nodes, 2L) to per-node raw beam
    coordinates (B, n_nodes, 2L); this base turns them into a normalized
    complex beam matrix (B, n_tx, n_targets + n_users).
    """

    def __init__(self, graph: HeteroGraph, n_antennas: int):
        super().__init__()
        self.graph = graph
        self.n_antennas = n_antennas

    def head_dims(self):
        g = self.graph
        return g.n_bs, g.n_users, g.n_targets, self.n_antennas

    def assemble(self, node_beams, power_budget):
        """(B, n_nodes, 2L) real -> normalized (B, n_tx, Z + K) complex128.

        The power normalization runs in double precision so the budget
        guarantee holds to 1e-9 regardless of the extractor's dtype.
        """
        n_bs, n_users, n_targets, L = self.head_dims()
        batch = node_beams.shape[0]
        node_beams = node_beams.double()
        cplx = torch.complex(node_beams[..., :L], node_beams[..., L:])
        nc = self.graph.n_comm_nodes
        comm = cplx[:, :nc].reshape(batch, n_bs, n_users, L).transpose(2, 3)
        comm = comm.reshape(batch, n_bs * L, n_users)
        sense = cplx[:, nc:].reshape(batch, n_bs, n_targets, L).transpose(2, 3)
        sense = sense.reshape(batch, n_bs * L, n_targets)
        raw = torch.cat([sense, comm], dim=-1)
        return normalize_beams(raw, power_budget, n_bs)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


class Lhgnn(BeamformerBase):
    """The full link-heterogeneous attention network.

    ``schedule`` lists the output width of each aggregation layer (input
    width is 2L); the head runs last-width -> 4L -> 2L per node type.
    The input embedding stage is a per-type feature standardization, which
    evens out the very different scales of channel and steering features.
    Set ``attention=False`` for the uniform-averaging ablation.
    """

    def __init__(self, graph: HeteroGraph, n_antennas: int, schedule=None,
                 attention=True, head_width=None, dtype=torch.float32):
        super().__init__(graph, n_antennas)
        two_l = 2 * n_antennas
        self.schedule = list(schedule) if schedule is not None \
            else default_schedule(n_antennas)
        self.attention = attention
        self.head_width = int(head_width) if head_width else 4 * n_antennas
        self.embed_c = nn.LayerNorm(two_l)
        self.embed_s = nn.LayerNorm(two_l)
        widths = [two_l] + self.schedule
        self.layers = nn.ModuleList(
            LhgnnLayer(graph, widths[u], widths[u + 1], attention)
            for u in range(len(self.schedule)))
        self.head_c = self._head(widths[-1], n_antennas, self.head_width)
        self.head_s = self._head(widths[-1], n_antennas, self.head_width)
        self.to(dtype)

    @staticmethod
    def _head(in_dim, n_antennas, head_width=None):
        mid = int(head_width) if head_width else 4 * n_antennas
        return nn.Sequential(
            nn.Linear(in_dim, mid),
            nn.LeakyReLU(NEG_SLOPE),
            nn.Linear(mid, 2 * n_antennas),
        )

    def forward(self, feats, power_budget):
        if feats.shape[-1] != 2 * self.n_antennas:
            raise DimensionError(f"feature width {feats.shape[-1]} != 2L")
        nc = self.graph.n_comm_nodes
        feats = torch.cat(
            [self.embed_c(feats[:, :nc]), self.embed_s(feats[:, nc:])], dim=1)
        for layer in self.layers:
            feats = layer(feats)
        node_beams = torch.cat(
            [self.head_c(feats[:, :nc]), self.head_s(feats[:, nc:])], dim=1)
        return self.assemble(node_beams, power_budget)

    def config_header(self) -> dict:
        return {
            "model": "lhgnn",
            "schedule": self.schedule,
            "attention": self.attention,
            "head_width": self.head_width,
            "n_bs": self.graph.n_bs,
            "n_users": self.graph.n_users,
            "n_targets": self.graph.n_targets,
            "n_antennas": self.n_antennas,
            "relations": sorted(self.graph.adjacency),
        }
