"""Link-level heterogeneous graph over communication and sensing links.

Nodes are links, not devices: one node per (BS, user) pair and one per
(BS, target) pair.  Six directed relations encode shared-BS, shared-user
and shared-target couplings; aggregation always pulls neighbor features
into the center node, so neighbor lists are stored per relation from the
center's point of view.

Node ordering is fixed (communication nodes first, BS-major) so learned
parameters stay index-stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RelationMismatch

__all__ = ["HeteroGraph", "build_graph", "neighbors",
           "COMM_RELATIONS", "SENSE_RELATIONS", "RELATIONS"]

# Relations of a communication-link center node.
BS_CC = "bs_cc"    # other comm links of the same BS
UE = "ue"          # comm links of the same user at other BSs
BS_CS = "bs_cs"    # sensing links of the same BS
# Relations of a sensing-link center node.
BS_SS = "bs_ss"    # other sensing links of the same BS
TGT = "tgt"        # sensing links of the same target at other BSs
BS_SC = "bs_sc"    # comm links of the same BS

COMM_RELATIONS = (BS_CC, UE, BS_CS)
SENSE_RELATIONS = (BS_SS, TGT, BS_SC)
RELATIONS = COMM_RELATIONS + SENSE_RELATIONS

# Relations whose neighbors are the other node type than the center.
CROSS_TYPE = {BS_CS, BS_SC}


@dataclass(frozen=True)
class HeteroGraph:
    """Typed link graph with per-relation neighbor tables.

    ``adjacency[r]`` is an int array of shape (#center nodes of r's type,
    degree) listing neighbor node ids; rows follow node order within the
    type.  Relations that cannot exist for the sizes (degree 0) are absent
    from ``adjacency``.
    """

    n_bs: int
    n_users: int
    n_targets: int
    node_type: np.ndarray            # (n_nodes,) "c" or "s"
    adjacency: dict

    @property
    def n_nodes(self) -> int:
        return self.n_bs * (self.n_users + self.n_targets)

    @property
    def n_comm_nodes(self) -> int:
        return self.n_bs * self.n_users

    def comm_node(self, bs: int, user: int) -> int:
        """Index of the communication-link node (BS-major, user-minor)."""
        return bs * self.n_users + user

    def sense_node(self, bs: int, target: int) -> int:
        """Index of the sensing-link node (after all comm nodes, BS-major)."""
        return self.n_comm_nodes + bs * self.n_targets + target

    def node_link(self, node: int):
        """Inverse map: node id -> ("c"|"s", bs, user-or-target)."""
        if node < self.n_comm_nodes:
            return "c", node // self.n_users, node % self.n_users
        rel = node - self.n_comm_nodes
        return "s", rel // self.n_targets, rel % self.n_targets

    def relations_of(self, kind: str):
        """Structurally present relations for a node type, in fixed order."""
        base = COMM_RELATIONS if kind == "c" else SENSE_RELATIONS
        return tuple(r for r in base if r in self.adjacency)


def build_graph(n_bs: int, n_users: int, n_targets: int) -> HeteroGraph:
    """Construct the typed link graph for given system sizes."""
    if min(n_bs, n_users, n_targets) < 1:
        raise ValueError("all of n_bs, n_users, n_targets must be >= 1")
    n_c = n_bs * n_users
    n_s = n_bs * n_targets
    node_type = np.array(["c"] * n_c + ["s"] * n_s)

    def cnode(n, k):
        return n * n_users + k

    def snode(n, z):
        return n_c + n * n_targets + z

    adjacency = {}

    def table(rel, rows):
        arr = np.array(rows, dtype=np.int64)
        if arr.size:
            adjacency[rel] = arr

    table(BS_CC, [[cnode(n, kk) for kk in range(n_users) if kk != k]
                  for n in range(n_bs) for k in range(n_users)])
    table(UE, [[cnode(nn, k) for nn in range(n_bs) if nn != n]
               for n in range(n_bs) for k in range(n_users)])
    table(BS_CS, [[snode(n, z) for z in range(n_targets)]
                  for n in range(n_bs) for _ in range(n_users)])
    table(BS_SS, [[snode(n, zz) for zz in range(n_targets) if zz != z]
                  for n in range(n_bs) for z in range(n_targets)])
    table(TGT, [[snode(nn, z) for nn in range(n_bs) if nn != n]
                for n in range(n_bs) for z in range(n_targets)])
    table(BS_SC, [[cnode(n, k) for k in range(n_users)]
                  for n in range(n_bs) for _ in range(n_targets)])

    return HeteroGraph(n_bs=n_bs, n_users=n_users, n_targets=n_targets,
                       node_type=node_type, adjacency=adjacency)


def neighbors(graph: HeteroGraph, node: int, relation: str) -> list:
    """Neighbor node ids of ``node`` under one relation (possibly empty).

    Raises RelationMismatch when the relation does not apply to the node's
    type (communication centers use BS_CC/UE/BS_CS, sensing centers use
    BS_SS/TGT/BS_SC).
    """
    if not 0 <= node < graph.n_nodes:
        raise ValueError(f"node {node} out of range")
    kind = graph.node_type[node]
    allowed = COMM_RELATIONS if kind == "c" else SENSE_RELATIONS
    if relation not in allowed:
        raise RelationMismatch(
            f"relation {relation!r} does not apply to type {kind!r} nodes")
    if relation not in graph.adjacency:
        return []
    row = node if kind == "c" else node - graph.n_comm_nodes
    return list(graph.adjacency[relation][row])
