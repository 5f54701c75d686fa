"""Counting belief propagation on a compressed factor graph.

Messages travel along compressed edges. A clusternode's message to a
clusterfactor is the product of its incoming messages, each raised to its
edge count, with one copy of the target edge's own message left out; its
belief keeps that copy. Factor-side messages are ordinary sum-product over
the representative potential.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ._wiring import MessagePassing, Wiring
from .bp import BPConfig, ForwardsBackwards, MessageStore, RunStats, clamp_observed, layers_from_keys, normalized
from .lifting import CompressedFactorGraph

_TINY = 1e-300


def compressed_wiring(cg: CompressedFactorGraph) -> Wiring:
    factors = []
    for f in cg.factors:
        owned = [cg.edges[e].position == q for q, e in enumerate(f.slots)]
        factors.append((f.potential.table, list(f.slots), owned))
    return Wiring(
        [n.cardinality for n in cg.nodes],
        [e.node for e in cg.edges],
        [e.count for e in cg.edges],
        factors,
    )


def _cluster_layers(cg: CompressedFactorGraph, schedule):
    if schedule == "flooding":
        return None
    if schedule == "fb":
        schedule = ForwardsBackwards()
    if schedule.layer_of is None:
        return [np.array([i]) for i in range(len(cg.nodes))]
    keys = []
    for i, n in enumerate(cg.nodes):
        ks = {schedule.layer_of[v] for v in n.members}
        if len(ks) != 1:
            raise ValueError(
                f"clusternode {i} spans several layers; compress with the same layer_of as the schedule"
            )
        keys.append(ks.pop())
    return layers_from_keys(keys)


def expand_beliefs(cg: CompressedFactorGraph, cluster_beliefs: np.ndarray) -> list[np.ndarray]:
    """Assign every ground variable its clusternode's belief."""
    beliefs = [cluster_beliefs[n, : cg.nodes[n].cardinality].copy() for n in cg.var_node]
    return clamp_observed(beliefs, cg.evidence)


def iterate_cbp(cg: CompressedFactorGraph, config: BPConfig = BPConfig()) -> Iterator[tuple[list[np.ndarray], RunStats]]:
    """Yield ``(ground beliefs, stats)`` after every sweep."""
    wiring = compressed_wiring(cg)
    mp = MessagePassing(wiring, config.damping, _cluster_layers(cg, config.schedule))
    for _ in range(config.max_sweeps):
        res = mp.sweep()
        stats = RunStats(mp.sweeps, mp.messages, wiring.num_edges, res < config.tolerance, res)
        yield expand_beliefs(cg, mp.beliefs()), stats
        if stats.converged:
            return


def run_cbp_clusters(cg: CompressedFactorGraph, config: BPConfig = BPConfig()) -> tuple[np.ndarray, RunStats]:
    """Run CBP and return clusternode beliefs (padded rows) with run statistics."""
    wiring = compressed_wiring(cg)
    mp = MessagePassing(wiring, config.damping, _cluster_layers(cg, config.schedule))
    converged = False
    for _ in range(config.max_sweeps):
        if mp.sweep() < config.tolerance:
            converged = True
            break
    return mp.beliefs(), RunStats(mp.sweeps, mp.messages, wiring.num_edges, converged, mp.residual)


def run_cbp(cg: CompressedFactorGraph, config: BPConfig = BPConfig()) -> tuple[list[np.ndarray], RunStats]:
    """Run CBP; beliefs are expanded to ground variable ids."""
    b, stats = run_cbp_clusters(cg, config)
    return expand_beliefs(cg, b), stats


# --- single-message reference operations ------------------------------------

def _find_edge(cg: CompressedFactorGraph, node: int, target) -> int:
    cf, pos = target
    for i, e in enumerate(cg.edges):
        if e.factor == cf and e.position == pos and e.node == node:
            return i
    raise ValueError(f"no compressed edge between clusterfactor {cf} slot {pos} and clusternode {node}")


def _edge_key(cg, i):
    e = cg.edges[i]
    return (e.factor, e.position)


def _powered_product(parts: list[tuple[np.ndarray, int]], card: int) -> np.ndarray:
    if any(np.any((m > 0) & (m < _TINY)) for m, c in parts if c):
        logv = np.zeros(card)
        zero = np.zeros(card, dtype=bool)
        for m, c in parts:
            if c:
                zero |= m <= 0
                logv += c * np.log(np.where(m > 0, m, 1.0))
        logv[zero] = -np.inf
        if np.all(zero):
            return np.zeros(card)
        return np.exp(logv - logv.max())
    prod = np.ones(card)
    for m, c in parts:
        prod = prod * m**c
    return prod


def cluster_variable_to_factor_message(
    store: MessageStore, cg: CompressedFactorGraph, node: int, target
) -> np.ndarray:
    card = cg.nodes[node].cardinality
    target_edge = _find_edge(cg, node, target)
    parts = []
    for i in cg.node_edges(node):
        c = cg.edges[i].count - (1 if i == target_edge else 0)
        parts.append((store.message((_edge_key(cg, i), node), card), c))
    return normalized(_powered_product(parts, card))


def cluster_factor_to_variable_message(
    store: MessageStore, cg: CompressedFactorGraph, source, node: int
) -> np.ndarray:
    cf, p = source
    f = cg.factors[cf]
    if cg.edges[f.slots[p]].node != node:
        raise ValueError(f"clusternode {node} is not at slot {p} of clusterfactor {cf}")
    t = f.potential.table
    for q, ei in enumerate(f.slots):
        if q == p:
            continue
        n = cg.edges[ei].node
        m = store.message((n, _edge_key(cg, ei)), cg.nodes[n].cardinality)
        shape = [1] * t.ndim
        shape[q] = m.size
        t = t * m.reshape(shape)
    axes = tuple(q for q in range(t.ndim) if q != p)
    return normalized(t.sum(axis=axes) if axes else t)


def cluster_belief(store: MessageStore, cg: CompressedFactorGraph, node: int) -> np.ndarray:
    card = cg.nodes[node].cardinality
    parts = [(store.message((_edge_key(cg, i), node), card), cg.edges[i].count) for i in cg.node_edges(node)]
    return normalized(_powered_product(parts, card))
