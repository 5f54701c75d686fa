"""Color passing: compress a factor graph into clusternodes and clusterfactors.

Three signature modes are supported:

``"unordered"``
    Node signatures list incoming factor colors without argument positions.
``"positional"``
    Node signature entries are ``(factor color, argument position)``; sound
    for arbitrary asymmetric potentials.
``"commutative"`` (default)
    Like positional, but argument positions that are interchangeable in a
    factor's table (detected by exact axis-swap invariance) share one tag,
    factor colors use a permutation-canonical table key, and neighbor colors
    are sorted within each interchangeable group. For CNF clauses the groups
    are the positive and the negative literals.

In every mode the compressed graph is checked to be an equitable partition:
members of a clusterfactor see the same clusternode at each canonical slot
and every member of a clusternode receives the same number of edges from
each (clusterfactor, slot group). A violation raises ``CompressionError``.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CompressionError
from .factor_graph import FactorGraph, Potential, condition_table, validate_evidence

MODES = ("commutative", "positional", "unordered")
_MAX_CANONICAL_CANDIDATES = 720


# --- table symmetry -------------------------------------------------------------

def symmetric_classes(table: np.ndarray) -> list[list[int]]:
    """Partition argument positions into groups the table is invariant under permuting."""
    k = table.ndim
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for p in range(k):
        for q in range(p + 1, k):
            if table.shape[p] != table.shape[q] or find(p) == find(q):
                continue
            if np.array_equal(table, np.swapaxes(table, p, q)):
                parent[find(q)] = find(p)
    groups: dict[int, list[int]] = {}
    for p in range(k):
        groups.setdefault(find(p), []).append(p)
    return sorted(groups.values())


def _position_profile(table: np.ndarray, p: int) -> tuple:
    return tuple(tuple(sorted(np.take(table, s, axis=p).ravel().tolist())) for s in range(table.shape[p]))


def canonical_form(table: np.ndarray) -> tuple[list[list[int]], tuple]:
    """Order the interchangeable groups of ``table`` canonically.

    Returns ``(groups, key)``: ``groups`` lists position groups in canonical
    order and ``key`` is equal for two tables exactly when one is an argument
    permutation of the other (up to a bounded search; beyond the bound the
    key may separate equivalent tables but never merges distinct ones).
    """
    classes = symmetric_classes(table)
    prof = {c[0]: (len(c), table.shape[c[0]], _position_profile(table, c[0])) for c in classes}
    classes.sort(key=lambda c: (prof[c[0]], c[0]))
    ties = [list(g) for _, g in itertools.groupby(classes, key=lambda c: prof[c[0]])]
    n_candidates = 1
    for g in ties:
        n_candidates *= math.factorial(len(g))
    if n_candidates > _MAX_CANONICAL_CANDIDATES:
        candidates = [classes]
    else:
        candidates = [
            [c for grp in combo for c in grp]
            for combo in itertools.product(*(itertools.permutations(g) for g in ties))
        ]
    best = None
    for order in candidates:
        perm = [p for c in order for p in c]
        t = np.transpose(table, perm)
        key = ("c", t.shape, tuple(len(c) for c in order), tuple(t.ravel().tolist()))
        if best is None or key < best[1]:
            best = (order, key)
    return [list(c) for c in best[0]], best[1]


# --- coloring -----------------------------------------------------------------

@dataclass(frozen=True)
class Coloring:
    variables: tuple[int, ...]
    factors: tuple[int, ...]

    @property
    def num_variable_colors(self) -> int:
        return len(set(self.variables))

    @property
    def num_factor_colors(self) -> int:
        return len(set(self.factors))


def _dense(keys: Sequence) -> tuple[int, ...]:
    ranks = {k: i for i, k in enumerate(sorted(set(keys)))}
    return tuple(ranks[k] for k in keys)


class _Structure:
    """What color passing needs to know about a (ground or quotient) graph.

    ``slots[k]`` are the variables at factor ``k``'s argument positions,
    ``sig_groups[k]`` the position groups whose neighbor colors are sorted
    in the factor signature, ``incidence[v]`` the ``(factor, tag, mult)``
    entries of variable ``v``'s signature.
    """

    def __init__(self, var_keys, factor_keys, slots, sig_groups, incidence):
        self.var_keys = var_keys
        self.factor_keys = factor_keys
        self.slots = slots
        self.sig_groups = sig_groups
        self.incidence = incidence

    def initial(self) -> Coloring:
        return Coloring(_dense(self.var_keys), _dense(self.factor_keys))

    def refine(self, c: Coloring) -> Coloring:
        vc = c.variables
        fsig = []
        for k, groups in enumerate(self.sig_groups):
            slots = self.slots[k]
            sig = [c.factors[k]]
            for grp in groups:
                sig.extend(sorted(vc[slots[p]] for p in grp))
            fsig.append(tuple(sig))
        fcol = _dense(fsig)
        vsig = []
        for v, inc in enumerate(self.incidence):
            tally = Counter()
            for k, tag, mult in inc:
                tally[(fcol[k], tag)] += mult
            vsig.append((vc[v], tuple(sorted((a, b, m) for (a, b), m in tally.items()))))
        return Coloring(_dense(vsig), fcol)

    def fixpoint(self, coloring: Coloring | None = None) -> tuple[Coloring, int]:
        c = coloring or self.initial()
        rounds = 0
        while True:
            nxt = self.refine(c)
            rounds += 1
            if (nxt.num_variable_colors, nxt.num_factor_colors) == (c.num_variable_colors, c.num_factor_colors):
                return nxt, rounds
            c = nxt


class _GroundPrep:
    """Per-factor table analysis of a ground graph under one signature mode."""

    def __init__(self, graph: FactorGraph, evidence, mode: str, layer_of=None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.graph = graph
        self.mode = mode
        self.evidence = validate_evidence(graph, evidence)
        if layer_of is not None and len(layer_of) != graph.num_variables:
            raise ValueError("layer_of must give one key per variable")
        self.layer_of = tuple(layer_of) if layer_of is not None else (0,) * graph.num_variables

        cache: dict = {}
        self.tables, self.sig_groups, self.edge_groups, fkeys = [], [], [], []
        for f in graph.factors:
            t = condition_table(f.potential.table, f.args, self.evidence)
            self.tables.append(t)
            ck = (t.shape, t.tobytes())
            if ck not in cache:
                if mode == "commutative":
                    groups, key = canonical_form(t)
                    cache[ck] = (groups, groups, key)
                else:
                    single = [[p] for p in range(t.ndim)]
                    key = ("p", t.shape, tuple(t.ravel().tolist()))
                    edge_groups = symmetric_classes(t) if mode == "unordered" else single
                    cache[ck] = (single, edge_groups, key)
            sig, eg, key = cache[ck]
            self.sig_groups.append(sig)
            self.edge_groups.append(eg)
            fkeys.append(key)

        var_keys = [
            (self.layer_of[v.id], v.cardinality, self.evidence.get(v.id, -1)) for v in graph.variables
        ]
        incidence = []
        for v, adj in enumerate(graph.adjacency):
            inc = []
            for k, p in adj:
                if mode == "unordered":
                    tag = 0
                elif mode == "positional":
                    tag = p
                else:
                    tag = next(i for i, grp in enumerate(self.sig_groups[k]) if p in grp)
                inc.append((k, tag, 1))
            incidence.append(inc)
        self.structure = _Structure(
            var_keys, fkeys, [f.args for f in graph.factors], self.sig_groups, incidence
        )


def initial_colors(
    graph: FactorGraph, evidence: Mapping[int, int] | None = None, mode: str = "commutative", layer_of=None
) -> Coloring:
    """Variables by (layer, cardinality, observed state); factors by conditioned table."""
    return _GroundPrep(graph, evidence, mode, layer_of).structure.initial()


def refine_once(
    graph: FactorGraph, colors: Coloring, evidence: Mapping[int, int] | None = None, mode: str = "commutative"
) -> Coloring:
    """One round of factor then variable recoloring."""
    return _GroundPrep(graph, evidence, mode).structure.refine(colors)


# --- compressed graph -----------------------------------------------------------

@dataclass(frozen=True)
class ClusterNode:
    members: tuple[int, ...]
    cardinality: int
    layer: object = 0

    @property
    def representative(self) -> int:
        return self.members[0]


@dataclass(frozen=True)
class ClusterFactor:
    """``potential`` is the representative's table in canonical slot order;
    ``slots[q]`` is the compressed edge feeding canonical slot ``q``."""

    members: tuple[int, ...]
    potential: Potential
    slots: tuple[int, ...]

    @property
    def representative(self) -> int:
        return self.members[0]


@dataclass(frozen=True)
class ClusterEdge:
    """Edge between ``factor`` and ``node``; ``position`` is the canonical slot
    that produces its factor-to-node message, ``tag`` its slot group."""

    factor: int
    position: int
    tag: int
    node: int
    count: int


@dataclass(frozen=True)
class CompressedFactorGraph:
    nodes: tuple[ClusterNode, ...]
    factors: tuple[ClusterFactor, ...]
    edges: tuple[ClusterEdge, ...]
    var_node: tuple[int, ...]
    factor_cluster: tuple[int, ...]
    mode: str
    rounds: int
    num_ground_edges: int
    evidence: tuple[tuple[int, int], ...] = ()

    @property
    def num_ground_variables(self) -> int:
        return len(self.var_node)

    @property
    def num_ground_factors(self) -> int:
        return len(self.factor_cluster)

    def node_edges(self, n: int) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.node == n]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rounds": self.rounds,
            "clusternodes": [
                {"members": list(n.members), "cardinality": n.cardinality} for n in self.nodes
            ],
            "clusterfactors": [
                {
                    "members": list(f.members),
                    "cardinalities": list(f.potential.cardinalities),
                    "potential": f.potential.values.tolist(),
                    "slots": list(f.slots),
                }
                for f in self.factors
            ],
            "edges": [
                {"clusterfactor": e.factor, "position": e.position, "clusternode": e.node, "count": e.count}
                for e in self.edges
            ],
        }


def compress(
    graph: FactorGraph,
    evidence: Mapping[int, int] | None = None,
    mode: str = "commutative",
    layer_of: Sequence | None = None,
) -> CompressedFactorGraph:
    """Run color passing to its fixpoint and assemble the compressed graph.

    ``layer_of`` optionally seeds the initial variable colors with a layer
    key so no clusternode spans two layers of a forwards-backwards schedule.
    """
    prep = _GroundPrep(graph, evidence, mode, layer_of)
    coloring, rounds = prep.structure.fixpoint()
    vcol, fcol = coloring.variables, coloring.factors

    node_members: dict[int, list[int]] = {}
    for v, c in enumerate(vcol):
        node_members.setdefault(c, []).append(v)
    nodes = tuple(
        ClusterNode(tuple(m), graph.variables[m[0]].cardinality, prep.layer_of[m[0]])
        for _, m in sorted(node_members.items())
    )
    var_node = vcol  # colors are dense and ordered, so they double as node indices

    factor_members: dict[int, list[int]] = {}
    for k, c in enumerate(fcol):
        factor_members.setdefault(c, []).append(k)

    factors, edges = [], []
    for ci, (_, members) in enumerate(sorted(factor_members.items())):
        layout = None
        tally: dict[tuple[int, int], Counter] = {}
        for k in members:
            args = graph.factors[k].args
            order = [p for grp in prep.edge_groups[k] for p in sorted(grp, key=lambda p: (vcol[args[p]], p))]
            seq = tuple(var_node[args[p]] for p in order)
            if layout is None:
                layout = (order, seq)
            elif seq != layout[1]:
                raise CompressionError(
                    f"mode {mode!r}: factors {members[0]} and {k} share a color but are not aligned"
                )
            group_of = {p: gi for gi, grp in enumerate(prep.edge_groups[k]) for p in grp}
            for p in order:
                tally.setdefault((group_of[p], var_node[args[p]]), Counter())[args[p]] += 1

        order, seq = layout
        rep = members[0]
        rep_groups = prep.edge_groups[rep]
        group_of = {p: gi for gi, grp in enumerate(rep_groups) for p in grp}
        table = np.transpose(prep.tables[rep], order)
        slot_edge, seen = [], {}
        for q, p in enumerate(order):
            gkey = (group_of[p], seq[q])
            if gkey not in seen:
                node = nodes[gkey[1]]
                counts = tally[gkey]
                per_member = {counts.get(v, 0) for v in node.members}
                if len(per_member) != 1:
                    raise CompressionError(
                        f"mode {mode!r}: edge counts between clusterfactor {ci} and clusternode "
                        f"{gkey[1]} differ across members"
                    )
                seen[gkey] = len(edges)
                edges.append(ClusterEdge(ci, q, gkey[0], gkey[1], per_member.pop()))
            slot_edge.append(seen[gkey])
        factors.append(ClusterFactor(tuple(members), Potential(table.shape, table), tuple(slot_edge)))

    return CompressedFactorGraph(
        nodes=nodes,
        factors=tuple(factors),
        edges=tuple(edges),
        var_node=tuple(var_node),
        factor_cluster=tuple(fcol),
        mode=mode,
        rounds=rounds,
        num_ground_edges=graph.num_edges,
        evidence=tuple(sorted(prep.evidence.items())),
    )


def quotient_coloring(cg: CompressedFactorGraph) -> tuple[Coloring, int]:
    """Color passing on the compressed graph itself.

    Clusternodes and clusterfactors act as plain nodes and factors, each
    edge entering its node's signature ``count`` times. A fixpoint of
    compression refines to the discrete coloring here.
    """
    evidence = dict(cg.evidence)
    var_keys = []
    for n in cg.nodes:
        var_keys.append((n.layer, n.cardinality, evidence.get(n.representative, -1)))
    factor_keys, slots, sig_groups = [], [], []
    for f in cg.factors:
        t = f.potential.table
        if cg.mode == "commutative":
            factor_keys.append(canonical_form(t)[1])
            tag_slots: dict[int, list[int]] = {}
            for q, e in enumerate(f.slots):
                tag_slots.setdefault(cg.edges[e].tag, []).append(q)
            sig_groups.append([tag_slots[t] for t in sorted(tag_slots)])
        else:
            factor_keys.append(("p", t.shape, tuple(t.ravel().tolist())))
            sig_groups.append([[q] for q in range(t.ndim)])
        slots.append(tuple(cg.edges[e].node for e in f.slots))
    incidence: list[list] = [[] for _ in cg.nodes]
    for e in cg.edges:
        tag = 0 if cg.mode == "unordered" else e.tag
        incidence[e.node].append((e.factor, tag, e.count))
    return _Structure(var_keys, factor_keys, slots, sig_groups, incidence).fixpoint()


def compression_stats(graph: FactorGraph, cg: CompressedFactorGraph) -> dict:
    nv, nf, ne = graph.num_variables, graph.num_factors, graph.num_edges
    return {
        "variables": nv,
        "factors": nf,
        "edges": ne,
        "clusternodes": len(cg.nodes),
        "clusterfactors": len(cg.factors),
        "compressed_edges": len(cg.edges),
        "node_ratio": len(cg.nodes) / nv if nv else 1.0,
        "factor_ratio": len(cg.factors) / nf if nf else 1.0,
        "edge_ratio": len(cg.edges) / ne if ne else 1.0,
        "rounds": cg.rounds,
    }
