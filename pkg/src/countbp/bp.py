"""Loopy sum-product belief propagation on a ground factor graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from ._wiring import MessagePassing, Wiring
from .errors import ContradictionError
from .factor_graph import FactorGraph, apply_evidence


@dataclass(frozen=True)
class ForwardsBackwards:
    """Sweep layers left to right, then right to left.

    ``layer_of[v]`` is a sortable key for variable ``v``; variables sharing a
    key form one layer and are updated together. ``None`` puts every
    variable in its own layer, ordered by id.
    """

    layer_of: tuple | None = None


Schedule = Union[str, ForwardsBackwards]


@dataclass(frozen=True)
class BPConfig:
    damping: float = 0.5
    tolerance: float = 1e-8
    max_sweeps: int = 1000
    schedule: Schedule = "flooding"

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if isinstance(self.schedule, str) and self.schedule not in ("flooding", "fb"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class RunStats:
    sweeps: int = 0
    messages: int = 0
    edges: int = 0
    converged: bool = False
    residual: float = float("inf")

    def to_dict(self) -> dict:
        return {
            "sweeps": self.sweeps,
            "messages": self.messages,
            "edges": self.edges,
            "converged": self.converged,
            "residual": self.residual,
        }


def layers_from_keys(keys: Sequence) -> list[np.ndarray]:
    """Group indices by key, layers in increasing key order."""
    groups: dict = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    return [np.array(groups[k], dtype=np.int64) for k in sorted(groups)]


def resolve_layers(schedule: Schedule, num_vars: int):
    if schedule == "flooding":
        return None
    if schedule == "fb":
        schedule = ForwardsBackwards()
    if schedule.layer_of is None:
        return [np.array([v]) for v in range(num_vars)]
    if len(schedule.layer_of) != num_vars:
        raise ValueError(f"layer_of has {len(schedule.layer_of)} entries for {num_vars} variables")
    return layers_from_keys(schedule.layer_of)


def ground_wiring(graph: FactorGraph) -> Wiring:
    edge_var, factors = [], []
    for f in graph.factors:
        start = len(edge_var)
        edge_var.extend(f.args)
        factors.append((f.potential.table, list(range(start, start + f.arity)), [True] * f.arity))
    return Wiring(graph.cardinalities, edge_var, np.ones(len(edge_var)), factors)


def _split_beliefs(b: np.ndarray, cards) -> list[np.ndarray]:
    return [b[i, :c].copy() for i, c in enumerate(cards)]


def clamp_observed(beliefs: list[np.ndarray], evidence) -> list[np.ndarray]:
    """Observed variables get the indicator of their state.

    This matters only for variables without factors, which never see the
    evidence through a conditioned table.
    """
    for v, s in dict(evidence or {}).items():
        b = np.zeros_like(beliefs[v])
        b[s] = 1.0
        beliefs[v] = b
    return beliefs


def iterate_bp(
    graph: FactorGraph, evidence: Mapping[int, int] | None = None, config: BPConfig = BPConfig()
) -> Iterator[tuple[list[np.ndarray], RunStats]]:
    """Yield ``(beliefs, stats)`` after every sweep until convergence or the cap."""
    g = apply_evidence(graph, evidence)
    wiring = ground_wiring(g)
    mp = MessagePassing(wiring, config.damping, resolve_layers(config.schedule, g.num_variables))
    stats = RunStats(edges=wiring.num_edges)
    for _ in range(config.max_sweeps):
        res = mp.sweep()
        stats = RunStats(mp.sweeps, mp.messages, wiring.num_edges, res < config.tolerance, res)
        yield clamp_observed(_split_beliefs(mp.beliefs(), g.cardinalities), evidence), stats
        if stats.converged:
            return


def run_bp(
    graph: FactorGraph, evidence: Mapping[int, int] | None = None, config: BPConfig = BPConfig()
) -> tuple[list[np.ndarray], RunStats]:
    """Run BP and return per-variable normalized beliefs with run statistics."""
    g = apply_evidence(graph, evidence)
    wiring = ground_wiring(g)
    mp = MessagePassing(wiring, config.damping, resolve_layers(config.schedule, g.num_variables))
    converged = False
    for _ in range(config.max_sweeps):
        if mp.sweep() < config.tolerance:
            converged = True
            break
    stats = RunStats(mp.sweeps, mp.messages, wiring.num_edges, converged, mp.residual)
    return clamp_observed(_split_beliefs(mp.beliefs(), g.cardinalities), evidence), stats


# --- single-message reference operations ------------------------------------

class MessageStore(dict):
    """Directed-edge messages of a ground graph.

    Keys are ``(var, (factor, pos))`` for variable-to-factor messages and
    ``((factor, pos), var)`` for the reverse direction. Missing messages read
    as uniform, the normalized form of the all-ones initialization.
    """

    def message(self, key, cardinality: int) -> np.ndarray:
        m = self.get(key)
        if m is None:
            return np.full(cardinality, 1.0 / cardinality)
        return np.asarray(m, dtype=np.float64)


def normalized(m: np.ndarray) -> np.ndarray:
    s = m.sum()
    if not s > 0:
        raise ContradictionError("all-zero message")
    return m / s


def variable_to_factor_message(store: MessageStore, graph: FactorGraph, var: int, target) -> np.ndarray:
    card = graph.variables[var].cardinality
    prod = np.ones(card)
    for fp in graph.adjacency[var]:
        if fp != tuple(target):
            prod = prod * store.message((fp, var), card)
    return normalized(prod)


def factor_to_variable_message(store: MessageStore, graph: FactorGraph, source, var: int) -> np.ndarray:
    f, p = source
    factor = graph.factors[f]
    if factor.args[p] != var:
        raise ValueError(f"variable {var} is not argument {p} of factor {f}")
    t = factor.potential.table
    for q, arg in enumerate(factor.args):
        if q == p:
            continue
        m = store.message((arg, (f, q)), graph.variables[arg].cardinality)
        shape = [1] * t.ndim
        shape[q] = m.size
        t = t * m.reshape(shape)
    axes = tuple(q for q in range(t.ndim) if q != p)
    return normalized(t.sum(axis=axes) if axes else t)


def belief(store: MessageStore, graph: FactorGraph, var: int) -> np.ndarray:
    card = graph.variables[var].cardinality
    prod = np.ones(card)
    for fp in graph.adjacency[var]:
        prod = prod * store.message((fp, var), card)
    return normalized(prod)
