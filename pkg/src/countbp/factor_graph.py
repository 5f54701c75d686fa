"""Discrete factor graphs: construction, validation and evidence conditioning.

Potential tables are stored flat in row-major order with argument 0 as the
most significant index, i.e. ``values.reshape(cardinalities)`` is the table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EvidenceError, GraphError, ParseError


@dataclass(frozen=True)
class Variable:
    id: int
    cardinality: int = 2
    label: str | None = None

    def __post_init__(self):
        if self.cardinality < 2:
            raise GraphError(f"variable {self.id}: cardinality must be >= 2, got {self.cardinality}")


@dataclass(frozen=True, eq=False)
class Potential:
    cardinalities: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cardinalities)
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != int(np.prod(cards, dtype=np.int64)):
            raise GraphError(
                f"table has {values.size} entries but cardinalities {cards} need {int(np.prod(cards))}"
            )
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise GraphError("potential entries must be finite and non-negative")
        # +0.0 folds -0.0 into 0.0 so byte keys are canonical
        values = values + 0.0
        values.setflags(write=False)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "values", values)

    @property
    def table(self) -> np.ndarray:
        return self.values.reshape(self.cardinalities)

    def __eq__(self, other):
        if not isinstance(other, Potential):
            return NotImplemented
        return self.cardinalities == other.cardinalities and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.cardinalities, self.values.tobytes()))


@dataclass(frozen=True)
class Factor:
    id: int
    args: tuple[int, ...]
    potential: Potential

    @property
    def arity(self) -> int:
        return len(self.args)


@dataclass(frozen=True)
class FactorGraph:
    """Immutable bipartite graph of variables and factors.

    ``adjacency[v]`` lists the ``(factor id, argument position)`` pairs that
    variable ``v`` occupies, in increasing factor order.
    """

    variables: tuple[Variable, ...]
    factors: tuple[Factor, ...]
    adjacency: tuple[tuple[tuple[int, int], ...], ...] = field(repr=False)

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    @property
    def num_edges(self) -> int:
        return sum(f.arity for f in self.factors)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    def neighbors(self, kind: str, index: int):
        return neighbors(self, kind, index)


def build_graph(variables: Iterable, factors: Iterable) -> FactorGraph:
    """Validate and assemble a :class:`FactorGraph`.

    ``variables`` may hold :class:`Variable` objects or plain cardinalities;
    ``factors`` may hold :class:`Factor` objects or ``(args, values)`` pairs.
    Ids are reassigned densely in input order.
    """
    vs = []
    for i, v in enumerate(variables):
        if isinstance(v, Variable):
            vs.append(Variable(i, v.cardinality, v.label))
        else:
            vs.append(Variable(i, int(v)))
    cards = [v.cardinality for v in vs]

    fs = []
    adjacency: list[list[tuple[int, int]]] = [[] for _ in vs]
    for k, f in enumerate(factors):
        if isinstance(f, Factor):
            args, pot = tuple(f.args), f.potential
        else:
            args, values = f
            args = tuple(int(a) for a in args)
            for a in args:
                if not 0 <= a < len(vs):
                    raise GraphError(f"factor {k}: unknown variable id {a}")
            pot = Potential(tuple(cards[a] for a in args), values)
        if len(args) == 0:
            raise GraphError(f"factor {k}: factors need at least one argument")
        if len(set(args)) != len(args):
            raise GraphError(f"factor {k}: repeated argument in {args}")
        for a in args:
            if not 0 <= a < len(vs):
                raise GraphError(f"factor {k}: unknown variable id {a}")
        expected = tuple(cards[a] for a in args)
        if pot.cardinalities != expected:
            raise GraphError(
                f"factor {k}: table shape {pot.cardinalities} does not match argument cardinalities {expected}"
            )
        if not np.any(pot.values > 0):
            raise GraphError(f"factor {k}: table needs at least one positive entry")
        fs.append(Factor(k, args, pot))
        for p, a in enumerate(args):
            adjacency[a].append((k, p))

    return FactorGraph(tuple(vs), tuple(fs), tuple(tuple(a) for a in adjacency))


def neighbors(graph: FactorGraph, kind: str, index: int) -> list:
    """Incidences of a node.

    For ``kind="variable"`` returns ``[(factor id, position), ...]``; for
    ``kind="factor"`` returns the ordered argument list.
    """
    if kind in ("variable", "v"):
        if not 0 <= index < graph.num_variables:
            raise GraphError(f"unknown variable id {index}")
        return list(graph.adjacency[index])
    if kind in ("factor", "f"):
        if not 0 <= index < graph.num_factors:
            raise GraphError(f"unknown factor id {index}")
        return list(graph.factors[index].args)
    raise ValueError(f"kind must be 'variable' or 'factor', not {kind!r}")


def validate_evidence(graph: FactorGraph, evidence: Mapping[int, int] | None) -> dict[int, int]:
    out = {}
    for var, state in (evidence or {}).items():
        var, state = int(var), int(state)
        if not 0 <= var < graph.num_variables:
            raise EvidenceError(f"evidence on unknown variable {var}")
        if not 0 <= state < graph.variables[var].cardinality:
            raise EvidenceError(
                f"variable {var}: observed state {state} outside 0..{graph.variables[var].cardinality - 1}"
            )
        out[var] = state
    return out


def condition_table(table: np.ndarray, args: Sequence[int], evidence: Mapping[int, int]) -> np.ndarray:
    """Return ``table`` with every row incompatible with ``evidence`` set to 0."""
    out = table
    for p, a in enumerate(args):
        if a in evidence:
            if out is table:
                out = table.copy()
            mask = np.ones(table.shape[p], dtype=bool)
            mask[evidence[a]] = False
            idx = [slice(None)] * table.ndim
            idx[p] = mask
            out[tuple(idx)] = 0.0
    return out


def apply_evidence(graph: FactorGraph, evidence: Mapping[int, int] | None) -> FactorGraph:
    """Zero every factor row inconsistent with the observed states."""
    ev = validate_evidence(graph, evidence)
    if not ev:
        return graph
    factors = []
    for f in graph.factors:
        if any(a in ev for a in f.args):
            t = condition_table(f.potential.table, f.args, ev)
            f = Factor(f.id, f.args, Potential(f.potential.cardinalities, t))
        factors.append(f)
    return FactorGraph(graph.variables, tuple(factors), graph.adjacency)


# --- text format -----------------------------------------------------------

def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line.split()


def parse_fgt(text: str) -> FactorGraph:
    """Parse the ``.fgt`` text factor-graph format."""
    lines = list(_data_lines(text))
    if not lines:
        raise ParseError("empty input", 1)
    lineno, toks = lines[0]
    if len(toks) != 2 or toks[0] != "variables":
        raise ParseError("expected 'variables <n>'", lineno)
    try:
        n = int(toks[1])
    except ValueError:
        raise ParseError(f"bad variable count {toks[1]!r}", lineno) from None
    if n < 0:
        raise ParseError("negative variable count", lineno)
    if len(lines) < 2:
        raise ParseError("missing cardinality line", lineno)
    lineno, toks = lines[1]
    try:
        cards = [int(t) for t in toks]
    except ValueError:
        raise ParseError("cardinalities must be integers", lineno) from None
    if len(cards) != n:
        raise ParseError(f"expected {n} cardinalities, got {len(cards)}", lineno)

    factors = []
    i = 2
    while i < len(lines):
        lineno, toks = lines[i]
        if toks[0] != "factor" or len(toks) < 2:
            raise ParseError("expected 'factor <arity> <args...>'", lineno)
        try:
            arity = int(toks[1])
            args = [int(t) for t in toks[2:]]
        except ValueError:
            raise ParseError("factor header must contain integers", lineno) from None
        if len(args) != arity:
            raise ParseError(f"factor declares arity {arity} but lists {len(args)} arguments", lineno)
        for a in args:
            if not 0 <= a < n:
                raise ParseError(f"unknown variable id {a}", lineno)
        if i + 1 >= len(lines):
            raise ParseError("factor without value line", lineno)
        vline, vtoks = lines[i + 1]
        try:
            values = [float(t) for t in vtoks]
        except ValueError:
            raise ParseError("table values must be decimal numbers", vline) from None
        size = int(np.prod([cards[a] for a in args], dtype=np.int64))
        if len(values) != size:
            raise ParseError(f"expected {size} table values, got {len(values)}", vline)
        factors.append((args, values))
        i += 2
    try:
        return build_graph(cards, factors)
    except GraphError as exc:
        raise ParseError(str(exc)) from exc


def format_fgt(graph: FactorGraph) -> str:
    out = [f"variables {graph.num_variables}", " ".join(str(c) for c in graph.cardinalities)]
    for f in graph.factors:
        out.append(f"factor {f.arity} " + " ".join(str(a) for a in f.args))
        out.append(" ".join(repr(float(v)) for v in f.potential.values))
    return "\n".join(out) + "\n"


def read_fgt(path) -> FactorGraph:
    with open(path, encoding="ascii") as fh:
        return parse_fgt(fh.read())
