"""Probabilistic lower bounds on CNF model counts via BP-guided random fixing.

Each iteration repeatedly estimates marginals with (counting) BP, fixes the
most balanced variable to a uniformly random value and unit-propagates, until
at most ``exact_threshold`` variables remain constrained. The residual is
counted exactly; with ``s`` random fixings and residual count ``M`` the
iteration reports ``2**(s - alpha) * M``. The minimum over ``t`` iterations
is a lower bound with probability at least ``1 - 2**(-alpha * t)``.
"""

from __future__ import annotations

import decimal
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .bp import BPConfig, run_bp
from .cbp import run_cbp
from .cnf import CnfFormula, clause_graph, condition_and_propagate, exact_count, external_count
from .errors import Conflict
from .lifting import compress

log = logging.getLogger(__name__)

ENGINES = ("bp", "cbp")


@dataclass(frozen=True)
class CountConfig:
    seed: int
    alpha: Fraction | float | int | str = 1
    iterations: int = 7
    engine: str = "bp"
    damping: float = 0.5
    tolerance: float = 1e-8
    max_sweeps: int = 1000
    exact_threshold: int = 64
    mode: str = "commutative"
    tie_tolerance: float = 1e-7
    counter_command: tuple[str, ...] | None = None

    def __post_init__(self):
        a = Fraction(str(self.alpha)) if not isinstance(self.alpha, Fraction) else self.alpha
        if a < 0:
            raise ValueError("alpha must be non-negative")
        object.__setattr__(self, "alpha", a)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.exact_threshold < 0:
            raise ValueError("exact_threshold must be >= 0")

    @property
    def bp_config(self) -> BPConfig:
        return BPConfig(self.damping, self.tolerance, self.max_sweeps)

    @property
    def confidence(self) -> float:
        return 1.0 - 2.0 ** (-float(self.alpha) * self.iterations)


@dataclass
class MarginalRun:
    """One marginal estimate inside an iteration."""

    variables: int
    messages: int
    edges: int
    sweeps: int
    converged: bool
    chosen: int
    value: bool


@dataclass
class IterationRecord:
    index: int
    s: int = 0
    model_count: int = 0
    conflict: bool = False
    decisions: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    @property
    def messages(self) -> int:
        return sum(r.messages for r in self.runs)

    @property
    def edges(self) -> int:
        return sum(r.edges for r in self.runs)

    def count(self, alpha: Fraction):
        return scaled_count(self.model_count, self.s - alpha)


def scaled_count(model_count: int, exponent: Fraction):
    """``model_count * 2**exponent``: exact Fraction for integral exponents, else Decimal."""
    if model_count == 0:
        return Fraction(0)
    if exponent.denominator == 1:
        return Fraction(model_count) * Fraction(2) ** int(exponent)
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        power = decimal.Decimal(2) ** (decimal.Decimal(exponent.numerator) / decimal.Decimal(exponent.denominator))
        return decimal.Decimal(model_count) * power


def format_count(value) -> str:
    """Exact decimal string for the dyadic Fractions produced by :func:`scaled_count`."""
    if isinstance(value, decimal.Decimal):
        return format(value.normalize(), "f") if value == value.to_integral() else str(value)
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    k = value.denominator.bit_length() - 1
    if value.denominator != 1 << k:
        raise ValueError("not a dyadic rational")
    digits = str(abs(value.numerator) * 5**k).rjust(k + 1, "0")
    sign = "-" if value < 0 else ""
    return f"{sign}{digits[:-k]}.{digits[-k:]}".rstrip("0").rstrip(".")


@dataclass
class CountResult:
    lower_bound: object
    confidence: float
    iterations: list
    winning_iteration: int
    engine: str
    seed: int
    alpha: Fraction

    def cumulative_messages(self) -> list[int]:
        out, total = [], 0
        for it in self.iterations:
            for r in it.runs:
                total += r.messages
                out.append(total)
        return out

    def cumulative_edges(self) -> list[int]:
        out, total = [], 0
        for it in self.iterations:
            for r in it.runs:
                total += r.edges
                out.append(total)
        return out

    def to_dict(self) -> dict:
        return {
            "lower_bound": format_count(self.lower_bound),
            "confidence": self.confidence,
            "engine": self.engine,
            "seed": self.seed,
            "alpha": str(self.alpha),
            "winning_iteration": self.winning_iteration,
            "total_messages": sum(it.messages for it in self.iterations),
            "iterations": [
                {
                    "index": it.index,
                    "s": it.s,
                    "model_count": str(it.model_count),
                    "count": format_count(it.count(self.alpha)),
                    "conflict": it.conflict,
                    "messages": it.messages,
                    "edges": it.edges,
                    "marginal_runs": len(it.runs),
                    "nonconverged_runs": sum(not r.converged for r in it.runs),
                    "decisions": list(it.decisions),
                }
                for it in self.iterations
            ],
        }


def most_balanced_variable(marginals: Mapping[int, float], tie_tolerance: float = 1e-9) -> int:
    """Variable whose P(true) is closest to 0.5; near-ties go to the smallest index."""
    if not marginals:
        raise ValueError("no unassigned variables to choose from")
    dist = {v: abs(p - 0.5) for v, p in marginals.items()}
    best = min(dist.values())
    return min(v for v, d in dist.items() if d <= best + tie_tolerance)


def estimate_marginals(formula: CnfFormula, config: CountConfig):
    """P(true) for every variable occurring in the clauses, plus the run stats."""
    variables = formula.occurring()
    graph = clause_graph(formula.clauses, variables)
    if config.engine == "cbp":
        beliefs, stats = run_cbp(compress(graph, mode=config.mode), config.bp_config)
    else:
        beliefs, stats = run_bp(graph, None, config.bp_config)
    return {v: float(beliefs[i][1]) for i, v in enumerate(variables)}, stats


def count_iteration(formula: CnfFormula, config: CountConfig, rng: np.random.Generator, index: int = 0) -> IterationRecord:
    rec = IterationRecord(index)
    try:
        residual, _ = condition_and_propagate(formula)
        while len(residual.occurring()) > config.exact_threshold:
            marginals, stats = estimate_marginals(residual, config)
            u = most_balanced_variable(marginals, config.tie_tolerance)
            value = bool(rng.random() < 0.5)
            rec.runs.append(
                MarginalRun(len(marginals), stats.messages, stats.edges, stats.sweeps, stats.converged, u, value)
            )
            if not stats.converged:
                log.debug("iteration %d: marginals did not converge in %d sweeps", index, stats.sweeps)
            lit = u if value else -u
            rec.decisions.append(lit)
            rec.s += 1
            residual, _ = condition_and_propagate(residual, lit)
    except Conflict:
        rec.conflict = True
        rec.model_count = 0
        return rec
    if config.counter_command:
        rec.model_count = external_count(residual, config.counter_command)
    else:
        rec.model_count = exact_count(residual, max_vars=None)
    return rec


def iteration_rngs(seed: int, iterations: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(iterations)]


def run_count(formula: CnfFormula, config: CountConfig) -> CountResult:
    records = [
        count_iteration(formula, config, rng, i)
        for i, rng in enumerate(iteration_rngs(config.seed, config.iterations))
    ]
    counts = [r.count(config.alpha) for r in records]
    win = min(range(len(counts)), key=lambda i: (counts[i], i))
    return CountResult(counts[win], config.confidence, records, win, config.engine, config.seed, config.alpha)
