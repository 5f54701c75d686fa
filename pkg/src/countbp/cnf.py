"""CNF formulas: DIMACS I/O, clause factor graphs, unit propagation and exact counting."""

from __future__ import annotations

import os
import re
import subprocess
import tempfile
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetExceeded, Conflict, ContradictionError, ParseError
from .factor_graph import FactorGraph, build_graph

BRUTE_FORCE_LIMIT = 26
DEFAULT_EXACT_BUDGET = 64


@dataclass(frozen=True)
class CnfFormula:
    """Clauses of signed DIMACS literals over variables ``1..num_vars``.

    ``fixed`` holds literals already made true by conditioning; those
    variables are excluded from every count.
    """

    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    fixed: frozenset = frozenset()
    tautologies_removed: int = 0

    @classmethod
    def from_clauses(cls, num_vars: int, clauses: Iterable[Iterable[int]]) -> "CnfFormula":
        kept, tauts = [], 0
        for clause in clauses:
            lits = tuple(dict.fromkeys(int(l) for l in clause))
            for l in lits:
                if l == 0 or abs(l) > num_vars:
                    raise ValueError(f"literal {l} outside 1..{num_vars}")
            if any(-l in lits for l in lits):
                tauts += 1
                continue
            kept.append(lits)
        return cls(num_vars, tuple(kept), frozenset(), tauts)

    @property
    def assigned(self) -> frozenset:
        return frozenset(abs(l) for l in self.fixed)

    def occurring(self) -> list[int]:
        """Variables that appear in some clause, ascending."""
        return sorted({abs(l) for c in self.clauses for l in c})

    def unassigned(self) -> list[int]:
        a = self.assigned
        return [v for v in range(1, self.num_vars + 1) if v not in a]


# --- DIMACS ---------------------------------------------------------------------

def parse_dimacs(text: str) -> CnfFormula:
    header = None
    clauses, current = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            toks = line.split()
            if header is not None:
                raise ParseError("duplicate header", lineno)
            if len(toks) != 4 or toks[1] != "cnf":
                raise ParseError("expected 'p cnf <vars> <clauses>'", lineno)
            try:
                header = (int(toks[2]), int(toks[3]))
            except ValueError:
                raise ParseError("header counts must be integers", lineno) from None
            if header[0] < 0 or header[1] < 0:
                raise ParseError("negative header count", lineno)
            continue
        if header is None:
            raise ParseError("clause before 'p cnf' header", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise ParseError(f"bad literal {tok!r}", lineno) from None
            if lit == 0:
                clauses.append(current)
                current = []
            elif abs(lit) > header[0]:
                raise ParseError(f"literal {lit} out of range 1..{header[0]}", lineno)
            else:
                current.append(lit)
    if header is None:
        raise ParseError("missing 'p cnf' header")
    if current:
        raise ParseError("last clause is not terminated by 0")
    if len(clauses) != header[1]:
        raise ParseError(f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula.from_clauses(header[0], clauses)


def format_dimacs(formula: CnfFormula) -> str:
    """DIMACS text; fixed literals are appended as unit clauses."""
    clauses = list(formula.clauses) + [(l,) for l in sorted(formula.fixed, key=lambda l: (abs(l), l))]
    out = [f"p cnf {formula.num_vars} {len(clauses)}"]
    out.extend(" ".join(str(l) for l in c) + " 0" for c in clauses)
    return "\n".join(out) + "\n"


def read_dimacs(path) -> CnfFormula:
    with open(path, encoding="ascii") as fh:
        return parse_dimacs(fh.read())


# --- factor graphs --------------------------------------------------------------

def clause_table(clause: Sequence[int]) -> np.ndarray:
    """Table over the clause's variables (state 1 = true), zero only at the falsifying row."""
    k = len(clause)
    if k == 0:
        raise ContradictionError("empty clause")
    t = np.ones((2,) * k)
    t[tuple(0 if l > 0 else 1 for l in clause)] = 0.0
    return t


def clause_graph(clauses: Sequence[Sequence[int]], variables: Sequence[int]) -> FactorGraph:
    """Factor graph over ``variables`` (id ``i`` is ``variables[i]``), one factor per clause."""
    index = {v: i for i, v in enumerate(variables)}
    factors = [([index[abs(l)] for l in c], clause_table(c).ravel()) for c in clauses]
    return build_graph([2] * len(variables), factors)


def to_factor_graph(formula: CnfFormula) -> FactorGraph:
    """One binary variable per proposition (id = DIMACS index - 1), one factor per clause."""
    return clause_graph(formula.clauses, range(1, formula.num_vars + 1))


# --- unit propagation -------------------------------------------------------------

def condition_and_propagate(formula: CnfFormula, literal: int | None = None):
    """Set ``literal`` true (if given) and unit-propagate.

    Returns ``(residual, implied)`` where ``implied`` lists the literals forced
    by propagation, in order. Raises :class:`Conflict` on an empty clause.
    """
    if literal is not None and abs(literal) in formula.assigned:
        raise ValueError(f"variable {abs(literal)} is already assigned")
    true: set[int] = set()
    implied: list[int] = []
    occ: dict[int, list[int]] = {}
    for i, c in enumerate(formula.clauses):
        for l in c:
            occ.setdefault(l, []).append(i)
    pending = [] if literal is None else [literal]
    pending += [c[0] for c in formula.clauses if len(c) == 1]
    decision = literal
    while pending:
        l = pending.pop(0)
        if -l in true:
            raise Conflict(f"literal {l} conflicts with an earlier assignment")
        if l in true:
            continue
        true.add(l)
        if l != decision:
            implied.append(l)
        for i in occ.get(-l, ()):
            c = formula.clauses[i]
            if any(x in true for x in c):
                continue
            open_lits = [x for x in c if -x not in true]
            if not open_lits:
                raise Conflict(f"clause {i} falsified")
            if len(open_lits) == 1:
                pending.append(open_lits[0])
    residual = []
    for c in formula.clauses:
        if any(x in true for x in c):
            continue
        residual.append(tuple(x for x in c if -x not in true))
    new = CnfFormula(formula.num_vars, tuple(residual), formula.fixed | true, formula.tautologies_removed)
    return new, tuple(implied)


# --- counting ---------------------------------------------------------------------

def brute_force_count(formula: CnfFormula) -> int:
    """Model count by enumerating every assignment of the unassigned variables."""
    free = formula.unassigned()
    if len(free) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{len(free)} free variables exceed the enumeration limit {BRUTE_FORCE_LIMIT}")
    bit = {v: j for j, v in enumerate(free)}
    fixed = set(formula.fixed)
    total = 0
    chunk = 1 << min(len(free), 20)
    for start in range(0, 1 << len(free), chunk):
        idx = np.arange(start, start + chunk, dtype=np.int64)
        ok = np.ones(chunk, dtype=bool)
        for c in formula.clauses:
            sat = np.zeros(chunk, dtype=bool)
            for l in c:
                if l in fixed:
                    sat[:] = True
                    break
                if -l in fixed:
                    continue
                val = (idx >> bit[abs(l)]) & 1
                sat |= val == (1 if l > 0 else 0)
            ok &= sat
        total += int(ok.sum())
    return total


def _assign(clauses, bit: int, positive: bool):
    """Set one variable and unit-propagate over ``(pos, neg)`` bitmask clauses.

    Returns ``(rest, assigned_mask)`` or ``None`` on conflict.
    """
    assigned = 0
    pending = [(bit, positive)]
    cur = clauses
    while pending:
        b, val = pending.pop()
        if assigned & b:
            continue
        assigned |= b
        nxt = []
        for pos, neg in cur:
            if val:
                if pos & b:
                    continue
                neg &= ~b
            else:
                if neg & b:
                    continue
                pos &= ~b
            m = pos | neg
            if not m:
                return None
            if not m & (m - 1):
                if pending and any(pb == m and pv != bool(pos) for pb, pv in pending):
                    return None
                pending.append((m, bool(pos)))
            nxt.append((pos, neg))
        cur = nxt
    return cur, assigned


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _components(clauses):
    comps: list[list] = []  # [varmask, clauses]
    for cl in clauses:
        m = cl[0] | cl[1]
        hit = [c for c in comps if c[0] & m]
        if not hit:
            comps.append([m, [cl]])
            continue
        base = hit[0]
        base[0] |= m
        base[1].append(cl)
        for other in hit[1:]:
            base[0] |= other[0]
            base[1].extend(other[1])
            comps.remove(other)
    return comps


def _count(clauses, scope: int, cache: dict) -> int:
    """Models of ``clauses`` over the variables in bitmask ``scope``."""
    if not clauses:
        return 1 << _popcount(scope)
    key = frozenset(clauses)
    hit = cache.get((key, scope))
    if hit is not None:
        return hit
    comps = _components(clauses)
    covered = 0
    for m, _ in comps:
        covered |= m
    result = 1 << _popcount(scope & ~covered)
    if len(comps) > 1:
        for m, cls in comps:
            result *= _count(cls, m, cache)
            if result == 0:
                break
    else:
        occ = Counter()
        for pos, neg in clauses:
            m = pos | neg
            while m:
                low = m & -m
                occ[low] += 1
                m ^= low
        bit = max(occ, key=lambda b: (occ[b], -b.bit_length()))
        total = 0
        for val in (True, False):
            branch = _assign(clauses, bit, val)
            if branch is None:
                continue
            rest, assigned = branch
            total += _count(rest, covered & ~assigned, cache)
        result *= total
    cache[(key, scope)] = result
    return result


def exact_count(formula: CnfFormula, max_vars: int | None = DEFAULT_EXACT_BUDGET) -> int:
    """Exact model count by DPLL-style search with component decomposition and caching.

    Raises :class:`BudgetExceeded` when more than ``max_vars`` variables remain
    constrained after unit propagation.
    """
    try:
        residual, _ = condition_and_propagate(formula)
    except Conflict:
        return 0
    active = residual.occurring()
    if max_vars is not None and len(active) > max_vars:
        raise BudgetExceeded(
            f"{len(active)} constrained variables exceed the exact-count budget of {max_vars}; "
            "fix more variables first or raise the budget"
        )
    free = len(residual.unassigned()) - len(active)
    clauses = []
    for c in residual.clauses:
        pos = neg = 0
        for l in c:
            if l > 0:
                pos |= 1 << l
            else:
                neg |= 1 << -l
        clauses.append((pos, neg))
    scope = 0
    for v in active:
        scope |= 1 << v
    return _count(clauses, scope, {}) << free


_COUNT_PATTERNS = (
    re.compile(r"^s\s+mc\s+(\d+)", re.M),
    re.compile(r"^c\s+s\s+exact\s+\S+\s+int\s+(\d+)", re.M),
    re.compile(r"solutions?\D*?(\d+)\s*$", re.M | re.I),
)


def external_count(formula: CnfFormula, command: Sequence[str], timeout: float | None = None) -> int:
    """Count with an external model counter.

    The formula is written to a temporary DIMACS file whose path is appended
    to ``command``. The count is read from stdout: an ``s mc N`` line, a
    ``c s exact ... int N`` line, a line ending in ``solutions N``, or
    failing those the last integer printed.
    """
    fd, path = tempfile.mkstemp(suffix=".cnf")
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            fh.write(format_dimacs(formula))
        proc = subprocess.run(
            [*command, path], capture_output=True, text=True, timeout=timeout, check=False
        )
    finally:
        os.unlink(path)
    out = proc.stdout
    for pat in _COUNT_PATTERNS:
        m = pat.findall(out)
        if m:
            return int(m[-1])
    ints = re.findall(r"\b\d+\b", out)
    if not ints:
        raise RuntimeError(f"external counter printed no count (exit code {proc.returncode})")
    return int(ints[-1])
