"""Smokers dynamic Markov logic network: grounding, evidence and FF vs LFOFF runs.

Template clauses (default weights in brackets)::

    !Smokes(x,0)                                     [1.4]
    !Cancer(x,0)                                     [2.3]
    !Friends(x,y,0)                                  [4.6]
    Smokes(x,t) => Cancer(x,t)                       [2.0]
    Friends(x,y,t) => (Smokes(x,t) <=> Smokes(y,t))  [2.0]
    Friends(x,y,t) <=> Friends(x,y,t+1)              [5.0]
    Smokes(x,t) <=> Smokes(x,t+1)                    [5.0]

Each ground clause becomes a factor with value ``exp(w)`` where the clause
holds and ``1`` where it does not. Variable state 1 is true.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bp import BPConfig, ForwardsBackwards, run_bp
from .cbp import run_cbp
from .factor_graph import FactorGraph, Variable, build_graph
from .lifting import compress

DEFAULT_WEIGHTS = (1.4, 2.3, 4.6, 2.0, 2.0, 5.0, 5.0)


@dataclass(frozen=True)
class DmlnSpec:
    num_people: int
    num_timesteps: int
    weights: tuple[float, ...] = DEFAULT_WEIGHTS
    include_reflexive_friends: bool = True

    def __post_init__(self):
        if self.num_people < 1 or self.num_timesteps < 1:
            raise ValueError("num_people and num_timesteps must be >= 1")
        if len(self.weights) != 7 or not all(math.isfinite(w) for w in self.weights):
            raise ValueError("expected 7 finite clause weights")

    def friend_pairs(self) -> list[tuple[int, int]]:
        n = self.num_people
        return [(x, y) for x in range(n) for y in range(n) if self.include_reflexive_friends or x != y]


@dataclass(frozen=True)
class EvidenceSpec:
    fraction: float
    seed: int
    friends_per_person: int = 5

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")


@dataclass
class GroundDmln:
    spec: DmlnSpec
    graph: FactorGraph
    atoms: dict = field(repr=False)  # ("Smokes", x, t) etc. -> variable id
    timestep: tuple = field(repr=False)  # variable id -> t

    def var(self, *atom) -> int:
        return self.atoms[tuple(atom)]

    def cancer_ids(self) -> list[tuple[tuple, int]]:
        return [(a, v) for a, v in self.atoms.items() if a[0] == "Cancer"]


def _table(weight: float, truth) -> np.ndarray:
    """Factor table from a boolean truth table."""
    return np.where(np.asarray(truth, dtype=bool), math.exp(weight), 1.0)


def ground_dmln(spec: DmlnSpec) -> GroundDmln:
    N, T = spec.num_people, spec.num_timesteps
    w = spec.weights
    pairs = spec.friend_pairs()

    # time-major ids: Smokes, Cancer, Friends within each timestep
    atoms, variables, timestep = {}, [], []
    for t in range(T):
        names = [("Smokes", x, t) for x in range(N)] + [("Cancer", x, t) for x in range(N)]
        names += [("Friends", x, y, t) for x, y in pairs]
        for a in names:
            atoms[a] = len(variables)
            variables.append(Variable(len(variables), 2, f"{a[0]}({','.join(map(str, a[1:]))})"))
            timestep.append(t)

    implies = [[True, True], [False, True]]  # a => b over (a, b)
    iff = [[True, False], [False, True]]
    similar = [[[True, True], [True, True]], [[True, False], [False, True]]]  # F => (Sx <=> Sy)

    factors = []
    for x in range(N):
        factors.append(([atoms[("Smokes", x, 0)]], _table(w[0], [True, False])))
    for x in range(N):
        factors.append(([atoms[("Cancer", x, 0)]], _table(w[1], [True, False])))
    for x, y in pairs:
        factors.append(([atoms[("Friends", x, y, 0)]], _table(w[2], [True, False])))
    for t in range(T):
        for x in range(N):
            factors.append(([atoms[("Smokes", x, t)], atoms[("Cancer", x, t)]], _table(w[3], implies)))
        for x, y in pairs:
            fxy = atoms[("Friends", x, y, t)]
            if x == y:
                # Smokes(x,t) <=> Smokes(x,t) is always true
                factors.append(([fxy], _table(w[4], [True, True])))
            else:
                factors.append(
                    ([fxy, atoms[("Smokes", x, t)], atoms[("Smokes", y, t)]], _table(w[4], similar))
                )
    for t in range(T - 1):
        for x, y in pairs:
            factors.append(
                ([atoms[("Friends", x, y, t)], atoms[("Friends", x, y, t + 1)]], _table(w[5], iff))
            )
        for x in range(N):
            factors.append(([atoms[("Smokes", x, t)], atoms[("Smokes", x, t + 1)]], _table(w[6], iff)))
    graph = build_graph(variables, [(a, t.ravel()) for a, t in factors])
    return GroundDmln(spec, graph, atoms, tuple(timestep))


def expected_sizes(spec: DmlnSpec) -> tuple[int, int]:
    """(variables, factors) of the grounding, by counting formula."""
    N, T = spec.num_people, spec.num_timesteps
    P = len(spec.friend_pairs())
    variables = 2 * N * T + P * T
    factors = (N + N + P) + N * T + P * T + (P + N) * (T - 1)
    return variables, factors


def generate_evidence(spec: DmlnSpec, ev: EvidenceSpec, ground: GroundDmln | None = None) -> dict[int, int]:
    """Observe smoking and a few friendships for a random subset of people.

    Each observed person gets one random timestep; their Smokes atom there
    is set to a random value and ``friends_per_person`` random friendships
    at that timestep are observed true. Nothing else is observed.
    """
    N, T = spec.num_people, spec.num_timesteps
    k = ev.friends_per_person
    n_obs = math.ceil(ev.fraction * N - 1e-12)
    if n_obs and k > N - 1:
        raise ValueError(f"cannot pick {k} friends among {N - 1} other people")
    ground = ground or ground_dmln(spec)
    rng = np.random.default_rng(ev.seed)
    people = sorted(int(p) for p in rng.choice(N, size=n_obs, replace=False))
    evidence = {}
    for x in people:
        t = int(rng.integers(T))
        evidence[ground.var("Smokes", x, t)] = int(rng.integers(2))
        others = [y for y in range(N) if y != x]
        for y in sorted(int(v) for v in rng.choice(others, size=k, replace=False)):
            evidence[ground.var("Friends", x, y, t)] = 1
    return evidence


@dataclass
class ComparisonReport:
    fraction: float
    seed: int
    edges_ff: int
    edges_lfoff: int
    messages_ff: int
    messages_lfoff: int
    max_belief_diff: float
    cancer_ff: dict = field(repr=False)
    cancer_lfoff: dict = field(repr=False)

    @property
    def ratio_edges(self) -> float:
        return self.edges_lfoff / self.edges_ff if self.edges_ff else 1.0

    @property
    def ratio_messages(self) -> float:
        return self.messages_lfoff / self.messages_ff if self.messages_ff else 1.0

    def row(self) -> dict:
        return {
            "r": self.fraction,
            "seed": self.seed,
            "edges_ff": self.edges_ff,
            "edges_lfoff": self.edges_lfoff,
            "messages_ff": self.messages_ff,
            "messages_lfoff": self.messages_lfoff,
            "ratio_edges": self.ratio_edges,
            "ratio_messages": self.ratio_messages,
        }


def run_comparison(
    spec: DmlnSpec,
    ev: EvidenceSpec,
    sweeps: int = 1,
    damping: float = 0.0,
    mode: str = "commutative",
    agreement: float = 1e-6,
    ground: GroundDmln | None = None,
) -> ComparisonReport:
    """Factored frontier (BP, forwards-backwards by timestep) vs its lifted version.

    Both engines run exactly ``sweeps`` forwards-backwards sweeps. Raises
    ``AssertionError`` if any Cancer belief differs by more than ``agreement``.
    """
    ground = ground or ground_dmln(spec)
    evidence = generate_evidence(spec, ev, ground)
    config = BPConfig(
        damping=damping, tolerance=1e-300, max_sweeps=sweeps, schedule=ForwardsBackwards(ground.timestep)
    )
    b_ff, s_ff = run_bp(ground.graph, evidence, config)
    cg = compress(ground.graph, evidence, mode=mode, layer_of=ground.timestep)
    b_lf, s_lf = run_cbp(cg, config)

    cancer = ground.cancer_ids()
    label = lambda a: f"{a[0]}({a[1]},{a[2]})"
    ff = {label(a): float(b_ff[v][1]) for a, v in cancer}
    lf = {label(a): float(b_lf[v][1]) for a, v in cancer}
    diff = max((abs(ff[k] - lf[k]) for k in ff), default=0.0)
    if diff > agreement:
        raise AssertionError(f"FF and LFOFF Cancer beliefs differ by {diff:.3g}")
    return ComparisonReport(
        ev.fraction, ev.seed, s_ff.edges, s_lf.edges, s_ff.messages, s_lf.messages, diff, ff, lf
    )
