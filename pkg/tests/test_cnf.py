import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from countbp.bp import run_bp
from countbp.cnf import (
    CnfFormula,
    brute_force_count,
    clause_table,
    condition_and_propagate,
    exact_count,
    external_count,
    format_dimacs,
    parse_dimacs,
    to_factor_graph,
)
from countbp.errors import BudgetExceeded, Conflict, ContradictionError, ParseError

from graphgen import disjoint_copies, random_cnf


def cnf(n, *clauses):
    return CnfFormula.from_clauses(n, clauses)


# --- DIMACS -------------------------------------------------------------------------

def test_parse_simple():
    f = parse_dimacs("p cnf 2 1\n1 2 0")
    assert f.num_vars == 2 and f.clauses == ((1, 2),)


def test_parse_comments_multiline_clauses_and_end_marker():
    text = "c hello\np cnf 3 2\n1 -2\n 0 3\n0\n%\n0\n"
    assert parse_dimacs(text).clauses == ((1, -2), (3,))


def test_parse_dedupes_and_drops_tautologies():
    f = parse_dimacs("p cnf 2 2\n1 1 2 0\n1 -1 0\n")
    assert f.clauses == ((1, 2),)
    assert f.tautologies_removed == 1


@pytest.mark.parametrize(
    "text, line",
    [
        ("p cnf 1 1\n2 0", 2),
        ("1 2 0\n", 1),
        ("p cnf x 1\n", 1),
        ("p cnf 2 1\n1 a 0\n", 2),
        ("p dnf 2 1\n", 1),
    ],
)
def test_parse_errors_with_lines(text, line):
    with pytest.raises(ParseError) as info:
        parse_dimacs(text)
    assert info.value.line == line


@pytest.mark.parametrize("text", ["", "p cnf 2 1\n1 2\n", "p cnf 2 2\n1 2 0\n"])
def test_parse_errors_without_lines(text):
    with pytest.raises(ParseError):
        parse_dimacs(text)


def test_dimacs_round_trip_is_bit_exact():
    text = "p cnf 4 3\n1 -3 0\n-2 4 1 0\n3 0\n"
    assert format_dimacs(parse_dimacs(text)) == text


def test_residual_writes_fixed_literals_as_units():
    res, _ = condition_and_propagate(cnf(3, (1, 2), (-1, 3)), -1)
    again = parse_dimacs(format_dimacs(res))
    assert again.clauses == ((-1,), (2,))
    assert brute_force_count(CnfFormula.from_clauses(3, again.clauses)) == brute_force_count(res) == 2


# --- factor graph ----------------------------------------------------------------------

def test_clause_table_zero_only_at_falsifying_row():
    t = clause_table((1, -2))
    np.testing.assert_array_equal(t, [[1.0, 0.0], [1.0, 1.0]])


def test_empty_clause_is_a_contradiction():
    with pytest.raises(ContradictionError):
        clause_table(())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_factor_graph_preserves_models(seed):
    f = random_cnf(np.random.default_rng(seed), max_vars=8)
    g = to_factor_graph(f)
    joint = np.ones((2,) * f.num_vars)
    for fac in g.factors:
        shape = [1] * f.num_vars
        for a in fac.args:
            shape[a] = 2
        joint = joint * np.transpose(fac.potential.table, np.argsort(fac.args)).reshape(shape)
    assert int((joint > 0).sum()) == brute_force_count(f)


def test_bp_runs_on_clause_graph():
    beliefs, stats = run_bp(to_factor_graph(cnf(2, (1, 2))))
    np.testing.assert_allclose(beliefs[0], [1 / 3, 2 / 3], atol=1e-8)


# --- propagation -------------------------------------------------------------------------

def test_propagation_example():
    res, implied = condition_and_propagate(cnf(4, (1,), (-1, 2), (3, 4)))
    assert res.clauses == ((3, 4),)
    assert res.fixed == {1, 2}
    assert implied == (1, 2)


def test_condition_satisfies_clause():
    res, implied = condition_and_propagate(cnf(2, (1, 2)), 1)
    assert res.clauses == () and implied == ()
    assert res.fixed == {1}


def test_conflict():
    with pytest.raises(Conflict):
        condition_and_propagate(cnf(1, (1,), (-1,)))


def test_assigned_variable_rejected():
    res, _ = condition_and_propagate(cnf(2, (1, 2)), 1)
    with pytest.raises(ValueError):
        condition_and_propagate(res, -1)


# --- counting ---------------------------------------------------------------------------------

def test_brute_force_examples():
    assert brute_force_count(cnf(2, (1, 2))) == 3
    assert brute_force_count(cnf(5)) == 32
    # x1=F forces x2, x1=T forces x3; one free variable either way
    assert brute_force_count(cnf(3, (1, 2), (-1, 3))) == 4


def test_brute_force_limit():
    with pytest.raises(ValueError):
        brute_force_count(cnf(27))


def test_exact_count_examples():
    assert exact_count(cnf(5, (1,), (-1, 2))) == 8
    assert exact_count(cnf(2, (1,), (-1,))) == 0
    assert exact_count(cnf(3, (1, 2), (-1, 3))) == 4


def test_exact_count_budget():
    f = cnf(6, (1, 2), (3, 4), (5, 6))
    with pytest.raises(BudgetExceeded):
        exact_count(f, max_vars=5)
    assert exact_count(f, max_vars=6) == 27


def test_exact_count_scales_past_brute_force():
    # 40 disjoint copies of (x or y): 3**40 models
    f = disjoint_copies(cnf(2, (1, 2)), 40)
    assert exact_count(f, max_vars=None) == 3**40


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_matches_brute_force(seed):
    f = random_cnf(np.random.default_rng(seed), max_vars=14)
    assert exact_count(f) == brute_force_count(f)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conditioning_identity(seed):
    rng = np.random.default_rng(seed)
    f = random_cnf(rng, max_vars=12)
    u = int(rng.integers(1, f.num_vars + 1))
    total = 0
    for lit in (u, -u):
        try:
            res, _ = condition_and_propagate(f, lit)
        except Conflict:
            continue
        total += brute_force_count(res)
    assert total == brute_force_count(f)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_disjoint_union_multiplies(seed, k):
    base = random_cnf(np.random.default_rng(seed), max_vars=5)
    assert exact_count(disjoint_copies(base, k)) == brute_force_count(base) ** k


def test_external_counter(tmp_path):
    script = tmp_path / "counter.py"
    script.write_text(
        "import sys\n"
        "from countbp.cnf import read_dimacs, exact_count\n"
        "print('c fake counter')\n"
        "print('s mc', exact_count(read_dimacs(sys.argv[1])))\n"
    )
    f = cnf(3, (1, 2), (-1, 3))
    assert external_count(f, [sys.executable, str(script)]) == 4
    res, _ = condition_and_propagate(f, 1)
    assert external_count(res, [sys.executable, str(script)]) == 2
