import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from countbp.bp import (
    BPConfig,
    ForwardsBackwards,
    MessageStore,
    belief,
    factor_to_variable_message,
    iterate_bp,
    run_bp,
    variable_to_factor_message,
)
from countbp.cbp import (
    cluster_belief,
    cluster_factor_to_variable_message,
    cluster_variable_to_factor_message,
    iterate_cbp,
    run_cbp,
)
from countbp.factor_graph import build_graph
from countbp.lifting import compress

from graphgen import random_symmetric_graph, random_tree

SYM = [1.0, 2.0, 2.0, 5.0]


def chain():
    return build_graph([2, 2, 2], [([0, 1], SYM), ([2, 1], SYM)])


def node_of(cg, var):
    return cg.var_node[var]


def edge_to(cg, node):
    (i,) = cg.node_edges(node)
    return cg.edges[i]


def test_chain_b_message_uses_count_minus_one():
    cg = compress(chain())
    b = node_of(cg, 1)
    e = edge_to(cg, b)
    assert e.count == 2
    store = MessageStore()
    store[((e.factor, e.position), b)] = np.array([0.3, 0.7])
    out = cluster_variable_to_factor_message(store, cg, b, (e.factor, e.position))
    np.testing.assert_allclose(out, [0.3, 0.7])


def test_count_three_raises_to_second_power():
    g = build_graph([2] * 4, [([0, i], SYM) for i in range(1, 4)])
    cg = compress(g)
    hub = node_of(cg, 0)
    e = edge_to(cg, hub)
    assert e.count == 3
    store = MessageStore()
    store[((e.factor, e.position), hub)] = np.array([0.3, 0.7])
    out = cluster_variable_to_factor_message(store, cg, hub, (e.factor, e.position))
    np.testing.assert_allclose(out, np.array([0.09, 0.49]) / 0.58)
    np.testing.assert_allclose(out[0], 0.15517241379310345)
    # the belief keeps all three copies
    np.testing.assert_allclose(cluster_belief(store, cg, hub), np.array([0.027, 0.343]) / 0.37)


def test_tiny_components_take_the_log_path():
    g = build_graph([2] * 4, [([0, i], SYM) for i in range(1, 4)])
    cg = compress(g)
    hub = node_of(cg, 0)
    e = edge_to(cg, hub)
    store = MessageStore()
    store[((e.factor, e.position), hub)] = np.array([1e-310, 1.0])
    out = cluster_belief(store, cg, hub)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 1.0])


def test_unary_clusterfactor_message():
    g = build_graph([2, 2], [([0], [3, 1]), ([1], [3, 1])])
    cg = compress(g)
    assert len(cg.factors) == 1
    e = edge_to(cg, 0)
    out = cluster_factor_to_variable_message(MessageStore(), cg, (e.factor, e.position), e.node)
    np.testing.assert_allclose(out, [0.75, 0.25])


def test_chain_factor_message_matches_ground():
    g = chain()
    cg = compress(g)
    rng = np.random.default_rng(0)
    m_b = rng.dirichlet([1, 1])
    ground, lifted = MessageStore(), MessageStore()
    ground[(1, (0, 1))] = m_b
    b = node_of(cg, 1)
    eb = edge_to(cg, b)
    lifted[(b, (eb.factor, eb.position))] = m_b
    a = node_of(cg, 0)
    ea = edge_to(cg, a)
    np.testing.assert_allclose(
        cluster_factor_to_variable_message(lifted, cg, (ea.factor, ea.position), a),
        factor_to_variable_message(ground, g, (0, 0), 0),
    )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_singleton_clusters_reduce_to_plain_messages(seed):
    rng = np.random.default_rng(seed)
    g = random_tree(rng)
    cg = compress(g, mode="positional")
    if len(cg.nodes) != g.num_variables or len(cg.factors) != g.num_factors:
        return
    ground, lifted = MessageStore(), MessageStore()
    for f in g.factors:
        cf = cg.factor_cluster[f.id]
        for p, v in enumerate(f.args):
            m = rng.dirichlet(np.ones(g.cardinalities[v]))
            ground[((f.id, p), v)] = m
            lifted[((cf, p), cg.var_node[v])] = m
            m = rng.dirichlet(np.ones(g.cardinalities[v]))
            ground[(v, (f.id, p))] = m
            lifted[(cg.var_node[v], (cf, p))] = m
    for f in g.factors:
        cf = cg.factor_cluster[f.id]
        for p, v in enumerate(f.args):
            n = cg.var_node[v]
            np.testing.assert_allclose(
                cluster_variable_to_factor_message(lifted, cg, n, (cf, p)),
                variable_to_factor_message(ground, g, v, (f.id, p)),
            )
            np.testing.assert_allclose(
                cluster_factor_to_variable_message(lifted, cg, (cf, p), n),
                factor_to_variable_message(ground, g, (f.id, p), v),
            )
    for v in range(g.num_variables):
        np.testing.assert_allclose(cluster_belief(lifted, cg, cg.var_node[v]), belief(ground, g, v))


@pytest.mark.parametrize("evidence", [{}, {1: 1}])
def test_chain_run_matches_bp(evidence):
    g = chain()
    b_bp, _ = run_bp(g, evidence)
    b_cbp, _ = run_cbp(compress(g, evidence))
    np.testing.assert_allclose(np.array(b_cbp), np.array(b_bp), atol=1e-9)


def _lockstep(g, ev, config, mode="commutative", layer_of=None):
    cg = compress(g, ev, mode=mode, layer_of=layer_of)
    steps = 0
    for (b1, s1), (b2, s2) in zip(iterate_bp(g, ev, config), iterate_cbp(cg, config)):
        for x, y in zip(b1, b2):
            np.testing.assert_allclose(y, x, atol=1e-9, rtol=0)
        assert s2.messages <= s1.messages
        if len(cg.edges) == g.num_edges:
            assert s2.messages == s1.messages
        else:
            assert s2.messages < s1.messages
        steps += 1
    assert steps == config.max_sweeps or s1.converged


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["commutative", "positional"]), st.sampled_from([0.0, 0.5]))
def test_lockstep_flooding(seed, mode, damping):
    g, ev = random_symmetric_graph(np.random.default_rng(seed))
    _lockstep(g, ev, BPConfig(damping=damping, tolerance=1e-300, max_sweeps=12), mode)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lockstep_forwards_backwards(seed):
    rng = np.random.default_rng(seed)
    g, ev = random_symmetric_graph(rng)
    layers = tuple(int(x) for x in rng.integers(0, 3, size=g.num_variables))
    config = BPConfig(damping=0.0, tolerance=1e-300, max_sweeps=6, schedule=ForwardsBackwards(layers))
    _lockstep(g, ev, config, layer_of=layers)


def test_schedule_layers_must_match_compression():
    g = chain()
    config = BPConfig(schedule=ForwardsBackwards((0, 1, 2)))
    with pytest.raises(ValueError, match="layer"):
        run_cbp(compress(g), config)
