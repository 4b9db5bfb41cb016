import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpduality import plq
from rpduality.plq import ImproperFunctionError, PLQFunction
from rpduality.tree import (
    NEVER, ScenarioTree, adapted_indicator_rules, count_stopping_times, enumerate_stopping_times,
    is_adapted, optional_projection, project_integrand, r1_norm, r1_norm_enumerated, snell_envelope,
    verify_projection_identity,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
BINARY = ScenarioTree.from_branching([2], mu=0.5)


def brute_projection(tree, raw):
    """Average the raw values over leaf-paths through each node, by loops."""
    out = np.zeros((tree.n_nodes, raw.shape[2]))
    for n in range(tree.n_nodes):
        t = tree.time[n]
        ls = [l for l in range(tree.n_leaves) if tree.paths[l, t] == n]
        w = np.array([tree.leaf_prob[l] for l in ls])
        out[n] = (w[:, None] * raw[ls, t]).sum(0) / w.sum()
    return out


def test_tree_structure():
    t = ScenarioTree.from_branching([2, 3], mu=0.25)
    assert t.n_nodes == 1 + 2 + 6 and t.n_leaves == 6 and t.horizon == 2
    assert np.all(t.parent[1:] < np.arange(1, t.n_nodes))
    assert t.leaf_prob.sum() == pytest.approx(1.0)
    for l, leaf in enumerate(t.leaves):
        assert t.paths[l, -1] == leaf


def test_tree_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        ScenarioTree([-1, 0, 0], [1.0, 0.7, 0.7], [1.0, 1.0, 1.0])


def test_projection_examples():
    const = np.full((2, 2, 1), 4.0)
    assert np.all(optional_projection(BINARY, const) == 4.0)
    raw = np.zeros((2, 2, 1))
    raw[1, 0, 0] = 2.0
    assert optional_projection(BINARY, raw)[0, 0] == 1.0
    v = np.array([[1.0], [2.0], [3.0]])
    assert np.array_equal(optional_projection(BINARY, BINARY.expand(v)), v)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_projection_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    tree = ScenarioTree.random(rng, max_periods=4, max_leaves=12)
    raw = rng.normal(size=(tree.n_leaves, tree.horizon + 1, 2))
    got = optional_projection(tree, raw)
    assert np.allclose(got, brute_projection(tree, raw), atol=1e-13)
    assert is_adapted(tree, tree.expand(got))


def test_adaptedness():
    assert is_adapted(BINARY, np.ones((2, 2, 1)))
    raw = np.zeros((2, 2, 1))
    raw[:, 0, 0] = [0.0, 1.0]
    assert not is_adapted(BINARY, raw)


def test_one_period_binary_has_five_stopping_times():
    taus = enumerate_stopping_times(BINARY)
    assert len(taus) == 5 == count_stopping_times(BINARY) == adapted_indicator_rules(BINARY)
    # stop at 0 is shared by both paths
    assert [0, 0] in taus.tolist() and [NEVER, NEVER] in taus.tolist()


def test_stopping_time_count_oracle():
    # N(node) = 1 + prod over children N(child) (stop here or continue)
    for branching in ([2], [3], [2, 2], [2, 3], [1, 2, 2]):
        tree = ScenarioTree.from_branching(branching)

        def count(n):
            kids = tree.children[n]
            return 1 + (int(np.prod([count(k) for k in kids])) if kids else 1)

        assert count_stopping_times(tree) == count(0)


def test_r1_norm_examples():
    line = ScenarioTree.from_branching([1, 1])
    assert r1_norm(line, np.array([[1.0], [-3.0], [2.0]])) == 3.0
    assert r1_norm(BINARY, np.array([[0.0], [1.0], [-1.0]])) == 1.0


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_snell_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    tree = ScenarioTree.random(rng, max_periods=4, max_leaves=10)
    v = rng.normal(size=(tree.n_nodes, 1))
    assert abs(r1_norm(tree, v) - r1_norm_enumerated(tree, v)) <= 1e-12
    U = snell_envelope(tree, np.abs(v))
    # supermartingale dominating |v|
    assert np.all(U >= np.abs(v[:, 0]) - 1e-15)
    assert np.all(U >= tree.conditional_expectation(U) - 1e-12)


def test_r1_norm_is_a_norm():
    rng = np.random.default_rng(3)
    for _ in range(30):
        tree = ScenarioTree.random(rng, max_periods=3, max_leaves=6)
        a, b = rng.normal(size=(2, tree.n_nodes, 2))
        assert r1_norm(tree, a + b) <= r1_norm(tree, a) + r1_norm(tree, b) + 1e-12
        assert r1_norm(tree, -2.5 * a) == pytest.approx(2.5 * r1_norm(tree, a))
    assert r1_norm(BINARY, np.zeros((3, 2))) == 0.0


def test_projection_identity_examples():
    rng = np.random.default_rng(0)
    det = np.tile(rng.normal(size=(1, 2, 1)), (2, 1, 1))
    for tau in enumerate_stopping_times(BINARY):
        assert verify_projection_identity(BINARY, det, tau) <= 1e-15
    raw = np.zeros((2, 2, 1))
    raw[1, 0, 0] = 2.0
    assert verify_projection_identity(BINARY, raw, np.array([0, 0])) <= 1e-15


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_projection_identity_random(seed):
    rng = np.random.default_rng(seed)
    tree = ScenarioTree.random(rng, max_periods=3, max_leaves=8)
    raw = rng.normal(size=(tree.n_leaves, tree.horizon + 1, 1))
    taus = enumerate_stopping_times(tree)
    for tau in taus[rng.choice(len(taus), size=min(10, len(taus)), replace=False)]:
        assert verify_projection_identity(tree, raw, tau) <= 1e-12


def test_project_integrand_examples():
    half = PLQFunction.quadratic(0.5)
    f1, f2 = plq.shift(half, -1.0), plq.shift(half, 1.0)
    raw = [[[f1], [f1]], [[f2], [f2]]]
    h = project_integrand(BINARY, raw)
    want = PLQFunction(-np.inf, np.inf, [], [(0.5, 0.0, 0.5)])
    assert plq.max_probe_difference(h[0].coords[0], want) <= 1e-12
    assert plq.max_probe_difference(h[1].coords[0], f1) <= 1e-12
    raw = [[[PLQFunction.indicator(0, 2)]] * 2, [[PLQFunction.indicator(1, 3)]] * 2]
    h = project_integrand(BINARY, raw)
    assert plq.max_probe_difference(h[0].coords[0], PLQFunction.indicator(1, 2)) <= 1e-12
    raw = [[[PLQFunction.indicator(0, 1)]] * 2, [[PLQFunction.indicator(2, 3)]] * 2]
    with pytest.raises(ImproperFunctionError):
        project_integrand(BINARY, raw)


def test_enumeration_is_capped():
    big = ScenarioTree.from_branching([2] * 5)
    with pytest.raises(ValueError):
        enumerate_stopping_times(big)


def test_stopping_times_are_adapted_rules():
    tree = ScenarioTree.from_branching([2, 2])
    taus = enumerate_stopping_times(tree)
    assert len({tuple(t) for t in taus}) == len(taus)
    for tau in taus:
        # two paths through the same node before stopping must agree on stopping there
        for l, m in itertools.combinations(range(tree.n_leaves), 2):
            for i in range(tree.horizon + 1):
                if tree.paths[l, i] != tree.paths[m, i]:
                    break
                assert (tau[l] == i) == (tau[m] == i)
