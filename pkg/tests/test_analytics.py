from itertools import combinations_with_replacement

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bartviz import analytics as A
from bartviz.core import ColumnMeta, Dataset, IterationDraw, PosteriorEnsemble, TreeDraw

from conftest import hand_data, hand_ensemble


def brute_proportions(ens):
    """Enumerate every splitting rule and every parent-child pair directly
    from the nested form of each retained tree."""
    p = ens.p
    pairs = list(combinations_with_replacement(range(p), 2))
    zs, ws = [], []
    for it in ens.retained:
        vars_, pc = [], []

        def walk(spec, parent_var):
            if not isinstance(spec, tuple):
                return
            v, _, left, right = spec
            vars_.append(v)
            if parent_var is not None:
                pc.append(tuple(sorted((parent_var, v))))
            walk(left, v)
            walk(right, v)

        for t in it.trees:
            walk(t.nested(), None)
        if vars_:
            zs.append([vars_.count(r) / len(vars_) for r in range(p)])
        if pc:
            ws.append([pc.count(q) / len(pc) for q in pairs])
    return np.array(zs), np.array(ws), pairs


def test_hand_ensemble_matches_enumeration():
    ens = hand_ensemble()
    imp = A.inclusion_importance(ens)
    inter = A.inclusion_interaction(ens)
    Z, W, pairs = brute_proportions(ens)
    np.testing.assert_array_equal(imp.per_iter, Z)
    np.testing.assert_array_equal(inter.per_iter, W)
    assert imp.n_excluded == 1 and inter.n_excluded == 2
    assert list(imp.vimp) == [0.5, 0.25, 0.25]
    assert inter.vint(0, 1) == 1.0


def _ens(iters, p=2):
    cols = tuple(ColumnMeta(f"x{i + 1}") for i in range(p))
    m = len(iters[0])
    its = tuple(IterationDraw(tuple(TreeDraw.from_nested(s, tree_index=j + 1) for j, s in enumerate(ts)))
                for ts in iters)
    return PosteriorEnsemble(its, 0, m, "regression", cols)


def test_importance_worked_example():
    # iteration 1: tree A splits x1 twice and x2 once, tree B splits x2 once; iteration 2: one x1 split
    tree_a = (0, 0.5, (0, 0.2, 0.0, 0.0), (1, 0.5, 0.0, 0.0))
    tree_b = (1, 0.5, 0.0, 0.0)
    ens = _ens([[tree_a, tree_b], [(0, 0.5, 0.0, 0.0), 0.0]])
    imp = A.inclusion_importance(ens)
    np.testing.assert_allclose(imp.per_iter, [[0.5, 0.5], [1.0, 0.0]])
    np.testing.assert_allclose(imp.vimp, [0.75, 0.25])


def test_single_split_and_empty_posterior():
    ens = _ens([[(2, 0.5, 0.0, 0.0)]], p=5)
    np.testing.assert_array_equal(A.inclusion_importance(ens).vimp, [0, 0, 1, 0, 0])
    with pytest.raises(A.EmptyPosteriorError):
        A.inclusion_importance(_ens([[0.0], [0.0]]))


def test_interaction_single_pair_and_depth_one():
    ens = _ens([[(0, 0.5, (1, 0.5, 0.0, 0.0), 0.0)]])
    assert A.inclusion_interaction(ens).vint(0, 1) == 1.0
    flat = A.inclusion_interaction(_ens([[(0, 0.5, 0.0, 0.0), (1, 0.3, 0.0, 0.0)]]))
    assert flat.n_retained == 0 and flat.n_excluded == 1
    np.testing.assert_array_equal(flat.matrix(), 0.0)


def test_cv_infinite_when_mean_zero():
    imp = A.inclusion_importance(hand_ensemble())
    assert np.all(np.isfinite(imp.summary.cv))
    ens = _ens([[(0, 0.5, 0.0, 0.0)], [(0, 0.4, 0.0, 0.0)]])
    cv = A.inclusion_importance(ens).summary.cv
    assert cv[0] == 0.0 and cv[1] == np.inf


def test_factor_aggregation_preserves_sums():
    cols = (ColumnMeta("x"), ColumnMeta("g=a", "dummy", "g", "a"), ColumnMeta("g=b", "dummy", "g", "b"))
    t1 = (0, 0.5, (1, 0.5, 0.0, 0.0), (2, 0.5, 0.0, 0.0))
    t2 = (2, 0.5, (0, 0.2, 0.0, 0.0), 0.0)
    its = tuple(IterationDraw((TreeDraw.from_nested(s),)) for s in (t1, t2))
    ens = PosteriorEnsemble(its, 0, 1, "regression", cols)
    imp = A.inclusion_importance(ens)
    agg = A.aggregate_factors(imp, {"g": [1, 2]})
    assert agg.names == ["x", "g"]
    np.testing.assert_allclose(agg.per_iter.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(agg.per_iter[:, 1], imp.per_iter[:, 1] + imp.per_iter[:, 2])
    inter = A.inclusion_interaction(ens)
    ai = A.aggregate_factors(inter, {"g": ["g=a", "g=b"]})
    np.testing.assert_allclose(ai.per_iter.sum(axis=1), inter.per_iter.sum(axis=1), atol=1e-12)
    # x-g pair collects the three x-level pairs; here (x, g=a), (x, g=b) from t1 and (g=b, x) from t2
    np.testing.assert_allclose(ai.matrix()[0, 1], np.mean([1.0, 1.0]))
    with pytest.raises(KeyError):
        A.aggregate_factors(imp, {"g": ["nope"]})
    # one-level factor is the identity
    same = A.aggregate_factors(imp, {"x": [0]})
    np.testing.assert_array_equal(same.per_iter, imp.per_iter)


def test_tree_type_frequencies():
    ens = _ens([[(0, 0.5, 0.0, 0.0)], [(0, 0.4, 0.0, 0.0)], [(0, 0.1, 1.0, 2.0)], [0.0]])
    assert A.tree_type_frequencies(ens) == [("V0(T,T)", 3), ("S", 1)]
    stumps = _ens([[0.0, 0.0], [0.0, 0.0]])
    assert A.tree_type_frequencies(stumps) == [("S", 4)]
    assert A.tree_type_frequencies(stumps, "iteration", iteration=0) == [("S", 2)]
    with pytest.raises(ValueError):
        A.tree_type_frequencies(stumps, "tree", tree=3)


def test_depth_node_series():
    d, n = A.depth_node_series(_ens([[0.0, 0.0]]))
    assert list(d) == [0] and list(n) == [1]
    d, n = A.depth_node_series(_ens([[(0, 0.5, 0.0, 0.0)]]))
    assert list(d) == [1] and list(n) == [3]
    d, n = A.depth_node_series(_ens([[(0, 0.5, (1, 0.2, 0.0, 0.0), 0.0), 0.0]]))
    assert list(d) == [1.0] and list(n) == [3.0]


def test_kde_normalization_and_peak():
    x = np.full(50, 0.3)
    grid = np.linspace(-1, 2, 2001)
    dens = A.gaussian_kde(x, grid)
    assert grid[np.argmax(dens)] == pytest.approx(0.3, abs=2e-3)
    x = np.random.default_rng(0).uniform(size=250)
    h = A.silverman_bandwidth(x)
    g = np.linspace(-3 * h, 1 + 3 * h, 512)
    f = A.gaussian_kde(x, g, h)
    assert np.trapezoid(f, g) == pytest.approx(1.0, abs=0.01)
    inner = f[(g > 0.1) & (g < 0.9)]
    assert inner.max() / inner.min() < 3


def test_silverman_matches_nrd0():
    x = np.random.default_rng(1).normal(size=100)
    iqr = np.subtract(*np.quantile(x, [0.75, 0.25]))
    expect = 0.9 * min(x.std(ddof=1), iqr / 1.34) * 100 ** -0.2
    assert A.silverman_bandwidth(x) == pytest.approx(expect, rel=1e-14)


def test_split_value_densities_on_fit(small_fit):
    data, rep = small_fit
    dens = A.split_value_densities(rep.ensemble)
    assert len(dens) == data.p
    for s in dens:
        assert np.trapezoid(s.data_density, s.grid) == pytest.approx(1.0, abs=0.01)
        if not s.never_split:
            assert np.trapezoid(s.split_density, s.grid) == pytest.approx(1.0, abs=0.01)


def test_proximity_hand_counts():
    d = hand_data()
    ens = hand_ensemble(d)
    ps = A.proximity_series(ens)
    P0 = ps[0]
    # iteration 0: T1 leaves {0,?}; route by hand
    X = d.X
    t1 = lambda x: 2 if x[0] <= 0.5 and x[1] <= 0.5 else (3 if x[0] <= 0.5 else 4)  # noqa: E731
    leaf = [t1(x) for x in X]
    expect = np.array([[(1 + (leaf[i] == leaf[j])) / 2 for j in range(4)] for i in range(4)])
    np.testing.assert_array_equal(P0, expect)
    np.testing.assert_array_equal(ps[2], np.ones((4, 4)))


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_proximity_symmetric_unit_diagonal(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(12, 2))
    d = Dataset(X, rng.normal(size=12), (ColumnMeta("a"), ColumnMeta("b")))
    trees = (TreeDraw.from_nested((0, float(rng.uniform()), 0.0, (1, float(rng.uniform()), 0.0, 0.0))),
             TreeDraw.from_nested((1, float(rng.uniform()), 0.0, 0.0), tree_index=2))
    ens = PosteriorEnsemble((IterationDraw(trees),), 0, 2, "regression", d.columns, data=d)
    P = A.proximity_series(ens)[0]
    np.testing.assert_array_equal(P, P.T)
    np.testing.assert_array_equal(np.diag(P), 1.0)
    assert np.all((P >= 0) & (P <= 1))


def test_target_iteration_ties_first():
    cols = (ColumnMeta("a"),)
    s = TreeDraw.stump()
    for sig, expect in (([1.2, 0.9, 1.0], 1), ([1.0, 1.0], 0)):
        ens = PosteriorEnsemble(tuple(IterationDraw((s,), v) for v in sig), 0, 1, "regression", cols)
        assert A.target_iteration(ens) == expect


def test_target_iteration_on_fit(small_fit):
    _, rep = small_fit
    k = A.target_iteration(rep.ensemble)
    assert rep.sigma_trace[k] == rep.sigma_trace[rep.ensemble.burn_in:].min()


def test_mixture_quantile_single_component():
    locs = np.array([[0.0, 1.0]])
    q = A._mixture_quantile(locs, np.array([2.0]), 0.975)
    np.testing.assert_allclose(q, locs[0] + 2.0 * stats.norm.ppf(0.975), atol=1e-9)


def test_regression_diagnostics(small_fit):
    data, rep = small_fit
    d = A.regression_diagnostics(rep.ensemble, draws=rep.fitted)
    assert d["correlation"] > 0.8
    assert 0 <= d["coverage"] <= 1 and d["predictive_coverage"] >= d["coverage"]
    assert np.all(d["fitted_lower"] <= d["fitted_upper"])
    assert d["hist_counts"].sum() == data.n
    with pytest.raises(A.WrongTaskError):
        A.classification_diagnostics(rep.ensemble)


def test_classification_diagnostics_hand():
    y = np.array([0.0, 1.0, 0.0, 1.0])
    assert A.auc(y, np.array([0.1, 0.9, 0.2, 0.8])) == 1.0
    rng = np.random.default_rng(0)
    yy = rng.integers(0, 2, 2000).astype(float)
    assert A.auc(yy, rng.uniform(size=2000)) == pytest.approx(0.5, abs=0.1)


def test_classification_diagnostics_threshold():
    cols = (ColumnMeta("a"),)
    X = np.array([[0.0], [1.0]])
    d = Dataset(X, np.array([0.0, 1.0]), cols)
    t = TreeDraw.from_nested((0, 0.5, -0.2533471031357997, 0.2533471031357997))
    ens = PosteriorEnsemble((IterationDraw((t,)),), 0, 1, "classification", cols, data=d)
    out = A.classification_diagnostics(ens)
    np.testing.assert_array_equal(out["confusion"], [[1, 0], [0, 1]])
    assert out["auc"] == 1.0 and out["accuracy"] == 1.0
    with pytest.raises(A.WrongTaskError):
        A.regression_diagnostics(ens)


@given(st.lists(st.lists(st.integers(0, 3), min_size=1, max_size=6), min_size=1, max_size=5))
@settings(max_examples=50, deadline=None)
def test_vimp_sums_to_one(var_lists):
    """Chains of splits on random variables: importance rows sum to one and
    interaction rows sum to one wherever a pair exists."""
    iters = []
    for vs in var_lists:
        spec = 0.0
        for v in reversed(vs):
            spec = (v, 0.5, spec, 0.0)
        iters.append([spec])
    ens = _ens(iters, p=4)
    imp = A.inclusion_importance(ens)
    np.testing.assert_allclose(imp.per_iter.sum(axis=1), 1.0, atol=1e-12)
    assert abs(imp.vimp.sum() - 1.0) <= 1e-12
    if any(len(vs) > 1 for vs in var_lists):
        inter = A.inclusion_interaction(ens)
        np.testing.assert_allclose(inter.per_iter.sum(axis=1), 1.0, atol=1e-12)
