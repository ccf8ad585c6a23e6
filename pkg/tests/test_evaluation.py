from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from listen.algorithms import IterationEntry, RunConfig, RunRecord
from listen.datasets import SyntheticSpec, generate_synthetic, generator_weights
from listen.evaluation import (
    FitConvergenceError,
    FittedUtility,
    average_utility_score,
    concordance,
    fit_logistic,
    fit_utility,
    nar_trace,
    normalized_average_rank,
    simulate_comparisons,
    two_standard_errors,
    unranked_rank,
    utility_trace,
)
from listen.model import AttributeSchema, Dataset, Item, WeightVector, feature_array, minmax_array
from listen.oracle import true_utilities


def _line(values, top):
    schema = (AttributeSchema("x", "numerical", "maximize"),)
    items = tuple(Item(f"i{j}", {"x": float(v)}) for j, v in enumerate(values))
    return Dataset("line", schema, items, ground_truth=(top,))


def _record(ds, selections, algorithm="baseline_random"):
    rec = RunRecord(ds.name, RunConfig(algorithm, iterations=len(selections)))
    rec.entries = [IterationEntry(t, s) for t, s in enumerate(selections, start=1)]
    return rec


def _ranked_dataset(n, m, k=None):
    schema = (AttributeSchema("x", "numerical", "maximize"),)
    items = tuple(Item(f"i{j}", {"x": float(j)}) for j in range(n))
    return Dataset(f"n{n}", schema, items, ground_truth=tuple(f"i{j}" for j in range(m)), tie_group_size=k)


# --------------------------------------------------------------------------- NAR


def test_flights_shape_unranked_value():
    ds = _ranked_dataset(903, 20)
    out = normalized_average_rank("i500", ds)
    assert out.raw_rank == 462 and not out.ranked
    assert Fraction(out.normalized_rank).limit_denominator(10_000) == Fraction(462, 903)
    assert normalized_average_rank("i0", ds).normalized_rank == 1 / 903


def test_fully_ranked_dataset_uses_positions():
    ds = _ranked_dataset(6, 6)
    assert [normalized_average_rank(f"i{j}", ds).raw_rank for j in range(6)] == [1, 2, 3, 4, 5, 6]


def test_nar_bounds_hold():
    for n, m in [(10, 1), (10, 9), (77, 15), (4938, 100)]:
        unranked = unranked_rank(n, m) / n
        assert 0 < unranked <= 1
        assert all(k / n < unranked for k in range(1, m + 1))


def test_nar_tie_group_shares_mean_position():
    ds = _ranked_dataset(50, 10, k=4)
    assert {normalized_average_rank(f"i{j}", ds).raw_rank for j in range(4)} == {2.5}
    assert normalized_average_rank("i4", ds).raw_rank == 5


def test_nar_rejects_foreign_ids():
    with pytest.raises(KeyError):
        normalized_average_rank("zz", _ranked_dataset(5, 2))


def test_nar_trace_follows_record():
    ds = _ranked_dataset(10, 3)
    assert nar_trace(_record(ds, ["i0", "i9"]), ds) == [0.1, 0.7]


# --------------------------------------------------------------------------- concordance


def test_two_se_formula():
    assert two_standard_errors(0.232, 1000) == pytest.approx(0.0267, abs=5e-5)
    assert two_standard_errors(0.0, 1000) == 0.0


def test_single_item_concordance_is_one():
    assert concordance(_line([3.0], "i0"), 200, rng=1).p == 1.0


def test_two_item_concordance_near_half():
    res = concordance(_line([1.0, 0.0], "i0"), 20_000, rng=2)
    assert abs(res.p - 0.5) < 4 * np.sqrt(0.25 / 20_000)


def test_concordance_tie_group_counts_any_member():
    # identical top items tie exactly on every draw
    schema = (AttributeSchema("x", "numerical", "maximize"),)
    items = (Item("a", {"x": 1.0}), Item("b", {"x": 1.0}), Item("c", {"x": 0.0}))
    ds = Dataset("tie", schema, items, ground_truth=("b", "a"), tie_group_size=2)
    res = concordance(ds, 5000, rng=0)
    assert abs(res.p - 0.5) < 0.03
    strict = Dataset("tie", schema, items, ground_truth=("b", "a"))
    assert concordance(strict, 5000, rng=0).p == res.p  # 'b' shares every maximum with 'a'


def test_concordance_raw_and_scaled_agree_when_already_unit():
    ds = _line([0.0, 1.0, 0.25], "i1")
    assert concordance(ds, 500, rng=3).p == concordance(ds, 500, rng=3, normalized=False).p


def test_concordance_needs_numerical():
    schema = (AttributeSchema("c", "categorical"),)
    ds = Dataset("cat", schema, (Item("a", categorical={"c": "x"}),), ground_truth=("a",))
    with pytest.raises(ValueError, match="numerical"):
        concordance(ds)


# --------------------------------------------------------------------------- fit


def test_newton_matches_sklearn():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3000, 4))
    y = (rng.random(3000) < 1 / (1 + np.exp(-(0.3 + x @ [1.0, -2.0, 0.5, 0.0])))).astype(float)
    alpha, w, _, _, ok = fit_logistic(x, y, l2=1e-3)
    ref = LogisticRegression(C=1 / (1e-3 * len(y)), tol=1e-12, max_iter=10_000).fit(x, y)
    assert ok
    np.testing.assert_allclose(w, ref.coef_[0], atol=1e-5)
    assert alpha == pytest.approx(ref.intercept_[0], abs=1e-5)


def test_fit_recovers_two_attribute_generator():
    ds = generate_synthetic(SyntheticSpec(n_items=50, n_numerical=2, directions=["maximize", "minimize"],
                                          true_weights=[2.0, -1.0], n_ranked=10, seed=1))
    fit = fit_utility(ds, rng=1, fit_intercept=False)
    assert np.sign(fit.weights.as_array(("x0", "x1"))).tolist() == [1.0, -1.0]


def test_separable_q1_stays_finite_and_orders_ranked_pairs():
    ds = generate_synthetic(SyntheticSpec(n_items=12, n_numerical=2, n_ranked=4, seed=5))
    fit = fit_utility(ds, num_pairs=2000, q=1.0, rng=0)
    w = fit.weights.as_array(fit.layout)
    assert np.all(np.isfinite(w)) and fit.intercept == 0.0 and fit.converged
    u = fit.item_utilities(ds)
    ranked = [u[ds.index_of(g)] for g in ds.ground_truth]
    assert all(ranked[i] > ranked[j] for i in range(4) for j in range(i + 1, 4))


def test_q1_top_item_recovery_rate():
    hits = 0
    for seed in range(40):
        ds = generate_synthetic(SyntheticSpec(n_items=50, n_numerical=3, n_ranked=10, seed=seed))
        u = fit_utility(ds, q=1.0, rng=seed).item_utilities(ds)
        hits += ds.items[int(np.argmax(u))].id == ds.ground_truth[0]
    assert hits >= 0.95 * 40


def test_comparison_families_and_orientation():
    ds = generate_synthetic(SyntheticSpec(n_items=30, n_numerical=2, n_ranked=6, seed=2))
    raw, _ = feature_array(ds)
    x, y, info = simulate_comparisons(ds, minmax_array(raw), 1000, 1.0, np.random.default_rng(0))
    assert info["ranked_vs_ranked"] == 500 and info["ranked_vs_unranked"] == 500
    assert x.shape == (1000, 2) and y.sum() == 1000


def test_no_unranked_items_uses_only_ranked_pairs(caplog):
    ds = generate_synthetic(SyntheticSpec(n_items=8, n_numerical=2, n_ranked=8, seed=0))
    raw, _ = feature_array(ds)
    _, _, info = simulate_comparisons(ds, minmax_array(raw), 100, 0.9, np.random.default_rng(0))
    assert info == {"ranked_vs_ranked": 100, "ranked_vs_unranked": 0, "tied_pairs": info["tied_pairs"]}
    assert "no unranked items" in caplog.text


def test_tie_group_pairs_have_random_orientation():
    ds = _ranked_dataset(40, 10, k=10)  # every ranked item is tied
    raw, _ = feature_array(ds)
    x, _, info = simulate_comparisons(ds, raw, 4000, 0.95, np.random.default_rng(3))
    rr = x[:2000, 0]
    distinct = rr[rr != 0]
    assert info["tied_pairs"] == distinct.size
    frac_positive = (distinct > 0).mean()
    assert abs(frac_positive - 0.5) < 4 * np.sqrt(0.25 / distinct.size)


def test_non_convergence_carries_partial_fit():
    ds = generate_synthetic(SyntheticSpec(n_items=30, n_numerical=2, n_ranked=6, seed=4))
    with pytest.raises(FitConvergenceError) as info:
        fit_utility(ds, rng=0, max_iter=1)
    assert info.value.partial.iterations == 1 and not info.value.partial.converged


def test_fit_serialisation_round_trip():
    ds = generate_synthetic(SyntheticSpec(n_items=30, n_numerical=2, n_ranked=6, seed=4))
    fit = fit_utility(ds, rng=0)
    assert FittedUtility.from_dict(fit.to_dict()) == fit


# --------------------------------------------------------------------------- AUS


def _scripted_fit(ds):
    layout = tuple(generator_weights(ds).weights)
    return FittedUtility(generator_weights(ds), 0.0, layout, 0, 0.0, True)


def test_aus_two_paths_agree():
    ds = generate_synthetic(SyntheticSpec(n_items=60, n_numerical=3, n_ranked=8, seed=9))
    fit = fit_utility(ds, rng=9)
    rng = np.random.default_rng(0)
    records = [_record(ds, [ds.items[i].id for i in rng.integers(0, 60, size=25)]) for _ in range(50)]
    aus = average_utility_score(records, fit, ds)
    # independent path: score each item directly from its attributes, then average per iteration
    w = fit.weights.weights
    scaled = {it.id: row for it, row in zip(ds.items, minmax_array(feature_array(ds)[0]))}
    layout = fit.layout
    manual = [
        sum(sum(w[k] * scaled[r.entries[t].selected][j] for j, k in enumerate(layout)) for r in records) / 50
        for t in range(25)
    ]
    np.testing.assert_allclose(aus, manual, rtol=0, atol=1e-12)


def test_aus_single_replication_and_constant_selection():
    ds = generate_synthetic(SyntheticSpec(n_items=20, n_numerical=2, n_ranked=5, seed=1))
    fit = _scripted_fit(ds)
    rec = _record(ds, ["s03", "s07", "s03"])
    assert average_utility_score([rec], fit, ds) == utility_trace(rec, fit, ds)
    u = true_utilities(ds, generator_weights(ds))
    same = [_record(ds, ["s05"] * 3) for _ in range(4)]
    assert average_utility_score(same, fit, ds) == [u["s05"]] * 3


def test_aus_is_linear_in_weights():
    ds = generate_synthetic(SyntheticSpec(n_items=20, n_numerical=2, n_ranked=5, seed=1))
    fit = _scripted_fit(ds)
    doubled = FittedUtility(fit.weights.scaled(2.5), 7.0, fit.layout, 0, 0.0, True)
    recs = [_record(ds, ["s01", "s11", "s19"])]
    np.testing.assert_allclose(average_utility_score(recs, doubled, ds),
                               2.5 * np.array(average_utility_score(recs, fit, ds)), rtol=1e-15)


def test_aus_dataset_mismatch():
    ds = generate_synthetic(SyntheticSpec(n_items=20, n_numerical=2, n_ranked=5, seed=1))
    other = _line([1.0, 2.0], "i0")
    with pytest.raises(ValueError, match="record is for"):
        utility_trace(_record(other, ["i0"]), _scripted_fit(ds), ds)


def test_weights_finite_check():
    with pytest.raises(Exception):
        WeightVector({"x": float("inf")})


def test_intercept_free_fit_recovers_generator_ranking():
    # same data as the acceptance recovery check, intercept fixed at 0
    from scipy.stats import kendalltau

    good = 0
    for seed in range(20):
        ds = generate_synthetic(SyntheticSpec(n_items=50, n_numerical=3, n_ranked=10, seed=seed))
        fit = fit_utility(ds, q=0.95, rng=seed, fit_intercept=False)
        true = np.array(list(true_utilities(ds, generator_weights(ds)).values()))
        good += kendalltau(fit.item_utilities(ds), true).statistic >= 0.9
    assert good >= 18
