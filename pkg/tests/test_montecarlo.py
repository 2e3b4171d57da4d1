import numpy as np
import pytest
from structured_cases import CASES, build

from ordersense import (
    DegenerateModelError,
    EvaluationError,
    MonteCarloSobol,
    SobolEstimate,
    Uniform,
    decompose,
    estimate_indices,
    significant_digits,
)
from ordersense.models import VaRModel
from ordersense.montecarlo import bootstrap_ci, draw_pick_freeze


def product(X):
    return X[:, 0] * X[:, 1]


def first_only(X):
    return X[:, 0]


U01 = [Uniform(0, 1), Uniform(0, 1)]


def test_inert_input():
    est = MonteCarloSobol(n_samples=20_000, n_bootstrap=500, seed=3).fit(first_only, U01)
    assert est.total_[1] == 0.0
    assert est.first_order_[0] == pytest.approx(1.0, abs=0.03)
    assert est.total_[0] == pytest.approx(1.0, abs=0.03)


def test_estimate_list_layout():
    ests = estimate_indices(product, U01, 2000, seed=1, n_bootstrap=500, names=["a", "b"])
    assert [(e.kind, e.name) for e in ests] == [("first", "a"), ("total", "a"), ("first", "b"), ("total", "b")]
    for e in ests:
        assert e.ci95[0] <= e.value <= e.ci95[1]
        assert e.n_samples == 2000 and e.seed == 1
    assert {e.estimator for e in ests} == {"pick-freeze", "jansen"}


def test_evaluation_count():
    calls = []

    def counted(X):
        calls.append(X.shape[0])
        return product(X)

    est = MonteCarloSobol(n_samples=5000, n_bootstrap=0, seed=1, chunk_rows=1000).fit(counted, U01)
    assert sum(calls) == 5000 * 4 == est.n_evaluations_


def test_product_total_index_contains_closed_form():
    est = MonteCarloSobol(n_samples=1_000_000, n_bootstrap=500, seed=42).fit(product, U01)
    lo, hi = est.total_ci_[0]
    assert lo <= 4 / 7 <= hi
    lo, hi = est.first_order_ci_[0]
    assert lo <= 3 / 7 <= hi


def test_var_row_one_total_index():
    """The interval brackets the exact value 0.1983, which rounds to the tabulated 0.20."""
    model = VaRModel()
    laws = [Uniform(0, 1), Uniform(0, 2)]
    exact = decompose(model.structured(), laws).total[0]
    est = MonteCarloSobol(n_samples=1_000_000, n_bootstrap=500, seed=42).fit(model, laws)
    lo, hi = est.total_ci_[0]
    assert lo <= exact <= hi
    assert round(est.total_[0], 2) == 0.20


@pytest.mark.parametrize("n_jobs,chunk", [(1, 4096), (3, 4096), (2, 777), (4, 50_000)])
def test_determinism_across_workers_and_chunks(n_jobs, chunk):
    ref = MonteCarloSobol(n_samples=30_000, n_bootstrap=500, seed=9).fit(product, U01)
    est = MonteCarloSobol(n_samples=30_000, n_bootstrap=500, seed=9, n_jobs=n_jobs, chunk_rows=chunk).fit(product, U01)
    np.testing.assert_array_equal(est.first_order_, ref.first_order_)
    np.testing.assert_array_equal(est.total_ci_, ref.total_ci_)
    np.testing.assert_array_equal(est.sample_.fAB, ref.sample_.fAB)


def test_seed_changes_results():
    a = MonteCarloSobol(n_samples=5000, n_bootstrap=0, seed=1).fit(product, U01)
    b = MonteCarloSobol(n_samples=5000, n_bootstrap=0, seed=2).fit(product, U01)
    assert not np.array_equal(a.first_order_, b.first_order_)


def test_default_seed_from_environment(monkeypatch):
    monkeypatch.setenv("ORDERSENSE_SEED", "77")
    a = MonteCarloSobol(n_samples=2000, n_bootstrap=0).fit(product, U01)
    b = MonteCarloSobol(n_samples=2000, n_bootstrap=0, seed=77).fit(product, U01)
    assert a.estimates_[0].seed == 77
    np.testing.assert_array_equal(a.total_, b.total_)


def test_affine_invariance():
    a = MonteCarloSobol(n_samples=20_000, n_bootstrap=500, seed=5).fit(product, U01)
    b = MonteCarloSobol(n_samples=20_000, n_bootstrap=500, seed=5).fit(lambda X: 5 * product(X) + 3, U01)
    np.testing.assert_allclose(b.first_order_, a.first_order_, atol=1e-12)
    np.testing.assert_allclose(b.total_, a.total_, atol=1e-12)
    np.testing.assert_allclose(b.total_ci_, a.total_ci_, atol=1e-12)


def test_ci_shrinks_with_sample_size():
    ratios = []
    for seed in range(5):
        small = MonteCarloSobol(n_samples=10_000, n_bootstrap=500, seed=seed).fit(product, U01)
        large = MonteCarloSobol(n_samples=40_000, n_bootstrap=500, seed=seed).fit(product, U01)
        ratios.append(np.ptp(large.total_ci_[0]) / np.ptp(small.total_ci_[0]))
    assert np.median(ratios) <= 0.6


def test_constant_model_is_degenerate():
    with pytest.raises(DegenerateModelError):
        MonteCarloSobol(n_samples=2000, seed=1).fit(lambda X: np.full(X.shape[0], 2.0), U01)


def test_nonfinite_output_reports_row():
    def bad(X):
        y = X[:, 0].copy()
        y[X[:, 0] > 0.999] = np.nan
        return y

    with pytest.raises(EvaluationError) as info:
        MonteCarloSobol(n_samples=5000, seed=1).fit(bad, U01)
    row = info.value.row
    assert row is not None and row[0] > 0.999
    assert "row" in str(info.value)


def test_preconditions():
    with pytest.raises(ValueError):
        MonteCarloSobol(n_samples=999).fit(product, U01)
    with pytest.raises(ValueError):
        MonteCarloSobol(n_samples=2000, n_bootstrap=100).fit(product, U01)
    sample = draw_pick_freeze(product, U01, 2000, 1)
    with pytest.raises(ValueError):
        bootstrap_ci(sample, 499, seed=1)


def test_negative_estimates_are_kept():
    values = [
        MonteCarloSobol(n_samples=2000, n_bootstrap=0, seed=s).fit(first_only, U01).first_order_[1] for s in range(10)
    ]
    assert min(values) < 0


def test_symmetric_inputs_have_overlapping_intervals():
    est = MonteCarloSobol(n_samples=50_000, n_bootstrap=1000, seed=11).fit(lambda X: X[:, 0] + X[:, 1], U01)
    (a_lo, a_hi), (b_lo, b_hi) = est.first_order_ci_
    assert a_lo <= b_hi and b_lo <= a_hi


def test_total_not_below_first_beyond_noise():
    est = MonteCarloSobol(n_samples=50_000, n_bootstrap=1000, seed=12).fit(product, U01)
    for i in range(2):
        assert est.total_ci_[i][1] >= est.first_order_ci_[i][0]


def test_estimator_params_round_trip():
    est = MonteCarloSobol(n_samples=1234, seed=5)
    assert est.get_params()["n_samples"] == 1234
    assert est.set_params(n_jobs=2) is est and est.n_jobs == 2


@pytest.mark.parametrize(
    "hw,digits",
    [(0.003, 2), (0.0002, 3), (0.04, 1), (0.6, 0), (0.00004, 4), (float("inf"), 0)],
)
def test_significant_digits(hw, digits):
    assert significant_digits(hw) == digits


def test_significant_digits_of_estimate():
    e = SobolEstimate("total", 0, 0.41, (0.407, 0.413), 1000, 1, "jansen")
    assert e.digits == 2 == significant_digits(e)


@pytest.mark.parametrize("case", CASES, ids=[c[0] for c in CASES])
def test_estimates_agree_with_closed_form(case):
    sf, laws = build(case)
    exact = decompose(sf, laws)
    est = MonteCarloSobol(n_samples=100_000, n_bootstrap=1000, seed=2024).fit(sf, laws)
    for i in range(sf.k):
        for value, ci, ref in (
            (est.first_order_[i], est.first_order_ci_[i], exact.first_order[i]),
            (est.total_[i], est.total_ci_[i], exact.total[i]),
        ):
            half = 0.5 * (ci[1] - ci[0])
            assert abs(value - ref) <= 3 * half + 1e-12, (i, value, ref, ci)
