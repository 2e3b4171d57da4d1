import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.special import ndtr

from ordersense import (
    Discrete,
    DomainError,
    Exponential,
    Normal,
    Transformed,
    TruncatedExponential,
    TruncatedNormal,
    Uniform,
    check_cx_discrete,
    check_dil,
    check_disp,
    check_ew,
    check_lorenz,
    check_order,
    check_st,
    check_star,
    expect,
)
from ordersense.orders import default_grid, log_law


# ---------------------------------------------------------------- definitions on simple pairs


def test_st_examples():
    assert check_st(Uniform(0, 1), Uniform(0, 2)).holds
    rep = check_st(Uniform(1, 1.9), Uniform(0, 1))
    assert rep.fails and rep.witness is not None
    assert rep.witness.lhs - rep.witness.rhs > rep.tolerance
    assert check_st(Uniform(0, 1), Uniform(1, 1.9)).holds
    assert check_st(Uniform(0.3, 0.8), Uniform(0.3, 0.8)).holds


@pytest.mark.parametrize("a,b,c,d", [(0, 1, 0, 2), (0, 1, 5, 6), (2, 3.5, 0, 1), (0, 2, 0, 1), (0, 1, 3, 4.01)])
def test_disp_uniform_iff_widths(a, b, c, d):
    rep = check_disp(Uniform(a, b), Uniform(c, d))
    assert rep.holds == (b - a <= d - c)


def test_ew_examples():
    assert check_ew(Uniform(1, 1.9), Uniform(0, 1)).holds
    assert check_ew(Uniform(0, 1), Uniform(0, 2)).holds
    assert check_ew(Uniform(0, 2), Uniform(0, 1)).fails
    x = TruncatedNormal(0.5, 2, 0, 2)
    assert check_ew(x, x).holds


def test_ew_uniform_closed_form():
    # W_{U[0,L]}(p) = L (1 - p)^2 / 2
    from ordersense.orders import _excess_wealth

    p = np.linspace(0.001, 0.999, 50)
    w, err = _excess_wealth(Uniform(0, 3), p)
    np.testing.assert_allclose(w, 3 * (1 - p) ** 2 / 2, atol=1e-10)
    assert np.all(err < 1e-10)


def test_star_lorenz_exponential_scale_family():
    assert check_star(Exponential(2), Exponential(1)).holds
    assert check_star(Exponential(1), Exponential(2)).holds
    assert check_lorenz(Exponential(2), Exponential(1)).holds


def test_star_skips_zero_quantiles():
    rep = check_star(Discrete(((0.0, 0.5), (1.0, 0.5))), Uniform(0, 1))
    assert rep.verdict in ("holds", "fails")


def test_star_and_lorenz_reject_negative_support():
    with pytest.raises(DomainError):
        check_star(Uniform(-1, 1), Uniform(0, 1))
    with pytest.raises(DomainError):
        check_lorenz(Uniform(0, 1), Normal(0, 1))


def test_dil_examples():
    assert check_dil(Uniform(5, 6), Uniform(0, 2)).holds
    assert check_dil(Uniform(0, 2), Uniform(5, 6)).fails


def test_cx_discrete():
    x = Discrete(((1.0, 1.0),))
    y = Discrete(((0.0, 0.5), (2.0, 0.5)))
    assert check_cx_discrete(x, y).holds
    assert check_cx_discrete(y, x).fails
    assert check_cx_discrete(y, y).holds
    rep = check_cx_discrete(Discrete(((0.0, 0.95), (1.0, 0.05))), Discrete(((0.0, 0.5), (10.0, 0.5))))
    assert rep.fails and "means differ" in rep.note
    with pytest.raises(DomainError):
        check_cx_discrete(Uniform(0, 1), y)


def test_unknown_relation():
    with pytest.raises(DomainError):
        check_order(Uniform(0, 1), Uniform(0, 1), "foo")


def test_report_string_mentions_witness():
    text = str(check_st(Uniform(1, 2), Uniform(0, 1)))
    assert "fails" in text and "first violation" in text


# ---------------------------------------------------------------- parametric families


def _et_quantile(lam, a, b, u):
    ea, eb = math.exp(-lam * a), math.exp(-lam * b)
    return -np.log(ea + u * (eb - ea)) / lam


@given(lam=st.floats(0.2, 8), mu=st.floats(0.2, 8))
def test_truncated_exponential_disp_matches_closed_form_quantiles(lam, mu):
    """Increments of Q_Y - Q_X on the checker's grid, from independently coded quantiles.

    A grid check cannot see a sign change of Q_Y' - Q_X' that stays inside one
    grid cell, so the oracle decides at the same levels the checker uses.
    """
    u = default_grid()
    steps = np.diff(_et_quantile(mu, 0, 2, u) - _et_quantile(lam, 0, 2, u))
    assume(abs(steps.min()) > 1e-6 * np.abs(steps).max())
    rep = check_disp(TruncatedExponential(lam, 0, 2), TruncatedExponential(mu, 0, 2))
    assert rep.holds == (steps.min() > 0)


def test_truncated_exponential_rate_lemma_counterexample():
    # steeper upper tail of the larger rate: Q'(1) = (e^{2 lam} - 1) / lam
    rep = check_disp(TruncatedExponential(5, 0, 2), TruncatedExponential(1, 0, 2))
    assert rep.fails
    assert 0.9 < rep.witness.u < 1.0


@given(m=st.floats(0.1, 1.9), var=st.floats(0.05, 4), w=st.floats(0.1, 2.5))
def test_uniform_vs_truncated_normal_lemma(m, var, w):
    s = math.sqrt(var)
    alpha, beta = (0 - m) / s, (2 - m) / s
    bound = s * math.sqrt(2 * math.pi) * (ndtr(beta) - ndtr(alpha))
    assume(abs(w - bound) > 1e-3 * bound)
    rep = check_disp(Uniform(0, w), TruncatedNormal(m, var, 0, 2))
    assert rep.holds == (w <= bound)


@given(s1=st.floats(0.1, 3), s2=st.floats(0.1, 3), m1=st.floats(-2, 2), m2=st.floats(-2, 2))
def test_normal_disp_by_sigma(s1, s2, m1, m2):
    assume(abs(s1 - s2) > 1e-3)
    assert check_disp(Normal(m1, s1 * s1), Normal(m2, s2 * s2)).holds == (s1 < s2)


@given(l1=st.floats(0.1, 5), l2=st.floats(0.1, 5))
def test_exponential_disp_by_rate(l1, l2):
    assume(abs(l1 - l2) > 1e-3)
    assert check_disp(Exponential(l1), Exponential(l2)).holds == (l1 > l2)
    assert check_ew(Exponential(l1), Exponential(l2)).holds == (l1 > l2)


# ---------------------------------------------------------------- implication chain


def _family(rng):
    kind = rng.integers(5)
    if kind == 0:
        a = rng.uniform(0, 2)
        return Uniform(a, a + rng.uniform(0.1, 3))
    if kind == 1:
        return Exponential(rng.uniform(0.3, 4))
    if kind == 2:
        return TruncatedNormal(rng.uniform(0, 2), rng.uniform(0.1, 3), 0.0, rng.uniform(1, 3))
    if kind == 3:
        return TruncatedExponential(rng.uniform(0.2, 6), 0.0, rng.uniform(0.5, 3))
    return Normal(rng.uniform(-1, 1), rng.uniform(0.2, 3))


def _dispersed(x, rng):
    """A law Y with X <=disp Y: Y = s X + c X^3 + t with s >= 1, c >= 0 on nonnegative support."""
    s, t = rng.uniform(1.0, 2.5), rng.uniform(-1, 1)
    if x.left_endpoint >= 0 and math.isfinite(x.right_endpoint) and rng.random() < 0.5:
        c = rng.uniform(0, 0.3)
        return Transformed(x, lambda v, s=s, c=c, t=t: s * v + c * v**3 + t, True, "cubic")
    return Transformed(x, lambda v, s=s, t=t: s * v + t, True, "affine")


def _ordered_pairs(n, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < n:
        x = _family(rng)
        y = _dispersed(x, rng) if rng.random() < 0.6 else _family(rng)
        pairs.append((x, y))
    return pairs


def test_disp_implies_ew_implies_dil_and_variance():
    checked = 0
    for x, y in _ordered_pairs(320):
        if not check_disp(x, y).holds:
            continue
        checked += 1
        assert check_ew(x, y).holds, (x, y)
        assert check_dil(x, y).holds, (x, y)
        assert x.variance() <= y.variance() * (1 + 1e-9) + 1e-12
    assert checked >= 200


def _positive_pairs(n, seed=1):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        laws = []
        for _ in range(2):
            kind = rng.integers(4)
            if kind == 0:
                a = rng.uniform(0.05, 2)
                laws.append(Uniform(a, a + rng.uniform(0.1, 3)))
            elif kind == 1:
                laws.append(Exponential(rng.uniform(0.3, 4)))
            elif kind == 2:
                a = rng.uniform(0.05, 1)
                laws.append(TruncatedExponential(rng.uniform(0.2, 6), a, a + rng.uniform(0.5, 3)))
            else:
                a = rng.uniform(0.05, 1)
                laws.append(TruncatedNormal(rng.uniform(0, 2), rng.uniform(0.1, 3), a, a + rng.uniform(0.5, 3)))
        out.append(tuple(laws))
    return out


def test_star_iff_log_disp():
    pairs = _positive_pairs(250)
    agree = [check_star(x, y).verdict == check_disp(log_law(x), log_law(y)).verdict for x, y in pairs]
    assert all(agree)


def test_star_implies_lorenz_implies_cv_order():
    hits = 0
    for x, y in _positive_pairs(250, seed=2):
        if not check_star(x, y).holds:
            continue
        hits += 1
        assert check_lorenz(x, y).holds, (x, y)
        cvx = x.variance() / x.mean() ** 2
        cvy = y.variance() / y.mean() ** 2
        assert cvx <= cvy * (1 + 1e-8)
    assert hits >= 20


TRANSFORMS = {
    "exp": np.exp,
    "square": lambda v: v * v,
}


@pytest.mark.parametrize("name", ["exp", "square", "neglog"])
def test_disp_and_st_preserved_by_convex_nondecreasing(name):
    rng = np.random.default_rng(5)
    tested = 0
    for _ in range(150):
        a = rng.uniform(0, 1)
        x = Uniform(a, a + rng.uniform(0.1, 1))
        lo = a + rng.uniform(0, 1)
        c = rng.uniform(x.right_endpoint - x.left_endpoint, 2.0)
        y = Uniform(lo, lo + c) if rng.random() < 0.5 else TruncatedNormal(lo + 0.5, rng.uniform(0.5, 3), lo, lo + c)
        if not (check_disp(x, y).holds and check_st(x, y).holds):
            continue
        tested += 1
        if name == "neglog":
            cap = y.right_endpoint + 0.5
            f = lambda v, cap=cap: -np.log(cap - v)
        else:
            f = TRANSFORMS[name]
        assert check_disp(Transformed(x, f), Transformed(y, f)).holds, (x, y)
    assert tested >= 30


def test_ew_preserved_with_ordered_left_endpoints():
    rng = np.random.default_rng(8)
    tested = 0
    for _ in range(200):
        a = rng.uniform(0, 1)
        x = Uniform(a, a + rng.uniform(0.1, 1.0))
        b = a + rng.uniform(0, 0.5)
        y = Uniform(b, b + rng.uniform(0.1, 2.0))
        if not check_ew(x, y).holds:
            continue
        tested += 1
        assert check_ew(Transformed(x, np.exp), Transformed(y, np.exp)).holds
    assert tested >= 50


def test_ew_not_preserved_when_left_endpoints_reversed():
    x, y = Uniform(1, 1.9), Uniform(0, 1)
    assert check_ew(x, y).holds
    fx, fy = Transformed(x, np.exp), Transformed(y, np.exp)
    assert check_ew(fx, fy).fails
    assert fx.variance() > fy.variance()


def _relu(v):
    return np.maximum(v, 0.0)


@pytest.mark.parametrize("h1,h2", [(np.exp, np.exp), (np.exp, _relu), (_relu, _relu)])
def test_covariance_inequality_for_ew_pairs(h1, h2):
    rng = np.random.default_rng(13)
    tested = 0
    for _ in range(120):
        a = rng.uniform(-1, 1)
        x = Uniform(a, a + rng.uniform(0.1, 1.5)) if rng.random() < 0.5 else TruncatedNormal(a + 0.3, rng.uniform(0.1, 1), a, a + 1.5)
        b = a + rng.uniform(0, 0.7)
        y = Uniform(b, b + rng.uniform(0.5, 2.5))
        if not (check_ew(x, y).holds and x.left_endpoint <= y.left_endpoint):
            continue
        tested += 1

        def cov(d):
            m1, m2 = expect(h1, d), expect(h2, d)
            return expect(lambda v: h1(v) * h2(v), d) - m1 * m2

        assert cov(x) <= cov(y) + 1e-9
    assert tested >= 20
