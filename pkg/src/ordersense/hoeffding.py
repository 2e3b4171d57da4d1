"""Closed-form Hoeffding (Sobol) decompositions for structured output functions.

A :class:`StructuredFunction` is a finite sum of products of one-dimensional
factors, ``f(x) = sum_a prod_j g_j^a(x_j) + K``. Additive, pure product,
partitioned-product and ``phi1(x_i) prod g_j(x_j) + phi2(x_i)`` forms are all
special cases. Because the inputs are independent, every term of the
decomposition only needs the per-coordinate moments ``E[g_j^a]`` and
``E[g_j^a g_j^b]``, which are computed by quadrature in the probability scale.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator

from ._validation import DegenerateModelError, DomainError, SizeError, check_inputs
from .distributions import atoms_of, gauss_legendre_01

__all__ = [
    "ClosedFormSobol",
    "Factor",
    "StructuredFunction",
    "DecompositionResult",
    "factor_moments",
    "decompose",
    "decompose_additive",
    "decompose_product",
    "decompose_sum_of_products",
    "phi_mix_ratios",
    "tensor_quadrature_indices",
    "MAX_ENUMERATION_DIM",
]

MAX_ENUMERATION_DIM = 20


@dataclass(frozen=True)
class Factor:
    """A scalar function of one input.

    ``breakpoints`` lists points where ``fn`` is not smooth; quadrature is split
    there. The boolean flags describe shape properties used by theorem audits.
    """

    fn: Callable
    name: str = "g"
    breakpoints: tuple = ()
    nondecreasing: bool = False
    convex: bool = False
    log_convex: bool = False

    def __call__(self, x):
        return self.fn(x)


def _as_factor(g):
    return g if isinstance(g, Factor) else Factor(g, getattr(g, "__name__", "g"))


@dataclass
class StructuredFunction:
    """``f(x) = sum_a prod_{j in terms[a]} terms[a][j](x_j) + constant``.

    Coordinates missing from a term contribute the factor 1.
    """

    form: str
    terms: list
    k: int
    constant: float = 0.0
    partition: list = None
    focus: int = None

    def __post_init__(self):
        if self.form not in ("additive", "product", "sum-of-products", "phi-mix"):
            raise ValueError(f"unknown form {self.form!r}")
        self.terms = [{int(j): _as_factor(g) for j, g in term.items()} for term in self.terms]
        for term in self.terms:
            for j in term:
                if not 0 <= j < self.k:
                    raise ValueError(f"coordinate {j} outside 0..{self.k - 1}")
        if self.partition is not None:
            seen = set()
            for block in self.partition:
                if seen & set(block):
                    raise ValueError("partition blocks must be pairwise disjoint")
                seen |= set(block)

    @classmethod
    def additive(cls, factors, constant=0.0):
        factors = list(factors)
        terms = [{j: g} for j, g in enumerate(factors) if g is not None]
        return cls("additive", terms, len(factors), constant)

    @classmethod
    def product(cls, factors, constant=0.0):
        factors = list(factors)
        term = {j: g for j, g in enumerate(factors) if g is not None}
        return cls("product", [term], len(factors), constant)

    @classmethod
    def sum_of_products(cls, terms, k, constant=0.0):
        return cls("sum-of-products", list(terms), k, constant)

    @classmethod
    def partitioned(cls, blocks, k, constant=0.0):
        """Products over disjoint index blocks; ``blocks`` maps coordinates to factors per block."""
        blocks = [dict(b) for b in blocks]
        return cls("sum-of-products", blocks, k, constant, partition=[sorted(b) for b in blocks])

    @classmethod
    def phi_mix(cls, i, phi1, phi2, factors, k):
        """``phi1(x_i) * prod_{j != i} factors[j](x_j) + phi2(x_i)``."""
        first = {j: g for j, g in factors.items() if g is not None and j != i}
        first[i] = phi1
        return cls("phi-mix", [first, {i: phi2}], k, focus=i)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], float(self.constant))
        for term in self.terms:
            prod = np.ones(X.shape[0])
            for j, g in term.items():
                prod = prod * g(X[:, j])
            out = out + prod
        return out


@dataclass
class DecompositionResult:
    f_empty: float
    component_variances: dict
    total_variance: float
    first_order: np.ndarray
    total: np.ndarray
    first_order_variance: np.ndarray = field(default=None, repr=False)
    total_effect_variance: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.first_order = np.asarray(self.first_order, dtype=float)
        self.total = np.asarray(self.total, dtype=float)


def _breakpoint_levels(d, points):
    """Probability levels of the breakpoints that fall inside the support of ``d``."""
    levels = []
    lo_end, hi_end = d.left_endpoint, d.right_endpoint
    for x0 in points:
        if not lo_end < x0 < hi_end:
            continue
        try:
            u0 = brentq(lambda u: float(d._quantile(np.float64(u))) - x0, 1e-15, 1 - 1e-15, xtol=1e-15)
        except ValueError:
            continue
        levels.append(u0)
    return sorted(set(levels))


# Panels shrink geometrically toward 0 and 1, where quantiles of unbounded or
# steep-tailed laws have log-type singularities.
_GRADING_DEPTH = 48
_GRADED_EDGES = sorted({0.0, 1.0, 0.5} | {2.0**-j for j in range(2, _GRADING_DEPTH + 1)} | {1.0 - 2.0**-j for j in range(2, _GRADING_DEPTH + 1)})


def _panel_rule(levels, n):
    """Composite Gauss-Legendre nodes on (0, 1), graded toward both ends and split at ``levels``."""
    edges = sorted(set(_GRADED_EDGES) | set(levels))
    m = max(8, n // 32)
    t, w = gauss_legendre_01(m)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            nodes.append(a + (b - a) * t)
            weights.append((b - a) * w)
    # nodes in the last upper panel can round to exactly 1
    return np.minimum(np.concatenate(nodes), np.nextafter(1.0, 0.0)), np.concatenate(weights)


def _coordinate_moments(factors, d, n=512, tol=1e-10, max_n=65536):
    """Vector ``m[a] = E g^a(X)`` and matrix ``M[a, b] = E g^a(X) g^b(X)`` for one coordinate.

    ``None`` entries of ``factors`` stand for the constant 1.
    """
    A = len(factors)
    if d.is_discrete:
        xs = np.array([x for x, _ in atoms_of(d)])
        ps = np.array([p for _, p in atoms_of(d)])
        vals = np.vstack([np.ones_like(xs) if g is None else np.asarray(g(xs), dtype=float) for g in factors])
        if not np.all(np.isfinite(vals)):
            raise DomainError("factor is not finite on the support of the input law")
        return vals @ ps, (vals * ps) @ vals.T

    points = sorted({p for g in factors if g is not None for p in g.breakpoints})
    levels = _breakpoint_levels(d, points) if points else []
    prev = None
    while n <= max_n:
        u, w = _panel_rule(levels, n)
        x = d._quantile(u)
        vals = np.vstack([np.ones_like(x) if g is None else np.asarray(g(x), dtype=float) * np.ones_like(x) for g in factors])
        if not np.all(np.isfinite(vals)):
            raise DomainError("factor is not finite on the support of the input law")
        m = vals @ w
        M = (vals * w) @ vals.T
        if prev is not None:
            scale = max(float(np.max(np.abs(np.diag(M)))), 1e-300)
            dm = np.max(np.abs(m - prev[0])) / math.sqrt(scale)
            dM = np.max(np.abs(M - prev[1])) / scale
            if max(dm, dM) < tol:
                return m, M
        prev = (m, M)
        n *= 2
    warnings.warn("factor moments did not reach the requested relative tolerance", RuntimeWarning, stacklevel=3)
    return prev


def factor_moments(g, d, *, n=512, tol=1e-10):
    """``(E g(X), E g(X)^2)`` for ``X ~ d``."""
    m, M = _coordinate_moments([_as_factor(g)], d, n=n, tol=tol)
    return float(m[0]), float(M[0, 0])


def _prod(values):
    out = 1.0
    for v in values:
        out *= v
    return out


def _subsets(k):
    for r in range(1, k + 1):
        yield from itertools.combinations(range(k), r)


def decompose_additive(sf, inputs):
    """Indices of ``sum_j g_j(X_j) + K``: each index is the share of ``Var g_j``."""
    if sf.form != "additive":
        raise ValueError("decompose_additive needs an additive function")
    inputs = check_inputs(inputs)
    k = sf.k
    variances = np.zeros(k)
    f_empty = float(sf.constant)
    for term in sf.terms:
        (j, g), = term.items()
        m, M = _coordinate_moments([g], inputs[j])
        variances[j] += M[0, 0] - m[0] * m[0]
        f_empty += m[0]
    total = float(np.sum(variances))
    if not total > 0:
        raise DegenerateModelError("all factor variances vanish")
    S = variances / total
    components = {(j,): float(variances[j]) for j in range(k)}
    return DecompositionResult(f_empty, components, total, S, S.copy(), variances, variances.copy())


def decompose_product(sf, inputs):
    """Indices of ``prod_j g_j(X_j) + K``.

    ``Var f_alpha = prod_{j not in alpha} (E g_j)^2 prod_{j in alpha} Var g_j`` and
    the total-effect part is ``Var(g_i) prod_{j != i} E g_j^2``.
    """
    if sf.form != "product" or len(sf.terms) != 1:
        raise ValueError("decompose_product needs a single-product function")
    inputs = check_inputs(inputs)
    k = sf.k
    if k > MAX_ENUMERATION_DIM:
        raise SizeError(f"subset enumeration supports at most {MAX_ENUMERATION_DIM} inputs, got {k}")
    (term,) = sf.terms
    E = np.empty(k)
    E2 = np.empty(k)
    for j in range(k):
        m, M = _coordinate_moments([term.get(j)], inputs[j])
        E[j], E2[j] = m[0], M[0, 0]
    var = E2 - E * E
    sq = E * E
    total = sum([_prod(E2[j] for j in range(k)) - _prod(sq[j] for j in range(k))])
    if not total > 0:
        raise DegenerateModelError("product output has zero variance")
    components = {}
    for alpha in _subsets(k):
        inside = set(alpha)
        components[alpha] = sum(
            [_prod(var[j] if j in inside else sq[j] for j in range(k))]
        )
    first_var = np.array([components[(i,)] for i in range(k)])
    total_var = np.array(
        [sum([var[i] * _prod(E2[j] for j in range(k) if j != i)]) for i in range(k)]
    )
    f_empty = float(sf.constant) + _prod(E)
    return DecompositionResult(
        f_empty, components, total, first_var / total, total_var / total, first_var, total_var
    )


def _moment_tables(sf, inputs):
    A = len(sf.terms)
    ms, Ms = [], []
    for j in range(sf.k):
        m, M = _coordinate_moments([term.get(j) for term in sf.terms], inputs[j])
        ms.append(m)
        Ms.append(M)
    return A, ms, Ms


def decompose_sum_of_products(sf, inputs, *, components=True):
    """Indices of ``sum_a prod_j g_j^a(X_j) + K`` from pairwise factor moments.

    With ``C_j[a, b] = Cov(g_j^a, g_j^b)`` and ``M_j[a, b] = E g_j^a g_j^b``::

        Var f_alpha = sum_{a,b} prod_{j in alpha} C_j[a,b] prod_{j not in alpha} E g_j^a E g_j^b
        Var f_Ti    = sum_{a,b} C_i[a,b] prod_{j != i} M_j[a,b]
    """
    inputs = check_inputs(inputs)
    k = sf.k
    if components and k > MAX_ENUMERATION_DIM:
        raise SizeError(f"subset enumeration supports at most {MAX_ENUMERATION_DIM} inputs, got {k}")
    A, ms, Ms = _moment_tables(sf, inputs)
    Cs = [Ms[j] - np.outer(ms[j], ms[j]) for j in range(k)]
    outer = [np.outer(ms[j], ms[j]) for j in range(k)]
    pairs = list(itertools.product(range(A), repeat=2))

    total = sum([_prod(Ms[j][a, b] for j in range(k)) - _prod(outer[j][a, b] for j in range(k)) for a, b in pairs])
    if not total > 0:
        raise DegenerateModelError("structured output has zero variance")

    def component(alpha):
        inside = set(alpha)
        return sum([_prod(Cs[j][a, b] if j in inside else outer[j][a, b] for j in range(k)) for a, b in pairs])

    first_var = np.array([component((i,)) for i in range(k)])
    total_var = np.array(
        [sum([Cs[i][a, b] * _prod(Ms[j][a, b] for j in range(k) if j != i) for a, b in pairs]) for i in range(k)]
    )
    comps = {alpha: component(alpha) for alpha in _subsets(k)} if components else {}
    f_empty = float(sf.constant) + sum([_prod(ms[j][a] for j in range(k)) for a in range(A)])
    return DecompositionResult(
        f_empty, comps, total, first_var / total, total_var / total, first_var, total_var
    )


def decompose(sf, inputs):
    """Dispatch on ``sf.form``."""
    if len(inputs) != sf.k:
        raise ValueError(f"function has {sf.k} inputs but {len(inputs)} laws were given")
    if sf.form == "additive":
        return decompose_additive(sf, inputs)
    if sf.form == "product":
        return decompose_product(sf, inputs)
    return decompose_sum_of_products(sf, inputs)


def phi_mix_ratios(phi1, phi2, d):
    """Quantities compared by the ``phi1 prod g + phi2`` criterion, all divided by ``(E phi1)^2``."""
    m, M = _coordinate_moments([_as_factor(phi1), _as_factor(phi2)], d)
    scale = m[0] * m[0]
    return {
        "var_phi1": float((M[0, 0] - m[0] * m[0]) / scale),
        "var_phi2": float((M[1, 1] - m[1] * m[1]) / scale),
        "cov_phi1_phi2": float((M[0, 1] - m[0] * m[1]) / scale),
    }


def _integrate(F, weights, keep=()):
    """Contract every axis of ``F`` not in ``keep`` against its weight vector."""
    for ax in reversed(range(F.ndim)):
        if ax not in keep:
            F = np.tensordot(F, weights[ax], axes=(ax, 0))
    return F


def _weighted_square_sum(F, weights):
    return float(_integrate(F * F, weights))


def tensor_quadrature_indices(fn, inputs, *, n=512, chunk=8):
    """Brute-force first-order and total indices of ``fn`` for at most three inputs.

    ``fn`` receives an ``(m, k)`` array of points. Conditional expectations are
    integrals over tensor Gauss-Legendre grids in the probability scale.
    Returns ``(first_order, total, variance)``.
    """
    inputs = check_inputs(inputs)
    k = len(inputs)
    if not 1 <= k <= 3:
        raise SizeError("tensor quadrature oracle supports one to three inputs")
    u, w = gauss_legendre_01(n)
    axes = [d._quantile(u) for d in inputs]
    chunks = [slice(s, min(s + chunk, n)) for s in range(0, n, chunk)]

    def block(rows):
        grids = np.meshgrid(axes[0][rows], *axes[1:], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return np.asarray(fn(pts), dtype=float).reshape(grids[0].shape)

    # the mean first, so that the second pass accumulates centred values
    mean = sum(float(_integrate(block(rows), [w[rows]] + [w] * (k - 1))) for rows in chunks)

    var = 0.0
    first = [np.zeros(n) for _ in range(k)]
    without_first = np.zeros((n,) * (k - 1))
    rest_sq = np.zeros(k)
    for rows in chunks:
        F = block(rows) - mean
        weights = [w[rows]] + [w] * (k - 1)
        var += _weighted_square_sum(F, weights)
        first[0][rows] = _integrate(F, weights, keep=(0,))
        for i in range(1, k):
            first[i] += _integrate(F, weights, keep=(i,))
            # E(f | X_{-i}) restricted to these rows
            R = np.tensordot(F, w, axes=(i, 0))
            rest_sq[i] += _weighted_square_sum(R, weights[:i] + weights[i + 1 :])
        if k > 1:
            without_first += _integrate(F, weights, keep=tuple(range(1, k)))
    if not var > 0:
        raise DegenerateModelError("oracle output has zero variance")
    S = np.array([float(np.dot(w, c * c)) for c in first]) / var
    if k == 1:
        return S, np.ones(1), var
    rest_sq[0] = _weighted_square_sum(without_first, [w] * (k - 1))
    return S, 1.0 - rest_sq / var, var


class ClosedFormSobol(BaseEstimator):
    """Estimator-style wrapper around :func:`decompose`.

    ``fit(sf, inputs)`` stores ``first_order_``, ``total_``, ``variance_``,
    ``mean_``, ``component_variances_`` and the full ``result_``.
    """

    def __init__(self, components=True):
        self.components = components

    def fit(self, sf, inputs):
        inputs = check_inputs(inputs)
        if len(inputs) != sf.k:
            raise ValueError(f"function has {sf.k} inputs but {len(inputs)} laws were given")
        if sf.form in ("sum-of-products", "phi-mix"):
            res = decompose_sum_of_products(sf, inputs, components=self.components)
        else:
            res = decompose(sf, inputs)
        self.result_ = res
        self.first_order_ = res.first_order
        self.total_ = res.total
        self.variance_ = res.total_variance
        self.mean_ = res.f_empty
        self.component_variances_ = res.component_variances
        return self
