"""Financial output functions: Value-at-Risk, Vasicek bond price, Heston call price.

Each model is a small frozen dataclass holding the fixed contract data. Calling
the model on an ``(n, k)`` array of uncertain parameters returns ``n`` outputs,
which is the interface the Monte Carlo estimators expect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._validation import DomainError, EvaluationError, NumericalInstabilityError
from .distributions import gauss_legendre_01
from .hoeffding import Factor, StructuredFunction

__all__ = [
    "VaRModel",
    "VasicekModel",
    "HestonModel",
    "var_eval",
    "vasicek_bond",
    "heston_call",
    "heston_probabilities",
]


def var_eval(mu, sigma, *, S0=100.0, K=100.0, T=1.0, alpha=0.9):
    """Value-at-Risk of the short position ``S_T - K`` under geometric Brownian motion."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise DomainError("volatility must be nonnegative")
    return S0 * np.exp(mu * T + sigma * math.sqrt(T) * ndtri(alpha)) - K


@dataclass(frozen=True)
class VaRModel:
    S0: float = 100.0
    K: float = 100.0
    T: float = 1.0
    alpha: float = 0.9
    input_names = ("mu", "sigma")

    def __post_init__(self):
        if not (self.S0 > 0 and self.T > 0 and 0 < self.alpha < 1):
            raise DomainError("VaR model needs S0 > 0, T > 0 and 0 < alpha < 1")

    def __call__(self, X):
        X = np.atleast_2d(X)
        return var_eval(X[:, 0], X[:, 1], S0=self.S0, K=self.K, T=self.T, alpha=self.alpha)

    def structured(self):
        """The same map written as ``g_mu(mu) * g_sigma(sigma) - K``."""
        T, z, S0 = self.T, float(ndtri(self.alpha)), self.S0
        log_convex = self.alpha >= 0.5
        g_mu = Factor(lambda m: S0 * np.exp(m * T), "S0*exp(mu*T)", nondecreasing=True, convex=True, log_convex=True)
        g_sigma = Factor(
            lambda s: np.exp(s * math.sqrt(T) * z),
            "exp(sigma*sqrt(T)*z)",
            nondecreasing=log_convex,
            convex=True,
            log_convex=log_convex,
        )
        return StructuredFunction.product([g_mu, g_sigma], constant=-self.K)


_SMALL_A = 1e-8


def _expm1_plus(x):
    """``exp(-x) - 1 + x`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.expm1(-x) + x
    small = np.abs(x) < 0.1
    if np.any(small):
        xs = x[small]
        term = xs * xs / 2.0
        acc = term.copy()
        for n in range(3, 16):
            term = -term * xs / n
            acc = acc + term
        out = np.where(small, 0.0, out)
        out[small] = acc
    return out


def _cubic_remainder(y):
    """``2y - 3 + 4e^{-y} - e^{-2y}``, which is ``(2/3) y^3 + O(y^4)``; series below ``y = 1``."""
    y = np.asarray(y, dtype=float)
    out = 2.0 * y - 3.0 + 4.0 * np.exp(-y) - np.exp(-2.0 * y)
    small = y < 1.0
    if np.any(small):
        ys = y[small]
        acc = np.zeros_like(ys)
        power = ys * ys / 2.0  # (-y)^n / n! at n = 2
        for n in range(3, 40):
            power = -power * ys / n
            acc = acc + (4.0 - 2.0**n) * power
        out = np.where(small, 0.0, out)
        out[small] = acc
    return out


def vasicek_bond(a, b, sigma, *, r0=0.1, T=1.0):
    """Zero-coupon bond price ``A(0,T) exp(-r0 B(0,T))`` in the Vasicek model.

    ``log A`` is evaluated as ``-b (T - B) + sigma^2 G(aT) / (4 a^3)`` with
    ``G(y) = 2y - 3 + 4e^{-y} - e^{-2y}``, which is algebraically the usual
    expression without its cancellation for small ``a``. Below ``a = 1e-8`` the
    second-order expansion in ``a`` is used.
    """
    a, b, sigma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, sigma)))
    if np.any(a < 0):
        raise DomainError("mean-reversion speed must be nonnegative")
    s2 = sigma * sigma
    tiny = a < _SMALL_A
    safe = np.where(tiny, 1.0, a)
    y = safe * T
    B = np.where(tiny, T - a * T**2 / 2.0 + a * a * T**3 / 6.0, -np.expm1(-y) / safe)
    T_minus_B = np.where(tiny, a * T**2 / 2.0 - a * a * T**3 / 6.0, _expm1_plus(y) / safe)
    spread = np.where(tiny, s2 * T**3 / 6.0 - s2 * a * T**4 / 8.0, s2 * _cubic_remainder(y) / (4.0 * safe**3))
    return np.exp(-b * T_minus_B + spread - r0 * B)


@dataclass(frozen=True)
class VasicekModel:
    r0: float = 0.1
    T: float = 1.0
    input_names = ("a", "b", "sigma")

    def __call__(self, X):
        X = np.atleast_2d(X)
        return vasicek_bond(X[:, 0], X[:, 1], X[:, 2], r0=self.r0, T=self.T)


# Heston pricing --------------------------------------------------------------

SIGMA_FLOOR = 1e-6
_FIRST_EDGES = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0, 150.0, 200.0)
_PANEL_NODES = 24
_PANEL_WIDTH = 50.0


def _heston_integrand(phi, j, x, logK, r, q, kappa, theta, sigma, v0, rho, tau):
    """``Re(exp(-i phi log K) f_j(phi) / (i phi))`` for rows (axis 0) and nodes (axis 1).

    Uses the algebraically equivalent rearrangement with ``g' = 1/g`` and
    ``exp(-d tau)``, and computes ``b - rho sigma i phi - d`` as
    ``sigma^2 (2 u i phi - phi^2) / (b - rho sigma i phi + d)``, so no term
    cancels as the volatility of variance tends to zero.
    """
    u = 0.5 if j == 1 else -0.5
    b = kappa - rho * sigma if j == 1 else kappa
    iphi = 1j * phi
    beta = b - rho * sigma * iphi
    w = 2.0 * u * iphi - phi * phi
    d = np.sqrt(beta * beta - sigma * sigma * w)
    d = np.where(d.real < 0, -d, d)
    plus = beta + d
    minus_over_s2 = w / plus
    g = sigma * sigma * w / (plus * plus)
    e = np.exp(-d * tau)
    D = minus_over_s2 * (1.0 - e) / (1.0 - g * e)
    log_term = (np.log1p(-g * e) - np.log1p(-g)) / (sigma * sigma)
    C = (r - q) * iphi * tau + kappa * theta * (minus_over_s2 * tau - 2.0 * log_term)
    f = np.exp(C + D * v0 + iphi * (x - logK))
    return (f / iphi).real, np.abs(f)


def _heston_integrand_textbook(phi, j, x, logK, r, q, kappa, theta, sigma, v0, rho, tau):
    """The same integrand evaluated literally from the textbook formula block."""
    u = 0.5 if j == 1 else -0.5
    b = kappa - rho * sigma if j == 1 else kappa
    iphi = 1j * phi
    d = np.sqrt((rho * sigma * iphi - b) ** 2 - sigma**2 * (2 * u * iphi - phi**2))
    d = np.where(d.real < 0, -d, d)
    g = (b - rho * sigma * iphi + d) / (b - rho * sigma * iphi - d)
    e = np.exp(d * tau)
    C = (r - q) * iphi * tau + kappa * theta / sigma**2 * (
        (b - rho * sigma * iphi + d) * tau - 2.0 * np.log((1.0 - g * e) / (1.0 - g))
    )
    D = (b - rho * sigma * iphi + d) / sigma**2 * ((1.0 - e) / (1.0 - g * e))
    f = np.exp(C + D * v0 + iphi * x)
    return (np.exp(-iphi * logK) * f / iphi).real, np.abs(f)


def _panels(lo, hi, width):
    n = max(1, int(math.ceil((hi - lo) / width)))
    return np.linspace(lo, hi, n + 1)


def _refine(edges, width):
    """Split every panel wider than ``width``."""
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        out.extend(_panels(a, b, width)[1:])
    return out


def _composite_nodes(edges, n=_PANEL_NODES):
    t, w = gauss_legendre_01(n)
    a, b = np.asarray(edges[:-1]), np.asarray(edges[1:])
    nodes = (a[:, None] + (b - a)[:, None] * t[None, :]).ravel()
    weights = ((b - a)[:, None] * w[None, :]).ravel()
    return nodes, weights


def heston_probabilities(
    r, q, kappa, theta, sigma, v0, rho, *, S0=100.0, K=100.0, T=0.5,
    decay_tol=1e-10, max_upper=204800.0, formulation="stable",
):
    """In-the-money probabilities ``(P1, P2)`` for arrays of parameter rows.

    The integral over ``[0, inf)`` is truncated at ``U``, starting at 200 and
    doubling per row until ``|f_j(U)| / U < decay_tol`` for both ``j``.
    """
    params = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (r, q, kappa, theta, sigma, v0, rho)))
    r, q, kappa, theta, sigma, v0, rho = params
    if T <= 0:
        raise DomainError("maturity must be positive")
    if formulation not in ("stable", "textbook"):
        raise DomainError(f"formulation must be 'stable' or 'textbook', got {formulation!r}")
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    integrand = _heston_integrand if formulation == "stable" else _heston_integrand_textbook
    x, logK = math.log(S0), math.log(K)
    cols = [v[:, None] for v in (r, q, kappa, theta, sigma, v0, rho)]

    def integrate(rows, nodes, weights):
        args = [c[rows] for c in cols]
        out, tails = [], []
        for j in (1, 2):
            val, mod = integrand(nodes[None, :], j, x, logK, *args, T)
            out.append(val @ weights)
            tails.append(mod[:, -1] / nodes[-1])
        return out, np.maximum(tails[0], tails[1])

    n = r.shape[0]
    I1, I2 = np.zeros(n), np.zeros(n)
    # e^{i phi (x - log K + (r - q) T)} sets the oscillation: panels hold at most
    # two periods, with widths halved from 50 so each row's rule depends only on that row
    omega = np.abs(x - logK + (r - q) * T)
    ratio = _PANEL_WIDTH * omega / (4.0 * math.pi)
    with np.errstate(divide="ignore"):
        level = np.where(ratio > 1.0, np.ceil(np.log2(np.maximum(ratio, 1.0))), 0.0).astype(int)
    for lv in np.unique(level):
        rows = np.flatnonzero(level == lv)
        width = _PANEL_WIDTH / 2.0**lv
        nodes, weights = _composite_nodes(_refine(_FIRST_EDGES, width))
        # evaluate the upper end exactly for the decay test
        nodes = np.append(nodes, _FIRST_EDGES[-1])
        weights = np.append(weights, 0.0)
        (I1[rows], I2[rows]), tail = integrate(rows, nodes, weights)
        upper = _FIRST_EDGES[-1]
        pending = rows[~(tail < decay_tol)]
        while pending.size:
            if 2.0 * upper > max_upper:
                raise EvaluationError(
                    f"Heston integrand has not decayed by phi={upper:g} for {pending.size} parameter rows",
                    row=np.array([p[pending[0]] for p in params]),
                )
            nodes, weights = _composite_nodes(_panels(upper, 2.0 * upper, width))
            nodes = np.append(nodes, 2.0 * upper)
            weights = np.append(weights, 0.0)
            (J1, J2), tail = integrate(pending, nodes, weights)
            I1[pending] += J1
            I2[pending] += J2
            upper *= 2.0
            pending = pending[~(tail < decay_tol)]
    P1 = 0.5 + I1 / math.pi
    P2 = 0.5 + I2 / math.pi
    eps = 1e-6
    bad = ~((P1 >= -eps) & (P1 <= 1 + eps) & (P2 >= -eps) & (P2 <= 1 + eps))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise NumericalInstabilityError(
            f"P1={P1[k]:.3g}, P2={P2[k]:.3g} outside [0, 1]", row=np.array([p[k] for p in params])
        )
    if not (np.all(np.isfinite(P1)) and np.all(np.isfinite(P2))):
        raise EvaluationError("non-finite Heston probability")
    return P1, P2


def heston_call(r, q, kappa, theta, sigma, v0, rho, *, S0=100.0, K=100.0, T=0.5, **kwargs):
    """European call price ``S0 e^{-q T} P1 - K e^{-r T} P2`` under the Heston model."""
    P1, P2 = heston_probabilities(r, q, kappa, theta, sigma, v0, rho, S0=S0, K=K, T=T, **kwargs)
    r = np.broadcast_to(np.asarray(r, dtype=float), P1.shape)
    q = np.broadcast_to(np.asarray(q, dtype=float), P1.shape)
    return S0 * np.exp(-q * T) * P1 - K * np.exp(-r * T) * P2


@dataclass(frozen=True)
class HestonModel:
    S0: float = 100.0
    K: float = 100.0
    T: float = 0.5
    chunk_rows: int = 2048
    input_names = ("r", "q", "kappa", "theta", "sigma", "sigma0", "rho")

    def __call__(self, X):
        X = np.atleast_2d(X)
        if X.shape[1] != 7:
            raise ValueError("Heston model takes 7 parameters per row")
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], self.chunk_rows):
            rows = X[s : s + self.chunk_rows]
            out[s : s + len(rows)] = heston_call(*rows.T, S0=self.S0, K=self.K, T=self.T)
        return out
