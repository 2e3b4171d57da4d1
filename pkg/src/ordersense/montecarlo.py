"""Monte Carlo estimation of first-order and total Sobol indices.

Two independent ``N x k`` uniform matrices A and B are drawn from counter-based
streams and mapped through the input quantile functions. The model is evaluated
on A, B and on every ``AB_i`` (A with column i taken from B), ``N (k + 2)``
evaluations in all.

* first order (pick-freeze): ``Cov(f(B), f(AB_i)) / Var f``
* total effect (Jansen): ``mean((f(A) - f(AB_i))^2) / (2 Var f)``

``Var f`` is pooled over the A and B evaluations. Confidence intervals come
from a percentile bootstrap over rows.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import DegenerateModelError, check_finite_outputs, check_inputs
from .rng import BLOCK_ROWS, default_seed, uniforms

__all__ = [
    "SobolEstimate",
    "PickFreezeSample",
    "MonteCarloSobol",
    "estimate_indices",
    "bootstrap_ci",
    "significant_digits",
    "draw_pick_freeze",
]

STREAM_A = 1
STREAM_B = 2
STREAM_BOOTSTRAP = 3
MIN_SAMPLES = 1000
MIN_BOOTSTRAP = 500


@dataclass(frozen=True)
class SobolEstimate:
    kind: str  # "first" or "total"
    index: int
    value: float
    ci95: tuple
    n_samples: int
    seed: int
    estimator: str
    name: str = ""

    @property
    def half_width(self):
        return 0.5 * (self.ci95[1] - self.ci95[0])

    @property
    def digits(self):
        return significant_digits(self)


def significant_digits(estimate, max_digits=12):
    """Largest ``d`` with CI half-width below ``0.5 * 10**-d`` (0 when none qualifies)."""
    hw = estimate.half_width if isinstance(estimate, SobolEstimate) else float(estimate)
    if not math.isfinite(hw):
        return 0
    d = 0
    while d < max_digits and hw < 0.5 * 10.0 ** (-(d + 1)):
        d += 1
    return d


@dataclass
class PickFreezeSample:
    """Model evaluations on A, B and every AB_i."""

    fA: np.ndarray
    fB: np.ndarray
    fAB: np.ndarray  # (N, k)

    @property
    def n(self):
        return self.fA.shape[0]

    @property
    def k(self):
        return self.fAB.shape[1]


def _evaluate(model, X, chunk_rows, n_jobs):
    """Evaluate ``model`` row-chunk by row-chunk; chunk results are joined in order."""
    chunks = [X[s : s + chunk_rows] for s in range(0, X.shape[0], chunk_rows)]
    if n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda c: np.asarray(model(c), dtype=float), chunks))
    else:
        parts = [np.asarray(model(c), dtype=float) for c in chunks]
    y = np.concatenate(parts) if parts else np.empty(0)
    return check_finite_outputs(y, X)


def _map_inputs(U, inputs):
    return np.column_stack([d.sample(U[:, j]) for j, d in enumerate(inputs)])


def draw_pick_freeze(model, inputs, n_samples, seed, *, chunk_rows=BLOCK_ROWS, n_jobs=1):
    """Draw A and B, evaluate the model on A, B and each AB_i."""
    inputs = check_inputs(inputs)
    k = len(inputs)
    A = _map_inputs(uniforms(seed, STREAM_A, n_samples, k, n_jobs=n_jobs), inputs)
    B = _map_inputs(uniforms(seed, STREAM_B, n_samples, k, n_jobs=n_jobs), inputs)
    fA = _evaluate(model, A, chunk_rows, n_jobs)
    fB = _evaluate(model, B, chunk_rows, n_jobs)
    fAB = np.empty((n_samples, k))
    for i in range(k):
        AB = A.copy()
        AB[:, i] = B[:, i]
        fAB[:, i] = _evaluate(model, AB, chunk_rows, n_jobs)
    return PickFreezeSample(fA, fB, fAB)


def _row_statistics(sample):
    """Per-row quantities whose column sums determine every index estimate.

    Columns: fA, fB, fA^2, fB^2, then per input fAB_i, fB*fAB_i, (fA - fAB_i)^2.
    Evaluations are shifted by the pooled mean first; the indices are shift invariant.
    """
    shift = 0.5 * (np.mean(sample.fA) + np.mean(sample.fB))
    fA = sample.fA - shift
    fB = sample.fB - shift
    fAB = sample.fAB - shift
    cols = [fA, fB, fA * fA, fB * fB]
    for i in range(sample.k):
        cols += [fAB[:, i], fB * fAB[:, i], (fA - fAB[:, i]) ** 2]
    return np.column_stack(cols)


def _indices_from_sums(sums, n, k):
    """Indices from column sums (first axis may index bootstrap replicates)."""
    sums = np.atleast_2d(sums)
    sA, sB, sA2, sB2 = sums[:, 0], sums[:, 1], sums[:, 2], sums[:, 3]
    mean = (sA + sB) / (2 * n)
    var = (sA2 + sB2) / (2 * n) - mean * mean
    first = np.empty((sums.shape[0], k))
    total = np.empty((sums.shape[0], k))
    for i in range(k):
        sAB, sBAB, sJ = sums[:, 4 + 3 * i], sums[:, 5 + 3 * i], sums[:, 6 + 3 * i]
        cov = sBAB / n - (sB / n) * (sAB / n)
        with np.errstate(divide="ignore", invalid="ignore"):
            first[:, i] = cov / var
            total[:, i] = sJ / (2 * n) / var
    return first, total, var


def _point_estimates(sample):
    stats = _row_statistics(sample)
    first, total, var = _indices_from_sums(stats.sum(axis=0), sample.n, sample.k)
    return first[0], total[0], float(var[0])


def bootstrap_ci(sample, n_bootstrap=1000, seed=None, *, level=0.95):
    """Percentile bootstrap intervals for every first-order and total index.

    Rows of (f(A), f(B), f(AB_i)) are resampled jointly. Returns two ``(k, 2)``
    arrays ``(first_ci, total_ci)``.
    """
    if n_bootstrap < MIN_BOOTSTRAP:
        raise ValueError(f"n_bootstrap must be at least {MIN_BOOTSTRAP}")
    seed = default_seed() if seed is None else seed
    stats = _row_statistics(sample)
    n, k = sample.n, sample.k
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), STREAM_BOOTSTRAP, n, k])))
    sums = np.empty((n_bootstrap, stats.shape[1]))
    idx_dtype = np.int32 if n < 2**31 else np.int64
    batch = max(1, min(8, 2**26 // max(n, 1)))
    for start in range(0, n_bootstrap, batch):
        m = min(batch, n_bootstrap - start)
        counts = np.empty((m, n))
        for r in range(m):
            counts[r] = np.bincount(rng.integers(0, n, size=n, dtype=idx_dtype), minlength=n)
        sums[start : start + m] = counts @ stats
    first, total, _ = _indices_from_sums(sums, n, k)
    alpha = (1.0 - level) / 2.0
    q = [alpha, 1.0 - alpha]
    first_ci = np.nanquantile(first, q, axis=0).T
    total_ci = np.nanquantile(total, q, axis=0).T
    return first_ci, total_ci


def estimate_indices(model, inputs, n_samples, seed=None, *, n_bootstrap=1000, names=None, chunk_rows=BLOCK_ROWS, n_jobs=1):
    """First-order and total index estimates with bootstrap CIs for every input.

    Returns a list ordered ``[S_1, S_T1, S_2, S_T2, ...]``.
    """
    est = MonteCarloSobol(
        n_samples=n_samples, n_bootstrap=n_bootstrap, seed=seed, chunk_rows=chunk_rows, n_jobs=n_jobs
    ).fit(model, inputs, names=names)
    return est.estimates_


class MonteCarloSobol(BaseEstimator):
    """Pick-freeze / Jansen Sobol index estimator.

    Parameters
    ----------
    n_samples : int
        Rows N of each base matrix, at least 1000; the model is evaluated ``N (k + 2)`` times.
    n_bootstrap : int
        Bootstrap resamples for the 95% intervals; 0 disables them, otherwise at least 500.
    seed : int or None
        Stream key; ``None`` reads ``ORDERSENSE_SEED`` or falls back to 42.
    chunk_rows : int
        Rows passed to the model per call.
    n_jobs : int
        Threads used for model evaluation. Results do not depend on it.

    Attributes
    ----------
    first_order_, total_ : ndarray of shape (k,)
    first_order_ci_, total_ci_ : ndarray of shape (k, 2)
    variance_ : float
    estimates_ : list of SobolEstimate
    sample_ : PickFreezeSample
    """

    def __init__(self, n_samples=100_000, n_bootstrap=1000, seed=None, chunk_rows=BLOCK_ROWS, n_jobs=1):
        self.n_samples = n_samples
        self.n_bootstrap = n_bootstrap
        self.seed = seed
        self.chunk_rows = chunk_rows
        self.n_jobs = n_jobs

    def fit(self, model, inputs, names=None):
        inputs = check_inputs(inputs)
        if self.n_samples < MIN_SAMPLES:
            raise ValueError(f"n_samples must be at least {MIN_SAMPLES}")
        if self.n_bootstrap and self.n_bootstrap < MIN_BOOTSTRAP:
            raise ValueError(f"n_bootstrap must be 0 or at least {MIN_BOOTSTRAP}")
        seed = default_seed() if self.seed is None else int(self.seed)
        sample = draw_pick_freeze(model, inputs, int(self.n_samples), seed, chunk_rows=self.chunk_rows, n_jobs=self.n_jobs)
        return self._fit_sample(sample, seed, names)

    def _fit_sample(self, sample, seed, names=None):
        first, total, var = _point_estimates(sample)
        if not var > 0 or not np.isfinite(var):
            raise DegenerateModelError("model output has zero variance on the sample")
        k = sample.k
        if self.n_bootstrap:
            first_ci, total_ci = bootstrap_ci(sample, self.n_bootstrap, seed)
        else:
            first_ci = np.column_stack([first, first])
            total_ci = np.column_stack([total, total])
        # the percentile interval is widened to contain the point estimate
        first_ci = np.column_stack([np.minimum(first_ci[:, 0], first), np.maximum(first_ci[:, 1], first)])
        total_ci = np.column_stack([np.minimum(total_ci[:, 0], total), np.maximum(total_ci[:, 1], total)])
        names = list(names) if names is not None else [f"x{i + 1}" for i in range(k)]
        estimates = []
        for i in range(k):
            estimates.append(
                SobolEstimate("first", i, float(first[i]), tuple(map(float, first_ci[i])), sample.n, seed, "pick-freeze", names[i])
            )
            estimates.append(
                SobolEstimate("total", i, float(total[i]), tuple(map(float, total_ci[i])), sample.n, seed, "jansen", names[i])
            )
        self.sample_ = sample
        self.first_order_ = first
        self.total_ = total
        self.first_order_ci_ = first_ci
        self.total_ci_ = total_ci
        self.variance_ = var
        self.estimates_ = estimates
        self.n_evaluations_ = sample.n * (k + 2)
        return self
