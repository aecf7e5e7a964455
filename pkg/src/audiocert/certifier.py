"""Chernoff certificates for bounded classifier scores.

Certifies tail probabilities of a score variable Z in [0, 1] from a k x n
matrix of i.i.d. draws (k independent batches of n samples each). The bound

    P[Z < 1/2] <= inf_{t<0} E[exp(t(Z - 1/2))]

is estimated by the batch means Y_j = mean_i exp(t (Z_ji - 1/2)) and reported
as A = max_j Y_j / delta, which over-estimates the true moment with failure
probability p(n, k, c) = (1 + n (1-delta)^2 / c^2)^(-k), c the coefficient of
variation of exp(tZ). Since c is unknown it is replaced by a one-sided upper
confidence limit c~, giving the overall guarantee

    P[certificate invalid] < alpha/2 + p(n, k, c~).

A certificate is issued when A < epsilon and p(n, k, c~) < alpha/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numba
import numpy as np
from scipy import special

from .errors import InvalidScoresError
from .types import Direction

DEFAULT_T_RANGE = (-50.0, -1e-4)
DEFAULT_GRID_SIZE = 200
CV_METHOD_THRESHOLD = 0.33
BOOTSTRAP_RESAMPLES = 2000
BOOTSTRAP_EXPANSION = 3.0

# resample index blocks are drawn 256 rows at a time so the stream is
# identical whether or not the full index matrix fits in the cache
_IDX_CHUNK_ROWS = 256
_IDX_CACHE_MAX_BYTES = 300 * 2**20
_idx_cache: dict = {}


@dataclass(frozen=True)
class CertBudget:
    """Sampling budget and failure budget for one certificate.

    n       samples per batch
    k       number of batches
    delta   slack factor in A = max_j Y_j / delta, 0 < delta < 1
    alpha   total failure probability, split evenly between the CV
            confidence limit and the Chernoff sampling error by default
    t_range tilt search interval; strictly negative for BONA_FIDE
            certificates, strictly positive for SPOOF
    """

    n: int
    k: int
    delta: float
    alpha: float
    t_range: tuple = DEFAULT_T_RANGE
    direction: Direction = Direction.BONA_FIDE

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise InvalidScoresError(f"need n >= 1 and k >= 1, got n={self.n} k={self.k}")
        if self.n * self.k < 2:
            raise InvalidScoresError("need at least two scores overall to estimate a CV")
        if not 0.0 < self.delta < 1.0:
            raise InvalidScoresError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidScoresError(f"alpha must be in (0, 1), got {self.alpha}")
        lo, hi = self.t_range
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi or lo * hi <= 0.0:
            raise InvalidScoresError(
                f"t_range must be finite, ordered and sign-definite, got {self.t_range}")
        if (hi if self.direction is Direction.BONA_FIDE else lo) * self.direction.t_sign <= 0:
            raise InvalidScoresError(
                f"t_range {self.t_range} inconsistent with direction {self.direction}")

    @property
    def m(self) -> int:
        return self.n * self.k

    def oriented(self, direction: Direction) -> "CertBudget":
        """Budget with the tilt interval mirrored to match `direction`."""
        if direction is self.direction:
            return self
        lo, hi = self.t_range
        return replace(self, t_range=(-hi, -lo), direction=direction)


@dataclass(frozen=True)
class Certificate:
    """Outcome of one certification run at one epsilon."""

    bound: float        # A = min_t max_j Y_j / delta, clamped to 1
    t_star: float       # tilt achieving the minimum (first grid index on ties)
    c_hat: float        # sample CV of exp(t* Z) pooled over all m draws
    c_tilde: float      # one-sided upper confidence limit for the CV
    error_prob: float   # p(n, k, c_tilde)
    certified: bool     # bound < epsilon and error_prob < validity share of alpha
    epsilon: float
    direction: Direction
    cv_method: str      # "mckay" | "bootstrap" | "degenerate"
    degenerate: bool


class CvBound(NamedTuple):
    c_tilde: float
    c_hat: float
    method: str


def t_grid(t_range=DEFAULT_T_RANGE, size=DEFAULT_GRID_SIZE) -> np.ndarray:
    """Geometric grid over the tilt interval, ordered by increasing magnitude.

    Both endpoints are included. Ties in the bound resolve to the smallest
    magnitude, which keeps exp(t(Z-1/2)) closest to 1 and the CV smallest.
    """
    lo, hi = t_range
    if lo >= hi or lo * hi <= 0.0:
        raise InvalidScoresError(f"invalid t_range {(lo, hi)}")
    if size < 2:
        raise InvalidScoresError(f"grid needs at least 2 points, got {size}")
    if hi < 0:
        return -np.geomspace(-hi, -lo, size)
    return np.geomspace(lo, hi, size)


def _as_score_matrix(scores, budget: CertBudget) -> np.ndarray:
    z = np.asarray(scores, dtype=np.float64)
    if z.ndim != 2 or z.shape != (budget.k, budget.n):
        raise InvalidScoresError(
            f"score matrix must have shape (k, n) = {(budget.k, budget.n)}, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidScoresError("score matrix contains non-finite entries")
    if z.min() < 0.0 or z.max() > 1.0:
        raise InvalidScoresError("scores must lie in [0, 1]")
    return z


def batch_statistic(scores, t: float, direction: Direction | None = None) -> np.ndarray:
    """Batch means Y_j = (1/n) sum_i exp(t (Z_ji - 1/2)) for one tilt t.

    The shifted exponent keeps |t (z - 1/2)| <= |t|/2, so the default range
    |t| <= 50 never overflows.
    """
    z = np.asarray(scores, dtype=np.float64)
    if z.ndim != 2:
        raise InvalidScoresError(f"score matrix must be 2-D, got shape {z.shape}")
    if direction is not None and t * direction.t_sign <= 0:
        raise InvalidScoresError(f"t={t} has the wrong sign for direction {direction}")
    return np.exp(t * (z - 0.5)).mean(axis=1)


def _objective_scan(z: np.ndarray, grid: np.ndarray, delta: float) -> np.ndarray:
    """max_j Y_j(t) / delta for every t on the grid, evaluated in chunks."""
    zc = (z - 0.5).ravel()
    k, n = z.shape
    out = np.empty(grid.shape[0])
    step = max(1, int(2**22 // max(zc.size, 1)))
    for s in range(0, grid.shape[0], step):
        ts = grid[s:s + step]
        e = np.exp(ts[:, None] * zc[None, :]).reshape(ts.size, k, n)
        out[s:s + ts.size] = e.mean(axis=2).max(axis=1) / delta
    return out


def chernoff_bound(scores, budget: CertBudget, *, grid=None,
                   grid_size=DEFAULT_GRID_SIZE) -> tuple[float, float]:
    """Minimum of A(t) = max_j Y_j(t)/delta over the tilt grid.

    Returns (bound, t_star) with the bound clamped to 1 (values above 1 are
    vacuous for a probability). Refining the grid with extra points can only
    lower the reported minimum.
    """
    z = _as_score_matrix(scores, budget)
    g = t_grid(budget.t_range, grid_size) if grid is None else np.asarray(grid, dtype=np.float64)
    obj = _objective_scan(z, g, budget.delta)
    i = int(np.argmin(obj))
    return min(float(obj[i]), 1.0), float(g[i])


def error_probability(n, k, delta, c):
    """p(n, k, c) = (1 + n (1-delta)^2 / c^2)^(-k), the probability that
    max_j Y_j underestimates E[exp(tZ)] by more than the factor delta.

    Vectorizes over c. c = 0 gives 0, c = inf gives 1.
    """
    n = float(n)
    k = float(k)
    if not 0.0 < delta < 1.0:
        raise InvalidScoresError(f"delta must be in (0, 1), got {delta}")
    c = np.asarray(c, dtype=np.float64)
    if np.any(c < 0.0):
        raise InvalidScoresError("coefficient of variation must be non-negative")
    with np.errstate(divide="ignore"):
        a = n * (1.0 - delta) ** 2 / np.square(c)
    p = np.exp(-k * np.log1p(a))
    return float(p) if np.isscalar(c) or p.ndim == 0 else p


def sample_cv(values) -> float:
    """Sample coefficient of variation sd/mean (ddof=1) of a positive-mean sample."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise InvalidScoresError("need at least two values for a CV")
    if not np.all(np.isfinite(v)):
        raise InvalidScoresError("values contain non-finite entries")
    mean = float(v.mean())
    if mean <= 0.0:
        raise InvalidScoresError(f"sample mean must be positive, got {mean}")
    if np.ptp(v) == 0.0:
        return 0.0  # a constant sample has CV exactly 0; the rounded mean does not
    return float(v.std(ddof=1)) / mean


def chi_square_lower_quantile(df, p) -> float:
    """Lower p-quantile of the chi-square distribution with df degrees of
    freedom, through inversion of the regularized incomplete gamma function.
    """
    if df <= 0:
        raise InvalidScoresError(f"degrees of freedom must be positive, got {df}")
    if not 0.0 < p < 1.0:
        raise InvalidScoresError(f"quantile level must be in (0, 1), got {p}")
    return float(2.0 * special.gammaincinv(df / 2.0, p))


@numba.njit(cache=True)
def _resample_cvs(values, idx, resamples, m, out):  # pragma: no cover - jitted
    # four interleaved partial sums per moment keep the serial float-add
    # latency off the critical path; this fixes the summation order, it is
    # not a parallelization
    for b in range(resamples):
        base = b * m
        s1a = 0.0
        s1b = 0.0
        s1c = 0.0
        s1d = 0.0
        s2a = 0.0
        s2b = 0.0
        s2c = 0.0
        s2d = 0.0
        lim = m - (m % 4)
        i = 0
        while i < lim:
            x0 = values[idx[base + i]]
            x1 = values[idx[base + i + 1]]
            x2 = values[idx[base + i + 2]]
            x3 = values[idx[base + i + 3]]
            s1a += x0
            s2a += x0 * x0
            s1b += x1
            s2b += x1 * x1
            s1c += x2
            s2c += x2 * x2
            s1d += x3
            s2d += x3 * x3
            i += 4
        while i < m:
            x = values[idx[base + i]]
            s1a += x
            s2a += x * x
            i += 1
        s1 = (s1a + s1b) + (s1c + s1d)
        s2 = (s2a + s2b) + (s2c + s2d)
        mu = s1 / m
        var = (s2 - m * mu * mu) / (m - 1)
        if var < 0.0:
            var = 0.0
        out[b] = math.sqrt(var) / mu


def _seed_key(seed) -> tuple:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def _bootstrap_indices(seed, resamples, m) -> np.ndarray:
    key = (_seed_key(seed), int(resamples), int(m))
    hit = _idx_cache.get(key)
    if hit is not None:
        return hit
    rng = np.random.default_rng(seed)
    parts = []
    for row in range(0, resamples, _IDX_CHUNK_ROWS):
        rows = min(_IDX_CHUNK_ROWS, resamples - row)
        parts.append(rng.integers(0, m, size=rows * m, dtype=np.uint32))
    idx = np.concatenate(parts)
    if idx.nbytes <= _IDX_CACHE_MAX_BYTES:
        _idx_cache.clear()  # keep at most one block resident
        _idx_cache[key] = idx
    return idx


def cv_upper_bound(values, confidence_alpha, *, seed=0,
                   method_threshold=CV_METHOD_THRESHOLD,
                   resamples=BOOTSTRAP_RESAMPLES,
                   expansion=BOOTSTRAP_EXPANSION) -> CvBound:
    """One-sided upper confidence limit c~ for the coefficient of variation,
    with P[c > c~] < confidence_alpha.

    Small c_hat (<= method_threshold): exact inversion of McKay's chi-square
    approximation at percentile confidence_alpha/2,

        c~ = c_hat sqrt(nu / (chi2_p(nu) (1 + c_hat^2) - nu c_hat^2)),  nu = m-1,

    infinite when the denominator is not positive (the sample cannot bound
    the CV at that confidence). Large c_hat: McKay's normal-theory argument
    degrades, so fall back to an expanded percentile bootstrap on the log
    scale: the distance from ln c_hat to the 1 - confidence_alpha/2 resample
    quantile is stretched by `expansion` to compensate for the resample
    distribution systematically missing unseen tail mass. Both paths are
    floored at c_hat. A zero-variance sample short-circuits to c~ = 0 with
    method "degenerate".
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    c_hat = sample_cv(v)
    if not 0.0 < confidence_alpha < 1.0:
        raise InvalidScoresError(f"confidence_alpha must be in (0, 1), got {confidence_alpha}")
    if c_hat == 0.0:
        return CvBound(0.0, 0.0, "degenerate")
    m = v.size
    if c_hat <= method_threshold:
        nu = m - 1
        u1 = chi_square_lower_quantile(nu, confidence_alpha / 2.0)
        den = u1 * (1.0 + c_hat**2) - nu * c_hat**2
        c_tilde = c_hat * math.sqrt(nu / den) if den > 0.0 else math.inf
        method = "mckay"
    else:
        idx = _bootstrap_indices(seed, resamples, m)
        cvs = np.empty(resamples)
        _resample_cvs(v, idx, resamples, m, cvs)
        q = float(np.quantile(cvs, 1.0 - confidence_alpha / 2.0))
        if q > 0.0:
            c_tilde = math.exp(math.log(c_hat) + expansion * (math.log(q) - math.log(c_hat)))
        else:
            c_tilde = c_hat
        method = "bootstrap"
    return CvBound(max(c_tilde, c_hat), c_hat, method)


def certify_all(scores, budget: CertBudget, epsilons: Sequence[float], *,
                bootstrap_seed=0, alpha_split=0.5,
                grid_size=DEFAULT_GRID_SIZE) -> list[Certificate]:
    """Certificates for one score matrix at several epsilon thresholds.

    The expensive parts (tilt scan, CV limit) are shared; only the epsilon
    comparison differs per certificate. alpha_split is the fraction of alpha
    budgeted to the CV confidence limit, the rest gates error_prob.
    """
    z = _as_score_matrix(scores, budget)
    if not epsilons:
        raise InvalidScoresError("need at least one epsilon")
    for eps in epsilons:
        if not 0.0 < eps < 1.0:
            raise InvalidScoresError(f"epsilon must be in (0, 1), got {eps}")
    if not 0.0 < alpha_split < 1.0:
        raise InvalidScoresError(f"alpha_split must be in (0, 1), got {alpha_split}")

    grid = t_grid(budget.t_range, grid_size)
    obj = _objective_scan(z, grid, budget.delta)
    i = int(np.argmin(obj))
    bound = min(float(obj[i]), 1.0)
    t_star = float(grid[i])

    pooled = np.exp(t_star * (z - 0.5)).ravel()
    cv = cv_upper_bound(pooled, alpha_split * budget.alpha, seed=bootstrap_seed)
    degenerate = cv.method == "degenerate"
    if degenerate:
        err = 0.0
    else:
        err = error_probability(budget.n, budget.k, budget.delta, cv.c_tilde)
    validity_alpha = (1.0 - alpha_split) * budget.alpha

    return [
        Certificate(
            bound=bound, t_star=t_star, c_hat=cv.c_hat, c_tilde=cv.c_tilde,
            error_prob=err, certified=bool(bound < eps and err < validity_alpha),
            epsilon=float(eps), direction=budget.direction,
            cv_method=cv.method, degenerate=degenerate,
        )
        for eps in epsilons
    ]


def certify(scores, budget: CertBudget, epsilon: float, *, bootstrap_seed=0,
            alpha_split=0.5, grid_size=DEFAULT_GRID_SIZE) -> Certificate:
    """Single-epsilon wrapper around certify_all."""
    return certify_all(scores, budget, [epsilon], bootstrap_seed=bootstrap_seed,
                       alpha_split=alpha_split, grid_size=grid_size)[0]
