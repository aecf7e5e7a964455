"""Independent references and synthetic score models for validating the certifier.

The closed-form references here are computed with mpmath extended-precision
arithmetic and bisection, deliberately avoiding the scipy code paths the
certifier uses, so a regression in either side shows up as disagreement.
The Monte Carlo harnesses (soundness, CV coverage) exercise the shipped
implementation on distributions whose tails are known analytically.
"""
from __future__ import annotations

from dataclasses import dataclass

import mpmath as mp
import numpy as np

from . import certifier
from .types import Direction


def mp_error_probability(n, k, delta, c, dps=50) -> float:
    """(1 + n (1-delta)^2 / c^2)^(-k) evaluated at `dps` decimal digits."""
    with mp.workdps(dps):
        a = mp.mpf(n) * (1 - mp.mpf(delta)) ** 2 / mp.mpf(c) ** 2
        return float((1 + a) ** (-mp.mpf(k)))


def mp_chi_square_cdf(x, df, dps=40) -> float:
    """Regularized lower incomplete gamma P(df/2, x/2)."""
    with mp.workdps(dps):
        return float(mp.gammainc(mp.mpf(df) / 2, 0, mp.mpf(x) / 2, regularized=True))


def mp_chi_square_quantile(df, p, dps=40, tol=1e-12) -> float:
    """Lower p-quantile of chi-square(df) by bisection on the mpmath CDF."""
    with mp.workdps(dps):
        df_ = mp.mpf(df)
        p_ = mp.mpf(p)
        lo, hi = mp.mpf(0), df_ + 1
        while mp.gammainc(df_ / 2, 0, hi / 2, regularized=True) < p_:
            hi *= 2
        for _ in range(400):
            mid = (lo + hi) / 2
            if mp.gammainc(df_ / 2, 0, mid / 2, regularized=True) < p_:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol * hi:
                break
        return float((lo + hi) / 2)


# ---------------------------------------------------------------------------
# synthetic score models with analytic tails


@dataclass(frozen=True)
class BetaScores:
    """Scores distributed Beta(a, b); P[Z < 1/2] is a regularized incomplete
    beta value, and moments of exp(tZ) come from numerical quadrature."""

    a: float
    b: float

    @property
    def name(self):
        return f"beta({self.a:g},{self.b:g})"

    def sample(self, rng: np.random.Generator, size):
        return rng.beta(self.a, self.b, size)

    def tail(self, direction: Direction) -> float:
        below = float(mp.betainc(self.a, self.b, 0, mp.mpf(1) / 2, regularized=True))
        return below if direction is Direction.BONA_FIDE else 1.0 - below

    def mgf_shifted(self, t, dps=30) -> float:
        """E[exp(t (Z - 1/2))] by quadrature."""
        with mp.workdps(dps):
            a, b = mp.mpf(self.a), mp.mpf(self.b)
            norm = mp.beta(a, b)
            f = lambda z: z ** (a - 1) * (1 - z) ** (b - 1) / norm * mp.e ** (t * (z - mp.mpf(1) / 2))
            return float(mp.quad(f, [0, mp.mpf(1) / 2, 1]))

    def chernoff_value(self, t_range, dps=30) -> float:
        """inf over the tilt interval of the shifted moment, via golden search."""
        lo, hi = t_range
        f = lambda t: self.mgf_shifted(t, dps=dps)
        phi = (np.sqrt(5) - 1) / 2
        a, b = float(lo), float(hi)
        c, d = b - phi * (b - a), a + phi * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(80):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - phi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + phi * (b - a)
                fd = f(d)
        return min(fc, fd)


@dataclass(frozen=True)
class TwoPointScores:
    """Z = lo with probability w, hi otherwise. Everything is closed-form."""

    lo: float
    hi: float
    w: float

    @property
    def name(self):
        return f"twopoint({self.lo:g}/{self.hi:g},w={self.w:g})"

    def sample(self, rng: np.random.Generator, size):
        return np.where(rng.random(size) < self.w, self.lo, self.hi)

    def tail(self, direction: Direction) -> float:
        if direction is Direction.BONA_FIDE:
            return self.w * (self.lo < 0.5) + (1 - self.w) * (self.hi < 0.5)
        return self.w * (self.lo > 0.5) + (1 - self.w) * (self.hi > 0.5)

    def mgf_shifted(self, t) -> float:
        return float(self.w * np.exp(t * (self.lo - 0.5))
                     + (1 - self.w) * np.exp(t * (self.hi - 0.5)))


@dataclass(frozen=True)
class ConstantScores:
    """Degenerate scores, all equal to z0."""

    z0: float

    @property
    def name(self):
        return f"constant({self.z0:g})"

    def sample(self, rng: np.random.Generator, size):
        return np.full(size, self.z0)

    def tail(self, direction: Direction) -> float:
        if direction is Direction.BONA_FIDE:
            return float(self.z0 < 0.5)
        return float(self.z0 > 0.5)


# ---------------------------------------------------------------------------
# Monte Carlo harnesses (these run the shipped certifier on purpose)


def soundness_trial(model, budget, epsilon, trial_seed) -> dict:
    """Draw one k x n score matrix from `model`, certify it, and compare the
    claimed bound against the model's analytic tail.

    A violation is a certificate that both undershoots the true tail and
    passes its own error_prob gate; the construction promises these are
    jointly rarer than alpha.
    """
    rng = np.random.default_rng(trial_seed)
    z = model.sample(rng, (budget.k, budget.n))
    cert = certifier.certify(z, budget, epsilon)
    tail = model.tail(budget.direction)
    unsound = cert.bound < tail and cert.error_prob < budget.alpha / 2.0
    return {"violation": bool(unsound), "bound": cert.bound,
            "error_prob": cert.error_prob, "tail": tail, "cert": cert}


def run_soundness(model, budget, epsilon, trials, seed) -> dict:
    """Violation rate of the shipped certifier over `trials` independent draws."""
    violations = 0
    bounds = np.empty(trials)
    for i in range(trials):
        r = soundness_trial(model, budget, epsilon, (seed, i))
        violations += r["violation"]
        bounds[i] = r["bound"]
    return {"trials": trials, "violations": violations,
            "violation_rate": violations / trials,
            "mean_bound": float(bounds.mean()),
            "tail": model.tail(budget.direction)}


def normal_sampler(mean, sd):
    cv = sd / mean
    return (lambda rng, m: rng.normal(mean, sd, m)), cv


def lognormal_sampler(cv):
    sigma = float(np.sqrt(np.log1p(cv * cv)))
    return (lambda rng, m: rng.lognormal(0.0, sigma, m)), cv


def cv_coverage(sampler, true_cv, m, alpha, trials, seed) -> dict:
    """Empirical frequency of {c~ >= true c} for the shipped cv_upper_bound.

    Each trial draws a fresh sample and a fresh bootstrap seed, so trials are
    independent and the frequency estimates the marginal coverage.
    """
    rng = np.random.default_rng(seed)
    covered = 0
    methods = {}
    for i in range(trials):
        x = sampler(rng, m)
        cb = certifier.cv_upper_bound(x, alpha / 2.0, seed=(seed, i))
        covered += cb.c_tilde >= true_cv
        methods[cb.method] = methods.get(cb.method, 0) + 1
    return {"trials": trials, "coverage": covered / trials, "methods": methods}
