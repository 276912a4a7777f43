"""
Circular statistics primitives for timerefine.

Times of day live on a circle: 23:59 and 00:01 are neighbours. This module
provides the building blocks the refinement pipeline needs on that circle:

    - angle conversion (``to_radians``) and the ``CircularSample`` container,
    - modified Bessel functions and the von Mises pdf, cdf and sampler,
    - weighted mean direction / resultant length and its inverse for the
      concentration (``kappa_from_rbar``),
    - three hypothesis tests: Rao's spacing test (uniformity), a circular
      Hartigan dip test (unimodality) and Watson's U² goodness of fit.

Example usage:

    sample = CircularSample.from_hours([7.5, 8.0, 8.25, 19.0, 19.5, 20.0])
    rao = rao_spacing_test(sample, alpha=0.01)
    if rao.reject:
        dip = dip_test(sample, alpha=0.01)

Monte Carlo and bootstrap p-values are deterministic for a given seed; null
distributions depend only on (n, draws, seed) and are cached per process.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import diptest
import numpy as np
from scipy import optimize, special, stats

from .errors import SampleSizeError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
KAPPA_CAP = 1e4

# Tabulated U² critical value for a von Mises with fitted parameters.
WATSON_ESTIMATED_CRITICAL = {0.01: 0.141, 0.005: 0.187}

ArrayLike = Union[Sequence[float], np.ndarray]


class TestMethod(str, enum.Enum):
    RAO_SPACING = "RaoSpacing"
    HARTIGAN_DIP = "HartiganDip"
    WATSON_U2 = "WatsonU2"


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test.

    ``reject`` follows the p-value when there is one, otherwise the
    comparison of the statistic with ``critical_value``.
    """

    method: TestMethod
    statistic: float
    alpha: float
    reject: bool
    p_value: Optional[float] = None
    critical_value: Optional[float] = None
    n: int = 0
    statistic_degrees: Optional[float] = None


@dataclass(frozen=True, eq=False)
class CircularSample:
    """Sorted angles in [0, 2π)."""

    angles: np.ndarray

    @classmethod
    def from_angles(cls, values: ArrayLike) -> "CircularSample":
        angles = np.mod(np.asarray(values, dtype=float), TWO_PI)
        angles[angles >= TWO_PI] = 0.0
        angles = np.sort(angles)
        angles.setflags(write=False)
        return cls(angles)

    @classmethod
    def from_hours(cls, hours: ArrayLike) -> "CircularSample":
        return cls.from_angles(to_radians(hours))

    @property
    def n(self) -> int:
        return int(self.angles.size)

    def __len__(self) -> int:
        return self.n

    def ecdf(self, theta: ArrayLike) -> np.ndarray:
        """Fraction of angles less than or equal to ``theta``."""
        return np.searchsorted(self.angles, np.asarray(theta, dtype=float), side="right") / self.n

    def rotated(self, delta: float) -> "CircularSample":
        return CircularSample.from_angles(self.angles + delta)


@dataclass(frozen=True)
class CircularMean:
    mu: float
    rbar: float
    degenerate: bool = False


def as_angles(sample: Union[CircularSample, ArrayLike]) -> np.ndarray:
    if isinstance(sample, CircularSample):
        return sample.angles
    return np.mod(np.asarray(sample, dtype=float), TWO_PI)


def to_radians(hours: Union[float, ArrayLike]) -> Union[float, np.ndarray]:
    """Map hours of the day in [0, 24) onto [0, 2π)."""
    values = np.asarray(hours, dtype=float)
    if np.any(values < 0.0) or np.any(values >= 24.0):
        raise ValueError(f"hours of day must lie in [0, 24), got {hours!r}")
    out = values * TWO_PI / 24.0
    return float(out) if out.ndim == 0 else out


def to_hours(angles: Union[float, ArrayLike]) -> Union[float, np.ndarray]:
    out = np.mod(np.asarray(angles, dtype=float), TWO_PI) * 24.0 / TWO_PI
    return float(out) if out.ndim == 0 else out


def _check_kappa(kappa) -> np.ndarray:
    k = np.asarray(kappa, dtype=float)
    if np.any(k < 0) or np.any(np.isnan(k)):
        raise ValueError(f"concentration must be non-negative, got {kappa!r}")
    return k


def bessel_i0(kappa):
    """Modified Bessel function of the first kind, order 0."""
    k = _check_kappa(kappa)
    out = special.i0(k)
    return float(out) if out.ndim == 0 else out


def bessel_i1(kappa):
    """Modified Bessel function of the first kind, order 1."""
    k = _check_kappa(kappa)
    out = special.i1(k)
    return float(out) if out.ndim == 0 else out


def log_bessel_i0(kappa):
    k = _check_kappa(kappa)
    return np.log(special.i0e(k)) + k


def mean_resultant_ratio(kappa):
    """A(κ) = I₁(κ) / I₀(κ), the expected resultant length of a von Mises."""
    k = _check_kappa(kappa)
    out = special.i1e(k) / special.i0e(k)
    return float(out) if out.ndim == 0 else out


def kappa_from_rbar(rbar: float, tol: float = 1e-8, cap: float = KAPPA_CAP) -> float:
    """Solve A(κ) = r̄ for κ.

    Starts from the Banerjee approximation r̄(2 − r̄²)/(1 − r̄²) and refines
    with Newton steps until |A(κ) − r̄| ≤ ``tol``. The result is capped.
    """
    if rbar <= 0.0:
        return 0.0
    if rbar >= 1.0:
        return cap
    kappa = min(rbar * (2.0 - rbar ** 2) / (1.0 - rbar ** 2), cap)
    for _ in range(100):
        a = mean_resultant_ratio(kappa)
        err = a - rbar
        if abs(err) <= tol:
            break
        slope = 0.5 if kappa < 1e-12 else 1.0 - a / kappa - a * a
        if slope <= 0:
            break
        step = kappa - err / slope
        kappa = kappa / 2.0 if step <= 0 else step
        if kappa >= cap:
            return cap
    return float(kappa)


def von_mises_pdf(theta, mu: float, kappa: float):
    """Density 1/(2π I₀(κ)) · exp(κ cos(θ − μ)), computed in scaled form."""
    k = float(_check_kappa(kappa))
    theta = np.asarray(theta, dtype=float)
    out = np.exp(k * (np.cos(theta - mu) - 1.0)) / (TWO_PI * special.i0e(k))
    return float(out) if out.ndim == 0 else out


def von_mises_cdf(theta, mu: float, kappa: float):
    """Mass of a von Mises on the arc [0, θ), for θ in [0, 2π)."""
    k = float(_check_kappa(kappa))
    theta = np.asarray(theta, dtype=float)
    if k < 1e-12:
        out = np.clip(theta / TWO_PI, 0.0, 1.0)
    else:
        # scipy's cdf is not periodic: it grows by one per full turn
        out = stats.vonmises.cdf(theta - mu, k) - stats.vonmises.cdf(-mu, k)
        out = np.clip(out, 0.0, 1.0)
        out = np.where(theta <= 0.0, 0.0, out)
        out = np.where(theta >= TWO_PI, 1.0, out)
    return float(out) if out.ndim == 0 else out


def von_mises_sample(mu: float, kappa: float, n: int, seed: Optional[int] = None) -> CircularSample:
    """Draw ``n`` i.i.d. angles; ``kappa=0`` gives uniform draws."""
    k = float(_check_kappa(kappa))
    if n < 1:
        raise SampleSizeError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    return CircularSample.from_angles(rng.vonmises(mu, k, size=n))


def circular_mean_resultant(sample, weights: Optional[ArrayLike] = None) -> CircularMean:
    """Weighted mean direction μ in [0, 2π) and resultant length r̄ in [0, 1]."""
    angles = as_angles(sample)
    w = np.ones_like(angles) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != angles.shape:
        raise ValueError("weights must match the sample length")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    c = float(np.dot(w, np.cos(angles)))
    s = float(np.dot(w, np.sin(angles)))
    rbar = math.hypot(c, s) / float(w.sum())
    if rbar < 1e-12:
        return CircularMean(0.0, 0.0, degenerate=True)
    return CircularMean(float(np.mod(math.atan2(s, c), TWO_PI)), min(rbar, 1.0))


# -- Rao's spacing test -----------------------------------------------------

def rao_spacing_statistic(angles: np.ndarray) -> np.ndarray:
    """U = ½ Σ |Tᵢ − 2π/n| over the circular spacings of each row."""
    f = np.sort(np.asarray(angles, dtype=float), axis=-1)
    n = f.shape[-1]
    spacings = np.diff(f, axis=-1)
    wrap = TWO_PI - f[..., -1:] + f[..., :1]
    t = np.concatenate([spacings, wrap], axis=-1)
    return 0.5 * np.abs(t - TWO_PI / n).sum(axis=-1)


@lru_cache(maxsize=64)
def _rao_null(n: int, draws: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    chunk = max(1, 2_000_000 // n)
    parts = []
    remaining = draws
    while remaining > 0:
        size = min(chunk, remaining)
        parts.append(rao_spacing_statistic(rng.uniform(0.0, TWO_PI, size=(size, n))))
        remaining -= size
    null = np.sort(np.concatenate(parts))
    null.setflags(write=False)
    return null


def rao_spacing_test(sample, alpha: float = 0.01, mc_samples: int = 999, seed: int = 0) -> TestResult:
    """Rao's spacing test of circular uniformity with a Monte Carlo p-value.

    The p-value is the fraction of ``mc_samples`` uniform samples of the
    same size whose statistic is at least the observed one.
    """
    angles = as_angles(sample)
    n = angles.size
    if n < 4:
        raise SampleSizeError(f"Rao's spacing test needs at least 4 angles, got {n}")
    u = float(rao_spacing_statistic(angles))
    null = _rao_null(n, mc_samples, seed)
    p = float(null.size - np.searchsorted(null, u, side="left")) / mc_samples
    logger.debug("rao: n=%d U=%.4f (%.1f deg) p=%.4g", n, u, math.degrees(u), p)
    return TestResult(TestMethod.RAO_SPACING, u, alpha, p < alpha, p_value=p, n=n,
                      statistic_degrees=math.degrees(u))


# -- Hartigan's dip test on the circle -----------------------------------------

def circular_dip(angles) -> float:
    """Smallest linear dip over the n ways of cutting the circle at a sample point."""
    a = np.sort(as_angles(angles))
    best = np.inf
    for j in range(a.size):
        unrolled = np.concatenate([a[j:] - a[j], a[:j] + TWO_PI - a[j]])
        best = min(best, float(diptest.dipstat(unrolled)))
    return best


@lru_cache(maxsize=64)
def _dip_null(n: int, draws: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    null = np.sort([circular_dip(rng.uniform(0.0, TWO_PI, size=n)) for _ in range(draws)])
    null.setflags(write=False)
    return null


def dip_test(sample, alpha: float = 0.01, bootstrap_samples: int = 500, seed: int = 0) -> TestResult:
    """Circular Hartigan dip test with a bootstrap p-value under circular uniformity."""
    angles = as_angles(sample)
    n = angles.size
    if n < 4:
        raise SampleSizeError(f"the dip test needs at least 4 angles, got {n}")
    dip = circular_dip(angles)
    null = _dip_null(n, bootstrap_samples, seed)
    p = float(null.size - np.searchsorted(null, dip, side="left")) / bootstrap_samples
    logger.debug("dip: n=%d dip=%.5f p=%.4g", n, dip, p)
    return TestResult(TestMethod.HARTIGAN_DIP, dip, alpha, p < alpha, p_value=p, n=n)


# -- Watson's U² ----------------------------------------------------------------

def watson_u2_statistic(u: ArrayLike) -> float:
    """Computational form of U² on model-CDF values of the sorted sample."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    i = np.arange(1, n + 1)
    return float(np.sum((u - (2 * i - 1) / (2.0 * n)) ** 2) - n * (u.mean() - 0.5) ** 2 + 1.0 / (12 * n))


def watson_u2_sf(u2: float) -> float:
    """Asymptotic upper tail of U² under a fully specified null."""
    if u2 < 0.01:
        return 1.0
    m = np.arange(1, 101)
    p = 2.0 * np.sum((-1.0) ** (m - 1) * np.exp(-2.0 * m ** 2 * np.pi ** 2 * u2))
    return float(np.clip(p, 0.0, 1.0))


def watson_u2_critical(alpha: float) -> float:
    """Asymptotic critical value of U² under a fully specified null."""
    return float(optimize.brentq(lambda u: watson_u2_sf(u) - alpha, 0.011, 5.0))


def _cdf_values(angles: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    u = np.asarray(cdf(np.sort(angles)), dtype=float)
    if np.any(np.diff(u) < -1e-12) or np.any(u < -1e-12) or np.any(u > 1 + 1e-12):
        raise ValueError("model CDF is not a non-decreasing map into [0, 1] on the sample")
    return np.clip(u, 0.0, 1.0)


def watson_u2(
    sample,
    cdf: Callable[[np.ndarray], np.ndarray],
    alpha: float = 0.01,
    parameters_estimated: bool = False,
) -> TestResult:
    """Watson's U² goodness of fit of ``sample`` against ``cdf``.

    With a fully specified ``cdf`` the p-value comes from the limiting
    distribution of U². With ``parameters_estimated`` the decision uses the
    tabulated critical value (α=0.01 and α=0.005 are tabulated); use
    ``watson_u2_von_mises`` with a bootstrap for other levels.
    """
    angles = as_angles(sample)
    if angles.size < 1:
        raise SampleSizeError("Watson's U² needs at least one angle")
    stat = watson_u2_statistic(_cdf_values(angles, cdf))
    if parameters_estimated:
        if alpha not in WATSON_ESTIMATED_CRITICAL:
            raise ValueError(f"no tabulated U² critical value for alpha={alpha}; use a bootstrap")
        crit = WATSON_ESTIMATED_CRITICAL[alpha]
        return TestResult(TestMethod.WATSON_U2, stat, alpha, stat > crit, critical_value=crit, n=angles.size)
    p = watson_u2_sf(stat)
    return TestResult(TestMethod.WATSON_U2, stat, alpha, p < alpha, p_value=p,
                      critical_value=watson_u2_critical(alpha), n=angles.size)


def watson_u2_von_mises(
    sample,
    mu: float,
    kappa: float,
    alpha: float = 0.01,
    parameters_estimated: bool = True,
    bootstrap: int = 0,
    seed: int = 0,
) -> TestResult:
    """U² of ``sample`` against a von Mises(μ, κ).

    With ``bootstrap > 0`` (or an untabulated α for estimated parameters)
    the p-value is a parametric bootstrap: draw from the fitted law, refit
    μ and κ, and recompute U².
    """
    angles = as_angles(sample)

    def cdf(x):
        return von_mises_cdf(x, mu, kappa)

    if not parameters_estimated:
        return watson_u2(angles, cdf, alpha)
    if bootstrap <= 0 and alpha in WATSON_ESTIMATED_CRITICAL:
        return watson_u2(angles, cdf, alpha, parameters_estimated=True)

    draws = bootstrap if bootstrap > 0 else 500
    stat = watson_u2_statistic(_cdf_values(angles, cdf))
    rng = np.random.default_rng(seed)
    null = np.empty(draws)
    for b in range(draws):
        x = np.mod(rng.vonmises(mu, kappa, size=angles.size), TWO_PI)
        fit = circular_mean_resultant(x)
        k_hat = kappa_from_rbar(fit.rbar)
        null[b] = watson_u2_statistic(von_mises_cdf(np.sort(x), fit.mu, k_hat))
    p = float(np.mean(null >= stat))
    return TestResult(TestMethod.WATSON_U2, stat, alpha, p < alpha, p_value=p, n=angles.size)
