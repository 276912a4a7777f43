"""
Mixtures of von Mises distributions for timerefine.

A label whose timestamps cluster around several times of day is modelled as
a weighted sum of von Mises components. This module fits such mixtures by
expectation maximisation, picks the number of components with the Bayesian
information criterion and assigns every event to its most likely component.

Example usage:

    selection = select_components(sample, max_components=5, delta_threshold=10.0)
    model = selection.model
    assignment = assign(model, sample)
    for k, (start, end) in enumerate(assignment.hour_ranges()):
        print(f"cluster {k + 1}: {start:.2f}-{end:.2f}")
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .circstats import (
    TWO_PI,
    KAPPA_CAP,
    as_angles,
    kappa_from_rbar,
    log_bessel_i0,
    to_hours,
    von_mises_cdf,
)
from .errors import FitError

logger = logging.getLogger(__name__)

EMPTY_COMPONENT_MASS = 1e-8
TIE_TOLERANCE = 1e-12
DECISION_GRID = 2880


@dataclass(frozen=True)
class VonMisesComponent:
    weight: float
    mu: float
    kappa: float

    def __post_init__(self) -> None:
        if not 0.0 < self.weight <= 1.0 + 1e-12:
            raise ValueError(f"component weight must lie in (0, 1], got {self.weight}")
        if self.kappa < 0.0:
            raise ValueError(f"component concentration must be non-negative, got {self.kappa}")
        if not 0.0 <= self.mu < TWO_PI:
            raise ValueError(f"component mean must lie in [0, 2π), got {self.mu}")

    @property
    def mu_hours(self) -> float:
        return self.mu * 24.0 / TWO_PI


@dataclass(frozen=True)
class VonMisesMixture:
    """Weighted von Mises components plus the diagnostics of the fit that produced them."""

    components: Tuple[VonMisesComponent, ...]
    log_likelihood: float = float("nan")
    converged: bool = True
    iterations: int = 0
    log_likelihood_trace: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def n_parameters(self) -> int:
        return 3 * self.m - 1

    def _params(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.array([c.weight for c in self.components])
        mu = np.array([c.mu for c in self.components])
        kappa = np.array([c.kappa for c in self.components])
        return w, mu, kappa

    def weighted_log_densities(self, theta) -> np.ndarray:
        """log(αⱼ · fⱼ(θ)) with shape (len(θ), m)."""
        w, mu, kappa = self._params()
        return _weighted_log_densities(np.atleast_1d(np.asarray(theta, dtype=float)), w, mu, kappa)

    def pdf(self, theta):
        out = np.exp(logsumexp(self.weighted_log_densities(theta), axis=1))
        return float(out[0]) if np.ndim(theta) == 0 else out

    def cdf(self, theta):
        w, mu, kappa = self._params()
        x = np.atleast_1d(np.asarray(theta, dtype=float))
        out = sum(wj * np.asarray(von_mises_cdf(x, mj, kj)) for wj, mj, kj in zip(w, mu, kappa))
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if np.ndim(theta) == 0 else out

    def posterior(self, theta) -> np.ndarray:
        log_d = self.weighted_log_densities(theta)
        return np.exp(log_d - logsumexp(log_d, axis=1, keepdims=True))

    def log_likelihood_of(self, sample) -> float:
        return float(logsumexp(self.weighted_log_densities(as_angles(sample)), axis=1).sum())


@dataclass(frozen=True)
class ModelSelectionEntry:
    m: int
    bic: float
    log_likelihood: float
    n_parameters: int
    n: int


@dataclass
class ModelSelection:
    entries: List[ModelSelectionEntry]
    chosen: int
    models: Dict[int, VonMisesMixture] = field(default_factory=dict)

    @property
    def model(self) -> VonMisesMixture:
        return self.models[self.chosen]


@dataclass
class ClusterAssignment:
    """Cluster index and responsibilities per sample point.

    ``ranges`` holds, per component, the shortest arc (start, end) in
    radians covering the points assigned to it, or ``None`` when no point
    was assigned. ``decision_arcs`` holds the arcs where the component has
    the largest posterior; an arc with end < start wraps past midnight.
    """

    labels: np.ndarray
    posterior: np.ndarray
    ranges: List[Optional[Tuple[float, float]]]
    decision_arcs: List[List[Tuple[float, float]]]

    def hour_ranges(self) -> List[Optional[Tuple[float, float]]]:
        return [None if r is None else (float(to_hours(r[0])), float(to_hours(r[1]))) for r in self.ranges]

    def sizes(self) -> List[int]:
        return [int(np.sum(self.labels == k)) for k in range(self.posterior.shape[1])]


def _weighted_log_densities(theta: np.ndarray, w: np.ndarray, mu: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    return (
        log_w[None, :]
        + kappa[None, :] * np.cos(theta[:, None] - mu[None, :])
        - math.log(TWO_PI)
        - log_bessel_i0(kappa)[None, :]
    )


def _em_run(
    angles: np.ndarray,
    m: int,
    rng: np.random.Generator,
    tol: float,
    max_iter: int,
) -> Optional[VonMisesMixture]:
    n = angles.size
    mu = angles[rng.choice(n, size=m, replace=False)].copy()
    kappa = np.ones(m)
    w = np.full(m, 1.0 / m)
    cos_t, sin_t = np.cos(angles), np.sin(angles)
    trace: List[float] = []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        log_d = _weighted_log_densities(angles, w, mu, kappa)
        norm = logsumexp(log_d, axis=1)
        ll = float(norm.sum())
        if trace and abs(ll - trace[-1]) < tol:
            trace.append(ll)
            converged = True
            break
        trace.append(ll)

        resp = np.exp(log_d - norm[:, None])
        mass = resp.sum(axis=0)
        if np.any(mass < EMPTY_COMPONENT_MASS):
            return None
        w = mass / n
        c = resp.T @ cos_t
        s = resp.T @ sin_t
        mu = np.mod(np.arctan2(s, c), TWO_PI)
        rbar = np.clip(np.hypot(c, s) / mass, 0.0, 1.0)
        kappa = np.array([kappa_from_rbar(float(r)) for r in rbar])
    else:
        trace.append(float(logsumexp(_weighted_log_densities(angles, w, mu, kappa), axis=1).sum()))

    w = w / w.sum()
    order = sorted(range(m), key=lambda j: (-w[j], mu[j]))
    components = tuple(
        VonMisesComponent(float(w[j]), float(mu[j]) if mu[j] < TWO_PI else 0.0, float(min(kappa[j], KAPPA_CAP)))
        for j in order
    )
    return VonMisesMixture(components, trace[-1], converged, iterations, tuple(trace))


def em_fit(
    sample,
    m: int,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 500,
    restarts: int = 10,
) -> VonMisesMixture:
    """Fit an m-component von Mises mixture by EM.

    Args:
        sample: A ``CircularSample`` or an array of angles in radians.
        m: Number of components.
        seed: Seed of the restart schedule.
        tol: Convergence threshold on the log-likelihood improvement.
        max_iter: Iteration cap per restart.
        restarts: Number of random initialisations; the best fit wins.

    Returns:
        The restart with the largest log-likelihood, components ordered by
        descending weight.
    """
    angles = as_angles(sample)
    if m < 1:
        raise FitError(f"component count must be at least 1, got {m}")
    if angles.size < 2 * m:
        raise FitError(f"{m} components need at least {2 * m} angles, got {angles.size}")

    rng = np.random.default_rng(seed)
    best: Optional[VonMisesMixture] = None
    for r in range(max(1, restarts)):
        fit = _em_run(angles, m, rng, tol, max_iter)
        if fit is None:
            logger.debug("em m=%d restart %d: empty component, discarded", m, r)
            continue
        logger.debug("em m=%d restart %d: ll=%.6f after %d iterations", m, r, fit.log_likelihood, fit.iterations)
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    if best is None:
        raise FitError(f"every EM restart for m={m} collapsed a component")
    return best


def bic_score(log_likelihood: float, n_parameters: int, n: int) -> float:
    return -2.0 * log_likelihood + n_parameters * math.log(n)


def bic(model: VonMisesMixture, sample) -> ModelSelectionEntry:
    """BIC entry of ``model`` on the sample it was fitted to."""
    angles = as_angles(sample)
    ll = model.log_likelihood_of(angles)
    return ModelSelectionEntry(model.m, bic_score(ll, model.n_parameters, angles.size), ll,
                               model.n_parameters, int(angles.size))


def select_components(
    sample,
    max_components: int = 5,
    delta_threshold: float = 10.0,
    seed: int = 0,
    **em_options,
) -> ModelSelection:
    """Grow the component count while BIC drops by more than ``delta_threshold``.

    A failed fit at m > 1 ends the sweep with the previous count.
    """
    if max_components < 1:
        raise ValueError("max_components must be at least 1")
    angles = as_angles(sample)
    models = {1: em_fit(angles, 1, seed=seed, **em_options)}
    entries = [bic(models[1], angles)]
    chosen = 1
    for m in range(2, max_components + 1):
        try:
            model = em_fit(angles, m, seed=seed, **em_options)
        except FitError as exc:
            logger.debug("bic sweep stopped at m=%d: %s", m, exc)
            break
        entry = bic(model, angles)
        entries.append(entry)
        models[m] = model
        if entries[-2].bic - entry.bic > delta_threshold:
            chosen = m
        else:
            break
    logger.debug("bic sweep %s -> m=%d", [round(e.bic, 2) for e in entries], chosen)
    return ModelSelection(entries, chosen, models)


def _covering_arc(points: np.ndarray) -> Tuple[float, float]:
    p = np.sort(points)
    if p.size == 1:
        return float(p[0]), float(p[0])
    gaps = np.append(np.diff(p), TWO_PI - p[-1] + p[0])
    j = int(np.argmax(gaps))
    return float(p[(j + 1) % p.size]), float(p[j])


def _argmax_lowest(posterior: np.ndarray) -> np.ndarray:
    top = posterior.max(axis=1, keepdims=True)
    return np.argmax(posterior >= top - TIE_TOLERANCE, axis=1)


def _decision_arcs(model: VonMisesMixture) -> List[List[Tuple[float, float]]]:
    m = model.m
    if m == 1:
        return [[(0.0, TWO_PI)]]
    grid = np.arange(DECISION_GRID) * TWO_PI / DECISION_GRID
    owner = _argmax_lowest(model.posterior(grid))

    def crossing(i: int) -> float:
        a, b = owner[i], owner[(i + 1) % grid.size]
        lo = grid[i]
        hi = grid[i] + TWO_PI / DECISION_GRID

        def f(t: float) -> float:
            d = model.weighted_log_densities(t)[0]
            return float(d[a] - d[b])

        if f(lo) * f(hi) < 0:
            return float(np.mod(optimize.brentq(f, lo, hi, xtol=1e-12), TWO_PI))
        return float(np.mod(0.5 * (lo + hi), TWO_PI))

    changes = [i for i in range(grid.size) if owner[i] != owner[(i + 1) % grid.size]]
    arcs: List[List[Tuple[float, float]]] = [[] for _ in range(m)]
    if not changes:
        arcs[int(owner[0])].append((0.0, TWO_PI))
        return arcs
    bounds = [crossing(i) for i in changes]
    for j, i in enumerate(changes):
        component = int(owner[(i + 1) % grid.size])
        arcs[component].append((bounds[j], bounds[(j + 1) % len(bounds)]))
    return arcs


def assign(model: VonMisesMixture, sample) -> ClusterAssignment:
    """Assign each angle to the component with the largest posterior (ties to the lowest index)."""
    angles = as_angles(sample)
    posterior = model.posterior(angles)
    labels = _argmax_lowest(posterior)
    ranges: List[Optional[Tuple[float, float]]] = []
    for k in range(model.m):
        members = angles[labels == k]
        ranges.append(_covering_arc(members) if members.size else None)
    return ClusterAssignment(labels, posterior, ranges, _decision_arcs(model))


def permuted(model: VonMisesMixture, order: Sequence[int]) -> VonMisesMixture:
    """The same mixture with its components listed in ``order``."""
    return VonMisesMixture(tuple(model.components[j] for j in order), model.log_likelihood,
                           model.converged, model.iterations, model.log_likelihood_trace)
