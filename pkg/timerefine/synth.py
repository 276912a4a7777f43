"""
Synthetic smart-home event logs with known structure.

A ``SyntheticSpec`` describes one household: a set of sensors, each with a
daily firing rate and a time-of-day profile (uniform or a von Mises
mixture), and optionally a first-order Markov chain that orders the
sensors within a day. ``generate`` turns a spec into an ``EventLog`` with
one trace per day, so every statistical component has a ground truth to
be checked against.

Example usage:

    spec = load_spec("specs/household.toml")
    log = generate(spec)
    write_csv(log)

The TOML schema is documented in ``docs/synth_spec.md``.
"""

from __future__ import annotations

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .circstats import TWO_PI
from .errors import InputError, SpecError
from .eventlog import Event, EventLog, Trace
from .mixture import VonMisesComponent, VonMisesMixture

logger = logging.getLogger(__name__)

MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class SensorProfile:
    name: str
    events_per_day: float
    mixture: Optional[VonMisesMixture] = None

    def sample_angles(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` times of day in radians; no mixture means uniform."""
        if self.mixture is None:
            return rng.uniform(0.0, TWO_PI, size=n)
        comps = self.mixture.components
        weights = np.array([c.weight for c in comps])
        which = rng.choice(len(comps), size=n, p=weights / weights.sum())
        mu = np.array([c.mu for c in comps])[which]
        kappa = np.array([c.kappa for c in comps])[which]
        return np.mod(rng.vonmises(mu, kappa), TWO_PI) if n else np.empty(0)


@dataclass(frozen=True, eq=False)
class MarkovOrdering:
    states: Tuple[str, ...]
    matrix: np.ndarray
    initial: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SyntheticSpec:
    sensors: Tuple[SensorProfile, ...]
    days: int = 1
    seed: int = 0
    start_date: date = date(2000, 1, 1)
    address: str = "house"
    ordering: Optional[MarkovOrdering] = None

    def __post_init__(self) -> None:
        validate(self)


def validate(spec: SyntheticSpec) -> None:
    if not spec.sensors:
        raise SpecError("sensors: at least one sensor is required")
    if spec.days < 1:
        raise SpecError(f"days: must be at least 1, got {spec.days}")
    names = [s.name for s in spec.sensors]
    if len(set(names)) != len(names):
        raise SpecError(f"sensors: names must be distinct, got {names}")
    for i, s in enumerate(spec.sensors):
        if not s.events_per_day > 0:
            raise SpecError(f"sensors[{i}].events_per_day: must be > 0, got {s.events_per_day}")
    if spec.ordering is None:
        return
    o = spec.ordering
    if sorted(o.states) != sorted(names):
        raise SpecError(f"ordering.states: must list the sensors {sorted(names)}, got {list(o.states)}")
    m = np.asarray(o.matrix, dtype=float)
    if m.shape != (len(o.states), len(o.states)):
        raise SpecError(f"ordering.matrix: expected a {len(o.states)}x{len(o.states)} matrix, got shape {m.shape}")
    if np.any(m < 0):
        raise SpecError("ordering.matrix: entries must be non-negative")
    for i, row in enumerate(m):
        if abs(row.sum() - 1.0) > 1e-9:
            raise SpecError(f"ordering.matrix[{i}]: row sums to {row.sum():.12g}, expected 1")
    if o.initial is not None:
        p = np.asarray(o.initial, dtype=float)
        if p.shape != (len(o.states),) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise SpecError("ordering.initial: must be a probability vector over the states")


def _day_events(spec: SyntheticSpec, rng: np.random.Generator) -> List[Tuple[float, str]]:
    profiles = {s.name: s for s in spec.sensors}
    if spec.ordering is None:
        counts = [int(rng.poisson(s.events_per_day)) for s in spec.sensors]
        if sum(counts) == 0:
            rates = np.array([s.events_per_day for s in spec.sensors])
            counts[int(rng.choice(len(rates), p=rates / rates.sum()))] = 1
        drawn = [
            (float(a), s.name)
            for s, c in zip(spec.sensors, counts)
            for a in s.sample_angles(rng, c)
        ]
        return sorted(drawn, key=lambda x: x[0])

    o = spec.ordering
    total = sum(s.events_per_day for s in spec.sensors)
    n = max(1, int(rng.poisson(total)))
    k = len(o.states)
    start = np.full(k, 1.0 / k) if o.initial is None else np.asarray(o.initial, dtype=float)
    chain = [int(rng.choice(k, p=start))]
    for _ in range(n - 1):
        chain.append(int(rng.choice(k, p=o.matrix[chain[-1]])))
    names = [o.states[i] for i in chain]
    times = sorted(float(profiles[name].sample_angles(rng, 1)[0]) for name in names)
    return list(zip(times, names))


def generate(spec: SyntheticSpec) -> EventLog:
    """Draw a log with one trace per day; the same spec always gives the same log.

    A day on which every Poisson count is zero gets one event, so the
    daily total is a Poisson count with zero replaced by one.
    """
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.days)
    traces: List[Trace] = []
    next_id = 1
    for day, child in enumerate(seeds):
        rng = np.random.default_rng(child)
        current = spec.start_date + timedelta(days=day)
        midnight = datetime.combine(current, datetime.min.time())
        events = []
        for angle, name in _day_events(spec, rng):
            ms = min(int(round(angle / TWO_PI * MS_PER_DAY)), MS_PER_DAY - 1)
            events.append(Event(str(next_id), midnight + timedelta(milliseconds=ms), name,
                                {"address": spec.address}))
            next_id += 1
        traces.append(Trace(f"{spec.address}|{current.isoformat()}", tuple(events)))
    logger.debug("generated %d events over %d days (seed %d)", next_id - 1, spec.days, spec.seed)
    return EventLog(tuple(traces))


# -- TOML spec files ---------------------------------------------------------------

def _require(table: Dict[str, Any], key: str, where: str) -> Any:
    if key not in table:
        raise SpecError(f"{where}{key}: missing")
    return table[key]


def _component(raw: Dict[str, Any], where: str) -> VonMisesComponent:
    if "mean" in raw and "mean_hours" in raw:
        raise SpecError(f"{where}: give either mean or mean_hours, not both")
    mean = raw["mean_hours"] * TWO_PI / 24.0 if "mean_hours" in raw else _require(raw, "mean", f"{where}.")
    weight = _require(raw, "weight", f"{where}.")
    kappa = _require(raw, "kappa", f"{where}.")
    try:
        return VonMisesComponent(float(weight), float(np.mod(float(mean), TWO_PI)), float(kappa))
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{where}: {exc}") from exc


def _sensor(raw: Dict[str, Any], i: int) -> SensorProfile:
    where = f"sensors[{i}]"
    name = str(_require(raw, "name", f"{where}."))
    rate = _require(raw, "events_per_day", f"{where}.")
    if not isinstance(rate, (int, float)):
        raise SpecError(f"{where}.events_per_day: must be a number")
    profile = raw.get("profile", "uniform")
    if profile == "uniform":
        return SensorProfile(name, float(rate))
    if profile != "mixture":
        raise SpecError(f"{where}.profile: must be 'uniform' or 'mixture', got {profile!r}")
    comps = [_component(c, f"{where}.components[{j}]") for j, c in enumerate(raw.get("components", []))]
    if not comps:
        raise SpecError(f"{where}.components: a mixture profile needs at least one component")
    try:
        return SensorProfile(name, float(rate), VonMisesMixture(tuple(comps)))
    except ValueError as exc:
        raise SpecError(f"{where}.components: {exc}") from exc


def spec_from_dict(document: Dict[str, Any]) -> SyntheticSpec:
    """Build a spec from a parsed TOML document."""
    sensors = tuple(_sensor(raw, i) for i, raw in enumerate(document.get("sensors", [])))
    ordering = None
    if "ordering" in document:
        raw = document["ordering"]
        states = tuple(str(s) for s in _require(raw, "states", "ordering."))
        try:
            matrix = np.array(_require(raw, "matrix", "ordering."), dtype=float)
            initial = np.array(raw["initial"], dtype=float) if "initial" in raw else None
        except (TypeError, ValueError) as exc:
            raise SpecError(f"ordering: {exc}") from exc
        ordering = MarkovOrdering(states, matrix, initial)
    start = document.get("start_date", date(2000, 1, 1))
    if isinstance(start, str):
        try:
            start = date.fromisoformat(start)
        except ValueError as exc:
            raise SpecError(f"start_date: {exc}") from exc
    if not isinstance(start, date):
        raise SpecError("start_date: must be a date")
    return SyntheticSpec(
        sensors=sensors,
        days=int(document.get("days", 1)),
        seed=int(document.get("seed", 0)),
        start_date=start,
        address=str(document.get("address", "house")),
        ordering=ordering,
    )


def parse_spec(text: str) -> SyntheticSpec:
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(str(exc)) from exc
    return spec_from_dict(document)


def load_spec(path: str | Path) -> SyntheticSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read spec {path}: {exc}") from exc
    try:
        return parse_spec(text)
    except SpecError as exc:
        raise SpecError(f"{path}: {exc}") from exc


def with_seed(spec: SyntheticSpec, seed: int) -> SyntheticSpec:
    return SyntheticSpec(spec.sensors, spec.days, seed, spec.start_date, spec.address, spec.ordering)
