"""
Refinement candidates and the strategies that combine them.

``generate_candidates`` runs every label of a log through the three-stage
pipeline:

    1. pre-fitting: Rao's spacing test (is the label's time of day
       non-uniform?) and the dip test (is it multimodal?),
    2. fitting: a von Mises mixture whose size is chosen by BIC, and an
       assignment of every event to its most likely component,
    3. post-fitting: Watson's U² per cluster and the control-flow verdict
       (significance of the refined labels' successors, information gain).

Candidates that pass the statistical stages are then combined by one of
four strategies: all at once, greedy, beam search and exhaustive search.
Every strategy scores a set of refinements by the total directly-follows
entropy of the log with all of them applied; a lower entropy is a larger
cumulative information gain. Greedy, beam and exhaustive search repeat
the control-flow check of a candidate on the log refined so far before
applying it, so a label can drop out or qualify after an earlier step.

Example usage:

    candidates = generate_candidates(log, RefinementConfig())
    plan = strategy_greedy(log, candidates, k=2, stop_on_ig=True)
    refined = apply_plan(log, plan)
"""

from __future__ import annotations

import enum
import functools
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .circstats import TestResult, dip_test, rao_spacing_test, to_radians, watson_u2_von_mises
from .config import RefinementConfig
from .controlflow import ControlFlowVerdict, evaluate_candidate, gain, log_entropy
from .errors import RefinementError, SearchCapError
from .eventlog import EventLog, RelabelingMap, apply_refinement
from .mixture import ClusterAssignment, ModelSelection, VonMisesMixture, assign, select_components

logger = logging.getLogger(__name__)

ENTROPY_DIGITS = 9


class Stage(str, enum.Enum):
    """Where a label left the pipeline; ``ELIGIBLE`` means it passed every stage."""

    TOO_FEW_EVENTS = "too_few_events"
    UNIFORMITY = "uniformity"
    UNIMODALITY = "unimodality"
    COMPONENTS = "components"
    GOODNESS_OF_FIT = "goodness_of_fit"
    CONTROL_FLOW = "control_flow"
    ELIGIBLE = "eligible"
    ERROR = "error"


class Strategy(str, enum.Enum):
    ALL_AT_ONCE = "all_at_once"
    GREEDY = "greedy"
    BEAM = "beam"
    EXHAUSTIVE = "exhaustive"


@dataclass
class RefinementCandidate:
    label: str
    n_events: int
    stage: Stage
    rao: Optional[TestResult] = None
    dip: Optional[TestResult] = None
    model_selection: Optional[ModelSelection] = None
    assignment: Optional[ClusterAssignment] = None
    event_clusters: Dict[str, int] = field(default_factory=dict)
    relabeling: Optional[RelabelingMap] = None
    watson: List[TestResult] = field(default_factory=list)
    verdict: Optional[ControlFlowVerdict] = None
    error: Optional[str] = None

    @property
    def eligible(self) -> bool:
        return self.stage is Stage.ELIGIBLE

    @property
    def model(self) -> Optional[VonMisesMixture]:
        return self.model_selection.model if self.model_selection else None


@dataclass
class PlanStep:
    label: str
    relabeling: RelabelingMap
    assignment: Dict[str, int]
    gain: float
    hour_ranges: List[Optional[Tuple[float, float]]] = field(default_factory=list)
    verdict: Optional[ControlFlowVerdict] = None


@dataclass
class RefinementPlan:
    steps: List[PlanStep]
    strategy: Strategy
    k: int
    beam_size: Optional[int] = None
    stop_on_ig: bool = False
    stopped_early: bool = False
    entropy_before: float = 0.0
    entropy_after: float = 0.0

    @property
    def per_step_gain(self) -> List[float]:
        return [s.gain for s in self.steps]

    @property
    def cumulative_gain(self) -> float:
        return gain(self.entropy_before, self.entropy_after)

    @property
    def labels(self) -> List[str]:
        return [s.label for s in self.steps]


# -- candidate generation -------------------------------------------------------

def watson_consistent(result: TestResult, rule: str) -> bool:
    """Whether a cluster's U² result counts as a fit under ``rule``.

    ``exceeds`` accepts a cluster whose statistic exceeds the critical value,
    ``standard`` one whose test does not reject, ``ignore`` every cluster.
    """
    if rule == "ignore":
        return True
    if rule == "standard":
        return not result.reject
    return result.reject


def analyze_label(log: EventLog, label: str, config: RefinementConfig) -> RefinementCandidate:
    """Run one label through the pre-fitting, fitting and post-fitting stages."""
    events = log.label_events(label)
    n = len(events)
    candidate = RefinementCandidate(label, n, Stage.TOO_FEW_EVENTS)
    if n < config.min_events:
        return candidate
    angles = np.array([to_radians(e.hour) for e in events])

    candidate.rao = rao_spacing_test(angles, config.alpha, config.mc_samples, config.seed)
    if not candidate.rao.reject:
        candidate.stage = Stage.UNIFORMITY
        return candidate
    candidate.dip = dip_test(angles, config.alpha, config.bootstrap_samples, config.seed)
    if not candidate.dip.reject:
        candidate.stage = Stage.UNIMODALITY
        return candidate

    selection = select_components(angles, config.max_components, config.delta_bic, config.seed, **config.em_options)
    candidate.model_selection = selection
    if selection.chosen < 2:
        candidate.stage = Stage.COMPONENTS
        return candidate
    model = selection.model
    assignment = assign(model, angles)
    candidate.assignment = assignment
    present = sorted(set(int(k) for k in assignment.labels))
    if len(present) < 2:
        candidate.stage = Stage.COMPONENTS
        return candidate

    for k in present:
        component = model.components[k]
        candidate.watson.append(watson_u2_von_mises(
            angles[assignment.labels == k], component.mu, component.kappa, config.alpha,
            parameters_estimated=True, bootstrap=config.watson_bootstrap, seed=config.seed,
        ))
    if not all(watson_consistent(w, config.watson_rule) for w in candidate.watson):
        candidate.stage = Stage.GOODNESS_OF_FIT
        return candidate

    candidate.event_clusters = {e.id: int(k) for e, k in zip(events, assignment.labels)}
    candidate.relabeling = RelabelingMap.default(label, present)
    candidate.verdict = evaluate_candidate(
        log, candidate.relabeling, candidate.event_clusters, config.alpha, config.mode, config.end_token
    )
    candidate.stage = Stage.ELIGIBLE if candidate.verdict.passed else Stage.CONTROL_FLOW
    return candidate


def generate_candidates(
    log: EventLog,
    config: Optional[RefinementConfig] = None,
    labels: Optional[Iterable[str]] = None,
) -> List[RefinementCandidate]:
    """Analyse every label (or just ``labels``) of ``log``, sorted by label.

    A failure while analysing one label is recorded on its candidate with
    stage ``error``; the sweep carries on with the next label.
    """
    config = config or RefinementConfig()
    out: List[RefinementCandidate] = []
    for label in sorted(labels if labels is not None else log.label_alphabet):
        try:
            candidate = analyze_label(log, label, config)
        except (RefinementError, ValueError) as exc:
            logger.warning("label %r: %s", label, exc)
            candidate = RefinementCandidate(label, len(log.label_events(label)), Stage.ERROR, error=str(exc))
        logger.debug("label %r: %s", label, candidate.stage.value)
        out.append(candidate)
    return out


# -- strategies -------------------------------------------------------------------

class _RefinementOracle:
    """Entropies and control-flow verdicts of the log refined by a set of labels.

    Refinements of distinct labels touch disjoint events and introduce
    disjoint label texts, so they commute and a set fully determines the
    refined log. The fitted clusterings never change (timestamps are not
    touched by relabeling); only the control-flow verdict is re-evaluated
    on each refined log.
    """

    def __init__(self, log: EventLog, pool: Dict[str, RefinementCandidate], config: RefinementConfig) -> None:
        self.log = log
        self.pool = pool
        self.config = config
        self._logs: Dict[FrozenSet[str], EventLog] = {}
        self._entropy: Dict[FrozenSet[str], float] = {}
        self._verdicts: Dict[Tuple[FrozenSet[str], str], ControlFlowVerdict] = {}

    def refined(self, labels: Iterable[str]) -> EventLog:
        key = frozenset(labels)
        if key not in self._logs:
            out = self.log
            for label in sorted(key):
                c = self.pool[label]
                out = apply_refinement(out, c.relabeling, c.event_clusters)
            self._logs[key] = out
        return self._logs[key]

    def entropy(self, labels: Iterable[str]) -> float:
        key = frozenset(labels)
        if key not in self._entropy:
            self._entropy[key] = log_entropy(self.refined(key), self.config.end_token)
        return self._entropy[key]

    def score(self, labels: Iterable[str]) -> float:
        return round(self.entropy(labels), ENTROPY_DIGITS)

    def improves(self, before: Iterable[str], after: Iterable[str]) -> bool:
        return self.score(after) < self.score(before)

    def verdict(self, applied: Iterable[str], label: str) -> ControlFlowVerdict:
        """The verdict on ``label``'s refinement of the log already refined by ``applied``."""
        key = (frozenset(applied), label)
        if key not in self._verdicts:
            c = self.pool[label]
            cfg = self.config
            self._verdicts[key] = evaluate_candidate(
                self.refined(key[0]), c.relabeling, c.event_clusters, cfg.alpha, cfg.mode, cfg.end_token
            )
        return self._verdicts[key]

    def applicable(self, applied: Iterable[str]) -> List[str]:
        """Unapplied labels whose refinement passes the control-flow check after ``applied``."""
        done = frozenset(applied)
        return [x for x in sorted(self.pool) if x not in done and self.verdict(done, x).passed]


def _pool(candidates: Sequence[RefinementCandidate]) -> Dict[str, RefinementCandidate]:
    """Candidates that passed every statistical stage, whatever their verdict on the original log."""
    return {
        c.label: c for c in candidates
        if c.stage in (Stage.ELIGIBLE, Stage.CONTROL_FLOW) and c.relabeling is not None
    }


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")


def _build_plan(
    oracle: _RefinementOracle,
    order: Sequence[str],
    strategy: Strategy,
    k: int,
    stop_on_ig: bool,
    stopped_early: bool,
    beam_size: Optional[int] = None,
    gains: Optional[Dict[str, float]] = None,
) -> RefinementPlan:
    steps: List[PlanStep] = []
    applied: List[str] = []
    for label in order:
        c = oracle.pool[label]
        step_gain = gains[label] if gains else gain(oracle.entropy(applied), oracle.entropy(applied + [label]))
        verdict = oracle.verdict(applied, label)
        applied.append(label)
        steps.append(PlanStep(label, c.relabeling, dict(c.event_clusters), step_gain,
                              c.assignment.hour_ranges() if c.assignment else [], verdict))
        logger.info("%s step %d: refine %r into %s (gain %.4f)", strategy.value, len(steps), label,
                    c.relabeling.refined_labels, step_gain)
    return RefinementPlan(
        steps, strategy, k, beam_size, stop_on_ig,
        stopped_early=stopped_early,
        entropy_before=oracle.entropy(()),
        entropy_after=oracle.entropy(applied),
    )


def _rejected_by_stop(oracle: _RefinementOracle, applied: Iterable[str], k: int, stop_on_ig: bool) -> bool:
    applied = frozenset(applied)
    return stop_on_ig and len(applied) < k and bool(oracle.applicable(applied))


def strategy_all_at_once(
    log: EventLog,
    candidates: Sequence[RefinementCandidate],
    k: int,
    stop_on_ig: bool = False,
    config: Optional[RefinementConfig] = None,
) -> RefinementPlan:
    """Apply the k candidates with the largest information gain on the original log.

    Only candidates whose control-flow check passes on the original log
    take part; later steps are not re-checked.
    """
    _check_k(k)
    config = config or RefinementConfig()
    oracle = _RefinementOracle(log, _pool(candidates), config)
    eligible = oracle.applicable(())
    ranked = sorted(eligible, key=lambda x: (oracle.score([x]), x))
    if stop_on_ig:
        ranked = [x for x in ranked if oracle.improves((), [x])]
    chosen = ranked[:k]
    gains = {x: gain(oracle.entropy(()), oracle.entropy([x])) for x in chosen}
    stopped = stop_on_ig and len(chosen) < min(k, len(eligible))
    return _build_plan(oracle, chosen, Strategy.ALL_AT_ONCE, k, stop_on_ig, stopped, gains=gains)


def strategy_greedy(
    log: EventLog,
    candidates: Sequence[RefinementCandidate],
    k: int,
    stop_on_ig: bool = False,
    config: Optional[RefinementConfig] = None,
) -> RefinementPlan:
    """Repeatedly apply the candidate with the largest gain on the current log.

    Each round re-runs the control-flow check of every remaining candidate
    on the log refined so far and only offers those that pass.
    """
    _check_k(k)
    config = config or RefinementConfig()
    oracle = _RefinementOracle(log, _pool(candidates), config)
    applied: List[str] = []
    stopped = False
    while len(applied) < k:
        options = oracle.applicable(applied)
        if not options:
            logger.info("greedy: no remaining candidate passes on the refined log")
            break
        best = min(options, key=lambda x: (oracle.score(applied + [x]), x))
        if stop_on_ig and not oracle.improves(applied, applied + [best]):
            logger.info("greedy: best next refinement %r has no positive gain, stopping", best)
            stopped = True
            break
        applied.append(best)
    return _build_plan(oracle, applied, Strategy.GREEDY, k, stop_on_ig, stopped)


def strategy_beam(
    log: EventLog,
    candidates: Sequence[RefinementCandidate],
    k: int,
    beam_size: int,
    stop_on_ig: bool = False,
    config: Optional[RefinementConfig] = None,
) -> RefinementPlan:
    """Breadth-first search keeping the ``beam_size`` best refinement sequences per depth.

    A sequence is extended only by candidates that pass the control-flow
    check on the log it has refined. Sequences reaching the same label set
    are merged, keeping the lexicographically smallest order. Without the
    stopping criterion the best of the longest sequences wins.
    """
    _check_k(k)
    if beam_size < 1:
        raise ValueError(f"beam size must be at least 1, got {beam_size}")
    config = config or RefinementConfig()
    oracle = _RefinementOracle(log, _pool(candidates), config)

    def rank(seq: Tuple[str, ...]):
        return (oracle.score(seq), seq)

    beam: List[Tuple[str, ...]] = [()]
    visited: List[Tuple[str, ...]] = [()]
    for _ in range(min(k, len(oracle.pool))):
        # Extend every kept sequence by each candidate that still passes
        expansions = []
        for seq in beam:
            for x in oracle.applicable(seq):
                new = seq + (x,)
                if stop_on_ig and not oracle.improves(seq, new):
                    continue
                expansions.append(new)
        if not expansions:
            break
        # Orders reaching the same label set give the same log
        merged: Dict[FrozenSet[str], Tuple[str, ...]] = {}
        for seq in sorted(expansions, key=rank):
            merged.setdefault(frozenset(seq), seq)
        beam = sorted(merged.values(), key=rank)[:beam_size]
        visited.extend(beam)
        logger.debug("beam depth %d: %s", len(beam[0]), [(s, oracle.score(s)) for s in beam])

    if stop_on_ig:
        best = min(visited, key=lambda s: (oracle.score(s), len(s), s))
    else:
        depth = max(len(s) for s in visited)
        best = min((s for s in visited if len(s) == depth), key=rank)
    stopped = _rejected_by_stop(oracle, best, k, stop_on_ig)
    return _build_plan(oracle, list(best), Strategy.BEAM, k, stop_on_ig, stopped, beam_size=beam_size)


def strategy_exhaustive(
    log: EventLog,
    candidates: Sequence[RefinementCandidate],
    k: int,
    stop_on_ig: bool = False,
    config: Optional[RefinementConfig] = None,
) -> RefinementPlan:
    """Evaluate every set of up to k refinements and keep the lowest-entropy one.

    A set qualifies when some order of its refinements passes the
    control-flow check at every step (with ``stop_on_ig``, also with a
    positive gain at every step). The entropy of a set does not depend on
    that order, so sets are scored once each. Without the stopping
    criterion the best of the largest qualifying sets wins. The chosen
    set's steps are ordered greedily.
    """
    _check_k(k)
    config = config or RefinementConfig()
    pool = _pool(candidates)
    if len(pool) > config.exhaustive_cap:
        raise SearchCapError(
            f"exhaustive search over {len(pool)} refinable labels exceeds the cap of "
            f"{config.exhaustive_cap}; use --strategy beam"
        )
    oracle = _RefinementOracle(log, pool, config)
    labels = sorted(pool)

    def step_ok(before: FrozenSet[str], x: str) -> bool:
        return oracle.verdict(before, x).passed and (not stop_on_ig or oracle.improves(before, before | {x}))

    # A set is reachable when removing some last step leaves a reachable set
    reachable: Dict[FrozenSet[str], bool] = {frozenset(): True}
    for r in range(1, min(k, len(labels)) + 1):
        for combo in itertools.combinations(labels, r):
            s = frozenset(combo)
            reachable[s] = any(reachable[s - {x}] and step_ok(s - {x}, x) for x in sorted(s))
    qualified = [s for s, ok in reachable.items() if ok]

    if stop_on_ig:
        best = min(qualified, key=lambda s: (oracle.score(s), len(s), sorted(s)))
    else:
        size = max(len(s) for s in qualified)
        best = min((s for s in qualified if len(s) == size), key=lambda s: (oracle.score(s), sorted(s)))

    @functools.lru_cache(maxsize=None)
    def reaches(current: FrozenSet[str]) -> bool:
        if current == best:
            return True
        return any(step_ok(current, y) and reaches(current | {y}) for y in sorted(best - current))

    order: List[str] = []
    while len(order) < len(best):
        done = frozenset(order)
        options = [x for x in sorted(best - done) if step_ok(done, x) and reaches(done | {x})]
        order.append(min(options, key=lambda x: (oracle.score(order + [x]), x)))
    stopped = _rejected_by_stop(oracle, best, k, stop_on_ig)
    return _build_plan(oracle, order, Strategy.EXHAUSTIVE, k, stop_on_ig, stopped)


def refine(
    log: EventLog,
    candidates: Sequence[RefinementCandidate],
    strategy: Strategy | str,
    k: int,
    beam_size: int = 3,
    stop_on_ig: bool = False,
    config: Optional[RefinementConfig] = None,
) -> RefinementPlan:
    """Dispatch to the named strategy."""
    strategy = Strategy(strategy)
    if strategy is Strategy.ALL_AT_ONCE:
        return strategy_all_at_once(log, candidates, k, stop_on_ig, config)
    if strategy is Strategy.GREEDY:
        return strategy_greedy(log, candidates, k, stop_on_ig, config)
    if strategy is Strategy.BEAM:
        return strategy_beam(log, candidates, k, beam_size, stop_on_ig, config)
    return strategy_exhaustive(log, candidates, k, stop_on_ig, config)


# -- plans ----------------------------------------------------------------------------

def apply_plan(log: EventLog, plan: RefinementPlan) -> EventLog:
    """Replay the plan's refinements in order."""
    for step in plan.steps:
        log = apply_refinement(log, step.relabeling, step.assignment)
    return log


def plan_to_dict(plan: RefinementPlan) -> dict:
    return {
        "strategy": plan.strategy.value,
        "k": plan.k,
        "beam_size": plan.beam_size,
        "stop_on_ig": plan.stop_on_ig,
        "stopped_early": plan.stopped_early,
        "entropy_before": plan.entropy_before,
        "entropy_after": plan.entropy_after,
        "cumulative_gain": plan.cumulative_gain,
        "steps": [
            {
                "label": s.label,
                "refined_labels": {str(k): v for k, v in sorted(s.relabeling.entries.items())},
                "assignment": dict(sorted(s.assignment.items())),
                "gain": s.gain,
                "hour_ranges": [None if r is None else list(r) for r in s.hour_ranges],
                "significant_activities": list(s.verdict.significant_activities) if s.verdict else [],
            }
            for s in plan.steps
        ],
    }


def plan_from_dict(data: dict) -> RefinementPlan:
    """Rebuild a plan written by ``plan_to_dict``; verdicts are not restored."""
    try:
        steps = [
            PlanStep(
                s["label"],
                RelabelingMap(s["label"], {int(k): v for k, v in s["refined_labels"].items()}),
                {str(i): int(c) for i, c in s["assignment"].items()},
                float(s["gain"]),
                [None if r is None else (float(r[0]), float(r[1])) for r in s.get("hour_ranges", [])],
            )
            for s in data["steps"]
        ]
        return RefinementPlan(
            steps,
            Strategy(data["strategy"]),
            int(data["k"]),
            data.get("beam_size"),
            bool(data.get("stop_on_ig", False)),
            bool(data.get("stopped_early", False)),
            float(data.get("entropy_before", 0.0)),
            float(data.get("entropy_after", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RefinementError(f"malformed plan: {exc}") from exc
