"""
Control-flow statistics of event logs.

The directly-follows statistic counts, for every ordered pair of labels
(b, c), how often an occurrence of b is immediately followed by c inside a
trace. Its binary entropy, summed over all pairs, measures how predictable
the log's control flow is. A label refinement is worth keeping when it
lowers that entropy (positive information gain) or when the refined labels
are followed by other activities at significantly different rates.

Example usage:

    stats = directly_follows(log)
    before = total_entropy(stats).total_bits
    gain = information_gain(log, relabeling, cluster_of_event)
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy import special, stats

from .errors import RelabelingError
from .eventlog import EventLog, RelabelingMap, apply_refinement

logger = logging.getLogger(__name__)

END_TOKEN = "__end__"
# Gains at or below this are rounding noise, not an improvement.
GAIN_TOLERANCE = 1e-12


class EvaluationMode(str, enum.Enum):
    SIGNIFICANCE = "significance"
    IG_POSITIVE = "ig_positive"
    BOTH = "both"


@dataclass(frozen=True)
class DirectlyFollowsStats:
    activity_counts: Dict[str, int]
    follows_counts: Dict[Tuple[str, str], int]
    end_token: str | None = END_TOKEN

    def follows(self, b: str, c: str) -> int:
        return self.follows_counts.get((b, c), 0)

    def not_follows(self, b: str, c: str) -> int:
        return self.activity_counts.get(b, 0) - self.follows(b, c)

    def successors(self) -> List[str]:
        labels = sorted(self.activity_counts)
        return labels + [self.end_token] if self.end_token else labels


@dataclass(frozen=True)
class EntropyReport:
    per_pair_bits: Dict[Tuple[str, str], float]
    total_bits: float


@dataclass(frozen=True)
class GTestResult:
    statistic: float
    p_value: float
    dof: int


@dataclass(frozen=True)
class ControlFlowVerdict:
    information_gain: float
    p_values: List[Tuple[str, float]] = field(default_factory=list)
    significant_activities: List[str] = field(default_factory=list)
    passed: bool = False
    alpha: float = 0.01
    mode: EvaluationMode = EvaluationMode.SIGNIFICANCE


def directly_follows(log: EventLog, with_end_token: bool = True) -> DirectlyFollowsStats:
    """Count label occurrences and directly-follows pairs within each trace."""
    activity: Dict[str, int] = {}
    follows: Dict[Tuple[str, str], int] = {}
    for trace in log.traces:
        labels = trace.labels()
        for label in labels:
            activity[label] = activity.get(label, 0) + 1
        for b, c in zip(labels, labels[1:]):
            follows[(b, c)] = follows.get((b, c), 0) + 1
        if with_end_token and labels:
            key = (labels[-1], END_TOKEN)
            follows[key] = follows.get(key, 0) + 1
    return DirectlyFollowsStats(activity, follows, END_TOKEN if with_end_token else None)


def binary_entropy(p) -> np.ndarray:
    """H₂(p) in bits, with H₂(0) = H₂(1) = 0."""
    p = np.asarray(p, dtype=float)
    return (special.entr(p) + special.entr(1.0 - p)) / math.log(2.0)


def total_entropy(stats: DirectlyFollowsStats) -> EntropyReport:
    """Sum over pairs of #b · H₂(#⁺(b, c) / #b).

    Pairs with #⁺ = 0 carry no entropy and are left out of the report.
    """
    per_pair: Dict[Tuple[str, str], float] = {}
    for (b, c), plus in sorted(stats.follows_counts.items()):
        count = stats.activity_counts[b]
        per_pair[(b, c)] = float(count * binary_entropy(plus / count))
    return EntropyReport(per_pair, float(sum(per_pair.values())))


def log_entropy(log: EventLog, with_end_token: bool = True) -> float:
    return total_entropy(directly_follows(log, with_end_token)).total_bits


def gain(before_bits: float, after_bits: float) -> float:
    """Relative entropy decrease; 0 when there was no entropy to remove."""
    if before_bits <= 0.0:
        return 0.0
    return (before_bits - after_bits) / before_bits


def information_gain(
    log: EventLog,
    mapping: RelabelingMap,
    assignment: Mapping[str, int],
    with_end_token: bool = True,
) -> float:
    """Information gain of relabeling ``mapping.covered_label`` by ``assignment``."""
    refined = apply_refinement(log, mapping, assignment)
    return gain(log_entropy(log, with_end_token), log_entropy(refined, with_end_token))


def g_test(table) -> GTestResult:
    """Likelihood-ratio test of independence on a k×2 follows/not-follows table.

    Rows with zero total are dropped; a table with fewer than two rows or
    an empty column left has G = 0 and p = 1.
    """
    t = np.asarray(table, dtype=float)
    t = t[t.sum(axis=1) > 0]
    if t.shape[0] < 2 or np.any(t.sum(axis=0) == 0):
        return GTestResult(0.0, 1.0, max(t.shape[0] - 1, 0))
    statistic, p_value, dof, _ = stats.chi2_contingency(t, correction=False, lambda_="log-likelihood")
    return GTestResult(max(float(statistic), 0.0), float(p_value), int(dof))


def follows_table(stats: DirectlyFollowsStats, refined_labels: Sequence[str], c: str) -> np.ndarray:
    return np.array([[stats.follows(a, c), stats.not_follows(a, c)] for a in refined_labels], dtype=float)


def significance_test(
    log: EventLog,
    mapping: RelabelingMap,
    assignment: Mapping[str, int],
    with_end_token: bool = True,
) -> List[Tuple[str, float]]:
    """p-value per other label c of "the refined labels are followed by c at equal rates".

    Args:
        log: The log before refinement.
        mapping: Refined label text per cluster.
        assignment: Cluster per event id of the covered label.
        with_end_token: Treat trace ends as a successor label.

    Returns:
        (c, p) pairs sorted by c.
    """
    refined_log = apply_refinement(log, mapping, assignment)
    present = [a for a in mapping.refined_labels if a in refined_log.label_alphabet]
    if len(present) < 2:
        raise RelabelingError(
            f"significance test of {mapping.covered_label!r} needs at least 2 refined labels, got {len(present)}"
        )
    df_stats = directly_follows(refined_log, with_end_token)
    others = [c for c in df_stats.successors() if c not in present]
    return [(c, g_test(follows_table(df_stats, present, c)).p_value) for c in others]


def evaluate_candidate(
    log: EventLog,
    mapping: RelabelingMap,
    assignment: Mapping[str, int],
    alpha: float = 0.01,
    mode: EvaluationMode = EvaluationMode.SIGNIFICANCE,
    with_end_token: bool = True,
) -> ControlFlowVerdict:
    """Combine information gain and the significance test into a verdict."""
    mode = EvaluationMode(mode)
    ig = information_gain(log, mapping, assignment, with_end_token)
    try:
        p_values = significance_test(log, mapping, assignment, with_end_token)
    except RelabelingError as exc:
        logger.debug("no significance test for %r: %s", mapping.covered_label, exc)
        p_values = []
    significant = [c for c, p in p_values if p < alpha]
    if mode is EvaluationMode.SIGNIFICANCE:
        passed = bool(significant)
    elif mode is EvaluationMode.IG_POSITIVE:
        passed = ig > GAIN_TOLERANCE
    else:
        passed = bool(significant) and ig > GAIN_TOLERANCE
    return ControlFlowVerdict(ig, p_values, significant, passed, alpha, mode)
