import math
import unittest
from datetime import datetime, timedelta

import numpy as np
from scipy import stats

from timerefine.controlflow import (
    END_TOKEN,
    EvaluationMode,
    binary_entropy,
    directly_follows,
    evaluate_candidate,
    g_test,
    gain,
    information_gain,
    log_entropy,
    significance_test,
    total_entropy,
)
from timerefine.errors import RelabelingError
from timerefine.eventlog import Event, EventLog, RelabelingMap, Trace


def make_log(*sequences):
    traces = []
    for t, labels in enumerate(sequences):
        start = datetime(2020, 1, 1) + timedelta(days=t)
        events = tuple(Event(f"{t}.{i}", start + timedelta(minutes=i), label) for i, label in enumerate(labels))
        traces.append(Trace(f"case{t}", events))
    return EventLog(tuple(traces))


def by_successor(log, label, successors):
    """Cluster 0 for occurrences of ``label`` followed by one of ``successors``, else 1."""
    out = {}
    for trace in log.traces:
        nexts = [e.label for e in trace.events[1:]] + [None]
        for e, nxt in zip(trace.events, nexts):
            if e.label == label:
                out[e.id] = 0 if nxt in successors else 1
    return out


def split_log(repeats):
    log = make_log(*([["a", "b"]] * repeats + [["a", "c"]] * repeats))
    return log, RelabelingMap.default("a", [0, 1]), by_successor(log, "a", {"b"})


class TestDirectlyFollows(unittest.TestCase):
    def test_counts(self):
        s = directly_follows(make_log(["a", "b", "a"]))
        self.assertEqual(s.activity_counts, {"a": 2, "b": 1})
        self.assertEqual(s.follows("a", "b"), 1)
        self.assertEqual(s.follows("b", "a"), 1)
        self.assertEqual(s.follows("a", END_TOKEN), 1)
        self.assertEqual(s.not_follows("a", "b"), 1)
        self.assertEqual(s.successors(), ["a", "b", END_TOKEN])

    def test_without_end_token(self):
        s = directly_follows(make_log(["a", "b"]), with_end_token=False)
        self.assertNotIn(("b", END_TOKEN), s.follows_counts)
        self.assertEqual(s.successors(), ["a", "b"])

    def test_pairs_stay_inside_traces(self):
        s = directly_follows(make_log(["a"], ["b"]), with_end_token=False)
        self.assertEqual(s.follows("a", "b"), 0)


class TestEntropy(unittest.TestCase):
    def test_binary_entropy(self):
        self.assertEqual(float(binary_entropy(0.0)), 0.0)
        self.assertEqual(float(binary_entropy(1.0)), 0.0)
        self.assertAlmostEqual(float(binary_entropy(0.5)), 1.0)
        self.assertAlmostEqual(float(binary_entropy(0.25)), 0.8112781245)

    def test_total_entropy(self):
        log, _, _ = split_log(4)
        report = total_entropy(directly_follows(log))
        self.assertAlmostEqual(report.total_bits, 16.0)
        self.assertAlmostEqual(report.per_pair_bits[("a", "b")], 8.0)
        self.assertEqual(report.per_pair_bits[("b", END_TOKEN)], 0.0)
        self.assertNotIn(("b", "c"), report.per_pair_bits)

    def test_gain_of_empty_entropy(self):
        self.assertEqual(gain(0.0, 0.0), 0.0)
        self.assertAlmostEqual(gain(16.0, 4.0), 0.75)

    def test_perfect_split_removes_all_entropy(self):
        log, mapping, assignment = split_log(4)
        self.assertAlmostEqual(information_gain(log, mapping, assignment), 1.0)
        self.assertAlmostEqual(information_gain(log, mapping, assignment, with_end_token=False), 1.0)

    def test_gain_can_be_negative(self):
        log = make_log(["a", "x"], ["a", "x"], ["a", "b"], ["a", "b"])
        self.assertAlmostEqual(log_entropy(log), 8.0)
        mapping = RelabelingMap.default("x", [0, 1])
        self.assertLess(information_gain(log, mapping, {"0.1": 0, "1.1": 1}), 0.0)


def random_log(rng, labels="abcde", traces=4, max_len=5):
    return make_log(*(list(rng.choice(list(labels), size=rng.integers(1, max_len + 1))) for _ in range(traces)))


def counted_bits(log):
    """Entropy by direct enumeration of every (b, c) pair, end token included."""
    sequences = [[e.label for e in t.events] + [END_TOKEN] for t in log.traces]
    labels = sorted({b for s in sequences for b in s[:-1]})
    bits = 0.0
    for b in labels:
        for c in labels + [END_TOKEN]:
            n = plus = 0
            for s in sequences:
                for x, y in zip(s, s[1:]):
                    if x == b:
                        n += 1
                        plus += y == c
            if 0 < plus < n:
                p = plus / n
                bits += n * -(p * math.log2(p) + (1 - p) * math.log2(1 - p))
    return bits


class TestEntropyOracle(unittest.TestCase):
    def test_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            log = random_log(rng)
            self.assertAlmostEqual(log_entropy(log), counted_bits(log), delta=1e-9)

    def test_perfect_split_of_eight_traces(self):
        log, mapping, assignment = split_log(4)
        self.assertEqual(len(log.traces), 8)
        self.assertAlmostEqual(information_gain(log, mapping, assignment), 1.0, delta=1e-9)

    def test_refined_pairs_never_add_bits(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            log = random_log(rng, labels="abc", max_len=5)
            ids = [e.id for t in log.traces for e in t.events if e.label == "a"]
            if not ids:
                continue
            mapping = RelabelingMap.default("a", [0, 1, 2])
            assignment = {i: int(rng.integers(0, 3)) for i in ids}
            refined = log.relabel({i: mapping.entries[k] for i, k in assignment.items()})
            before = total_entropy(directly_follows(log)).per_pair_bits
            after = total_entropy(directly_follows(refined)).per_pair_bits
            for c in ["b", "c", END_TOKEN]:
                split = sum(after.get((r, c), 0.0) for r in mapping.refined_labels)
                self.assertLessEqual(split, before.get(("a", c), 0.0) + 1e-9)

    def test_gain_ignores_label_names(self):
        rng = np.random.default_rng(13)
        rename = {"a": "kettle", "b": "door", "c": "toilet"}
        for _ in range(50):
            log = random_log(rng, labels="abc", traces=5)
            ids = [e.id for t in log.traces for e in t.events if e.label == "a"]
            if not ids:
                continue
            assignment = {i: int(rng.integers(0, 2)) for i in ids}
            renamed = log.relabel({e.id: rename[e.label] for t in log.traces for e in t.events})
            self.assertAlmostEqual(log_entropy(log), log_entropy(renamed), delta=1e-9)
            self.assertAlmostEqual(
                information_gain(log, RelabelingMap.default("a", [0, 1]), assignment),
                information_gain(renamed, RelabelingMap.default("kettle", [0, 1]), assignment),
                delta=1e-9,
            )


class TestGTest(unittest.TestCase):
    def test_matches_likelihood_ratio_formula(self):
        table = np.array([[10.0, 20.0], [30.0, 40.0]])
        expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
        g = 2.0 * np.sum(table * np.log(table / expected))
        result = g_test(table)
        self.assertAlmostEqual(result.statistic, g)
        self.assertAlmostEqual(result.p_value, stats.chi2.sf(g, 1))
        self.assertEqual(result.dof, 1)

    def test_zero_rows_are_dropped(self):
        self.assertAlmostEqual(g_test([[5, 5], [0, 0], [3, 7]]).statistic, g_test([[5, 5], [3, 7]]).statistic)

    def test_degenerate_tables(self):
        self.assertEqual(g_test([[3, 4]]).p_value, 1.0)
        single_column = g_test([[3, 0], [4, 0]])
        self.assertEqual((single_column.statistic, single_column.p_value), (0.0, 1.0))


class TestSignificance(unittest.TestCase):
    def test_refined_labels_with_different_successors(self):
        log, mapping, assignment = split_log(20)
        p_values = significance_test(log, mapping, assignment)
        self.assertEqual([c for c, _ in p_values], ["b", "c", END_TOKEN])
        self.assertLess(dict(p_values)["b"], 1e-6)
        self.assertEqual(dict(p_values)[END_TOKEN], 1.0)

    def test_needs_two_refined_labels(self):
        log, mapping, assignment = split_log(3)
        with self.assertRaises(RelabelingError):
            significance_test(log, mapping, {i: 0 for i in assignment})

    def test_modes(self):
        log, mapping, assignment = split_log(2)
        verdicts = {
            mode: evaluate_candidate(log, mapping, assignment, alpha=0.01, mode=mode) for mode in EvaluationMode
        }
        for v in verdicts.values():
            self.assertAlmostEqual(v.information_gain, 1.0)
            self.assertEqual(v.significant_activities, [])
        self.assertFalse(verdicts[EvaluationMode.SIGNIFICANCE].passed)
        self.assertTrue(verdicts[EvaluationMode.IG_POSITIVE].passed)
        self.assertFalse(verdicts[EvaluationMode.BOTH].passed)

    def test_strong_split_passes_every_mode(self):
        log, mapping, assignment = split_log(20)
        for mode in EvaluationMode:
            verdict = evaluate_candidate(log, mapping, assignment, mode=mode)
            self.assertTrue(verdict.passed)
            self.assertEqual(verdict.significant_activities, ["b", "c"])

    def test_single_cluster_verdict(self):
        log, mapping, assignment = split_log(3)
        verdict = evaluate_candidate(log, mapping, {i: 0 for i in assignment})
        self.assertEqual(verdict.p_values, [])
        self.assertFalse(verdict.passed)


if __name__ == "__main__":
    unittest.main()
