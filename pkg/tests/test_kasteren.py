"""Checks against the Kasteren smart-home log when a local copy is available.

Set ``TIMEREFINE_KASTEREN_CSV`` to a CSV export with ``timestamp``,
``sensor`` and ``address`` columns to run these tests.
"""

import math
import os
import unittest

from timerefine.config import RefinementConfig
from timerefine.eventlog import ColumnConfig, PartitionSpec, parse_csv, partition
from timerefine.search import Stage, generate_candidates
from timerefine.sources import read_input

KASTEREN_CSV = os.environ.get("TIMEREFINE_KASTEREN_CSV")


def hour_distance(a, b):
    return abs(math.remainder(a - b, 24.0))


@unittest.skipUnless(KASTEREN_CSV, "TIMEREFINE_KASTEREN_CSV not set")
class TestKasteren(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        events = parse_csv(read_input(KASTEREN_CSV), ColumnConfig(label="sensor"))
        cls.log = partition(events, PartitionSpec(("address",)))
        cls.door = generate_candidates(cls.log, RefinementConfig(seed=0), labels=["bedroom door"])[0]

    def test_log_size(self):
        self.assertEqual(sum(1 for _ in self.log.events()), 1285)
        self.assertEqual(len(self.log.label_alphabet), 14)

    def test_bedroom_door_is_not_uniform_or_unimodal(self):
        self.assertTrue(self.door.rao.reject)
        self.assertLess(self.door.dip.p_value, 1e-3)

    def test_bedroom_door_has_two_clusters(self):
        self.assertEqual(self.door.model_selection.chosen, 2)
        # EM restarts differ from the published fit, hence the loose bounds.
        for component, (weight, mu, kappa) in zip(self.door.model.components, [(0.76, 2.05, 3.85), (0.24, 5.94, 1.56)]):
            self.assertAlmostEqual(component.weight, weight, delta=0.08)
            self.assertLess(abs(math.remainder(component.mu - mu, 2 * math.pi)), 0.2)
            self.assertLess(abs(component.kappa - kappa) / kappa, 0.3)

    def test_cluster_hours(self):
        ranges = self.door.assignment.hour_ranges()
        for (start, end), (want_start, want_end) in zip(ranges, [(3.08, 10.44), (17.06, 0.88)]):
            self.assertLess(hour_distance(start, want_start), 0.5)
            self.assertLess(hour_distance(end, want_end), 0.5)

    def test_clusters_fit_von_mises(self):
        self.assertEqual(len(self.door.watson), 2)
        for result in self.door.watson:
            self.assertGreater(result.statistic, 0.141)

    def test_refinement_changes_control_flow(self):
        self.assertEqual(self.door.stage, Stage.ELIGIBLE)
        self.assertGreaterEqual(len(self.door.verdict.significant_activities), 8)


if __name__ == "__main__":
    unittest.main()
