import math
import tempfile
import unittest
from datetime import date
from pathlib import Path

import numpy as np

from timerefine.circstats import TWO_PI, circular_mean_resultant, rao_spacing_test, to_radians, watson_u2
from timerefine.errors import InputError, SpecError
from timerefine.eventlog import ColumnConfig, PartitionSpec, parse_csv, partition, write_csv
from timerefine.mixture import VonMisesComponent, VonMisesMixture
from timerefine.synth import (
    MarkovOrdering,
    SensorProfile,
    SyntheticSpec,
    generate,
    load_spec,
    parse_spec,
    with_seed,
)

SPEC = """
seed = 3
days = 5
start_date = 2008-02-25
address = "flat"

[[sensors]]
name = "kettle"
events_per_day = 4
profile = "mixture"
components = [{ weight = 1.0, mean_hours = 7.0, kappa = 20.0 }]

[[sensors]]
name = "toilet"
events_per_day = 3
"""

HOUSEHOLD = Path(__file__).resolve().parent.parent / "specs" / "household.toml"


def kettle(rate=4.0, kappa=20.0):
    return SensorProfile("kettle", rate, VonMisesMixture((VonMisesComponent(1.0, to_radians(7.0), kappa),)))


class TestGenerate(unittest.TestCase):
    def test_one_trace_per_day(self):
        log = generate(parse_spec(SPEC))
        self.assertEqual([t.case_id for t in log.traces],
                         [f"flat|2008-02-{d}" for d in range(25, 30)])
        for trace in log.traces:
            self.assertGreater(len(trace), 0)
            stamps = [e.timestamp for e in trace.events]
            self.assertEqual(stamps, sorted(stamps))
            self.assertTrue(all(e.timestamp.date().isoformat() in trace.case_id for e in trace.events))
            self.assertTrue(all(e.attributes == {"address": "flat"} for e in trace.events))

    def test_ids_are_running_numbers(self):
        log = generate(parse_spec(SPEC))
        self.assertEqual([e.id for e in log.events()], [str(i) for i in range(1, len(log) + 1)])

    def test_same_seed_same_log(self):
        spec = parse_spec(SPEC)
        self.assertEqual(write_csv(generate(spec)), write_csv(generate(spec)))
        self.assertNotEqual(write_csv(generate(spec)), write_csv(generate(with_seed(spec, 4))))

    def test_millisecond_timestamps(self):
        log = generate(parse_spec(SPEC))
        self.assertTrue(all(e.timestamp.microsecond % 1000 == 0 for e in log.events()))

    def test_csv_round_trip_keeps_traces(self):
        log = generate(parse_spec(SPEC))
        again = partition(parse_csv(write_csv(log), ColumnConfig(id="id")), PartitionSpec(("address",)))
        self.assertEqual([t.labels() for t in again.traces], [t.labels() for t in log.traces])

    def test_rates_and_profiles(self):
        spec = SyntheticSpec((kettle(), SensorProfile("toilet", 3.0)), days=400, seed=1)
        log = generate(spec)
        kettle_events = log.label_events("kettle")
        self.assertAlmostEqual(len(kettle_events) / 400, 4.0, delta=0.3)
        mean = circular_mean_resultant([to_radians(e.hour) for e in kettle_events])
        self.assertAlmostEqual(mean.mu * 24 / TWO_PI, 7.0, delta=0.1)
        toilet = [to_radians(e.hour) for e in log.label_events("toilet")]
        self.assertFalse(rao_spacing_test(toilet, alpha=0.001).reject)

    def test_at_least_one_event_per_day(self):
        spec = SyntheticSpec((SensorProfile("rare", 0.01),), days=30)
        self.assertTrue(all(len(t) == 1 for t in generate(spec).traces))

    def test_empty_days_get_one_event(self):
        log = generate(SyntheticSpec((SensorProfile("rare", 0.5),), days=2000, seed=2))
        self.assertAlmostEqual(len(log) / 2000, 0.5 + math.exp(-0.5), delta=0.05)

    def test_planted_profile_passes_watson(self):
        planted = VonMisesMixture((VonMisesComponent(0.76, 2.05, 3.85), VonMisesComponent(0.24, 5.94, 1.56)))
        fits = 0
        for seed in range(20):
            log = generate(SyntheticSpec((SensorProfile("door", 5.0, planted),), days=1100, seed=seed))
            angles = [to_radians(e.hour) for e in log.label_events("door")]
            self.assertGreaterEqual(len(angles), 5000)
            fits += not watson_u2(angles, planted.cdf, alpha=0.01).reject
        self.assertGreaterEqual(fits, 19)

    def test_markov_ordering(self):
        ordering = MarkovOrdering(("a", "b"), np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 0.0]))
        spec = SyntheticSpec((SensorProfile("a", 3.0), SensorProfile("b", 3.0)), days=20, ordering=ordering)
        for trace in generate(spec).traces:
            labels = trace.labels()
            self.assertEqual(labels, (["a", "b"] * len(labels))[:len(labels)])


class TestSpecValidation(unittest.TestCase):
    def assert_spec_error(self, text, fragment):
        with self.assertRaises(SpecError) as ctx:
            parse_spec(text)
        self.assertIn(fragment, str(ctx.exception))

    def test_rate_must_be_positive(self):
        self.assert_spec_error('[[sensors]]\nname = "a"\nevents_per_day = 0\n', "sensors[0].events_per_day")

    def test_missing_name(self):
        self.assert_spec_error("[[sensors]]\nevents_per_day = 1\n", "sensors[0].name")

    def test_unknown_profile(self):
        self.assert_spec_error('[[sensors]]\nname = "a"\nevents_per_day = 1\nprofile = "gauss"\n',
                               "sensors[0].profile")

    def test_mixture_needs_components(self):
        self.assert_spec_error('[[sensors]]\nname = "a"\nevents_per_day = 1\nprofile = "mixture"\n',
                               "sensors[0].components")

    def test_weights_must_sum_to_one(self):
        text = (
            '[[sensors]]\nname = "a"\nevents_per_day = 1\nprofile = "mixture"\n'
            "components = [{ weight = 0.5, mean = 1.0, kappa = 2.0 }]\n"
        )
        self.assert_spec_error(text, "sensors[0].components")

    def test_duplicate_names(self):
        text = '[[sensors]]\nname = "a"\nevents_per_day = 1\n[[sensors]]\nname = "a"\nevents_per_day = 2\n'
        self.assert_spec_error(text, "distinct")

    def test_no_sensors(self):
        self.assert_spec_error("days = 3\n", "sensors")

    def test_ordering_rows(self):
        text = (
            '[[sensors]]\nname = "a"\nevents_per_day = 1\n[[sensors]]\nname = "b"\nevents_per_day = 1\n'
            '[ordering]\nstates = ["a", "b"]\nmatrix = [[0.5, 0.4], [0.5, 0.5]]\n'
        )
        self.assert_spec_error(text, "ordering.matrix[0]")

    def test_ordering_states(self):
        text = (
            '[[sensors]]\nname = "a"\nevents_per_day = 1\n'
            '[ordering]\nstates = ["b"]\nmatrix = [[1.0]]\n'
        )
        self.assert_spec_error(text, "ordering.states")

    def test_syntax_error(self):
        with self.assertRaises(SpecError):
            parse_spec("days = = 3")

    def test_load_spec(self):
        spec = load_spec(HOUSEHOLD)
        self.assertEqual(spec.seed, 7)
        self.assertEqual(spec.start_date, date(2008, 2, 25))
        self.assertEqual([s.name for s in spec.sensors][:2], ["bedroom door", "plates cupboard"])
        door = spec.sensors[0].mixture
        self.assertAlmostEqual(door.components[0].mu, 2.05)
        self.assertAlmostEqual(spec.sensors[1].mixture.components[1].mu, 18.5 * math.pi / 12)
        self.assertIsNone(spec.sensors[2].mixture)

    def test_load_spec_errors(self):
        with self.assertRaises(InputError):
            load_spec("/nonexistent/spec.toml")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.toml"
            path.write_text("days = 0\n[[sensors]]\nname = 'a'\nevents_per_day = 1\n", encoding="utf-8")
            with self.assertRaises(SpecError) as ctx:
                load_spec(path)
            self.assertIn("days", str(ctx.exception))
            self.assertIn(str(path), str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
