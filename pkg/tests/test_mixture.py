import math
import unittest

import numpy as np

from timerefine.circstats import TWO_PI, von_mises_pdf
from timerefine.errors import FitError
from timerefine.mixture import (
    VonMisesComponent,
    VonMisesMixture,
    assign,
    bic,
    bic_score,
    em_fit,
    permuted,
    select_components,
)


def draw(components, n, seed):
    """Sample n angles from (weight, mu, kappa) triples."""
    rng = np.random.default_rng(seed)
    w = np.array([c[0] for c in components])
    which = rng.choice(len(components), size=n, p=w / w.sum())
    mu = np.array([c[1] for c in components])[which]
    kappa = np.array([c[2] for c in components])[which]
    return np.mod(rng.vonmises(mu, kappa), TWO_PI)


def circular_distance(a, b):
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


# Two components close to the Kasteren bedroom-door fit.
DOOR = [(0.76, 2.05, 3.85), (0.24, 5.94, 1.56)]
SEPARATED = [(0.5, 2.0, 8.0), (0.5, 2.0 + math.pi, 8.0)]


class TestMixtureModel(unittest.TestCase):
    def setUp(self):
        self.model = VonMisesMixture((VonMisesComponent(0.3, 1.0, 2.0), VonMisesComponent(0.7, 4.0, 5.0)))

    def test_pdf_is_weighted_sum(self):
        theta = np.array([0.5, 2.0, 4.1])
        expected = 0.3 * von_mises_pdf(theta, 1.0, 2.0) + 0.7 * von_mises_pdf(theta, 4.0, 5.0)
        np.testing.assert_allclose(self.model.pdf(theta), expected, rtol=1e-12)

    def test_posterior_rows_sum_to_one(self):
        post = self.model.posterior(np.linspace(0.0, TWO_PI, 50, endpoint=False))
        np.testing.assert_allclose(post.sum(axis=1), 1.0)

    def test_parameter_count(self):
        self.assertEqual(self.model.n_parameters, 5)

    def test_weights_must_sum_to_one(self):
        with self.assertRaises(ValueError):
            VonMisesMixture((VonMisesComponent(0.3, 1.0, 2.0), VonMisesComponent(0.3, 4.0, 5.0)))

    def test_component_validation(self):
        with self.assertRaises(ValueError):
            VonMisesComponent(0.5, 1.0, -1.0)
        with self.assertRaises(ValueError):
            VonMisesComponent(0.0, 1.0, 1.0)
        with self.assertRaises(ValueError):
            VonMisesComponent(0.5, TWO_PI, 1.0)

    def test_permuted(self):
        swapped = permuted(self.model, [1, 0])
        self.assertEqual(swapped.components[0], self.model.components[1])
        self.assertAlmostEqual(swapped.pdf(1.3), self.model.pdf(1.3))


class TestEm(unittest.TestCase):
    def test_needs_two_points_per_component(self):
        with self.assertRaises(FitError):
            em_fit([0.1, 0.2, 0.3], 2)

    def test_log_likelihood_never_decreases(self):
        fit = em_fit(draw(DOOR, 500, seed=1), 2, seed=0)
        steps = np.diff(fit.log_likelihood_trace)
        self.assertTrue(np.all(steps >= -1e-9))

    def test_recovers_generating_parameters(self):
        # The small component's kappa only holds to 50% at this sample size.
        recovered = 0
        for seed in range(20):
            selection = select_components(draw(DOOR, 1000, seed=seed), seed=seed)
            if selection.chosen != 2:
                continue
            big, small = selection.model.components
            ok = (
                abs(big.weight - 0.76) < 0.05
                and circular_distance(big.mu, 2.05) < 0.15
                and abs(big.kappa - 3.85) / 3.85 < 0.2
                and abs(small.weight - 0.24) < 0.05
                and circular_distance(small.mu, 5.94) < 0.15
                and abs(small.kappa - 1.56) / 1.56 < 0.5
            )
            recovered += ok
        self.assertGreaterEqual(recovered, 18)

    def test_components_ordered_by_weight(self):
        fit = em_fit(draw(DOOR, 1000, seed=3), 2)
        self.assertGreaterEqual(fit.components[0].weight, fit.components[1].weight)

    def test_rotation_equivariance(self):
        angles = draw(SEPARATED, 400, seed=5)
        delta = 1.0
        a = em_fit(angles, 2, seed=0, tol=1e-12, max_iter=2000)
        b = em_fit(np.mod(angles + delta, TWO_PI), 2, seed=0, tol=1e-12, max_iter=2000)
        self.assertAlmostEqual(a.log_likelihood, b.log_likelihood, places=6)
        for ca, cb in zip(a.components, b.components):
            self.assertAlmostEqual(ca.weight, cb.weight, places=6)
            self.assertAlmostEqual(circular_distance(ca.mu + delta, cb.mu), 0.0, places=6)
            self.assertAlmostEqual(ca.kappa, cb.kappa, delta=1e-5 * ca.kappa)

    def test_seeded_fit_is_reproducible(self):
        angles = draw(DOOR, 300, seed=9)
        self.assertEqual(em_fit(angles, 2, seed=4).components, em_fit(angles, 2, seed=4).components)


class TestModelSelection(unittest.TestCase):
    def test_bic_score(self):
        self.assertAlmostEqual(bic_score(-100.0, 5, 100), 200.0 + 5 * math.log(100))

    def test_bic_entry_matches_fit(self):
        angles = draw(DOOR, 200, seed=2)
        fit = em_fit(angles, 2)
        entry = bic(fit, angles)
        self.assertEqual(entry.n_parameters, 5)
        self.assertEqual(entry.n, 200)
        self.assertAlmostEqual(entry.log_likelihood, fit.log_likelihood, places=6)

    def test_chooses_two_for_the_door(self):
        chosen = [select_components(draw(DOOR, 500, seed=s), seed=s).chosen for s in range(5)]
        self.assertGreaterEqual(chosen.count(2), 4)

    def test_chooses_two_for_separated_modes(self):
        chosen = [select_components(draw(SEPARATED, 300, seed=s), seed=s).chosen for s in range(10)]
        self.assertGreaterEqual(chosen.count(2), 9)

    def test_chooses_one_for_uniform(self):
        rng = np.random.default_rng(0)
        chosen = [select_components(rng.uniform(0.0, TWO_PI, 300), seed=s).chosen for s in range(10)]
        self.assertGreaterEqual(chosen.count(1), 9)

    def test_sweep_stops_at_first_small_drop(self):
        selection = select_components(draw(SEPARATED, 300, seed=1), max_components=5)
        bics = [e.bic for e in selection.entries]
        self.assertLessEqual(len(bics), selection.chosen + 1)
        for prev, cur in zip(bics[:selection.chosen - 1], bics[1:selection.chosen]):
            self.assertGreater(prev - cur, 10.0)
        if len(bics) > selection.chosen:
            self.assertLessEqual(bics[selection.chosen - 1] - bics[selection.chosen], 10.0)
        self.assertIs(selection.model, selection.models[selection.chosen])

    def test_max_components_one(self):
        selection = select_components(draw(SEPARATED, 100, seed=1), max_components=1)
        self.assertEqual(selection.chosen, 1)
        self.assertEqual(len(selection.entries), 1)


class TestAssignment(unittest.TestCase):
    def setUp(self):
        self.model = VonMisesMixture((VonMisesComponent(0.5, 1.0, 2.0), VonMisesComponent(0.5, 4.0, 2.0)))

    def test_labels_follow_posterior(self):
        result = assign(self.model, [0.9, 1.1, 3.9, 4.2, 6.0])
        self.assertEqual(result.labels.tolist(), [0, 0, 1, 1, 0])
        self.assertEqual(result.sizes(), [3, 2])

    def test_covering_arc_wraps_midnight(self):
        result = assign(self.model, [0.9, 1.1, 3.9, 4.2, 6.0])
        start, end = result.ranges[0]
        self.assertAlmostEqual(start, 6.0)
        self.assertAlmostEqual(end, 1.1)

    def test_decision_arcs(self):
        arcs = assign(self.model, [1.0, 4.0]).decision_arcs
        self.assertEqual(len(arcs[0]), 1)
        self.assertEqual(len(arcs[1]), 1)
        (s0, e0), (s1, e1) = arcs[0][0], arcs[1][0]
        self.assertAlmostEqual(s0, 2.5 + math.pi, places=9)
        self.assertAlmostEqual(e0, 2.5, places=9)
        self.assertAlmostEqual(s1, 2.5, places=9)
        self.assertAlmostEqual(e1, 2.5 + math.pi, places=9)

    def test_tie_goes_to_lowest_index(self):
        result = assign(self.model, [2.5])
        self.assertEqual(int(result.labels[0]), 0)

    def test_empty_cluster_has_no_range(self):
        result = assign(self.model, [0.9, 1.1])
        self.assertIsNone(result.ranges[1])
        self.assertEqual(result.hour_ranges()[1], None)

    def test_single_component_owns_the_day(self):
        model = VonMisesMixture((VonMisesComponent(1.0, 1.0, 2.0),))
        self.assertEqual(assign(model, [0.5, 1.5]).decision_arcs, [[(0.0, TWO_PI)]])


if __name__ == "__main__":
    unittest.main()
