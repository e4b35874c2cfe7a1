"""
Tests for the boosting app: weight updates, round weights, the AdaBoost loop
and the baseline component learners.
"""

import math
from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from boosting import services as boost_svc
from boosting.learners import (
    StumpLearner,
    StumpSearch,
    TinyNetLearner,
    TreeLearner,
    learn_stump,
    learn_tinynet,
    learn_tree,
    stump_errors,
)
from boosting.models import (
    ComponentClassifier,
    Stump,
    StrongClassifier,
    WeightVector,
)
from haarboost_project.exceptions import BoostingBoundError, LearnerError
from svm.models import Dataset, SampleMode


@dataclass(frozen=True, eq=False)
class FixedOutput(ComponentClassifier):
    """Component returning a preset prediction per training row."""

    outputs: tuple

    family = "fixed"

    @property
    def feature_ids(self):
        return ()

    def predict(self, X, feature_ids=None):
        return np.asarray(self.outputs[: len(X)], dtype=np.int8)


def two_gaussians(seed, n=100, spread=1.0):
    rng = np.random.default_rng(seed)
    points = np.vstack([rng.normal(-1, spread, size=(n, 2)), rng.normal(1, spread, size=(n, 2))])
    return Dataset(points, [-1] * n + [1] * n)


class WeightedErrorTestCase(SimpleTestCase):
    """Test weighted_error"""

    def setUp(self):
        self.data = Dataset([[0], [1], [2], [3]], [1, 1, 1, 1])
        self.w = WeightVector.uniform(4)

    def test_all_correct(self):
        """Test a perfect component has zero error"""
        self.assertEqual(boost_svc.weighted_error(FixedOutput((1, 1, 1, 1)), self.data, self.w), 0.0)

    def test_one_mistake(self):
        """Test one miss under uniform quarter weights"""
        self.assertEqual(boost_svc.weighted_error(FixedOutput((-1, 1, 1, 1)), self.data, self.w), 0.25)

    def test_size_mismatch(self):
        """Test weights must match the data length"""
        with self.assertRaises(ValidationError):
            boost_svc.weighted_error(FixedOutput((1, 1, 1, 1)), self.data, WeightVector.uniform(3))

    def test_matches_loop(self):
        """Test vectorised error equals an explicit loop on random inputs"""
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 40))
            labels = rng.choice([-1, 1], size=n)
            outputs = tuple(rng.choice([-1, 1], size=n).tolist())
            w, _ = WeightVector.normalized(rng.random(n))
            data = Dataset(np.zeros((n, 1)), labels)
            expected = sum(w.values[i] for i in range(n) if outputs[i] != labels[i])
            self.assertAlmostEqual(boost_svc.weighted_error(FixedOutput(outputs), data, w), expected, places=12)


class AlphaTestCase(SimpleTestCase):
    """Test alpha_of"""

    def test_closed_forms(self):
        """Test the three reference values"""
        self.assertEqual(boost_svc.alpha_of(0.5), 0.0)
        self.assertAlmostEqual(boost_svc.alpha_of(0.25), 0.5 * math.log(3), places=12)
        self.assertAlmostEqual(boost_svc.alpha_of(0.25), 0.549306, places=6)
        self.assertAlmostEqual(boost_svc.alpha_of(0.75), -0.5 * math.log(3), places=12)

    def test_antisymmetry(self):
        """Test alpha(eps) + alpha(1 - eps) = 0"""
        for eps in np.linspace(0.001, 0.999, 97):
            self.assertAlmostEqual(boost_svc.alpha_of(eps) + boost_svc.alpha_of(1 - eps), 0.0, delta=1e-12)

    def test_zero_error_is_clamped(self):
        """Test eps = 0 gives the clamped weight and logs the clamp"""
        with self.assertLogs("boosting.services", level="WARNING"):
            alpha = boost_svc.alpha_of(0.0)
        self.assertAlmostEqual(alpha, 0.5 * math.log((1 - 1e-10) / 1e-10), places=9)
        self.assertAlmostEqual(alpha, 11.5, delta=0.02)


class UpdateWeightsTestCase(SimpleTestCase):
    """Test update_weights"""

    def setUp(self):
        self.data = Dataset([[0], [1], [2], [3]], [1, 1, 1, 1])
        self.w = WeightVector.uniform(4)

    def test_misclassified_mass_becomes_half(self):
        """Test the worked four-sample update"""
        w, z = boost_svc.update_weights(self.w, 0.5 * math.log(3), FixedOutput((-1, 1, 1, 1)), self.data)
        self.assertTrue(np.allclose(w.values, [0.5, 1 / 6, 1 / 6, 1 / 6], atol=1e-12))
        self.assertAlmostEqual(z, 2 * math.sqrt(0.25 * 0.75), places=12)

    def test_zero_alpha_keeps_weights(self):
        """Test alpha 0 leaves the distribution unchanged"""
        w, z = boost_svc.update_weights(self.w, 0.0, FixedOutput((-1, 1, -1, 1)), self.data)
        self.assertTrue(np.allclose(w.values, self.w.values))
        self.assertEqual(z, 1.0)

    def test_all_wrong_keeps_weights(self):
        """Test a uniform rescale cancels in normalisation"""
        w, _ = boost_svc.update_weights(self.w, 0.7, FixedOutput((-1, -1, -1, -1)), self.data)
        self.assertTrue(np.allclose(w.values, self.w.values, atol=1e-15))

    def test_sum_stays_one(self):
        """Test the updated weights stay a distribution on random updates"""
        rng = np.random.default_rng(1)
        data = Dataset(np.zeros((50, 1)), rng.choice([-1, 1], size=50))
        w = WeightVector.uniform(50)
        for _ in range(30):
            w, _ = boost_svc.update_weights(w, float(rng.normal()), FixedOutput(tuple(rng.choice([-1, 1], size=50))), data)
            self.assertAlmostEqual(w.values.sum(), 1.0, delta=1e-12)
            self.assertTrue((w.values >= 0).all())

    def test_weight_vector_validation(self):
        """Test negative or unnormalised weights are rejected"""
        with self.assertRaises(ValidationError):
            WeightVector(np.array([0.5, 0.6]))
        with self.assertRaises(ValidationError):
            WeightVector(np.array([1.5, -0.5]))


class RunAdaBoostTestCase(SimpleTestCase):
    """Test the boosting loop"""

    def test_single_perfect_stump(self):
        """Test one stump on threshold-separable data ends with zero error"""
        data = Dataset([[-2], [-1], [1], [2]], [-1, -1, 1, 1])
        strong = boost_svc.run_adaboost(data, StumpLearner(), T=1)
        self.assertEqual(strong.predict(data.points).tolist(), [-1, -1, 1, 1])
        self.assertEqual(strong.history[0].epsilon, 0.0)
        self.assertTrue(strong.history[0].clamped)

    def test_perfect_component_stops_early(self):
        """Test an eps = 0 round ends the loop before T"""
        data = Dataset([[-2], [-1], [1], [2]], [-1, -1, 1, 1])
        strong = boost_svc.run_adaboost(data, StumpLearner(), T=10)
        self.assertEqual(len(strong), 1)

    def test_training_error_bound(self):
        """Test 20 stumps on overlapping Gaussians respect prod 2 sqrt(eps (1 - eps))"""
        data = two_gaussians(3)
        trainer = boost_svc.AdaBoostTrainer(data, StumpLearner())
        for _ in range(20):
            trainer.step()
        self.assertTrue(all(0 < r.epsilon < 0.5 for r in trainer.history))
        bound = boost_svc.error_bound(trainer.history)
        self.assertLessEqual(trainer.training_error(), bound + 1e-12)
        self.assertAlmostEqual(trainer.normalizer_product(), bound, places=9)
        trainer.check_bound()

    def test_clamped_round_bound(self):
        """Test a perfect round contributes 2 sqrt(floor (1 - floor)), not its normalizer"""
        data = Dataset([[-2], [-1], [1], [2]], [-1, -1, 1, 1])
        trainer = boost_svc.AdaBoostTrainer(data, StumpLearner())
        trainer.step()
        self.assertTrue(trainer.history[0].clamped)
        bound = boost_svc.error_bound(trainer.history)
        self.assertAlmostEqual(bound, 2 * math.sqrt(1e-10 * (1 - 1e-10)), delta=1e-15)
        self.assertGreater(bound, trainer.normalizer_product())
        trainer.check_bound()

    def test_misreported_error_breaks_bound(self):
        """Test a round recorded with a far lower eps than it has fails the check"""
        data = Dataset([[0], [1], [2], [3]], [-1, -1, 1, 1])
        trainer = boost_svc.AdaBoostTrainer(data, StumpLearner())
        outputs = (-1, 1, -1, 1)
        trainer.record(FixedOutput(outputs), 0.01, np.array(outputs))
        self.assertEqual(trainer.training_error(), 0.5)
        self.assertGreater(trainer.normalizer_product(), 1.0)
        with self.assertRaises(BoostingBoundError):
            trainer.check_bound()

    def test_exponential_loss_non_increasing(self):
        """Test the exponential loss never rises while every eps < 1/2"""
        data = two_gaussians(4)
        trainer = boost_svc.AdaBoostTrainer(data, StumpLearner())
        losses = []
        for _ in range(15):
            trainer.step()
            losses.append(boost_svc.exponential_loss(trainer.classifier(), data))
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(losses, losses[1:])))

    def test_constant_learner_keeps_going(self):
        """Test eps = 1/2 gives alpha 0, unchanged weights and a full run"""
        data = Dataset([[0], [1], [2], [3]], [-1, 1, -1, 1])
        strong = boost_svc.run_adaboost(data, lambda d, w: FixedOutput((1, 1, 1, 1)), T=3)
        self.assertEqual(len(strong), 3)
        self.assertTrue(all(r.epsilon == 0.5 and r.alpha == 0.0 for r in strong.history))

    def test_learner_failure_carries_round(self):
        """Test a failing learner surfaces as LearnerError with the round index"""
        data = Dataset([[0], [1]], [-1, 1])

        def broken(d, w):
            raise ValueError("no usable split")

        with self.assertRaises(LearnerError) as ctx:
            boost_svc.run_adaboost(data, broken, T=2)
        self.assertEqual(ctx.exception.round_index, 1)

    def test_invalid_round_count(self):
        """Test T must be positive"""
        with self.assertRaises(ValidationError):
            boost_svc.run_adaboost(Dataset([[0], [1]], [-1, 1]), StumpLearner(), T=0)


class StrongDecisionTestCase(SimpleTestCase):
    """Test strong_decision"""

    def test_single_round(self):
        """Test score 0.5 and label +1"""
        strong = StrongClassifier(((0.5, FixedOutput((1,))),))
        self.assertEqual(boost_svc.strong_decision(strong, [0.0]), (0.5, 1))

    def test_two_rounds(self):
        """Test 1*(+1) + 2*(-1) = -1"""
        strong = StrongClassifier(((1.0, FixedOutput((1,))), (2.0, FixedOutput((-1,)))))
        self.assertEqual(boost_svc.strong_decision(strong, [0.0]), (-1.0, -1))

    def test_low_threshold_accepts_everything(self):
        """Test theta = -10 labels every bounded score +1"""
        strong = StrongClassifier(((1.0, Stump(0, 0.0, 1)), (2.0, Stump(0, 1.0, -1))), threshold=-10)
        for x in np.linspace(-5, 5, 21):
            self.assertEqual(boost_svc.strong_decision(strong, [x])[1], 1)

    def test_needs_a_round(self):
        """Test an empty ensemble is invalid"""
        with self.assertRaises(ValidationError):
            StrongClassifier(())


class LearnerTestCase(SimpleTestCase):
    """Test stump, tree and network learners"""

    def test_stump_on_separable_line(self):
        """Test threshold 0 and polarity +1 on the two-point line"""
        data = Dataset([[-1], [1]], [-1, 1])
        stump = learn_stump(data, WeightVector.uniform(2))
        self.assertEqual((stump.feature_id, stump.threshold, stump.polarity), (0, 0.0, 1))
        self.assertEqual(boost_svc.weighted_error(stump, data, WeightVector.uniform(2)), 0.0)

    def test_stump_error_at_most_half(self):
        """Test polarity choice keeps every stump at or below 1/2"""
        rng = np.random.default_rng(6)
        for _ in range(20):
            data = Dataset(rng.normal(size=(30, 4)), rng.choice([-1, 1], size=30))
            w, _ = WeightVector.normalized(rng.random(30))
            stump = learn_stump(data, w)
            self.assertLessEqual(boost_svc.weighted_error(stump, data, w), 0.5 + 1e-12)

    def test_stump_is_exact_minimiser(self):
        """Test the search matches brute force over every column, threshold and polarity"""
        rng = np.random.default_rng(7)
        data = Dataset(rng.integers(0, 5, size=(25, 3)).astype(float), rng.choice([-1, 1], size=25))
        w, _ = WeightVector.normalized(rng.random(25))
        best = math.inf
        for col in range(3):
            values = np.unique(data.points[:, col])
            thresholds = [values[0] - 1, *((values[:-1] + values[1:]) / 2), values[-1] + 1]
            for thr in thresholds:
                for pol in (1, -1):
                    best = min(best, boost_svc.weighted_error(Stump(col, float(thr), pol), data, w))
        stump = learn_stump(data, w)
        self.assertAlmostEqual(boost_svc.weighted_error(stump, data, w), best, places=12)

    def test_stump_tie_prefers_smallest_feature(self):
        """Test identical columns resolve to the lower feature id"""
        data = Dataset([[0, 0], [1, 1], [2, 2], [3, 3]], [-1, -1, 1, 1])
        stump = learn_stump(data, WeightVector.uniform(4))
        self.assertEqual(stump.feature_id, 0)
        self.assertEqual(stump.threshold, 1.5)

    def test_stump_uses_feature_ids(self):
        """Test stumps on labelled columns report the column's feature id"""
        data = Dataset([[5, -1], [5, 1]], [-1, 1], feature_ids=np.array([10, 42]))
        stump = learn_stump(data, WeightVector.uniform(2))
        self.assertEqual(stump.feature_id, 42)
        self.assertEqual(stump.predict(data.points, data.feature_ids).tolist(), [-1, 1])

    def test_stump_errors_per_column(self):
        """Test per-column errors include the global minimum"""
        data = two_gaussians(8, n=30)
        w = WeightVector.uniform(60)
        errors = stump_errors(data, w)
        self.assertEqual(errors.shape, (2,))
        self.assertAlmostEqual(errors.min(), boost_svc.weighted_error(learn_stump(data, w), data, w), places=12)

    def test_depth_one_tree_equals_stump(self):
        """Test a depth-1 tree reaches exactly the stump's error"""
        rng = np.random.default_rng(9)
        for _ in range(10):
            data = Dataset(rng.normal(size=(40, 3)), rng.choice([-1, 1], size=40))
            w, _ = WeightVector.normalized(rng.random(40))
            tree = learn_tree(data, w, max_depth=1)
            self.assertEqual(
                boost_svc.weighted_error(tree, data, w),
                boost_svc.weighted_error(learn_stump(data, w), data, w),
            )

    def test_tree_solves_xor(self):
        """Test depth 2 separates XOR where a stump cannot"""
        data = Dataset([[0, 0], [1, 1], [0, 1], [1, 0]], [-1, -1, 1, 1])
        w = WeightVector.uniform(4)
        self.assertEqual(boost_svc.weighted_error(learn_stump(data, w), data, w), 0.5)
        tree = learn_tree(data, w, max_depth=2)
        self.assertEqual(boost_svc.weighted_error(tree, data, w), 0.0)
        self.assertLessEqual(tree.depth, 2)

    def test_tinynet_fits_and_is_seeded(self):
        """Test the network separates Gaussians and repeats under the same seed"""
        data = two_gaussians(10, n=50, spread=0.5)
        w = WeightVector.uniform(100)
        a = learn_tinynet(data, w, seed=3)
        b = learn_tinynet(data, w, seed=3)
        self.assertLess(boost_svc.weighted_error(a, data, w), 0.1)
        self.assertTrue(np.array_equal(a.w1, b.w1))

    def test_tinynet_trains_on_weighted_resample(self):
        """Test the default network only sees samples with positive weight"""
        rng = np.random.default_rng(4)
        points = rng.normal(size=(20, 2))
        data = Dataset(points, [-1, 1] * 10)
        raw = np.zeros(20)
        raw[:2] = 1.0
        w, _ = WeightVector.normalized(raw)
        net = learn_tinynet(data, w, epochs=5, seed=2)
        low, high = points[:2].min(axis=0), points[:2].max(axis=0)
        self.assertTrue(((net.means >= low - 1e-12) & (net.means <= high + 1e-12)).all())
        reweighted = learn_tinynet(data, w, epochs=5, seed=2, mode=SampleMode.REWEIGHT)
        np.testing.assert_allclose(reweighted.means, points.mean(axis=0))

    def test_net_learner_caps_inputs(self):
        """Test wide inputs are cut to the best stump columns"""
        rng = np.random.default_rng(11)
        data = Dataset(rng.normal(size=(40, 10)), rng.choice([-1, 1], size=40))
        net = TinyNetLearner(np.random.default_rng(0), epochs=5, max_inputs=3)(data, WeightVector.uniform(40))
        self.assertEqual(len(net.feature_ids), 3)

    def test_mixed_ensemble_serialises(self):
        """Test an ensemble of stumps, trees and nets predicts the same after reload"""
        data = two_gaussians(12, n=30)
        w = WeightVector.uniform(60)
        strong = StrongClassifier(
            ((0.7, learn_stump(data, w)), (0.4, TreeLearner(2)(data, w)), (0.2, learn_tinynet(data, w, epochs=10, seed=1))),
            threshold=0.1,
        )
        again = StrongClassifier.from_dict(strong.to_dict())
        self.assertTrue(np.array_equal(strong.scores(data.points), again.scores(data.points)))
        self.assertEqual(again.threshold, 0.1)

    def test_search_caches_sort_order(self):
        """Test the stump learner reuses its presorted columns for the same matrix"""
        data = two_gaussians(13, n=20)
        learner = StumpLearner()
        learner(data, WeightVector.uniform(40))
        first = learner.search_for(data)
        learner(data, WeightVector.uniform(40))
        self.assertIs(learner.search_for(data), first)
        self.assertIsInstance(first, StumpSearch)
