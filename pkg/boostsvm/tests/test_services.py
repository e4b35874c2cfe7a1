"""
Tests for boostsvm: the sigma schedule, rejection rule, component
construction and the round log.
"""

import csv
import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from boosting.learners import stump_errors
from boosting.models import ComponentClassifier, WeightVector
from boostsvm import services as boostsvm_svc
from boostsvm.models import AttemptStatus, BoostSvmConfig, SigmaSchedule
from haarboost_project.exceptions import LearnerError, ScheduleExhaustedError, SingleClassError
from svm import services as svm_svc
from svm.models import Dataset, SolverConfig


@dataclass(frozen=True, eq=False)
class Scripted(ComponentClassifier):
    outputs: tuple

    family = "scripted"

    @property
    def feature_ids(self):
        return ()

    def predict(self, X, feature_ids=None):
        return np.asarray(self.outputs, dtype=np.int8)


def scripted_factory(*mistake_counts, labels):
    """Factory yielding components that misclassify the first k samples, k from the script."""
    script = iter(mistake_counts)
    sigmas = []

    def factory(data, w, sigma, cfg, seed):
        sigmas.append(sigma)
        k = next(script)
        outputs = np.array(labels, dtype=np.int8)
        outputs[:k] *= -1
        return Scripted(tuple(outputs.tolist()))

    return factory, sigmas


def gaussians(seed, n_pos=20, n_neg=20, spread=1.0, gap=1.0):
    rng = np.random.default_rng(seed)
    points = np.vstack([rng.normal(-gap, spread, size=(n_neg, 2)), rng.normal(gap, spread, size=(n_pos, 2))])
    return Dataset(points, [-1] * n_neg + [1] * n_pos)


class SigmaScheduleTestCase(SimpleTestCase):
    """Test the schedule type"""

    def test_requires_ordered_bounds(self):
        """Test sigma_min must be below sigma_ini"""
        with self.assertRaises(ValidationError):
            SigmaSchedule(1.0, 2.0, 0.1)

    def test_decrements_to_floor(self):
        """Test decrements never pass sigma_min"""
        schedule = SigmaSchedule(1.0, 0.5, 0.2)
        self.assertAlmostEqual(schedule.decrement(), 0.8)
        schedule.decrement()
        self.assertEqual(schedule.decrement(), 0.5)
        self.assertTrue(schedule.exhausted)


class AdaBoostSvmTestCase(SimpleTestCase):
    """Test the adaptive-sigma loop"""

    def setUp(self):
        self.labels = [-1] * 5 + [1] * 5
        self.data = Dataset(np.arange(10, dtype=float).reshape(10, 1), self.labels)
        self.cfg = BoostSvmConfig(sigma_ini=1.0, sigma_min=0.1, sigma_step=0.1, t_max=1)

    def test_high_error_decreases_sigma(self):
        """Test eps = 0.6 is rejected, sigma drops one step and no round is used"""
        factory, sigmas = scripted_factory(6, 2, labels=self.labels)
        trainer = boostsvm_svc.fit_adaboost_svm(self.data, self.cfg, factory=factory)
        self.assertEqual(trainer.t, 1)
        self.assertEqual([a.status for a in trainer.attempts], [AttemptStatus.REJECTED, AttemptStatus.ACCEPTED])
        self.assertAlmostEqual(trainer.attempts[0].epsilon, 0.6)
        self.assertEqual(sigmas[0], 1.0)
        self.assertAlmostEqual(sigmas[1], 0.9)
        self.assertAlmostEqual(trainer.history[0].epsilon, 0.2)

    def test_exhausted_schedule_without_rounds(self):
        """Test sigma running out before any acceptance raises"""
        factory, _ = scripted_factory(*([7] * 20), labels=self.labels)
        with self.assertRaises(ScheduleExhaustedError):
            boostsvm_svc.run_adaboost_svm(self.data, self.cfg, factory=factory)

    def test_component_failure_carries_round(self):
        """Test a failing component surfaces as LearnerError with its round index"""
        cfg = BoostSvmConfig(sigma_ini=1.0, sigma_min=0.1, sigma_step=0.1, t_max=3)
        scripted, _ = scripted_factory(2, labels=self.labels)
        calls = []

        def factory(data, w, sigma, cfg, seed):
            calls.append(sigma)
            if len(calls) == 1:
                return scripted(data, w, sigma, cfg, seed)
            raise SingleClassError("weighted resample drew a single class")

        trainer = boostsvm_svc.AdaBoostSvmTrainer(self.data, cfg, factory=factory)
        trainer.step()
        with self.assertRaises(LearnerError) as ctx:
            trainer.step()
        self.assertEqual(ctx.exception.round_index, 2)
        self.assertIsInstance(ctx.exception.__cause__, SingleClassError)
        self.assertEqual(trainer.t, 1)

    def test_zero_weight_rounds_stall(self):
        """Test three alpha = 0 rounds in a row force a sigma decrement"""
        cfg = BoostSvmConfig(sigma_ini=1.0, sigma_min=0.1, sigma_step=0.1, t_max=4, stall_limit=3)
        factory, sigmas = scripted_factory(5, 5, 5, 5, labels=self.labels)
        trainer = boostsvm_svc.fit_adaboost_svm(self.data, cfg, factory=factory)
        self.assertEqual(trainer.t, 4)
        self.assertEqual(sigmas[:3], [1.0, 1.0, 1.0])
        self.assertAlmostEqual(sigmas[3], 0.9)

    def test_separable_data_stops_after_one_round(self):
        """Test a perfect first SVM ends the run with a clamped weight"""
        data = gaussians(1, spread=0.3, gap=5.0)
        cfg = BoostSvmConfig(sigma_ini=5.0, sigma_min=0.5, sigma_step=0.5, C=10.0, resample_n=40, seed=2)
        strong = boostsvm_svc.run_adaboost_svm(data, cfg)
        self.assertEqual(len(strong), 1)
        self.assertEqual(strong.history[0].epsilon, 0.0)
        self.assertTrue(strong.history[0].clamped)
        self.assertEqual(strong.predict(data.points).tolist(), data.labels.tolist())

    def test_schedule_and_round_invariants(self):
        """Test sigma never increases and every accepted round has eps <= 1/2"""
        data = gaussians(3, n_pos=10, n_neg=40)
        cfg = boostsvm_svc.default_config(data, seed=5, t_max=12)
        trainer = boostsvm_svc.fit_adaboost_svm(data, cfg)
        sigmas = [a.sigma for a in trainer.attempts]
        self.assertEqual(sigmas, sorted(sigmas, reverse=True))
        self.assertTrue(all(s > cfg.sigma_min for s in sigmas))
        self.assertTrue(all(r.epsilon <= 0.5 and r.alpha >= 0 for r in trainer.history))
        self.assertAlmostEqual(trainer.weights.values.sum(), 1.0, delta=1e-12)

    def test_same_seed_same_ensemble(self):
        """Test a fixed seed reproduces the serialised classifier exactly"""
        data = gaussians(4, n_pos=12, n_neg=24)
        cfg = boostsvm_svc.default_config(data, seed=11, t_max=5)
        first = json.dumps(boostsvm_svc.run_adaboost_svm(data, cfg).to_dict())
        second = json.dumps(boostsvm_svc.run_adaboost_svm(data, cfg).to_dict())
        self.assertEqual(first, second)


class ComponentTestCase(SimpleTestCase):
    """Test make_svm_component"""

    def setUp(self):
        rng = np.random.default_rng(6)
        self.labels = np.array([-1] * 15 + [1] * 15)
        points = rng.normal(size=(30, 3))
        points[:, 1] += 2.0 * self.labels
        self.points = points
        self.w = WeightVector.uniform(30)

    def test_tabular_uses_all_columns(self):
        """Test data without feature ids is not projected"""
        data = Dataset(self.points, self.labels)
        cfg = BoostSvmConfig(sigma_ini=2.0, sigma_min=0.1, sigma_step=0.1, feature_subset_size=1)
        component = boostsvm_svc.make_svm_component(data, self.w, 2.0, cfg, seed=1)
        self.assertEqual(component.feature_ids, (0, 1, 2))

    def test_image_mode_single_feature(self):
        """Test d = 1 keeps the best stump feature and equals a 1-D SVM on it"""
        ids = np.array([3, 8, 20])
        data = Dataset(self.points, self.labels, feature_ids=ids)
        cfg = BoostSvmConfig(sigma_ini=2.0, sigma_min=0.1, sigma_step=0.1, feature_subset_size=1)
        component = boostsvm_svc.make_svm_component(data, self.w, 2.0, cfg, seed=1)
        best = int(np.argmin(stump_errors(data, self.w)))
        self.assertEqual(best, 1)
        self.assertEqual(component.feature_ids, (8,))
        reference = svm_svc.train_weighted_svm(
            Dataset(self.points[:, [best]], self.labels), self.w, component.model.kernel,
            C=cfg.C, cfg=SolverConfig.from_settings(), sample_size=30, seed=1,
        )
        self.assertTrue(np.array_equal(
            component.decision(self.points, ids), svm_svc.decision_batch(reference, self.points[:, [best]])
        ))

    def test_same_seed_same_component(self):
        """Test two calls with one seed agree bit for bit"""
        data = Dataset(self.points, self.labels)
        cfg = BoostSvmConfig(sigma_ini=2.0, sigma_min=0.1, sigma_step=0.1)
        a = boostsvm_svc.make_svm_component(data, self.w, 1.5, cfg, seed=4)
        b = boostsvm_svc.make_svm_component(data, self.w, 1.5, cfg, seed=4)
        self.assertEqual(json.dumps(a.to_dict()), json.dumps(b.to_dict()))


class DefaultsAndLogTestCase(SimpleTestCase):
    """Test defaults and the round log"""

    def test_default_config_from_median(self):
        """Test the schedule scales with the median pairwise distance"""
        data = Dataset([[0.0], [1.0], [2.0]], [-1, 1, 1])
        cfg = boostsvm_svc.default_config(data)
        self.assertAlmostEqual(cfg.sigma_ini, 10.0)
        self.assertAlmostEqual(cfg.sigma_min, 0.1)
        self.assertAlmostEqual(cfg.sigma_step, 9.9 / 20)
        self.assertEqual(cfg.resample_n, 3)

    def test_default_config_on_svm_input_columns(self):
        """Test a wide feature matrix is measured on the selected columns only"""
        rng = np.random.default_rng(2)
        labels = np.array([-1] * 15 + [1] * 15)
        points = 5.0 * rng.normal(size=(30, 40))
        points[:, 7] = labels + 0.05 * rng.normal(size=30)
        data = Dataset(points, labels, feature_ids=np.arange(100, 140))
        w = WeightVector.uniform(30)
        cfg = boostsvm_svc.default_config(data, seed=3, weights=w, feature_subset_size=1)
        columns = boostsvm_svc.select_feature_subset(data, w, 1)
        self.assertEqual(columns.tolist(), [7])
        projected = boostsvm_svc.median_pairwise_distance(points[:, columns], 200, np.random.default_rng(3))
        full = boostsvm_svc.median_pairwise_distance(points, 200, np.random.default_rng(3))
        self.assertAlmostEqual(cfg.sigma_ini, 10 * projected)
        self.assertLess(cfg.sigma_ini, 10 * full)

    def test_round_log_rows(self):
        """Test one CSV row per attempt with the audit columns"""
        labels = [-1] * 5 + [1] * 5
        data = Dataset(np.arange(10, dtype=float).reshape(10, 1), labels)
        factory, _ = scripted_factory(6, 1, labels=labels)
        trainer = boostsvm_svc.fit_adaboost_svm(
            data, BoostSvmConfig(sigma_ini=1.0, sigma_min=0.1, sigma_step=0.1, t_max=1), factory=factory
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = boostsvm_svc.write_round_log(trainer.attempts, Path(tmp) / "rounds.csv")
            with path.open() as handle:
                rows = list(csv.DictReader(handle))
        self.assertEqual(list(rows[0].keys()), boostsvm_svc.ROUND_LOG_FIELDS)
        self.assertEqual([r["status"] for r in rows], ["rejected", "accepted"])
        self.assertEqual(rows[0]["alpha"], "")
        self.assertEqual(float(rows[1]["epsilon"]), 0.1)
