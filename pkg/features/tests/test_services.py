"""
Tests for features: pool enumeration, lookup-table rescaling and feature
evaluation.
"""

import json
from fractions import Fraction

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from features import services as feature_svc
from features.managers import LutCacheManager
from features.models import KIND_ORDER, FeatureKind, FeaturePool, HaarFeature, sub_rect_arrays
from haarboost_project.exceptions import MissingScaleError, RectBoundsError
from imaging import services as imaging_svc
from imaging.models import Rect


def brute_force_anchors(base):
    """Independent nested-loop enumeration in kind, y, x, h, w order."""
    rows = []
    for code, (wdiv, hdiv) in enumerate([(2, 1), (1, 2), (3, 1), (2, 2)]):
        for y in range(base):
            for x in range(base):
                for h in range(hdiv, base + 1, hdiv):
                    for w in range(wdiv, base + 1, wdiv):
                        if x + w <= base and y + h <= base:
                            rows.append((code, x, y, w, h))
    return rows


def find_feature(pool, kind, anchor):
    for f in pool:
        if f.kind == kind and f.anchor.as_tuple() == anchor:
            return f
    raise AssertionError(f"{kind} {anchor} not in pool")


class EnumeratePoolTestCase(SimpleTestCase):
    """Test exhaustive pool enumeration"""

    def test_base_one_is_empty(self):
        """Test no legal anchor exists in a 1x1 window"""
        self.assertEqual(len(feature_svc.enumerate_pool(1)), 0)
        self.assertEqual(feature_svc.pool_size(1), 0)

    def test_base_four_horizontal_count(self):
        """Test the two-rect-horizontal sub-count for base 4"""
        pool = feature_svc.enumerate_pool(4)
        self.assertEqual(int((pool.kinds == 0).sum()), 40)

    def test_matches_brute_force_order(self):
        """Test vectorised enumeration equals nested loops element by element"""
        pool = feature_svc.enumerate_pool(6)
        expected = brute_force_anchors(6)
        got = [(int(k), *(int(v) for v in a)) for k, a in zip(pool.kinds, pool.anchors)]
        self.assertEqual(got, expected)
        self.assertEqual(pool.ids.tolist(), list(range(len(expected))))

    def test_closed_form_counts(self):
        """Test closed-form counting agrees with enumeration for several bases"""
        for base in (2, 4, 8, 24, 32):
            with self.subTest(base=base):
                self.assertEqual(len(feature_svc.enumerate_pool(base)), feature_svc.pool_size(base))
        self.assertEqual(feature_svc.pool_size(24), 134736)
        self.assertEqual(feature_svc.pool_size(32), 422992)

    def test_base_32_is_large(self):
        """Test the 32x32 pool exceeds 180,000 features"""
        self.assertGreater(len(feature_svc.enumerate_pool(32)), 180000)

    def test_no_duplicates(self):
        """Test every (kind, anchor) appears once"""
        pool = feature_svc.enumerate_pool(8)
        keys = {(int(k), *a.tolist()) for k, a in zip(pool.kinds, pool.anchors)}
        self.assertEqual(len(keys), len(pool))

    def test_digest_is_stable(self):
        """Test the pool digest depends only on the base"""
        self.assertEqual(feature_svc.enumerate_pool(8).digest, feature_svc.enumerate_pool(8).digest)
        self.assertNotEqual(feature_svc.enumerate_pool(8).digest, feature_svc.enumerate_pool(9).digest)

    def test_serialized_pool_keeps_ids(self):
        """Test a compact subset survives JSON with ids and coordinates intact"""
        pool = feature_svc.enumerate_pool(8)
        compact = pool.subset([1700, 3, 511, 3])
        again = FeaturePool.from_dict(json.loads(json.dumps(compact.to_dict())))
        self.assertEqual(again.ids.tolist(), [3, 511, 1700])
        self.assertTrue(np.array_equal(again.anchors, pool.anchors[[3, 511, 1700]]))
        self.assertTrue(np.array_equal(again.kinds, pool.kinds[[3, 511, 1700]]))
        self.assertEqual(again.digest, pool.digest)
        self.assertEqual(again.feature(511).anchor, pool.feature(511).anchor)

    def test_from_dict_rejects_anchor_outside_window(self):
        """Test a stored anchor must fit the base window"""
        payload = {"base": 2, "full_size": 5, "digest": "x",
                   "features": [[0, "two_rect_horizontal", 2, 0, 2, 1]]}
        with self.assertRaises(ValidationError):
            FeaturePool.from_dict(payload)


class HaarFeatureTestCase(SimpleTestCase):
    """Test feature validation and sub-rectangles"""

    def test_three_rect_width_must_divide(self):
        """Test a three-rect width not divisible by 3 is rejected"""
        with self.assertRaises(ValidationError):
            HaarFeature(0, FeatureKind.THREE_RECT, Rect(0, 0, 4, 1))

    def test_three_rect_strips(self):
        """Test outer strips are grey and the middle strip is weighted -2"""
        f = HaarFeature(0, FeatureKind.THREE_RECT, Rect(0, 0, 3, 1))
        self.assertEqual(
            f.sub_rects(),
            [(Rect(0, 0, 1, 1), 1), (Rect(1, 0, 1, 1), -2), (Rect(2, 0, 1, 1), 1)],
        )

    def test_four_rect_quadrants(self):
        """Test the diagonal quadrants share a sign"""
        f = HaarFeature(0, FeatureKind.FOUR_RECT, Rect(2, 2, 4, 2))
        self.assertEqual(
            f.sub_rects(),
            [(Rect(2, 2, 2, 1), 1), (Rect(4, 2, 2, 1), -1), (Rect(2, 3, 2, 1), -1), (Rect(4, 3, 2, 1), 1)],
        )


class BuildLutTestCase(SimpleTestCase):
    """Test rescaled lookup tables"""

    def test_identity_scale(self):
        """Test scale 1 leaves every coordinate unchanged"""
        pool = feature_svc.enumerate_pool(6)
        lut = feature_svc.build_lut(pool, 1.0)
        rects, coefs = sub_rect_arrays(pool.kinds, pool.anchors)
        self.assertEqual(lut.window_size, 6)
        self.assertTrue(np.array_equal(lut.anchors, pool.anchors))
        self.assertTrue(np.array_equal(lut.rects, rects))
        self.assertFalse(lut.degraded.any())

    def test_scale_one_and_a_half(self):
        """Test (0,0,2,2) becomes (0,0,3,3) at scale 1.5"""
        scaled = feature_svc.scale_rects(np.array([[0, 0, 2, 2]]), 1.5, 100)
        self.assertEqual(scaled.tolist(), [[0, 0, 3, 3]])

    def test_rational_oracle(self):
        """Test (1,1,2,1) and every base-4 sub-rect at scale 1.25 against exact rounding"""
        s = Fraction(5, 4)
        scaled = feature_svc.scale_rects(np.array([[1, 1, 2, 1]]), 1.25, 100)
        self.assertEqual(scaled.tolist(), [[round(s * 1), round(s * 1), round(s * 2), round(s * 1)]])
        self.assertEqual(scaled.tolist(), [[1, 1, 2, 1]])

        pool = feature_svc.enumerate_pool(4)
        lut = feature_svc.build_lut(pool, 1.25)
        window = round(s * 4)
        self.assertEqual(lut.window_size, window)
        rects, coefs = sub_rect_arrays(pool.kinds, pool.anchors)
        for i in range(len(pool)):
            for k in range(4):
                if coefs[i, k] == 0:
                    continue
                x, y, w, h = (round(s * int(v)) for v in rects[i, k])
                x, y = min(x, window), min(y, window)
                expected = [x, y, min(w, window - x), min(h, window - y)]
                self.assertEqual(lut.rects[i, k].tolist(), expected)
                self.assertEqual(lut.areas[i, k], expected[2] * expected[3])

    def test_rects_stay_inside_window(self):
        """Test every rescaled rect lies inside the scaled window"""
        pool = feature_svc.enumerate_pool(8)
        for size in (9, 10, 13, 17):
            lut = feature_svc.build_lut_for_size(pool, size)
            with self.subTest(size=size):
                self.assertTrue((lut.rects[..., 0] + lut.rects[..., 2] <= size).all())
                self.assertTrue((lut.rects[..., 1] + lut.rects[..., 3] <= size).all())
                self.assertTrue(np.array_equal(lut.areas, lut.rects[..., 2] * lut.rects[..., 3]))

    def test_clamp_can_leave_zero_extent(self):
        """Test a rect pushed to the window edge is clamped to zero width"""
        scaled = feature_svc.scale_rects(np.array([[4, 0, 1, 1], [3, 0, 2, 1]]), 1, 4)
        self.assertEqual(scaled.tolist(), [[4, 0, 0, 1], [3, 0, 1, 1]])

    def test_rejects_downscale(self):
        """Test scales below 1 are refused"""
        with self.assertRaises(ValueError):
            feature_svc.build_lut(feature_svc.enumerate_pool(4), 0.5)

    def test_cache_manager_returns_same_table(self):
        """Test cached LUTs match a fresh build"""
        pool = feature_svc.enumerate_pool(8).subset(range(0, 1700, 17))
        LutCacheManager.invalidate(pool, 12)
        first = LutCacheManager.get_lut(pool, 12)
        second = LutCacheManager.get_lut(pool, 12)
        self.assertEqual(second.window_size, 12)
        self.assertTrue(np.array_equal(first.rects, second.rects))
        self.assertTrue(np.array_equal(second.ids, pool.ids))


class EvalFeatureTestCase(SimpleTestCase):
    """Test feature values"""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_constant_image_is_zero(self):
        """Test every feature reads 0 on a constant image"""
        pool = feature_svc.enumerate_pool(6)
        ip = imaging_svc.build_integral_array(np.full((6, 6), 128, dtype=np.uint8))
        values = feature_svc.evaluate_windows(feature_svc.build_lut(pool, 1), ip, [0], [0])
        self.assertTrue(np.allclose(values, 0.0, atol=1e-12))

    def test_half_dark_half_bright(self):
        """Test grey-left horizontal feature gives -255 on a 0 | 255 image"""
        pool = feature_svc.enumerate_pool(2)
        f = find_feature(pool, FeatureKind.TWO_RECT_HORIZONTAL, (0, 0, 2, 2))
        pixels = np.array([[0, 255], [0, 255]], dtype=np.uint8)
        ip = imaging_svc.build_integral_array(pixels)
        value = feature_svc.eval_feature(f, ip, Rect(0, 0, 2, 2), feature_svc.build_lut(pool, 1), 1.0)
        self.assertEqual(value, -255.0)

        big = imaging_svc.build_integral_array(imaging_svc.resize_nearest(pixels, 4, 4))
        scaled = feature_svc.eval_feature(f, big, Rect(0, 0, 4, 4), feature_svc.build_lut(pool, 2.0), 1.0)
        self.assertAlmostEqual(scaled, value, delta=1e-6)

    def test_window_size_must_match_lut(self):
        """Test evaluating through the wrong LUT is refused"""
        pool = feature_svc.enumerate_pool(4)
        ip = imaging_svc.build_integral_array(np.zeros((8, 8), dtype=np.uint8))
        with self.assertRaises(MissingScaleError):
            feature_svc.eval_feature(pool[0], ip, Rect(0, 0, 5, 5), feature_svc.build_lut(pool, 1), 1.0)

    def test_window_outside_image(self):
        """Test a window leaving the image raises a bounds error"""
        pool = feature_svc.enumerate_pool(4)
        ip = imaging_svc.build_integral_array(np.zeros((4, 4), dtype=np.uint8))
        with self.assertRaises(RectBoundsError):
            feature_svc.evaluate_windows(feature_svc.build_lut(pool, 1), ip, [1], [0])

    def test_constant_shift_invariance(self):
        """Test adding a constant to every pixel leaves values unchanged"""
        pool = feature_svc.enumerate_pool(8)
        lut = feature_svc.build_lut(pool, 1)
        pixels = self.rng.integers(0, 200, size=(8, 8)).astype(np.uint8)
        a = feature_svc.evaluate_windows(lut, imaging_svc.build_integral_array(pixels), [0], [0])
        b = feature_svc.evaluate_windows(lut, imaging_svc.build_integral_array(pixels + 55), [0], [0])
        self.assertTrue(np.allclose(a, b, rtol=0, atol=1e-9))

    def test_joint_integer_rescaling(self):
        """Test values change by under 2% when image and window are upsampled together"""
        pool = feature_svc.enumerate_pool(8)
        base_lut = feature_svc.build_lut(pool, 1)
        luts = {k: feature_svc.build_lut(pool, k) for k in (2, 3)}
        for _ in range(100):
            pixels = self.rng.integers(0, 256, size=(8, 8)).astype(np.uint8)
            ids = self.rng.choice(len(pool), size=40, replace=False)
            ref = feature_svc.evaluate_windows(base_lut, imaging_svc.build_integral_array(pixels), [0], [0], feature_ids=np.sort(ids))
            for k, lut in luts.items():
                up = imaging_svc.build_integral_array(imaging_svc.resize_nearest(pixels, 8 * k, 8 * k))
                got = feature_svc.evaluate_windows(lut, up, [0], [0], feature_ids=np.sort(ids))
                self.assertTrue((np.abs(got - ref) <= 0.02 * np.abs(ref) + 1e-9).all())

    def test_feature_matrix_matches_in_place_evaluation(self):
        """Test cropped-window evaluation equals evaluation inside the source image"""
        pool = feature_svc.enumerate_pool(6)
        lut = feature_svc.build_lut_for_size(pool, 9)
        pixels = self.rng.integers(0, 256, size=(20, 25)).astype(np.uint8)
        ip = imaging_svc.build_integral_array(pixels)
        xs, ys = [0, 5, 16], [0, 11, 3]
        in_place = feature_svc.evaluate_windows(lut, ip, xs, ys)
        crops = np.stack([pixels[y:y + 9, x:x + 9] for x, y in zip(xs, ys)])
        self.assertTrue(np.allclose(feature_svc.feature_matrix(lut, crops), in_place, atol=1e-9))

    def test_single_feature_matches_batch(self):
        """Test eval_feature agrees with the batch path and handles constant windows"""
        pool = feature_svc.enumerate_pool(4)
        lut = feature_svc.build_lut(pool, 1)
        pixels = self.rng.integers(0, 256, size=(4, 4)).astype(np.uint8)
        ip = imaging_svc.build_integral_array(pixels)
        _, var = imaging_svc.window_stats(ip, Rect(0, 0, 4, 4))
        batch = feature_svc.evaluate_windows(lut, ip, [0], [0])[0]
        for position in (0, 17, len(pool) - 1):
            f = pool[position]
            with self.subTest(feature=f.feature_id):
                self.assertAlmostEqual(
                    feature_svc.eval_feature(f, ip, Rect(0, 0, 4, 4), lut, float(np.sqrt(var))),
                    batch[position], places=9,
                )
        self.assertEqual(KIND_ORDER[0], FeatureKind.TWO_RECT_HORIZONTAL)
