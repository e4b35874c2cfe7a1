"""
Tests for imaging.services: PGM/PPM decoding, integral tables, rectangle sums
and window statistics.
"""

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from haarboost_project.exceptions import (
    MalformedHeaderError,
    RectBoundsError,
    TruncatedPayloadError,
    UnsupportedMaxvalError,
)
from imaging import services as imaging_svc
from imaging.models import GrayImage, Rect


class LoadPgmTestCase(SimpleTestCase):
    """Test binary PGM/PPM decoding"""

    def test_decodes_two_by_two(self):
        """Test header dimensions and payload are decoded exactly"""
        img = imaging_svc.load_pgm(b"P5 2 2 255\n" + bytes([0, 255, 128, 64]))
        self.assertEqual((img.width, img.height), (2, 2))
        self.assertEqual(img.data, [0, 255, 128, 64])

    def test_decodes_single_pixel(self):
        """Test the minimal 1x1 image"""
        img = imaging_svc.load_pgm(b"P5 1 1 255\n" + bytes([7]))
        self.assertEqual(img.data, [7])

    def test_truncated_payload(self):
        """Test a short payload raises a truncated-payload error with the offset"""
        data = b"P5 2 2 255\n" + bytes([1, 2, 3])
        with self.assertRaises(TruncatedPayloadError) as ctx:
            imaging_svc.load_pgm(data)
        self.assertEqual(ctx.exception.offset, len(data))

    def test_maxval_above_255(self):
        """Test 16-bit maxval is rejected and names the maxval offset"""
        with self.assertRaises(UnsupportedMaxvalError) as ctx:
            imaging_svc.load_pgm(b"P5 1 1 65535\n" + bytes([0, 0]))
        self.assertEqual(ctx.exception.offset, 7)

    def test_bad_magic(self):
        """Test unknown magic numbers are malformed headers at offset 0"""
        with self.assertRaises(MalformedHeaderError) as ctx:
            imaging_svc.load_pgm(b"P2 1 1 255\n7")
        self.assertEqual(ctx.exception.offset, 0)

    def test_comment_after_magic(self):
        """Test a comment line is permitted after the magic"""
        img = imaging_svc.load_pgm(b"P5\n# made by hand\n2 1\n255\n" + bytes([9, 10]))
        self.assertEqual(img.data, [9, 10])

    def test_non_numeric_width(self):
        """Test a garbage width token is reported where it starts"""
        with self.assertRaises(MalformedHeaderError) as ctx:
            imaging_svc.load_pgm(b"P5 x 1 255\n" + bytes([0]))
        self.assertEqual(ctx.exception.offset, 3)

    def test_ppm_luma_conversion(self):
        """Test P6 pixels convert to integer luma rounded half-up"""
        payload = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30])
        img = imaging_svc.load_pgm(b"P6 4 1 255\n" + payload)
        # 0.299*255=76.245, 0.587*255=149.685, 0.114*255=29.07, 2.99+11.74+3.42=18.15
        self.assertEqual(img.data, [76, 150, 29, 18])

    def test_save_and_reload(self):
        """Test written PGM files decode to the same pixels"""
        img = GrayImage.from_rows([[1, 2, 3], [4, 5, 6]])
        again = imaging_svc.load_pgm(imaging_svc.save_pgm(img))
        self.assertEqual(again.data, img.data)


class GrayImageTestCase(SimpleTestCase):
    """Test GrayImage validation"""

    def test_rejects_out_of_range_intensity(self):
        """Test intensities above 255 are rejected"""
        with self.assertRaises(ValidationError):
            GrayImage.from_data(1, 1, [256])

    def test_rejects_length_mismatch(self):
        """Test data length must equal width x height"""
        with self.assertRaises(ValidationError):
            GrayImage.from_data(2, 2, [1, 2, 3])


class BuildIntegralTestCase(SimpleTestCase):
    """Test integral table construction"""

    def test_two_by_two_tables(self):
        """Test the worked cumulative-sum example"""
        ip = imaging_svc.build_integral(GrayImage.from_rows([[1, 2], [3, 4]]))
        self.assertEqual(ip.sum_table.tolist(), [[0, 0, 0], [0, 1, 3], [0, 4, 10]])
        self.assertEqual(ip.sqsum_table[2, 2], 30)

    def test_all_zero_image(self):
        """Test a zero image gives zero tables"""
        ip = imaging_svc.build_integral(GrayImage.from_data(3, 3, [0] * 9))
        self.assertFalse(ip.sum_table.any())
        self.assertFalse(ip.sqsum_table.any())

    def test_single_pixel(self):
        """Test the corners of a single-pixel image"""
        ip = imaging_svc.build_integral(GrayImage.from_data(1, 1, [5]))
        self.assertEqual(ip.total, 5)
        self.assertEqual(ip.total_squares, 25)

    def test_border_and_monotonicity(self):
        """Test zero border and non-decreasing rows/columns on a random image"""
        rng = np.random.default_rng(3)
        img = GrayImage.from_array(rng.integers(0, 256, size=(17, 23), dtype=np.uint8))
        ip = imaging_svc.build_integral(img)
        for table in (ip.sum_table, ip.sqsum_table):
            self.assertFalse(table[0, :].any())
            self.assertFalse(table[:, 0].any())
            self.assertTrue((np.diff(table, axis=0) >= 0).all())
            self.assertTrue((np.diff(table, axis=1) >= 0).all())
        self.assertEqual(ip.total, int(img.pixels.astype(np.int64).sum()))

    def test_unit_rects_reconstruct_image(self):
        """Test every 1x1 rectangle sum gives back the original pixel"""
        rng = np.random.default_rng(4)
        img = GrayImage.from_array(rng.integers(0, 256, size=(9, 11), dtype=np.uint8))
        ip = imaging_svc.build_integral(img)
        rebuilt = [[imaging_svc.rect_sum(ip, Rect(x, y, 1, 1)) for x in range(11)] for y in range(9)]
        self.assertEqual(rebuilt, img.pixels.tolist())


class RectSumTestCase(SimpleTestCase):
    """Test four-reference rectangle sums"""

    def setUp(self):
        self.ip = imaging_svc.build_integral(GrayImage.from_rows([[1, 2], [3, 4]]))

    def test_full_image(self):
        """Test the full-image rectangle"""
        self.assertEqual(imaging_svc.rect_sum(self.ip, Rect(0, 0, 2, 2)), 10)

    def test_single_pixel(self):
        """Test the top-left pixel"""
        self.assertEqual(imaging_svc.rect_sum(self.ip, Rect(0, 0, 1, 1)), 1)

    def test_all_ones_area_identity(self):
        """Test any rect on an all-ones image sums to its area"""
        ip = imaging_svc.build_integral(GrayImage.from_data(7, 5, [1] * 35))
        self.assertEqual(imaging_svc.rect_sum(ip, Rect(2, 1, 4, 3)), 12)

    def test_out_of_bounds(self):
        """Test rectangles leaving the image raise a bounds error"""
        with self.assertRaises(RectBoundsError):
            imaging_svc.rect_sum(self.ip, Rect(1, 1, 2, 1))

    def test_random_rects_match_brute_force(self):
        """Test 1,000 random images/rects against direct pixel sums with zero tolerance"""
        rng = np.random.default_rng(11)
        for _ in range(1000):
            h, w = rng.integers(1, 65, size=2)
            pixels = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
            ip = imaging_svc.build_integral(GrayImage.from_array(pixels))
            x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
            rw, rh = int(rng.integers(1, w - x + 1)), int(rng.integers(1, h - y + 1))
            expected = int(pixels[y:y + rh, x:x + rw].astype(np.int64).sum())
            self.assertEqual(imaging_svc.rect_sum(ip, Rect(x, y, rw, rh)), expected)

    def test_additive_split(self):
        """Test a rectangle split in two halves sums to the whole"""
        rng = np.random.default_rng(12)
        ip = imaging_svc.build_integral(
            GrayImage.from_array(rng.integers(0, 256, size=(20, 20), dtype=np.uint8))
        )
        whole = imaging_svc.rect_sum(ip, Rect(3, 4, 10, 6))
        left = imaging_svc.rect_sum(ip, Rect(3, 4, 4, 6))
        right = imaging_svc.rect_sum(ip, Rect(7, 4, 6, 6))
        self.assertEqual(left + right, whole)


class WindowStatsTestCase(SimpleTestCase):
    """Test per-window mean and variance"""

    def test_constant_window(self):
        """Test constant windows have zero variance"""
        ip = imaging_svc.build_integral(GrayImage.from_data(4, 4, [128] * 16))
        self.assertEqual(imaging_svc.window_stats(ip, Rect(0, 0, 4, 4)), (128.0, 0.0))

    def test_two_pixel_window(self):
        """Test [0, 2] has mean 1 and variance 1"""
        ip = imaging_svc.build_integral(GrayImage.from_rows([[0, 2]]))
        self.assertEqual(imaging_svc.window_stats(ip, Rect(0, 0, 2, 1)), (1.0, 1.0))

    def test_two_by_two_window(self):
        """Test [[1,2],[3,4]] has mean 2.5 and variance 1.25"""
        ip = imaging_svc.build_integral(GrayImage.from_rows([[1, 2], [3, 4]]))
        mean, var = imaging_svc.window_stats(ip, Rect(0, 0, 2, 2))
        self.assertAlmostEqual(mean, 2.5)
        self.assertAlmostEqual(var, 1.25)

    def test_matches_two_pass_variance(self):
        """Test variance agrees with numpy's population variance on random windows"""
        rng = np.random.default_rng(5)
        for _ in range(200):
            pixels = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
            ip = imaging_svc.build_integral(GrayImage.from_array(pixels))
            x, y = int(rng.integers(0, 16)), int(rng.integers(0, 16))
            size = int(rng.integers(1, 17))
            mean, var = imaging_svc.window_stats(ip, Rect(x, y, size, size))
            window = pixels[y:y + size, x:x + size].astype(np.float64)
            self.assertGreaterEqual(var, 0.0)
            self.assertAlmostEqual(mean, window.mean(), places=9)
            expected = window.var()
            self.assertLessEqual(abs(var - expected), 1e-9 * max(1.0, expected))


class ResizeAndDrawTestCase(SimpleTestCase):
    """Test nearest-neighbour resampling and box rendering"""

    def test_integer_upsample(self):
        """Test 2x nearest-neighbour upsampling repeats each pixel"""
        src = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        up = imaging_svc.resize_nearest(src, 4, 4)
        self.assertEqual(up.tolist(), [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])

    def test_draw_boxes_border_only(self):
        """Test boxes are 1-px borders at intensity 255"""
        img = GrayImage.from_data(5, 5, [0] * 25)
        rgb = imaging_svc.draw_boxes(img, [Rect(1, 1, 3, 3)])
        self.assertEqual(rgb.shape, (5, 5, 3))
        self.assertEqual(rgb[1, 1].tolist(), [255, 255, 255])
        self.assertEqual(rgb[2, 2].tolist(), [0, 0, 0])
        self.assertEqual(rgb[3, 3].tolist(), [255, 255, 255])
