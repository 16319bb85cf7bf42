import unittest

import numpy as np

from cpnn import (
    DimensionError,
    Filter,
    FilterBank,
    StiefelPoint,
    ValidationError,
)
from cpnn.algebra import materialize
from cpnn.structures import PositiveScalar


class FilterTestCase(unittest.TestCase):
    def test_geometry(self):
        a = Filter([1.0, 2.0, 3.0, 4.0, 5.0], 8)

        self.assertEqual(a.half_width, 2)
        self.assertEqual(a.offsets.tolist(), [-2, -1, 0, 1, 2])
        self.assertEqual(
            a.periodic().tolist(), [3.0, 4.0, 5.0, 0.0, 0.0, 0.0, 1.0, 2.0]
        )

    def test_even_width_is_reserved_for_full_length(self):
        with self.assertRaises(DimensionError):
            Filter([1.0, 2.0], 8)

        self.assertEqual(Filter([1.0, 2.0, 3.0, 4.0], 4).width, 4)

    def test_invalid_taps(self):
        with self.assertRaises(ValidationError):
            Filter([], 4)

        with self.assertRaises(ValidationError):
            Filter([1.0, 2.0, 3.0], 2)

        with self.assertRaises(ValidationError):
            Filter([np.nan], 4)

    def test_taps_are_read_only(self):
        a = Filter([1.0, 2.0, 3.0], 8)

        with self.assertRaises(ValueError):
            a.taps[0] = 5.0


class FilterBankTestCase(unittest.TestCase):
    def test_geometry(self):
        bank = FilterBank(np.zeros((3, 2, 5, 5)), (8, 9))

        self.assertEqual(bank.dims, 2)
        self.assertEqual(bank.size, 72)
        self.assertEqual((bank.n, bank.d), (216, 144))
        self.assertEqual(bank.half_width, 2)
        self.assertFalse(bank.full)

    def test_invalid_windows(self):
        with self.assertRaises(DimensionError):
            FilterBank(np.zeros((1, 1, 3, 5)), (8, 8))

        with self.assertRaises(DimensionError):
            FilterBank(np.zeros((1, 1, 4)), 8)

        with self.assertRaises(DimensionError):
            FilterBank(np.zeros((1, 3)), 8)

        with self.assertRaises(ValidationError):
            FilterBank(np.zeros((1, 1, 9)), 8)

        with self.assertRaises(DimensionError):
            FilterBank(np.zeros((1, 1, 3)), 8, half_width=2)

    def test_filters_round_trip(self):
        bank = FilterBank(np.arange(12.0).reshape(2, 2, 3), 6)
        self.assertTrue(FilterBank.from_filters(bank.filters).allclose(bank))

    def test_transpose_is_the_matrix_transpose(self):
        bank = FilterBank(np.random.default_rng(0).standard_normal((2, 3, 3)), 5)

        self.assertTrue(
            np.allclose(materialize(bank.transpose()), materialize(bank).T, atol=1e-12)
        )
        self.assertTrue(bank.transpose().transpose().allclose(bank))

    def test_oriented(self):
        wide = FilterBank(np.ones((1, 2, 1)), 4)
        tall = FilterBank(np.ones((2, 1, 1)), 4)

        self.assertEqual((wide.oriented().rows, wide.oriented().cols), (2, 1))
        self.assertIs(tall.oriented(), tall)

    def test_with_period_keeps_limited_taps(self):
        bank = FilterBank(np.ones((1, 1, 3)), 5)
        extended = bank.with_period(11)

        self.assertEqual(extended.shape, (11,))
        self.assertTrue(np.array_equal(extended.taps, bank.taps))

    def test_with_period_widens_full_length_filters(self):
        bank = FilterBank.full_length(np.arange(1.0, 5.0).reshape(1, 1, 4))
        extended = bank.with_period(9)

        self.assertEqual(extended.width, 5)
        self.assertFalse(extended.full)
        self.assertEqual(
            extended.kernel()[0, 0].tolist(),
            [1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0],
        )

    def test_with_period_rejects_shorter_periods(self):
        with self.assertRaises(ValidationError):
            FilterBank(np.ones((1, 1, 3)), 8).with_period(6)

        with self.assertRaises(DimensionError):
            FilterBank(np.ones((1, 1, 3)), 8).with_period((8, 8))

    def test_with_taps_checks_shape(self):
        with self.assertRaises(DimensionError):
            FilterBank(np.ones((1, 1, 3)), 8).with_taps(np.ones((1, 1, 5)))


class StiefelPointTestCase(unittest.TestCase):
    def test_wide_matrices_are_stored_tall(self):
        point = StiefelPoint.from_matrix(np.eye(2, 3))

        self.assertTrue(point.transposed)
        self.assertEqual(point.matrix.shape, (3, 2))
        self.assertEqual(point.value.shape, (2, 3))

    def test_rejects_points_off_the_manifold(self):
        with self.assertRaises(ValidationError):
            StiefelPoint.from_matrix(2.0 * np.eye(3))

        point = StiefelPoint.from_matrix(2.0 * np.eye(3), check=False)
        self.assertAlmostEqual(point.residual, 3.0 * np.sqrt(3.0))

    def test_banks(self):
        bank = FilterBank([[[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]], 6)

        with self.assertRaises(ValidationError):
            StiefelPoint.from_matrix(bank)

        identity = FilterBank([[[1.0]], [[0.0]]], 4)
        point = StiefelPoint.from_matrix(identity.transpose())

        self.assertTrue(point.structured)
        self.assertTrue(point.transposed)
        self.assertTrue(point.value.allclose(identity.transpose()))

    def test_positive_scalar(self):
        with self.assertRaises(ValidationError):
            PositiveScalar(0.0)

        with self.assertRaises(ValidationError):
            PositiveScalar(float("inf"))

        self.assertFalse(PositiveScalar(2.0).clamped)


if __name__ == "__main__":
    unittest.main()
