import os
import tempfile
import unittest

import numpy as np

from cpnn import (
    Dataset,
    DimensionError,
    ParseError,
    ValidationError,
    gauss_kernel,
    gen_image_patches,
    gen_pwc,
    gen_split,
    load_dataset,
    mean_psnr,
    psnr_image,
    psnr_signal,
    save_dataset,
)
from cpnn.data import (
    add_noise,
    blur_adjoint,
    blur_apply,
    load_signal,
    quantize,
    read_pgm,
    read_signals,
    sample_rng,
    save_signal,
    smooth_oracle,
    with_noise,
    write_pgm,
    write_signals,
)


class GenerationTestCase(unittest.TestCase):
    def test_pwc_signals_have_zero_mean(self):
        data = gen_pwc(50, 64, seed=0)

        self.assertEqual(data.clean.shape, (50, 64))
        self.assertLessEqual(np.max(np.abs(data.clean.mean(axis=1))), 1e-12)
        self.assertFalse(np.any(data.noise))

    def test_pwc_part_counts(self):
        parts = gen_pwc(1000, 64, seed=1).meta["parts"]

        self.assertGreaterEqual(int(parts.min()), 2)
        self.assertGreaterEqual(float(parts.mean()), 4.7)
        self.assertLessEqual(float(parts.mean()), 5.4)

    def test_pwc_signals_are_piecewise_constant(self):
        data = gen_pwc(20, 64, seed=2)

        for signal, parts in zip(data.clean, data.meta["parts"]):
            jumps = int(np.count_nonzero(np.diff(signal)))
            self.assertLessEqual(jumps, parts - 1)

    def test_generation_is_reproducible(self):
        serial = gen_pwc(12, 32, seed=3)
        parallel = gen_pwc(12, 32, seed=3, workers=4)

        self.assertTrue(np.array_equal(serial.clean, parallel.clean))
        self.assertFalse(np.array_equal(serial.clean, gen_pwc(12, 32, seed=4).clean))

    def test_invalid_sizes(self):
        with self.assertRaises(ValidationError):
            gen_pwc(3, 2, seed=0)

        with self.assertRaises(ValidationError):
            gen_pwc(-1, 16, seed=0)

    def test_noise(self):
        noisy, noise = add_noise(np.zeros((200, 64)), 0.1, seed=5)

        self.assertTrue(np.array_equal(noisy, noise))
        self.assertAlmostEqual(float(noise.std()), 0.1, delta=0.005)
        self.assertLessEqual(abs(float(noise.mean())), 0.005)

        with self.assertRaises(ValidationError):
            add_noise(np.zeros((2, 4)), -0.1, seed=5)

    def test_noise_streams_are_independent_of_the_signal(self):
        data = with_noise(gen_pwc(4, 16, seed=6), 0.2, seed=6)

        self.assertEqual(data.sigma, 0.2)
        self.assertFalse(np.array_equal(data.noise[0], data.noise[1]))
        self.assertTrue(np.allclose(data.noisy - data.clean, data.noise, atol=1e-15))
        self.assertNotEqual(
            sample_rng(6, 0, 0).standard_normal(), sample_rng(6, 0, 1).standard_normal()
        )

    def test_split(self):
        train, test = gen_split(6, 4, 16, 0.1, seed=7)

        self.assertEqual((train.count, test.count), (6, 4))
        self.assertEqual((train.seed, test.seed), (7, 8))
        self.assertFalse(np.array_equal(train.clean[:4], test.clean))
        self.assertIn("parts", train.meta)

    def test_image_patches(self):
        data = gen_image_patches(10, 16, seed=8, image_shape=(32, 32), images=3)

        self.assertEqual(data.clean.shape, (10, 16, 16))
        self.assertEqual(data.kind, "image_patches")
        self.assertGreaterEqual(float(data.clean.min()), 0.0)
        self.assertLessEqual(float(data.clean.max()), 1.0)

        with self.assertRaises(ValidationError):
            gen_image_patches(1, 40, seed=8, image_shape=(32, 32))


class DatasetTestCase(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(DimensionError):
            Dataset(np.zeros((2, 4)), np.zeros((2, 5)), 0.1, 0)

        with self.assertRaises(ValidationError):
            Dataset(np.zeros((2, 4)), np.zeros((2, 4)), 0.1, 0, kind="audio")

        with self.assertRaises(ValidationError):
            Dataset(np.zeros((2, 4)), np.zeros((2, 4)), -0.1, 0)

    def test_subset(self):
        data = with_noise(gen_pwc(6, 16, seed=9), 0.1, seed=9)
        subset = data.subset([4, 1])

        self.assertEqual(subset.count, 2)
        self.assertEqual(subset.shape, (16,))
        self.assertTrue(np.array_equal(subset.noisy[0], data.noisy[4]))


class MetricsTestCase(unittest.TestCase):
    def test_psnr_signal(self):
        x = np.array([0.0, 1.1])
        y = np.array([0.0, 1.0])

        self.assertAlmostEqual(psnr_signal(x, y), 10.0 * np.log10(1.0 / 0.005))
        self.assertEqual(psnr_signal(y, y), float("inf"))

    def test_psnr_signal_range_is_not_squared(self):
        y = np.array([0.0, 2.0, 1.0, 2.0])
        x = y + 0.1

        self.assertAlmostEqual(psnr_signal(x, y), 10.0 * np.log10(2.0 / 0.01))

    def test_psnr_image(self):
        self.assertAlmostEqual(psnr_image(np.full((2, 2), 0.1), np.zeros((2, 2))), 20.0)

        with self.assertRaises(DimensionError):
            psnr_image(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_mean_psnr(self):
        truths = np.zeros((2, 2, 2))
        predictions = np.stack([np.full((2, 2), 0.1), np.full((2, 2), 0.01)])

        self.assertAlmostEqual(
            mean_psnr(predictions, truths, kind="image_patches"), 30.0
        )


class BlurTestCase(unittest.TestCase):
    def test_kernel(self):
        kernel = gauss_kernel(1.5)

        self.assertEqual(kernel.taps.shape, (9, 9))
        self.assertEqual(kernel.radius, 4)
        self.assertAlmostEqual(float(kernel.taps.sum()), 1.0, places=14)
        self.assertTrue(np.allclose(kernel.taps, kernel.taps.T, rtol=0.0, atol=1e-16))
        self.assertTrue(
            np.allclose(kernel.taps, kernel.taps[::-1, ::-1], rtol=0.0, atol=1e-16)
        )
        self.assertEqual(np.unravel_index(np.argmax(kernel.taps), (9, 9)), (4, 4))

    def test_wide_kernel_is_nearly_uniform(self):
        self.assertTrue(np.allclose(gauss_kernel(100.0).taps, 1.0 / 81, rtol=2e-3))

    def test_invalid_tau(self):
        with self.assertRaises(ValidationError):
            gauss_kernel(0.0)

    def test_periodic_blur_keeps_constants(self):
        image = np.full((16, 16), 0.25)
        self.assertTrue(
            np.allclose(blur_apply(gauss_kernel(2.0), image), image, atol=1e-14)
        )

    def test_adjoints(self):
        rng = np.random.default_rng(10)
        kernel = gauss_kernel(1.2)
        x = rng.standard_normal((16, 16))

        for boundary, observed in (("periodic", (16, 16)), ("valid", (8, 8))):
            y = rng.standard_normal(observed)
            forward = blur_apply(kernel, x, boundary)

            self.assertEqual(forward.shape, observed, msg=boundary)
            self.assertAlmostEqual(
                float(np.sum(forward * y)),
                float(np.sum(x * blur_adjoint(kernel, y, boundary))),
                places=12,
                msg=boundary,
            )

    def test_unknown_boundary(self):
        with self.assertRaises(ValidationError):
            blur_apply(gauss_kernel(1.0), np.zeros((16, 16)), "reflect")

    def test_smooth_oracle(self):
        image = np.full((8, 8), 0.5)
        self.assertTrue(np.allclose(smooth_oracle(image), image, atol=1e-14))


class FilesTestCase(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = self.directory.name

    def tearDown(self):
        self.directory.cleanup()

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def test_csv_is_lossless(self):
        signals = np.random.default_rng(11).standard_normal((3, 7)) * 1e3

        write_signals(self.path("s.csv"), signals)

        self.assertTrue(np.array_equal(read_signals(self.path("s.csv")), signals))

    def test_malformed_csv(self):
        with open(self.path("bad.csv"), "w", encoding="utf-8") as fp:
            fp.write("1.0,abc\n")

        with self.assertRaises(ParseError):
            read_signals(self.path("bad.csv"))

        with self.assertRaises(ParseError):
            read_signals(self.path("missing.csv"))

    def test_quantize(self):
        levels = quantize(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
        self.assertEqual(levels.tolist(), [0, 0, 128, 255, 255])

    def test_pgm_round_trip(self):
        image = np.random.default_rng(12).uniform(size=(12, 20))

        write_pgm(self.path("x.pgm"), image)
        restored = read_pgm(self.path("x.pgm"))

        self.assertEqual(restored.shape, (12, 20))
        self.assertLessEqual(np.max(np.abs(restored - image)), 1.0 / 510 + 1e-12)

        with open(self.path("x.pgm"), "rb") as fp:
            self.assertEqual(fp.read(2), b"P5")

    def test_pgm_errors(self):
        with open(self.path("ascii.pgm"), "wb") as fp:
            fp.write(b"P2\n2 2\n255\n0 0 0 0\n")

        with open(self.path("deep.pgm"), "wb") as fp:
            fp.write(b"P5\n2 2\n65535\n" + bytes(8))

        with open(self.path("short.pgm"), "wb") as fp:
            fp.write(b"P5\n# comment\n4 4\n255\n" + bytes(5))

        for name in ("ascii.pgm", "deep.pgm", "short.pgm", "missing.pgm"):
            with self.assertRaises(ParseError, msg=name):
                read_pgm(self.path(name))

        with self.assertRaises(DimensionError):
            write_pgm(self.path("flat.pgm"), np.zeros(4))

    def test_single_signals(self):
        signal = np.random.default_rng(13).standard_normal(9)
        image = np.random.default_rng(14).uniform(size=(4, 6))

        save_signal(self.path("one.csv"), signal)
        save_signal(self.path("one.pgm"), image)

        self.assertTrue(np.array_equal(load_signal(self.path("one.csv")), signal))
        self.assertEqual(load_signal(self.path("one.pgm")).shape, (4, 6))

    def test_dataset_round_trip(self):
        data = with_noise(gen_pwc(5, 16, seed=15), 0.1, seed=16)

        manifest = save_dataset(self.root, data)
        restored = load_dataset(self.root)

        self.assertEqual(manifest["m"], 16)
        self.assertEqual(manifest["files"]["noisy"], "noisy.csv")
        self.assertTrue(np.array_equal(restored.clean, data.clean))
        self.assertTrue(np.array_equal(restored.noise, data.noise))
        self.assertEqual((restored.sigma, restored.seed), (0.1, 16))

    def test_image_dataset_round_trip(self):
        data = with_noise(
            gen_image_patches(3, 8, seed=17, image_shape=(16, 16), images=2), 0.05, 18
        )

        save_dataset(self.root, data)
        restored = load_dataset(self.root)

        self.assertEqual(restored.kind, "image_patches")
        self.assertEqual(restored.clean.shape, (3, 8, 8))
        self.assertTrue(np.array_equal(restored.noise, data.noise))

    def test_missing_dataset_file(self):
        save_dataset(self.root, with_noise(gen_pwc(2, 8, seed=19), 0.1, seed=19))
        os.remove(self.path("noise.csv"))

        with self.assertRaises(ParseError) as context:
            load_dataset(self.root)

        self.assertEqual(context.exception.entry, "noise.csv")

    def test_broken_manifest(self):
        with self.assertRaises(ParseError):
            load_dataset(self.root)

        with open(self.path("manifest.json"), "w", encoding="utf-8") as fp:
            fp.write('{"kind": "pwc_1d", "count": 2')

        with self.assertRaises(ParseError):
            load_dataset(self.root)

        with open(self.path("manifest.json"), "w", encoding="utf-8") as fp:
            fp.write('{"kind": "pwc_1d", "count": 2, "sigma": 0.1}')

        with self.assertRaises(ParseError) as context:
            load_dataset(self.root)

        self.assertEqual(context.exception.entry, "seed")


if __name__ == "__main__":
    unittest.main()
