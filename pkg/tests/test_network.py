import unittest
from math import sqrt

import numpy as np

from cpnn import (
    ContractViolation,
    DimensionError,
    FilterBank,
    Layer,
    NetworkParams,
    ValidationError,
    backward,
    denoise,
    extend,
    forward,
    lift_denoise,
    network_apply,
)
from cpnn.activations import Linear, Relu, SoftThreshold, activation_from_kind
from cpnn.network import building_block, lift, lift_adjoint, lift_forward

H = 1e-6


def smooth_network(seed: int = 0, layers: int = 2) -> NetworkParams:
    rng = np.random.default_rng(seed)
    return NetworkParams(
        [
            Layer(
                FilterBank(0.5 * rng.standard_normal((3, 2, 3)), 8),
                0.1 * rng.standard_normal(3),
                activation_from_kind("bent_identity", 0.8),
            )
            for _ in range(layers)
        ],
        gamma=0.7,
    )


def haar_bank(period: int = 8) -> FilterBank:
    return FilterBank([[[0.5, 0.5, 0.0]], [[0.5, -0.5, 0.0]]], period)


def identity_network(activation=None, gamma: float = 1.0) -> NetworkParams:
    bank = FilterBank([[[0.0, 1.0, 0.0]]], 8)
    return NetworkParams(
        [Layer(bank, [0.0], Linear() if activation is None else activation)], gamma
    )


def pairing(net: NetworkParams, x: np.ndarray, g: np.ndarray) -> float:
    return float(np.sum(g * network_apply(net, x)))


class ForwardTestCase(unittest.TestCase):
    def test_identity_filters(self):
        x = np.random.default_rng(1).standard_normal(8)
        net = identity_network()

        self.assertTrue(np.allclose(network_apply(net, x), x, rtol=0.0, atol=1e-12))
        self.assertTrue(np.allclose(denoise(net, x), 0.0, rtol=0.0, atol=1e-12))

    def test_identity_filters_with_soft_threshold(self):
        x = np.array([1.0, 0.3, -2.0, 0.0, 0.6, -0.4, 0.1, 5.0])
        net = identity_network(SoftThreshold(0.5), gamma=0.5)

        expected = np.sign(x) * np.maximum(np.abs(x) - 0.5, 0.0)

        self.assertTrue(
            np.allclose(network_apply(net, x), expected, rtol=0.0, atol=1e-12)
        )
        self.assertTrue(
            np.allclose(denoise(net, x), x - 0.5 * expected, rtol=0.0, atol=1e-12)
        )

    def test_zero_filters_make_the_denoiser_the_identity(self):
        net = NetworkParams(
            [Layer(FilterBank(np.zeros((2, 1, 3)), 8), [0.3, -0.2], Relu())]
        )
        x = np.random.default_rng(2).standard_normal(8)

        self.assertTrue(np.array_equal(denoise(net, x), x))

    def test_building_block_matches_single_layer_network(self):
        net = smooth_network(3, layers=1)
        x = np.random.default_rng(4).standard_normal((2, 8))

        self.assertTrue(
            np.allclose(building_block(net[0], x), network_apply(net, x), atol=1e-14)
        )

    def test_batches_and_flat_inputs(self):
        net = smooth_network(5)
        batch = np.random.default_rng(6).standard_normal((4, 2, 8))

        stacked = np.stack([network_apply(net, x) for x in batch])
        self.assertTrue(np.allclose(network_apply(net, batch), stacked, atol=1e-14))

        flat = network_apply(net, batch.reshape(4, 16))
        self.assertEqual(flat.shape, (4, 16))
        self.assertTrue(np.allclose(flat.reshape(4, 2, 8), stacked, atol=1e-14))

    def test_wrong_shape(self):
        with self.assertRaises(DimensionError):
            network_apply(smooth_network(7), np.zeros(9))

    def test_images(self):
        taps = np.zeros((1, 1, 3, 3))
        taps[0, 0, 1, 1] = 1.0
        net = NetworkParams([Layer(FilterBank(taps, (6, 6)), [0.0], Linear())])
        image = np.random.default_rng(8).standard_normal((6, 6))

        self.assertTrue(np.allclose(lift_denoise(net, image), image, atol=1e-12))
        self.assertTrue(
            np.allclose(
                lift_denoise(net, image.reshape(36)), image.reshape(36), atol=1e-12
            )
        )

    def test_certified_network_is_non_expansive(self):
        net = NetworkParams(
            [Layer(haar_bank(), [0.1, -0.1], SoftThreshold(0.2)) for _ in range(3)]
        )
        rng = np.random.default_rng(9)

        self.assertTrue(net.certified())
        self.assertAlmostEqual(net.averagedness(), 0.75)

        for _ in range(10):
            x, y = rng.standard_normal((2, 8))
            self.assertLessEqual(
                np.linalg.norm(lift_denoise(net, x) - lift_denoise(net, y)),
                np.linalg.norm(x - y) + 1e-12,
            )


class LiftTestCase(unittest.TestCase):
    def test_lift_is_an_isometry(self):
        net = smooth_network(10)
        x = np.random.default_rng(11).standard_normal((3, 8))
        lifted = lift(net, x)

        self.assertEqual(lifted.shape, (3, 2, 8))
        self.assertTrue(np.allclose(lifted[:, 0], x / sqrt(2.0), atol=1e-15))
        self.assertTrue(np.allclose(lift_adjoint(net, lifted), x, atol=1e-14))


class BackwardTestCase(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(12)
        self.net = smooth_network(13)
        self.x = rng.standard_normal((2, 8))
        self.g = rng.standard_normal((2, 8))

    def numeric(self, perturbed) -> float:
        return (perturbed(H) - perturbed(-H)) / (2 * H)

    def assertClose(self, numeric: float, analytic: float, what: str) -> None:
        self.assertLessEqual(
            abs(numeric - analytic), 1e-5 * max(1.0, abs(analytic)), msg=what
        )

    def test_taps_gradient(self):
        _, tape = forward(self.net, self.x)
        grads = backward(self.net, tape, self.g)

        for k, layer in enumerate(self.net):
            for index in np.ndindex(layer.bank.taps.shape):

                def perturbed(step: float) -> float:
                    taps = layer.bank.taps.copy()
                    taps[index] += step
                    layers = list(self.net.layers)
                    layers[k] = layer.replace(bank=layer.bank.with_taps(taps))
                    return pairing(self.net.replace(layers=layers), self.x, self.g)

                self.assertClose(
                    self.numeric(perturbed), grads.taps[k][index], f"tap {k} {index}"
                )

    def test_bias_and_alpha_gradients(self):
        _, tape = forward(self.net, self.x)
        grads = backward(self.net, tape, self.g)

        for k, layer in enumerate(self.net):
            for i in range(layer.bias.size):

                def perturbed(step: float) -> float:
                    bias = layer.bias.copy()
                    bias[i] += step
                    layers = list(self.net.layers)
                    layers[k] = layer.replace(bias=bias)
                    return pairing(self.net.replace(layers=layers), self.x, self.g)

                self.assertClose(
                    self.numeric(perturbed), grads.bias[k][i], f"bias {k} {i}"
                )

            def perturbed_alpha(step: float) -> float:
                layers = list(self.net.layers)
                activation = layer.activation
                layers[k] = layer.replace(
                    activation=activation.with_alpha(activation.alpha + step)
                )
                return pairing(self.net.replace(layers=layers), self.x, self.g)

            self.assertClose(
                self.numeric(perturbed_alpha), grads.alpha[k], f"alpha {k}"
            )

    def test_input_gradient(self):
        _, tape = forward(self.net, self.x)
        grads = backward(self.net, tape, self.g)

        for index in np.ndindex(self.x.shape):
            direction = np.zeros_like(self.x)
            direction[index] = 1.0

            numeric = self.numeric(
                lambda step: pairing(self.net, self.x + step * direction, self.g)
            )
            self.assertClose(numeric, grads.input_grad[index], f"input {index}")

    def test_lifted_input_gradient(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal(8)
        g = rng.standard_normal(8)

        out, tape = lift_forward(self.net, x)
        grads = backward(self.net, tape, g)

        self.assertTrue(np.allclose(out, lift_denoise(self.net, x), atol=1e-14))
        self.assertEqual(grads.input_grad.shape, (8,))

        for i in range(8):
            direction = np.zeros(8)
            direction[i] = 1.0

            numeric = self.numeric(
                lambda step: float(
                    np.sum(g * lift_denoise(self.net, x + step * direction))
                )
            )
            self.assertClose(numeric, grads.input_grad[i], f"lifted input {i}")

    def test_batch_gradients_are_summed(self):
        rng = np.random.default_rng(15)
        xs = rng.standard_normal((3, 2, 8))
        gs = rng.standard_normal((3, 2, 8))

        _, tape = forward(self.net, xs)
        batched = backward(self.net, tape, gs)

        total = None
        for x, g in zip(xs, gs):
            _, single_tape = forward(self.net, x)
            single = backward(self.net, single_tape, g)
            total = single if total is None else total + single

        for k in range(self.net.K):
            self.assertTrue(np.allclose(batched.taps[k], total.taps[k], atol=1e-12))
            self.assertTrue(np.allclose(batched.bias[k], total.bias[k], atol=1e-12))
            self.assertAlmostEqual(batched.alpha[k], total.alpha[k], places=10)

    def test_bundles_add_input_gradients(self):
        rng = np.random.default_rng(16)
        g1, g2 = rng.standard_normal((2,) + self.x.shape)

        _, tape = forward(self.net, self.x)
        total = backward(self.net, tape, g1) + backward(self.net, tape, g2)
        joint = backward(self.net, tape, g1 + g2)

        self.assertEqual(total.input_grad.shape, self.x.shape)
        self.assertTrue(np.allclose(total.input_grad, joint.input_grad, atol=1e-12))

        batch = np.stack([self.x, self.x])
        _, batch_tape = forward(self.net, batch)
        batched = backward(self.net, batch_tape, np.stack([g1, g2]))

        with self.assertRaises(DimensionError):
            total + batched

    def test_stale_tape(self):
        _, tape = forward(self.net, self.x)

        with self.assertRaises(ContractViolation):
            backward(self.net.replace(gamma=2.0), tape, self.g)

    def test_gradient_shape_mismatch(self):
        _, tape = forward(self.net, self.x)

        with self.assertRaises(DimensionError):
            backward(self.net, tape, np.zeros((3, 2, 8)))


class ActivationGradientTestCase(unittest.TestCase):
    KINDS = (
        ("bent_identity", 0.8),
        ("elliot", 1.3),
        ("isru", 0.7),
        ("isrlu", 1.2),
        ("soft_threshold", 0.15),
    )

    def network(self, kind: str, alpha: float, seed: int) -> NetworkParams:
        rng = np.random.default_rng(seed)
        return NetworkParams(
            [
                Layer(
                    FilterBank(0.5 * rng.standard_normal((2, 2, 3)), 16),
                    0.1 * rng.standard_normal(2),
                    activation_from_kind(kind, alpha),
                )
                for _ in range(3)
            ],
            gamma=0.9,
        )

    def assertGradient(self, loss, analytic: float, what: str) -> None:
        numeric = (loss(H) - loss(-H)) / (2 * H)
        self.assertLessEqual(
            abs(numeric - analytic), 1e-5 * max(1.0, abs(analytic)), msg=what
        )

    def test_every_parameter_against_finite_differences(self):
        for seed, (kind, alpha) in enumerate(self.KINDS):
            net = self.network(kind, alpha, 20 + seed)
            rng = np.random.default_rng(40 + seed)
            x, g = rng.standard_normal((2, 2, 16))

            _, tape = forward(net, x)
            grads = backward(net, tape, g)

            def with_layer(k: int, **changes) -> float:
                layers = list(net.layers)
                layers[k] = net[k].replace(**changes)
                return pairing(net.replace(layers=layers), x, g)

            for k, layer in enumerate(net):
                for index in np.ndindex(layer.bank.taps.shape):
                    unit = np.zeros_like(layer.bank.taps)
                    unit[index] = 1.0

                    self.assertGradient(
                        lambda h: with_layer(
                            k, bank=layer.bank.with_taps(layer.bank.taps + h * unit)
                        ),
                        grads.taps[k][index],
                        f"{kind} tap {k} {index}",
                    )

                for i in range(layer.bias.size):
                    unit = np.zeros_like(layer.bias)
                    unit[i] = 1.0

                    self.assertGradient(
                        lambda h: with_layer(k, bias=layer.bias + h * unit),
                        grads.bias[k][i],
                        f"{kind} bias {k} {i}",
                    )

                self.assertGradient(
                    lambda h: with_layer(
                        k, activation=layer.activation.with_alpha(alpha + h)
                    ),
                    grads.alpha[k],
                    f"{kind} alpha {k}",
                )

            for index in np.ndindex(x.shape):
                unit = np.zeros_like(x)
                unit[index] = 1.0

                self.assertGradient(
                    lambda h: pairing(net, x + h * unit, g),
                    grads.input_grad[index],
                    f"{kind} input {index}",
                )


class ExtendTestCase(unittest.TestCase):
    def test_limited_filters_keep_certification(self):
        net = NetworkParams([Layer(haar_bank(), [0.0, 0.0], Relu())])
        extended = extend(net, 16)

        self.assertEqual(extended.shape, (16,))
        self.assertTrue(np.array_equal(extended[0].bank.taps, net[0].bank.taps))
        self.assertTrue(extended.certified())
        self.assertEqual(extended.gamma, net.gamma)

    def test_extended_network_acts_locally(self):
        net = smooth_network(16)
        extended = extend(net, 32)

        # a bump far from the wrap-around sees the same neighbourhood on both periods
        x = np.zeros((2, 8))
        x[:, 3:5] = 1.0
        padded = np.zeros((2, 32))
        padded[:, 3:5] = 1.0

        short = network_apply(net, x)
        long = network_apply(extended, padded)

        self.assertTrue(np.allclose(long[:, 3:5], short[:, 3:5], atol=1e-12))

    def test_invalid_periods(self):
        net = smooth_network(17)

        with self.assertRaises(ValidationError):
            extend(net, 4)

        with self.assertRaises(DimensionError):
            extend(net, (16, 16))


if __name__ == "__main__":
    unittest.main()
