import io
import json
import os
import tempfile
import unittest

import numpy as np

from cpnn import (
    FilterBank,
    Layer,
    NetworkParams,
    ParseError,
    decode,
    dumps,
    encode,
    load_model,
    loads,
    save_model,
)
from cpnn.activations import Relu, SoftThreshold
from cpnn.serializer import decode_filter_bank, encode_filter_bank


def checkpointed_network() -> NetworkParams:
    rng = np.random.default_rng(0)
    return NetworkParams(
        [
            Layer(
                FilterBank(rng.standard_normal((3, 2, 5)), 16),
                rng.standard_normal(3),
                SoftThreshold(float(rng.uniform(0.01, 0.5))),
            )
            for _ in range(2)
        ],
        gamma=1.3,
    )


class SerializerTest(unittest.TestCase):
    def test_encode_decode(self):
        net = checkpointed_network()

        self.assertEqual(
            net,
            decode(encode(net)),
            msg="NetworkParams --> fn encode() --> fn decode() --> should be equal to initial object",
        )

    def test_json_is_lossless(self):
        net = checkpointed_network()
        restored = loads(dumps(net, indent=4))

        self.assertEqual(
            net,
            restored,
            msg="NetworkParams --> json encode --> loads --> should be bit identical",
        )
        self.assertEqual(restored.alphas, net.alphas)

    def test_images_and_parameter_free_activations(self):
        taps = np.zeros((1, 1, 3, 3))
        taps[0, 0, 1, 1] = 1.0
        net = NetworkParams([Layer(FilterBank(taps, (6, 8)), [0.5], Relu())])

        document = encode(net)
        restored = decode(json.loads(json.dumps(document)))

        self.assertEqual(document["geometry"]["m"], [6, 8])
        self.assertEqual(document["activation"]["alphas"], [None])
        self.assertEqual(restored, net)

    def test_loads_sources(self):
        net = checkpointed_network()
        raw = dumps(net)

        self.assertEqual(loads(raw.encode("utf-8")), net)
        self.assertEqual(loads(io.StringIO(raw)), net)
        self.assertEqual(loads(json.loads(raw)), net)
        self.assertIs(loads(net), net)

    def test_save_load_model(self):
        net = checkpointed_network()

        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "model.json")
            save_model(net, path)

            self.assertEqual(load_model(path), net)

            with self.assertRaises(ParseError):
                load_model(os.path.join(directory, "missing.json"))

    def test_decode_failure(self):
        with self.assertRaises(ValueError):
            decode({"Not Decodable": "X"})  # type: ignore

        with self.assertRaises(ParseError):
            loads("{not json")

        with self.assertRaises(ParseError):
            loads(b"\xff\xfe")

    def test_rejects_inconsistent_checkpoints(self):
        document = encode(checkpointed_network())

        for mutate, entry in (
            (lambda d: d.update(version=2), "version"),
            (lambda d: d.pop("gamma"), "gamma"),
            (lambda d: d["activation"].update(alphas=[0.1]), "alphas"),
            (lambda d: d["geometry"].pop("m"), "m"),
            (lambda d: d["geometry"].update(m1=4), "geometry"),
            (lambda d: d["layers"][0].pop("bias"), "bias"),
        ):
            broken = json.loads(json.dumps(document))
            mutate(broken)

            with self.assertRaises(ParseError, msg=entry) as context:
                decode(broken)

            self.assertEqual(context.exception.entry, entry)

    def test_rejects_invalid_networks(self):
        document = encode(checkpointed_network())
        document["gamma"] = -1.0

        with self.assertRaises(ParseError):
            decode(document)

        document = encode(checkpointed_network())
        document["activation"]["kind"] = "tanh"

        with self.assertRaises(ParseError):
            decode(document)

    def test_filter_bank(self):
        bank = FilterBank(np.random.default_rng(1).standard_normal((2, 2, 3)), 8)

        self.assertTrue(
            np.array_equal(decode_filter_bank(encode_filter_bank(bank)).taps, bank.taps)
        )

        with self.assertRaises(ParseError):
            decode_filter_bank({"shape": [2], "taps": [[[1.0, 2.0, 3.0]]]})

        with self.assertRaises(ParseError):
            decode_filter_bank([1.0])  # type: ignore


if __name__ == "__main__":
    unittest.main()
