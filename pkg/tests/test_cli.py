import contextlib
import io
import json
import os
import tempfile
import unittest
from typing import Any, Dict, List, Tuple

import numpy as np

from cpnn import FilterBank, Layer, NetworkParams, save_model
from cpnn.activations import Linear, Relu, SoftThreshold
from cpnn.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from cpnn.data import read_signals, write_signals


def run(*argv: str) -> Tuple[int, Dict[str, Any]]:
    stdout = io.StringIO()

    with contextlib.redirect_stdout(stdout):
        code = main(["--workers", "1"] + list(argv))

    lines: List[str] = stdout.getvalue().splitlines()
    return code, json.loads(lines[-1])


def haar_network() -> NetworkParams:
    bank = FilterBank([[[0.5, 0.5, 0.0]], [[0.5, -0.5, 0.0]]], 16)
    return NetworkParams([Layer(bank, [0.0, 0.0], SoftThreshold(0.1))])


def silent_network() -> NetworkParams:
    bank = FilterBank(np.zeros((2, 1, 3)), 16)
    return NetworkParams([Layer(bank, [0.0, 0.0], Relu())])


def scaled_network(scale: float, activation) -> NetworkParams:
    bank = FilterBank([[[0.0, scale, 0.0]]], 16)
    return NetworkParams([Layer(bank, [0.0], activation)])


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = self.directory.name

    def tearDown(self):
        self.directory.cleanup()

    def path(self, *names: str) -> str:
        return os.path.join(self.root, *names)

    def test_help_and_version(self):
        for flag in ("--help", "--version"):
            with contextlib.redirect_stdout(io.StringIO()):
                with self.assertRaises(SystemExit) as context:
                    main([flag])

            self.assertEqual(context.exception.code, 0, msg=flag)

    def test_missing_command(self):
        stdout = io.StringIO()

        with contextlib.redirect_stdout(stdout):
            with contextlib.redirect_stderr(io.StringIO()):
                code = main([])

        result = json.loads(stdout.getvalue().splitlines()[-1])

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertEqual(result["status"], "error")
        self.assertEqual(result["kind"], "ValidationError")

    def test_invalid_arguments(self):
        for argv in (
            ("counterexample", "--bogus"),
            ("--bogus", "counterexample"),
            ("counterexample", "--t", "high"),
            ("denoise", "--in", "x.csv", "--out", "y.csv"),
        ):
            with contextlib.redirect_stderr(io.StringIO()):
                code, result = run(*argv)

            self.assertEqual(code, EXIT_VALIDATION, msg=argv)
            self.assertEqual(result["status"], "error", msg=argv)
            self.assertEqual(result["kind"], "ValidationError", msg=argv)

    def test_counterexample(self):
        code, result = run("counterexample", "--t", "0.75", "--a2", "0.9")

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["status"], "ok")
        self.assertEqual(result["command"], "counterexample")
        self.assertAlmostEqual(result["growth_factor"], 1.4, places=12)
        self.assertAlmostEqual(result["t0"], 0.05, places=14)
        self.assertEqual(len(result["ratios"]), 30)

    def test_validation_errors_exit_with_one(self):
        code, result = run("counterexample", "--t", "0.75", "--a2", "0.5")

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertEqual(result["status"], "error")
        self.assertEqual(result["kind"], "ValidationError")

        code, result = run("check-orth", "--model", self.path("missing.json"))

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertEqual(result["kind"], "ParseError")

    def test_denoise_with_an_identity_denoiser(self):
        save_model(silent_network(), self.path("model.json"))
        signal = np.random.default_rng(0).standard_normal(16)
        write_signals(self.path("in.csv"), signal)

        code, result = run(
            "denoise",
            "--model",
            self.path("model.json"),
            "--in",
            self.path("in.csv"),
            "--out",
            self.path("out.csv"),
        )

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["shape"], [16])
        self.assertTrue(np.array_equal(read_signals(self.path("out.csv"))[0], signal))

    def test_denoise_on_a_longer_period(self):
        save_model(haar_network(), self.path("model.json"))
        write_signals(self.path("in.csv"), np.ones(32))

        code, result = run(
            "denoise",
            "--model",
            self.path("model.json"),
            "--in",
            self.path("in.csv"),
            "--out",
            self.path("out.csv"),
            "--extend",
            "32",
        )

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["shape"], [32])

    def test_check_orth(self):
        save_model(haar_network(), self.path("model.json"))

        code, result = run("check-orth", "--model", self.path("model.json"))

        self.assertEqual(code, EXIT_OK)
        self.assertTrue(result["certified"])
        self.assertLessEqual(result["layers"][0]["gram_residual"], 1e-12)
        self.assertLessEqual(result["layers"][0]["correlation_residual"], 1e-12)

    def test_pnp_and_trace(self):
        save_model(silent_network(), self.path("model.json"))
        observation = np.random.default_rng(1).standard_normal(16)
        write_signals(self.path("obs.csv"), observation)

        code, result = run(
            "pnp",
            "--solver",
            "fbs",
            "--model",
            self.path("model.json"),
            "--in",
            self.path("obs.csv"),
            "--out",
            self.path("x.csv"),
            "--eta",
            "1.0",
            "--trace",
            self.path("trace.csv"),
        )

        self.assertEqual(code, EXIT_OK)
        self.assertTrue(result["converged"])
        self.assertTrue(
            np.allclose(read_signals(self.path("x.csv"))[0], observation, atol=1e-15)
        )

        with open(self.path("trace.csv"), encoding="utf-8") as fp:
            self.assertEqual(
                fp.readline().strip(), "iteration,residual,t_residual,objective"
            )

    def test_pnp_with_an_oracle(self):
        save_model(haar_network(), self.path("model.json"))
        observation = np.random.default_rng(2).standard_normal(16)
        write_signals(self.path("obs.csv"), observation)

        code, result = run(
            "pnp",
            "--solver",
            "admm",
            "--model",
            self.path("model.json"),
            "--in",
            self.path("obs.csv"),
            "--out",
            self.path("x.csv"),
            "--oracle",
            "smooth",
            "--gamma",
            "1.5",
        )

        self.assertEqual(code, EXIT_OK, msg=result)
        self.assertEqual(result["config"]["oracle"], "smooth")
        self.assertEqual(result["config"]["t"], 0.5)
        self.assertEqual(result["t_source"], "certified")

    def oracle_run(self, *extra: str) -> Tuple[int, Dict[str, Any]]:
        observation = np.random.default_rng(3).uniform(size=16)
        write_signals(self.path("obs.csv"), observation)

        return run(
            "pnp",
            "--model",
            self.path("model.json"),
            "--in",
            self.path("obs.csv"),
            "--out",
            self.path("x.csv"),
            "--oracle",
            "smooth",
            "--t-samples",
            "2",
            *extra,
        )

    def test_pnp_estimates_t_for_uncertified_models(self):
        # Ψ = x/4 on positive inputs
        save_model(scaled_network(0.5, Relu()), self.path("model.json"))

        with self.assertLogs("cpnn.cli", level="WARNING"):
            code, result = self.oracle_run()

        self.assertEqual(code, EXIT_OK, msg=result)
        self.assertEqual(result["t_source"], "estimated")
        self.assertEqual(result["config"]["t"], 0.5)

        code, result = self.oracle_run("--t", "0.75")

        self.assertEqual(code, EXIT_OK, msg=result)
        self.assertEqual(result["t_source"], "given")
        self.assertEqual(result["config"]["t"], 0.75)

    def test_pnp_refuses_an_expansive_model(self):
        # Ψ = 4x is not averaged for any t
        save_model(scaled_network(2.0, Linear()), self.path("model.json"))

        code, result = self.oracle_run()

        self.assertEqual(code, EXIT_VALIDATION)
        self.assertEqual(result["kind"], "PreconditionError")
        self.assertFalse(os.path.exists(self.path("x.csv")))

    def test_estimate_averagedness(self):
        save_model(haar_network(), self.path("model.json"))

        code, result = run(
            "estimate-averagedness",
            "--model",
            self.path("model.json"),
            "--samples",
            "3",
        )

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["t_star"], 0.5)
        self.assertEqual(result["certified"], 0.5)
        self.assertIn("0.50", result["norms"])

    def test_gen_data_loss_and_eval(self):
        code, result = run(
            "gen-data",
            "--n",
            "6",
            "--test-n",
            "2",
            "--m",
            "16",
            "--sigma",
            "0.1",
            "--out",
            self.path("data"),
        )

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(result["manifest"]["count"], 6)
        self.assertTrue(os.path.isfile(self.path("data", "test", "manifest.json")))

        save_model(silent_network(), self.path("model.json"))
        code, result = run(
            "loss",
            "--model",
            self.path("model.json"),
            "--data",
            self.path("data", "train"),
        )

        noise = read_signals(self.path("data", "train", "noise.csv"))
        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(
            result["loss"], float(np.sum(noise**2)) / 6, places=12
        )

        code, result = run(
            "eval",
            "--pred",
            self.path("data", "train"),
            "--truth",
            self.path("data", "train"),
            "--out",
            self.path("table.csv"),
        )

        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(result["rows"]), 3 * 6)
        self.assertTrue(os.path.isfile(self.path("table.csv")))

    def test_runtime_errors_exit_with_two(self):
        save_model(haar_network(), self.path("model.json"))
        os.makedirs(self.path("blocked"))

        # the output path is a directory
        code, result = run(
            "project", "--model", self.path("model.json"), "--out", self.path("blocked")
        )

        self.assertEqual(code, EXIT_RUNTIME)
        self.assertEqual(result["status"], "error")


if __name__ == "__main__":
    unittest.main()
