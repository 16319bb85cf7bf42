"""
Command line entry point. Every command prints one JSON result on stdout and exits with 0 on
success, 1 on invalid input and 2 on any other failure.
"""
import argparse
import csv
import json
import logging
import os
import sys
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np

from .algebra import filter_orthogonality_residual, gram_residual
from .api import load_model, save_model
from .data import (
    BOUNDARIES,
    gauss_kernel,
    gen_image_patches,
    gen_split,
    load_dataset,
    load_signal,
    mean_psnr,
    psnr_image,
    psnr_signal,
    save_dataset,
    save_signal,
    with_noise,
)
from .exceptions import PreconditionError, ValidationError
from .models import NetworkParams
from .network import extend
from .pnp import (
    DataTerm,
    LiftedOperator,
    PnPConfig,
    QuadraticBlur,
    QuadraticIdentity,
    ResidualDenoiser,
    admm_pnp,
    divergence_example,
    estimate_averagedness,
    fbs_pnp,
    oracle_anchor,
    oracle_denoiser,
)
from .training import TrainConfig, loss_eval, project_network, train
from .version import __version__

logger = logging.getLogger(__name__)

#: Version of the result documents printed on stdout.
RESULT_SCHEMA = 1

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

LOG_LEVEL_ENV = "CPNN_LOG_LEVEL"

#: Samples drawn when the averagedness of an uncertified model has to be estimated.
ESTIMATE_SAMPLES = 100


class ArgumentParser(argparse.ArgumentParser):
    """Reports bad command lines as a ValidationError instead of exiting with status 2."""

    def error(self, message: str) -> NoReturn:
        raise ValidationError(f"{self.prog}: {message}")


def _shape(raw: str) -> List[int]:
    """
    >>> _shape("64")
    [64]
    >>> _shape("32,48")
    [32, 48]
    """
    try:
        return [int(part) for part in raw.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{raw}' is not a period such as 64 or 32,48")


def _load_json(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fp:
        document = json.load(fp)
    if not isinstance(document, dict):
        raise ValueError(f"{path} must hold a JSON object.")
    return document


def cmd_gen_data(args: argparse.Namespace) -> Dict[str, Any]:
    if args.kind == "pwc":
        data, test = gen_split(
            args.n, args.test_n, args.m, args.sigma, args.seed, args.workers
        )
        manifest = save_dataset(os.path.join(args.out, "train"), data)
        save_dataset(os.path.join(args.out, "test"), test)
    else:
        clean = gen_image_patches(args.n, args.m, args.seed, workers=args.workers)
        data = with_noise(clean, args.sigma, args.seed, args.workers)
        manifest = save_dataset(args.out, data)

    noisy_psnr = mean_psnr(data.noisy, data.clean, data.kind)
    return {"manifest": manifest, "noisy_psnr": noisy_psnr}


def cmd_train(args: argparse.Namespace) -> Dict[str, Any]:
    document = _load_json(args.config)
    document["mode"] = f"{args.mode}_filters"

    for key in ("epochs", "seed", "gamma", "workers"):
        value = getattr(args, key)
        if value is not None:
            document[key] = value

    config = TrainConfig.from_dict(document)
    data = load_dataset(args.data)
    validation = load_dataset(args.validation) if args.validation else None

    net, report = train(data, config, validation)
    save_model(net, args.out)

    if args.report:
        report.write_jsonl(args.report)

    return {
        "model": args.out,
        "config": config.to_dict(),
        "losses": report.losses,
        "gram_residuals": net.gram_residuals(),
        "validation_psnr": report.validation_psnr,
        "loss_before_projection": report.loss_before_projection,
        "loss_after_projection": report.loss_after_projection,
    }


def cmd_project(args: argparse.Namespace) -> Dict[str, Any]:
    net = load_model(args.model)
    projected, projections = project_network(net, args.lam, args.max_iters, args.tol)
    save_model(projected, args.out)

    return {
        "model": args.out,
        "layers": [
            {
                "gram_residual": p.gram_residual,
                "iterations": p.iterations,
                "objective": p.objective[-1],
            }
            for p in projections
        ],
    }


def _load_network(path: str, extend_to: Optional[List[int]] = None) -> NetworkParams:
    net = load_model(path)
    if extend_to:
        net = extend(net, extend_to)
    return net


def cmd_denoise(args: argparse.Namespace) -> Dict[str, Any]:
    net = _load_network(args.model, args.extend)
    x = load_signal(args.input)
    y = ResidualDenoiser(net)(x)
    save_signal(args.output, y)

    return {"output": args.output, "shape": list(np.shape(y))}


def _oracle_averagedness(
    net: NetworkParams, args: argparse.Namespace
) -> Tuple[float, str]:
    """t for the oracle denoiser: K/(K+1) for certified models, estimated otherwise."""
    certified = net.averagedness()
    if certified is not None:
        return certified, "certified"

    logger.warning(
        "The model is not certified orthogonal, estimating the averagedness of Ψ on %d "
        "samples. Pass --t to skip the estimate.",
        args.t_samples,
    )
    estimate = estimate_averagedness(
        LiftedOperator(net), net.shape, samples=args.t_samples, workers=args.workers
    )

    if estimate.t_star is None:
        raise PreconditionError(
            "Ψ is not averaged for any t up to 1 on the sampled points, the oracle "
            "denoiser has no safe scale. Pass --t to override."
        )

    logger.info("Estimated averagedness t = %.2f.", estimate.t_star)
    return estimate.t_star, "estimated"


def cmd_pnp(args: argparse.Namespace) -> Dict[str, Any]:
    document = _load_json(args.config)
    for key in ("eta", "max_iters", "unsafe", "t"):
        value = getattr(args, key)
        if value is not None:
            document[key] = value
    if args.tol is not None:
        document["stop_tol"] = args.tol

    source = args.oracle if args.oracle in ("none", "smooth", "second_pass") else "file"
    document["oracle"] = source

    net = load_model(args.model)
    if args.gamma is not None:
        net = net.replace(gamma=args.gamma)

    t_source = "given" if document.get("t") is not None else None
    if source != "none" and t_source is None:
        document["t"], t_source = _oracle_averagedness(net, args)

    config = PnPConfig.from_dict(document)

    observation = load_signal(args.input)
    truth = load_signal(args.truth) if args.truth else None

    data: DataTerm
    if args.task == "denoise":
        data = QuadraticIdentity(observation)
    else:
        data = QuadraticBlur(observation, gauss_kernel(args.tau), args.boundary)

    start = data.initial()
    if net.shape != start.shape[-net.dims :]:
        net = extend(net, start.shape[-net.dims :])

    if source == "none":
        denoiser: Callable[[np.ndarray], np.ndarray] = ResidualDenoiser(net)
    else:
        anchor = oracle_anchor(source, start, net, args.oracle)
        denoiser = oracle_denoiser(anchor, net, config.t)

    solver = fbs_pnp if args.solver == "fbs" else admm_pnp
    x, trace = solver(data, denoiser, config, truth=truth)
    save_signal(args.output, x)

    if args.trace:
        trace.to_csv(args.trace)

    return {
        "output": args.output,
        "config": config.to_dict(),
        "t_source": t_source,
        **trace.summary(),
    }


def cmd_estimate_averagedness(args: argparse.Namespace) -> Dict[str, Any]:
    net = load_model(args.model)
    op = LiftedOperator(net) if args.target == "psi" else ResidualDenoiser(net)

    estimate = estimate_averagedness(
        op,
        net.shape,
        samples=args.samples,
        step=args.grid,
        seed=args.seed,
        exhaustive=args.exhaustive,
        workers=args.workers,
    )

    return {
        "t_star": estimate.t_star,
        "averaged": estimate.averaged,
        "norms": {f"{t:.2f}": norm for t, norm in estimate.norms.items()},
        "certified": net.averagedness(),
    }


def cmd_check_orth(args: argparse.Namespace) -> Dict[str, Any]:
    net = load_model(args.model)
    layers = []

    for k, layer in enumerate(net):
        try:
            correlation: Optional[float] = filter_orthogonality_residual(layer.bank)
        except PreconditionError as e:
            logger.info("Layer %d: %s", k, e)
            correlation = None

        layers.append(
            {
                "layer": k,
                "gram_residual": gram_residual(layer.bank),
                "correlation_residual": correlation,
            }
        )

    return {"layers": layers, "certified": net.certified()}


def cmd_counterexample(args: argparse.Namespace) -> Dict[str, Any]:
    trace = divergence_example(args.t, args.a2, args.y0, args.iters)

    if args.trace:
        trace.to_csv(args.trace)

    return {
        "growth_factor": trace.extras["growth_factor"],
        "ratios": trace.extras["ratios"],
        "t0": trace.extras["t0"],
    }


def cmd_eval(args: argparse.Namespace) -> Dict[str, Any]:
    names = sorted(
        name
        for name in os.listdir(args.pred)
        if os.path.isfile(os.path.join(args.truth, name))
        and name.lower().endswith((".csv", ".pgm"))
    )
    rows: List[Dict[str, Any]] = []

    for name in names:
        prediction = load_signal(os.path.join(args.pred, name))
        truth = load_signal(os.path.join(args.truth, name))

        if name.lower().endswith(".pgm"):
            psnr = psnr_image(prediction, truth)
            rows.append({"file": name, "index": 0, "psnr": psnr})
            continue

        pairs = zip(np.atleast_2d(prediction), np.atleast_2d(truth))
        for i, (p, t) in enumerate(pairs):
            rows.append({"file": name, "index": i, "psnr": psnr_signal(p, t)})

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fp:
            writer = csv.DictWriter(fp, fieldnames=["file", "index", "psnr"])
            writer.writeheader()
            writer.writerows(rows)

    values = [row["psnr"] for row in rows]

    return {
        "rows": rows,
        "mean_psnr": float(np.mean(values)) if values else None,
        "table": args.out,
    }


def cmd_loss(args: argparse.Namespace) -> Dict[str, Any]:
    net = load_model(args.model)
    data = load_dataset(args.data)
    return {"loss": loss_eval(net, data, args.workers)}


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(
        prog="cpnn",
        description="Convolutional proximal neural networks and Plug-and-Play solvers.",
    )
    parser.add_argument("--version", action="version", version=f"cpnn {__version__}")
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help=f"More logging on stderr, repeat for debug. {LOG_LEVEL_ENV} overrides it.",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=os.cpu_count() or 1,
        help="Worker threads for batched work (default: every core).",
    )

    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen-data", help="Generate a noisy synthetic dataset.")
    p.add_argument("--kind", choices=("pwc", "image"), default="pwc")
    p.add_argument("--n", type=int, required=True, help="Training samples.")
    p.add_argument("--test-n", type=int, default=500, help="Test samples (pwc only).")
    p.add_argument("--m", type=int, required=True, help="Signal length or patch size.")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="Output directory.")
    p.set_defaults(handler=cmd_gen_data)

    p = commands.add_parser("train", help="Train a network on a dataset directory.")
    p.add_argument("--mode", choices=("full", "limited"), default="limited")
    p.add_argument("--config", help="TrainConfig as a JSON file.")
    p.add_argument("--data", required=True)
    p.add_argument("--validation", help="Dataset directory used for the final PSNR.")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--out", required=True, help="Checkpoint to write.")
    p.add_argument("--report", help="JSON lines report to write.")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("project", help="Project every layer onto orthogonality.")
    p.add_argument("--model", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1e4)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_project)

    p = commands.add_parser("denoise", help="Apply the residual denoiser to a file.")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--extend", type=_shape, help="Larger period to run the filters on.")
    p.set_defaults(handler=cmd_denoise)

    p = commands.add_parser("pnp", help="Run FBS-PnP or ADMM-PnP.")
    p.add_argument("--solver", choices=("fbs", "admm"), default="fbs")
    p.add_argument("--task", choices=("denoise", "deblur"), default="denoise")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True, help="Observation file.")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--truth", help="Ground truth, enables PSNR tracking.")
    p.add_argument("--config", help="PnPConfig as a JSON file.")
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float, help="Overrides the γ of the checkpoint.")
    p.add_argument(
        "--oracle", default="none", help="none, smooth, second_pass or a file path."
    )
    p.add_argument("--t", type=float, help="Averagedness of Ψ for the oracle.")
    p.add_argument(
        "--t-samples",
        type=int,
        default=ESTIMATE_SAMPLES,
        help="Samples for estimating t when the model is not certified.",
    )
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--unsafe", action="store_true", default=None)
    p.add_argument("--tau", type=float, default=1.5, help="Blur kernel width.")
    p.add_argument("--boundary", choices=BOUNDARIES, default="periodic")
    p.add_argument("--trace", help="CSV trace to write.")
    p.set_defaults(handler=cmd_pnp)

    p = commands.add_parser(
        "estimate-averagedness", help="Estimate the averagedness of a network."
    )
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--grid", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", choices=("psi", "denoiser"), default="psi")
    p.add_argument("--exhaustive", action="store_true")
    p.set_defaults(handler=cmd_estimate_averagedness)

    p = commands.add_parser("check-orth", help="Report orthogonality residuals.")
    p.add_argument("--model", required=True)
    p.set_defaults(handler=cmd_check_orth)

    p = commands.add_parser("counterexample", help="Scalar ADMM-PnP divergence.")
    p.add_argument("--t", type=float, default=0.75)
    p.add_argument("--a2", type=float, default=0.9)
    p.add_argument("--y0", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--trace", help="CSV trace to write.")
    p.set_defaults(handler=cmd_counterexample)

    p = commands.add_parser("eval", help="PSNR of predictions against ground truth.")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="CSV table to write.")
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("loss", help="Training loss of a model on a dataset.")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(handler=cmd_loss)

    return parser


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING - 10 * min(verbose, 2)
    override = os.environ.get(LOG_LEVEL_ENV)

    if override:
        level = logging.getLevelName(override.upper())
        if not isinstance(level, int):
            level = logging.WARNING

    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def _emit(document: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(document, default=_jsonable) + "\n")


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()

    try:
        args = parser.parse_args(argv)
    except ValidationError as e:
        sys.stderr.write(f"{e}\n")
        _emit(
            {
                "schema": RESULT_SCHEMA,
                "command": None,
                "status": "error",
                "kind": type(e).__name__,
                "message": str(e),
            }
        )
        return EXIT_VALIDATION

    _configure_logging(args.verbose)

    result: Dict[str, Any] = {"schema": RESULT_SCHEMA, "command": args.command}

    try:
        result.update(args.handler(args))
    except ValueError as e:
        logger.error("%s failed: %s", args.command, e)
        result.update({"status": "error", "kind": type(e).__name__, "message": str(e)})
        _emit(result)
        return EXIT_VALIDATION
    except Exception as e:
        logger.exception("%s failed", args.command)
        result.update({"status": "error", "kind": type(e).__name__, "message": str(e)})
        _emit(result)
        return EXIT_RUNTIME

    result["status"] = "ok"
    _emit(result)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
