"""
Training of convolutional proximal networks on the residual learning objective

    H(u) = (1/N) Σ ‖γΨ(x_i; u) − ε_i‖²,

where x_i is a noisy sample and ε_i its noise. Full-length filters are trained by stochastic
gradient descent on the block-circulant Stiefel manifold. Limited filters are trained with Adam
on a penalized objective, then every layer is projected towards the manifold.
"""
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from math import sqrt
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .activations import ACTIVATION_KINDS, activation_from_kind
from .algebra import gram_penalty, gram_penalty_gradient, gram_penalty_hvp
from .data import Dataset, mean_psnr
from .exceptions import TrainingError, ValidationError
from .manifold import cayley_retract, positive_retract, stiefel_project
from .models import GradientBundle, Layer, NetworkParams
from .network import backward, denoise, lift_denoise, lift_forward
from .structures import FilterBank

logger = logging.getLogger(__name__)

TRAIN_MODES = ("full_filters", "limited_filters")
SCHEDULES = ("constant", "inv_sqrt")
LOSSES = ("squared_l2",)

T = TypeVar("T")


@dataclass
class TrainConfig:
    """
    Every knob of a training run. Serializable to and from JSON.
    ``penalty`` left to None resolves to 1e2 / (m₁m₂), 0 trains without the orthogonality
    penalty.
    """

    mode: str = "limited_filters"
    layers: int = 3
    rows: int = 8
    cols: int = 16
    half_width: int = 5
    activation: str = "soft_threshold"
    alpha: Optional[float] = None
    gamma: float = 1.0
    batch_size: int = 32
    epochs: int = 30
    learning_rate: float = 1e-3
    schedule: str = "constant"
    seed: int = 0
    loss: str = "squared_l2"
    penalty: Optional[float] = None
    projection_lambda: float = 1e4
    projection_max_iters: int = 5000
    projection_tol: float = 1e-10
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    workers: int = 1
    chunk_size: int = 16
    checkpoint_every: int = 0
    checkpoint_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mode not in TRAIN_MODES:
            raise ValidationError(
                f"Unknown training mode '{self.mode}', expected one of {TRAIN_MODES}."
            )

        if self.schedule not in SCHEDULES:
            raise ValidationError(
                f"Unknown schedule '{self.schedule}', expected one of {SCHEDULES}."
            )

        if self.loss not in LOSSES:
            raise ValidationError(
                f"Unknown loss '{self.loss}', expected one of {LOSSES}."
            )

        if self.activation not in ACTIVATION_KINDS:
            raise ValidationError(
                f"Unknown activation '{self.activation}', "
                f"expected one of {ACTIVATION_KINDS}."
            )

        for name in ("layers", "rows", "cols", "batch_size", "chunk_size", "workers"):
            if getattr(self, name) < 1:
                raise ValidationError(
                    f"{name} must be at least 1, got {getattr(self, name)}."
                )

        if self.epochs < 0 or self.half_width < 0 or self.checkpoint_every < 0:
            raise ValidationError(
                "epochs, half_width and checkpoint_every must be non-negative."
            )

        if self.learning_rate < 0.0:
            raise ValidationError(
                f"The learning rate must be non-negative, got {self.learning_rate}."
            )

        if self.penalty is not None and self.penalty < 0.0:
            raise ValidationError(f"μ must be non-negative, got {self.penalty}.")

        if self.projection_lambda <= 0.0:
            raise ValidationError(f"λ must be positive, got {self.projection_lambda}.")

        if self.gamma <= 0.0:
            raise ValidationError(f"γ must be positive, got {self.gamma}.")

        self.adam_betas = (float(self.adam_betas[0]), float(self.adam_betas[1]))

    @property
    def mu(self) -> float:
        """The penalty weight, resolved."""
        if self.penalty is not None:
            return self.penalty
        return 1e2 / (self.rows * self.cols)

    def step_size(self, step: int) -> float:
        """τ^(r) for the 1-based step r."""
        if self.schedule == "inv_sqrt":
            return self.learning_rate / sqrt(step)
        return self.learning_rate

    def to_dict(self) -> Dict[str, Any]:
        document = asdict(self)
        document["adam_betas"] = list(self.adam_betas)
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(document) - known

        if unknown:
            raise ValidationError(f"Unknown training options {sorted(unknown)}.")

        return cls(**document)

    @classmethod
    def from_json(cls, raw: str) -> "TrainConfig":
        return cls.from_dict(json.loads(raw))


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    max_gram_residual: float
    wall_time: float
    stage: str = "train"


@dataclass
class TrainReport:
    """Per-epoch history of a training run."""

    records: List[EpochRecord] = field(default_factory=list)
    validation_psnr: Optional[float] = None
    projection: List[Dict[str, Any]] = field(default_factory=list)
    loss_before_projection: Optional[float] = None
    loss_after_projection: Optional[float] = None

    @property
    def losses(self) -> List[float]:
        return [record.loss for record in self.records]

    def write_jsonl(self, path: str) -> None:
        """One JSON record per epoch, then one per projected layer and a final summary."""
        with open(path, "w", encoding="utf-8") as fp:
            for record in self.records:
                fp.write(json.dumps(asdict(record)) + "\n")
            for layer in self.projection:
                fp.write(json.dumps({"projection": layer}) + "\n")
            summary = {
                "validation_psnr": self.validation_psnr,
                "loss_before_projection": self.loss_before_projection,
                "loss_after_projection": self.loss_after_projection,
            }
            fp.write(json.dumps(summary) + "\n")


def tree_sum(values: Sequence[T], add: Callable[[T, T], T]) -> T:
    """
    Pairwise reduction with a fixed shape, so that the rounding only depends on the
    number of values.
    >>> tree_sum([1.0, 2.0, 3.0, 4.0, 5.0], lambda a, b: a + b)
    15.0
    """
    if not values:
        raise ValidationError("Nothing to reduce.")

    level = list(values)

    while len(level) > 1:
        paired = [add(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            paired.append(level[-1])
        level = paired

    return level[0]


def _chunk_gradient(
    net: NetworkParams, noisy: np.ndarray, noise: np.ndarray
) -> Tuple[float, GradientBundle]:
    prediction, tape = lift_forward(net, noisy)
    residual = net.gamma * prediction - noise
    bundle = backward(net, tape, 2.0 * net.gamma * residual)
    loss = float(np.sum(residual**2))
    return loss, GradientBundle(bundle.taps, bundle.bias, bundle.alpha)


def batch_gradient(
    net: NetworkParams,
    batch: Dataset,
    workers: int = 1,
    chunk_size: int = 16,
) -> Tuple[float, GradientBundle]:
    """
    Σ_i ‖γΨ(x_i) − ε_i‖² over the batch and its gradient. Samples are cut into chunks of
    fixed size, which are evaluated on a thread pool and reduced pairwise by index.
    """
    if batch.count == 0:
        raise ValidationError("Cannot differentiate over an empty batch.")

    noisy = batch.noisy
    starts = range(0, batch.count, chunk_size)

    def evaluate(start: int) -> Tuple[float, GradientBundle]:
        stop = start + chunk_size
        return _chunk_gradient(net, noisy[start:stop], batch.noise[start:stop])

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(evaluate, starts))
    else:
        parts = [evaluate(start) for start in starts]

    loss = tree_sum([p[0] for p in parts], lambda a, b: a + b)
    gradient = tree_sum([p[1] for p in parts], lambda a, b: a + b)

    return loss, gradient


def loss_eval(
    net: NetworkParams, data: Dataset, workers: int = 1, chunk_size: int = 64
) -> float:
    """H(u), the mean squared error of the predicted residual."""
    if data.count == 0:
        raise ValidationError("Cannot evaluate the loss on an empty dataset.")

    noisy = data.noisy
    starts = range(0, data.count, chunk_size)

    def evaluate(start: int) -> float:
        stop = start + chunk_size
        prediction = lift_denoise(net, noisy[start:stop])
        residual = net.gamma * prediction - data.noise[start:stop]
        return float(np.sum(residual**2))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(evaluate, starts))
    else:
        parts = [evaluate(start) for start in starts]

    return tree_sum(parts, lambda a, b: a + b) / data.count


def _clip_alpha(layer: Layer, alpha: float) -> float:
    lower, upper = layer.activation.alpha_bounds

    if alpha > upper:
        logger.info(
            "%s parameter %.6g clipped to its upper bound %s.",
            layer.activation.kind,
            alpha,
            upper,
        )
        return upper

    return alpha


def _alpha_update(layer: Layer, gradient: float, tau: float) -> Layer:
    """α·exp(−τα∇_α) on the positive half line, clipped to the admissible interval."""
    activation = layer.activation

    if not activation.parameterized:
        return layer

    alpha = float(activation.alpha)  # type: ignore[arg-type]
    updated = positive_retract(alpha, -tau * alpha**2 * gradient)

    clipped = _clip_alpha(layer, float(updated))
    return layer.replace(activation=activation.with_alpha(clipped))


def _manifold_step(
    net: NetworkParams,
    batch: Dataset,
    tau: float,
    workers: int = 1,
    chunk_size: int = 16,
) -> Tuple[NetworkParams, float]:
    if not net.full:
        raise ValidationError(
            "Stochastic gradient descent on the manifold needs full-length filters."
        )

    loss, gradient = batch_gradient(net, batch, workers, chunk_size)

    if not gradient.is_finite() or not np.isfinite(loss):
        logger.warning(
            "Skipping a step on a batch of %d samples: non-finite gradient.",
            batch.count,
        )
        return net, loss

    scale = tau / batch.count
    layers: List[Layer] = []

    for k, layer in enumerate(net):
        bank = layer.bank
        # tap gradients sum entries of the matrix gradient, the projection onto the
        # algebra spreads them evenly over the period
        direction = bank.with_taps(-scale * gradient.taps[k] / bank.size)
        point = cayley_retract(bank, direction, solver="spectral")

        updated = layer.replace(
            bank=point.value,
            bias=layer.bias - scale * gradient.bias[k],
        )
        layers.append(_alpha_update(updated, gradient.alpha[k], scale))

    return net.replace(layers=layers), loss


def sgd_manifold_step(
    net: NetworkParams,
    batch: Dataset,
    tau: float,
    workers: int = 1,
    chunk_size: int = 16,
) -> NetworkParams:
    """
    One stochastic gradient step: every T_k moves along −(τ/B)∇_T H by the Cayley
    retraction inside the block-circulant algebra, b_k by a Euclidean step and α_k by the
    exponential map of the positive half line.
    """
    return _manifold_step(net, batch, tau, workers, chunk_size)[0]


def _activation_alpha(config: TrainConfig) -> Optional[float]:
    return activation_from_kind(config.activation, config.alpha).alpha


def init_network(
    config: TrainConfig, shape: Tuple[int, ...], rng: np.random.Generator
) -> NetworkParams:
    """
    Full-length layers start at the polar factor of random filters, limited layers draw
    their taps from N(0, 1/(m₁(2l+1))). Biases start at zero.
    """
    activation = activation_from_kind(config.activation, _activation_alpha(config))
    layers: List[Layer] = []

    for _ in range(config.layers):
        if config.mode == "full_filters":
            taps = rng.standard_normal((config.rows, config.cols) + shape)
            bank = stiefel_project(FilterBank(taps, shape)).value
        else:
            width = 2 * config.half_width + 1

            if any(width > p for p in shape):
                raise ValidationError(
                    f"Filters of half width {config.half_width} do not fit in {shape}."
                )

            scale = 1.0 / sqrt(config.rows * width)
            window = (width,) * len(shape)
            taps = scale * rng.standard_normal((config.rows, config.cols) + window)
            bank = FilterBank(taps, shape)

        layers.append(Layer(bank, np.zeros(config.rows), activation))

    return NetworkParams(layers, config.gamma)


def _rng(config: TrainConfig) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))


def _checkpoint(net: NetworkParams, config: TrainConfig, epoch: int) -> None:
    if not config.checkpoint_every or not config.checkpoint_path:
        return

    if epoch % config.checkpoint_every:
        return

    from .api import save_model

    save_model(net, config.checkpoint_path)
    logger.info("Checkpoint of epoch %d written to %s.", epoch, config.checkpoint_path)


def _validate(net: NetworkParams, validation: Optional[Dataset]) -> Optional[float]:
    if validation is None or validation.count == 0:
        return None
    return mean_psnr(denoise(net, validation.noisy), validation.clean, validation.kind)


def _max_residual(net: NetworkParams) -> float:
    return max(net.gram_residuals())


def train_full(
    data: Dataset,
    config: TrainConfig,
    net: Optional[NetworkParams] = None,
    validation: Optional[Dataset] = None,
) -> Tuple[NetworkParams, TrainReport]:
    """
    Epochs of shuffled mini-batches, each batch a sgd_manifold_step. Every layer stays on
    the manifold.
    """
    if config.mode != "full_filters":
        raise ValidationError("train_full requires the full_filters mode.")

    if data.count == 0:
        raise ValidationError("Cannot train on an empty dataset.")

    rng = _rng(config)

    if net is None:
        net = init_network(config, data.shape, rng)

    report = TrainReport()
    step = 0

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(data.count)
        total = 0.0

        for start in range(0, data.count, config.batch_size):
            step += 1
            batch = data.subset(order[start : start + config.batch_size])
            net, loss = _manifold_step(
                net, batch, config.step_size(step), config.workers, config.chunk_size
            )
            total += loss

        record = EpochRecord(
            epoch, total / data.count, _max_residual(net), time.perf_counter() - started
        )
        _finish_epoch(record, report)
        _checkpoint(net, config, epoch)

    report.validation_psnr = _validate(net, validation)

    return net, report


def _finish_epoch(record: EpochRecord, report: TrainReport) -> None:
    if not np.isfinite(record.loss):
        raise TrainingError(
            f"The training loss became {record.loss} at epoch {record.epoch} "
            f"({record.stage})."
        )

    report.records.append(record)
    logger.info(
        "Epoch %d (%s): loss %.6e, max gram residual %.3e, %.2fs.",
        record.epoch,
        record.stage,
        record.loss,
        record.max_gram_residual,
        record.wall_time,
    )


class Adam:
    """Adam moments for every tap and bias array of a network."""

    def __init__(self, net: NetworkParams, config: TrainConfig):
        self.beta1, self.beta2 = config.adam_betas
        self.eps = config.adam_eps
        self.steps = 0
        self.first = [np.zeros_like(layer.bank.taps) for layer in net] + [
            np.zeros_like(layer.bias) for layer in net
        ]
        self.second = [np.zeros_like(moment) for moment in self.first]

    def update(self, gradients: List[np.ndarray], lr: float) -> List[np.ndarray]:
        """Increments to add to the parameters, in the order of the gradients."""
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        increments: List[np.ndarray] = []

        for i, g in enumerate(gradients):
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g**2
            m_hat = self.first[i] / correction1
            v_hat = self.second[i] / correction2
            increments.append(-lr * m_hat / (np.sqrt(v_hat) + self.eps))

        return increments


def _penalized_step(
    net: NetworkParams,
    batch: Dataset,
    optimizer: Adam,
    config: TrainConfig,
    lr: float,
) -> Tuple[NetworkParams, float]:
    loss, gradient = batch_gradient(net, batch, config.workers, config.chunk_size)

    if not np.isfinite(loss) or not gradient.is_finite():
        raise TrainingError(
            f"Penalized training produced a non-finite loss ({loss}) on a batch of "
            f"{batch.count} samples, lower the learning rate or the penalty."
        )

    mu = config.mu
    scale = 1.0 / batch.count
    tap_grads = [
        scale * g + mu * gram_penalty_gradient(layer.bank)
        for g, layer in zip(gradient.taps, net)
    ]
    bias_grads = [scale * g for g in gradient.bias]

    increments = optimizer.update(tap_grads + bias_grads, lr)
    layers: List[Layer] = []

    for k, layer in enumerate(net):
        updated = layer.replace(
            bank=layer.bank.with_taps(layer.bank.taps + increments[k]),
            bias=layer.bias + increments[net.K + k],
        )
        layers.append(_alpha_update(updated, gradient.alpha[k], lr * scale))

    return net.replace(layers=layers), loss


def train_limited_stage1(
    data: Dataset,
    config: TrainConfig,
    net: Optional[NetworkParams] = None,
    report: Optional[TrainReport] = None,
) -> NetworkParams:
    """
    Adam on H(u) + μ Σ_k ‖T_kᵀT_k − I‖_F² over limited filters. The penalty gradient comes
    in closed form from the per-frequency blocks, T is never materialized.
    """
    if config.mode != "limited_filters":
        raise ValidationError("Penalized training requires the limited_filters mode.")

    if data.count == 0:
        raise ValidationError("Cannot train on an empty dataset.")

    if any(2 * config.half_width + 1 > p for p in data.shape):
        raise ValidationError(
            f"Limited filters of half width {config.half_width} exceed the period "
            f"{data.shape}."
        )

    rng = _rng(config)

    if net is None:
        net = init_network(config, data.shape, rng)

    optimizer = Adam(net, config)
    step = 0

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(data.count)
        total = 0.0

        for start in range(0, data.count, config.batch_size):
            step += 1
            batch = data.subset(order[start : start + config.batch_size])
            lr = config.step_size(step)
            net, loss = _penalized_step(net, batch, optimizer, config, lr)
            total += loss

        penalty = config.mu * sum(gram_penalty(layer.bank) for layer in net)
        logger.debug("Epoch %d penalty term %.6e.", epoch, penalty)

        if report is not None:
            record = EpochRecord(
                epoch,
                total / data.count,
                _max_residual(net),
                time.perf_counter() - started,
                "stage1",
            )
            _finish_epoch(record, report)

        _checkpoint(net, config, epoch)

    return net


@dataclass
class Projection:
    """Outcome of project_filters: the bank, F_λ after every accepted step and the residual."""

    bank: FilterBank
    objective: List[float]
    gram_residual: float
    iterations: int
    converged: bool


def projection_objective(T: FilterBank, target: FilterBank, lam: float) -> float:
    """F_λ(T) = ‖T − T̃‖_F² + λ‖TᵀT − I‖_F²."""
    return float(T.size * np.sum((T.taps - target.taps) ** 2) + lam * gram_penalty(T))


def projection_gradient(T: FilterBank, target: FilterBank, lam: float) -> np.ndarray:
    return 2.0 * T.size * (T.taps - target.taps) + lam * gram_penalty_gradient(T)


def projection_hvp(T: FilterBank, direction: np.ndarray, lam: float) -> np.ndarray:
    """∇²F_λ(T) applied to a tap direction, in closed form."""
    return 2.0 * T.size * direction + lam * gram_penalty_hvp(T, T.with_taps(direction))


def project_filters(
    target: FilterBank,
    lam: float = 1e4,
    max_iters: int = 5000,
    tol: float = 1e-10,
    max_halvings: int = 50,
) -> Projection:
    """
    Gradient descent on F_λ starting at T̃, with the step ∇F/ρ where ρ = ‖∇²F ĝ‖ and ĝ the
    normalized gradient. Steps that would increase F_λ are halved, F_λ never increases.
    """
    if not np.isfinite(lam) or lam <= 0.0:
        raise ValidationError(f"λ must be positive, got {lam}.")

    T = target
    objective = [projection_objective(T, target, lam)]
    converged = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        gradient = projection_gradient(T, target, lam)
        norm = float(np.linalg.norm(gradient))

        if norm <= tol:
            converged = True
            iterations -= 1
            break

        curvature = projection_hvp(T, gradient / norm, lam)
        rho = max(float(np.linalg.norm(curvature)), 1e-12)
        step = 1.0 / rho

        for _ in range(max_halvings):
            candidate = T.with_taps(T.taps - step * gradient)
            value = projection_objective(candidate, target, lam)
            if value <= objective[-1]:
                break
            step *= 0.5
        else:
            logger.debug(
                "No decreasing step left after %d halvings, stopping.", max_halvings
            )
            converged = True
            iterations -= 1
            break

        T = candidate
        objective.append(value)

    residual = float(np.sqrt(gram_penalty(T)))
    logger.debug(
        "Projection with λ=%g: F=%.6e, gram residual %.3e after %d iterations.",
        lam,
        objective[-1],
        residual,
        iterations,
    )

    return Projection(T, objective, residual, iterations, converged)


def project_network(
    net: NetworkParams,
    lam: float = 1e4,
    max_iters: int = 5000,
    tol: float = 1e-10,
) -> Tuple[NetworkParams, List[Projection]]:
    """Run project_filters on every layer."""
    projections = [project_filters(layer.bank, lam, max_iters, tol) for layer in net]
    layers = [layer.replace(bank=p.bank) for layer, p in zip(net, projections)]
    return net.replace(layers=layers), projections


def train_limited(
    data: Dataset,
    config: TrainConfig,
    net: Optional[NetworkParams] = None,
    validation: Optional[Dataset] = None,
) -> Tuple[NetworkParams, TrainReport]:
    """Penalized training followed by the projection of every layer."""
    report = TrainReport()
    stage1 = train_limited_stage1(data, config, net, report)

    before = loss_eval(stage1, data, config.workers)
    projected, projections = project_network(
        stage1,
        config.projection_lambda,
        config.projection_max_iters,
        config.projection_tol,
    )
    after = loss_eval(projected, data, config.workers)
    report.loss_before_projection = before
    report.loss_after_projection = after

    for k, (layer, projection) in enumerate(zip(stage1, projections)):
        report.projection.append(
            {
                "layer": k,
                "residual_before": float(np.sqrt(gram_penalty(layer.bank))),
                "residual_after": projection.gram_residual,
                "iterations": projection.iterations,
                "objective": projection.objective[-1],
            }
        )

    report.records.append(
        EpochRecord(config.epochs, after, _max_residual(projected), 0.0, "projected")
    )
    logger.info("Projection moved the training loss from %.6e to %.6e.", before, after)

    report.validation_psnr = _validate(projected, validation)

    return projected, report


def train(
    data: Dataset,
    config: TrainConfig,
    validation: Optional[Dataset] = None,
) -> Tuple[NetworkParams, TrainReport]:
    """Dispatch on the training mode."""
    if config.mode == "full_filters":
        return train_full(data, config, validation=validation)
    return train_limited(data, config, validation=validation)
