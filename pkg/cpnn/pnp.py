"""
Plug-and-Play solvers: forward-backward splitting and ADMM with a denoiser in place of a
proximal step, the oracle denoiser restoring averagedness for γ < 2, a numerical estimator of
averagedness and the scalar example on which ADMM-PnP diverges.

In the ADMM iteration the step parameter η plays the part of the penalty weight usually
written γ, which is reserved here for the scale of the residual denoiser x − γΨ(x).
"""
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .data import (
    BlurKernel,
    blur_adjoint,
    blur_apply,
    psnr_image,
    psnr_signal,
    read_signals,
    read_pgm,
    sample_rng,
    smooth_oracle,
)
from .exceptions import (
    ContractViolation,
    DimensionError,
    SolverError,
    ValidationError,
)
from .models import NetworkParams
from .network import backward, denoise, lift_denoise, lift_forward

logger = logging.getLogger(__name__)

#: Random stream of the points sampled by estimate_averagedness.
STREAM_ESTIMATE = 4

ORACLE_SOURCES = ("none", "file", "second_pass", "smooth")

#: Largest dimension for which a dense Jacobian is built by finite differences.
DENSE_JACOBIAN_LIMIT = 1024

CG_RTOL = 1e-10
CG_MAXITER = 500

Operator = Callable[[np.ndarray], np.ndarray]


class DataTerm:
    """
    A data fidelity f with its gradient, the proximal map of f/η and the Lipschitz
    constant L of ∇f.
    """

    def __init__(self, observation: Union[np.ndarray, Sequence[float]]):
        self.observation: np.ndarray = np.array(observation, dtype=float)

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError  # pragma: no cover

    def value(self, y: np.ndarray) -> float:
        raise NotImplementedError  # pragma: no cover

    def grad(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError  # pragma: no cover

    def prox(self, v: np.ndarray, eta: float) -> np.ndarray:
        """argmin_z f(z)/η + ½‖z − v‖²."""
        raise NotImplementedError  # pragma: no cover

    def initial(self) -> np.ndarray:
        """Starting point of the solvers."""
        return self.observation.copy()


class QuadraticIdentity(DataTerm):
    """
    f(y) = (w/2)‖x_obs − y‖², the denoising data term. A zero weight gives f = 0.
    >>> QuadraticIdentity([1.0, 3.0]).prox(np.zeros(2), 1.0).tolist()
    [0.5, 1.5]
    """

    def __init__(
        self, observation: Union[np.ndarray, Sequence[float]], weight: float = 1.0
    ):
        super().__init__(observation)

        if not np.isfinite(weight) or weight < 0.0:
            raise ValidationError(
                f"The data weight must be non-negative, got {weight}."
            )

        self.weight: float = float(weight)

    @property
    def lipschitz(self) -> float:
        return self.weight

    def value(self, y: np.ndarray) -> float:
        return 0.5 * self.weight * float(np.sum((self.observation - y) ** 2))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return self.weight * (np.asarray(y, dtype=float) - self.observation)

    def prox(self, v: np.ndarray, eta: float) -> np.ndarray:
        return (eta * np.asarray(v, dtype=float) + self.weight * self.observation) / (
            eta + self.weight
        )


class QuadraticBlur(DataTerm):
    """
    f(y) = ½‖By − x_obs‖² for a normalized Gaussian blur B, whose gradient is 1-Lipschitz.
    With the ``valid`` boundary the observation is smaller than the unknown image by the
    kernel support.
    """

    def __init__(
        self,
        observation: Union[np.ndarray, Sequence[float]],
        kernel: BlurKernel,
        boundary: str = "periodic",
    ):
        super().__init__(observation)

        if self.observation.ndim != 2:
            raise DimensionError(
                f"Deblurring expects an image, got shape {self.observation.shape}."
            )

        self.kernel: BlurKernel = kernel
        self.boundary: str = boundary

    @property
    def lipschitz(self) -> float:
        return 1.0

    def forward(self, y: np.ndarray) -> np.ndarray:
        return blur_apply(self.kernel, y, self.boundary)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return blur_adjoint(self.kernel, r, self.boundary)

    def value(self, y: np.ndarray) -> float:
        return 0.5 * float(np.sum((self.forward(y) - self.observation) ** 2))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(y) - self.observation)

    def initial(self) -> np.ndarray:
        """The observation, or its zero padded adjoint image for the valid boundary."""
        if self.boundary == "valid":
            return self.adjoint(self.observation)
        return self.observation.copy()

    def prox(self, v: np.ndarray, eta: float) -> np.ndarray:
        """Conjugate gradients on (ηI + BᵀB)z = ηv + Bᵀx_obs."""
        v = np.asarray(v, dtype=float)
        shape = v.shape
        size = v.size

        def normal(z: np.ndarray) -> np.ndarray:
            image = z.reshape(shape)
            return (eta * image + self.adjoint(self.forward(image))).ravel()

        operator = LinearOperator((size, size), matvec=normal, dtype=float)
        rhs = (eta * v + self.adjoint(self.observation)).ravel()

        z, info = cg(operator, rhs, x0=v.ravel(), rtol=CG_RTOL, maxiter=CG_MAXITER)

        if info > 0:
            raise SolverError(
                f"Conjugate gradients did not reach a relative residual of {CG_RTOL} "
                f"within {CG_MAXITER} iterations."
            )

        if info < 0:  # pragma: no cover
            raise SolverError("Conjugate gradients received an illegal input.")

        return z.reshape(shape)


def grad_f(data: DataTerm, y: np.ndarray) -> np.ndarray:
    return data.grad(y)


def prox_f(data: DataTerm, y: np.ndarray, eta: float) -> np.ndarray:
    """prox_{(1/η)f}(y)."""
    if eta <= 0.0:
        raise ValidationError(f"η must be positive, got {eta}.")
    return data.prox(y, eta)


class LiftedOperator:
    """Ψ = AᵀΦA of a network, with its vector-Jacobian product."""

    def __init__(self, net: NetworkParams):
        self.net: NetworkParams = net

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return lift_denoise(self.net, x)

    def vjp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        _, tape = lift_forward(self.net, x)
        grad = backward(self.net, tape, v).input_grad

        if grad is None:  # pragma: no cover
            raise ContractViolation(
                "The backward pass did not produce an input gradient."
            )

        return grad


class ResidualDenoiser:
    """The learned denoiser 𝒟 = I − γΨ of a network, with its vector-Jacobian product."""

    def __init__(self, net: NetworkParams):
        self.net: NetworkParams = net
        self.psi: LiftedOperator = LiftedOperator(net)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return denoise(self.net, x)

    def vjp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """vᵀ J𝒟(x)."""
        return np.asarray(v, dtype=float) - self.net.gamma * self.psi.vjp(x, v)


class OracleDenoiser:
    """
    (1 − c)x* + c(x − γΨ(x)) with c = 1/(1 − γ + 2tγ). When Ψ is t-averaged this is
    t̃-averaged with t̃ = tγ/(1 − γ + 2tγ), which stays below 1 for every γ in (0, 2).

    >>> oracle = OracleDenoiser(np.zeros(2), lambda x: -0.2 * x, 0.6, 1.99)
    >>> round(oracle.scale, 12) == round(1 / 1.398, 12)
    True
    """

    def __init__(
        self,
        anchor: Union[np.ndarray, Sequence[float]],
        psi: Union[NetworkParams, Operator],
        t: float,
        gamma: float,
    ):
        if not 0.5 <= t <= 1.0:
            raise ValidationError(f"The averagedness t must lie in [1/2, 1], got {t}.")

        if not 0.0 < gamma < 2.0:
            raise ValidationError(
                f"The oracle denoiser requires 0 < γ < 2, got {gamma}."
            )

        self.anchor: np.ndarray = np.array(anchor, dtype=float)
        if isinstance(psi, NetworkParams):
            psi = LiftedOperator(psi)
        self.psi: Operator = psi
        self.t: float = float(t)
        self.gamma: float = float(gamma)

    @property
    def scale(self) -> float:
        """c, the weight of the plain denoiser."""
        return 1.0 / (1.0 - self.gamma + 2.0 * self.t * self.gamma)

    @property
    def anchor_weight(self) -> float:
        """1 − c, the weight of x*."""
        return 1.0 - self.scale

    @property
    def averagedness(self) -> float:
        return self.t * self.gamma * self.scale

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        plain = x - self.gamma * self.psi(x)
        return self.anchor_weight * self.anchor + self.scale * plain

    def vjp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        psi_vjp = getattr(self.psi, "vjp", None)

        if psi_vjp is None:
            raise ValidationError("The wrapped operator does not expose a vjp.")

        return self.scale * (np.asarray(v, dtype=float) - self.gamma * psi_vjp(x, v))


def oracle_denoiser(
    anchor: Union[np.ndarray, Sequence[float]],
    net: Union[NetworkParams, Operator],
    t: Optional[float],
    gamma: Optional[float] = None,
) -> OracleDenoiser:
    """
    The oracle denoiser around x*. γ defaults to the one stored with the network.
    With t = ½ it coincides with the plain denoiser I − γΨ.
    """
    if t is None:
        raise ValidationError(
            "The oracle denoiser needs the averagedness t of Ψ, certify the network "
            "or estimate it first."
        )

    if gamma is None:
        if not isinstance(net, NetworkParams):
            raise ValidationError("γ is required when Ψ is not a network.")
        gamma = net.gamma

    return OracleDenoiser(anchor, net, t, gamma)


def oracle_anchor(
    source: str,
    observation: np.ndarray,
    net: Optional[NetworkParams] = None,
    path: Optional[str] = None,
    sigma: float = 1.5,
) -> np.ndarray:
    """
    Reference point x* of the oracle denoiser: read from a file, one pass of the plain
    denoiser over the observation, or the observation smoothed by a Gaussian filter.
    """
    if source == "file":
        if path is None:
            raise ValidationError("The file oracle needs a path.")
        if path.lower().endswith(".pgm"):
            return read_pgm(path)
        signals = read_signals(path)
        return signals[0] if signals.shape[0] == 1 else signals

    if source == "second_pass":
        if net is None:
            raise ValidationError("The second pass oracle needs a network.")
        return denoise(net, observation)

    if source == "smooth":
        return smooth_oracle(observation, sigma)

    raise ValidationError(
        f"Unknown oracle source '{source}', expected one of {ORACLE_SOURCES[1:]}."
    )


@dataclass
class PnPConfig:
    """Solver settings. ``oracle`` and ``t`` describe how the CLI builds the denoiser."""

    eta: float = 1.0
    max_iters: int = 500
    stop_tol: float = 1e-6
    unsafe: bool = False
    detect_divergence: bool = True
    divergence_factor: float = 10.0
    divergence_window: int = 50
    record_iterates: bool = False
    oracle: str = "none"
    t: Optional[float] = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.eta) or self.eta <= 0.0:
            raise ValidationError(f"η must be positive, got {self.eta}.")

        if self.max_iters < 0:
            raise ValidationError(
                f"max_iters must be non-negative, got {self.max_iters}."
            )

        if self.stop_tol < 0.0:
            raise ValidationError(
                f"stop_tol must be non-negative, got {self.stop_tol}."
            )

        if self.divergence_window < 1 or self.divergence_factor <= 1.0:
            raise ValidationError(
                "The divergence detector needs a positive window and a factor above 1."
            )

        if self.oracle not in ORACLE_SOURCES:
            raise ValidationError(
                f"Unknown oracle '{self.oracle}', expected one of {ORACLE_SOURCES}."
            )

        if self.t is not None and not 0.5 <= self.t <= 1.0:
            raise ValidationError(
                f"The averagedness t must lie in [1/2, 1], got {self.t}."
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "PnPConfig":
        unknown = set(document) - {f.name for f in fields(cls)}

        if unknown:
            raise ValidationError(f"Unknown solver options {sorted(unknown)}.")

        return cls(**document)

    @classmethod
    def from_json(cls, raw: str) -> "PnPConfig":
        return cls.from_dict(json.loads(raw))


@dataclass
class Trace:
    """Per-iteration diagnostics of a solver run."""

    residuals: List[float] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    t_residuals: List[float] = field(default_factory=list)
    t_values: List[np.ndarray] = field(default_factory=list)
    psnr: List[float] = field(default_factory=list)
    converged: bool = False
    diverged: bool = False
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def to_csv(self, path: str) -> None:
        """Columns iteration, residual, t_residual, objective; empty cells when absent."""
        with open(path, "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["iteration", "residual", "t_residual", "objective"])

            for r, residual in enumerate(self.residuals):
                t_residual = self.t_residuals[r] if r < len(self.t_residuals) else ""
                objective = self.objective[r] if r < len(self.objective) else ""
                writer.writerow(
                    [r + 1, repr(residual), _cell(t_residual), _cell(objective)]
                )

    def summary(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "diverged": self.diverged,
            "final_residual": self.residuals[-1] if self.residuals else None,
            "final_psnr": self.psnr[-1] if self.psnr else None,
        }


def _cell(value: Any) -> str:
    return value if isinstance(value, str) else repr(float(value))


def _psnr(x: np.ndarray, truth: np.ndarray) -> float:
    if truth.ndim == 2:
        return psnr_image(np.clip(x, 0.0, 1.0), truth)
    return psnr_signal(x, truth)


def _diverging(trace: Trace, config: PnPConfig) -> bool:
    if not config.detect_divergence:
        return False

    window = config.divergence_window
    residuals = trace.residuals

    if len(residuals) <= window:
        return False

    return residuals[-1] > config.divergence_factor * residuals[-1 - window]


def _record(
    trace: Trace,
    residual: float,
    x: np.ndarray,
    data: DataTerm,
    config: PnPConfig,
    truth: Optional[np.ndarray],
) -> bool:
    """Append the diagnostics of one iteration, True when the run should stop."""
    trace.residuals.append(residual)
    trace.objective.append(data.value(x))

    if truth is not None:
        trace.psnr.append(_psnr(x, truth))

    if not np.isfinite(residual):
        trace.diverged = True
        logger.warning("Iterates became non-finite after %d steps.", trace.iterations)
        return True

    if residual <= config.stop_tol:
        trace.converged = True
        return True

    if _diverging(trace, config):
        trace.diverged = True
        logger.warning(
            "Residual grew more than %g times over %d iterations, stopping after %d.",
            config.divergence_factor,
            config.divergence_window,
            trace.iterations,
        )
        return True

    return False


def fbs_pnp(
    data: DataTerm,
    denoiser: Operator,
    config: PnPConfig,
    x0: Optional[np.ndarray] = None,
    truth: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Trace]:
    """
    x^(r+1) = 𝒟(x^(r) − η∇f(x^(r))). Converges for an averaged 𝒟 when 0 < η < 2/L, which
    is enforced unless ``config.unsafe`` is set.
    """
    lipschitz = data.lipschitz

    if not config.unsafe and lipschitz > 0.0 and config.eta >= 2.0 / lipschitz:
        raise ValidationError(
            f"Forward-backward splitting requires η < 2/L = {2.0 / lipschitz}, "
            f"got η = {config.eta}; pass unsafe to run anyway."
        )

    x = data.initial() if x0 is None else np.array(x0, dtype=float)
    trace = Trace()

    for _ in range(config.max_iters):
        y = x - config.eta * data.grad(x)
        updated = np.asarray(denoiser(y), dtype=float)
        residual = float(np.linalg.norm(updated - x))
        x = updated

        if config.record_iterates:
            trace.t_values.append(x.copy())

        if _record(trace, residual, x, data, config, truth):
            break

    logger.debug(
        "FBS-PnP stopped after %d iterations: %s.", trace.iterations, trace.summary()
    )

    return x, trace


def admm_pnp(
    data: DataTerm,
    denoiser: Operator,
    config: PnPConfig,
    x0: Optional[np.ndarray] = None,
    p0: Optional[np.ndarray] = None,
    truth: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Trace]:
    """
    x^(r+1) = prox_{f/η}(y^(r) − p^(r)/η)
    y^(r+1) = 𝒟(x^(r+1) + p^(r)/η)
    p^(r+1) = p^(r) + η(x^(r+1) − y^(r+1))

    The trace records t^(r) = p^(r)/η + x^(r+1), the orbit of a firmly non-expansive map
    whenever 𝒟 is firmly non-expansive. Returns the last y.
    """
    eta = config.eta

    y = data.initial() if x0 is None else np.array(x0, dtype=float)
    p = np.zeros_like(y) if p0 is None else np.array(p0, dtype=float)
    x = y.copy()
    previous_t: Optional[np.ndarray] = None
    trace = Trace()

    for _ in range(config.max_iters):
        updated = prox_f(data, y - p / eta, eta)
        t = p / eta + updated

        if previous_t is not None:
            trace.t_residuals.append(float(np.linalg.norm(t - previous_t)))

        if config.record_iterates:
            trace.t_values.append(t.copy())

        previous_t = t
        residual = float(np.linalg.norm(updated - x))
        x = updated
        y = np.asarray(denoiser(t), dtype=float)
        p = p + eta * (x - y)

        if _record(trace, residual, y, data, config, truth):
            break

    logger.debug(
        "ADMM-PnP stopped after %d iterations: %s.", trace.iterations, trace.summary()
    )

    return y, trace


@dataclass
class AveragednessEstimate:
    """
    Smallest grid value t for which R = (1/t)op − ((1 − t)/t)I stayed numerically
    non-expansive on every sample, None when no t ≤ 1 passed.
    """

    t_star: Optional[float]
    norms: Dict[float, float]
    samples: int
    method: str

    @property
    def averaged(self) -> bool:
        return self.t_star is not None


def averagedness_grid(step: float = 0.05) -> List[float]:
    """
    >>> averagedness_grid(0.25)
    [0.5, 0.75, 1.0]
    """
    if not 0.0 < step <= 0.5:
        raise ValidationError(f"The grid step must lie in (0, 1/2], got {step}.")

    count = int(np.floor(0.5 / step + 1e-9))
    grid = [round(0.5 + k * step, 12) for k in range(count + 1)]

    if grid[-1] < 1.0:
        grid.append(1.0)

    return grid


def _jvp(op: Operator, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    return (op(x + h * v) - op(x - h * v)) / (2.0 * h)


def _dense_jacobian(op: Operator, x: np.ndarray) -> np.ndarray:
    columns = []

    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = 1.0
        columns.append(_jvp(op, x, e.reshape(x.shape)).ravel())

    return np.stack(columns, axis=1)


def _averaged_norm(jacobian: np.ndarray, t: float) -> float:
    R = jacobian / t - ((1.0 - t) / t) * np.eye(jacobian.shape[0])
    return float(np.linalg.norm(R, 2))


def _power_norm(
    op: Operator,
    vjp: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x: np.ndarray,
    t: float,
    rng: np.random.Generator,
    iterations: int,
    tol: float,
) -> float:
    """‖JR(x)‖₂ through power iteration on JRᵀJR, JVP by central differences, VJP exact."""
    v = rng.standard_normal(x.shape)
    v /= np.linalg.norm(v)
    estimate = 0.0

    for _ in range(iterations):
        forward = _jvp(op, x, v) / t - ((1.0 - t) / t) * v
        w = np.asarray(vjp(x, forward), dtype=float) / t - ((1.0 - t) / t) * forward
        norm = float(np.linalg.norm(w))

        if norm == 0.0:
            return 0.0

        updated = float(np.sqrt(norm))
        v = w / norm

        if abs(updated - estimate) <= tol * max(updated, 1.0):
            return updated

        estimate = updated

    return estimate


def estimate_averagedness(
    op: Operator,
    shape: Union[int, Sequence[int]],
    samples: int = 1000,
    step: float = 0.05,
    seed: int = 0,
    tol: float = 1e-6,
    vjp: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
    iterations: int = 50,
    exhaustive: bool = False,
    workers: int = 1,
) -> AveragednessEstimate:
    """
    Scan t = ½, ½ + step, …, 1 and return the first t for which ‖JR(x_i)‖₂ ≤ 1 + tol at
    every sample x_i drawn uniformly in [0, 1]^shape.

    Without a vjp the Jacobian is built densely by central differences, which is exact
    enough for small dimensions. With a vjp the norm comes from power iteration.
    ``exhaustive`` evaluates every grid value instead of stopping at the first success.

    >>> estimate_averagedness(lambda x: -0.2 * x, 4, samples=3).t_star
    0.6
    """
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    dim = int(np.prod(shape))

    if samples < 1:
        raise ValidationError(f"At least one sample is required, got {samples}.")

    if vjp is None and dim > DENSE_JACOBIAN_LIMIT:
        vjp = getattr(op, "vjp", None)
        if vjp is None:
            raise ValidationError(
                f"A dense Jacobian of dimension {dim} is too large, provide a vjp."
            )

    points = [
        sample_rng(seed, i, STREAM_ESTIMATE).uniform(size=shape) for i in range(samples)
    ]
    method = "dense" if vjp is None else "power"
    grid = averagedness_grid(step)

    def each(evaluate: Callable[[int], Any]) -> List[Any]:
        if workers > 1 and samples > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                return list(executor.map(evaluate, range(samples)))
        return [evaluate(i) for i in range(samples)]

    def worst(evaluate: Callable[[int], float]) -> float:
        return max(each(evaluate))

    jacobians: List[np.ndarray] = []

    if method == "dense":
        jacobians = each(lambda i: _dense_jacobian(op, points[i]))

    norms: Dict[float, float] = {}
    t_star: Optional[float] = None

    for t in grid:
        if method == "dense":
            norms[t] = worst(lambda i: _averaged_norm(jacobians[i], t))
        else:
            norms[t] = worst(
                lambda i: _power_norm(
                    op,
                    vjp,  # type: ignore[arg-type]
                    points[i],
                    t,
                    sample_rng(seed, i, STREAM_ESTIMATE + 1),
                    iterations,
                    tol,
                )
            )

        logger.debug("Averagedness t=%.2f: max ‖JR‖ = %.8f.", t, norms[t])

        if norms[t] <= 1.0 + tol and t_star is None:
            t_star = t
            if not exhaustive:
                break

    if t_star is None:
        logger.info(
            "No grid value up to 1 made the operator non-expansive on the samples."
        )

    return AveragednessEstimate(t_star, norms, samples, method)


def divergence_example(
    t: float, a2: float, y0: float = 1.0, iters: int = 30
) -> Trace:
    """
    ADMM-PnP on scalars with the t-averaged denoiser 𝒟 = −(2t − 1)I and the data term whose
    prox is ½(I + R), R = −a₂I. The t-sequence is multiplied at every step by

        c = (1 + a₁) − (1 − a₂)(1 + 2a₁)/2,  a₁ = 2t − 1,

    so the iteration diverges whenever c > 1, although 𝒟 is averaged. Runs the actual
    admm_pnp machinery and checks every ratio against c.

    >>> trace = divergence_example(0.75, 0.9, iters=5)
    >>> round(trace.extras["growth_factor"], 12)
    1.4
    """
    if not 0.5 < t <= 1.0:
        raise ValidationError(f"The example needs t in (1/2, 1], got {t}.")

    if not 0.0 < a2 < 1.0:
        raise ValidationError(f"The example needs a₂ in (0, 1), got {a2}.")

    if y0 == 0.0:
        raise ValidationError("The example needs a non-zero starting point.")

    a1 = 2.0 * t - 1.0
    threshold = (1.0 - a2) * (1.0 + 2.0 * a1) / 2.0
    c = (1.0 + a1) - threshold

    if not a1 > threshold:
        raise ValidationError(
            f"The strict inequality a₁ > (1 − a₂)(1 + 2a₁)/2 fails: {a1} ≤ {threshold}, "
            f"so c = {c} does not exceed 1."
        )

    data = QuadraticIdentity(np.zeros(1), weight=(1.0 + a2) / (1.0 - a2))
    config = PnPConfig(
        eta=1.0,
        max_iters=iters + 1,
        stop_tol=0.0,
        detect_divergence=False,
        record_iterates=True,
    )

    _, trace = admm_pnp(data, lambda x: -a1 * x, config, x0=np.array([y0]))

    values = [float(v[0]) for v in trace.t_values]
    ratios = [b / a for a, b in zip(values, values[1:])]

    for r, ratio in enumerate(ratios):
        if abs(ratio - c) > 1e-9:
            raise ContractViolation(
                f"Step {r + 1} multiplied t by {ratio}, expected {c}."
            )

    trace.diverged = True
    trace.extras.update(
        {"growth_factor": c, "ratios": ratios, "t0": values[0], "a1": a1, "a2": a2}
    )

    return trace
