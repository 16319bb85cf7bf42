from itertools import count
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .activations import Activation
from .algebra import gram_residual
from .exceptions import DimensionError, ValidationError
from .structures import FilterBank
from .utils import Shape

#: Layers whose gram residual stays below this are treated as orthogonal.
CERTIFICATION_TOL: float = 1e-8

_tokens = count()


class Layer:
    """
    One building block x ↦ Tᵀσ_α(Tx + b⊗1), made of a bank T, a bias b of length m₁ and
    an activation.
    """

    def __init__(
        self,
        bank: FilterBank,
        bias: Union[Sequence[float], np.ndarray],
        activation: Activation,
    ):
        """
        :param bank: Filters of T, m₁ rows by m₂ columns.
        :param bias: One value per row channel, replicated over every position.
        :param activation: Stable activation σ_α of this block.
        """
        b = np.array(bias, dtype=float).reshape(-1)

        if b.size != bank.rows:
            raise DimensionError(
                f"Bias of length {b.size} does not match the {bank.rows} rows of the bank."
            )

        if not np.all(np.isfinite(b)):
            raise ValidationError("Bias entries must be finite.")

        b.setflags(write=False)

        self._bank: FilterBank = bank
        self._bias: np.ndarray = b
        self._activation: Activation = activation

    @property
    def bank(self) -> FilterBank:
        return self._bank

    @property
    def bias(self) -> np.ndarray:
        return self._bias

    @property
    def activation(self) -> Activation:
        return self._activation

    def broadcast_bias(self) -> np.ndarray:
        """Bias shaped (m₁, 1, ...) so that it adds to (..., m₁, *shape) signals."""
        return self._bias.reshape((-1,) + (1,) * self._bank.dims)

    def replace(
        self,
        bank: Optional[FilterBank] = None,
        bias: Optional[np.ndarray] = None,
        activation: Optional[Activation] = None,
    ) -> "Layer":
        return Layer(
            self._bank if bank is None else bank,
            self._bias if bias is None else bias,
            self._activation if activation is None else activation,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Layer):
            return NotImplemented
        return (
            np.array_equal(self._bank.taps, other.bank.taps)
            and self._bank.shape == other.bank.shape
            and np.array_equal(self._bias, other.bias)
            and self._activation == other.activation
        )

    def __repr__(self) -> str:
        return f"<Layer {self._bank!r} {self._activation!r}>"


class NetworkParams:
    """
    Parameters u = (T, b, α) of a convolutional proximal network, plus the scale γ of the
    residual denoiser x − γΨ(x). Immutable: training produces new instances.

    Every layer shares the geometry (m, m₁, m₂, l) and the activation kind.
    """

    def __init__(self, layers: Sequence[Layer], gamma: float = 1.0):
        """
        :param layers: The K building blocks, applied first to last.
        :param gamma: Scale of the residual in the denoiser, positive.
        """
        if len(layers) < 1:
            raise ValidationError("A network needs at least one layer.")

        first = layers[0].bank

        for layer in layers[1:]:
            bank = layer.bank
            if (bank.rows, bank.cols, bank.shape, bank.widths) != (
                first.rows,
                first.cols,
                first.shape,
                first.widths,
            ):
                raise DimensionError(
                    f"Layer {bank!r} does not share the geometry of {first!r}."
                )

        kinds = {layer.activation.kind for layer in layers}
        if len(kinds) != 1:
            raise ValidationError(
                f"Every layer must use the same activation kind, got {sorted(kinds)}."
            )

        if not np.isfinite(gamma) or gamma <= 0.0:
            raise ValidationError(f"γ must be positive, got {gamma}.")

        self._layers: Tuple[Layer, ...] = tuple(layers)
        self._gamma: float = float(gamma)
        self._token: int = next(_tokens)

    @property
    def layers(self) -> Tuple[Layer, ...]:
        return self._layers

    @property
    def gamma(self) -> float:
        return self._gamma

    @property
    def token(self) -> int:
        """Identity of this parameter set, used to detect stale tapes."""
        return self._token

    @property
    def K(self) -> int:
        return len(self._layers)

    @property
    def shape(self) -> Shape:
        return self._layers[0].bank.shape

    @property
    def dims(self) -> int:
        return self._layers[0].bank.dims

    @property
    def rows(self) -> int:
        """m₁, the channel count inside each block."""
        return self._layers[0].bank.rows

    @property
    def cols(self) -> int:
        """m₂, the channel count of the network input."""
        return self._layers[0].bank.cols

    @property
    def half_width(self) -> int:
        return self._layers[0].bank.half_width

    @property
    def full(self) -> bool:
        return self._layers[0].bank.full

    @property
    def activation_kind(self) -> str:
        return self._layers[0].activation.kind

    @property
    def alphas(self) -> List[Optional[float]]:
        return [layer.activation.alpha for layer in self._layers]

    @property
    def geometry(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "m": list(self.shape) if self.dims == 2 else self.shape[0],
            "m1": self.rows,
            "m2": self.cols,
            "l": self.half_width,
            "dims": self.dims,
            "full": self.full,
        }

    def gram_residuals(self) -> List[float]:
        return [gram_residual(layer.bank) for layer in self._layers]

    def certified(self, tol: float = CERTIFICATION_TOL) -> bool:
        """True when every T_k has orthonormal columns (or rows when m₁ < m₂)."""
        return max(self.gram_residuals()) <= tol

    def averagedness(self, tol: float = CERTIFICATION_TOL) -> Optional[float]:
        """
        K/(K+1) when the network is certified: Φ is then K/(K+1)-averaged, and so is the
        lifted Ψ = AᵀΦA. None otherwise.
        """
        return self.K / (self.K + 1) if self.certified(tol) else None

    def replace(
        self, layers: Optional[Sequence[Layer]] = None, gamma: Optional[float] = None
    ) -> "NetworkParams":
        return NetworkParams(
            self._layers if layers is None else layers,
            self._gamma if gamma is None else gamma,
        )

    def __iter__(self) -> Iterator[Layer]:
        return iter(self._layers)

    def __len__(self) -> int:
        return len(self._layers)

    def __getitem__(self, item: int) -> Layer:
        return self._layers[item]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return self._gamma == other.gamma and self._layers == other.layers

    def __repr__(self) -> str:
        return (
            f"<NetworkParams K={self.K} m1={self.rows} m2={self.cols} "
            f"period={self.shape} l={self.half_width} {self.activation_kind} γ={self._gamma}>"
        )


class GradientBundle:
    """
    Gradients of a scalar loss with respect to every parameter of a network: taps per layer
    (shaped as the bank taps), biases per layer and one α per layer. ``input_grad`` optionally
    holds the gradient with respect to the network input.
    """

    def __init__(
        self,
        taps: Sequence[np.ndarray],
        bias: Sequence[np.ndarray],
        alpha: Sequence[float],
        input_grad: Optional[np.ndarray] = None,
    ):
        if not len(taps) == len(bias) == len(alpha):
            raise DimensionError("Every parameter class needs one entry per layer.")

        self.taps: List[np.ndarray] = [np.asarray(t, dtype=float) for t in taps]
        self.bias: List[np.ndarray] = [np.asarray(b, dtype=float) for b in bias]
        self.alpha: List[float] = [float(a) for a in alpha]
        self.input_grad: Optional[np.ndarray] = input_grad

    @staticmethod
    def zeros_like(net: NetworkParams) -> "GradientBundle":
        return GradientBundle(
            [np.zeros_like(layer.bank.taps) for layer in net],
            [np.zeros_like(layer.bias) for layer in net],
            [0.0] * net.K,
        )

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        """Gradient of the sum of both losses. Input gradients survive only when both exist."""
        total_input = None
        if self.input_grad is not None and other.input_grad is not None:
            if np.shape(self.input_grad) != np.shape(other.input_grad):
                raise DimensionError(
                    f"Cannot add input gradients of shapes {np.shape(self.input_grad)} "
                    f"and {np.shape(other.input_grad)}."
                )
            total_input = self.input_grad + other.input_grad

        return GradientBundle(
            [a + b for a, b in zip(self.taps, other.taps)],
            [a + b for a, b in zip(self.bias, other.bias)],
            [a + b for a, b in zip(self.alpha, other.alpha)],
            total_input,
        )

    def scale(self, factor: float) -> "GradientBundle":
        return GradientBundle(
            [factor * t for t in self.taps],
            [factor * b for b in self.bias],
            [factor * a for a in self.alpha],
            None if self.input_grad is None else factor * self.input_grad,
        )

    def is_finite(self) -> bool:
        return (
            all(np.all(np.isfinite(t)) for t in self.taps)
            and all(np.all(np.isfinite(b)) for b in self.bias)
            and all(np.isfinite(a) for a in self.alpha)
        )

    def norm(self) -> float:
        """Euclidean norm over every parameter class."""
        return float(
            np.sqrt(
                sum(float(np.sum(t**2)) for t in self.taps)
                + sum(float(np.sum(b**2)) for b in self.bias)
                + sum(a**2 for a in self.alpha)
            )
        )

    def __repr__(self) -> str:
        return f"<GradientBundle layers={len(self.taps)} norm={self.norm():.3e}>"


class Tape:
    """
    Values recorded by a forward pass for the matching backward pass.
    A tape is bound to the exact NetworkParams instance that produced it.
    """

    def __init__(
        self,
        token: int,
        inputs: List[np.ndarray],
        pre_activations: List[np.ndarray],
        flat: bool,
        lifted: bool,
    ):
        self.token: int = token
        #: Input of every block, the first one being the network input.
        self.inputs: List[np.ndarray] = inputs
        #: Tx + b⊗1 of every block.
        self.pre_activations: List[np.ndarray] = pre_activations
        self.flat: bool = flat
        self.lifted: bool = lifted

    def __repr__(self) -> str:
        return (
            f"<Tape layers={len(self.pre_activations)} "
            f"lifted={self.lifted}>"
        )
