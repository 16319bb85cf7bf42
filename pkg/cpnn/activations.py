"""
Stable activation functions, ie. proximal maps of proper convex functions. Every one of them
satisfies σ(0) = 0 and is firmly non-expansive. Kinks follow the lower semi-continuous choice:
relu′(0) = 0, soft_threshold′(±α) = 0, salu′(±α) = 0 and prelu′(0) = α.
"""
from typing import Dict, List, Optional, Tuple, Type, Union

import numpy as np

from .exceptions import ValidationError
from .utils import class_to_kind

ArrayLike = Union[np.ndarray, List[float], float]


class Activation:
    """
    Base of every stable activation. Should NOT be instantiated.
    Subclasses expose σ, its derivative in x and its derivative in α.
    """

    #: Whether the activation carries a trainable α.
    parameterized: bool = False
    #: Admissible interval for α, bounds included when finite.
    alpha_bounds: Tuple[float, float] = (0.0, np.inf)
    default_alpha: Optional[float] = None

    def __init__(self, alpha: Optional[float] = None):
        """
        :param alpha: Parameter of the activation, ignored for parameter free kinds.
        """
        if self.__class__ == Activation:
            raise NotImplementedError(
                "Activation can not be instantiated, pick one of its subclasses."
            )

        if not self.parameterized:
            self._alpha: Optional[float] = None
            return

        value = float(self.default_alpha if alpha is None else alpha)
        lower, upper = self.alpha_bounds

        if not np.isfinite(value) or value <= 0.0 or value < lower or value > upper:
            raise ValidationError(
                f"{self.kind} requires α in ({lower}, {upper}], got {value}."
            )

        self._alpha = value

    @property
    def kind(self) -> str:
        return class_to_kind(self.__class__)

    @property
    def alpha(self) -> Optional[float]:
        return self._alpha

    def with_alpha(self, alpha: Optional[float]) -> "Activation":
        """Same kind, new parameter."""
        return self.__class__(alpha)

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return self.apply(np.asarray(x, dtype=float))

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError  # pragma: no cover

    def derivative(self, x: ArrayLike) -> np.ndarray:
        raise NotImplementedError  # pragma: no cover

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        """∂σ/∂α, zero for parameter free kinds."""
        return np.zeros_like(np.asarray(x, dtype=float))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Activation):
            return NotImplemented
        return self.kind == other.kind and self._alpha == other.alpha

    def __repr__(self) -> str:
        if self.parameterized:
            return f"<Activation {self.kind} α={self._alpha!r}>"
        return f"<Activation {self.kind}>"


class Linear(Activation):
    """
    The identity.
    >>> Linear()([-1.0, 2.0]).tolist()
    [-1.0, 2.0]
    """

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x.copy()

    def derivative(self, x: ArrayLike) -> np.ndarray:
        return np.ones_like(np.asarray(x, dtype=float))


class Relu(Activation):
    """
    >>> Relu()([-1.0, 0.0, 2.0]).tolist()
    [0.0, 0.0, 2.0]
    >>> Relu().derivative([0.0]).tolist()
    [0.0]
    """

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        return (np.asarray(x, dtype=float) > 0.0).astype(float)


class Prelu(Activation):
    """
    x for x > 0 and αx otherwise, with α in (0, 1].
    >>> Prelu(0.5)([-2.0, 3.0]).tolist()
    [-1.0, 3.0]
    """

    parameterized = True
    alpha_bounds = (0.0, 1.0)
    default_alpha = 0.25

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.where(x > 0.0, x, self._alpha * x)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        return np.where(np.asarray(x, dtype=float) > 0.0, 1.0, self._alpha)

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(x > 0.0, 0.0, x)


class Salu(Activation):
    """
    Saturated linear unit, x clipped to [−α, α].
    >>> Salu(1.0)([-3.0, 0.5, 3.0]).tolist()
    [-1.0, 0.5, 1.0]
    """

    parameterized = True
    default_alpha = 1.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, -self._alpha, self._alpha)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        return (np.abs(np.asarray(x, dtype=float)) < self._alpha).astype(float)

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) > self._alpha, np.sign(x), 0.0)


class BentIdentity(Activation):
    """
    (x + √(x² + α²) − α) / 2, the bent identity shifted to vanish at the origin.
    >>> BentIdentity(1.0)([0.0]).tolist()
    [0.0]
    """

    parameterized = True
    default_alpha = 1.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * (x + np.sqrt(x**2 + self._alpha**2) - self._alpha)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * (1.0 + x / np.sqrt(x**2 + self._alpha**2))

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * (self._alpha / np.sqrt(x**2 + self._alpha**2) - 1.0)


class SoftThreshold(Activation):
    """
    >>> SoftThreshold(0.5)([1.0, 0.3, -2.0]).tolist()
    [0.5, 0.0, -1.5]
    """

    parameterized = True
    default_alpha = 0.1

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.sign(x) * np.maximum(np.abs(x) - self._alpha, 0.0)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        return (np.abs(np.asarray(x, dtype=float)) > self._alpha).astype(float)

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) > self._alpha, -np.sign(x), 0.0)


class Elliot(Activation):
    """
    x / (|αx| + 1).
    >>> Elliot(1.0)([1.0, -3.0]).tolist()
    [0.5, -0.75]
    """

    parameterized = True
    default_alpha = 1.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x / (np.abs(self._alpha * x) + 1.0)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 1.0 / (np.abs(self._alpha * x) + 1.0) ** 2

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -x * np.abs(x) / (self._alpha * np.abs(x) + 1.0) ** 2


class Isru(Activation):
    """
    Inverse square root unit, x / √((αx)² + 1).
    >>> round(float(Isru(1.0)([1.0])[0]) ** 2, 12)
    0.5
    """

    parameterized = True
    default_alpha = 1.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x / np.sqrt((self._alpha * x) ** 2 + 1.0)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ((self._alpha * x) ** 2 + 1.0) ** -1.5

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -self._alpha * x**3 * ((self._alpha * x) ** 2 + 1.0) ** -1.5


class Isrlu(Activation):
    """
    Inverse square root linear unit, identity on the non-negative half line.
    >>> Isrlu(1.0)([2.0]).tolist()
    [2.0]
    """

    parameterized = True
    default_alpha = 1.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        negative = np.minimum(x, 0.0)
        return np.where(
            x >= 0.0, x, negative / np.sqrt((self._alpha * negative) ** 2 + 1.0)
        )

    def derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        negative = np.minimum(x, 0.0)
        return np.where(x >= 0.0, 1.0, ((self._alpha * negative) ** 2 + 1.0) ** -1.5)

    def alpha_derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        negative = np.minimum(x, 0.0)
        scaled = (self._alpha * negative) ** 2 + 1.0
        return -self._alpha * negative**3 * scaled**-1.5


def _registry() -> Dict[str, Type[Activation]]:
    return {class_to_kind(cls): cls for cls in Activation.__subclasses__()}


ACTIVATION_KINDS: Tuple[str, ...] = tuple(sorted(_registry()))


def activation_from_kind(kind: str, alpha: Optional[float] = None) -> Activation:
    """
    Instantiate an activation from its serialized kind.
    >>> activation_from_kind("soft_threshold", 0.5)
    <Activation soft_threshold α=0.5>
    >>> activation_from_kind("relu")
    <Activation relu>
    """
    registry = _registry()

    if kind not in registry:
        raise ValidationError(
            f"Unknown activation '{kind}', expected one of {sorted(registry)}."
        )

    return registry[kind](alpha)


def activate(activation: Activation, x: ArrayLike) -> np.ndarray:
    """Apply σ_α elementwise."""
    return activation(x)


def activate_deriv(
    activation: Activation, x: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Elementwise ∂σ/∂x and ∂σ/∂α.
    >>> d, d_alpha = activate_deriv(Prelu(0.25), [0.0, -2.0])
    >>> d.tolist(), d_alpha.tolist()
    ([0.25, 0.25], [0.0, -2.0])
    """
    return activation.derivative(x), activation.alpha_derivative(x)
