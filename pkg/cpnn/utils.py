import re
from math import prod
from typing import Callable, Optional, Sequence, Tuple, Type, Union

import numpy as np

from .exceptions import DimensionError, ValidationError

Shape = Tuple[int, ...]


def normalize_shape(shape: Union[int, Sequence[int]]) -> Shape:
    """
    Turn a period given as an int or a sequence into a tuple of positive ints.
    >>> normalize_shape(8)
    (8,)
    >>> normalize_shape([4, 6])
    (4, 6)
    """
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)

    normalized: Shape = tuple(int(s) for s in shape)

    if len(normalized) not in (1, 2):
        raise ValidationError(
            f"Only one and two dimensional periods are supported, got {normalized}."
        )

    if any(s < 1 for s in normalized):
        raise ValidationError(f"Periods must be positive, got {normalized}.")

    return normalized


def spatial_axes(dims: int) -> Tuple[int, ...]:
    """
    Trailing axes holding the spatial positions of a channel array.
    >>> spatial_axes(2)
    (-2, -1)
    """
    return tuple(range(-dims, 0))


def window_indices(width: int, period: int) -> np.ndarray:
    """
    Positions, modulo the period, of the taps -l, ..., -l + w - 1 where l = (w - 1) // 2.
    >>> window_indices(3, 8).tolist()
    [7, 0, 1]
    >>> window_indices(4, 4).tolist()
    [3, 0, 1, 2]
    """
    half_width = (width - 1) // 2
    return np.arange(-half_width, -half_width + width) % period


def scatter_window(taps: np.ndarray, shape: Shape) -> np.ndarray:
    """
    Embed windowed taps into full periodic kernels, zero outside of the window.
    >>> scatter_window(np.array([1.0, 2.0, 3.0]), (5,)).tolist()
    [2.0, 3.0, 0.0, 0.0, 1.0]
    """
    dims = len(shape)
    widths = taps.shape[-dims:]
    index = np.ix_(*[window_indices(w, p) for w, p in zip(widths, shape)])

    out = np.zeros(taps.shape[:-dims] + tuple(shape), dtype=taps.dtype)
    out[(Ellipsis,) + index] = taps

    return out


def gather_window(kernel: np.ndarray, widths: Sequence[int]) -> np.ndarray:
    """
    Read the taps -l, ..., -l + w - 1 out of full periodic kernels.
    >>> gather_window(np.array([2.0, 3.0, 0.0, 0.0, 1.0]), (3,)).tolist()
    [1.0, 2.0, 3.0]
    """
    dims = len(widths)
    shape = kernel.shape[-dims:]
    index = np.ix_(*[window_indices(w, p) for w, p in zip(widths, shape)])

    return kernel[(Ellipsis,) + index]


def reverse_periodic(kernel: np.ndarray, dims: int) -> np.ndarray:
    """
    Map c(k) to c(-k) on the trailing periodic axes.
    >>> reverse_periodic(np.array([0.0, 1.0, 2.0, 3.0]), 1).tolist()
    [0.0, 3.0, 2.0, 1.0]
    """
    axes = spatial_axes(dims)
    return np.roll(np.flip(kernel, axis=axes), 1, axis=axes)


def conj_transpose(blocks: np.ndarray) -> np.ndarray:
    """Hermitian transpose over the two trailing axes of a stack of matrices."""
    return np.conj(np.swapaxes(blocks, -1, -2))


def as_channels(
    x: Union[np.ndarray, Sequence[float]], channels: int, shape: Shape
) -> Tuple[np.ndarray, bool]:
    """
    Bring a signal into the structured layout (..., channels, *shape).
    The second item tells whether the input was flat, so the caller can restore it.
    >>> y, flat = as_channels(np.arange(6.0), 2, (3,))
    >>> y.shape, flat
    ((2, 3), True)
    """
    arr = np.asarray(x, dtype=float)
    structured = (channels,) + tuple(shape)
    k = len(structured)

    if arr.ndim >= k and arr.shape[-k:] == structured:
        return arr, False

    size = channels * prod(shape)

    if arr.ndim >= 1 and arr.shape[-1] == size:
        return arr.reshape(arr.shape[:-1] + structured), True

    raise DimensionError(
        f"Expected a signal of {channels} channel(s) over a period of {tuple(shape)} "
        f"(or a flat length of {size}), got shape {arr.shape}."
    )


def restore_layout(y: np.ndarray, flat: bool, dims: int) -> np.ndarray:
    """Undo as_channels for an output carrying (..., channels, *shape)."""
    if not flat:
        return y
    return y.reshape(y.shape[: -(dims + 1)] + (-1,))


def power_norm(
    matvec: Callable[[np.ndarray], np.ndarray],
    rmatvec: Callable[[np.ndarray], np.ndarray],
    dim: int,
    iterations: int = 8,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Estimate the spectral norm of a linear map through power iteration on A^T A.
    >>> round(power_norm(lambda v: 3.0 * v, lambda v: 3.0 * v, 4), 6)
    3.0
    """
    if rng is None:
        rng = np.random.Generator(np.random.Philox(0))

    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    estimate = 0.0

    for _ in range(iterations):
        w = rmatvec(matvec(v))
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        estimate = float(np.sqrt(norm))

    return estimate


def class_to_kind(type_: Type) -> str:
    """
    Translate an activation class name into its serialized kind.
    >>> class SoftThreshold: pass
    >>> class_to_kind(SoftThreshold)
    'soft_threshold'
    """
    return re.sub(r"(?<!^)(?=[A-Z])", "_", type_.__name__).lower()
