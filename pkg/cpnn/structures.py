from math import prod
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .exceptions import DimensionError, ValidationError
from .utils import (
    Shape,
    gather_window,
    normalize_shape,
    reverse_periodic,
    scatter_window,
    spatial_axes,
)


class Filter:
    """
    A single periodic convolution filter. Taps are stored for the indices -l, ..., -l + w - 1
    where w is either 2l + 1 or, for a full-length filter of even period, 2l + 2.
    >>> a = Filter([0.0, 1.0, 0.0], 8)
    >>> a.half_width, a.width, a.period
    (1, 3, 8)
    >>> a.periodic().tolist()
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    """

    def __init__(self, taps: Union[Sequence[float], np.ndarray], period: int):
        arr = np.array(taps, dtype=float).reshape(-1)

        if arr.size == 0:
            raise ValidationError("A filter needs at least one tap.")

        if arr.size > period:
            raise ValidationError(
                f"Filter of width {arr.size} does not fit in a period of {period}."
            )

        if arr.size % 2 == 0 and arr.size != period:
            raise DimensionError(
                "An even number of taps is reserved for full-length filters."
            )

        if not np.all(np.isfinite(arr)):
            raise ValidationError("Filter taps must be finite.")

        arr.setflags(write=False)

        self._taps: np.ndarray = arr
        self._period: int = int(period)

    @staticmethod
    def delta(
        index: int, period: int, half_width: int = 0, sign: float = 1.0
    ) -> "Filter":
        """
        Unit filter carrying ±1 at a single index.
        >>> Filter.delta(1, 8, half_width=1).taps.tolist()
        [0.0, 0.0, 1.0]
        """
        taps = np.zeros(2 * half_width + 1)
        taps[index + half_width] = sign
        return Filter(taps, period)

    @property
    def taps(self) -> np.ndarray:
        return self._taps

    @property
    def period(self) -> int:
        return self._period

    @property
    def width(self) -> int:
        return self._taps.size

    @property
    def half_width(self) -> int:
        return (self.width - 1) // 2

    @property
    def offsets(self) -> np.ndarray:
        """Index of every stored tap."""
        return np.arange(-self.half_width, -self.half_width + self.width)

    def periodic(self) -> np.ndarray:
        """Full periodic sequence a_0, ..., a_{m-1}."""
        return scatter_window(self._taps, (self._period,))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Filter):
            return NotImplemented
        return self._period == other.period and np.array_equal(
            self.periodic(), other.periodic()
        )

    def __repr__(self) -> str:
        return f"<Filter period={self._period} taps={self._taps.tolist()}>"


class FilterBank:
    """
    A grid of rows × cols periodic filters, one for each block of a block-circulant matrix.
    The period is one dimensional (signals) or two dimensional (images). Taps are held in an
    array of shape (rows, cols, *widths) for the indices -l, ..., -l + w - 1 on every axis,
    with l = (w - 1) // 2. Windows are odd and square, except for full-length filters which
    cover the whole period on every axis.

    >>> T = FilterBank(np.ones((2, 1, 3)), 8)
    >>> T.rows, T.cols, T.half_width, T.size
    (2, 1, 1, 8)
    >>> T.full
    False
    """

    def __init__(
        self,
        taps: Union[Sequence[Any], np.ndarray],
        shape: Union[int, Sequence[int]],
        half_width: Optional[int] = None,
    ):
        self._shape: Shape = normalize_shape(shape)
        dims = len(self._shape)

        arr = np.array(taps, dtype=float)

        if arr.ndim != 2 + dims:
            raise DimensionError(
                f"Taps of a {dims}D bank must have {2 + dims} axes, got shape {arr.shape}."
            )

        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("A filter bank needs at least one row and one column.")

        widths: Shape = tuple(arr.shape[2:])

        if any(w > p for w, p in zip(widths, self._shape)):
            raise ValidationError(
                f"Filters of width {widths} do not fit in the period {self._shape}."
            )

        if widths != self._shape:
            if len(set(widths)) != 1 or widths[0] % 2 == 0:
                raise DimensionError(
                    f"Limited filters need an odd square window, got {widths}."
                )

        if half_width is not None and half_width != (widths[0] - 1) // 2:
            raise DimensionError(
                f"A window of {widths[0]} taps does not match a half width of {half_width}."
            )

        if not np.all(np.isfinite(arr)):
            raise ValidationError("Filter taps must be finite.")

        arr.setflags(write=False)

        self._taps: np.ndarray = arr
        self._widths: Shape = widths
        self._spectrum: Optional[np.ndarray] = None

    @staticmethod
    def full_length(kernel: np.ndarray) -> "FilterBank":
        """
        Build a bank whose filters cover the whole period from kernels of shape (rows, cols, *shape).
        >>> FilterBank.full_length(np.arange(4.0).reshape(1, 1, 4)).taps.tolist()
        [[[3.0, 0.0, 1.0, 2.0]]]
        """
        kernel = np.asarray(kernel, dtype=float)
        return FilterBank(gather_window(kernel, kernel.shape[2:]), kernel.shape[2:])

    @staticmethod
    def from_filters(filters: Sequence[Sequence[Filter]]) -> "FilterBank":
        """
        Assemble a 1D bank from a grid of filters sharing period and width.
        >>> FilterBank.from_filters([[Filter([1.0], 4)], [Filter([2.0], 4)]]).taps.tolist()
        [[[1.0]], [[2.0]]]
        """
        periods = {a.period for row in filters for a in row}
        widths = {a.width for row in filters for a in row}

        if len(periods) != 1 or len(widths) != 1:
            raise DimensionError("Every filter of a bank must share period and width.")

        return FilterBank([[a.taps for a in row] for row in filters], periods.pop())

    @property
    def taps(self) -> np.ndarray:
        return self._taps

    @property
    def shape(self) -> Shape:
        """Period of the signals, (m,) or (d1, d2)."""
        return self._shape

    @property
    def dims(self) -> int:
        return len(self._shape)

    @property
    def size(self) -> int:
        """Number of positions M in one period."""
        return prod(self._shape)

    @property
    def rows(self) -> int:
        return self._taps.shape[0]

    @property
    def cols(self) -> int:
        return self._taps.shape[1]

    @property
    def width(self) -> int:
        """Number of taps along the first axis."""
        return self._widths[0]

    @property
    def widths(self) -> Shape:
        return self._widths

    @property
    def half_width(self) -> int:
        return (self._widths[0] - 1) // 2

    @property
    def full(self) -> bool:
        """True when every filter covers its whole period."""
        return self._widths == self._shape

    @property
    def n(self) -> int:
        """Number of rows of the represented matrix."""
        return self.rows * self.size

    @property
    def d(self) -> int:
        """Number of columns of the represented matrix."""
        return self.cols * self.size

    @property
    def filters(self) -> List[List[Filter]]:
        if self.dims != 1:
            raise DimensionError("Only 1D banks decompose into Filter objects.")
        return [
            [Filter(self._taps[j, k], self._shape[0]) for k in range(self.cols)]
            for j in range(self.rows)
        ]

    def kernel(self) -> np.ndarray:
        """Periodic kernels of shape (rows, cols, *shape), zero outside of the window."""
        return scatter_window(self._taps, self._shape)

    def spectrum(self) -> np.ndarray:
        """DFT of every kernel, shape (rows, cols, *shape). Cached, read-only."""
        if self._spectrum is None:
            spectrum = np.fft.fftn(self.kernel(), axes=spatial_axes(self.dims))
            spectrum.setflags(write=False)
            self._spectrum = spectrum
        return self._spectrum

    def rspectrum(self) -> np.ndarray:
        """Half spectrum of every kernel, as produced by numpy.fft.rfftn."""
        return np.fft.rfftn(self.kernel(), axes=spatial_axes(self.dims))

    def transpose(self) -> "FilterBank":
        """
        Bank of the transposed matrix: block (k, j) carries the reversed filter of block (j, k).
        >>> FilterBank([[[1.0, 2.0, 3.0]]], 8).transpose().taps.tolist()
        [[[3.0, 2.0, 1.0]]]
        """
        kernel = reverse_periodic(np.swapaxes(self.kernel(), 0, 1), self.dims)
        return FilterBank(gather_window(kernel, self._widths), self._shape)

    def oriented(self) -> "FilterBank":
        """The bank itself when rows >= cols, its transpose otherwise."""
        return self if self.rows >= self.cols else self.transpose()

    def with_taps(self, taps: np.ndarray) -> "FilterBank":
        """Same geometry, new taps."""
        if np.shape(taps) != self._taps.shape:
            raise DimensionError(
                f"Expected taps of shape {self._taps.shape}, got {np.shape(taps)}."
            )
        return FilterBank(taps, self._shape)

    def with_period(self, shape: Union[int, Sequence[int]]) -> "FilterBank":
        """
        Same taps on a larger period.
        >>> FilterBank([[[1.0, 2.0, 3.0]]], 8).with_period(16).shape
        (16,)
        >>> FilterBank([[[1.0, 2.0, 3.0, 4.0]]], 4).with_period(8).taps.tolist()
        [[[0.0, 1.0, 2.0, 3.0, 4.0]]]
        """
        target = normalize_shape(shape)

        if len(target) != self.dims:
            raise DimensionError(
                f"Cannot move a {self.dims}D bank onto the period {target}."
            )

        if any(t < p for t, p in zip(target, self._shape)):
            raise ValidationError(
                f"The new period {target} must not be smaller than {self._shape}."
            )

        if target == self._shape or not self.full:
            return FilterBank(self._taps, target)

        # full-length filters become limited ones: grow to the smallest odd square window
        # holding every tap, zeros elsewhere
        width = max(w + 1 - w % 2 for w in self._widths)
        offsets = [(width - 1) // 2 - (w - 1) // 2 for w in self._widths]
        taps = np.zeros(self._taps.shape[:2] + (width,) * self.dims)
        index = tuple(slice(o, o + w) for o, w in zip(offsets, self._widths))
        taps[(slice(None), slice(None)) + index] = self._taps

        return FilterBank(taps, target)

    def allclose(self, other: "FilterBank", atol: float = 1e-12) -> bool:
        """Compare the represented matrices."""
        return (
            self._shape == other.shape
            and self.rows == other.rows
            and self.cols == other.cols
            and bool(np.allclose(self.kernel(), other.kernel(), rtol=0.0, atol=atol))
        )

    def __repr__(self) -> str:
        return (
            f"<FilterBank {self.rows}x{self.cols} period={self._shape} "
            f"widths={self._widths}{' full' if self.full else ''}>"
        )


class SpectralBlocks:
    """
    Per-frequency blocks of a block-circulant matrix, shape (*shape, rows, cols), complex.
    """

    def __init__(self, blocks: np.ndarray):
        arr = np.asarray(blocks, dtype=complex)

        if arr.ndim not in (3, 4):
            raise DimensionError(
                f"Spectral blocks must carry 1 or 2 frequency axes, got shape {arr.shape}."
            )

        self._blocks: np.ndarray = arr

    @property
    def blocks(self) -> np.ndarray:
        return self._blocks

    @property
    def shape(self) -> Shape:
        return tuple(self._blocks.shape[:-2])

    @property
    def rows(self) -> int:
        return self._blocks.shape[-2]

    @property
    def cols(self) -> int:
        return self._blocks.shape[-1]

    @property
    def frequencies(self) -> int:
        return prod(self.shape)

    def __getitem__(self, frequency: Any) -> np.ndarray:
        return self._blocks[frequency]


MatrixLike = Union[np.ndarray, FilterBank]


class StiefelPoint:
    """
    A matrix (dense, or as a filter bank) with orthonormal columns.

    The matrix is kept in its tall orientation. When the caller handed in a wide matrix, the
    transpose is stored and ``transposed`` is set, so ``value`` gives back the original.
    """

    def __init__(
        self,
        matrix: MatrixLike,
        transposed: bool = False,
        meta: Optional[Dict[str, Any]] = None,
        check: bool = True,
        tol: float = 1e-8,
    ):
        if isinstance(matrix, np.ndarray):
            if matrix.ndim != 2:
                raise DimensionError(f"Expected a matrix, got shape {matrix.shape}.")
            if matrix.shape[0] < matrix.shape[1]:
                raise DimensionError(
                    "The stored orientation of a Stiefel point must be tall, "
                    "use StiefelPoint.from_matrix for wide inputs."
                )
        elif isinstance(matrix, FilterBank):
            if matrix.rows < matrix.cols:
                raise DimensionError(
                    "The stored orientation of a Stiefel point must be tall, "
                    "use StiefelPoint.from_matrix for wide inputs."
                )
        else:
            raise TypeError(
                f"Stiefel points wrap ndarray or FilterBank, not {type(matrix)}."
            )

        self._matrix: MatrixLike = matrix
        self._transposed: bool = transposed
        self.meta: Dict[str, Any] = dict(meta or {})

        if check:
            residual = self.residual
            if residual > tol:
                raise ValidationError(
                    f"Matrix is not on the Stiefel manifold, ‖TᵀT − I‖ = {residual:.3e}."
                )

    @staticmethod
    def from_matrix(
        matrix: MatrixLike,
        meta: Optional[Dict[str, Any]] = None,
        check: bool = True,
        tol: float = 1e-8,
    ) -> "StiefelPoint":
        """
        Wrap a matrix of any orientation.
        >>> StiefelPoint.from_matrix(np.eye(2, 3)).transposed
        True
        """
        if isinstance(matrix, FilterBank):
            if matrix.rows < matrix.cols:
                return StiefelPoint(matrix.transpose(), True, meta, check, tol)
            return StiefelPoint(matrix, False, meta, check, tol)

        matrix = np.asarray(matrix, dtype=float)

        if matrix.ndim == 2 and matrix.shape[0] < matrix.shape[1]:
            return StiefelPoint(matrix.T.copy(), True, meta, check, tol)

        return StiefelPoint(matrix, False, meta, check, tol)

    @property
    def matrix(self) -> MatrixLike:
        """The tall orientation."""
        return self._matrix

    @property
    def transposed(self) -> bool:
        return self._transposed

    @property
    def structured(self) -> bool:
        return isinstance(self._matrix, FilterBank)

    @property
    def value(self) -> MatrixLike:
        """The matrix in the orientation the caller handed in."""
        if not self._transposed:
            return self._matrix
        if isinstance(self._matrix, FilterBank):
            return self._matrix.transpose()
        return self._matrix.T

    @property
    def residual(self) -> float:
        """‖TᵀT − I‖_F of the tall orientation."""
        if isinstance(self._matrix, FilterBank):
            from .algebra import gram_residual

            return gram_residual(self._matrix)

        gram = self._matrix.T @ self._matrix
        return float(np.linalg.norm(gram - np.eye(gram.shape[0])))

    def __repr__(self) -> str:
        kind = repr(self._matrix) if self.structured else f"matrix{self._matrix.shape}"
        return f"<StiefelPoint {kind}{' transposed' if self._transposed else ''}>"


class PositiveScalar(float):
    """
    A strictly positive float, remembering whether the update producing it got clamped.
    >>> PositiveScalar(0.5)
    0.5
    >>> PositiveScalar(0.5, clamped=True).clamped
    True
    """

    clamped: bool

    def __new__(cls, value: float, clamped: bool = False) -> "PositiveScalar":
        if not np.isfinite(value) or value <= 0.0:
            raise ValidationError(f"Expected a positive finite scalar, got {value}.")
        instance = super().__new__(cls, value)
        instance.clamped = clamped
        return instance
