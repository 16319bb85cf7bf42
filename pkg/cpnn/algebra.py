"""
Block-circulant algebra: applying banks of periodic filters, their adjoints, dense oracles,
per-frequency blocks, orthogonality residuals and the polar decomposition.

Circulant matrices follow the convolution convention (C f)_j = Σ_k a_k f_{j−k}, that is
C[p, q] = a_{p−q mod m}. Products of such matrices are diagonalized by numpy.fft.
"""
import itertools
import logging
from math import prod
from typing import Sequence, Tuple, Union

import numpy as np

from .exceptions import (
    AmbiguousProjectionError,
    DimensionError,
    NonConvergenceError,
    PreconditionError,
    SingularInputError,
    ValidationError,
)
from .structures import Filter, FilterBank, SpectralBlocks
from .utils import (
    as_channels,
    conj_transpose,
    gather_window,
    normalize_shape,
    power_norm,
    restore_layout,
    reverse_periodic,
    spatial_axes,
)

logger = logging.getLogger(__name__)

#: Dense oracles refuse to build matrices holding more entries than this.
DENSE_LIMIT: int = 4_000_000

APPLY_METHODS = ("spectral", "direct")


def circ_apply(a: Filter, f: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    """
    Periodic convolution of f by the filter a, (a ∗ f)_j = Σ_k a_k f_{j−k}.
    >>> f = [1.0, 2.0, 3.0, 4.0]
    >>> np.round(circ_apply(Filter([0.0, 0.0, 1.0], 4), f), 10).tolist()
    [4.0, 1.0, 2.0, 3.0]
    """
    arr = np.asarray(f, dtype=float)

    if arr.ndim != 1 or arr.size != a.period:
        raise DimensionError(
            f"Signal of shape {arr.shape} does not match the filter period {a.period}."
        )

    bank = FilterBank(a.taps.reshape(1, 1, -1), a.period)
    return bcirc_apply(bank, arr)


def toeplitz_apply(a: Filter, f: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    """
    Convolution of f by a with zero boundary, truncated to the length of f.
    >>> toeplitz_apply(Filter([0.0, 0.0, 1.0], 4), [1.0, 2.0, 3.0, 4.0]).tolist()
    [0.0, 1.0, 2.0, 3.0]
    """
    arr = np.asarray(f, dtype=float)

    if arr.ndim != 1 or arr.size != a.period:
        raise DimensionError(
            f"Signal of shape {arr.shape} does not match the filter period {a.period}."
        )

    return np.convolve(arr, a.taps)[a.half_width : a.half_width + arr.size]


def _check_method(method: str) -> None:
    if method not in APPLY_METHODS:
        raise ValidationError(
            f"Unknown apply method '{method}', expected one of {APPLY_METHODS}."
        )


def _direct_subscripts(dims: int, transpose: bool) -> str:
    space = "pq"[:dims]
    if transpose:
        return f"jk,...j{space}->...k{space}"
    return f"jk,...k{space}->...j{space}"


def _direct(T: FilterBank, x: np.ndarray, transpose: bool) -> np.ndarray:
    axes = spatial_axes(T.dims)
    channels = T.cols if transpose else T.rows
    out = np.zeros(x.shape[: -(T.dims + 1)] + (channels,) + T.shape)
    subscripts = _direct_subscripts(T.dims, transpose)

    for offset in itertools.product(*[range(w) for w in T.widths]):
        shift = tuple(o - (w - 1) // 2 for o, w in zip(offset, T.widths))
        taps = T.taps[(slice(None), slice(None)) + offset]

        if not np.any(taps):
            continue

        if transpose:
            rolled = np.roll(x, tuple(-s for s in shift), axis=axes)
        else:
            rolled = np.roll(x, shift, axis=axes)

        out += np.einsum(subscripts, taps, rolled)

    return out


def bcirc_apply(
    T: FilterBank, x: Union[np.ndarray, Sequence[float]], method: str = "spectral"
) -> np.ndarray:
    """
    Multiply by the block-circulant matrix of T without materializing it.

    x is either flat, of length m₂·M, or structured as (..., m₂, *shape) where leading axes
    are a batch. The output keeps the layout of the input.

    >>> T = FilterBank([[[0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0]]], 4)
    >>> bcirc_apply(T, [1.0, 2.0, 3.0, 4.0], method="direct").tolist()
    [1.0, 2.0, 3.0, 4.0, 4.0, 1.0, 2.0, 3.0]
    """
    _check_method(method)
    signal, flat = as_channels(x, T.cols, T.shape)

    if method == "spectral":
        out = _spectral_apply(T, signal, transpose=False)
    else:
        out = _direct(T, signal, transpose=False)

    return restore_layout(out, flat, T.dims)


def bcirc_apply_adjoint(
    T: FilterBank, y: Union[np.ndarray, Sequence[float]], method: str = "spectral"
) -> np.ndarray:
    """
    Multiply by the transposed block-circulant matrix of T.
    >>> T = FilterBank([[[0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0]]], 4)
    >>> y = [1.0, 2.0, 3.0, 4.0, 4.0, 1.0, 2.0, 3.0]
    >>> bcirc_apply_adjoint(T, y, method="direct").tolist()
    [2.0, 4.0, 6.0, 8.0]
    """
    _check_method(method)
    signal, flat = as_channels(y, T.rows, T.shape)

    if method == "spectral":
        out = _spectral_apply(T, signal, transpose=True)
    else:
        out = _direct(T, signal, transpose=True)

    return restore_layout(out, flat, T.dims)


def _spectral_apply(T: FilterBank, x: np.ndarray, transpose: bool) -> np.ndarray:
    axes = spatial_axes(T.dims)
    kernel = T.rspectrum()
    signal = np.fft.rfftn(x, axes=axes)

    lead = signal.shape[: -(T.dims + 1)]
    frequencies = signal.shape[-T.dims :]
    channels_in = signal.shape[-(T.dims + 1)]

    stacked = signal.reshape((-1, channels_in, prod(frequencies)))
    blocks = kernel.reshape(T.rows, T.cols, -1)

    if transpose:
        out = np.einsum("jkf,bjf->bkf", np.conj(blocks), stacked)
        channels_out = T.cols
    else:
        out = np.einsum("jkf,bkf->bjf", blocks, stacked)
        channels_out = T.rows

    out = out.reshape(lead + (channels_out,) + frequencies)
    return np.fft.irfftn(out, s=T.shape, axes=axes)


def bank_correlation(
    left: np.ndarray, right: np.ndarray, like: FilterBank
) -> np.ndarray:
    """
    Gradient with respect to the taps of ``like`` of the bilinear form Σ ⟨left, T right⟩,
    summed over batch axes. left carries (..., m₁, *shape), right (..., m₂, *shape).
    Entry (j, k, u) equals Σ_p left_j(p) right_k(p − u).
    """
    axes = spatial_axes(like.dims)
    lhs = np.fft.rfftn(left, axes=axes)
    rhs = np.fft.rfftn(right, axes=axes)

    channels_left = lhs.shape[-(like.dims + 1)]
    channels_right = rhs.shape[-(like.dims + 1)]
    frequencies = lhs.shape[-like.dims :]

    lhs = lhs.reshape((-1, channels_left, prod(frequencies)))
    rhs = rhs.reshape((-1, channels_right, prod(frequencies)))

    spectrum = np.einsum("bjf,bkf->jkf", lhs, np.conj(rhs))
    spectrum = spectrum.reshape((channels_left, channels_right) + frequencies)

    kernel = np.fft.irfftn(spectrum, s=like.shape, axes=axes)
    return gather_window(kernel, like.widths)


def materialize(T: FilterBank) -> np.ndarray:
    """
    Dense matrix of T, used as an oracle. Refuses matrices larger than DENSE_LIMIT entries.
    >>> materialize(FilterBank([[[0.0, 0.0, 1.0]]], 3)).tolist()
    [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    """
    if T.n * T.d > DENSE_LIMIT:
        raise ValidationError(
            f"Refusing to materialize a {T.n}×{T.d} matrix, the limit is {DENSE_LIMIT} entries."
        )

    shape = np.array(T.shape).reshape(-1, 1, 1)
    positions = np.indices(T.shape).reshape(T.dims, T.size)
    offsets = (positions[:, :, None] - positions[:, None, :]) % shape

    blocks = T.kernel()[(slice(None), slice(None)) + tuple(offsets)]
    return blocks.transpose(0, 2, 1, 3).reshape(T.n, T.d)


def toeplitz_materialize(T: FilterBank) -> np.ndarray:
    """
    Dense matrix of the zero-boundary counterpart of a 1D bank (no wrap around).
    >>> toeplitz_materialize(FilterBank([[[0.0, 0.0, 1.0]]], 3)).tolist()
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    """
    if T.dims != 1:
        raise DimensionError("Toeplitz oracles are only provided for 1D banks.")

    if T.n * T.d > DENSE_LIMIT:
        raise ValidationError(
            f"Refusing to materialize a {T.n}×{T.d} matrix, the limit is {DENSE_LIMIT} entries."
        )

    m = T.size
    offsets = np.arange(m)[:, None] - np.arange(m)[None, :]
    lo = -T.half_width
    inside = (offsets >= lo) & (offsets < lo + T.width)

    blocks = np.where(inside, T.taps[:, :, np.clip(offsets - lo, 0, T.width - 1)], 0.0)
    return blocks.transpose(0, 2, 1, 3).reshape(T.n, T.d)


def bank_from_dense(
    dense: np.ndarray, rows: int, cols: int, shape: Union[int, Sequence[int]]
) -> FilterBank:
    """
    Full-length bank read off the first column of every block of a dense matrix.
    Exact for matrices inside the algebra, see off_algebra_energy otherwise.
    """
    period = normalize_shape(shape)
    size = prod(period)

    if dense.shape != (rows * size, cols * size):
        raise DimensionError(
            f"A {rows}×{cols} grid over {period} needs a {rows * size}×{cols * size} "
            f"matrix, got {dense.shape}."
        )

    blocks = dense.reshape(rows, size, cols, size)[:, :, :, 0]
    kernel = blocks.transpose(0, 2, 1).reshape((rows, cols) + period)

    return FilterBank.full_length(kernel)


def off_algebra_energy(
    dense: np.ndarray, rows: int, cols: int, shape: Union[int, Sequence[int]]
) -> float:
    """Frobenius distance between a dense matrix and the bank read off its first columns."""
    return float(
        np.linalg.norm(dense - materialize(bank_from_dense(dense, rows, cols, shape)))
    )


def spectral(T: FilterBank) -> SpectralBlocks:
    """Per-frequency m₁×m₂ blocks of T."""
    blocks = np.moveaxis(np.asarray(T.spectrum()), (0, 1), (-2, -1))
    return SpectralBlocks(blocks)


def spectral_inverse(S: SpectralBlocks, tol: float = 1e-10) -> FilterBank:
    """
    Full-length bank from per-frequency blocks. The blocks must be conjugate symmetric,
    Λ(−f) = conj(Λ(f)), otherwise the filters would not be real.
    """
    dims = len(S.shape)
    blocks = np.moveaxis(S.blocks, (-2, -1), (0, 1))
    mirrored = np.conj(reverse_periodic(blocks, dims))
    scale = max(1.0, float(np.max(np.abs(blocks))) if blocks.size else 1.0)

    if np.max(np.abs(blocks - mirrored)) > tol * scale:
        raise ValidationError(
            "Spectral blocks are not conjugate symmetric, the filters would be complex."
        )

    kernel = np.fft.ifftn(blocks, axes=spatial_axes(dims)).real
    return FilterBank.full_length(kernel)


def _frequency_blocks(T: FilterBank) -> np.ndarray:
    """(F, rows, cols) stack of the per-frequency blocks."""
    return np.moveaxis(np.asarray(T.spectrum()).reshape(T.rows, T.cols, -1), -1, 0)


def _bank_gradient(blocks: np.ndarray, like: FilterBank) -> np.ndarray:
    """Tap gradient of a function whose matrix gradient is block circulant with given blocks."""
    spectrum = np.moveaxis(blocks, 0, -1).reshape((like.rows, like.cols) + like.shape)
    kernel = np.fft.ifftn(spectrum, axes=spatial_axes(like.dims)).real
    return like.size * gather_window(kernel, like.widths)


def gram_residual(T: FilterBank) -> float:
    """
    ‖T′ᵀT′ − I‖_F without materializing T, where T′ is T when m₁ ≥ m₂ and Tᵀ otherwise.
    >>> gram_residual(FilterBank([[[0.0, 1.0, 0.0]]], 4))
    0.0
    """
    blocks = _frequency_blocks(T.oriented())
    gram = conj_transpose(blocks) @ blocks
    return float(np.sqrt(np.sum(np.abs(gram - np.eye(gram.shape[-1])) ** 2)))


def gram_penalty(T: FilterBank) -> float:
    """Squared gram residual."""
    return gram_residual(T) ** 2


def gram_penalty_gradient(T: FilterBank) -> np.ndarray:
    """
    Gradient of gram_penalty with respect to the taps of T, in the orientation of T.
    """
    blocks = _frequency_blocks(T)
    adjoint = conj_transpose(blocks)

    if T.rows >= T.cols:
        gradient = 4.0 * blocks @ (adjoint @ blocks - np.eye(T.cols))
    else:
        gradient = 4.0 * (blocks @ adjoint - np.eye(T.rows)) @ blocks

    return _bank_gradient(gradient, T)


def gram_penalty_hvp(T: FilterBank, V: FilterBank) -> np.ndarray:
    """
    Hessian of gram_penalty at T applied to the tap direction V, in tap coordinates.
    """
    if V.taps.shape != T.taps.shape or V.shape != T.shape:
        raise DimensionError("The direction must share the geometry of the bank.")

    K = _frequency_blocks(T)
    D = _frequency_blocks(V)
    K_h = conj_transpose(K)
    D_h = conj_transpose(D)

    if T.rows >= T.cols:
        identity = np.eye(T.cols)
        product = 4.0 * (D @ (K_h @ K - identity) + K @ (D_h @ K + K_h @ D))
    else:
        identity = np.eye(T.rows)
        product = 4.0 * ((D @ K_h + K @ D_h) @ K + (K @ K_h - identity) @ D)

    return _bank_gradient(product, T)


def filter_correlations(T: FilterBank) -> np.ndarray:
    """
    Correlation sums α^{(s₁,s₂)}_u = Σ_t Σ_k a^{(t,s₁)}_k a^{(t,s₂)}_{k+u} of the oriented
    bank, shape (m₂′, m₂′, *shape), periodic in u.
    """
    oriented = T.oriented()
    spectrum = np.asarray(oriented.spectrum())
    gram = np.einsum("ts...,tr...->sr...", np.conj(spectrum), spectrum)
    return np.fft.ifftn(gram, axes=spatial_axes(T.dims)).real


def filter_orthogonality_residual(T: FilterBank) -> float:
    """
    Root-sum-square of the deviations of α^{(s₁,s₂)}_u from δ_{s₁,s₂}δ_{u,0}, over the
    non-negative half of the lags 0..2l. For images the half plane u₁ > 0 or (u₁ = 0, u₂ ≥ 0).

    The lags have to fit in one period, every period must satisfy m ≥ 4l + 1.

    >>> round(filter_orthogonality_residual(FilterBank([[[0.0, 0.6, 0.8]]], 8)), 12)
    0.48
    """
    oriented = T.oriented()
    reach = oriented.width - 1

    if any(p < 2 * w - 1 for p, w in zip(oriented.shape, oriented.widths)):
        raise PreconditionError(
            f"Correlation lags up to ±{reach} do not fit in the period {T.shape}, "
            f"which must be at least 4l + 1."
        )

    alpha = filter_correlations(T)
    channels = alpha.shape[0]
    deviation = alpha.copy()
    deviation[(slice(None), slice(None)) + (0,) * T.dims] -= np.eye(channels)

    if T.dims == 1:
        lags = deviation[:, :, : oriented.widths[0]]
        return float(np.sqrt(np.sum(lags**2)))

    reach_1, reach_2 = (w - 1 for w in oriented.widths)
    total = 0.0

    for u1 in range(0, reach_1 + 1):
        for u2 in range(-reach_2, reach_2 + 1):
            if u1 == 0 and u2 < 0:
                continue
            total += float(np.sum(deviation[:, :, u1, u2 % T.shape[1]] ** 2))

    return float(np.sqrt(total))


def polar_decompose(
    X: np.ndarray,
    method: str = "newton_schulz",
    max_iters: int = 100,
    tol: float = 1e-12,
) -> Tuple[np.ndarray, int]:
    """
    Orthogonal polar factor U of X = U S, for X with full column rank.

    newton_schulz works for any tall X, higham for square X only.

    >>> U, iterations = polar_decompose(np.diag([2.0, 0.5]))
    >>> np.round(U, 10).tolist()
    [[1.0, 0.0], [0.0, 1.0]]
    """
    if method not in ("newton_schulz", "higham"):
        raise ValidationError(
            f"Unknown polar method '{method}', expected newton_schulz or higham."
        )

    X = np.asarray(X, dtype=float)

    if X.ndim != 2 or X.shape[0] < X.shape[1]:
        raise DimensionError(
            f"The polar factor is computed for tall matrices, got shape {X.shape}."
        )

    if not np.all(np.isfinite(X)):
        raise ValidationError("Matrix entries must be finite.")

    singular_values = np.linalg.svd(X, compute_uv=False)

    if singular_values[0] == 0.0 or singular_values[-1] <= 1e-12 * singular_values[0]:
        raise SingularInputError(
            "Matrix lacks full column rank, its polar factor is not unique."
        )

    identity = np.eye(X.shape[1])

    if np.linalg.norm(X.T @ X - identity) <= tol:
        return X.copy(), 1

    if method == "higham":
        if X.shape[0] != X.shape[1]:
            raise DimensionError("The Higham iteration requires a square matrix.")
        W = X.copy()
    else:
        scale = power_norm(lambda v: X @ v, lambda w: X.T @ w, X.shape[1])
        W = X / scale

    for iteration in range(1, max_iters + 1):
        if method == "higham":
            updated = 0.5 * (W + np.linalg.inv(W).T)
        else:
            updated = 0.5 * W @ (3.0 * identity - W.T @ W)

        if not np.all(np.isfinite(updated)):
            raise NonConvergenceError(
                f"Polar iteration ({method}) diverged after {iteration} steps."
            )

        step = np.linalg.norm(updated - W)
        W = updated

        if step <= tol * np.linalg.norm(W):
            logger.debug(
                "Polar iteration (%s) converged in %d steps.", method, iteration
            )
            return W, iteration

    raise NonConvergenceError(
        f"Polar iteration ({method}) did not converge within {max_iters} steps."
    )


def unit_filter_project(a: Filter) -> Filter:
    """
    Closest unit filter ±e_k to a, ie. the orthogonal circulant matrix nearest to circ(a).
    When several taps share the largest magnitude every one of them is an exact minimiser;
    the lowest tap index wins.
    >>> unit_filter_project(Filter([0.1, -0.9, 0.3], 8)).taps.tolist()
    [0.0, -1.0, 0.0]
    >>> unit_filter_project(Filter([0.5, 0.5, 0.0], 8)).taps.tolist()
    [1.0, 0.0, 0.0]
    """
    magnitudes = np.abs(a.taps)
    peak = float(np.max(magnitudes))

    if peak == 0.0:
        raise AmbiguousProjectionError(
            "The zero filter is equally close to every unit filter."
        )

    winners = np.flatnonzero(magnitudes == peak)

    if winners.size > 1:
        logger.debug(
            "Taps %s tie for the largest magnitude, keeping %d.",
            (winners - a.half_width).tolist(),
            winners[0] - a.half_width,
        )

    taps = np.zeros(a.width)
    taps[winners[0]] = np.sign(a.taps[winners[0]])

    return Filter(taps, a.period)
