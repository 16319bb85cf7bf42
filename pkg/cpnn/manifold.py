"""
Stiefel manifold operations, for dense matrices and for banks inside the block-circulant
algebra, plus the positive half line used by activation parameters.
"""
import logging
import warnings
from typing import Any, Dict, Optional, Union

import numpy as np

from .algebra import bank_from_dense, materialize, off_algebra_energy, polar_decompose
from .exceptions import DimensionError, SingularInputError, ValidationError
from .structures import FilterBank, MatrixLike, PositiveScalar, StiefelPoint
from .utils import conj_transpose

logger = logging.getLogger(__name__)

RETRACTION_SOLVERS = ("dense", "spectral", "fixed_point")

#: Largest exponent accepted by positive_retract before clamping.
EXP_CLAMP: float = 700.0

#: Condition number above which the dense Cayley solve warns.
CONDITION_WARNING: float = 1e12

FIXED_POINT_ITERS: int = 30
FIXED_POINT_TOL: float = 1e-12

PointLike = Union[StiefelPoint, MatrixLike]


def _as_point(T: PointLike) -> StiefelPoint:
    if isinstance(T, StiefelPoint):
        return T
    return StiefelPoint.from_matrix(T)


def _orient(point: StiefelPoint, X: MatrixLike) -> MatrixLike:
    """Bring a direction given in the caller's orientation onto the stored tall one."""
    if isinstance(X, FilterBank):
        if not point.structured:
            raise TypeError("A bank direction needs a bank base point.")
        oriented = X.transpose() if point.transposed else X
        base = point.matrix
        geometry = (base.rows, base.cols, base.shape)
        if (oriented.rows, oriented.cols, oriented.shape) != geometry:
            raise DimensionError(
                f"Direction {X!r} does not share the geometry of the base point."
            )
        return oriented

    X = np.asarray(X, dtype=float)
    oriented = X.T if point.transposed else X
    base = point.matrix

    if isinstance(base, FilterBank):
        if oriented.shape != (base.n, base.d):
            raise DimensionError(
                f"Direction of shape {X.shape} does not match the base point."
            )
        return oriented

    if oriented.shape != base.shape:
        raise DimensionError(
            f"Direction of shape {X.shape} does not match the base point {base.shape}."
        )

    return oriented


def _restore(point: StiefelPoint, Z: MatrixLike) -> MatrixLike:
    if not point.transposed:
        return Z
    if isinstance(Z, FilterBank):
        return Z.transpose()
    return Z.T


def _blocks(bank: FilterBank) -> np.ndarray:
    return np.moveaxis(np.asarray(bank.spectrum()), (0, 1), (-2, -1))


def _bank(blocks: np.ndarray) -> FilterBank:
    dims = blocks.ndim - 2
    spectrum = np.moveaxis(blocks, (-2, -1), (0, 1))
    kernel = np.fft.ifftn(spectrum, axes=tuple(range(-dims, 0))).real
    return FilterBank.full_length(kernel)


def tangent_project(T: PointLike, X: MatrixLike) -> MatrixLike:
    """
    Orthogonal projection of X onto the tangent space at T,
    (I − TTᵀ)X + ½T(TᵀX − XᵀT).

    Banks stay banks: the projection is evaluated per frequency.

    >>> T = np.eye(3, 2)
    >>> np.round(tangent_project(T, np.ones((3, 2))), 12).tolist()
    [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]
    """
    point = _as_point(T)
    direction = _orient(point, X)
    base = point.matrix

    if isinstance(base, FilterBank):
        if not isinstance(direction, FilterBank):
            return _restore(point, _dense_tangent(materialize(base), direction))

        K = _blocks(base)
        D = _blocks(direction)
        K_h = conj_transpose(K)
        D_h = conj_transpose(D)
        Z = D - K @ (K_h @ D) + 0.5 * K @ (K_h @ D - D_h @ K)
        return _restore(point, _bank(Z))

    return _restore(point, _dense_tangent(base, np.asarray(direction)))


def _dense_tangent(T: np.ndarray, X: np.ndarray) -> np.ndarray:
    return X - T @ (T.T @ X) + 0.5 * T @ (T.T @ X - X.T @ T)


def cayley_W(T: PointLike, X: MatrixLike) -> MatrixLike:
    """
    Skew-symmetric generator W = Ŵ − Ŵᵀ with Ŵ = XTᵀ − ½T(TᵀXTᵀ), both taken in the tall
    orientation of T. For banks the result is a square bank of the tall row count.

    W T equals the tangent projection of X at T.
    """
    point = _as_point(T)
    direction = _orient(point, X)
    base = point.matrix

    if isinstance(base, FilterBank) and isinstance(direction, FilterBank):
        return _bank(_spectral_W(_blocks(base), _blocks(direction)))

    if isinstance(base, FilterBank):
        base = materialize(base)

    return _dense_W(base, np.asarray(direction))


def _dense_W(T: np.ndarray, X: np.ndarray) -> np.ndarray:
    W_hat = X @ T.T - 0.5 * T @ (T.T @ X @ T.T)
    return W_hat - W_hat.T


def _spectral_W(K: np.ndarray, D: np.ndarray) -> np.ndarray:
    K_h = conj_transpose(K)
    W_hat = D @ K_h - 0.5 * K @ (K_h @ D @ K_h)
    return W_hat - conj_transpose(W_hat)


def cayley_retract(
    T: PointLike, X: MatrixLike, solver: str = "dense"
) -> StiefelPoint:
    """
    Enlarged Cayley retraction (I − ½W)⁻¹(I + ½W)T with W = cayley_W(T, X).

    * ``dense`` solves the full linear system, banks are materialized and read back.
    * ``spectral`` solves one small complex system per frequency, banks only.
    * ``fixed_point`` iterates Y ← T + ½W(T + Y) and falls back to ``dense`` when it stalls.

    >>> T = np.eye(2)
    >>> cayley_retract(T, np.zeros((2, 2))).matrix.tolist()
    [[1.0, 0.0], [0.0, 1.0]]
    """
    if solver not in RETRACTION_SOLVERS:
        raise ValidationError(
            f"Unknown retraction solver '{solver}', expected one of {RETRACTION_SOLVERS}."
        )

    point = _as_point(T)
    direction = _orient(point, X)
    base = point.matrix
    meta: Dict[str, Any] = {"solver": solver}

    if _is_zero(direction):
        return StiefelPoint(base, point.transposed, meta, check=False)

    if solver == "spectral":
        if not isinstance(base, FilterBank) or not isinstance(direction, FilterBank):
            raise ValidationError(
                "The spectral solver requires a bank and a bank direction."
            )

        K = _blocks(base)
        W = _spectral_W(K, _blocks(direction))
        identity = np.eye(W.shape[-1])
        rhs = K + 0.5 * W @ K
        retracted = _bank(np.linalg.solve(identity - 0.5 * W, rhs))

        return StiefelPoint(retracted, point.transposed, meta, check=False)

    dense_base = materialize(base) if isinstance(base, FilterBank) else base
    if isinstance(direction, FilterBank):
        dense_direction = materialize(direction)
    else:
        dense_direction = np.asarray(direction)
    W = _dense_W(dense_base, dense_direction)

    if solver == "fixed_point":
        retracted = _fixed_point(W, dense_base)
        if retracted is None:
            message = (
                f"Cayley fixed point iteration did not reach {FIXED_POINT_TOL} within "
                f"{FIXED_POINT_ITERS} steps, falling back to the dense solver."
            )
            logger.warning(message)
            warnings.warn(message, RuntimeWarning)
            meta["fallback"] = True
            retracted = _dense_cayley(W, dense_base)
    else:
        retracted = _dense_cayley(W, dense_base)

    if isinstance(base, FilterBank):
        meta["off_algebra_energy"] = off_algebra_energy(
            retracted, base.rows, base.cols, base.shape
        )
        bank = bank_from_dense(retracted, base.rows, base.cols, base.shape)
        return StiefelPoint(bank, point.transposed, meta, check=False)

    return StiefelPoint(retracted, point.transposed, meta, check=False)


def _is_zero(X: MatrixLike) -> bool:
    if isinstance(X, FilterBank):
        return not np.any(X.taps)
    return not np.any(X)


def _dense_cayley(W: np.ndarray, T: np.ndarray) -> np.ndarray:
    identity = np.eye(W.shape[0])
    system = identity - 0.5 * W
    condition = np.linalg.cond(system)

    if condition > CONDITION_WARNING:
        message = f"Cayley system is ill conditioned (κ = {condition:.3e})."
        logger.warning(message)
        warnings.warn(message, RuntimeWarning)

    return np.linalg.solve(system, T + 0.5 * W @ T)


def _fixed_point(W: np.ndarray, T: np.ndarray) -> Optional[np.ndarray]:
    Y = T.copy()

    for _ in range(FIXED_POINT_ITERS):
        updated = T + 0.5 * W @ (T + Y)

        if not np.all(np.isfinite(updated)):
            return None

        if np.linalg.norm(updated - Y) <= FIXED_POINT_TOL * np.linalg.norm(Y):
            return updated

        Y = updated

    return None


def positive_retract(alpha: float, r: float) -> PositiveScalar:
    """
    Exponential map of the positive half line, α·exp(r/α). The exponent is clamped to
    ±700 and the result flagged when that happens.
    >>> positive_retract(1.0, 0.0)
    1.0
    >>> round(positive_retract(1.0, np.log(2.0)), 12)
    2.0
    """
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise ValidationError(f"Expected a positive scalar, got {alpha}.")

    if not np.isfinite(r):
        raise ValidationError(f"Expected a finite step, got {r}.")

    exponent = r / alpha
    clamped = False

    if abs(exponent) > EXP_CLAMP:
        logger.warning(
            "Positive retraction exponent %.3e clamped to ±%s.", exponent, EXP_CLAMP
        )
        exponent = float(np.clip(exponent, -EXP_CLAMP, EXP_CLAMP))
        clamped = True

    return PositiveScalar(alpha * float(np.exp(exponent)), clamped=clamped)


def stiefel_project(X: MatrixLike) -> StiefelPoint:
    """
    Nearest point of the Stiefel manifold, the orthogonal polar factor of X.

    For a bank, the factor is computed per frequency as U Vᴴ from the SVD of every block,
    which keeps the result inside the algebra as a full-length bank.

    >>> stiefel_project(np.diag([3.0, 0.25])).matrix.round(10).tolist()
    [[1.0, 0.0], [0.0, 1.0]]
    """
    if isinstance(X, FilterBank):
        oriented = X.oriented()
        blocks = _blocks(oriented)
        u, s, vh = np.linalg.svd(blocks, full_matrices=False)
        peak = float(np.max(s))

        if peak == 0.0 or float(np.min(s)) <= 1e-12 * peak:
            raise SingularInputError(
                "The bank lacks full column rank at some frequency, "
                "its polar factor is not unique."
            )

        return StiefelPoint(
            _bank(u @ vh), oriented is not X, {"method": "spectral_svd"}, check=False
        )

    X = np.asarray(X, dtype=float)

    if X.ndim != 2:
        raise DimensionError(f"Expected a matrix, got shape {X.shape}.")

    transposed = X.shape[0] < X.shape[1]
    tall = X.T if transposed else X
    method = "higham" if tall.shape[0] == tall.shape[1] else "newton_schulz"

    U, iterations = polar_decompose(tall, method=method)

    return StiefelPoint(
        U, transposed, {"method": method, "iterations": iterations}, check=False
    )
