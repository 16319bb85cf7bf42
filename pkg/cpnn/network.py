"""
Evaluation and reverse-mode differentiation of convolutional proximal networks

    Φ = B_K ∘ ⋯ ∘ B_1,  B_k(x) = T_kᵀ σ_{α_k}(T_k x + b_k⊗1),

of their lifted version Ψ = AᵀΦA with A = (1/√m₂)(I; …; I), and of the residual denoiser
𝒟 = I − γΨ. Signals are 1D periods or 2D images, optionally stacked along leading batch axes.
"""
import logging
from math import prod, sqrt
from typing import List, Sequence, Tuple, Union

import numpy as np

from .activations import activate_deriv
from .algebra import bank_correlation, bcirc_apply, bcirc_apply_adjoint
from .exceptions import ContractViolation, DimensionError, ValidationError
from .models import GradientBundle, Layer, NetworkParams, Tape
from .utils import as_channels, normalize_shape, restore_layout

logger = logging.getLogger(__name__)


def building_block(
    layer: Layer, x: Union[np.ndarray, Sequence[float]]
) -> np.ndarray:
    """
    Tᵀσ_α(Tx + b⊗1) for a single layer.
    """
    bank = layer.bank
    signal, flat = as_channels(x, bank.cols, bank.shape)
    z = bcirc_apply(bank, signal) + layer.broadcast_bias()
    out = bcirc_apply_adjoint(bank, layer.activation(z))
    return restore_layout(out, flat, bank.dims)


def _propagate(
    net: NetworkParams, signal: np.ndarray
) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    inputs: List[np.ndarray] = []
    pre_activations: List[np.ndarray] = []
    x = signal

    for layer in net:
        z = bcirc_apply(layer.bank, x) + layer.broadcast_bias()
        inputs.append(x)
        pre_activations.append(z)
        x = bcirc_apply_adjoint(layer.bank, layer.activation(z))

    return x, inputs, pre_activations


def network_apply(
    net: NetworkParams, x: Union[np.ndarray, Sequence[float]]
) -> np.ndarray:
    """Φ(x) without recording a tape."""
    signal, flat = as_channels(x, net.cols, net.shape)
    out, _, _ = _propagate(net, signal)
    return restore_layout(out, flat, net.dims)


def forward(
    net: NetworkParams, x: Union[np.ndarray, Sequence[float]]
) -> Tuple[np.ndarray, Tape]:
    """
    Φ(x) and the tape needed by backward. x holds m₂ channels, flat or structured, with
    optional leading batch axes.
    """
    signal, flat = as_channels(x, net.cols, net.shape)
    out, inputs, pre_activations = _propagate(net, signal)
    tape = Tape(net.token, inputs, pre_activations, flat=flat, lifted=False)
    return restore_layout(out, flat, net.dims), tape


def _as_image(
    net: NetworkParams, x: Union[np.ndarray, Sequence[float]]
) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)

    if arr.ndim >= net.dims and arr.shape[-net.dims :] == net.shape:
        return arr, False

    if net.dims > 1 and arr.ndim >= 1 and arr.shape[-1] == prod(net.shape):
        return arr.reshape(arr.shape[:-1] + net.shape), True

    raise DimensionError(
        f"Expected a signal over the period {net.shape}, got shape {arr.shape}."
    )


def _restore_image(out: np.ndarray, flat: bool, dims: int) -> np.ndarray:
    if not flat:
        return out
    return out.reshape(out.shape[:-dims] + (-1,))


def lift(net: NetworkParams, x: np.ndarray) -> np.ndarray:
    """A x, copies of x on the m₂ input channels scaled by 1/√m₂."""
    channel_axis = x.ndim - net.dims
    stacked = np.repeat(np.expand_dims(x, channel_axis), net.cols, axis=channel_axis)
    return stacked / sqrt(net.cols)


def lift_adjoint(net: NetworkParams, y: np.ndarray) -> np.ndarray:
    """Aᵀ y, the channel sum scaled by 1/√m₂."""
    return np.sum(y, axis=-(net.dims + 1)) / sqrt(net.cols)


def lift_forward(
    net: NetworkParams, x: Union[np.ndarray, Sequence[float]]
) -> Tuple[np.ndarray, Tape]:
    """Ψ(x) = AᵀΦ(Ax) and the tape needed by backward."""
    image, flat = _as_image(net, x)
    out, inputs, pre_activations = _propagate(net, lift(net, image))
    tape = Tape(net.token, inputs, pre_activations, flat=flat, lifted=True)
    return _restore_image(lift_adjoint(net, out), flat, net.dims), tape


def lift_denoise(
    net: NetworkParams, x: Union[np.ndarray, Sequence[float]]
) -> np.ndarray:
    """
    Ψ(x) = AᵀΦ(Ax) on single channel signals.
    """
    image, flat = _as_image(net, x)
    out, _, _ = _propagate(net, lift(net, image))
    return _restore_image(lift_adjoint(net, out), flat, net.dims)


def denoise(net: NetworkParams, x: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    """
    The residual denoiser 𝒟(x) = x − γΨ(x).
    """
    arr = np.asarray(x, dtype=float)
    return arr - net.gamma * lift_denoise(net, arr)


def backward(
    net: NetworkParams, tape: Tape, grad_out: Union[np.ndarray, Sequence[float]]
) -> GradientBundle:
    """
    Gradients of ⟨grad_out, output⟩ with respect to every parameter and to the input.

    Taps gradients sum every matrix position sharing a tap, bias gradients sum the
    replicates of b⊗1, and batch axes are summed as well.
    """
    if tape.token != net.token:
        raise ContractViolation(
            "The tape was recorded with other parameters, run forward again."
        )

    if tape.lifted:
        image, _ = _as_image(net, grad_out)
        g = lift(net, image)
    else:
        g, _ = as_channels(grad_out, net.cols, net.shape)

    if g.shape != tape.inputs[0].shape:
        raise DimensionError(
            f"Output gradient of shape {np.shape(grad_out)} does not match "
            "the recorded output."
        )

    taps: List[np.ndarray] = [np.empty(0)] * net.K
    bias: List[np.ndarray] = [np.empty(0)] * net.K
    alpha: List[float] = [0.0] * net.K

    for k in reversed(range(net.K)):
        layer = net[k]
        bank = layer.bank
        z = tape.pre_activations[k]
        s = layer.activation(z)

        grad_s = bcirc_apply(bank, g)
        d_z, d_alpha = activate_deriv(layer.activation, z)
        grad_z = grad_s * d_z

        if layer.activation.parameterized:
            alpha[k] = float(np.sum(grad_s * d_alpha))

        channels_first = np.moveaxis(grad_z, -(bank.dims + 1), 0)
        bias[k] = channels_first.reshape(bank.rows, -1).sum(axis=1)
        taps[k] = bank_correlation(s, g, bank) + bank_correlation(
            grad_z, tape.inputs[k], bank
        )

        g = bcirc_apply_adjoint(bank, grad_z)

    if tape.lifted:
        input_grad = _restore_image(lift_adjoint(net, g), tape.flat, net.dims)
    else:
        input_grad = restore_layout(g, tape.flat, net.dims)

    return GradientBundle(taps, bias, alpha, input_grad)


def extend(net: NetworkParams, shape: Union[int, Sequence[int]]) -> NetworkParams:
    """
    Same filters on a longer period. Limited filters keep their taps, full-length filters
    are padded by zeros, so the certification of limited filters carries over whenever the
    new period is at least 4l + 1.
    """
    target = normalize_shape(shape)

    if len(target) != net.dims:
        raise DimensionError(f"Cannot extend a {net.dims}D network to {target}.")

    if any(t < p for t, p in zip(target, net.shape)):
        raise ValidationError(
            f"The extended period {target} must not be shorter than {net.shape}."
        )

    layers = [layer.replace(bank=layer.bank.with_period(target)) for layer in net]
    logger.debug("Extended %r to the period %s.", net, target)

    return net.replace(layers=layers)
