from typing import Any, Dict, List

import numpy as np

from .activations import activation_from_kind
from .exceptions import CpnnError, ParseError
from .models import Layer, NetworkParams
from .structures import FilterBank

#: Version written into, and required from, every checkpoint.
CHECKPOINT_VERSION: int = 1


def encode(net: NetworkParams) -> Dict[str, Any]:
    """
    Provide a plain dict describing a network, ready for json. Floats are kept as python floats
    so that json writes their shortest round-trip representation.
    """
    return {
        "version": CHECKPOINT_VERSION,
        "geometry": net.geometry,
        "gamma": net.gamma,
        "activation": {
            "kind": net.activation_kind,
            "alphas": net.alphas,
        },
        "layers": [
            {
                "filters": layer.bank.taps.tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in net
        ],
    }


def _require(document: Dict[str, Any], key: str, type_: Any) -> Any:
    if key not in document:
        raise ParseError("Checkpoint is missing a mandatory key", entry=key)

    value = document[key]

    if not isinstance(value, type_):
        raise ParseError(
            f"Checkpoint key holds {type(value).__name__}, expected {type_}", entry=key
        )

    return value


def decode(document: Dict[str, Any]) -> NetworkParams:
    """
    Decode any previously encoded network. Unknown versions are rejected.
    """
    if not isinstance(document, dict):
        raise ParseError("Decode require the checkpoint to be a mapping")

    version = _require(document, "version", int)

    if version != CHECKPOINT_VERSION:
        raise ParseError(
            f"Unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}",
            entry="version",
        )

    geometry: Dict[str, Any] = _require(document, "geometry", dict)
    activation: Dict[str, Any] = _require(document, "activation", dict)
    encoded_layers: List[Any] = _require(document, "layers", list)
    gamma = _require(document, "gamma", (int, float))

    kind = _require(activation, "kind", str)
    alphas = _require(activation, "alphas", list)

    if len(alphas) != len(encoded_layers):
        raise ParseError(
            f"{len(alphas)} activation parameters for {len(encoded_layers)} layers",
            entry="alphas",
        )

    period = geometry.get("m")
    if period is None:
        raise ParseError("Checkpoint geometry lacks the period", entry="m")

    layers: List[Layer] = []

    try:
        for encoded, alpha in zip(encoded_layers, alphas):
            if not isinstance(encoded, dict):
                raise ParseError("Decode require each layer to be a mapping")

            bank = FilterBank(np.array(_require(encoded, "filters", list)), period)
            bias = np.array(_require(encoded, "bias", list), dtype=float)
            layers.append(Layer(bank, bias, activation_from_kind(kind, alpha)))

        net = NetworkParams(layers, float(gamma))
    except ParseError:
        raise
    except (CpnnError, ValueError, TypeError) as e:
        raise ParseError(f"Checkpoint does not describe a valid network: {e}") from e

    expected = {key: geometry[key] for key in ("K", "m1", "m2") if key in geometry}
    actual = {key: net.geometry[key] for key in expected}

    if expected != actual:
        raise ParseError(
            f"Checkpoint geometry {expected} does not match its layers {actual}",
            entry="geometry",
        )

    return net


def encode_filter_bank(bank: FilterBank) -> Dict[str, Any]:
    """
    >>> encode_filter_bank(FilterBank([[[0.0, 1.0, 0.0]]], 4))
    {'shape': [4], 'taps': [[[0.0, 1.0, 0.0]]]}
    """
    return {"shape": list(bank.shape), "taps": bank.taps.tolist()}


def decode_filter_bank(document: Dict[str, Any]) -> FilterBank:
    if not isinstance(document, dict):
        raise ParseError("Decode require the filter bank to be a mapping")

    shape = _require(document, "shape", list)
    taps = _require(document, "taps", list)

    try:
        return FilterBank(np.array(taps, dtype=float), shape)
    except (CpnnError, ValueError, TypeError) as e:
        raise ParseError(f"Invalid filter bank: {e}", entry="taps") from e
