from io import IOBase
from json import JSONDecodeError, dumps as json_dumps, loads as json_loads
from os import PathLike
from typing import Any, Mapping, Optional, Union

from .exceptions import ParseError
from .models import NetworkParams
from .serializer import decode, encode


def loads(raw: Any) -> NetworkParams:
    """
    Just decode anything that could contain a network checkpoint.
    :param raw: Accept a mapping, a JSON str or bytes, or a readable file object.
    :raises:
        ParseError: If the content is not a valid checkpoint.
        TypeError: If passed argument cannot hold a checkpoint.
    """
    if isinstance(raw, NetworkParams):
        return raw

    if isinstance(raw, Mapping):
        return decode(dict(raw))

    if isinstance(raw, IOBase):
        return loads(raw.read())

    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError("Checkpoint is not valid UTF-8", offset=e.start) from e

    if isinstance(raw, str):
        try:
            document = json_loads(raw)
        except JSONDecodeError as e:
            raise ParseError(f"Malformed checkpoint JSON: {e.msg}", offset=e.pos) from e
        return decode(document)

    raise TypeError(  # pragma: no cover
        f"Cannot load a network from {type(raw)} as it is not supported by cpnn."
    )


def dumps(net: NetworkParams, **kwargs: Optional[Any]) -> str:
    return json_dumps(encode(net), **kwargs)  # type: ignore


def save_model(net: NetworkParams, path: Union[str, "PathLike[str]"]) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(dumps(net, indent=2))


def load_model(path: Union[str, "PathLike[str]"]) -> NetworkParams:
    try:
        with open(path, "rb") as fp:
            raw = fp.read()
    except OSError as e:
        raise ParseError(f"Cannot read the checkpoint: {e}", entry=str(path)) from e

    return loads(raw)
