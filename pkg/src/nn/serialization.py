"""RGWT weight files.

Layout (little-endian):
    header  magic "RGWT" | version u16 | layer count u32
    layer   name (u16 length + utf-8) | tensor count u16
    tensor  name (u16 length + utf-8) | ndim u8 | shape u32 x ndim | data f64 x prod(shape)

Tensors of a layer are its parameters followed by its buffers (batch-norm
running statistics).
"""
import struct
from pathlib import Path
from typing import BinaryIO, Dict, Union

import numpy as np
from loguru import logger

from ..core.exceptions import WeightFormatException
from .layers import Sequential, Tensor

MAGIC = b"RGWT"
FORMAT_VERSION = 1


def _write_name(f: BinaryIO, name: str):
    encoded = name.encode("utf-8")
    f.write(struct.pack("<H", len(encoded)))
    f.write(encoded)


def _read_exact(f: BinaryIO, size: int) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise WeightFormatException("Weight file is truncated")
    return data


def _read_name(f: BinaryIO) -> str:
    (length,) = struct.unpack("<H", _read_exact(f, 2))
    return _read_exact(f, length).decode("utf-8")


def save_weights(model: Sequential, path: Union[str, Path]) -> Path:
    path = Path(path)
    state = model.state_dict()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(state)))
        for layer_key, tensors in state.items():
            _write_name(f, layer_key)
            f.write(struct.pack("<H", len(tensors)))
            for name, value in tensors.items():
                _write_name(f, name)
                f.write(struct.pack("<B", value.ndim))
                f.write(struct.pack(f"<{value.ndim}I", *value.shape))
                f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    logger.info(f"Saved {len(state)} layers of weights to {path}")
    return path


def read_weights(path: Union[str, Path]) -> Dict[str, Dict[str, Tensor]]:
    path = Path(path)
    if not path.exists():
        raise WeightFormatException(f"Weight file not found: {path}")
    state: Dict[str, Dict[str, Tensor]] = {}
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise WeightFormatException(f"{path} is not an RGWT weight file")
        version, layer_count = struct.unpack("<HI", _read_exact(f, 6))
        if version != FORMAT_VERSION:
            raise WeightFormatException(f"Unsupported RGWT version {version}")
        for _ in range(layer_count):
            layer_key = _read_name(f)
            (tensor_count,) = struct.unpack("<H", _read_exact(f, 2))
            tensors = {}
            for _ in range(tensor_count):
                name = _read_name(f)
                (ndim,) = struct.unpack("<B", _read_exact(f, 1))
                shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
                size = int(np.prod(shape)) if ndim else 1
                data = np.frombuffer(_read_exact(f, 8 * size), dtype="<f8")
                tensors[name] = data.astype(np.float64).reshape(shape)
            state[layer_key] = tensors
        if f.read(1):
            raise WeightFormatException(f"Trailing bytes after {layer_count} layers in {path}")
    return state


def load_weights(model: Sequential, path: Union[str, Path]) -> Sequential:
    state = read_weights(path)
    expected = set(model.state_dict())
    if set(state) != expected:
        raise WeightFormatException(
            f"Weight file layers {sorted(state)} do not match the model's {sorted(expected)}"
        )
    try:
        model.load_state_dict(state)
    except Exception as e:
        raise WeightFormatException(f"Weight file does not fit the model: {e}")
    return model
