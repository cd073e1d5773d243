"""Network weights container (magic ``BSW1``).

Little-endian layout:

    magic           4 bytes  b"BSW1"
    version         u16      currently 1
    topology        u8       0 = crop classifier, 1 = fully convolutional
    layer count     u16
    input shape     u8 rank, then u32 dims
    per layer:
        name length u16, name bytes (the layer's constructor spec string)
        dtype tag   u8   (1 = float64)
        rank        u8, dims u32[]          -- weight tensor shape
        weight payload f64, then bias payload f64 (bias length = dims[-1])

Parameter-free layers store rank 0 and no payload. Loading rebuilds the
network from the spec strings and reproduces every weight bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import Conv2D, Dense, Dropout, Flatten, MaxPool2D, Network, Softmax

MAGIC = b"BSW1"
VERSION = 1
DTYPE_F64 = 1

TOPOLOGY_CNN = 0
TOPOLOGY_FCN = 1


class WeightsFormatError(ValueError):
    """Corrupt magic, truncated payload, or version mismatch."""


def _parse_spec(spec: str):
    kind, _, argstr = spec.partition(":")
    args = {}
    if argstr:
        for part in argstr.split(","):
            key, _, val = part.partition("=")
            args[key] = val
    act = args.get("act")
    activation = None if act in (None, "linear") else act
    if kind == "conv2d":
        return Conv2D(int(args["filters"]), int(args["kernel"]), int(args["in"]),
                      activation=activation)
    if kind == "dense":
        return Dense(int(args["units"]), int(args["in"]), activation=activation)
    if kind == "maxpool2d":
        return MaxPool2D(int(args["pool"]))
    if kind == "dropout":
        return Dropout(float(args["rate"]))
    if kind == "flatten":
        return Flatten()
    if kind == "softmax":
        return Softmax()
    raise WeightsFormatError(f"unknown layer spec {spec!r}")


def save_weights(path: Path, net: Network, topology: int = TOPOLOGY_CNN) -> None:
    if topology not in (TOPOLOGY_CNN, TOPOLOGY_FCN):
        raise WeightsFormatError(f"bad topology flag {topology}")
    parts = [MAGIC, struct.pack("<HBH", VERSION, topology, len(net.layers))]
    parts.append(struct.pack("<B", len(net.input_shape)))
    parts.append(struct.pack(f"<{len(net.input_shape)}I", *net.input_shape))
    for lyr in net.layers:
        name = lyr.spec().encode()
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        if lyr.param_names:
            w = getattr(lyr, "w")
            b = getattr(lyr, "b")
            parts.append(struct.pack("<BB", DTYPE_F64, w.ndim))
            parts.append(struct.pack(f"<{w.ndim}I", *w.shape))
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        else:
            parts.append(struct.pack("<BB", DTYPE_F64, 0))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, raw: bytes, path: Path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise WeightsFormatError(f"{self.path}: truncated weights file")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path: Path) -> tuple[Network, int]:
    """Rebuild a network; returns (net, topology flag)."""
    rd = _Reader(path.read_bytes(), path)
    if rd.take(4) != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic, not a weights file")
    version, topology, n_layers = rd.unpack("<HBH")
    if version != VERSION:
        raise WeightsFormatError(f"{path}: unsupported weights version {version}")
    if topology not in (TOPOLOGY_CNN, TOPOLOGY_FCN):
        raise WeightsFormatError(f"{path}: bad topology flag {topology}")
    (rank,) = rd.unpack("<B")
    input_shape = rd.unpack(f"<{rank}I")
    layers = []
    for _ in range(n_layers):
        (name_len,) = rd.unpack("<H")
        spec = rd.take(name_len).decode()
        dtype_tag, w_rank = rd.unpack("<BB")
        if dtype_tag != DTYPE_F64:
            raise WeightsFormatError(f"{path}: unsupported dtype tag {dtype_tag}")
        lyr = _parse_spec(spec)
        if w_rank:
            dims = rd.unpack(f"<{w_rank}I")
            n = int(np.prod(dims))
            w = np.frombuffer(rd.take(8 * n), dtype="<f8").reshape(dims).copy()
            b = np.frombuffer(rd.take(8 * dims[-1]), dtype="<f8").copy()
            if not lyr.param_names:
                raise WeightsFormatError(f"{path}: payload for parameter-free layer {spec!r}")
            lyr.w = w
            lyr.b = b
        layers.append(lyr)
    if rd.pos != len(rd.raw):
        raise WeightsFormatError(f"{path}: {len(rd.raw) - rd.pos} trailing bytes")
    return Network(input_shape, layers), topology
