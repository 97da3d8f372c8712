"""Binary checkpoint format (all integers unsigned 32-bit little-endian)::

    b"RCKP"
    version                      (= 1)
    config_len, config bytes     UTF-8 "key = value" lines of RcanConfig
    tensor_count
    per tensor, in parameter order:
        name_len, name bytes (UTF-8)
        rank, dims[rank]
        prod(dims) float32 little-endian values

Values are stored at 32-bit precision; float64 parameters are rounded on save.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CheckpointError,
    InconsistentCheckpointError,
    TruncatedError,
    VersionError,
)
from .network import RcanConfig, validate_params

MAGIC = b"RCKP"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_config(config):
    return "".join(f"{k} = {v}\n" for k, v in config.to_items()).encode()


def decode_config(blob):
    items = []
    for line in blob.decode().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            items.append((key.strip(), value.strip()))
    try:
        return RcanConfig.from_items(items)
    except (KeyError, ValueError) as exc:
        raise InconsistentCheckpointError(f"invalid embedded config: {exc}") from None


def dumps(params, config):
    validate_params(params, config)
    cfg = encode_config(config)
    out = [MAGIC, _U32.pack(VERSION), _U32.pack(len(cfg)), cfg, _U32.pack(len(params))]
    for name, arr in params.items():
        raw = name.encode()
        out += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        out += [_U32.pack(d) for d in arr.shape]
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"checkpoint truncated while reading {what} at byte {self.pos}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def loads(buf, expect=None):
    """Parse a checkpoint; returns ``(params, config)`` with float32 arrays.

    ``expect``, if given, is a config the stored tensors must also fit.
    """
    if bytes(buf[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}; not an RCKP checkpoint")
    rd = _Reader(buf)
    rd.pos = 4
    version = rd.u32("version")
    if version != VERSION:
        raise VersionError(f"checkpoint format version {version}, this build reads {VERSION}")
    config = decode_config(rd.take(rd.u32("config length"), "config"))
    params = {}
    for i in range(rd.u32("tensor count")):
        name = rd.take(rd.u32(f"tensor {i} name length"), f"tensor {i} name").decode()
        rank = rd.u32(f"{name} rank")
        dims = tuple(rd.u32(f"{name} dims") for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64))
        raw = rd.take(4 * count, f"{name} values")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
    if rd.pos != len(buf):
        raise CheckpointError(f"{len(buf) - rd.pos} unexpected trailing bytes")
    validate_params(params, config)
    if expect is not None:
        validate_params(params, expect)
    return params, config


def save_checkpoint(params, config, path):
    Path(path).write_bytes(dumps(params, config))


def load_checkpoint(path, expect=None):
    return loads(Path(path).read_bytes(), expect=expect)
