"""FWNN model files.

Layout (all little-endian)::

    b"FWNN"  u16 version  u8 dtype (0 = f32, 1 = f64)  u8 flags (bit 0 = zero_center)
    config:  u32 input_h  u32 input_w  u32 in_channels  u32 kernel  u32 pool
             u32 n_classes  i64 scale_num  i64 scale_den  u32 n_blocks
             u32 conv_channels[n_blocks]
    u64 payload bytes, then parameter blobs in declaration order
    u32 CRC-32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from fractions import Fraction
from pathlib import Path

import numpy as np

from faultwave.datastore import atomic_write
from faultwave.dcnn.network import Network, NetworkConfig
from faultwave.errors import FormatError

MAGIC = b"FWNN"
VERSION = 1
_HEAD = struct.Struct("<4sHBB")
_CONFIG = struct.Struct("<6Iqq I")
_DTYPE_CODES = {"float32": 0, "float64": 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def encode_network(net: Network) -> bytes:
    cfg = net.config
    parts = [
        _HEAD.pack(MAGIC, VERSION, _DTYPE_CODES[cfg.dtype], int(cfg.zero_center)),
        _CONFIG.pack(
            cfg.input_h, cfg.input_w, cfg.in_channels, cfg.kernel, cfg.pool, cfg.n_classes,
            cfg.channel_scale.numerator, cfg.channel_scale.denominator, len(cfg.conv_channels),
        ),
        struct.pack(f"<{len(cfg.conv_channels)}I", *cfg.conv_channels),
    ]
    le = np.dtype(cfg.dtype).newbyteorder("<")
    blobs = b"".join(
        np.ascontiguousarray(net.params[name], dtype=le).tobytes() for name in cfg.param_shapes()
    )
    parts.append(struct.pack("<Q", len(blobs)))
    parts.append(blobs)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_network(data: bytes) -> Network:
    if len(data) < _HEAD.size + 4:
        raise FormatError(f"model file too short ({len(data)} bytes)", 0)
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("model checksum mismatch", len(data) - 4)
    magic, version, dtype_code, flags = _HEAD.unpack_from(body, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported model version {version}", 4)
    if dtype_code not in _CODE_DTYPES:
        raise FormatError(f"unknown dtype code {dtype_code}", 6)
    if flags > 1:
        raise FormatError(f"unknown flag bits {flags:#04x}", 7)
    off = _HEAD.size
    try:
        h, w, cin, k, pool, ncls, num, den, nblocks = _CONFIG.unpack_from(body, off)
        off += _CONFIG.size
        channels = struct.unpack_from(f"<{nblocks}I", body, off)
        off += 4 * nblocks
        (payload_len,) = struct.unpack_from("<Q", body, off)
        off += 8
    except struct.error:
        raise FormatError("truncated model header", off) from None
    cfg = NetworkConfig(h, w, cin, tuple(channels), k, pool, ncls, Fraction(num, den), _CODE_DTYPES[dtype_code], bool(flags))
    le = np.dtype(cfg.dtype).newbyteorder("<")
    expected = sum(int(np.prod(s)) for s in cfg.param_shapes().values()) * le.itemsize
    if payload_len != expected or len(body) - off != expected:
        raise FormatError(
            f"parameter payload is {len(body) - off} bytes, config implies {expected}", off
        )
    params = {}
    for name, shape in cfg.param_shapes().items():
        count = int(np.prod(shape))
        params[name] = np.frombuffer(body, dtype=le, count=count, offset=off).reshape(shape).astype(cfg.dtype)
        off += count * le.itemsize
    return Network(cfg, params)


def save_network(net: Network, path) -> None:
    atomic_write(path, encode_network(net))


def load_network(path) -> Network:
    return decode_network(Path(path).read_bytes())
