"""TNS1 tensor and MSK1 mask files.

TNS1::

    TNS1 <N> <I1> ... <IN> f64 le col\\n
    prod(I) little-endian float64 values, column-major

MSK1::

    MSK1 <N> <I1> ... <IN> <count>\\n
    count little-endian uint64 linear indices, strictly increasing

Headers are parsed and validated in full, and the payload size is checked
against the file size, before any payload byte is read.
"""

from __future__ import annotations

import os
from math import prod

import numpy as np

from .tensor import ObservationMask, check_tensor

__all__ = ["FormatError", "write_tensor", "read_tensor", "write_mask", "read_mask", "read_header"]

MAX_HEADER = 4096


class FormatError(ValueError):
    """Malformed or inconsistent TNS1/MSK1 file."""


def _read_header_line(fh, path):
    line = fh.readline(MAX_HEADER + 1)
    if not line.endswith(b"\n"):
        raise FormatError(f"{path}: missing or overlong header line")
    try:
        return line[:-1].decode("ascii").split(" ")
    except UnicodeDecodeError:
        raise FormatError(f"{path}: header is not ASCII") from None


def _parse_int(tok, what, path, minimum):
    if not tok.isdigit():
        raise FormatError(f"{path}: invalid {what} {tok!r}")
    val = int(tok)
    if val < minimum:
        raise FormatError(f"{path}: {what} must be >= {minimum}, got {val}")
    return val


def _parse_dims(tokens, path):
    if len(tokens) < 2:
        raise FormatError(f"{path}: truncated header")
    ndim = _parse_int(tokens[1], "order", path, 1)
    if len(tokens) < 2 + ndim:
        raise FormatError(f"{path}: header lists fewer than {ndim} dimensions")
    dims = tuple(_parse_int(t, "dimension", path, 1) for t in tokens[2:2 + ndim])
    return dims, tokens[2 + ndim:]


def read_header(path):
    """Return ``(kind, dims, extra, payload_offset)`` for a TNS1 or MSK1 file."""
    with open(path, "rb") as fh:
        tokens = _read_header_line(fh, path)
        offset = fh.tell()
    kind = tokens[0] if tokens else ""
    if kind not in ("TNS1", "MSK1"):
        raise FormatError(f"{path}: unknown magic {kind!r}")
    dims, rest = _parse_dims(tokens, path)
    if kind == "TNS1":
        if rest != ["f64", "le", "col"]:
            raise FormatError(f"{path}: unsupported TNS1 encoding {' '.join(rest)!r}")
        extra = None
    else:
        if len(rest) != 1:
            raise FormatError(f"{path}: MSK1 header needs exactly one count field")
        extra = _parse_int(rest[0], "count", path, 0)
        if extra > prod(dims):
            raise FormatError(f"{path}: count {extra} exceeds tensor size {prod(dims)}")
    return kind, dims, extra, offset


def _check_payload(path, offset, nbytes):
    actual = os.path.getsize(path) - offset
    if actual != nbytes:
        raise FormatError(f"{path}: payload has {actual} bytes, header implies {nbytes}")


def write_tensor(path, a):
    a = check_tensor(a)
    header = f"TNS1 {a.ndim} {' '.join(str(d) for d in a.shape)} f64 le col\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(a.ravel(order="F").astype("<f8").tobytes())


def read_tensor(path):
    kind, dims, _, offset = read_header(path)
    if kind != "TNS1":
        raise FormatError(f"{path}: expected a TNS1 tensor file, found {kind}")
    count = prod(dims)
    _check_payload(path, offset, 8 * count)
    with open(path, "rb") as fh:
        fh.seek(offset)
        data = np.frombuffer(fh.read(), dtype="<f8", count=count)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: tensor contains NaN or Inf")
    return data.astype(np.float64).reshape(dims, order="F")


def write_mask(path, mask):
    header = f"MSK1 {len(mask.dims)} {' '.join(str(d) for d in mask.dims)} {mask.count}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mask.indices.astype("<u8").tobytes())


def read_mask(path):
    kind, dims, count, offset = read_header(path)
    if kind != "MSK1":
        raise FormatError(f"{path}: expected an MSK1 mask file, found {kind}")
    _check_payload(path, offset, 8 * count)
    with open(path, "rb") as fh:
        fh.seek(offset)
        idx = np.frombuffer(fh.read(), dtype="<u8", count=count)
    if count and int(idx.max()) >= prod(dims):
        raise FormatError(f"{path}: mask index out of range")
    try:
        return ObservationMask(dims, idx.astype(np.int64))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
