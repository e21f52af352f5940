"""Binary precomputed-embedding table ("PEAC" format).

Layout: magic ``PEAC``, u32 version, u32 dim, u32 count, then ``count`` rows
of little-endian float32, followed by the UTF-8 word list (one word per
line, ``count`` lines) whose order matches the matrix rows.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import ValidationError

MAGIC = b"PEAC"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_embedding_table(path, words: list[str], matrix: np.ndarray) -> None:
    mat = np.ascontiguousarray(matrix, dtype="<f4")
    if mat.ndim != 2 or mat.shape[0] != len(words):
        raise ValidationError(
            f"matrix shape {mat.shape} does not match {len(words)} words")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, mat.shape[1], mat.shape[0]))
        fh.write(mat.tobytes())
        fh.write(("\n".join(words) + "\n").encode("utf-8"))


def read_embedding_table(path) -> tuple[list[str], np.ndarray]:
    blob = open(path, "rb").read()
    if len(blob) < _HEADER.size:
        raise ValidationError(f"{path}: truncated embedding table")
    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported table version {version}")
    body = _HEADER.size + 4 * dim * count
    if len(blob) < body:
        raise ValidationError(f"{path}: matrix truncated")
    matrix = np.frombuffer(blob[_HEADER.size:body], dtype="<f4").reshape(count, dim).copy()
    words = blob[body:].decode("utf-8").splitlines()
    if len(words) != count:
        raise ValidationError(f"{path}: {len(words)} words for {count} rows")
    return words, matrix
