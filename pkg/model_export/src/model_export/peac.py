"""Writer/reader for the "PEAC" binary embedding table.

Layout: magic ``PEAC``, u32 version, u32 dim, u32 count (all little-endian),
``count`` rows of little-endian float32, then the UTF-8 word list, one word
per line, in row order. This is the runtime side's declared input format.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import ExportError

MAGIC = b"PEAC"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_table(path, words: list[str], matrix: np.ndarray) -> None:
    mat = np.ascontiguousarray(matrix, dtype="<f4")
    if mat.ndim != 2 or mat.shape[0] != len(words):
        raise ExportError(f"matrix shape {mat.shape} does not match {len(words)} words")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, mat.shape[1], mat.shape[0]))
        fh.write(mat.tobytes())
        fh.write(("\n".join(words) + "\n").encode("utf-8"))


def read_table(path) -> tuple[list[str], np.ndarray]:
    blob = open(path, "rb").read()
    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC or version != VERSION:
        raise ExportError(f"{path}: not a version-{VERSION} PEAC table")
    body = _HEADER.size + 4 * dim * count
    matrix = np.frombuffer(blob[_HEADER.size:body], dtype="<f4").reshape(count, dim).copy()
    words = blob[body:].decode("utf-8").splitlines()
    if len(words) != count:
        raise ExportError(f"{path}: word list does not match row count")
    return words, matrix
