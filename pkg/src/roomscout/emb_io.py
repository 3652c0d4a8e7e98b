"""EMB1 embedding container.

Layout: 4-byte magic "EMB1", little-endian u32 count, u32 dim, count*dim
little-endian float32 values row-major, then a UTF-8 JSON trailer
{"ids": [...]} mapping rows to view/instruction ids. Rows are stored exactly
as written (no normalization), so read-then-write round-trips bit-exactly;
normalization happens when rows are turned into scoring embeddings.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"EMB1"


def write_emb1(path, matrix: np.ndarray, ids: list[str]) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError("embedding matrix must be 2-D")
    count, dim = matrix.shape
    if count != len(ids):
        raise ValueError(f"{count} rows but {len(ids)} ids")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", count, dim))
        fh.write(matrix.tobytes())
        fh.write(json.dumps({"ids": [str(i) for i in ids]}, separators=(",", ":")).encode("utf-8"))


def read_emb1(path) -> tuple[np.ndarray, list[str]]:
    """Returns (count x dim float32 matrix, row ids), exactly as stored."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an EMB1 file")
    if len(data) < 12:
        raise ValueError(f"{path}: truncated EMB1 header")
    count, dim = struct.unpack_from("<II", data, 4)
    payload_end = 12 + count * dim * 4
    if len(data) < payload_end:
        raise ValueError(f"{path}: truncated EMB1 payload")
    matrix = np.frombuffer(data[12:payload_end], dtype="<f4").reshape(count, dim).copy()
    try:
        trailer = json.loads(data[payload_end:].decode("utf-8"))
        ids = trailer["ids"]
    except (ValueError, KeyError) as exc:
        raise ValueError(f"{path}: bad EMB1 trailer ({exc})") from exc
    if len(ids) != count:
        raise ValueError(f"{path}: trailer has {len(ids)} ids for {count} rows")
    return matrix, [str(i) for i in ids]
