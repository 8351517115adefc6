"""Embedding matrices and their bit-exact binary file format.

File layout: magic ``EMB1``, little-endian u32 n, u32 d, then n*d
little-endian float32 values row-major, then n image ids each stored as a
little-endian u32 byte length followed by that many UTF-8 bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ValidationError

MAGIC = b"EMB1"


@dataclass
class EmbeddingMatrix:
    ids: list
    vectors: np.ndarray  # (n, d) float32
    identity_of: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ParameterError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if len(self.ids) != self.vectors.shape[0]:
            raise ParameterError(
                f"{len(self.ids)} ids for {self.vectors.shape[0]} vector rows")
        if self.vectors.shape[0] and self.vectors.shape[1] < 1:
            raise ParameterError("embedding dimension must be >= 1")
        if len(set(self.ids)) != len(self.ids):
            raise ParameterError("duplicate image ids in embedding matrix")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def normalized(self) -> np.ndarray:
        """Unit-L2 rows in float64; zero rows raise."""
        vec = self.vectors.astype(np.float64)
        norms = np.linalg.norm(vec, axis=1)
        if np.any(norms == 0):
            bad = [self.ids[i] for i in np.nonzero(norms == 0)[0][:5]]
            raise ParameterError(f"zero-norm embedding rows: {bad}")
        return vec / norms[:, np.newaxis]


def write_embeddings(path, ids, vectors) -> None:
    mat = vectors if isinstance(vectors, EmbeddingMatrix) else EmbeddingMatrix(list(ids), vectors)
    data = np.ascontiguousarray(mat.vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", mat.n, mat.d))
        fh.write(data.tobytes())
        for image_id in mat.ids:
            raw = str(image_id).encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise ValidationError(f"{path}: bad magic at byte 0 (expected {MAGIC!r})")
    if len(blob) < 12:
        raise ValidationError(f"{path}: truncated header at byte {len(blob)}")
    n, d = struct.unpack("<II", blob[4:12])
    offset = 12
    need = n * d * 4
    if len(blob) < offset + need:
        raise ValidationError(f"{path}: truncated vector block at byte {len(blob)} "
                              f"(need {offset + need})")
    vectors = np.frombuffer(blob, dtype="<f4", count=n * d, offset=offset).reshape(n, d).copy()
    offset += need
    ids = []
    for i in range(n):
        if len(blob) < offset + 4:
            raise ValidationError(f"{path}: truncated id length at byte {offset}")
        (length,) = struct.unpack("<I", blob[offset:offset + 4])
        offset += 4
        if len(blob) < offset + length:
            raise ValidationError(f"{path}: truncated id {i} at byte {offset}")
        ids.append(blob[offset:offset + length].decode("utf-8"))
        offset += length
    if offset != len(blob):
        raise ValidationError(f"{path}: {len(blob) - offset} trailing bytes at byte {offset}")
    return EmbeddingMatrix(ids=ids, vectors=vectors)
