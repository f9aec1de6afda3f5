"""FEATv1 feature files.

Layout (little-endian)::

    magic b"FEAT" | version u32 = 1 | D u64 | count u64
    count x ( label u32 | nmse_db f32 | D x (re f32, im f32) )
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FormatError, PersistenceError

FEAT_MAGIC = b"FEAT"
FEAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def _record_dtype(d: int) -> np.dtype:
    return np.dtype([("label", "<u4"), ("nmse_db", "<f4"), ("theta", "<f4", (2 * d,))])


@dataclass(eq=False)
class FeatureSet:
    theta: np.ndarray  # (count, D) complex
    labels: np.ndarray  # (count,) int
    nmse_db: np.ndarray  # (count,) float

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.complex128))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.nmse_db = np.asarray(self.nmse_db, dtype=np.float64).reshape(-1)
        n = self.theta.shape[0]
        if self.labels.size != n or self.nmse_db.size != n:
            raise ConfigError("theta, labels and nmse_db must have the same length")
        if np.any(self.labels < 0):
            raise ConfigError("labels must be nonnegative")

    def __len__(self) -> int:
        return self.theta.shape[0]

    @property
    def dim(self) -> int:
        return self.theta.shape[1]

    def subset(self, idx) -> "FeatureSet":
        return FeatureSet(self.theta[idx], self.labels[idx], self.nmse_db[idx])


def encode_features(fs: FeatureSet) -> bytes:
    d = fs.dim
    rec = np.zeros(len(fs), dtype=_record_dtype(d))
    rec["label"] = fs.labels
    rec["nmse_db"] = fs.nmse_db
    pairs = np.empty((len(fs), 2 * d), dtype=np.float64)
    pairs[:, 0::2] = fs.theta.real
    pairs[:, 1::2] = fs.theta.imag
    rec["theta"] = pairs
    return _HEADER.pack(FEAT_MAGIC, FEAT_VERSION, d, len(fs)) + rec.tobytes()


def decode_features(raw: bytes, source: str = "<bytes>") -> FeatureSet:
    if len(raw) < _HEADER.size:
        raise FormatError(f"{source}: truncated FEAT header")
    magic, version, d, count = _HEADER.unpack_from(raw)
    if magic != FEAT_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != FEAT_VERSION:
        raise FormatError(f"{source}: unsupported FEAT version {version}")
    dt = _record_dtype(d)
    expected = _HEADER.size + count * dt.itemsize
    if len(raw) != expected:
        raise FormatError(f"{source}: expected {expected} bytes for {count} records of D={d}, got {len(raw)}")
    rec = np.frombuffer(raw, dtype=dt, offset=_HEADER.size, count=count)
    pairs = rec["theta"].astype(np.float64)
    theta = pairs[:, 0::2] + 1j * pairs[:, 1::2]
    return FeatureSet(theta, rec["label"].astype(np.int64), rec["nmse_db"].astype(np.float64))


def write_features(fs: FeatureSet, path: str | Path) -> None:
    try:
        Path(path).write_bytes(encode_features(fs))
    except OSError as exc:
        raise PersistenceError(f"cannot write features {path}: {exc}") from exc


def read_features(path: str | Path) -> FeatureSet:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read features {path}: {exc}") from exc
    return decode_features(raw, str(path))
