"""Complex baseband signals, RFIQ persistence, manifests and noise injection.

RFIQ layout (little-endian)::

    offset  size  field
    0       4     magic b"RFIQ"
    4       4     version (u32) = 1
    8       8     sample_rate_hz (f64)
    16      8     sample_count (u64)
    24      8*n   interleaved I/Q pairs (f32, f32)

Samples are held as complex128 in memory and narrowed to float32 pairs on
disk. A signal that came from disk therefore round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateInputError, FormatError, PersistenceError

RFIQ_MAGIC = b"RFIQ"
RFIQ_VERSION = 1
_RFIQ_HEADER = struct.Struct("<4sIdQ")

MANIFEST_FIELDS = ("path", "label", "snr_db", "channel", "seed")


@dataclass(frozen=True, eq=False)
class ComplexSignal:
    """Sampled complex baseband waveform.

    ``samples`` is stored as a read-only complex128 array.
    """

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.complex128, copy=True).reshape(-1)
        if x.size == 0:
            raise ConfigError("signal must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ConfigError("signal contains NaN or Inf samples")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ConfigError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples: np.ndarray) -> "ComplexSignal":
        return ComplexSignal(samples, self.sample_rate_hz)

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class SignalRecord:
    signal: ComplexSignal
    device_label: int
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    snr_db: str = "none"
    channel: str = "static"
    seed: int = 0


@dataclass
class DatasetManifest:
    """Labelled list of RFIQ files. Relative paths resolve against ``root``."""

    entries: list[ManifestEntry]
    n_classes: int
    root: Path = Path(".")

    def __post_init__(self):
        if self.n_classes < 1:
            raise ConfigError("n_classes must be positive")
        for e in self.entries:
            if not 0 <= e.label < self.n_classes:
                raise ConfigError(f"label {e.label} outside [0, {self.n_classes}) for {e.path}")

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)


def save_iq(signal: ComplexSignal, path: str | Path) -> None:
    path = Path(path)
    x = signal.samples
    payload = np.empty(2 * x.size, dtype="<f4")
    payload[0::2] = x.real
    payload[1::2] = x.imag
    header = _RFIQ_HEADER.pack(RFIQ_MAGIC, RFIQ_VERSION, signal.sample_rate_hz, x.size)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload.tobytes())
    except OSError as exc:
        raise PersistenceError(f"cannot write RFIQ file {path}: {exc}") from exc


def load_iq(path: str | Path) -> ComplexSignal:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read RFIQ file {path}: {exc}") from exc
    return parse_iq(raw, source=str(path))


def parse_iq(raw: bytes, source: str = "<bytes>") -> ComplexSignal:
    if len(raw) < _RFIQ_HEADER.size:
        raise FormatError(f"{source}: truncated header ({len(raw)} of {_RFIQ_HEADER.size} bytes)")
    magic, version, fs, count = _RFIQ_HEADER.unpack_from(raw)
    if magic != RFIQ_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {RFIQ_MAGIC!r}")
    if version != RFIQ_VERSION:
        raise FormatError(f"{source}: unsupported RFIQ version {version}")
    expected = _RFIQ_HEADER.size + 8 * count
    if len(raw) != expected:
        raise FormatError(
            f"{source}: header declares {count} samples ({expected} bytes) but file has {len(raw)} bytes"
        )
    pairs = np.frombuffer(raw, dtype="<f4", offset=_RFIQ_HEADER.size).astype(np.float64)
    try:
        return ComplexSignal(pairs[0::2] + 1j * pairs[1::2], fs)
    except ConfigError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def normalize_power(signal: ComplexSignal) -> ComplexSignal:
    """Scale to unit mean power. Phases are untouched."""
    p = signal.power()
    if p == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero signal")
    return signal.with_samples(signal.samples / math.sqrt(p))


def derive_rng(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, tag, *indices)``.

    The tag is folded in through CRC-32 so streams for different purposes
    never collide, and the same key always yields the same stream.
    """
    key = (zlib.crc32(tag.encode("utf-8")), *(int(i) for i in indices))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng: np.random.Generator, n: int, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with E|z|^2 = variance (Box-Muller)."""
    u1 = rng.random(n)
    u2 = rng.random(n)
    r = np.sqrt(-2.0 * np.log1p(-u1))
    z = r * np.exp(2j * np.pi * u2)
    return z * math.sqrt(variance / 2.0)


def is_noiseless(snr_db: float | None) -> bool:
    return snr_db is None or snr_db == math.inf


def add_awgn(signal: ComplexSignal, snr_db: float | None, seed: int) -> ComplexSignal:
    """Add white complex Gaussian noise at ``snr_db`` relative to the signal power.

    ``snr_db=None`` (or ``math.inf``) is the no-noise flag and returns the input.
    """
    if is_noiseless(snr_db):
        return signal
    if not math.isfinite(snr_db):
        raise ConfigError(f"snr_db must be finite or None, got {snr_db}")
    noise_var = signal.power() * 10.0 ** (-snr_db / 10.0)
    rng = derive_rng(seed, "awgn")
    return signal.with_samples(signal.samples + complex_gaussian(rng, len(signal), noise_var))


def format_snr(snr_db: float | None) -> str:
    return "none" if is_noiseless(snr_db) else repr(float(snr_db))


def parse_snr(text: str) -> float | None:
    text = text.strip().lower()
    if text in ("none", "inf", ""):
        return None
    return float(text)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MANIFEST_FIELDS)
            for e in manifest.entries:
                w.writerow([e.path, e.label, e.snr_db, e.channel, e.seed])
    except OSError as exc:
        raise PersistenceError(f"cannot write manifest {path}: {exc}") from exc


def read_manifest(path: str | Path, n_classes: int | None = None, check_files: bool = True) -> DatasetManifest:
    """Parse a manifest CSV. ``n_classes`` defaults to ``max(label) + 1``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
            header = tuple(rows[0].keys()) if rows else None
    except OSError as exc:
        raise PersistenceError(f"cannot read manifest {path}: {exc}") from exc
    if header is not None and header != MANIFEST_FIELDS:
        raise FormatError(f"{path}: manifest header {header} != {MANIFEST_FIELDS}")
    try:
        entries = [
            ManifestEntry(r["path"], int(r["label"]), r["snr_db"], r["channel"], int(r["seed"]))
            for r in rows
        ]
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed manifest row: {exc}") from exc
    if not entries:
        raise FormatError(f"{path}: manifest has no entries")
    if n_classes is None:
        n_classes = max(e.label for e in entries) + 1
    manifest = DatasetManifest(entries, n_classes, root=path.parent)
    if check_files:
        missing = [e.path for e in entries if not manifest.resolve(e).is_file()]
        if missing:
            raise PersistenceError(f"{path}: {len(missing)} referenced files missing, e.g. {missing[0]}")
    return manifest
