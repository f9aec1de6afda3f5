"""Import externally recorded IQ captures into RFIQ files plus a manifest.

The on-disk layout of third-party captures varies, so nothing is guessed:
a :class:`LayoutDescriptor` states the container, sample type, record
length and how labels are assigned.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, FormatError, PersistenceError
from .iq import ComplexSignal, DatasetManifest, ManifestEntry, load_iq, save_iq, write_manifest

log = logging.getLogger(__name__)

DEFAULT_RECORD_LEN = 8192
_DTYPES = {"float32": "<f4", "float64": "<f8", "int16": "<i2"}


class LayoutDescriptor(BaseModel):
    """How to cut an external capture into labelled complex records.

    ``record_len`` is the number of complex samples stored per record;
    ``offset`` and ``keep`` select the window that is imported (``keep``
    defaults to 8192). Labels come from the parent directory name, a
    regular expression with one group applied to the relative path, or an
    HDF5 dataset of integers.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    container: Literal["raw", "npy", "hdf5"] = "raw"
    dtype: Literal["float32", "float64", "int16"] = "float32"
    interleave: Literal["iq", "planar"] = "iq"
    record_len: int = Field(DEFAULT_RECORD_LEN, ge=1)
    header_bytes: int = Field(0, ge=0)
    offset: int = Field(0, ge=0)
    keep: int = Field(DEFAULT_RECORD_LEN, ge=1)
    sample_rate_hz: float = Field(1e6, gt=0)
    glob: str = "**/*"
    label_source: Literal["directory", "regex", "hdf5"] = "directory"
    label_regex: Optional[str] = None
    label_map: Optional[dict[str, int]] = None
    hdf5_data: str = "data"
    hdf5_labels: str = "labels"

    @model_validator(mode="after")
    def _check(self):
        if self.offset + self.keep > self.record_len:
            raise ValueError(f"offset + keep = {self.offset + self.keep} exceeds record_len {self.record_len}")
        if self.label_source == "regex":
            if not self.label_regex:
                raise ValueError("label_source 'regex' needs label_regex")
            if re.compile(self.label_regex).groups != 1:
                raise ValueError("label_regex must have exactly one capture group")
        if self.label_source == "hdf5" and self.container != "hdf5":
            raise ValueError("label_source 'hdf5' requires container 'hdf5'")
        return self

    @property
    def record_bytes(self) -> int:
        return 2 * self.record_len * np.dtype(_DTYPES[self.dtype]).itemsize

    def describe(self) -> str:
        return (f"{self.container} {self.dtype} {self.interleave}-interleaved, {self.record_len} samples/record, "
                f"{self.header_bytes}-byte header, importing samples [{self.offset}, {self.offset + self.keep})")


def load_layout(path: str | Path) -> LayoutDescriptor:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise PersistenceError(f"cannot read layout descriptor {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    try:
        return LayoutDescriptor.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid layout descriptor {path}: {exc}") from exc


def _to_complex(rows: np.ndarray, layout: LayoutDescriptor) -> np.ndarray:
    """``(count, 2*record_len)`` reals -> ``(count, keep)`` complex128 window."""
    rows = rows.astype(np.float64)
    if layout.interleave == "iq":
        z = rows[:, 0::2] + 1j * rows[:, 1::2]
    else:
        n = layout.record_len
        z = rows[:, :n] + 1j * rows[:, n:]
    return z[:, layout.offset : layout.offset + layout.keep]


def _length_error(source: str, n_values: int, layout: LayoutDescriptor, byte_base: int) -> FormatError:
    per = 2 * layout.record_len
    itemsize = np.dtype(_DTYPES[layout.dtype]).itemsize
    whole = n_values // per
    return FormatError(
        f"{source}: {n_values} values do not divide into records of {layout.record_len} complex samples "
        f"(expected {DEFAULT_RECORD_LEN} per record by default); {whole} whole record(s) end at byte "
        f"{byte_base + whole * per * itemsize}, then {n_values - whole * per} stray values up to byte "
        f"{byte_base + n_values * itemsize}"
    )


def read_records(path: Path, layout: LayoutDescriptor) -> tuple[np.ndarray, np.ndarray | None]:
    """Complex records ``(count, keep)`` and, for HDF5 sources, their labels."""
    source = str(path)
    if layout.container == "raw":
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise PersistenceError(f"cannot read {path}: {exc}") from exc
        if len(raw) < layout.header_bytes:
            raise FormatError(f"{source}: {len(raw)} bytes is shorter than the {layout.header_bytes}-byte header")
        body = len(raw) - layout.header_bytes
        if body == 0 or body % layout.record_bytes:
            itemsize = np.dtype(_DTYPES[layout.dtype]).itemsize
            if body % itemsize:
                raise FormatError(
                    f"{source}: payload from byte {layout.header_bytes} to {len(raw)} is not a whole number "
                    f"of {layout.dtype} values"
                )
            raise _length_error(source, body // itemsize, layout, layout.header_bytes)
        values = np.frombuffer(raw, dtype=_DTYPES[layout.dtype], offset=layout.header_bytes)
        return _to_complex(values.reshape(-1, 2 * layout.record_len), layout), None

    if layout.container == "npy":
        try:
            arr = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise FormatError(f"{source}: not a readable .npy file: {exc}") from exc
        if np.iscomplexobj(arr):
            arr = np.atleast_2d(arr)
            if arr.shape[-1] != layout.record_len:
                raise FormatError(f"{source}: complex records have {arr.shape[-1]} samples, expected "
                                  f"record_len {layout.record_len}")
            z = arr.reshape(-1, layout.record_len).astype(np.complex128)
            return z[:, layout.offset : layout.offset + layout.keep], None
        flat = np.ascontiguousarray(arr).reshape(-1)
        if flat.size == 0 or flat.size % (2 * layout.record_len):
            raise _length_error(source, flat.size, layout, 0)
        return _to_complex(flat.reshape(-1, 2 * layout.record_len), layout), None

    try:
        import h5py
    except ImportError as exc:
        raise ConfigError("HDF5 import needs h5py; install the 'hdf5' extra") from exc
    try:
        with h5py.File(path, "r") as fh:
            data = np.asarray(fh[layout.hdf5_data])
            labels = np.asarray(fh[layout.hdf5_labels]).reshape(-1) if layout.label_source == "hdf5" else None
    except KeyError as exc:
        raise FormatError(f"{source}: missing dataset: {exc}") from exc
    except OSError as exc:
        raise FormatError(f"{source}: not a readable HDF5 file: {exc}") from exc
    if np.iscomplexobj(data):
        data = np.stack([data.real, data.imag], axis=-1)
    flat = data.reshape(-1)
    if flat.size == 0 or flat.size % (2 * layout.record_len):
        raise _length_error(source, flat.size, layout, 0)
    records = _to_complex(flat.reshape(-1, 2 * layout.record_len), layout)
    if labels is not None and labels.size != records.shape[0]:
        raise FormatError(f"{source}: {labels.size} labels for {records.shape[0]} records")
    return records, labels


def _label_names(files: list[Path], root: Path, layout: LayoutDescriptor) -> list[str]:
    names = []
    for f in files:
        rel = f.relative_to(root).as_posix()
        if layout.label_source == "directory":
            if f.parent == root:
                raise ConfigError(f"{rel}: label_source 'directory' needs files inside per-device folders")
            names.append(f.parent.name)
        else:
            m = re.search(layout.label_regex, rel)
            if not m:
                raise ConfigError(f"{rel}: label_regex {layout.label_regex!r} does not match")
            names.append(m.group(1))
    return names


def _assign_labels(names: list[str], layout: LayoutDescriptor) -> list[int]:
    if layout.label_map is not None:
        missing = sorted(set(names) - set(layout.label_map))
        if missing:
            raise ConfigError(f"label_map has no entry for {missing[:5]}")
        return [layout.label_map[n] for n in names]
    ordered = sorted(set(names), key=lambda s: (len(s), s) if s.isdigit() else (0, s))
    index = {n: i for i, n in enumerate(ordered)}
    return [index[n] for n in names]


def import_iq(src: str | Path, layout: LayoutDescriptor, out_dir: str | Path) -> DatasetManifest:
    """Convert every matching file under ``src`` (or ``src`` itself) into RFIQ records."""
    src, out_dir = Path(src), Path(out_dir)
    log.warning("assuming external layout: %s", layout.describe())
    if src.is_file():
        root, files = src.parent, [src]
    elif src.is_dir():
        root = src
        files = sorted(p for p in src.glob(layout.glob) if p.is_file() and not p.name.startswith("."))
    else:
        raise PersistenceError(f"{src}: no such file or directory")
    if not files:
        raise ConfigError(f"{src}: no files match {layout.glob!r}")

    per_file_names = None if layout.label_source == "hdf5" else _label_names(files, root, layout)
    pending = []
    for i, f in enumerate(files):
        records, labels = read_records(f, layout)
        for r, rec in enumerate(records):
            name = str(int(labels[r])) if labels is not None else per_file_names[i]
            pending.append((rec, name))
    numeric = _assign_labels([n for _, n in pending], layout)
    n_classes = max(numeric) + 1
    entries = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistenceError(f"cannot create {out_dir}: {exc}") from exc
    for idx, ((rec, _), label) in enumerate(zip(pending, numeric)):
        rel = f"dev{label:03d}/rec{idx:06d}.rfiq"
        (out_dir / rel).parent.mkdir(exist_ok=True)
        save_iq(ComplexSignal(rec, layout.sample_rate_hz), out_dir / rel)
        entries.append(ManifestEntry(rel, label, "none", "imported", 0))
    manifest = DatasetManifest(entries, n_classes, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    log.info("imported %d records in %d classes from %d file(s)", len(entries), n_classes, len(files))
    return manifest


def export_interleaved(manifest: DatasetManifest) -> bytes:
    """Concatenate all records back to interleaved little-endian float32."""
    parts = []
    for e in manifest.entries:
        z = load_iq(manifest.resolve(e)).samples
        pairs = np.empty(2 * z.size, dtype="<f4")
        pairs[0::2] = z.real
        pairs[1::2] = z.imag
        parts.append(pairs.tobytes())
    return b"".join(parts)
