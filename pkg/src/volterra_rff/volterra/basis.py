"""Discrete wavelet atoms spanning the Volterra kernel memory window.

Scale ``j`` divides the window ``[0, M)`` into ``2**j`` dyadic cells (cell
edges at ``floor(k*M / 2**j)``), so a scale-``j`` atom is ``M / 2**j``
samples wide. The coarsest listed scale contributes scaling-function atoms;
each further listed scale ``j`` contributes the wavelet atoms that refine
resolution ``j-1`` to ``j``. For Haar this is the usual multiresolution
split and the rows are exactly orthonormal. A single listed scale gives the
plain scaling-function basis.

D4 atoms have support three units wide, so at scale ``j`` the unit is
``M / (2**j + 2)`` samples and all ``2**j`` shifts stay inside the window.
D4 rows are not orthonormal on the discrete grid.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ConfigError

FAMILIES = ("haar", "db4")

# 4-tap Daubechies lowpass filter, sum = sqrt(2)
_S3 = math.sqrt(3.0)
DB4_LOWPASS = np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * math.sqrt(2.0))
DB4_SUPPORT = 3
CASCADE_ITERATIONS = 8


@dataclass(frozen=True)
class Atom:
    kind: str  # "phi" or "psi"
    scale: int
    shift: int


@dataclass(frozen=True)
class WaveletBasisSpec:
    family: str = "haar"
    scales: tuple = (0, 1, 2)
    memory_len: int = 4

    def __post_init__(self):
        fam = self.family.lower()
        if fam in ("daubechies4", "d4"):
            fam = "db4"
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "scales", tuple(int(j) for j in self.scales))
        if fam not in FAMILIES:
            raise ConfigError(f"unknown wavelet family {self.family!r}; expected one of {FAMILIES}")
        if not self.scales:
            raise ConfigError("at least one scale is required")
        if len(set(self.scales)) != len(self.scales):
            raise ConfigError(f"duplicate scales in {self.scales}")
        if min(self.scales) < 0:
            raise ConfigError("scales must be nonnegative")
        if self.memory_len < 1:
            raise ConfigError("memory_len must be positive")
        finest = max(self.scales)
        if fam == "db4" and 2**finest + DB4_SUPPORT - 1 > self.memory_len:
            raise ConfigError(
                f"D4 atoms at scale {finest} need memory_len >= {2**finest + DB4_SUPPORT - 1}, "
                f"got {self.memory_len}"
            )
        if 2**finest > self.memory_len:
            raise ConfigError(
                f"scale {finest} needs {2**finest} cells but memory_len is {self.memory_len}; "
                "atom support would be narrower than one sample"
            )

    def atoms(self) -> list[Atom]:
        """Atom list in spec order; the index into this list is ``m``."""
        coarse = min(self.scales)
        out = []
        for j in self.scales:
            if j == coarse:
                out.extend(Atom("phi", j, k) for k in range(2**j))
            else:
                out.extend(Atom("psi", j - 1, k) for k in range(2 ** (j - 1)))
        return out

    def shifts_per_scale(self) -> dict[int, int]:
        coarse = min(self.scales)
        return {j: 2**j if j == coarse else 2 ** (j - 1) for j in self.scales}

    @property
    def n_atoms(self) -> int:
        return len(self.atoms())

    def digest(self) -> str:
        key = f"{self.family}|{','.join(map(str, self.scales))}|{self.memory_len}"
        return hashlib.sha1(key.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    """``rows[m]`` is atom ``m`` sampled at lags ``0..M-1``."""

    spec: WaveletBasisSpec
    rows: np.ndarray
    atoms: tuple

    @property
    def n_atoms(self) -> int:
        return self.rows.shape[0]

    @property
    def memory_len(self) -> int:
        return self.rows.shape[1]

    def gram(self) -> np.ndarray:
        return self.rows @ self.rows.T


def _edges(M: int, j: int) -> np.ndarray:
    return (np.arange(2**j + 1) * M) // 2**j


def _haar_row(atom: Atom, M: int) -> np.ndarray:
    row = np.zeros(M)
    if atom.kind == "phi":
        e = _edges(M, atom.scale)
        a, b = e[atom.shift], e[atom.shift + 1]
        row[a:b] = 1.0 / math.sqrt(b - a)
        return row
    # detail atom: cell of level `scale` split at the level `scale+1` edge
    e = _edges(M, atom.scale + 1)
    a, mid, b = e[2 * atom.shift], e[2 * atom.shift + 1], e[2 * atom.shift + 2]
    n_pos, n_neg = mid - a, b - mid
    row[a:mid] = math.sqrt(n_neg / (n_pos * (n_pos + n_neg)))
    row[mid:b] = -math.sqrt(n_pos / (n_neg * (n_pos + n_neg)))
    return row


@lru_cache(maxsize=None)
def db4_scaling_function(iterations: int = CASCADE_ITERATIONS) -> tuple[np.ndarray, np.ndarray]:
    """D4 scaling function on the dyadic grid ``t = i / 2**iterations``, t in [0, 3].

    Integer-point values come from the refinement-equation eigenproblem; each
    iteration then fills in the midpoints of the previous grid.
    """
    h = DB4_LOWPASS
    n = len(h) - 1
    # phi(i) = sqrt2 * sum_k h[k] phi(2i - k), i = 0..n
    T = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for k in range(len(h)):
            if 0 <= 2 * i - k <= n:
                T[i, 2 * i - k] = math.sqrt(2.0) * h[k]
    w, v = np.linalg.eig(T)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    vals = vec / vec.sum()
    for r in range(1, iterations + 1):
        step = 2 ** (r - 1)
        new = np.zeros(n * 2**r + 1)
        for i in range(new.size):
            acc = 0.0
            for k in range(len(h)):
                idx = i - k * step
                if 0 <= idx < vals.size:
                    acc += h[k] * vals[idx]
            new[i] = math.sqrt(2.0) * acc
        vals = new
    t = np.arange(vals.size) / 2**iterations
    return t, vals


def _db4_wavelet(t: np.ndarray) -> np.ndarray:
    grid, phi = db4_scaling_function()
    h = DB4_LOWPASS
    g = np.array([(-1) ** k * h[len(h) - 1 - k] for k in range(len(h))])
    out = np.zeros_like(t, dtype=float)
    for k, gk in enumerate(g):
        out += math.sqrt(2.0) * gk * np.interp(2 * t - k, grid, phi, left=0.0, right=0.0)
    return out


def _db4_width(M: int, scale: int) -> float:
    # support of every shift k < 2**scale stays inside [0, M)
    return M / (2**scale + DB4_SUPPORT - 1)


def _db4_row(atom: Atom, M: int) -> np.ndarray:
    """Dilated/shifted D4 atom; ``2**scale`` shifts tile the window."""
    grid, phi = db4_scaling_function()
    width = _db4_width(M, atom.scale)
    t = np.arange(M) / width - atom.shift
    if atom.kind == "phi":
        vals = np.interp(t, grid, phi, left=0.0, right=0.0)
    else:
        vals = _db4_wavelet(t)
    return vals / math.sqrt(width)


def build_basis(spec: WaveletBasisSpec) -> BasisMatrix:
    atoms = tuple(spec.atoms())
    make = _haar_row if spec.family == "haar" else _db4_row
    rows = np.array([make(a, spec.memory_len) for a in atoms])
    if np.any(np.all(rows == 0, axis=1)):
        raise ConfigError(f"basis {spec} has an atom with no support inside the memory window")
    rows.flags.writeable = False
    return BasisMatrix(spec, rows, atoms)
