"""Second-order wavelet-Volterra model: design matrix, ridge fit, forward map.

The model is

    y[n] = h0 + sum_t h1(t) u[n-t] + sum_{t1,t2} h2(t1,t2) u[n-t1] u[n-t2]

with ``h1 = sum_m alpha_m Phi_m`` and ``h2`` expanded on products of atom
pairs ``(i, j), i <= j``. Samples before the start of ``u`` are zero by
default; ``boundary="circular"`` instead wraps around to the end of ``u``,
which suits a reference made of repeated identical symbols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import ConfigError, NumericalError
from ..iq import ComplexSignal
from .basis import BasisMatrix, WaveletBasisSpec, build_basis

NMSE_FLOOR_DB = -300.0
BOUNDARIES = ("zero", "circular")


def n_second_order(n_atoms: int) -> int:
    return n_atoms * (n_atoms + 1) // 2


def n_features(n_atoms: int) -> int:
    return 1 + n_atoms + n_second_order(n_atoms)


def pair_index(n_atoms: int) -> list[tuple[int, int]]:
    """Upper-triangular pairs in row-major order: (0,0), (0,1), ..., (L-1,L-1)."""
    return [(i, j) for i in range(n_atoms) for j in range(i, n_atoms)]


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    z1: np.ndarray
    z2: np.ndarray
    z_ext: np.ndarray

    @property
    def n_atoms(self) -> int:
        return self.z1.shape[1]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Fitted ``theta = [h0 | alpha | beta]``."""

    theta: np.ndarray
    n_atoms: int
    lambda_used: float = 0.0
    nmse_db: float = float("nan")
    basis_spec_hash: str = ""

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.complex128).reshape(-1)
        if theta.size != n_features(self.n_atoms):
            raise ConfigError(f"theta has {theta.size} entries, expected {n_features(self.n_atoms)}")
        if not np.all(np.isfinite(theta)):
            raise NumericalError("non-finite coefficients in feature vector")
        object.__setattr__(self, "theta", theta)

    @property
    def h0(self) -> complex:
        return complex(self.theta[0])

    @property
    def alpha(self) -> np.ndarray:
        return self.theta[1 : 1 + self.n_atoms]

    @property
    def beta(self) -> np.ndarray:
        return self.theta[1 + self.n_atoms :]


def first_order_response(u: ComplexSignal | np.ndarray, basis: BasisMatrix, boundary: str = "zero") -> np.ndarray:
    """Column ``m`` is ``sum_t Phi_m(t) u[n-t]``, causal.

    ``u[n-t]`` for ``n < t`` is zero, or ``u[N+n-t]`` when ``boundary="circular"``.
    """
    if boundary not in BOUNDARIES:
        raise ConfigError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    x = u.samples if isinstance(u, ComplexSignal) else np.asarray(u, dtype=np.complex128)
    n = x.size
    M = basis.memory_len
    if n < M:
        raise ConfigError(f"signal length {n} shorter than memory_len {M}")
    if boundary == "circular" and M > 1:
        x = np.concatenate([x[n - (M - 1) :], x])
    z1 = np.empty((n, basis.n_atoms), dtype=np.complex128)
    for m, row in enumerate(basis.rows):
        z1[:, m] = np.convolve(x, row)[x.size - n : x.size]
    return z1


def second_order_columns(z1: np.ndarray) -> np.ndarray:
    """Hadamard products ``z1[:, i] * z1[:, j]`` for ``i <= j``."""
    ii, jj = np.triu_indices(z1.shape[1])
    return z1[:, ii] * z1[:, jj]


def assemble(z1: np.ndarray, z2: np.ndarray) -> DesignMatrix:
    if z1.shape[0] != z2.shape[0]:
        raise ConfigError(f"row mismatch: z1 has {z1.shape[0]} rows, z2 has {z2.shape[0]}")
    L1 = z1.shape[1]
    if z2.shape[1] != n_second_order(L1):
        raise ConfigError(f"z2 has {z2.shape[1]} columns, expected {n_second_order(L1)}")
    ones = np.ones((z1.shape[0], 1), dtype=np.complex128)
    return DesignMatrix(z1, z2, np.hstack([ones, z1, z2]))


def design_matrix(u: ComplexSignal | np.ndarray, basis: BasisMatrix, boundary: str = "zero") -> DesignMatrix:
    z1 = first_order_response(u, basis, boundary)
    return assemble(z1, second_order_columns(z1))


def nmse_db(y: np.ndarray, y_hat: np.ndarray) -> float:
    num = float(np.vdot(y - y_hat, y - y_hat).real)
    den = float(np.vdot(y, y).real)
    if den == 0.0:
        return float("nan")
    if num == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(num / den), NMSE_FLOOR_DB)


def relative_lambda(z: np.ndarray, lambda_rel: float) -> float:
    """``lambda_rel * trace(Z^H Z) / D``."""
    return lambda_rel * float(np.sum(np.abs(z) ** 2)) / z.shape[1]


class RidgeSolver:
    """Cholesky factor of ``Z^H Z + lam*I``, reusable across right-hand sides."""

    def __init__(self, z: np.ndarray, lam: float):
        if lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {lam}")
        self.z = np.asarray(z, dtype=np.complex128)
        self.lam = float(lam)
        d = self.z.shape[1]
        gram = self.z.conj().T @ self.z
        gram[np.diag_indices(d)] += lam
        try:
            self._factor = cho_factor(gram, lower=False, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"normal matrix is not positive definite (lambda={lam}); use lambda > 0"
            ) from exc
        diag = np.abs(np.diag(self._factor[0])) ** 2
        if diag.min() <= np.finfo(float).eps * diag.max() * d:
            raise NumericalError(
                f"normal matrix is numerically singular (lambda={lam}); use a larger lambda > 0"
            )

    def solve(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.complex128)
        if y.shape[0] != self.z.shape[0]:
            raise ConfigError(f"y has {y.shape[0]} samples, design matrix has {self.z.shape[0]} rows")
        return cho_solve(self._factor, self.z.conj().T @ y)


def ridge_solve(z_ext: DesignMatrix | np.ndarray, y: ComplexSignal | np.ndarray, lam: float,
                n_atoms: int | None = None) -> FeatureVector:
    """Solve ``min ||y - Z theta||^2 + lam ||theta||^2`` via the normal equations.

    Returns a :class:`FeatureVector` when the atom count is known (from a
    ``DesignMatrix`` or ``n_atoms``); for a bare matrix the raw coefficient
    array is returned.
    """
    if isinstance(z_ext, DesignMatrix):
        n_atoms = z_ext.n_atoms
        z = z_ext.z_ext
    else:
        z = np.asarray(z_ext, dtype=np.complex128)
    yv = y.samples if isinstance(y, ComplexSignal) else np.asarray(y, dtype=np.complex128)
    theta = RidgeSolver(z, lam).solve(yv)
    if n_atoms is None:
        return theta
    return FeatureVector(theta, n_atoms, lam, nmse_db(yv, z @ theta))


def kernels(theta: FeatureVector, basis: BasisMatrix) -> tuple[complex, np.ndarray, np.ndarray]:
    """Reconstruct ``(h0, h1[M], h2[M, M])``; h2 is symmetric."""
    rows = basis.rows
    h1 = theta.alpha @ rows
    M = basis.memory_len
    h2 = np.zeros((M, M), dtype=np.complex128)
    for b, (i, j) in zip(theta.beta, pair_index(basis.n_atoms)):
        outer = np.outer(rows[i], rows[j])
        if i == j:
            h2 += b * outer
        else:
            # coefficient of the single (i, j) column covers both orderings
            h2 += 0.5 * b * (outer + outer.T)
    return theta.h0, h1, h2


def volterra_forward(u: ComplexSignal, theta: FeatureVector, basis: BasisMatrix,
                     boundary: str = "zero") -> ComplexSignal:
    """Evaluate the truncated Volterra series by direct summation over lags."""
    if theta.n_atoms != basis.n_atoms:
        raise ConfigError(f"theta built for {theta.n_atoms} atoms, basis has {basis.n_atoms}")
    if boundary not in BOUNDARIES:
        raise ConfigError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    h0, h1, h2 = kernels(theta, basis)
    x = u.samples
    n, M = x.size, basis.memory_len
    lagged = np.zeros((M, n), dtype=np.complex128)
    for t in range(M):
        lagged[t] = np.roll(x, t)
        if boundary == "zero":
            lagged[t, :t] = 0
    y = np.full(n, h0, dtype=np.complex128)
    for t1 in range(M):
        y += h1[t1] * lagged[t1]
        for t2 in range(M):
            if h2[t1, t2] != 0:
                y += h2[t1, t2] * lagged[t1] * lagged[t2]
    return u.with_samples(y)


class Extractor:
    """Fits many received signals against one shared reference.

    The basis, the design matrix and its factorization are built once; each
    call to :meth:`extract` costs one ``Z^H y`` product and a triangular solve.
    """

    def __init__(self, u: ComplexSignal, spec: WaveletBasisSpec, lam: float | None = None,
                 lambda_rel: float = 1e-3, exclude_warmup: bool = False, boundary: str = "zero"):
        self.u = u
        self.spec = spec
        self.basis = build_basis(spec)
        self.design = design_matrix(u, self.basis, boundary)
        self.first_row = spec.memory_len - 1 if exclude_warmup else 0
        z_fit = self.design.z_ext[self.first_row :]
        self.lam = relative_lambda(z_fit, lambda_rel) if lam is None else float(lam)
        self.solver = RidgeSolver(z_fit, self.lam)
        self._hash = spec.digest()

    def extract(self, y: ComplexSignal | np.ndarray) -> FeatureVector:
        yv = y.samples if isinstance(y, ComplexSignal) else np.asarray(y, dtype=np.complex128)
        if yv.size != self.design.z_ext.shape[0]:
            raise ConfigError(f"received signal has {yv.size} samples, reference has {len(self.u)}")
        theta = self.solver.solve(yv[self.first_row :])
        fit = self.design.z_ext @ theta
        return FeatureVector(theta, self.basis.n_atoms, self.lam, nmse_db(yv, fit), self._hash)


def extract(u: ComplexSignal, y: ComplexSignal, spec: WaveletBasisSpec = WaveletBasisSpec(),
            lam: float | None = None, lambda_rel: float = 1e-3, exclude_warmup: bool = False,
            boundary: str = "zero") -> FeatureVector:
    """Fingerprint of ``y`` relative to the ideal reference ``u``.

    ``lam`` is absolute; when omitted it is ``lambda_rel * trace(Z^H Z) / D``.
    """
    if len(u) != len(y):
        raise ConfigError(f"reference has {len(u)} samples, received signal has {len(y)}")
    return Extractor(u, spec, lam, lambda_rel, exclude_warmup, boundary).extract(y)
