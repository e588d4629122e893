"""Dense complex linear algebra and the two state representations used everywhere.

Every quantum state in this package is a density matrix (Hermitian,
positive-semidefinite, unit trace) and every classical state or measurement
distribution is a point on the probability simplex.  Both are immutable value
types; all operations here are pure functions on them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Tolerances for the state invariants.  Everything is double precision; the
# checks below distinguish numerical noise from genuinely invalid inputs.
HERMITIAN_TOL = 1e-10
DENSITY_HERMITIAN_TOL = 1e-12
DENSITY_TRACE_TOL = 1e-12
DENSITY_PSD_TOL = 1e-10
SIMPLEX_SUM_TOL = 1e-10
UNITARY_TOL = 1e-9
SQRT_PSD_CLAMP = 1e-9

MAX_DIM = 256


def as_complex_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite complex128 2-D array (copy, never a view)."""
    arr = np.array(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def hermiticity_defect(m: np.ndarray) -> float:
    """Max elementwise deviation from m = m^dagger."""
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def unitarity_defect(m: np.ndarray) -> float:
    """Max elementwise deviation of m^dagger m from the identity."""
    eye = np.eye(m.shape[0], dtype=np.complex128)
    return float(np.max(np.abs(m.conj().T @ m - eye)))


def eig_hermitian(m, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a Hermitian matrix: m = V diag(w) V^dagger.

    Eigenvalues come back ascending, eigenvectors as columns of a unitary V.
    Raises ValueError when the input is not Hermitian within `tol`.
    """
    arr = as_complex_matrix(m)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected square matrix, got {arr.shape}")
    defect = hermiticity_defect(arr)
    if defect > tol:
        raise ValueError(f"matrix is not Hermitian: defect {defect:.3e} > {tol:.3e}")
    w, v = np.linalg.eigh(arr)
    return w, v


def matrix_sqrt_psd(m) -> np.ndarray:
    """Hermitian PSD square root R of a PSD matrix, R R = m.

    Eigenvalues in [-1e-9, 0) count as numerical noise and are clamped to
    zero; anything below -1e-9 means the input is genuinely not PSD.
    """
    w, v = eig_hermitian(m, tol=SQRT_PSD_CLAMP)
    if w.min(initial=0.0) < -SQRT_PSD_CLAMP:
        raise ValueError(
            f"matrix is not positive semidefinite: min eigenvalue {w.min():.3e}"
        )
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.conj().T
    return (root + root.conj().T) / 2.0


def matrix_log_unitary(u) -> np.ndarray:
    """Hermitian generator H of a unitary, u = exp(iH), eigenphases in (-pi, pi].

    Uses a complex Schur decomposition so the returned eigenbasis is unitary
    even when eigenvalues are degenerate.
    """
    arr = as_complex_matrix(u, "unitary")
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected square matrix, got {arr.shape}")
    defect = unitarity_defect(arr)
    if defect > UNITARY_TOL:
        raise ValueError(f"matrix is not unitary: defect {defect:.3e} > {UNITARY_TOL:.3e}")
    t, z = scipy.linalg.schur(arr, output="complex")
    phases = np.angle(np.diagonal(t))  # in (-pi, pi]
    h = (z * phases) @ z.conj().T
    return (h + h.conj().T) / 2.0


def kron(a, b) -> np.ndarray:
    """Kronecker product; dimensions multiply."""
    return np.kron(as_complex_matrix(a, "a"), as_complex_matrix(b, "b"))


@dataclass(frozen=True)
class SimplexVector:
    """Nonnegative real vector summing to one (probability distribution)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError(f"simplex vector must be 1-D and nonempty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("simplex vector contains non-finite entries")
        if v.min() < 0.0:
            raise ValueError(f"simplex vector has negative entry {v.min():.3e}")
        total = float(v.sum())
        if abs(total - 1.0) > SIMPLEX_SUM_TOL:
            raise ValueError(f"simplex vector sums to {total!r}, not 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @classmethod
    def uniform(cls, dim: int) -> "SimplexVector":
        return cls(np.full(dim, 1.0 / dim))

    @classmethod
    def from_nonnegative(cls, raw) -> "SimplexVector":
        """Normalize a nonnegative vector with positive sum onto the simplex."""
        v = np.asarray(raw, dtype=np.float64)
        total = v.sum()
        if v.min(initial=0.0) < 0.0 or total <= 0.0:
            raise ValueError("input must be nonnegative with positive sum")
        return cls(v / total)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian PSD unit-trace complex matrix: a (possibly mixed) quantum state."""

    matrix: np.ndarray

    def __post_init__(self):
        m = as_complex_matrix(self.matrix, "density matrix")
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        if m.shape[0] > MAX_DIM:
            raise ValueError(f"dimension {m.shape[0]} exceeds supported maximum {MAX_DIM}")
        defect = hermiticity_defect(m)
        if defect > DENSITY_HERMITIAN_TOL:
            raise ValueError(f"density matrix not Hermitian: defect {defect:.3e}")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > DENSITY_TRACE_TOL:
            raise ValueError(f"density matrix trace {tr!r} is not 1")
        w = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
        if w.min() < -DENSITY_PSD_TOL:
            raise ValueError(f"density matrix not PSD: min eigenvalue {w.min():.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @classmethod
    def diagonal(cls, populations) -> "DensityMatrix":
        p = np.asarray(populations, dtype=np.float64)
        return cls(np.diag(p.astype(np.complex128)))

    @classmethod
    def from_simplex(cls, y: SimplexVector) -> "DensityMatrix":
        return cls.diagonal(y.values)

    @classmethod
    def pure(cls, state) -> "DensityMatrix":
        psi = np.asarray(state, dtype=np.complex128).ravel()
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise ValueError("zero state vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    def evolved(self, u) -> "DensityMatrix":
        """Unitary conjugation u rho u^dagger (re-hermitized against roundoff)."""
        arr = as_complex_matrix(u, "unitary")
        out = arr @ self.matrix @ arr.conj().T
        return DensityMatrix((out + out.conj().T) / 2.0)

    def eigendecomposition(self) -> tuple[np.ndarray, np.ndarray]:
        """Spectral form rho = V diag(w) V^dagger, eigenvalues ascending."""
        return eig_hermitian(self.matrix, tol=HERMITIAN_TOL)


def measure_z(rho: DensityMatrix) -> SimplexVector:
    """Computational-basis measurement distribution: p_n = <n|rho|n>."""
    diag = np.real(np.diagonal(rho.matrix)).copy()
    # negative entries can only be eigensolver-scale noise on a valid state
    np.clip(diag, 0.0, None, out=diag)
    return SimplexVector(diag)


def matrix_to_json(m) -> dict:
    """Serialize to the {"rows", "cols", "re", "im"} row-major wire format."""
    arr = as_complex_matrix(m)
    return {
        "rows": int(arr.shape[0]),
        "cols": int(arr.shape[1]),
        "re": [float(x) for x in arr.real.ravel()],
        "im": [float(x) for x in arr.imag.ravel()],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        re = np.asarray(obj["re"], dtype=np.float64)
        im = np.asarray(obj["im"], dtype=np.float64)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix object: {exc}") from exc
    if re.size != rows * cols or im.size != rows * cols:
        raise ValueError(
            f"matrix payload length {re.size}/{im.size} does not match {rows}x{cols}"
        )
    return (re + 1j * im).reshape(rows, cols)
