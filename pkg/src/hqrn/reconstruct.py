"""Mapping trained classical weights onto unitary block parameters.

A real weight matrix W is split into a nonnegative pair W = W_P - W_N, each
half is written as c * (entrywise square of a contraction), the contractions
are embedded into unitaries of twice the size by the Halmos dilation, and
(optionally) each dilation is compiled into an ordered product of Pauli-term
exponentials with a Suzuki product formula.  gamma = c then makes the
measurement statistics of the success branch reproduce W exactly (up to the
product-formula error).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .blocks import QrbParams
from .linalg import (
    DensityMatrix,
    SimplexVector,
    as_complex_matrix,
    matrix_log_unitary,
)

DILATION_NORM_TOL = 1e-9
PAULI_COEFF_CUTOFF = 1e-12


@dataclass(frozen=True)
class SignSplit:
    """W = lam * (w_pos - w_neg) with entrywise-nonnegative, disjoint halves."""

    w_pos: np.ndarray
    w_neg: np.ndarray
    lam: float = 1.0


@dataclass(frozen=True)
class ContractionPair:
    """w_pos = c |m_plus|^2 and w_neg = c |m_minus|^2 (entrywise squares)."""

    m_plus: np.ndarray
    m_minus: np.ndarray
    c: float


@dataclass(frozen=True)
class TrotterSpec:
    """Product-formula order (even) and step count for compiling a unitary."""

    order: int = 2
    steps: int = 64

    def __post_init__(self):
        if self.order < 2 or self.order % 2 != 0:
            raise ValueError(f"order must be a positive even integer, got {self.order}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")


def split_weights(w) -> SignSplit:
    """Positive/negative split w_pos = (|W| + W)/2, w_neg = (|W| - W)/2.

    The scale is fixed at 1; all normalization happens in `to_contractions`.
    """
    arr = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("weight matrix contains non-finite entries")
    mag = np.abs(arr)
    return SignSplit(w_pos=(mag + arr) / 2.0, w_neg=(mag - arr) / 2.0, lam=1.0)


def spectral_norm(m) -> float:
    return float(np.linalg.norm(m, 2)) if np.asarray(m).size else 0.0


def to_contractions(split: SignSplit) -> ContractionPair:
    """Scale the entrywise square roots of the split into contractions.

    c = max of the squared spectral norms (floored at 1e-12) guarantees
    ||m_plus||_2 <= 1 and ||m_minus||_2 <= 1 with c * m^2 recovering the
    split halves exactly.
    """
    a_plus = np.sqrt(split.w_pos)
    a_minus = np.sqrt(split.w_neg)
    c = max(spectral_norm(a_plus) ** 2, spectral_norm(a_minus) ** 2, 1e-12)
    root = np.sqrt(c)
    return ContractionPair(m_plus=a_plus / root, m_minus=a_minus / root, c=c)


def halmos_dilate(m) -> np.ndarray:
    """Embed a contraction into a unitary of twice the dimension.

    Returns [[M, sqrt(I - M M^dag)], [sqrt(I - M^dag M), -M^dag]]; the
    top-left block is M itself.  Singular values in (1, 1 + 1e-9] are
    clamped to 1 (floating-point drift from the contraction scaling);
    anything larger is rejected.  All four blocks are assembled from one
    SVD of M so the unitarity cancellations hold to machine precision even
    when singular values sit exactly at 1.
    """
    arr = as_complex_matrix(m, "contraction")
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"contraction must be square, got {arr.shape}")
    u, s, vh = np.linalg.svd(arr)
    if s.max(initial=0.0) > 1.0 + DILATION_NORM_TOL:
        raise ValueError(f"spectral norm {s.max():.12f} exceeds 1: not a contraction")
    if s.max(initial=0.0) > 1.0:
        s = np.minimum(s, 1.0)
        arr = (u * s) @ vh
    complement = np.sqrt(np.clip(1.0 - s**2, 0.0, None))
    upper = (u * complement) @ u.conj().T
    lower = (vh.conj().T * complement) @ vh
    return np.block([[arr, upper], [lower, -arr.conj().T]])


def suzuki_coefficient(k: int) -> float:
    """Recursion coefficient p_k = (4 - 4^(1/(2k-1)))^(-1) for order 2k."""
    if k < 2:
        raise ValueError("base second-order formula has no coefficient (k must be >= 2)")
    return 1.0 / (4.0 - 4.0 ** (1.0 / (2 * k - 1)))


@lru_cache(maxsize=None)
def _single_qubit_paulis() -> dict:
    return {
        "I": np.eye(2, dtype=np.complex128),
        "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
        "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    }


def pauli_matrix(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string such as "XIZ" (first char = leftmost factor)."""
    mats = _single_qubit_paulis()
    out = np.array([[1.0 + 0j]])
    for ch in label:
        out = np.kron(out, mats[ch])
    return out


def _num_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


# Maps the 2x2 block [m00, m01, m10, m11] to its (I, X, Y, Z)/2 coefficients.
_PAULI_XFORM = 0.5 * np.array(
    [
        [1, 0, 0, 1],
        [0, 1, 1, 0],
        [0, 1j, -1j, 0],
        [1, 0, 0, -1],
    ],
    dtype=np.complex128,
)


def pauli_terms(h) -> list[tuple[str, float]]:
    """Pauli-string decomposition of a Hermitian matrix.

    Returns (label, coefficient) pairs with h = sum_s coeff_s * P_s, keeping
    coefficients above 1e-12 in lexicographic label order (I < X < Y < Z).
    """
    arr = as_complex_matrix(h, "hamiltonian")
    n = _num_qubits(arr.shape[0])
    # reshape to one 4-valued axis per qubit: index = 2*row_bit + col_bit
    tensor = arr.reshape((2,) * (2 * n))
    perm = [i for pair in zip(range(n), range(n, 2 * n)) for i in pair]
    tensor = tensor.transpose(perm).reshape((4,) * n)
    for axis in range(n):
        tensor = np.tensordot(_PAULI_XFORM, tensor, axes=([1], [axis]))
        tensor = np.moveaxis(tensor, 0, axis)
    coeffs = tensor.reshape(-1)
    if np.max(np.abs(coeffs.imag)) > 1e-10:
        raise ValueError("non-Hermitian input: Pauli coefficients are not real")
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=n)]
    return [
        (label, float(c.real))
        for label, c in zip(labels, coeffs)
        if abs(c.real) > PAULI_COEFF_CUTOFF
    ]


def _suzuki_schedule(order: int, t: float) -> list[tuple[int, float]]:
    """Ordered (term index placeholder, time) schedule for one S_order(t) step.

    The base formula is the symmetric second-order splitting (half-steps
    forward then reversed); higher even orders follow the three-factor
    recursion S_2k(t) = S_2k-2(p t) S_2k-2((1-2p) t) S_2k-2(p t).
    """
    if order == 2:
        return [("fwd", t / 2.0), ("rev", t / 2.0)]
    p = suzuki_coefficient(order // 2)
    inner = order - 2
    return (
        _suzuki_schedule(inner, p * t)
        + _suzuki_schedule(inner, (1.0 - 2.0 * p) * t)
        + _suzuki_schedule(inner, p * t)
    )


@dataclass(frozen=True)
class TrotterResult:
    factors: list[np.ndarray]
    approx: np.ndarray
    terms: list[tuple[str, float]]


def trotterize(u, spec: TrotterSpec) -> TrotterResult:
    """Compile a unitary into a product formula over its Pauli generator terms.

    Extracts H with u = exp(iH), splits H into Pauli strings, and builds
    approx = [S_order(1/steps)]^steps from exact exponentials
    exp(i s c P) = cos(sc) I + i sin(sc) P.  `factors` is the ordered gate
    list whose left-to-right product equals `approx`.
    """
    arr = as_complex_matrix(u, "unitary")
    h = matrix_log_unitary(arr)
    terms = pauli_terms(h)
    dim = arr.shape[0]
    eye = np.eye(dim, dtype=np.complex128)
    if not terms:
        return TrotterResult(factors=[eye.copy() for _ in range(spec.steps)], approx=eye, terms=[])

    pmats = [pauli_matrix(label) for label, _ in terms]
    step_factors: list[np.ndarray] = []
    for direction, t in _suzuki_schedule(spec.order, 1.0 / spec.steps):
        order_iter = range(len(terms)) if direction == "fwd" else reversed(range(len(terms)))
        for j in order_iter:
            theta = terms[j][1] * t
            step_factors.append(np.cos(theta) * eye + 1j * np.sin(theta) * pmats[j])

    step = eye
    for f in step_factors:
        step = step @ f
    approx = np.linalg.matrix_power(step, spec.steps)
    factors = step_factors * spec.steps
    return TrotterResult(factors=factors, approx=approx, terms=terms)


@dataclass(frozen=True)
class ReconstructedBlock:
    params: QrbParams
    w_rec: np.ndarray
    max_abs_error: float
    gamma: float
    spec: Optional[TrotterSpec]

    def report(self) -> dict:
        return {
            "max_abs_error": self.max_abs_error,
            "order": None if self.spec is None else self.spec.order,
            "steps": None if self.spec is None else self.spec.steps,
            "gamma": self.gamma,
        }


def recovered_weights(
    u_plus: np.ndarray, u_minus: np.ndarray, gamma: float, d: int
) -> np.ndarray:
    """Weights read back from the top-block amplitudes of the compiled pair."""
    a_plus = np.abs(u_plus[:d, :d]) ** 2
    a_minus = np.abs(u_minus[:d, :d]) ** 2
    return gamma * (a_plus - a_minus)


def reconstruct_block(
    w, bias, alpha: float, spec: Optional[TrotterSpec] = TrotterSpec()
) -> ReconstructedBlock:
    """Compile one classical block (W, b, alpha) into quantum block parameters.

    With spec=None the exact Halmos dilations are used; otherwise each
    dilation is Trotterized.  The returned parameters act on twice the
    classical dimension with the original outcomes as the success branch.
    """
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"weight matrix must be square, got {arr.shape}")
    d = arr.shape[0]
    _num_qubits(d)  # power-of-two check
    b = np.asarray(bias, dtype=np.float64)
    if b.shape != (d,):
        raise ValueError(f"bias length {b.shape} does not match weight dim {d}")

    split = split_weights(arr)
    pair = to_contractions(split)
    u_plus = halmos_dilate(pair.m_plus)
    u_minus = halmos_dilate(pair.m_minus)
    if spec is not None:
        u_plus = trotterize(u_plus, spec).approx
        u_minus = trotterize(u_minus, spec).approx
    gamma = split.lam * pair.c
    params = QrbParams(
        u_plus=u_plus,
        u_minus=u_minus,
        gamma=gamma,
        bias=np.concatenate([b, np.zeros(d)]),
        alpha=alpha,
        top_dim=d,
    )
    w_rec = recovered_weights(u_plus, u_minus, gamma, d)
    return ReconstructedBlock(
        params=params,
        w_rec=w_rec,
        max_abs_error=float(np.max(np.abs(w_rec - arr))),
        gamma=gamma,
        spec=spec,
    )


def embed_classical_input(y: SimplexVector, d: int) -> DensityMatrix:
    """Place diag(y) in the top-left block of the dilated (2d) space."""
    if y.dim != d:
        raise ValueError(f"input dim {y.dim} does not match declared dim {d}")
    out = np.zeros((2 * d, 2 * d), dtype=np.complex128)
    idx = np.arange(d)
    out[idx, idx] = y.values
    return DensityMatrix(out)
