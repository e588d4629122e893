"""Quantum residual blocks, their classical reduction, and cascade oracles.

A quantum block conjugates the state by a pair of unitaries, measures both
branches in the computational basis, pushes the scaled difference of the two
distributions through a normalized nonnegative activation, and convex-mixes
the resulting diagonal state back into the input.  Restricted to diagonal
inputs the same block is an ordinary affine-plus-activation residual layer,
which is what makes trained classical weights transferable to unitaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .linalg import (
    DensityMatrix,
    SimplexVector,
    as_complex_matrix,
    measure_z,
    unitarity_defect,
    UNITARY_TOL,
)

# Below this, the activation's normalizing sum counts as zero and the block
# falls back to the uniform distribution (maximum-entropy choice).
ACTIVATION_SUM_FLOOR = 1e-20


class Activation(enum.Enum):
    """Nonnegative activation used inside the normalized mapping."""

    RELU = "relu"
    SIGMOID = "sigmoid"

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        return expit(z)


def normalized_activation_raw(z: np.ndarray, kind: Activation) -> np.ndarray:
    """Rowwise f(z)/sum(f(z)) on the last axis, uniform rows where the sum vanishes."""
    f = kind.apply(np.asarray(z, dtype=np.float64))
    s = f.sum(axis=-1, keepdims=True)
    dim = f.shape[-1]
    degenerate = s < ACTIVATION_SUM_FLOOR
    safe = np.where(degenerate, 1.0, s)
    out = f / safe
    if np.any(degenerate):
        out = np.where(degenerate, 1.0 / dim, out)
    return out


def normalized_activation(z, kind: Activation) -> SimplexVector:
    """Normalized nonlinear map F(z)_n = f(z_n) / sum_l f(z_l)."""
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected 1-D pre-activation, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("pre-activation contains non-finite entries")
    return SimplexVector(normalized_activation_raw(arr, kind))


def _check_unitary(u: np.ndarray, name: str) -> np.ndarray:
    arr = as_complex_matrix(u, name)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got {arr.shape}")
    defect = unitarity_defect(arr)
    if defect > UNITARY_TOL:
        raise ValueError(f"{name} is not unitary: defect {defect:.3e}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QrbParams:
    """One quantum residual block: unitary pair, scale, bias, residual weight.

    ``top_dim`` marks block-encoded parameters produced by reconstruction:
    only measurement outcomes below it feed the activation and mixing (the
    dilation's success branch); outcomes past it are discarded mass whose
    loss is compensated exactly by gamma.  ``None`` means all outcomes count.
    """

    u_plus: np.ndarray
    u_minus: np.ndarray
    gamma: float
    bias: np.ndarray
    alpha: float
    top_dim: Optional[int] = None

    def __post_init__(self):
        up = _check_unitary(self.u_plus, "u_plus")
        um = _check_unitary(self.u_minus, "u_minus")
        if up.shape != um.shape:
            raise ValueError(f"unitary shapes differ: {up.shape} vs {um.shape}")
        b = np.array(self.bias, dtype=np.float64)
        if b.shape != (up.shape[0],):
            raise ValueError(f"bias length {b.shape} does not match dimension {up.shape[0]}")
        if not np.all(np.isfinite(b)):
            raise ValueError("bias contains non-finite entries")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        if self.top_dim is not None and not (0 < self.top_dim <= up.shape[0]):
            raise ValueError(f"top_dim {self.top_dim} out of range for dim {up.shape[0]}")
        b.setflags(write=False)
        object.__setattr__(self, "u_plus", up)
        object.__setattr__(self, "u_minus", um)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dim(self) -> int:
        return int(self.u_plus.shape[0])

    @property
    def active_dim(self) -> int:
        return self.dim if self.top_dim is None else self.top_dim


@dataclass(frozen=True)
class CrbParams:
    """Classical residual block: weight matrix, bias, residual weight."""

    weight: np.ndarray
    bias: np.ndarray
    alpha: float

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weight must be square, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias length {b.shape} does not match weight {w.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("weight/bias contain non-finite entries")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dim(self) -> int:
        return int(self.weight.shape[0])


@dataclass(frozen=True)
class QrbResult:
    rho: DensityMatrix
    h: SimplexVector
    p_plus: SimplexVector
    p_minus: SimplexVector


@dataclass(frozen=True)
class CrbResult:
    y: SimplexVector
    h: SimplexVector


def _mix_with_populations(
    rho: DensityMatrix, h: np.ndarray, alpha: float, top: int
) -> DensityMatrix:
    """alpha * rho + (1 - alpha) * diag(h) with h supported on the first `top` outcomes."""
    out = alpha * rho.matrix.copy()
    idx = np.arange(top)
    out[idx, idx] += (1.0 - alpha) * h
    return DensityMatrix((out + out.conj().T) / 2.0)


def qrb_forward(rho: DensityMatrix, params: QrbParams, kind: Activation) -> QrbResult:
    """One quantum residual block step.

    Measures both unitary branches, forms h = F(gamma (p+ - p-) + b) over the
    active outcomes, and returns alpha rho + (1 - alpha) sum_n h_n |n><n|.
    """
    if rho.dim != params.dim:
        raise ValueError(f"state dim {rho.dim} does not match block dim {params.dim}")
    p_plus = measure_branch(rho, params.u_plus)
    p_minus = measure_branch(rho, params.u_minus)
    top = params.active_dim
    z = params.gamma * (p_plus.values[:top] - p_minus.values[:top]) + params.bias[:top]
    h = normalized_activation(z, kind)
    rho_out = _mix_with_populations(rho, h.values, params.alpha, top)
    return QrbResult(rho=rho_out, h=h, p_plus=p_plus, p_minus=p_minus)


def measure_branch(rho: DensityMatrix, u: np.ndarray) -> SimplexVector:
    """Distribution of computational-basis outcomes after applying u."""
    return measure_z(rho.evolved(u))


def crb_forward(y: SimplexVector, params: CrbParams, kind: Activation) -> CrbResult:
    """Classical reduction of the block: y -> (1 - alpha) F(W y + b) + alpha y."""
    if y.dim != params.dim:
        raise ValueError(f"input dim {y.dim} does not match block dim {params.dim}")
    z = params.weight @ y.values + params.bias
    h = normalized_activation(z, kind)
    y_out = SimplexVector((1.0 - params.alpha) * h.values + params.alpha * y.values)
    return CrbResult(y=y_out, h=h)


def weights_from_unitaries(params: QrbParams, basis: Optional[np.ndarray] = None) -> np.ndarray:
    """Induced classical weight matrix of a quantum block.

    Entry (n, m) = gamma * (|<n|U+|phi_m>|^2 - |<n|U-|phi_m>|^2), with phi_m
    the columns of `basis` (computational basis when None).  Row n is the
    measurement outcome, column m the input component, so the induced layer
    acts as sum_m W[n, m] y_m.
    """
    if basis is None:
        a_plus = np.abs(params.u_plus) ** 2
        a_minus = np.abs(params.u_minus) ** 2
    else:
        b = as_complex_matrix(basis, "basis")
        if b.shape != params.u_plus.shape:
            raise ValueError(f"basis shape {b.shape} does not match block dim {params.dim}")
        a_plus = np.abs(params.u_plus @ b) ** 2
        a_minus = np.abs(params.u_minus @ b) ** 2
    return params.gamma * (a_plus - a_minus)


def induced_crb(params: QrbParams) -> CrbParams:
    """CRB acting identically to the block on computational-basis inputs."""
    if params.top_dim is not None:
        raise ValueError("induced CRB of a block-encoded QRB is handled by reconstruction")
    return CrbParams(
        weight=weights_from_unitaries(params),
        bias=params.bias,
        alpha=params.alpha,
    )


@dataclass(frozen=True)
class CascadeStep:
    h: SimplexVector
    rho: DensityMatrix


@dataclass(frozen=True)
class QrbCascadeResult:
    rho: DensityMatrix
    steps: tuple[CascadeStep, ...]


def cascade_qrb(
    rho0: DensityMatrix, blocks: Sequence[QrbParams], kind: Activation
) -> QrbCascadeResult:
    """Sequential application of quantum blocks, keeping the per-block trace."""
    rho = rho0
    steps = []
    for params in blocks:
        result = qrb_forward(rho, params, kind)
        rho = result.rho
        steps.append(CascadeStep(h=result.h, rho=rho))
    return QrbCascadeResult(rho=rho, steps=tuple(steps))


def cascade_crb(
    y0: SimplexVector, blocks: Sequence[CrbParams], kind: Activation
) -> SimplexVector:
    """Sequential application of classical blocks."""
    y = y0
    for params in blocks:
        y = crb_forward(y, params, kind).y
    return y


def closed_form_output(
    rho0: DensityMatrix, blocks: Sequence[QrbParams], kind: Activation
) -> DensityMatrix:
    """Depth-k output evaluated from the explicit recursion, not the cascade.

    Works entirely with transition-amplitude tables against the spectral
    decomposition of the input: coefficients of block k are

        h_n(k) = F( (1-a) sum_{j<=k-2} a^j [W_k h(k-1-j)]_n
                    + a^{k-1} [Omega_k h(0)]_n + b_n(k) )

    and the output state is (1-a) sum_j a^j diag(h(k-j)) + a^k rho0.  No
    density matrix is ever propagated, so this is an independent oracle for
    `cascade_qrb`.  Requires all blocks to share one residual weight.
    """
    if not blocks:
        return rho0
    if any(b.top_dim is not None for b in blocks):
        raise ValueError("closed form applies to full blocks only")
    alphas = {b.alpha for b in blocks}
    if len(alphas) != 1:
        raise ValueError("closed form requires a shared residual weight across blocks")
    alpha = blocks[0].alpha
    if any(b.dim != rho0.dim for b in blocks):
        raise ValueError("block dimension does not match the input state")

    h0, phi = rho0.eigendecomposition()
    hs: list[np.ndarray] = []
    for k, blk in enumerate(blocks, start=1):
        w = weights_from_unitaries(blk)
        omega = weights_from_unitaries(blk, basis=phi)
        z = alpha ** (k - 1) * (omega @ h0) + blk.bias
        for j in range(k - 1):
            z = z + (1.0 - alpha) * alpha**j * (w @ hs[k - 2 - j])
        hs.append(normalized_activation_raw(z, kind))

    k = len(blocks)
    populations = np.zeros(rho0.dim)
    for j in range(k):
        populations += alpha**j * hs[k - 1 - j]
    out = alpha**k * rho0.matrix + (1.0 - alpha) * np.diag(populations.astype(np.complex128))
    return DensityMatrix((out + out.conj().T) / 2.0)


def qrb_params_to_json(params: QrbParams) -> dict:
    from .linalg import matrix_to_json

    obj = {
        "u_plus": matrix_to_json(params.u_plus),
        "u_minus": matrix_to_json(params.u_minus),
        "gamma": params.gamma,
        "bias": [float(x) for x in params.bias],
        "alpha": params.alpha,
    }
    if params.top_dim is not None:
        obj["top_dim"] = int(params.top_dim)
    return obj


def qrb_params_from_json(obj: dict) -> QrbParams:
    from .linalg import matrix_from_json

    return QrbParams(
        u_plus=matrix_from_json(obj["u_plus"]),
        u_minus=matrix_from_json(obj["u_minus"]),
        gamma=float(obj["gamma"]),
        bias=np.asarray(obj["bias"], dtype=np.float64),
        alpha=float(obj["alpha"]),
        top_dim=obj.get("top_dim"),
    )


def crb_params_to_json(params: CrbParams) -> dict:
    from .linalg import matrix_to_json

    return {
        "weight": matrix_to_json(params.weight),
        "bias": [float(x) for x in params.bias],
        "alpha": params.alpha,
    }


def crb_params_from_json(obj: dict) -> CrbParams:
    from .linalg import matrix_from_json

    weight = matrix_from_json(obj["weight"])
    if np.max(np.abs(weight.imag)) > 0:
        raise ValueError("classical weight matrix must be real")
    return CrbParams(
        weight=weight.real,
        bias=np.asarray(obj["bias"], dtype=np.float64),
        alpha=float(obj["alpha"]),
    )
