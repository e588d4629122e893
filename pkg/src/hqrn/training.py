"""Training: greedy optimization of quantum blocks and gradient training of
classical cascades.

The quantum side optimizes one block at a time (earlier blocks frozen)
against a distance-based contrastive loss on the measured output
distributions, using central finite differences over the 35 block parameters
with a monotone momentum descent.  The classical side trains the projection
+ residual cascade + linear head with hand-derived backpropagation through
the exact forward pass, under RMSProp or Adam.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial.distance import squareform, pdist

from .blocks import Activation, QrbParams, normalized_activation_raw
from .entangle import LabeledState
from .linalg import SimplexVector
from .sampling import derive_seed

logger = logging.getLogger(__name__)

PIXEL_EPS = 1e-20


# ---------------------------------------------------------------------------
# Two-qubit ansatz
# ---------------------------------------------------------------------------

_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
_XX = np.kron(_X, _X)
_YY = np.kron(_Y, _Y)
_ZZ = np.kron(_Z, _Z)
_EYE4 = np.eye(4, dtype=np.complex128)

ANSATZ_PARAMS = 15


def _rotation_zyz(a: float, b: float, c: float) -> np.ndarray:
    """General single-qubit rotation R_z(a) R_y(b) R_z(c)."""
    ea = np.exp(-0.5j * a)
    ec = np.exp(-0.5j * c)
    cb, sb = np.cos(b / 2.0), np.sin(b / 2.0)
    return np.array(
        [
            [ea * cb * ec, -ea * sb * ec.conjugate()],
            [ea.conjugate() * sb * ec, ea.conjugate() * cb * ec.conjugate()],
        ],
        dtype=np.complex128,
    )


def ansatz_unitary(theta: Sequence[float]) -> np.ndarray:
    """Two-qubit unitary from 15 angles.

    Layout: pre-rotations (3 angles per qubit), entangling exponent
    exp(i (tx XX + ty YY + tz ZZ)), post-rotations (3 angles per qubit):
    theta = [pre1, pre2, tx, ty, tz, post1, post2].  All-zero angles give
    the identity.
    """
    t = np.asarray(theta, dtype=np.float64)
    if t.shape != (ANSATZ_PARAMS,):
        raise ValueError(f"expected {ANSATZ_PARAMS} angles, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("angles contain non-finite entries")
    pre = np.kron(_rotation_zyz(*t[0:3]), _rotation_zyz(*t[3:6]))
    post = np.kron(_rotation_zyz(*t[9:12]), _rotation_zyz(*t[12:15]))
    tx, ty, tz = t[6:9]
    ent = (
        (np.cos(tx) * _EYE4 + 1j * np.sin(tx) * _XX)
        @ (np.cos(ty) * _EYE4 + 1j * np.sin(ty) * _YY)
        @ (np.cos(tz) * _EYE4 + 1j * np.sin(tz) * _ZZ)
    )
    return post @ ent @ pre


# ---------------------------------------------------------------------------
# Contrastive loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContrastiveLossConfig:
    beta: float = 5.0
    d_min: float = 0.1
    close_threshold: float = 1e-2
    close_penalty_scale: float = 100.0

    def __post_init__(self):
        if min(self.beta, self.d_min, self.close_threshold, self.close_penalty_scale) <= 0:
            raise ValueError("all contrastive loss parameters must be positive")


@dataclass(frozen=True)
class ContrastiveLoss:
    total: float
    l1: float
    l2: float
    l3: float


def _points_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=np.float64)
    return np.stack([p.values if isinstance(p, SimplexVector) else np.asarray(p) for p in points])


def contrastive_loss(points, labels, cfg: ContrastiveLossConfig) -> ContrastiveLoss:
    """Margin + repulsion + collision penalty over pairwise Euclidean distances.

    l1 = -mean_i tanh(d_i^diff - d_i^same) over points whose class has at
    least one other member; l2 = mean over cross-class pairs of
    exp(-D/d_min); l3 = penalty_scale * #(cross-class pairs closer than the
    collision threshold); total = l1 + beta*l2 + l3.
    """
    pts = _points_array(points)
    y = np.asarray(labels)
    if pts.shape[0] != y.shape[0]:
        raise ValueError("points and labels differ in length")
    if pts.shape[0] < 2:
        raise ValueError("need at least two points")
    if np.unique(y).size < 2:
        raise ValueError("need points from both classes")
    dist = squareform(pdist(pts))
    n = pts.shape[0]
    same = y[:, None] == y[None, :]
    np.fill_diagonal(same, False)
    diff = y[:, None] != y[None, :]

    big = np.inf
    d_same = np.where(same, dist, big).min(axis=1)
    d_diff = np.where(diff, dist, big).min(axis=1)
    counted = np.isfinite(d_same)  # singleton classes contribute no margin term
    l1 = float(-np.mean(np.tanh(d_diff[counted] - d_same[counted]))) if counted.any() else 0.0

    iu = np.triu_indices(n, k=1)
    cross = diff[iu]
    cross_d = dist[iu][cross]
    l2 = float(np.mean(np.exp(-cross_d / cfg.d_min))) if cross_d.size else 0.0
    n_close = int(np.sum(cross_d < cfg.close_threshold))
    l3 = float(cfg.close_penalty_scale * n_close)
    total = l1 + cfg.beta * l2 + l3
    return ContrastiveLoss(total=total, l1=l1, l2=l2, l3=l3)


# ---------------------------------------------------------------------------
# Greedy layer-wise quantum block training
# ---------------------------------------------------------------------------

BLOCK_PARAM_COUNT = 2 * ANSATZ_PARAMS + 4 + 1  # two ansatz angle sets, bias(4), gamma


@dataclass(frozen=True)
class GreedyConfig:
    restarts: int = 5
    max_steps: int = 200
    learning_rate: float = 0.2
    momentum: float = 0.9
    fd_step: float = 1e-4
    min_learning_rate: float = 1e-6
    patience: int = 25
    min_improvement: float = 1e-4
    alpha: float = 0.5
    loss: ContrastiveLossConfig = field(default_factory=ContrastiveLossConfig)

    def __post_init__(self):
        if self.restarts < 1 or self.max_steps < 1:
            raise ValueError("restarts and max_steps must be >= 1")
        if self.learning_rate <= 0 or self.fd_step <= 0:
            raise ValueError("learning_rate and fd_step must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")


def _batch_branch_probs(rhos: np.ndarray, u: np.ndarray) -> np.ndarray:
    """diag(U rho U^dag) for a stack of states; shape (N, d)."""
    p = np.sum((u @ rhos) * u.conj()[None, :, :], axis=2).real
    return np.clip(p, 0.0, None)


def _batch_block_points(
    rhos: np.ndarray, diag0: np.ndarray, theta: np.ndarray, kind: Activation, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Output Z-distributions and h of one candidate block over a state batch."""
    u_plus = ansatz_unitary(theta[0:15])
    u_minus = ansatz_unitary(theta[15:30])
    bias = theta[30:34]
    gamma = theta[34]
    p_plus = _batch_branch_probs(rhos, u_plus)
    p_minus = _batch_branch_probs(rhos, u_minus)
    h = normalized_activation_raw(gamma * (p_plus - p_minus) + bias, kind)
    return alpha * diag0 + (1.0 - alpha) * h, h


def _make_block_loss(
    rhos: np.ndarray,
    diag0: np.ndarray,
    labels: np.ndarray,
    kind: Activation,
    cfg: GreedyConfig,
) -> Callable[[np.ndarray], float]:
    """Closure computing the candidate-block contrastive loss.

    Label masks and pair indices are fixed across the whole optimization, so
    they are precomputed once; the per-call work is the batched block
    forward, one pdist, and three masked reductions.  Matches
    `contrastive_loss` exactly (verified by tests).
    """
    n = labels.shape[0]
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = ~(labels[:, None] == labels[None, :])
    iu = np.triu_indices(n, k=1)
    cross_flat = diff[iu]
    counted = same.any(axis=1)
    loss_cfg = cfg.loss

    def loss_fn(theta: np.ndarray) -> float:
        points, _ = _batch_block_points(rhos, diag0, theta, kind, cfg.alpha)
        dist = squareform(pdist(points))
        d_same = np.where(same, dist, np.inf).min(axis=1)
        d_diff = np.where(diff, dist, np.inf).min(axis=1)
        l1 = float(-np.mean(np.tanh(d_diff[counted] - d_same[counted]))) if counted.any() else 0.0
        cross_d = dist[iu][cross_flat]
        l2 = float(np.mean(np.exp(-cross_d / loss_cfg.d_min))) if cross_d.size else 0.0
        l3 = loss_cfg.close_penalty_scale * int(np.sum(cross_d < loss_cfg.close_threshold))
        return l1 + loss_cfg.beta * l2 + l3

    return loss_fn


def _init_block_theta(rng: np.random.Generator) -> np.ndarray:
    theta = np.empty(BLOCK_PARAM_COUNT)
    theta[0:30] = rng.uniform(-np.pi, np.pi, 30)
    theta[30:34] = rng.normal(0.0, 0.05, 4)
    theta[34] = 1.0 + rng.normal(0.0, 0.1)
    return theta


def _descend(
    loss_fn: Callable[[np.ndarray], float], theta0: np.ndarray, cfg: GreedyConfig
) -> tuple[np.ndarray, float]:
    """Momentum descent with finite-difference gradients and monotone acceptance.

    Steps that would increase the loss are rejected (velocity reset, step
    size halved), so the accepted-loss trace is non-increasing.  Returns
    (best theta, best loss); the loss may be non-finite if theta0 already is.
    """
    theta = theta0.copy()
    current = loss_fn(theta)
    if not np.isfinite(current):
        return theta, current
    velocity = np.zeros_like(theta)
    lr = cfg.learning_rate
    stall = 0
    h = cfg.fd_step
    for _ in range(cfg.max_steps):
        grad = np.empty_like(theta)
        for i in range(theta.size):
            probe = theta.copy()
            probe[i] = theta[i] + h
            up = loss_fn(probe)
            probe[i] = theta[i] - h
            down = loss_fn(probe)
            grad[i] = (up - down) / (2.0 * h)
        if not np.all(np.isfinite(grad)):
            return theta, np.inf
        velocity = cfg.momentum * velocity - lr * grad
        candidate = theta + velocity
        value = loss_fn(candidate)
        if np.isfinite(value) and value <= current:
            improvement = current - value
            theta, current = candidate, value
            stall = stall + 1 if improvement < cfg.min_improvement else 0
        else:
            velocity[:] = 0.0
            lr *= 0.5
            stall += 1
        if lr < cfg.min_learning_rate or stall > cfg.patience:
            break
    return theta, current


def block_params_from_theta(theta: np.ndarray, alpha: float) -> QrbParams:
    return QrbParams(
        u_plus=ansatz_unitary(theta[0:15]),
        u_minus=ansatz_unitary(theta[15:30]),
        gamma=float(theta[34]),
        bias=theta[30:34].copy(),
        alpha=alpha,
    )


def greedy_train_qrb_stack(
    train: Sequence[LabeledState],
    depth: int,
    cfg: GreedyConfig,
    seed: int,
    kind: Activation = Activation.RELU,
) -> list[QrbParams]:
    """Sequentially optimize `depth` quantum blocks, freezing earlier ones.

    Each block takes the best of cfg.restarts random initializations, each
    descending for at most cfg.max_steps accepted/rejected steps.  Restarts
    that diverge (non-finite loss) are discarded; a block where every
    restart diverges raises.  Deterministic given (seed, cfg).
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth == 0:
        return []
    if not train:
        raise ValueError("training set is empty")
    labels = np.array([s.label for s in train])
    if np.unique(labels).size < 2:
        raise ValueError("training set must contain both classes")
    rhos = np.stack([s.state.matrix for s in train])
    blocks: list[QrbParams] = []
    for k in range(depth):
        diag0 = np.clip(np.real(np.einsum("nii->ni", rhos)), 0.0, None)
        loss_fn = _make_block_loss(rhos, diag0, labels, kind, cfg)
        best_theta, best_loss = None, np.inf
        for r in range(cfg.restarts):
            rng = np.random.default_rng(derive_seed(seed, k, r))
            theta, value = _descend(loss_fn, _init_block_theta(rng), cfg)
            if np.isfinite(value) and value < best_loss:
                best_theta, best_loss = theta, value
        if best_theta is None:
            raise RuntimeError(f"all restarts diverged while training block {k + 1}")
        blocks.append(block_params_from_theta(best_theta, cfg.alpha))
        points, h = _batch_block_points(rhos, diag0, best_theta, kind, cfg.alpha)
        new_rhos = cfg.alpha * rhos.copy()
        idx = np.arange(4)
        new_rhos[:, idx, idx] += (1.0 - cfg.alpha) * h
        rhos = new_rhos
        logger.info("greedy block %d/%d trained, loss %.6f", k + 1, depth, best_loss)
    return blocks


def propagate_through_stack(
    states: Sequence[LabeledState] | np.ndarray,
    blocks: Sequence[QrbParams],
    kind: Activation = Activation.RELU,
) -> np.ndarray:
    """Z-measurement features after a stack of (full, 4-dim) quantum blocks."""
    if isinstance(states, np.ndarray):
        rhos = states
    else:
        rhos = np.stack([s.state.matrix for s in states])
    for params in blocks:
        diag = np.clip(np.real(np.einsum("nii->ni", rhos)), 0.0, None)
        p_plus = _batch_branch_probs(rhos, params.u_plus)
        p_minus = _batch_branch_probs(rhos, params.u_minus)
        h = normalized_activation_raw(
            params.gamma * (p_plus - p_minus) + params.bias, kind
        )
        new_rhos = params.alpha * rhos.copy()
        idx = np.arange(rhos.shape[1])
        new_rhos[:, idx, idx] += (1.0 - params.alpha) * h
        rhos = new_rhos
    return np.clip(np.real(np.einsum("nii->ni", rhos)), 0.0, None)


# ---------------------------------------------------------------------------
# Classical cascade: forward, backward, optimizers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CascadeArch:
    """Input projection (optional) + residual blocks + linear head."""

    input_dim: int
    state_dim: int
    n_blocks: int
    n_outputs: int
    alpha: float = 0.5
    use_projection: bool = True

    def __post_init__(self):
        if min(self.input_dim, self.state_dim, self.n_blocks + 1, self.n_outputs) < 1:
            raise ValueError("architecture dimensions must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if not self.use_projection and self.input_dim != self.state_dim:
            raise ValueError("projection-free cascade needs input_dim == state_dim")


@dataclass
class CascadeParams:
    arch: CascadeArch
    projection: Optional[np.ndarray]  # (state_dim, input_dim)
    projection_bias: Optional[np.ndarray]
    weights: list[np.ndarray]  # (state_dim, state_dim) each
    biases: list[np.ndarray]
    head_weight: np.ndarray  # (n_outputs, state_dim)
    head_bias: np.ndarray

    @classmethod
    def init(cls, arch: CascadeArch, seed: int) -> "CascadeParams":
        """Near-identity block initialization with deliberately large scales.

        W = I + small noise makes each block's normalized activation act as
        roughly the identity on the simplex (the normalization is scale
        invariant), so fine-grained input structure survives the full depth
        at initialization instead of contracting toward a fixed point.
        Projection and head start large: the scale invariance means the data
        gradient shrinks with the parameter scale, and a small init lets
        weight decay dominate and erase the learned direction.
        """
        rng = np.random.default_rng(seed)
        proj = proj_b = None
        if arch.use_projection:
            proj = rng.normal(0.0, 4.0 / np.sqrt(arch.input_dim), (arch.state_dim, arch.input_dim))
            proj_b = np.zeros(arch.state_dim)
        weights = [
            np.eye(arch.state_dim)
            + rng.normal(0.0, 0.1 / np.sqrt(arch.state_dim), (arch.state_dim, arch.state_dim))
            for _ in range(arch.n_blocks)
        ]
        biases = [np.zeros(arch.state_dim) for _ in range(arch.n_blocks)]
        head_w = rng.normal(0.0, 1.0, (arch.n_outputs, arch.state_dim))
        head_b = np.zeros(arch.n_outputs)
        return cls(arch, proj, proj_b, weights, biases, head_w, head_b)

    def flatten(self) -> np.ndarray:
        parts = []
        if self.projection is not None:
            parts += [self.projection.ravel(), self.projection_bias.ravel()]
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        parts += [self.head_weight.ravel(), self.head_bias.ravel()]
        return np.concatenate(parts)

    def assign_flat(self, flat: np.ndarray) -> None:
        pos = 0

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape))
            chunk = flat[pos : pos + size].reshape(shape)
            pos += size
            return chunk.copy()

        if self.projection is not None:
            self.projection = take(self.projection.shape)
            self.projection_bias = take(self.projection_bias.shape)
        pairs = [(take(w.shape), take(b.shape)) for w, b in zip(self.weights, self.biases)]
        self.weights = [w for w, _ in pairs]
        self.biases = [b for _, b in pairs]
        self.head_weight = take(self.head_weight.shape)
        self.head_bias = take(self.head_bias.shape)
        if pos != flat.size:
            raise ValueError("flat parameter vector has wrong length")


def _normalized_relu_forward(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward through h = relu(z)/sum relu(z) keeping what backward needs."""
    a = np.maximum(z, 0.0)
    s = a.sum(axis=1, keepdims=True)
    degenerate = (s < 1e-20).ravel()
    safe = np.where(s < 1e-20, 1.0, s)
    h = a / safe
    if degenerate.any():
        h[degenerate] = 1.0 / z.shape[1]
    return h, a, s


def _normalized_relu_backward(
    grad_h: np.ndarray, z: np.ndarray, h: np.ndarray, s: np.ndarray
) -> np.ndarray:
    """Gradient through the normalized ReLU; degenerate rows get zero gradient."""
    safe = np.where(s < 1e-20, 1.0, s)
    inner = (grad_h * h).sum(axis=1, keepdims=True)
    grad_a = (grad_h - inner) / safe
    grad_z = np.where(z > 0.0, grad_a, 0.0)
    grad_z[(s < 1e-20).ravel()] = 0.0
    return grad_z


@dataclass
class _ForwardCache:
    y_in: np.ndarray
    blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]  # (y_prev, z, h, s)
    proj_z: Optional[np.ndarray]
    proj_h: Optional[np.ndarray]
    proj_s: Optional[np.ndarray]
    y_final: np.ndarray
    scores: np.ndarray


def cascade_forward(params: CascadeParams, x: np.ndarray) -> _ForwardCache:
    """Batched forward pass; x has shape (N, input_dim)."""
    arch = params.arch
    proj_z = proj_h = proj_s = None
    if params.projection is not None:
        proj_z = x @ params.projection.T + params.projection_bias
        proj_h, _, proj_s = _normalized_relu_forward(proj_z)
        y = proj_h
    else:
        y = x
    steps = []
    for w, b in zip(params.weights, params.biases):
        z = y @ w.T + b
        h, _, s = _normalized_relu_forward(z)
        y_next = arch.alpha * y + (1.0 - arch.alpha) * h
        steps.append((y, z, h, s))
        y = y_next
    scores = y @ params.head_weight.T + params.head_bias
    return _ForwardCache(x, steps, proj_z, proj_h, proj_s, y, scores)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _softplus(t: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, t)


def cascade_loss_and_grads(
    params: CascadeParams,
    x: np.ndarray,
    targets: np.ndarray,
    loss: str = "cross_entropy",
    positive_weight: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient (flattened, analytic).

    loss = "cross_entropy": targets are integer class indices, softmax head.
    loss = "weighted_bce": targets in {0, 1}, single-logit sigmoid head with
    the positive class weighted by `positive_weight`.
    """
    cache = cascade_forward(params, x)
    n = x.shape[0]
    if loss == "cross_entropy":
        probs = _softmax(cache.scores)
        shifted = cache.scores - cache.scores.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1)) + cache.scores.max(axis=1)
        value = float(np.mean(logz - cache.scores[np.arange(n), targets]))
        grad_scores = probs.copy()
        grad_scores[np.arange(n), targets] -= 1.0
        grad_scores /= n
    elif loss == "weighted_bce":
        if cache.scores.shape[1] != 1:
            raise ValueError("weighted_bce needs a single-logit head")
        t = cache.scores[:, 0]
        y = targets.astype(np.float64)
        value = float(np.mean(positive_weight * y * _softplus(-t) + (1.0 - y) * _softplus(t)))
        sig = 1.0 / (1.0 + np.exp(-np.clip(t, -500, 500)))
        grad_t = (-positive_weight * y * (1.0 - sig) + (1.0 - y) * sig) / n
        grad_scores = grad_t[:, None]
    else:
        raise ValueError(f"unknown loss {loss!r}")

    grads = CascadeParams(
        params.arch,
        None if params.projection is None else np.zeros_like(params.projection),
        None if params.projection is None else np.zeros_like(params.projection_bias),
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
        np.zeros_like(params.head_weight),
        np.zeros_like(params.head_bias),
    )
    grads.head_weight += grad_scores.T @ cache.y_final
    grads.head_bias += grad_scores.sum(axis=0)
    grad_y = grad_scores @ params.head_weight
    alpha = params.arch.alpha
    for k in range(len(params.weights) - 1, -1, -1):
        y_prev, z, h, s = cache.blocks[k]
        grad_h = (1.0 - alpha) * grad_y
        grad_z = _normalized_relu_backward(grad_h, z, h, s)
        grads.weights[k] += grad_z.T @ y_prev
        grads.biases[k] += grad_z.sum(axis=0)
        grad_y = alpha * grad_y + grad_z @ params.weights[k]
    if params.projection is not None:
        grad_z = _normalized_relu_backward(grad_y, cache.proj_z, cache.proj_h, cache.proj_s)
        grads.projection += grad_z.T @ cache.y_in
        grads.projection_bias += grad_z.sum(axis=0)
    return value, grads.flatten()


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "rmsprop"  # "rmsprop" or "adam"
    learning_rate: float = 3e-3
    weight_decay: float = 1e-4
    epochs: int = 50
    batch_size: int = 32

    def __post_init__(self):
        if self.algorithm not in ("rmsprop", "adam"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 0:
            raise ValueError("epochs and batch_size must be nonnegative")


class _FirstOrderOptimizer:
    """RMSProp / Adam update on a flat parameter vector, coupled weight decay."""

    def __init__(self, cfg: OptimizerConfig, size: int):
        self.cfg = cfg
        self.square = np.zeros(size)
        self.moment = np.zeros(size)
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        g = grad + cfg.weight_decay * flat
        self.t += 1
        if cfg.algorithm == "rmsprop":
            self.square = 0.99 * self.square + 0.01 * g**2
            return flat - cfg.learning_rate * g / (np.sqrt(self.square) + 1e-8)
        self.moment = 0.9 * self.moment + 0.1 * g
        self.square = 0.999 * self.square + 0.001 * g**2
        m_hat = self.moment / (1.0 - 0.9**self.t)
        v_hat = self.square / (1.0 - 0.999**self.t)
        return flat - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    train_error: float
    test_error: Optional[float]


@dataclass
class TrainedCascade:
    params: CascadeParams
    metrics: list[EpochMetrics]
    checkpoints: list[CascadeParams]


def _predict(params: CascadeParams, x: np.ndarray, loss: str) -> np.ndarray:
    scores = cascade_forward(params, x).scores
    if loss == "weighted_bce":
        return (scores[:, 0] > 0.0).astype(np.int64)
    return scores.argmax(axis=1)


def _error_rate(params: CascadeParams, x: np.ndarray, t: np.ndarray, loss: str) -> float:
    return float(np.mean(_predict(params, x, loss) != t))


def _clone_params(params: CascadeParams) -> CascadeParams:
    return CascadeParams(
        params.arch,
        None if params.projection is None else params.projection.copy(),
        None if params.projection_bias is None else params.projection_bias.copy(),
        [w.copy() for w in params.weights],
        [b.copy() for b in params.biases],
        params.head_weight.copy(),
        params.head_bias.copy(),
    )


def train_crb_cascade(
    data: Sequence[tuple],
    arch: CascadeArch,
    cfg: OptimizerConfig,
    loss: str,
    seed: int,
    test_data: Optional[Sequence[tuple]] = None,
    keep_checkpoints: bool = False,
) -> TrainedCascade:
    """Gradient training of the classical cascade.

    `data` holds (simplex vector, class) pairs; classes are integer indices
    for cross-entropy or {0, 1} for the weighted binary head (1 = positive
    class, weighted by N_neg / N_pos).  Deterministic given seed; non-finite
    loss aborts with a diagnostic.
    """
    if not data:
        raise ValueError("training data is empty")
    x = np.stack([np.asarray(v.values if isinstance(v, SimplexVector) else v) for v, _ in data])
    t = np.array([c for _, c in data], dtype=np.int64)
    if loss == "cross_entropy" and (t.min() < 0 or t.max() >= arch.n_outputs):
        raise ValueError("class index outside the head range")
    x_test = t_test = None
    if test_data:
        x_test = np.stack(
            [np.asarray(v.values if isinstance(v, SimplexVector) else v) for v, _ in test_data]
        )
        t_test = np.array([c for _, c in test_data], dtype=np.int64)

    positive_weight = 1.0
    if loss == "weighted_bce":
        n_pos = int(np.sum(t == 1))
        n_neg = int(np.sum(t == 0))
        if n_pos == 0 or n_neg == 0:
            raise ValueError("weighted_bce needs both classes present")
        positive_weight = n_neg / n_pos

    params = CascadeParams.init(arch, derive_seed(seed, 0))
    flat = params.flatten()
    optimizer = _FirstOrderOptimizer(cfg, flat.size)
    shuffle_rng = np.random.default_rng(derive_seed(seed, 1))
    n = x.shape[0]
    batch = n if cfg.batch_size in (0, None) else min(cfg.batch_size, n)
    metrics: list[EpochMetrics] = []
    checkpoints: list[CascadeParams] = []

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            params.assign_flat(flat)
            value, grad = cascade_loss_and_grads(params, x[idx], t[idx], loss, positive_weight)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss {value} at epoch {epoch}, batch starting {start}"
                )
            epoch_loss += value * idx.size
            flat = optimizer.step(flat, grad)
        params.assign_flat(flat)
        entry = EpochMetrics(
            epoch=epoch + 1,
            loss=epoch_loss / n,
            train_error=_error_rate(params, x, t, loss),
            test_error=None if x_test is None else _error_rate(params, x_test, t_test, loss),
        )
        metrics.append(entry)
        if keep_checkpoints:
            checkpoints.append(_clone_params(params))
    params.assign_flat(flat)
    return TrainedCascade(params=params, metrics=metrics, checkpoints=checkpoints)


# ---------------------------------------------------------------------------
# Image preprocessing and classification head
# ---------------------------------------------------------------------------


def preprocess_image(pixels: Sequence[float]) -> np.ndarray:
    """Clip-and-normalize a flattened image onto (a hair below) the simplex.

    x_i -> max(x_i, 0) / (sum_j max(x_j, 0) + 1e-20).  An all-zero image
    yields the zero vector; callers replace it (see `prepare_simplex_inputs`).
    """
    x = np.asarray(pixels, dtype=np.float64).ravel()
    if x.size != 784:
        raise ValueError(f"expected 784 pixels, got {x.size}")
    clipped = np.maximum(x, 0.0)
    return clipped / (clipped.sum() + PIXEL_EPS)


def prepare_simplex_inputs(batch: np.ndarray) -> np.ndarray:
    """Preprocess a stack of images, replacing degenerate all-zero rows by uniform."""
    out = np.stack([preprocess_image(row) for row in batch])
    sums = out.sum(axis=1)
    degenerate = sums < 0.5
    if degenerate.any():
        logger.warning("replacing %d all-zero images with the uniform vector", degenerate.sum())
        out[degenerate] = 1.0 / out.shape[1]
    return out


def classify(y, head_weight: np.ndarray, head_bias: np.ndarray) -> tuple[int, np.ndarray]:
    """Linear head scores and argmax label (ties broken toward the lowest index)."""
    v = y.values if isinstance(y, SimplexVector) else np.asarray(y, dtype=np.float64)
    w = np.asarray(head_weight, dtype=np.float64)
    b = np.asarray(head_bias, dtype=np.float64)
    if v.shape != (w.shape[1],) or b.shape != (w.shape[0],):
        raise ValueError("head dimensions do not match the input")
    scores = w @ v + b
    return int(np.argmax(scores)), scores
