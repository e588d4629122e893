"""Finite-shot simulation of the measurement pipeline and model-comparison metrics.

Shot noise enters only through the branch measurements: each block's two
outcome distributions are replaced by empirical frequencies from a
multinomial draw.  The residual mixing stays the exact convex combination
(identical in expectation to per-copy stochastic mixing), and the copy
ledger still charges two branch-measurement ensembles plus two mixing
ensembles per block.

All randomness is driven by numpy's PCG64 generator through SeedSequence,
so results are reproducible from (seed, algorithm) alone and per-item seeds
can be derived independently of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .blocks import Activation, QrbParams, QrbResult, qrb_forward, normalized_activation
from .linalg import DensityMatrix, SimplexVector, measure_z

RNG_ALGORITHM = "numpy-pcg64-seedsequence"

_MASK64 = (1 << 64) - 1


def derive_seed(base: int, *path: int) -> int:
    """Deterministic child seed for a (run seed, index path) pair."""
    entropy = [int(base) & _MASK64] + [int(p) & _MASK64 for p in path]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ShotConfig:
    """Number of measurement shots per unitary branch; None means infinite."""

    shots_per_branch: Optional[int]
    seed: int = 0

    def __post_init__(self):
        if self.shots_per_branch is not None and self.shots_per_branch < 1:
            raise ValueError(f"shots_per_branch must be >= 1, got {self.shots_per_branch}")

    @property
    def infinite(self) -> bool:
        return self.shots_per_branch is None


def sample_distribution(p: SimplexVector, n_shots: int, seed: int) -> SimplexVector:
    """Empirical frequencies of a multinomial draw; deterministic given seed."""
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    rng = np.random.default_rng(seed)
    pvals = p.values / p.values.sum()
    counts = rng.multinomial(int(n_shots), pvals)
    return SimplexVector(counts / float(n_shots))


@dataclass(frozen=True)
class LedgerEntry:
    """Copy accounting for one block: 2 Ns measured + 2 Ns mixed = 4 Ns consumed."""

    shots_per_branch: Optional[int]

    @property
    def measured_copies(self) -> Optional[int]:
        return None if self.shots_per_branch is None else 2 * self.shots_per_branch

    @property
    def mixing_copies(self) -> Optional[int]:
        return None if self.shots_per_branch is None else 2 * self.shots_per_branch

    @property
    def consumed_copies(self) -> Optional[int]:
        return None if self.shots_per_branch is None else 4 * self.shots_per_branch


@dataclass
class EnsembleLedger:
    """Per-block copy counts through a cascade.

    Each block consumes four branch-ensembles of its input supply and
    reconstructs the same number of output copies, so the available supply
    never increases from one block to the next.
    """

    shots_per_branch: Optional[int]
    entries: list[LedgerEntry] = field(default_factory=list)

    def record_block(self) -> LedgerEntry:
        entry = LedgerEntry(self.shots_per_branch)
        self.entries.append(entry)
        return entry

    @property
    def total_initial_copies(self) -> Optional[int]:
        if self.shots_per_branch is None:
            return None
        return 4 * self.shots_per_branch if self.entries else 0

    def supply_trace(self) -> list[Optional[int]]:
        if self.shots_per_branch is None:
            return [None] * (len(self.entries) + 1)
        return [4 * self.shots_per_branch] * (len(self.entries) + 1)


@dataclass(frozen=True)
class SampledQrbResult:
    rho: DensityMatrix
    h: SimplexVector
    p_plus: SimplexVector
    p_minus: SimplexVector
    ledger_entry: LedgerEntry


def qrb_forward_sampled(
    rho: DensityMatrix, params: QrbParams, kind: Activation, cfg: ShotConfig
) -> SampledQrbResult:
    """Quantum block step with finite-shot branch measurements.

    With infinite shots this is exactly `qrb_forward` (same code path, same
    floats).  Otherwise the two branch distributions are replaced by
    empirical frequencies drawn with seeds derived from cfg.seed (branch
    index 0 for U+, 1 for U-), and the residual mixing is applied as the
    exact convex combination.
    """
    entry = LedgerEntry(cfg.shots_per_branch)
    if cfg.infinite:
        exact: QrbResult = qrb_forward(rho, params, kind)
        return SampledQrbResult(
            rho=exact.rho,
            h=exact.h,
            p_plus=exact.p_plus,
            p_minus=exact.p_minus,
            ledger_entry=entry,
        )
    if rho.dim != params.dim:
        raise ValueError(f"state dim {rho.dim} does not match block dim {params.dim}")
    n = cfg.shots_per_branch
    p_plus = sample_distribution(measure_z(rho.evolved(params.u_plus)), n, derive_seed(cfg.seed, 0))
    p_minus = sample_distribution(measure_z(rho.evolved(params.u_minus)), n, derive_seed(cfg.seed, 1))
    top = params.active_dim
    z = params.gamma * (p_plus.values[:top] - p_minus.values[:top]) + params.bias[:top]
    h = normalized_activation(z, kind)
    out = params.alpha * rho.matrix.copy()
    idx = np.arange(top)
    out[idx, idx] += (1.0 - params.alpha) * h.values
    rho_out = DensityMatrix((out + out.conj().T) / 2.0)
    return SampledQrbResult(rho=rho_out, h=h, p_plus=p_plus, p_minus=p_minus, ledger_entry=entry)


def cascade_qrb_sampled(
    rho0: DensityMatrix,
    blocks: Sequence[QrbParams],
    kind: Activation,
    cfg: ShotConfig,
) -> tuple[DensityMatrix, list[SimplexVector], EnsembleLedger]:
    """Sampled cascade; block k draws with seed derive_seed(cfg.seed, k)."""
    ledger = EnsembleLedger(cfg.shots_per_branch)
    rho = rho0
    hs = []
    for k, params in enumerate(blocks):
        step_cfg = ShotConfig(cfg.shots_per_branch, derive_seed(cfg.seed, k))
        result = qrb_forward_sampled(rho, params, kind, step_cfg)
        ledger.entries.append(result.ledger_entry)
        rho = result.rho
        hs.append(result.h)
    return rho, hs, ledger


def disagreement_rate(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """Fraction of positions where the two label lists differ."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.size == 0:
        raise ValueError("label lists must be nonempty")
    if a.shape != b.shape:
        raise ValueError(f"label lists differ in length: {a.shape} vs {b.shape}")
    return float(np.mean(a != b))


def confusion_decomposition(
    pred_a: Sequence[int], pred_b: Sequence[int], truth: Sequence[int]
) -> tuple[float, float, float, float]:
    """Partition of items into (both correct, a only, b only, both wrong)."""
    a = np.asarray(pred_a)
    b = np.asarray(pred_b)
    t = np.asarray(truth)
    if not (a.shape == b.shape == t.shape) or a.size == 0:
        raise ValueError("prediction/truth lists must be nonempty and equal length")
    ok_a = a == t
    ok_b = b == t
    n = float(a.size)
    return (
        float(np.sum(ok_a & ok_b)) / n,
        float(np.sum(ok_a & ~ok_b)) / n,
        float(np.sum(~ok_a & ok_b)) / n,
        float(np.sum(~ok_a & ~ok_b)) / n,
    )
