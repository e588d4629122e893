"""Experiment runners for the two benchmark tasks and the verification sweep.

Runners consume validated configs and return JSON-serializable result
bundles (report plus tabular rows); persistence and transport live in the
CLI and service layers.
"""

from __future__ import annotations

import logging
import time
from typing import Optional, Sequence

import numpy as np

from . import digits_data
from .blocks import Activation, QrbParams
from .config import DigitsExperiment, EntanglementExperiment, VerifyExperiment
from .digits_data import DataError
from .entangle import (
    DatasetCounts,
    build_dataset,
    labels_array,
    mimic_pair_subset,
)
from .linalg import matrix_to_json
from .reconstruct import TrotterSpec, reconstruct_block
from .sampling import RNG_ALGORITHM, confusion_decomposition, derive_seed, disagreement_rate
from .training import (
    CascadeArch,
    CascadeParams,
    ContrastiveLossConfig,
    GreedyConfig,
    OptimizerConfig,
    cascade_forward,
    greedy_train_qrb_stack,
    prepare_simplex_inputs,
    propagate_through_stack,
    train_crb_cascade,
)
from .verify import run_all_checks

logger = logging.getLogger(__name__)


def _optimizer_config(settings) -> OptimizerConfig:
    return OptimizerConfig(
        algorithm=settings.algorithm,
        learning_rate=settings.learning_rate,
        weight_decay=settings.weight_decay,
        epochs=settings.epochs,
        batch_size=settings.batch_size,
    )


def _greedy_config(settings, alpha: float) -> GreedyConfig:
    return GreedyConfig(
        restarts=settings.restarts,
        max_steps=settings.max_steps,
        learning_rate=settings.learning_rate,
        momentum=settings.momentum,
        fd_step=settings.fd_step,
        patience=settings.patience,
        alpha=alpha,
        loss=ContrastiveLossConfig(
            beta=settings.beta,
            d_min=settings.d_min,
            close_threshold=settings.close_threshold,
            close_penalty_scale=settings.close_penalty_scale,
        ),
    )


def _trotter_spec(cfg) -> Optional[TrotterSpec]:
    return None if cfg is None else TrotterSpec(order=cfg.order, steps=cfg.steps)


# ---------------------------------------------------------------------------
# Reconstructed-cascade evaluation on classical inputs
# ---------------------------------------------------------------------------


class ReconstructedCascade:
    """Compiled quantum blocks evaluated on simplex inputs.

    Embedded classical inputs stay diagonal through every block (the mixing
    only adds computational-basis populations), so the branch distributions
    reduce to amplitude-table matvecs: p = |U[:, :d]|^2 @ y.  This matches
    the full density-matrix simulation to floating-point accuracy and is
    verified against it in the tests.
    """

    def __init__(self, blocks: Sequence[QrbParams]):
        self.blocks = list(blocks)
        self.tables = []
        for params in self.blocks:
            d = params.active_dim
            t_plus = np.abs(params.u_plus[:, :d]) ** 2
            t_minus = np.abs(params.u_minus[:, :d]) ** 2
            self.tables.append((t_plus, t_minus, params.gamma, params.bias[:d], params.alpha, d))

    def forward(
        self, y: np.ndarray, shots: Optional[int], run_seed: int, seed_path: tuple[int, ...] = ()
    ) -> np.ndarray:
        """Propagate a batch of simplex rows; finite shots sample each branch.

        Item i in block k draws exactly like a `qrb_forward_sampled` call
        with seed derive_seed(run_seed, *seed_path, i, k): the per-branch
        child seeds are derived from that block seed, so results match the
        per-state simulation and are independent of batch order.
        """
        from .blocks import normalized_activation_raw
        from .linalg import SimplexVector
        from .sampling import sample_distribution

        out = np.array(y, dtype=np.float64)
        n = out.shape[0]
        for k, (t_plus, t_minus, gamma, bias, alpha, d) in enumerate(self.tables):
            p_plus = out @ t_plus.T
            p_minus = out @ t_minus.T
            if shots is not None:
                for i in range(n):
                    block_seed = derive_seed(run_seed, *seed_path, i, k)
                    p_plus[i] = sample_distribution(
                        SimplexVector.from_nonnegative(p_plus[i]),
                        shots,
                        derive_seed(block_seed, 0),
                    ).values
                    p_minus[i] = sample_distribution(
                        SimplexVector.from_nonnegative(p_minus[i]),
                        shots,
                        derive_seed(block_seed, 1),
                    ).values
            z = gamma * (p_plus[:, :d] - p_minus[:, :d]) + bias
            h = normalized_activation_raw(z, Activation.RELU)
            out = alpha * out + (1.0 - alpha) * h
        return out


def _reconstruct_cascade(
    params: CascadeParams, alpha: float, spec: Optional[TrotterSpec]
) -> tuple[ReconstructedCascade, list[dict]]:
    blocks, reports = [], []
    for w, b in zip(params.weights, params.biases):
        rec = reconstruct_block(w, b, alpha, spec)
        blocks.append(rec.params)
        reports.append(rec.report())
    return ReconstructedCascade(blocks), reports


# ---------------------------------------------------------------------------
# Digits
# ---------------------------------------------------------------------------


def _load_digit_data(cfg: DigitsExperiment) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if cfg.source == "idx":
        paths = (cfg.train_images, cfg.train_labels, cfg.test_images, cfg.test_labels)
        if any(p is None for p in paths):
            raise DataError("idx source requires train/test image and label paths")
        train = digits_data.ingest_mnist(cfg.train_images, cfg.train_labels)
        test = digits_data.ingest_mnist(cfg.test_images, cfg.test_labels)
        if len(train) < cfg.train_count or len(test) < cfg.test_count:
            raise DataError(
                f"requested {cfg.train_count}/{cfg.test_count} records, files hold "
                f"{len(train)}/{len(test)}"
            )
        train = train[: cfg.train_count]
        test = test[: cfg.test_count]
        x_train = np.stack([p for p, _ in train])
        y_train = np.array([c for _, c in train])
        x_test = np.stack([p for p, _ in test])
        y_test = np.array([c for _, c in test])
    elif cfg.source == "sklearn":
        images, labels = digits_data.load_sklearn_digits()
        total = cfg.train_count + cfg.test_count
        if total > images.shape[0]:
            raise DataError(
                f"sklearn digits hold {images.shape[0]} records, requested {total}"
            )
        x_train, y_train = images[: cfg.train_count], labels[: cfg.train_count]
        x_test = images[cfg.train_count : total]
        y_test = labels[cfg.train_count : total]
    else:
        x_train, y_train = digits_data.synthetic_digits(cfg.train_count, derive_seed(cfg.seed, 100))
        x_test, y_test = digits_data.synthetic_digits(cfg.test_count, derive_seed(cfg.seed, 101))
    return x_train, y_train, x_test, y_test


def _classify_batch(params: CascadeParams, x: np.ndarray) -> np.ndarray:
    return cascade_forward(params, x).scores.argmax(axis=1)


def _head_labels(params: CascadeParams, y_final: np.ndarray) -> np.ndarray:
    scores = y_final @ params.head_weight.T + params.head_bias
    return scores.argmax(axis=1)


def run_digits(cfg: DigitsExperiment) -> dict:
    """Train the classical cascade, reconstruct it, and compare under shots."""
    started = time.perf_counter()
    x_train_raw, y_train, x_test_raw, y_test = _load_digit_data(cfg)
    x_train = prepare_simplex_inputs(x_train_raw)
    x_test = prepare_simplex_inputs(x_test_raw)
    n_classes = 10

    arch = CascadeArch(
        input_dim=x_train.shape[1],
        state_dim=cfg.state_dim,
        n_blocks=cfg.n_blocks,
        n_outputs=n_classes,
        alpha=cfg.alpha,
        use_projection=True,
    )
    trained = train_crb_cascade(
        list(zip(x_train, y_train)),
        arch,
        _optimizer_config(cfg.optimizer),
        "cross_entropy",
        derive_seed(cfg.seed, 1),
        test_data=list(zip(x_test, y_test)),
        keep_checkpoints=True,
    )
    training_rows = [
        {
            "epoch": m.epoch,
            "loss": m.loss,
            "train_error": m.train_error,
            "test_error": m.test_error,
        }
        for m in trained.metrics
    ]

    epochs = cfg.optimizer.epochs
    eval_epochs = sorted(
        {e for e in range(cfg.quantum_eval_every, epochs + 1, cfg.quantum_eval_every)} | {epochs}
    ) if epochs else []
    spec = _trotter_spec(cfg.trotter)

    metrics_rows = []
    reconstruction_reports = []
    for epoch in eval_epochs:
        checkpoint = trained.checkpoints[epoch - 1]
        classical_labels = _classify_batch(checkpoint, x_test)
        error_classical = float(np.mean(classical_labels != y_test))
        if not cfg.shot_list:
            continue
        cascade, reports = _reconstruct_cascade(checkpoint, cfg.alpha, spec)
        if epoch == epochs:
            reconstruction_reports = reports
        # the quantum pipeline consumes the classically projected input state
        proj = _project_inputs(checkpoint, x_test)
        for shots in cfg.shot_list:
            y_final = cascade.forward(proj, shots, cfg.seed, (2, epoch, 0 if shots is None else shots))
            quantum_labels = _head_labels(checkpoint, y_final)
            error_quantum = float(np.mean(quantum_labels != y_test))
            disagreement = disagreement_rate(classical_labels, quantum_labels)
            both, a_only, b_only, both_wrong = confusion_decomposition(
                classical_labels, quantum_labels, y_test
            )
            metrics_rows.append(
                {
                    "epoch": epoch,
                    "n_shots": "inf" if shots is None else shots,
                    "error_rate": error_quantum,
                    "disagreement": disagreement,
                    "both_correct": both,
                    "a_only": a_only,
                    "b_only": b_only,
                    "both_wrong": both_wrong,
                }
            )
        logger.info("digits: evaluated checkpoint epoch %d", epoch)

    final = trained.metrics[-1] if trained.metrics else None
    final_infinite = [
        r for r in metrics_rows if r["epoch"] == epochs and r["n_shots"] == "inf"
    ]
    report = {
        "task": "digits",
        "seed": cfg.seed,
        "source": cfg.source,
        "rng": RNG_ALGORITHM,
        "train_count": int(x_train.shape[0]),
        "test_count": int(x_test.shape[0]),
        "epochs": epochs,
        "classical_final_train_error": None if final is None else final.train_error,
        "classical_final_test_error": None if final is None else final.test_error,
        "final_infinite_shot_disagreement": (
            final_infinite[0]["disagreement"] if final_infinite else None
        ),
        "trotter": None if cfg.trotter is None else {"order": cfg.trotter.order, "steps": cfg.trotter.steps},
        "reconstruction_reports": reconstruction_reports,
        "runtime_s": time.perf_counter() - started,
    }
    checkpoint_json = _cascade_to_json(trained.params) if trained.metrics else None
    return {
        "report": report,
        "training": training_rows,
        "metrics": metrics_rows,
        "trajectories": [],
        "checkpoint": checkpoint_json,
    }


def _project_inputs(params: CascadeParams, x: np.ndarray) -> np.ndarray:
    """Classical preprocessing stage output: the simplex vector entering block 1."""
    from .blocks import normalized_activation_raw

    if params.projection is None:
        return x
    z = x @ params.projection.T + params.projection_bias
    return normalized_activation_raw(z, Activation.RELU)


def _cascade_to_json(params: CascadeParams) -> dict:
    from .blocks import CrbParams, crb_params_to_json

    blocks = [
        crb_params_to_json(CrbParams(w, b, params.arch.alpha))
        for w, b in zip(params.weights, params.biases)
    ]
    out = {
        "alpha": params.arch.alpha,
        "blocks": blocks,
        "head": {
            "weight": matrix_to_json(params.head_weight),
            "bias": [float(v) for v in params.head_bias],
        },
    }
    if params.projection is not None:
        out["projection"] = {
            "weight": matrix_to_json(params.projection),
            "bias": [float(v) for v in params.projection_bias],
        }
    return out


# ---------------------------------------------------------------------------
# Entanglement
# ---------------------------------------------------------------------------


def run_entanglement(cfg: EntanglementExperiment) -> dict:
    """Depth sweep: greedy quantum blocks + classical head, per-family accuracy."""
    started = time.perf_counter()
    train = build_dataset(DatasetCounts(*cfg.train_counts), derive_seed(cfg.seed, 10))
    test = build_dataset(DatasetCounts(*cfg.test_counts), derive_seed(cfg.seed, 11))
    pairs = mimic_pair_subset(cfg.pair_subset, derive_seed(cfg.seed, 12)) if cfg.pair_subset else []

    max_depth = max(cfg.depth_sweep)
    stack = greedy_train_qrb_stack(
        train, max_depth, _greedy_config(cfg.greedy, cfg.alpha), derive_seed(cfg.seed, 13)
    )

    y_train = (labels_array(train) == 1).astype(np.int64)
    y_test = (labels_array(test) == 1).astype(np.int64)
    y_pairs = (labels_array(pairs) == 1).astype(np.int64) if pairs else np.empty(0, dtype=np.int64)
    test_families = [r.family for r in test]
    spec = _trotter_spec(cfg.trotter)

    arch = CascadeArch(
        input_dim=4,
        state_dim=4,
        n_blocks=cfg.head_blocks,
        n_outputs=1,
        alpha=cfg.alpha,
        use_projection=False,
    )

    depth_rows = []
    trajectories = []
    accuracy_by_depth = {}
    for depth in cfg.depth_sweep:
        blocks = stack[:depth]
        f_train = propagate_through_stack(train, blocks)
        f_test = propagate_through_stack(test, blocks)
        f_pairs = propagate_through_stack(pairs, blocks) if pairs else None

        head = train_crb_cascade(
            list(zip(f_train, y_train)),
            arch,
            _optimizer_config(cfg.head_optimizer),
            "weighted_bce",
            derive_seed(cfg.seed, 14),
        )
        pred_test = _bce_predict(head.params, f_test)
        accuracy = float(np.mean(pred_test == y_test))

        cascade, rec_reports = _reconstruct_cascade(head.params, cfg.alpha, spec)
        y_final_q = cascade.forward(f_test, None, cfg.seed, (15, depth))
        pred_test_q = (
            (y_final_q @ head.params.head_weight.T + head.params.head_bias)[:, 0] > 0.0
        ).astype(np.int64)
        accuracy_q = float(np.mean(pred_test_q == y_test))

        per_family = {}
        for family in sorted(set(test_families)):
            mask = np.array([f == family for f in test_families])
            per_family[family] = float(np.mean(pred_test[mask] == y_test[mask]))

        pair_accuracy = None
        if pairs:
            pred_pairs = _bce_predict(head.params, f_pairs)
            pair_accuracy = float(np.mean(pred_pairs == y_pairs))

        row = {
            "depth": depth,
            "accuracy": accuracy,
            "accuracy_reconstructed": accuracy_q,
            "pair_subset_accuracy": pair_accuracy,
            "max_reconstruction_error": max(r["max_abs_error"] for r in rec_reports),
            **{f"accuracy_{k}": v for k, v in per_family.items()},
        }
        depth_rows.append(row)
        accuracy_by_depth[depth] = accuracy

        for idx, record in enumerate(test):
            p = f_test[idx]
            trajectories.append(
                {
                    "depth": depth,
                    "index": idx,
                    "family": record.family,
                    "label": record.label,
                    "p00": float(p[0]),
                    "p01": float(p[1]),
                    "p10": float(p[2]),
                }
            )
        logger.info("entanglement: depth %d accuracy %.3f", depth, accuracy)

    baseline = accuracy_by_depth.get(0)
    best_depth = max(accuracy_by_depth, key=accuracy_by_depth.get)
    report = {
        "task": "entanglement",
        "seed": cfg.seed,
        "rng": RNG_ALGORITHM,
        "train_counts": list(cfg.train_counts),
        "test_counts": list(cfg.test_counts),
        "depth_sweep": list(cfg.depth_sweep),
        "baseline_accuracy": baseline,
        "best_depth": int(best_depth),
        "best_accuracy": accuracy_by_depth[best_depth],
        "trotter": None if cfg.trotter is None else {"order": cfg.trotter.order, "steps": cfg.trotter.steps},
        "depths": depth_rows,
        "runtime_s": time.perf_counter() - started,
    }
    return {
        "report": report,
        "training": [],
        "metrics": depth_rows,
        "trajectories": trajectories,
        "checkpoint": None,
    }


def _bce_predict(params: CascadeParams, x: np.ndarray) -> np.ndarray:
    scores = cascade_forward(params, x).scores
    return (scores[:, 0] > 0.0).astype(np.int64)


# ---------------------------------------------------------------------------
# Verification sweep
# ---------------------------------------------------------------------------


def run_equivalence_suite(cfg: VerifyExperiment) -> dict:
    started = time.perf_counter()
    result = run_all_checks(seed=cfg.seed, trials_scale=cfg.trials_scale)
    report = {
        "task": "equivalence-suite",
        "seed": cfg.seed,
        "rng": RNG_ALGORITHM,
        "all_passed": result["all_passed"],
        "checks": result["checks"],
        "runtime_s": time.perf_counter() - started,
    }
    metrics = [
        {
            "name": c["name"],
            "passed": c["passed"],
            "max_error": c.get("max_error", c.get("exact_max_error")),
            "runtime_s": c["runtime_s"],
        }
        for c in result["checks"]
    ]
    return {
        "report": report,
        "training": [],
        "metrics": metrics,
        "trajectories": [],
        "checkpoint": None,
    }


def run_experiment(cfg) -> dict:
    if isinstance(cfg, DigitsExperiment):
        return run_digits(cfg)
    if isinstance(cfg, EntanglementExperiment):
        return run_entanglement(cfg)
    if isinstance(cfg, VerifyExperiment):
        return run_equivalence_suite(cfg)
    raise TypeError(f"unknown experiment config {type(cfg)!r}")
