"""Acceptance criteria, one test per criterion, at the stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one summary line per
criterion.  The heavy fixtures (desk-scale digit training, the five-seed
entanglement sweep) are module-scoped and shared across criteria.
"""

import time

import numpy as np
import pytest

from hqrn.config import DigitsExperiment, EntanglementExperiment
from hqrn.experiments import ReconstructedCascade, run_digits, run_entanglement
from hqrn.sampling import derive_seed
from hqrn.training import CascadeArch, CascadeParams, cascade_loss_and_grads
from hqrn.verify import (
    check_closed_form,
    check_equivalence,
    check_ppt_boundary,
    check_reconstruction,
    check_shot_scaling,
)


def announce(number: int, name: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {number} {name}: {status} ({detail})")


# ---------------------------------------------------------------------------
# Criterion 1: classical-quantum equivalence
# ---------------------------------------------------------------------------


def test_criterion_1_equivalence():
    start = time.perf_counter()
    result = check_equivalence(trials=500, dims=(4, 8), seed=0, tol=1e-9)
    elapsed = time.perf_counter() - start
    announce(1, "equivalence", result["passed"] and elapsed < 10,
             f"max error {result['max_error']:.3e} < 1e-9, runtime {elapsed:.1f}s < 10s")
    assert result["max_error"] < 1e-9
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# Criterion 2: closed-form oracle
# ---------------------------------------------------------------------------


def test_criterion_2_closed_form():
    start = time.perf_counter()
    result = check_closed_form(trials=100, max_depth=6, dims=(4, 8), seed=0, tol=1e-9)
    elapsed = time.perf_counter() - start
    announce(2, "closed-form oracle", result["passed"] and elapsed < 30,
             f"max error {result['max_error']:.3e} < 1e-9, runtime {elapsed:.1f}s < 30s")
    assert result["max_error"] < 1e-9
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# Criterion 3: reconstruction round trip
# ---------------------------------------------------------------------------


def test_criterion_3_reconstruction():
    result = check_reconstruction(n_weights=100, dims=(4, 8), seed=0)
    detail = (
        f"exact {result['exact_max_error']:.3e} < 1e-10, "
        f"order-2 r=64 {result['trotter_max_error']:.3e} < 1e-3, "
        f"r8/r32 ratio {result['error_ratio_r8_r32']:.2f} in [10.67, 24]"
    )
    announce(3, "reconstruction round trip", result["passed"], detail)
    assert result["exact_max_error"] < 1e-10
    assert result["trotter_max_error"] < 1e-3
    lo, hi = result["ratio_bounds"]
    assert lo <= result["error_ratio_r8_r32"] <= hi


# ---------------------------------------------------------------------------
# Criteria 4 and 5 share the desk-scale digits run
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def digits_run():
    cfg = DigitsExperiment(
        seed=7,
        source="sklearn",
        train_count=1000,
        test_count=797,
        state_dim=64,
        n_blocks=10,
        optimizer={
            "algorithm": "rmsprop",
            "learning_rate": 3e-3,
            "weight_decay": 1e-4,
            "epochs": 50,
            "batch_size": 32,
        },
        shot_list=[None],
        quantum_eval_every=50,
        trotter=None,
    )
    start = time.perf_counter()
    result = run_digits(cfg)
    result["elapsed"] = time.perf_counter() - start
    result["cfg"] = cfg
    return result


def test_criterion_4_shot_scaling(digits_run):
    scaling = check_shot_scaling(n_seeds=100, seed=0)
    slope_ok = abs(scaling["slope"] + 0.5) <= 0.15

    # monotonicity substitute: mean disagreement(1e6) <= mean disagreement(1e3)
    # over 5 sampling seeds, on the trained desk-scale model
    from hqrn.blocks import crb_params_from_json
    from hqrn.reconstruct import reconstruct_block

    checkpoint = digits_run["checkpoint"]
    blocks = [crb_params_from_json(b) for b in checkpoint["blocks"]]
    cascade = ReconstructedCascade(
        [reconstruct_block(b.weight, b.bias, b.alpha, None).params for b in blocks]
    )
    from hqrn.digits_data import load_sklearn_digits
    from hqrn.linalg import matrix_from_json
    from hqrn.training import prepare_simplex_inputs
    from hqrn.blocks import normalized_activation_raw, Activation

    images, labels = load_sklearn_digits()
    cfg = digits_run["cfg"]
    x_test = prepare_simplex_inputs(images[cfg.train_count : cfg.train_count + cfg.test_count])
    proj_w = matrix_from_json(checkpoint["projection"]["weight"]).real
    proj_b = np.asarray(checkpoint["projection"]["bias"])
    head_w = matrix_from_json(checkpoint["head"]["weight"]).real
    head_b = np.asarray(checkpoint["head"]["bias"])
    y0 = normalized_activation_raw(x_test @ proj_w.T + proj_b, Activation.RELU)
    # classical labels via the exact (infinite-shot) cascade
    exact_final = cascade.forward(y0, None, 0)
    classical = (exact_final @ head_w.T + head_b).argmax(axis=1)

    means = {}
    for shots in (10**3, 10**6):
        rates = []
        for s in range(5):
            y_final = cascade.forward(y0, shots, derive_seed(1234, s, shots))
            quantum = (y_final @ head_w.T + head_b).argmax(axis=1)
            rates.append(float(np.mean(quantum != classical)))
        means[shots] = float(np.mean(rates))
    monotone = means[10**6] <= means[10**3]

    announce(
        4,
        "shot scaling",
        slope_ok and monotone,
        f"slope {scaling['slope']:.3f} = -0.5 +/- 0.15; mean disagreement "
        f"1e6 {means[10**6]:.4f} <= 1e3 {means[10**3]:.4f} over 5 seeds",
    )
    assert slope_ok
    assert monotone


def test_criterion_5_digits_smoke(digits_run):
    report = digits_run["report"]
    test_error = report["classical_final_test_error"]
    disagreement = report["final_infinite_shot_disagreement"]
    elapsed = digits_run["elapsed"]
    announce(
        5,
        "desk-scale digits",
        test_error < 0.25 and disagreement < 0.01 and elapsed < 600,
        f"classical test error {test_error:.3f} < 0.25, infinite-shot "
        f"disagreement {disagreement:.4f} < 0.01, runtime {elapsed:.0f}s < 600s",
    )
    assert test_error < 0.25
    assert disagreement < 0.01
    assert elapsed < 600.0


# ---------------------------------------------------------------------------
# Criterion 6: PPT boundary and adversarial mimicry
# ---------------------------------------------------------------------------


def test_criterion_6_ppt_boundary():
    result = check_ppt_boundary(eps=1e-6)
    announce(
        6,
        "PPT boundary",
        result["passed"],
        f"flip at 1/3 +/- 1e-6: {result['flip_above']}/{not result['flip_below']}, "
        f"mimic error {result['mimic_max_error']:.2e} < 1e-12, all separable "
        f"{result['all_mimics_separable']}",
    )
    assert result["flip_above"] and not result["flip_below"]
    assert result["mimic_max_error"] < 1e-12
    assert result["all_mimics_separable"]


# ---------------------------------------------------------------------------
# Criterion 7: entanglement classifier advantage (five seeds)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def entangle_runs():
    runs = []
    start = time.perf_counter()
    for seed in range(5):
        cfg = EntanglementExperiment(
            seed=seed,
            train_counts=(70, 60, 130),
            test_counts=(100, 150, 250),
            pair_subset=50,
            depth_sweep=[0, 2],
        )
        runs.append(run_entanglement(cfg))
    return runs, time.perf_counter() - start


def test_criterion_7_entanglement_advantage(entangle_runs):
    runs, elapsed = entangle_runs
    baseline_exact, pair_wins, overall_wins = [], 0, 0
    details = []
    for out in runs:
        rows = {row["depth"]: row for row in out["metrics"]}
        base_pair = rows[0]["pair_subset_accuracy"]
        baseline_exact.append(abs(base_pair - 0.5) < 1e-12)
        pair = rows[2]["pair_subset_accuracy"]
        pair_wins += pair > 0.70
        overall_wins += rows[2]["accuracy"] > rows[0]["accuracy"]
        details.append(f"{pair:.2f}")
    passed = (
        all(baseline_exact) and pair_wins >= 3 and overall_wins >= 3 and elapsed < 900
    )
    announce(
        7,
        "entanglement advantage",
        passed,
        f"baseline pair accuracy exactly 0.5 on 5/5 seeds; depth-2 pair accuracy "
        f"[{', '.join(details)}] > 0.70 on {pair_wins}/5 (need 3); overall beats "
        f"baseline on {overall_wins}/5; runtime {elapsed:.0f}s < 900s",
    )
    assert all(baseline_exact)
    assert pair_wins >= 3
    assert overall_wins >= 3
    assert elapsed < 900.0


# ---------------------------------------------------------------------------
# Criterion 8: gradient correctness
# ---------------------------------------------------------------------------


def test_criterion_8_gradient_correctness():
    rng = np.random.default_rng(8)
    arch = CascadeArch(input_dim=4, state_dim=4, n_blocks=2, n_outputs=3, alpha=0.5,
                       use_projection=False)
    params = CascadeParams.init(arch, seed=0)
    x = rng.dirichlet(np.ones(4), size=6)
    t = rng.integers(0, 3, 6)
    base = params.flatten()
    step = 1e-5
    worst = 0.0
    for _ in range(20):
        flat = base + rng.normal(0, 0.3, base.size)
        params.assign_flat(flat)
        _, grad = cascade_loss_and_grads(params, x, t, "cross_entropy")
        fd = np.zeros_like(grad)
        for i in range(flat.size):
            probe = flat.copy()
            probe[i] += step
            params.assign_flat(probe)
            up, _ = cascade_loss_and_grads(params, x, t, "cross_entropy")
            probe[i] -= 2 * step
            params.assign_flat(probe)
            down, _ = cascade_loss_and_grads(params, x, t, "cross_entropy")
            fd[i] = (up - down) / (2 * step)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, rel)
    announce(8, "gradient correctness", worst < 1e-4,
             f"worst relative error {worst:.3e} < 1e-4 over 20 points")
    assert worst < 1e-4
