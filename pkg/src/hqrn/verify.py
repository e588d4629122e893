"""Cross-module verification suites with measured errors.

Each check returns a small dict with the measured quantity, its tolerance,
and a pass flag; `hqrn verify` aggregates them into a report and the
acceptance tests assert on the same functions.
"""

from __future__ import annotations

import time

import numpy as np

from .blocks import (
    Activation,
    QrbParams,
    cascade_qrb,
    closed_form_output,
    crb_forward,
    induced_crb,
    qrb_forward,
)
from .entangle import BellSpec, adversarial_state, ppt_is_entangled, werner_state
from .linalg import DensityMatrix, SimplexVector, measure_z
from .reconstruct import (
    TrotterSpec,
    halmos_dilate,
    reconstruct_block,
    split_weights,
    to_contractions,
    trotterize,
)
from .sampling import derive_seed, sample_distribution


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian with phase fix."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_mixed_state(dim: int, rng: np.random.Generator) -> DensityMatrix:
    b = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = b @ b.conj().T
    m /= np.trace(m).real
    return DensityMatrix((m + m.conj().T) / 2.0)


def random_block(dim: int, rng: np.random.Generator, alpha: float) -> QrbParams:
    return QrbParams(
        u_plus=haar_unitary(dim, rng),
        u_minus=haar_unitary(dim, rng),
        gamma=float(rng.uniform(0.5, 2.0)),
        bias=rng.normal(0.0, 0.5, dim),
        alpha=alpha,
    )


def check_equivalence(trials: int = 500, dims=(4, 8), seed: int = 0, tol: float = 1e-9) -> dict:
    """Diagonal-input QRB output vs the induced classical block, componentwise."""
    start = time.perf_counter()
    rng = np.random.default_rng(derive_seed(seed, 1))
    worst = 0.0
    for t in range(trials):
        dim = dims[t % len(dims)]
        alpha = float(rng.uniform(0.1, 0.9))
        params = random_block(dim, rng, alpha)
        y = SimplexVector(rng.dirichlet(np.ones(dim)))
        rho = DensityMatrix.from_simplex(y)
        quantum = qrb_forward(rho, params, Activation.RELU)
        classical = crb_forward(y, induced_crb(params), Activation.RELU)
        diag = np.real(np.diagonal(quantum.rho.matrix))
        worst = max(worst, float(np.max(np.abs(diag - classical.y.values))))
        worst = max(worst, float(np.max(np.abs(quantum.h.values - classical.h.values))))
    return {
        "name": "equivalence",
        "trials": trials,
        "max_error": worst,
        "tolerance": tol,
        "passed": worst < tol,
        "runtime_s": time.perf_counter() - start,
    }


def check_closed_form(
    trials: int = 100, max_depth: int = 6, dims=(4, 8), seed: int = 0, tol: float = 1e-9
) -> dict:
    """Iterated cascade vs the explicit depth-k expansion on mixed inputs."""
    start = time.perf_counter()
    rng = np.random.default_rng(derive_seed(seed, 2))
    worst = 0.0
    for t in range(trials):
        dim = dims[t % len(dims)]
        alpha = float(rng.uniform(0.2, 0.8))
        rho0 = random_mixed_state(dim, rng)
        blocks = [random_block(dim, rng, alpha) for _ in range(max_depth)]
        result = cascade_qrb(rho0, blocks, Activation.RELU)
        for k in range(1, max_depth + 1):
            direct = closed_form_output(rho0, blocks[:k], Activation.RELU)
            worst = max(
                worst,
                float(np.max(np.abs(result.steps[k - 1].rho.matrix - direct.matrix))),
            )
    return {
        "name": "closed_form",
        "trials": trials,
        "max_depth": max_depth,
        "max_error": worst,
        "tolerance": tol,
        "passed": worst < tol,
        "runtime_s": time.perf_counter() - start,
    }


def check_reconstruction(
    n_weights: int = 100,
    dims=(4, 8),
    seed: int = 0,
    exact_tol: float = 1e-10,
    trotter_tol: float = 1e-3,
    ratio_slack: float = 1.5,
) -> dict:
    """Weight round trips through dilation, with and without Trotterization.

    Exact dilations must reproduce the weights to 1e-10 on all dims; the
    order-2, 64-step compilation must stay under 1e-3 on the 4x4 weights
    (the tolerance the default step count is calibrated for); and the
    order-2 error must scale as steps^-2 between 8 and 32 steps within 50%.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(derive_seed(seed, 3))
    exact_worst = 0.0
    trotter_worst = 0.0
    err8, err32, order4_excess = [], [], []
    for t in range(n_weights):
        dim = dims[t % len(dims)]
        w = rng.uniform(-2.0, 2.0, (dim, dim))
        exact = reconstruct_block(w, np.zeros(dim), 0.5, spec=None)
        exact_worst = max(exact_worst, exact.max_abs_error)
        if dim == 4:
            compiled = reconstruct_block(w, np.zeros(dim), 0.5, TrotterSpec(2, 64))
            trotter_worst = max(trotter_worst, compiled.max_abs_error)
        if t < 10:
            pair = to_contractions(split_weights(w))
            u = halmos_dilate(pair.m_plus)
            e8 = float(np.linalg.norm(trotterize(u, TrotterSpec(2, 8)).approx - u, 2))
            e32 = float(np.linalg.norm(trotterize(u, TrotterSpec(2, 32)).approx - u, 2))
            e4 = float(np.linalg.norm(trotterize(u, TrotterSpec(4, 8)).approx - u, 2))
            err8.append(e8)
            err32.append(e32)
            order4_excess.append(e4 / e8)
    ratio = float(np.mean(err8) / np.mean(err32))
    ideal = (32 / 8) ** 2
    ratio_ok = ideal / ratio_slack <= ratio <= ideal * ratio_slack
    passed = exact_worst < exact_tol and trotter_worst < trotter_tol and ratio_ok
    return {
        "name": "reconstruction",
        "n_weights": n_weights,
        "exact_max_error": exact_worst,
        "exact_tolerance": exact_tol,
        "trotter_max_error": trotter_worst,
        "trotter_tolerance": trotter_tol,
        "error_ratio_r8_r32": ratio,
        "ratio_bounds": [ideal / ratio_slack, ideal * ratio_slack],
        "order4_over_order2": float(np.max(order4_excess)),
        "passed": passed,
        "runtime_s": time.perf_counter() - start,
    }


def check_shot_scaling(
    n_seeds: int = 100,
    shot_counts=(10**3, 10**4, 10**5, 10**6),
    seed: int = 0,
    slope_target: float = -0.5,
    slope_tol: float = 0.15,
) -> dict:
    """Empirical slope of log max-deviation vs log shot count."""
    start = time.perf_counter()
    p = SimplexVector(np.array([0.4, 0.3, 0.2, 0.1]))
    means = []
    for n in shot_counts:
        devs = [
            float(np.max(np.abs(sample_distribution(p, n, derive_seed(seed, 4, n, s)).values - p.values)))
            for s in range(n_seeds)
        ]
        means.append(np.mean(devs))
    slope = float(np.polyfit(np.log10(shot_counts), np.log10(means), 1)[0])
    passed = abs(slope - slope_target) <= slope_tol
    monotone = bool(np.all(np.diff(means) < 0))
    return {
        "name": "shot_scaling",
        "n_seeds": n_seeds,
        "mean_deviation": [float(m) for m in means],
        "slope": slope,
        "slope_target": slope_target,
        "slope_tolerance": slope_tol,
        "monotone": monotone,
        "passed": passed and monotone,
        "runtime_s": time.perf_counter() - start,
    }


def check_ppt_boundary(eps: float = 1e-6) -> dict:
    """Werner label flip across the 1/3 threshold and adversarial Z-mimicry."""
    start = time.perf_counter()
    bell = BellSpec("00/11", 0.0)
    above = ppt_is_entangled(werner_state(1.0 / 3.0 + eps, bell).state)
    below = ppt_is_entangled(werner_state(1.0 / 3.0 - eps, bell).state)
    mimic_errors = []
    mimic_separable = []
    for pair in ("00/11", "01/10"):
        for phase in (0.0, 1.3, np.pi):
            spec = BellSpec(pair, phase)
            ad = adversarial_state(1.0, spec)
            target = measure_z(DensityMatrix.pure(spec.state_vector()))
            mimic_errors.append(float(np.max(np.abs(measure_z(ad.state).values - target.values))))
            mimic_separable.append(not ppt_is_entangled(ad.state))
    mimic_worst = max(mimic_errors)
    passed = above and not below and mimic_worst < 1e-12 and all(mimic_separable)
    return {
        "name": "ppt_boundary",
        "flip_above": above,
        "flip_below": below,
        "mimic_max_error": mimic_worst,
        "mimic_tolerance": 1e-12,
        "all_mimics_separable": all(mimic_separable),
        "passed": passed,
        "runtime_s": time.perf_counter() - start,
    }


def run_all_checks(seed: int = 0, trials_scale: float = 1.0) -> dict:
    """Every suite at (optionally scaled) acceptance trial counts."""
    scale = max(trials_scale, 0.01)
    checks = [
        check_equivalence(trials=max(2, int(500 * scale)), seed=seed),
        check_closed_form(trials=max(2, int(100 * scale)), seed=seed),
        check_reconstruction(n_weights=max(2, int(100 * scale)), seed=seed),
        check_shot_scaling(n_seeds=max(5, int(100 * scale)), seed=seed),
        check_ppt_boundary(),
    ]
    return {
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
        "seed": seed,
    }
