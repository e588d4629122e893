"""Labeled two-qubit state families for entanglement classification.

Three families probe the boundary of the separable set: generalized Werner
states (entangled above the 1/3 mixing threshold), random convex mixtures of
product states, and adversarial separable states whose computational-basis
statistics coincide exactly with a Bell state's.  Ground truth comes from
the partial-transpose criterion, which is exact for two qubits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import DensityMatrix, matrix_from_json, matrix_to_json, measure_z
from .sampling import derive_seed

LABEL_ENTANGLED = 1
LABEL_SEPARABLE = -1

FAMILY_WERNER = "werner"
FAMILY_RANDOM_SEPARABLE = "random_separable"
FAMILY_ADVERSARIAL = "adversarial"

PPT_NEGATIVITY_TOL = 1e-10

BELL_PAIRS = ("00/11", "01/10")


@dataclass(frozen=True)
class BellSpec:
    """Bell-state choice: which basis pair is superposed, and the relative phase."""

    pair: str = "00/11"
    phase: float = 0.0

    def __post_init__(self):
        if self.pair not in BELL_PAIRS:
            raise ValueError(f"pair must be one of {BELL_PAIRS}, got {self.pair!r}")
        if not (0.0 <= self.phase < 2.0 * np.pi):
            raise ValueError(f"phase must lie in [0, 2*pi), got {self.phase}")

    def state_vector(self) -> np.ndarray:
        """(|ab> + e^{i phase} |ba'>)/sqrt(2) in the computational basis."""
        v = np.zeros(4, dtype=np.complex128)
        i, j = (0, 3) if self.pair == "00/11" else (1, 2)
        v[i] = 1.0
        v[j] = np.exp(1j * self.phase)
        return v / np.sqrt(2.0)

    def z_diagonal_indices(self) -> tuple[int, int]:
        return (0, 3) if self.pair == "00/11" else (1, 2)


@dataclass(frozen=True)
class LabeledState:
    """Dataset record: two-qubit state, binary label, family tag, draw parameters."""

    state: DensityMatrix
    label: int
    family: str
    params: dict

    def __post_init__(self):
        if self.state.dim != 4:
            raise ValueError(f"labeled states are two-qubit (dim 4), got dim {self.state.dim}")
        if self.label not in (LABEL_ENTANGLED, LABEL_SEPARABLE):
            raise ValueError(f"label must be +1 or -1, got {self.label}")


def partial_transpose_b(m: np.ndarray) -> np.ndarray:
    """Partial transpose of a 4x4 two-qubit matrix over the second qubit."""
    t = m.reshape(2, 2, 2, 2)  # indices (a, b, a', b')
    return t.transpose(0, 3, 2, 1).reshape(4, 4)


def ppt_is_entangled(rho: DensityMatrix) -> bool:
    """Exact two-qubit entanglement test: negative partial-transpose eigenvalue."""
    if rho.dim != 4:
        raise ValueError(f"PPT test is exact only for two qubits, got dim {rho.dim}")
    pt = partial_transpose_b(rho.matrix)
    w = np.linalg.eigvalsh((pt + pt.conj().T) / 2.0)
    return bool(w.min() < -PPT_NEGATIVITY_TOL)


def werner_state(p_b: float, bell: BellSpec) -> LabeledState:
    """p_b |Phi><Phi| + (1 - p_b) I/4; entangled exactly when p_b > 1/3."""
    if not (0.0 <= p_b <= 1.0):
        raise ValueError(f"p_b must lie in [0, 1], got {p_b}")
    psi = bell.state_vector()
    mat = p_b * np.outer(psi, psi.conj()) + (1.0 - p_b) * np.eye(4) / 4.0
    label = LABEL_ENTANGLED if p_b > 1.0 / 3.0 else LABEL_SEPARABLE
    return LabeledState(
        state=DensityMatrix(mat),
        label=label,
        family=FAMILY_WERNER,
        params={"p_b": float(p_b), "pair": bell.pair, "phase": float(bell.phase)},
    )


def _random_qubit_state(rng: np.random.Generator) -> np.ndarray:
    """Single-qubit factor (|psi><psi| + mu I/2) / (1 + mu), mu uniform in [0, 1]."""
    psi = rng.normal(size=2) + 1j * rng.normal(size=2)
    psi /= np.linalg.norm(psi)
    mu = rng.uniform(0.0, 1.0)
    return (np.outer(psi, psi.conj()) + mu * np.eye(2) / 2.0) / (1.0 + mu)


def random_separable(num_terms: int, seed: int) -> LabeledState:
    """Convex mixture of product states with simplex-uniform mixture weights."""
    if num_terms < 1:
        raise ValueError(f"num_terms must be >= 1, got {num_terms}")
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(num_terms))
    mat = np.zeros((4, 4), dtype=np.complex128)
    for w in weights:
        mat += w * np.kron(_random_qubit_state(rng), _random_qubit_state(rng))
    state = DensityMatrix((mat + mat.conj().T) / 2.0)
    record = LabeledState(
        state=state,
        label=LABEL_SEPARABLE,
        family=FAMILY_RANDOM_SEPARABLE,
        params={"num_terms": int(num_terms), "seed": int(seed)},
    )
    if ppt_is_entangled(state):  # impossible for a product mixture
        raise RuntimeError("generated product mixture failed the separability check")
    return record


def adversarial_sigma(mimic: BellSpec) -> DensityMatrix:
    """Separable state whose Z statistics equal the mimicked Bell state's.

    The only separable state with the Bell diagonal (1/2, 0, 0, 1/2) (or its
    01/10 counterpart) is the classical correlated mixture of the two basis
    projectors, so the mimic catalog is that mixture per target pair.
    """
    i, j = mimic.z_diagonal_indices()
    mat = np.zeros((4, 4), dtype=np.complex128)
    mat[i, i] = 0.5
    mat[j, j] = 0.5
    return DensityMatrix(mat)


def adversarial_state(p_ad: float, mimic: BellSpec, seed: int = 0) -> LabeledState:
    """p_ad * sigma_ad + (1 - p_ad) I/4 with sigma_ad a Z-statistics Bell mimic."""
    if not (0.0 <= p_ad <= 1.0):
        raise ValueError(f"p_ad must lie in [0, 1], got {p_ad}")
    sigma = adversarial_sigma(mimic)
    mat = p_ad * sigma.matrix + (1.0 - p_ad) * np.eye(4) / 4.0
    state = DensityMatrix(mat)
    record = LabeledState(
        state=state,
        label=LABEL_SEPARABLE,
        family=FAMILY_ADVERSARIAL,
        params={
            "p_ad": float(p_ad),
            "pair": mimic.pair,
            "phase": float(mimic.phase),
            "seed": int(seed),
        },
    )
    if ppt_is_entangled(state):
        raise RuntimeError("generated adversarial state failed the separability check")
    return record


@dataclass(frozen=True)
class DatasetCounts:
    werner: int
    random_separable: int
    adversarial: int

    def __post_init__(self):
        if min(self.werner, self.random_separable, self.adversarial) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.werner + self.random_separable + self.adversarial


def _random_bell(rng: np.random.Generator) -> BellSpec:
    return BellSpec(
        pair=BELL_PAIRS[int(rng.integers(0, 2))],
        phase=float(rng.uniform(0.0, 2.0 * np.pi)),
    )


def build_dataset(counts: DatasetCounts, seed: int) -> list[LabeledState]:
    """Deterministic labeled dataset; every record passes the PPT consistency check.

    Item i of family f draws its parameters from a generator seeded with
    derive_seed(seed, f, i), so generation order (or parallelism) cannot
    change the records.
    """
    out: list[LabeledState] = []
    for i in range(counts.werner):
        rng = np.random.default_rng(derive_seed(seed, 0, i))
        record = werner_state(float(rng.uniform(0.0, 1.0)), _random_bell(rng))
        _check_label(record)
        out.append(record)
    for i in range(counts.random_separable):
        item_seed = derive_seed(seed, 1, i)
        rng = np.random.default_rng(item_seed)
        num_terms = int(rng.integers(1, 5))
        record = random_separable(num_terms, derive_seed(item_seed, num_terms))
        _check_label(record)
        out.append(record)
    for i in range(counts.adversarial):
        item_seed = derive_seed(seed, 2, i)
        rng = np.random.default_rng(item_seed)
        record = adversarial_state(float(rng.uniform(0.0, 1.0)), _random_bell(rng), item_seed)
        _check_label(record)
        out.append(record)
    return out


def _check_label(record: LabeledState) -> None:
    entangled = ppt_is_entangled(record.state)
    if entangled != (record.label == LABEL_ENTANGLED):
        raise RuntimeError(
            f"label {record.label} inconsistent with PPT oracle for {record.family} "
            f"params {record.params}"
        )


def mimic_pair_subset(n_pairs: int, seed: int, p_min: float = 0.4) -> list[LabeledState]:
    """Balanced (entangled Werner, adversarial mimic) pairs with identical Z statistics.

    Pair i shares one mixing weight p drawn uniformly from [p_min, 1], one
    basis pair, and a random Werner phase, so the two members are
    indistinguishable from a single computational-basis measurement.
    """
    if not (1.0 / 3.0 < p_min <= 1.0):
        raise ValueError("p_min must exceed the 1/3 entanglement threshold")
    out: list[LabeledState] = []
    for i in range(n_pairs):
        rng = np.random.default_rng(derive_seed(seed, 3, i))
        p = float(rng.uniform(p_min, 1.0))
        bell = _random_bell(rng)
        w = werner_state(p, bell)
        a = adversarial_state(p, bell, derive_seed(seed, 3, i, 1))
        _check_label(w)
        _check_label(a)
        out.extend([w, a])
    return out


def labeled_state_to_json(record: LabeledState) -> dict:
    return {
        "label": record.label,
        "family": record.family,
        "params": record.params,
        "state": matrix_to_json(record.state.matrix),
    }


def labeled_state_from_json(obj: dict) -> LabeledState:
    return LabeledState(
        state=DensityMatrix(matrix_from_json(obj["state"])),
        label=int(obj["label"]),
        family=str(obj["family"]),
        params=dict(obj["params"]),
    )


def save_dataset_jsonl(records: Sequence[LabeledState], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(labeled_state_to_json(record)) + "\n")


def load_dataset_jsonl(path) -> list[LabeledState]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(labeled_state_from_json(json.loads(line)))
    return out


def measurement_features(records: Sequence[LabeledState]) -> np.ndarray:
    """Z-measurement distributions of a batch of states, stacked as rows."""
    return np.stack([measure_z(r.state).values for r in records])


def labels_array(records: Sequence[LabeledState]) -> np.ndarray:
    return np.array([r.label for r in records], dtype=np.int64)
