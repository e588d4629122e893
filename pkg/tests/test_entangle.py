import numpy as np
import pytest

from hqrn.entangle import (
    BellSpec,
    DatasetCounts,
    LABEL_ENTANGLED,
    LABEL_SEPARABLE,
    adversarial_state,
    build_dataset,
    labeled_state_from_json,
    labeled_state_to_json,
    load_dataset_jsonl,
    mimic_pair_subset,
    partial_transpose_b,
    ppt_is_entangled,
    random_separable,
    save_dataset_jsonl,
    werner_state,
)
from hqrn.linalg import DensityMatrix, measure_z


class TestBellSpec:
    def test_state_vectors(self):
        v = BellSpec("00/11", 0.0).state_vector()
        assert np.allclose(v, [1 / np.sqrt(2), 0, 0, 1 / np.sqrt(2)])
        v = BellSpec("01/10", np.pi).state_vector()
        assert np.allclose(v, [0, 1 / np.sqrt(2), -1 / np.sqrt(2), 0])

    def test_validation(self):
        with pytest.raises(ValueError):
            BellSpec("00/10", 0.0)
        with pytest.raises(ValueError):
            BellSpec("00/11", 7.0)


class TestWernerState:
    def test_maximally_mixed_at_zero(self):
        record = werner_state(0.0, BellSpec())
        assert np.allclose(record.state.matrix, np.eye(4) / 4)
        assert record.label == LABEL_SEPARABLE

    def test_pure_bell_at_one(self):
        record = werner_state(1.0, BellSpec("00/11", 0.0))
        assert record.label == LABEL_ENTANGLED
        assert np.allclose(measure_z(record.state).values, [0.5, 0, 0, 0.5], atol=1e-12)

    def test_boundary_inclusive(self):
        assert werner_state(1.0 / 3.0, BellSpec()).label == LABEL_SEPARABLE
        assert werner_state(1.0 / 3.0 + 1e-3, BellSpec()).label == LABEL_ENTANGLED

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            werner_state(1.5, BellSpec())


class TestPpt:
    def test_bell_state_entangled(self):
        rho = DensityMatrix.pure(BellSpec("00/11", 0.0).state_vector())
        assert ppt_is_entangled(rho)
        pt = partial_transpose_b(rho.matrix)
        assert np.linalg.eigvalsh(pt).min() == pytest.approx(-0.5, abs=1e-12)

    def test_maximally_mixed_separable(self):
        assert not ppt_is_entangled(DensityMatrix.maximally_mixed(4))

    def test_werner_threshold(self):
        assert ppt_is_entangled(werner_state(0.4, BellSpec()).state)
        assert not ppt_is_entangled(werner_state(0.3, BellSpec()).state)

    def test_label_flips_across_third(self):
        assert ppt_is_entangled(werner_state(1 / 3 + 1e-6, BellSpec()).state)
        assert not ppt_is_entangled(werner_state(1 / 3 - 1e-6, BellSpec()).state)

    def test_partial_transpose_spectrum_analytic(self):
        # the Werner partial transpose has eigenvalue (1 - 3 p)/4
        for p in (0.2, 0.5, 0.9):
            rho = werner_state(p, BellSpec("00/11", 0.7)).state
            w = np.linalg.eigvalsh(partial_transpose_b(rho.matrix))
            assert w.min() == pytest.approx((1 - 3 * p) / 4, abs=1e-12)

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            ppt_is_entangled(DensityMatrix.maximally_mixed(8))


class TestRandomSeparable:
    def test_single_term_product(self):
        record = random_separable(1, seed=0)
        assert record.label == LABEL_SEPARABLE
        assert not ppt_is_entangled(record.state)

    def test_always_ppt_and_valid(self):
        for seed in range(30):
            record = random_separable(1 + seed % 4, seed=seed)
            assert not ppt_is_entangled(record.state)
            assert abs(np.trace(record.state.matrix) - 1) < 1e-10
            assert np.linalg.eigvalsh(record.state.matrix).min() > -1e-10

    def test_rejects_zero_terms(self):
        with pytest.raises(ValueError):
            random_separable(0, seed=1)


class TestAdversarialState:
    def test_classical_mixture_mimics_bell(self):
        record = adversarial_state(1.0, BellSpec("00/11", 0.0))
        assert np.allclose(measure_z(record.state).values, [0.5, 0, 0, 0.5], atol=1e-13)
        assert record.label == LABEL_SEPARABLE
        assert not ppt_is_entangled(record.state)

    def test_mimicry_exact_for_all_targets(self):
        for pair in ("00/11", "01/10"):
            for phase in (0.0, 1.0, np.pi, 5.5):
                spec = BellSpec(pair, phase)
                target = measure_z(DensityMatrix.pure(spec.state_vector()))
                mimic = measure_z(adversarial_state(1.0, spec).state)
                assert np.max(np.abs(mimic.values - target.values)) < 1e-12

    def test_maximally_mixed_at_zero(self):
        record = adversarial_state(0.0, BellSpec())
        assert np.allclose(record.state.matrix, np.eye(4) / 4)

    def test_separable_for_all_mixing(self):
        for p in np.linspace(0, 1, 11):
            assert not ppt_is_entangled(adversarial_state(float(p), BellSpec("01/10", 0.0)).state)


class TestBuildDataset:
    def test_empty(self):
        assert build_dataset(DatasetCounts(0, 0, 0), seed=1) == []

    def test_paper_training_counts(self):
        records = build_dataset(DatasetCounts(350, 300, 650), seed=7)
        assert len(records) == 1300
        families = [r.family for r in records]
        assert families.count("werner") == 350
        assert families.count("random_separable") == 300
        assert families.count("adversarial") == 650

    def test_labels_match_oracle(self):
        records = build_dataset(DatasetCounts(40, 30, 30), seed=3)
        for r in records:
            assert (r.label == LABEL_ENTANGLED) == ppt_is_entangled(r.state)

    def test_reproducible(self):
        a = build_dataset(DatasetCounts(10, 10, 10), seed=5)
        b = build_dataset(DatasetCounts(10, 10, 10), seed=5)
        for ra, rb in zip(a, b):
            assert ra.params == rb.params
            assert np.array_equal(ra.state.matrix, rb.state.matrix)
        c = build_dataset(DatasetCounts(10, 10, 10), seed=6)
        assert any(
            not np.array_equal(ra.state.matrix, rc.state.matrix) for ra, rc in zip(a, c)
        )


class TestMimicPairSubset:
    def test_pairs_share_statistics(self):
        records = mimic_pair_subset(20, seed=9)
        assert len(records) == 40
        for i in range(20):
            w, a = records[2 * i], records[2 * i + 1]
            assert w.label == LABEL_ENTANGLED and a.label == LABEL_SEPARABLE
            pw = measure_z(w.state).values
            pa = measure_z(a.state).values
            assert np.max(np.abs(pw - pa)) < 1e-12

    def test_p_min_validation(self):
        with pytest.raises(ValueError):
            mimic_pair_subset(5, seed=1, p_min=0.2)


class TestSerialization:
    def test_jsonl_roundtrip(self, tmp_path):
        records = build_dataset(DatasetCounts(3, 3, 3), seed=11)
        path = tmp_path / "states.jsonl"
        save_dataset_jsonl(records, path)
        loaded = load_dataset_jsonl(path)
        assert len(loaded) == len(records)
        for a, b in zip(records, loaded):
            assert a.label == b.label and a.family == b.family
            assert np.max(np.abs(a.state.matrix - b.state.matrix)) < 1e-15

    def test_json_object_shape(self):
        record = werner_state(0.5, BellSpec("00/11", 1.0))
        obj = labeled_state_to_json(record)
        assert set(obj) == {"label", "family", "params", "state"}
        back = labeled_state_from_json(obj)
        assert back.label == record.label
        assert np.allclose(back.state.matrix, record.state.matrix)
