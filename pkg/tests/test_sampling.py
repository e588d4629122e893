import numpy as np
import pytest

from hqrn.blocks import Activation, qrb_forward
from hqrn.linalg import SimplexVector
from hqrn.sampling import (
    EnsembleLedger,
    LedgerEntry,
    ShotConfig,
    cascade_qrb_sampled,
    confusion_decomposition,
    derive_seed,
    disagreement_rate,
    qrb_forward_sampled,
    sample_distribution,
)
from hqrn.verify import random_block, random_mixed_state


class TestSampleDistribution:
    def test_deterministic_outcome(self):
        p = SimplexVector(np.array([1.0, 0.0, 0.0, 0.0]))
        out = sample_distribution(p, 17, seed=5)
        assert np.array_equal(out.values, [1.0, 0.0, 0.0, 0.0])

    def test_same_seed_identical(self):
        p = SimplexVector(np.array([0.4, 0.3, 0.2, 0.1]))
        a = sample_distribution(p, 1000, seed=42)
        b = sample_distribution(p, 1000, seed=42)
        assert np.array_equal(a.values, b.values)
        c = sample_distribution(p, 1000, seed=43)
        assert not np.array_equal(a.values, c.values)

    def test_binomial_error_bound(self):
        # max deviation under 5 sigma for at least 99% of seeds
        p = SimplexVector.uniform(4)
        n = 10**6
        bound = 5 * np.sqrt(0.25 * 0.75 / n)
        hits = 0
        seeds = 200
        for s in range(seeds):
            out = sample_distribution(p, n, seed=s)
            hits += np.max(np.abs(out.values - 0.25)) < bound
        assert hits / seeds >= 0.99

    def test_frequencies_are_multiples_of_inverse_shots(self):
        p = SimplexVector(np.array([0.3, 0.3, 0.4]))
        for n in (7, 100, 1234):
            out = sample_distribution(p, n, seed=1)
            counts = out.values * n
            assert np.allclose(counts, np.round(counts), atol=1e-9)
            assert out.values.sum() == pytest.approx(1.0)

    def test_monotone_convergence_in_shots(self):
        p = SimplexVector(np.array([0.4, 0.3, 0.2, 0.1]))
        means = []
        for n in (10**3, 10**4, 10**5, 10**6):
            devs = [
                np.max(np.abs(sample_distribution(p, n, derive_seed(9, n, s)).values - p.values))
                for s in range(100)
            ]
            means.append(np.mean(devs))
        assert all(a > b for a, b in zip(means, means[1:]))


class TestDeriveSeed:
    def test_deterministic_and_path_sensitive(self):
        assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
        assert derive_seed(7, 1, 2) != derive_seed(7, 2, 1)
        assert derive_seed(7) != derive_seed(8)


class TestQrbForwardSampled:
    def test_infinite_shots_bitwise_equal(self):
        rng = np.random.default_rng(0)
        rho = random_mixed_state(4, rng)
        params = random_block(4, rng, 0.5)
        exact = qrb_forward(rho, params, Activation.RELU)
        sampled = qrb_forward_sampled(rho, params, Activation.RELU, ShotConfig(None, seed=3))
        assert np.array_equal(sampled.rho.matrix, exact.rho.matrix)
        assert np.array_equal(sampled.h.values, exact.h.values)
        assert np.array_equal(sampled.p_plus.values, exact.p_plus.values)

    def test_finite_shots_reproducible(self):
        rng = np.random.default_rng(1)
        rho = random_mixed_state(4, rng)
        params = random_block(4, rng, 0.5)
        cfg = ShotConfig(1000, seed=11)
        a = qrb_forward_sampled(rho, params, Activation.RELU, cfg)
        b = qrb_forward_sampled(rho, params, Activation.RELU, cfg)
        assert np.array_equal(a.h.values, b.h.values)
        assert a.ledger_entry.consumed_copies == 4000

    def test_sampled_h_converges_at_root_n_rate(self):
        from hqrn.blocks import QrbParams
        from hqrn.verify import haar_unitary

        rng = np.random.default_rng(2)
        rho = random_mixed_state(4, rng)
        # positive bias keeps every activation component away from the ReLU
        # kink, so h responds smoothly to sampling noise
        params = QrbParams(
            haar_unitary(4, rng), haar_unitary(4, rng), 1.0, 0.5 * np.ones(4), 0.5
        )
        exact = qrb_forward(rho, params, Activation.RELU)
        shot_counts = (10**3, 10**4, 10**5)
        means = []
        for n in shot_counts:
            devs = []
            for s in range(50):
                out = qrb_forward_sampled(
                    rho, params, Activation.RELU, ShotConfig(n, derive_seed(4, n, s))
                )
                devs.append(np.max(np.abs(out.h.values - exact.h.values)))
            means.append(np.mean(devs))
        slope = np.polyfit(np.log10(shot_counts), np.log10(means), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.15)

    def test_output_state_valid_under_sampling(self):
        rng = np.random.default_rng(3)
        rho = random_mixed_state(4, rng)
        params = random_block(4, rng, 0.5)
        out = qrb_forward_sampled(rho, params, Activation.RELU, ShotConfig(37, seed=5))
        assert abs(np.trace(out.rho.matrix) - 1) < 1e-10


class TestLedger:
    def test_entry_accounting(self):
        entry = LedgerEntry(shots_per_branch=250)
        assert entry.measured_copies == 500
        assert entry.mixing_copies == 500
        assert entry.consumed_copies == 1000

    def test_cascade_ledger_supply_non_increasing(self):
        rng = np.random.default_rng(4)
        rho = random_mixed_state(4, rng)
        blocks = [random_block(4, rng, 0.5) for _ in range(3)]
        _, hs, ledger = cascade_qrb_sampled(rho, blocks, Activation.RELU, ShotConfig(100, 7))
        assert len(ledger.entries) == 3
        assert len(hs) == 3
        assert ledger.total_initial_copies == 400
        supply = ledger.supply_trace()
        assert all(a >= b for a, b in zip(supply, supply[1:]))

    def test_infinite_ledger(self):
        ledger = EnsembleLedger(None)
        ledger.record_block()
        assert ledger.total_initial_copies is None
        assert ledger.entries[0].consumed_copies is None


class TestDisagreement:
    def test_identical(self):
        assert disagreement_rate([1, 2, 3], [1, 2, 3]) == 0.0

    def test_complementary(self):
        assert disagreement_rate([0, 1, 0], [1, 0, 1]) == 1.0

    def test_quarter(self):
        assert disagreement_rate([0, 1, 2, 3], [0, 1, 0, 3]) == 0.25

    def test_errors(self):
        with pytest.raises(ValueError):
            disagreement_rate([], [])
        with pytest.raises(ValueError):
            disagreement_rate([1], [1, 2])


class TestConfusionDecomposition:
    def test_all_correct(self):
        out = confusion_decomposition([1, 0], [1, 0], [1, 0])
        assert out == (1.0, 0.0, 0.0, 0.0)

    def test_a_only(self):
        out = confusion_decomposition([1, 0], [0, 1], [1, 0])
        assert out == (0.0, 1.0, 0.0, 0.0)

    def test_partitions_unity(self):
        rng = np.random.default_rng(5)
        a = rng.integers(0, 3, 100)
        b = rng.integers(0, 3, 100)
        t = rng.integers(0, 3, 100)
        out = confusion_decomposition(a, b, t)
        assert sum(out) == pytest.approx(1.0, abs=1e-12)
        assert all(v >= 0 for v in out)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion_decomposition([1], [1, 2], [1, 2])
