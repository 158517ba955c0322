"""Confusion-matrix builders, corruption sampling and their oracles."""

import numpy as np
import pytest

from labelattn.annotators import (DEFAULT_FLIP_PAIRS, AnnotatorSpec, ConfusionMatrix,
                                  cm_adversarial, cm_average, cm_hammer_spammer,
                                  cm_ordered_confusion, cm_structured_flips, corrupt,
                                  empirical_cm, noise_level_of)


def assert_row_stochastic(cm, tol=1e-12):
    assert np.all(cm.rows >= 0) and np.all(cm.rows <= 1)
    assert np.all(np.abs(cm.rows.sum(axis=1) - 1.0) <= tol)


class TestHammerSpammer:
    def test_table_values(self):
        cm = cm_hammer_spammer(10, 0.3)
        assert np.allclose(np.diag(cm.rows), 0.7)
        off = cm.rows[~np.eye(10, dtype=bool)]
        assert np.allclose(off, 0.3 / 9)
        assert_row_stochastic(cm)

    def test_zero_noise_is_identity(self):
        assert np.array_equal(cm_hammer_spammer(5, 0.0).rows, np.eye(5))

    def test_noise_level_exact(self):
        for lv in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
            assert noise_level_of(cm_hammer_spammer(10, lv)) == lv

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            cm_hammer_spammer(1, 0.3)


class TestStructuredFlips:
    def test_paired_row(self):
        cm = cm_structured_flips(10, 0.4, pairs=((3, 5),))
        assert cm.rows[3, 3] == pytest.approx(0.6)
        assert cm.rows[3, 5] == pytest.approx(0.4)
        assert_row_stochastic(cm)

    def test_default_cifar_pairs(self):
        cm = cm_structured_flips(10, 0.4)
        for src, dst in DEFAULT_FLIP_PAIRS:
            assert cm.rows[src, dst] == pytest.approx(0.4)
        # unpaired classes fall back to uniform corruption at the same rate
        for unpaired in (1, 2, 5, 6):
            assert cm.rows[unpaired, unpaired] == pytest.approx(0.6)
            others = [cm.rows[unpaired, j] for j in range(10) if j != unpaired]
            assert np.allclose(others, 0.4 / 9)
        assert noise_level_of(cm) == 0.4

    def test_zero_noise_identity(self):
        assert np.array_equal(cm_structured_flips(10, 0.0).rows, np.eye(10))

    def test_row_sums_for_random_pair_lists(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(3, 12))
            n_pairs = int(rng.integers(0, n))
            srcs = rng.choice(n, size=n_pairs, replace=False)
            pairs = tuple((int(s), int((s + 1 + rng.integers(n - 1)) % n)) for s in srcs)
            assert_row_stochastic(cm_structured_flips(n, float(rng.uniform(0, 1)), pairs))

    def test_rejects_self_pair(self):
        with pytest.raises(ValueError, match="itself"):
            cm_structured_flips(10, 0.4, pairs=((3, 3),))


class TestOrderedConfusion:
    def test_table_values(self):
        cm = cm_ordered_confusion(10, 0.5)
        for i in range(10):
            assert cm.rows[i, i] == pytest.approx(0.5)
            assert cm.rows[i, (i - 1) % 10] == pytest.approx(0.25)
            assert cm.rows[i, (i + 1) % 10] == pytest.approx(0.25)
        assert noise_level_of(cm) == 0.5

    def test_zero_noise_identity(self):
        assert np.array_equal(cm_ordered_confusion(10, 0.0).rows, np.eye(10))

    def test_rejects_small_n(self):
        with pytest.raises(ValueError, match="n >= 3"):
            cm_ordered_confusion(2, 0.5)

    def test_monte_carlo_reproduces_matrix(self):
        # 10k per class: worst-entry std is 0.005, so allow 4 sigma here; the
        # acceptance suite runs the tight +-0.01 check at 100k per class
        cm = cm_ordered_confusion(10, 0.5)
        clean = np.repeat(np.arange(10), 10_000)
        noisy = corrupt(clean, cm, np.random.default_rng(7)).labels
        emp = empirical_cm(clean, noisy)
        assert np.max(np.abs(emp.rows - cm.rows)) < 0.02


class TestAdversarial:
    def test_always_wrong(self):
        cm = cm_adversarial(10)
        assert np.all(np.diag(cm.rows) == 0.0)
        assert noise_level_of(cm) == 1.0

    def test_cycle_length(self):
        cm = cm_adversarial(10)
        labels = np.arange(10)
        out = labels.copy()
        for _ in range(10):
            out = np.argmax(cm.rows[out], axis=1)
        assert np.array_equal(out, labels)

    def test_zero_agreement_with_clean(self):
        cm = cm_adversarial(7)
        clean = np.repeat(np.arange(7), 20)
        noisy = corrupt(clean, cm, np.random.default_rng(0)).labels
        assert np.all(noisy != clean)
        assert np.array_equal(noisy, (clean + 1) % 7)


class TestAverage:
    def test_identical_matrices(self):
        cm = cm_hammer_spammer(10, 0.3)
        avg = cm_average([cm, cm, cm, cm])
        assert np.array_equal(avg.rows, cm.rows)

    def test_table2_roster_noise_level(self):
        avg = cm_average([cm_hammer_spammer(10, 0.3), cm_structured_flips(10, 0.4),
                          cm_ordered_confusion(10, 0.5), cm_adversarial(10)])
        # mean of the four stated levels; the figure's 45% is not reproducible
        # from the defined matrices, so the measured level is exposed instead
        assert noise_level_of(avg) == pytest.approx(0.55, abs=1e-12)
        assert_row_stochastic(avg)

    def test_random_stochastic_matrices_stay_stochastic(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            parts = [ConfusionMatrix(6, rng.dirichlet(np.ones(6), size=6))
                     for _ in range(int(rng.integers(1, 5)))]
            assert_row_stochastic(cm_average(parts))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            cm_average([cm_adversarial(4), cm_adversarial(5)])


class TestNoiseLevelOf:
    def test_identity_and_adversarial(self):
        assert noise_level_of(ConfusionMatrix(10, np.eye(10))) == 0.0
        assert noise_level_of(cm_adversarial(10)) == 1.0

    def test_hammer_spammer_exact(self):
        assert noise_level_of(cm_hammer_spammer(10, 0.3)) == 0.3


class TestCorrupt:
    def test_identity_matrix_keeps_labels(self):
        clean = np.random.default_rng(3).integers(0, 10, size=500)
        out = corrupt(clean, ConfusionMatrix(10, np.eye(10)), np.random.default_rng(4))
        assert np.array_equal(out.labels, clean)

    def test_deterministic_under_seed(self):
        cm = cm_hammer_spammer(10, 0.3)
        clean = np.random.default_rng(5).integers(0, 10, size=1000)
        a = corrupt(clean, cm, np.random.default_rng(99)).labels
        b = corrupt(clean, cm, np.random.default_rng(99)).labels
        assert np.array_equal(a, b)

    def test_out_of_range_label(self):
        with pytest.raises(ValueError, match="out of range"):
            corrupt(np.array([0, 11]), cm_hammer_spammer(10, 0.3),
                    np.random.default_rng(0))

    def test_empirical_distribution_matches(self):
        cm = cm_hammer_spammer(10, 0.3)
        clean = np.repeat(np.arange(10), 10_000)
        noisy = corrupt(clean, cm, np.random.default_rng(6)).labels
        emp = empirical_cm(clean, noisy)
        assert np.max(np.abs(emp.rows - cm.rows)) < 0.02

    def test_error_shrinks_with_sample_count(self):
        cm = cm_ordered_confusion(10, 0.5)
        errs = []
        for count in (1_000, 100_000):
            clean = np.repeat(np.arange(10), count)
            noisy = corrupt(clean, cm, np.random.default_rng(8)).labels
            errs.append(np.max(np.abs(empirical_cm(clean, noisy).rows - cm.rows)))
        assert errs[1] < errs[0]


class TestEmpiricalCm:
    def test_identity_when_equal(self):
        labels = np.repeat(np.arange(5), 3)
        assert np.array_equal(empirical_cm(labels, labels).rows, np.eye(5))

    def test_cyclic_shift_gives_permutation(self):
        clean = np.repeat(np.arange(5), 4)
        noisy = (clean + 1) % 5
        expected = np.zeros((5, 5))
        expected[np.arange(5), (np.arange(5) + 1) % 5] = 1.0
        assert np.array_equal(empirical_cm(clean, noisy).rows, expected)

    def test_absent_class_named(self):
        with pytest.raises(ValueError, match="class 1"):
            empirical_cm(np.array([0, 0, 2]), np.array([0, 1, 2]))


class TestSpecAndSerialization:
    def test_kind_validation(self):
        with pytest.raises(ValueError, match="unknown annotator kind"):
            AnnotatorSpec(kind="oracle")
        with pytest.raises(ValueError, match="noise_level"):
            AnnotatorSpec(kind="hammer_spammer", noise_level=1.5)

    def test_text_round_trip(self):
        cm = cm_structured_flips(10, 0.4)
        back = ConfusionMatrix.from_text(cm.to_text())
        assert np.array_equal(back.rows, cm.rows)

    def test_invalid_matrix_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            ConfusionMatrix(2, np.array([[0.5, 0.4], [0.0, 1.0]]))
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            ConfusionMatrix(2, np.array([[1.5, -0.5], [0.0, 1.0]]))
