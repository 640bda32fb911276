import numpy as np
import pytest
from hypothesis import given, strategies as st

from speclab.errors import ShapeMismatch, SingularQ, UnknownNatural
from speclab.generators import BlockSpec, gen_blocks, gen_random
from speclab.probe import (
    LinearProbe,
    ProbeReport,
    augmented_error,
    capped_loss,
    ensemble_predict,
    ensemble_predict_all,
    feature_sq_norm,
    fit_probe_capped,
    linear_probe_error,
    predict,
    predict_all,
    probe_error,
    sample_labeled,
    transform_probe,
)

BLOCK_FEATURES = np.sqrt(2.0) * np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)


class TestPredict:
    def test_two_block_perfect(self, g0):
        B = np.eye(2) / np.sqrt(2.0)
        assert np.linalg.norm(B) == pytest.approx(1.0)
        rep = probe_error(BLOCK_FEATURES, B, g0)
        assert rep.ensemble_error == 0.0
        assert rep.augmented_error == pytest.approx(0.0, abs=1e-15)
        assert rep.capped_loss == pytest.approx(0.0, abs=1e-15)

    def test_ties_go_to_lowest_class(self):
        f = np.array([[1.0, 1.0]])
        assert predict(f[0], np.eye(2)) == 0
        assert predict_all(np.zeros((3, 2)), np.eye(2)).tolist() == [0, 0, 0]

    def test_ensemble_vote(self, g0):
        f = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
        # natural a sees one vote per class: tie goes to class 0
        assert ensemble_predict(f, np.eye(2), "a", g0) == 0
        assert ensemble_predict(f, np.eye(2), "b", g0) == 1
        with pytest.raises(UnknownNatural):
            ensemble_predict(f, np.eye(2), "zz", g0)

    def test_shape_mismatch(self, g0):
        with pytest.raises(ShapeMismatch):
            predict_all(np.zeros((4, 3)), np.eye(2))
        with pytest.raises(ShapeMismatch):
            probe_error(np.zeros((3, 2)), np.eye(2), g0)

    def test_report_range(self):
        with pytest.raises(ValueError):
            ProbeReport(1.5, 0.0, 0.0, 0.0)


class TestLosses:
    @given(st.integers(0, 10_000))
    def test_error_at_most_twice_capped_loss(self, seed):
        g = gen_random(5, 9, 3, seed)
        rng = np.random.default_rng(seed)
        f = rng.normal(size=(g.N, 3))
        B = rng.normal(size=(3, 3))
        assert augmented_error(f, B, g) <= 2 * capped_loss(f, B, g.class_mass) + 1e-12

    def test_feature_norm(self, g0):
        assert feature_sq_norm(BLOCK_FEATURES, g0) == pytest.approx(2.0)

    def test_capped_loss_caps(self, g0):
        f = np.full((4, 1), 100.0)
        B = np.ones((1, 2))
        # every coordinate residual is capped at 1: loss = sum of mass times r
        assert capped_loss(f, B, g0.class_mass) == pytest.approx(2.0)


class TestFit:
    def test_norm_budget(self, g0):
        probe = fit_probe_capped(BLOCK_FEATURES, g0, C_lambda=2.0)
        assert np.linalg.norm(probe.B) <= 0.5 + 1e-12
        with pytest.raises(ValueError):
            LinearProbe(np.ones((2, 2)), C_lambda=2.0)

    def test_fit_on_blocks(self):
        g = gen_blocks(BlockSpec(r=2, blocks_per_class=2, naturals_per_block=2,
                                 augmentations_per_natural=2, seed=1))
        f = np.eye(4)[np.repeat(np.arange(4), 3)] / np.sqrt(g.vertex_weights)[:, None]
        rep, _ = linear_probe_error(f, g)
        assert rep.ensemble_error == 0.0

    def test_labeled_samples(self, g0):
        samples = sample_labeled(g0, 50, np.random.default_rng(0))
        assert all(g0.class_mass[x, c] > 0 for x, c in samples)
        probe = fit_probe_capped(BLOCK_FEATURES, g0, 1e-3, samples=samples)
        assert probe_error(BLOCK_FEATURES, probe.B, g0).ensemble_error == 0.0


class TestTransform:
    def test_predictions_preserved(self):
        rng = np.random.default_rng(0)
        F, B = rng.normal(size=(7, 3)), rng.normal(size=(3, 2))
        d = rng.uniform(0.5, 2.0, size=7)
        Q = rng.normal(size=(3, 3))
        out = transform_probe(F, B, d, Q)
        assert np.array_equal(predict_all(d[:, None] * F, B), predict_all(out.features, out.probe))

    def test_singular(self):
        with pytest.raises(SingularQ):
            transform_probe(np.ones((3, 2)), np.eye(2), np.ones(3), np.zeros((2, 2)))
