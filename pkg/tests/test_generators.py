import numpy as np
import pytest

from speclab.errors import SpecValidationError
from speclab.generators import (
    BlockSpec,
    ManifoldSpec,
    gen_blocks,
    gen_manifold,
    gen_random,
    generate_from_spec,
)
from speclab.graph import normalized_matrices
from speclab.partition import bayes_alpha, sparsest_m_partition, sparsest_partition_profile
from speclab.probe import linear_probe_error
from speclab.spectral import eigendecompose
from speclab.trainer import FeatureMap, TrainConfig, train_minibatch

# Seed-pinned end-to-end measurement on the default manifold spec, frozen after
# the first run: parametric map 8 -> 32 -> 6, minibatch SGD.
MANIFOLD_DEFAULT_ALPHA = 0.0
MANIFOLD_DEFAULT_ENSEMBLE_ERROR = 0.0


class TestBlocks:
    def test_single_block_per_class(self):
        g = gen_blocks(BlockSpec(r=2, blocks_per_class=1, naturals_per_block=2,
                                 augmentations_per_natural=2))
        alpha, _ = bayes_alpha(g)
        assert alpha == 0.0
        assert sparsest_m_partition(g, 2).rho == 0.0

    def test_sub_class_structure(self):
        g = gen_blocks(BlockSpec(r=2, blocks_per_class=2, naturals_per_block=1,
                                 augmentations_per_natural=2, cross_block_mass=0.02))
        prof = sparsest_partition_profile(g)
        assert prof[2].rho == 0.0
        assert prof[4].rho < 0.05
        assert prof[5].rho > 0.3

    def test_cross_class_leak_bounds_alpha(self):
        for seed in range(5):
            g = gen_blocks(BlockSpec(r=3, blocks_per_class=2, naturals_per_block=2,
                                     augmentations_per_natural=2, cross_class_mass=0.01,
                                     cross_block_mass=0.1, seed=seed))
            assert bayes_alpha(g)[0] <= 0.01 + 1e-9

    @pytest.mark.parametrize("r,b,n,a", [(2, 1, 3, 2), (2, 3, 2, 3), (3, 2, 1, 1), (4, 1, 2, 4)])
    def test_zero_leak_component_count(self, r, b, n, a):
        g = gen_blocks(BlockSpec(r=r, blocks_per_class=b, naturals_per_block=n,
                                 augmentations_per_natural=a))
        dec = eigendecompose(normalized_matrices(g), 1)
        assert np.sum(np.abs(dec.lambdas) < 1e-9) == r * b

    def test_deterministic(self):
        spec = BlockSpec(r=2, blocks_per_class=3, cross_block_mass=0.1, cross_class_mass=0.05,
                         prob_jitter=0.3, seed=11)
        assert gen_blocks(spec).digest() == gen_blocks(spec).digest()

    @pytest.mark.parametrize("field,value", [("r", 0), ("cross_block_mass", 1.0),
                                             ("cross_class_mass", -0.1), ("naturals_per_block", 1.5)])
    def test_validation_names_field(self, field, value):
        with pytest.raises(SpecValidationError) as info:
            BlockSpec(**{field: value})
        assert info.value.field == field


class TestManifold:
    def test_small_sigma_limit(self):
        g = gen_manifold(ManifoldSpec(n_naturals=6, atoms_per_natural=2, sigma=1e-3, seed=0))
        assert bayes_alpha(g)[0] < 1e-9
        assert sparsest_m_partition(g, 3).rho < 1e-6

    def test_deterministic_and_meta(self):
        spec = ManifoldSpec(n_naturals=8, atoms_per_natural=2, generator="random_smooth", seed=3)
        a, b = gen_manifold(spec), gen_manifold(spec)
        assert a.digest() == b.digest()
        assert a.meta["kappa_estimate"] >= 1.0
        assert a.meta["label_rule"] == "generating_index"
        assert "argmax_label_divergences" in a.meta

    def test_validation(self):
        with pytest.raises(SpecValidationError) as info:
            ManifoldSpec(sigma=0.0)
        assert info.value.field == "sigma"
        with pytest.raises(SpecValidationError):
            ManifoldSpec(r=9, d=8)

    def test_default_spec_golden(self):
        g = gen_manifold(ManifoldSpec())
        alpha, _ = bayes_alpha(g)
        assert alpha <= 0.05
        assert alpha == pytest.approx(MANIFOLD_DEFAULT_ALPHA, abs=1e-12)
        fm = FeatureMap.random([g.payloads.shape[1], 32, 6], seed=0)
        cfg = TrainConfig(k=6, learning_rate=0.01, max_steps=3000, mode="minibatch",
                          batch_size=64, seed=0)
        trained, _ = train_minibatch(g, fm, cfg)
        report, _ = linear_probe_error(trained.table(g), g)
        assert report.ensemble_error < 0.1
        assert report.ensemble_error == pytest.approx(MANIFOLD_DEFAULT_ENSEMBLE_ERROR, abs=1e-12)
        rho = sparsest_m_partition(g, 3, allow_heuristic=True)
        assert not rho.exact and rho.rho >= 0


class TestRandom:
    def test_invariants_over_seeds(self):
        for seed in range(100):
            g = gen_random(3 + seed % 5, 2 + seed % 13, 2, seed)
            g.check_invariants()

    def test_deterministic(self):
        assert gen_random(5, 10, 3, 4).equals(gen_random(5, 10, 3, 4))

    def test_too_small(self):
        with pytest.raises(ValueError):
            gen_random(2, 1, 2, 0)


class TestSpecDocuments:
    def test_blocks_document(self):
        g = generate_from_spec({"family": "blocks", "r": 2, "blocks_per_class": 2})
        assert g.N == 12

    def test_unknown_field(self):
        with pytest.raises(SpecValidationError) as info:
            generate_from_spec({"family": "blocks", "colour": 3})
        assert info.value.field == "colour"

    def test_unknown_family(self):
        with pytest.raises(SpecValidationError) as info:
            generate_from_spec({"family": "torus"})
        assert info.value.field == "family"
