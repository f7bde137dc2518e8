import numpy as np
import pytest

from ttlora.errors import ContractViolation
from ttlora.tt_core import TTCores, TTRanks, TensorizationMap, tt_random_init, tt_reconstruct
from ttlora.tt_linear import (
    AdaptedLinear,
    FrozenLinear,
    adapted_forward,
    batch_forward,
    merge,
    tt_matvec,
)


def random_layer(m, n, rm, cm, rank, seed, alpha=1.0, bias=True):
    tmap = TensorizationMap(m, n, rm, cm)
    cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, rank),
                           seed=seed, scheme="gaussian", sigma=0.5)
    rng = np.random.default_rng(seed + 1)
    base = FrozenLinear(rng.normal(size=(m, n)),
                        rng.normal(size=m) if bias else None)
    return AdaptedLinear(base, cores, tmap, alpha=alpha)


class TestMatvec:
    def test_zero_core_gives_zero_vector(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 2, seed=0)
        layer.cores.cores[1][:] = 0.0
        assert np.all(tt_matvec(layer.cores, layer.tmap, np.ones(4)) == 0.0)

    def test_all_ones_rank_one_by_hand(self):
        tmap = TensorizationMap(2, 2, (2,), (2,))
        cores = TTCores([np.ones((1, 2, 1)), np.ones((1, 2, 1))])
        # delta is the all-ones 2x2 matrix, so delta @ [1, 2] = [3, 3]
        assert np.allclose(tt_matvec(cores, tmap, np.array([1.0, 2.0])), [3.0, 3.0])

    def test_matches_dense_reconstruction(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 3, seed=2)
        x = np.random.default_rng(0).normal(size=4)
        dense = tt_reconstruct(layer.cores, layer.tmap)
        got = tt_matvec(layer.cores, layer.tmap, x)
        assert np.linalg.norm(got - dense @ x) / np.linalg.norm(dense @ x) < 1e-10

    def test_linearity(self):
        layer = random_layer(8, 8, (2, 4), (4, 2), 2, seed=3)
        rng = np.random.default_rng(1)
        x, z = rng.normal(size=8), rng.normal(size=8)
        a, b = 1.7, -0.3
        lhs = tt_matvec(layer.cores, layer.tmap, a * x + b * z)
        rhs = (a * tt_matvec(layer.cores, layer.tmap, x)
               + b * tt_matvec(layer.cores, layer.tmap, z))
        assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) < 1e-10

    def test_dimension_mismatch(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 2, seed=0)
        with pytest.raises(ContractViolation):
            tt_matvec(layer.cores, layer.tmap, np.ones(5))


class TestAdaptedForward:
    def test_alpha_zero_is_base(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 2, seed=4, alpha=0.0)
        x = np.random.default_rng(2).normal(size=4)
        assert np.array_equal(adapted_forward(layer, x), layer.base.forward(x))

    def test_zero_init_is_base_at_start(self):
        tmap = TensorizationMap(6, 4, (2, 3), (2, 2))
        cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, 2), seed=9)
        rng = np.random.default_rng(3)
        layer = AdaptedLinear(FrozenLinear(rng.normal(size=(6, 4)), rng.normal(size=6)),
                              cores, tmap, alpha=4.0)
        x = rng.normal(size=4)
        assert np.array_equal(adapted_forward(layer, x), layer.base.forward(x))

    def test_matches_dense_oracle(self):
        layer = random_layer(8, 8, (2, 4), (2, 4), 3, seed=5, alpha=2.5)
        x = np.random.default_rng(4).normal(size=8)
        want = (layer.base.w0 + layer.alpha * tt_reconstruct(layer.cores, layer.tmap)) @ x \
            + layer.base.bias
        got = adapted_forward(layer, x)
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-10


class TestMerge:
    def test_alpha_zero_merge_is_base(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 2, seed=6, alpha=0.0)
        assert np.array_equal(merge(layer).w0, layer.base.w0)

    def test_zero_update_merge_is_base(self):
        tmap = TensorizationMap(4, 4, (2, 2), (2, 2))
        cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, 2), seed=0)
        base = FrozenLinear(np.random.default_rng(5).normal(size=(4, 4)))
        layer = AdaptedLinear(base, cores, tmap, alpha=3.0)
        assert np.array_equal(merge(layer).w0, base.w0)

    def test_merged_forward_matches_adapted(self):
        layer = random_layer(8, 8, (2, 4), (4, 2), 2, seed=7, alpha=1.5)
        merged = merge(layer)
        x = np.random.default_rng(6).normal(size=(16, 8))
        a = adapted_forward(layer, x)
        b = merged.forward(x)
        dev = np.abs(a - b) / np.maximum(np.abs(a), 1e-300)
        assert dev.max() < 1e-10


class TestBatchForward:
    def test_batch_of_one_matches_single(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 2, seed=8)
        x = np.random.default_rng(7).normal(size=4)
        assert np.allclose(batch_forward(layer, x[None])[0], adapted_forward(layer, x))

    def test_zero_batch_rows_equal_bias(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 2, seed=9)
        out = batch_forward(layer, np.zeros((3, 4)))
        assert np.allclose(out, np.tile(layer.base.bias, (3, 1)))

    def test_rowwise_match(self):
        layer = random_layer(8, 8, (2, 4), (2, 4), 2, seed=10)
        x = np.random.default_rng(8).normal(size=(8, 8))
        out = batch_forward(layer, x)
        for i in range(8):
            assert np.abs(out[i] - adapted_forward(layer, x[i])).max() < 1e-12


class TestFrozenContract:
    def test_base_weight_is_read_only(self):
        layer = random_layer(6, 4, (2, 3), (2, 2), 2, seed=11)
        with pytest.raises(ValueError):
            layer.base.w0[0, 0] = 1.0
        with pytest.raises(ValueError):
            layer.base.bias[0] = 1.0
