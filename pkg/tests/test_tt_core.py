import numpy as np
import pytest

from ttlora.errors import ContractViolation
from ttlora.tt_core import (
    TTCores,
    TTRanks,
    TTShape,
    TensorizationMap,
    factorize_dims,
    param_count,
    tt_random_init,
    tt_reconstruct,
    tt_svd,
)


def brute_force_entry(cores, tmap, i, j):
    """Elementwise multi-index contraction oracle."""
    multi = tmap.delinearize(i, j)
    v = np.ones((1, 1))
    for core, a in zip(cores.cores, multi):
        v = v @ core[:, a, :]
    return v[0, 0]


class TestParamCount:
    def test_hand_evaluated_small_chain(self):
        assert param_count(TTShape((2, 3)), TTRanks((1, 4, 1))) == 20

    def test_rank_one_degenerate_chain(self):
        with pytest.raises(ContractViolation):
            TTShape((5,))  # d=1 rejected
        assert param_count(TTShape((5, 1)), TTRanks((1, 1, 1))) == 6

    def test_reference_configuration_is_995(self):
        # the widely quoted figure for this configuration is 1,135 at
        # rank 5; the rank-chain sum gives 995 and that is what we report
        shape = TTShape((12, 8, 8, 3, 8, 8, 12))
        assert param_count(shape, TTRanks.uniform(shape, 5)) == 995

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            param_count(TTShape((2, 2, 2)), TTRanks((1, 2, 1)))

    def test_monotone_in_each_rank(self):
        shape = TTShape((4, 3, 2, 5))
        base = (1, 2, 3, 2, 1)
        ref = param_count(shape, TTRanks(base))
        for i in range(1, 4):
            bumped = list(base)
            bumped[i] += 1
            assert param_count(shape, TTRanks(tuple(bumped))) > ref


class TestFactorizeDims:
    def test_forced_single_factorization(self):
        maps = factorize_dims(4, 4, 2)
        assert [(t.row_modes, t.col_modes) for t in maps] == [((4,), (4,))]

    def test_reference_768x2304_contains_known_split(self):
        maps = factorize_dims(768, 2304, 7)
        assert any(t.row_modes == (12, 8, 8) and t.col_modes == (3, 8, 8, 12)
                   for t in maps)

    def test_exhaustive_small_case(self):
        # oracle: all (row split, col split) pairs with factors >= 2
        maps = factorize_dims(6, 2, 3)
        got = {(t.row_modes, t.col_modes) for t in maps}
        assert got == {((2, 3), (2,)), ((3, 2), (2,))}

    def test_no_factorization_yields_empty(self):
        assert factorize_dims(7, 7, 4) == []  # primes can't give 4 modes >= 2

    def test_deterministic_lexicographic_order(self):
        maps = factorize_dims(24, 24, 4)
        dims = [t.dims for t in maps]
        assert dims == sorted(dims)
        assert maps == factorize_dims(24, 24, 4)

    def test_subsample_cap_is_deterministic(self):
        a = factorize_dims(64, 64, 5, max_maps=10, seed=3)
        b = factorize_dims(64, 64, 5, max_maps=10, seed=3)
        assert len(a) == 10 and a == b


class TestTensorizationMap:
    def test_product_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            TensorizationMap(6, 4, (2, 2), (2, 2))

    @pytest.mark.parametrize("m,n,rm,cm", [
        (6, 4, (2, 3), (2, 2)),
        (12, 12, (3, 4), (2, 6)),
        (64, 64, (8, 8), (4, 4, 4)),
        (64, 32, (2, 2, 2, 8), (32,)),
    ])
    def test_bijection_exhaustive(self, m, n, rm, cm):
        tmap = TensorizationMap(m, n, rm, cm)
        for i in range(m):
            for j in range(n):
                assert tmap.linearize(tmap.delinearize(i, j)) == (i, j)


class TestRandomInit:
    def test_zero_scheme_reconstructs_to_zero(self):
        tmap = TensorizationMap(6, 4, (2, 3), (2, 2))
        cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, 2), seed=0)
        assert np.all(tt_reconstruct(cores, tmap) == 0.0)

    def test_same_seed_bitwise_identical(self):
        shape = TTShape((3, 4, 5))
        ranks = TTRanks.uniform(shape, 2)
        a = tt_random_init(shape, ranks, seed=42, scheme="gaussian", sigma=1.0)
        b = tt_random_init(shape, ranks, seed=42, scheme="gaussian", sigma=1.0)
        for x, y in zip(a.cores, b.cores):
            assert np.array_equal(x, y)

    def test_rank_one_pair_is_outer_product(self):
        tmap = TensorizationMap(2, 2, (2,), (2,))
        cores = tt_random_init(tmap.shape, TTRanks((1, 1, 1)), seed=7,
                               scheme="gaussian", sigma=1.0)
        u = cores.cores[0].reshape(2)
        v = cores.cores[1].reshape(2)
        assert np.allclose(tt_reconstruct(cores, tmap), np.outer(u, v))

    def test_invalid_sigma(self):
        shape = TTShape((2, 2))
        with pytest.raises(ContractViolation):
            tt_random_init(shape, TTRanks((1, 1, 1)), seed=0, sigma=0.0)

    def test_element_count_matches_param_count(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            d = int(rng.integers(2, 6))
            dims = tuple(int(rng.integers(1, 6)) for _ in range(d))
            shape = TTShape(dims)
            ranks = TTRanks.uniform(shape, int(rng.integers(1, 5)))
            cores = tt_random_init(shape, ranks, seed=int(rng.integers(1e6)),
                                   scheme="gaussian", sigma=0.3)
            assert cores.n_params == param_count(shape, ranks)


class TestReconstruct:
    def test_rank_one_all_ones(self):
        tmap = TensorizationMap(2, 2, (2,), (2,))
        cores = TTCores([np.ones((1, 2, 1)), np.ones((1, 2, 1))])
        assert np.array_equal(tt_reconstruct(cores, tmap), np.ones((2, 2)))

    def test_zero_core_annihilates(self):
        tmap = TensorizationMap(4, 2, (2, 2), (2,))
        cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, 2),
                               seed=0, scheme="gaussian", sigma=1.0)
        cores.cores[1][:] = 0.0
        assert np.all(tt_reconstruct(cores, tmap) == 0.0)

    def test_matches_elementwise_oracle(self):
        tmap = TensorizationMap(6, 2, (2, 3), (2,))
        cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, 2),
                               seed=5, scheme="gaussian", sigma=1.0)
        w = tt_reconstruct(cores, tmap)
        for i in range(6):
            for j in range(2):
                assert abs(w[i, j] - brute_force_entry(cores, tmap, i, j)) < 1e-12

    def test_shape_mismatch_rejected(self):
        tmap = TensorizationMap(4, 4, (2, 2), (2, 2))
        cores = TTCores([np.ones((1, 3, 1)), np.ones((1, 2, 1))])
        with pytest.raises(ContractViolation):
            tt_reconstruct(cores, tmap)


class TestTTSVD:
    def test_round_trip_at_exact_ranks(self):
        tmap = TensorizationMap(8, 8, (2, 4), (4, 2))
        cores = tt_random_init(tmap.shape, TTRanks.uniform(tmap.shape, 3),
                               seed=1, scheme="gaussian", sigma=1.0)
        dense = tt_reconstruct(cores, tmap)
        rebuilt = tt_svd(dense, tmap, max_rank=3)
        err = np.linalg.norm(tt_reconstruct(rebuilt, tmap) - dense) / np.linalg.norm(dense)
        assert err < 1e-10

    def test_zero_matrix(self):
        tmap = TensorizationMap(4, 4, (2, 2), (2, 2))
        cores = tt_svd(np.zeros((4, 4)), tmap, max_rank=2)
        assert np.all(tt_reconstruct(cores, tmap) == 0.0)

    def test_identity_exact_at_rank_4(self):
        tmap = TensorizationMap(4, 4, (2, 2), (2, 2))
        cores = tt_svd(np.eye(4), tmap, max_rank=4)
        assert np.allclose(tt_reconstruct(cores, tmap), np.eye(4), atol=1e-12)
        for r in cores.ranks.ranks[1:-1]:
            assert r <= 4

    def test_bad_max_rank(self):
        tmap = TensorizationMap(4, 4, (2, 2), (2, 2))
        with pytest.raises(ContractViolation):
            tt_svd(np.eye(4), tmap, max_rank=0)


class TestRankClamping:
    def test_user_ranks_clamped_with_warning(self, caplog):
        shape = TTShape((2, 2, 2, 2))
        with caplog.at_level("WARNING"):
            ranks = TTRanks.uniform(shape, 16)
        assert ranks.ranks == (1, 2, 4, 2, 1)
        assert any("clamped" in r.message for r in caplog.records)
