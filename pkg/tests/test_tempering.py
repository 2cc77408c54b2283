import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from temperlab.errors import DomainError, ShapeError, SizeCapError
from temperlab.kernel import (
    ExactKernel,
    add_holding,
    check_nonneg_definite,
    check_reversible,
    spectral_gap,
)
from temperlab.models.ising import IsingModel, ising_components, ising_levels
from temperlab.random_chains import random_density, random_reversible_chain
from temperlab.tempering import (
    LevelDensities,
    TemperatureLadder,
    geometric_ladder,
    linear_ladder,
    product_components,
    product_density,
    product_index,
    product_states,
    simulated_tempering_chain,
    swap_kernel_Q,
    swapping_chain,
    temper,
    union_ladder,
    update_kernel_T,
)

from oracle import ising_tempered_instance, st_loops, swapping_loops

# Frozen from the loop-based oracle (tests/oracle.py), lumped Ising alpha = 2,
# linear ladder beta_k = k/N.
ORACLE_GAPS = {
    (3, 1): (0.04883483546461265, 0.10227402106051098),
    (3, 2): (0.032500232829487885, 0.10212991704438645),
    (3, 3): (0.023454540533198065, 0.10222599634056562),
    (4, 4): (0.010654655653775214, 0.060401751682429006),
}


def ising_instance(M, N, alpha=2.0):
    model = IsingModel(M, alpha)
    levels = ising_levels(model, linear_ladder(N))
    return levels, ising_components(model, levels)


class TestLadders:
    def test_strictness_and_endpoint(self):
        with pytest.raises(DomainError):
            TemperatureLadder([0.0, 0.5, 0.5, 1.0])
        with pytest.raises(DomainError):
            TemperatureLadder([0.0, 0.5, 0.9])
        with pytest.raises(DomainError):
            TemperatureLadder([-0.1, 1.0])

    def test_geometric(self):
        np.testing.assert_allclose(geometric_ladder(2).betas, [0.5, 2 ** -0.5, 1.0], rtol=1e-15)
        assert geometric_ladder(4).betas[0] == pytest.approx(0.25, rel=1e-15)
        assert geometric_ladder(4).betas[-1] == 1.0
        with pytest.raises(DomainError):
            geometric_ladder(1)

    def test_linear(self):
        np.testing.assert_array_equal(linear_ladder(1).betas, [0.0, 1.0])
        np.testing.assert_array_equal(linear_ladder(4).betas, [0, 0.25, 0.5, 0.75, 1])

    def test_union_merges_duplicates(self):
        lad = union_ladder(2)
        np.testing.assert_allclose(lad.betas, [0.5, 2 ** -0.5, 1.0])
        assert lad.N == 2

    def test_union_three(self):
        # Independent set union: {3^-1, 3^-2/3, 3^-1/3, 1} | {1/3, 2/3, 1}
        expected = sorted({round(3.0 ** (-(3 - k) / 3), 12) for k in range(4)}
                          | {round(k / 3, 12) for k in range(1, 4)})
        lad = union_ladder(3)
        assert len(expected) == 5
        np.testing.assert_allclose(lad.betas, expected, atol=1e-12)
        assert lad.N == 4

    @pytest.mark.parametrize("M", range(2, 12))
    def test_union_contains_one_once(self, M):
        assert np.sum(union_ladder(M).betas == 1.0) == 1


class TestTemper:
    def test_uniform_target(self):
        lv = temper(np.full(4, 0.25), linear_ladder(3))
        np.testing.assert_allclose(lv.levels, np.full((4, 4), 0.25))

    def test_beta_zero_uniform_on_support(self):
        lv = temper(np.array([0.1, 0.0, 0.9]), linear_ladder(2))
        np.testing.assert_allclose(lv[0], [0.5, 0.0, 0.5])

    def test_two_state_square_root(self):
        lv = temper(np.array([0.8, 0.2]), TemperatureLadder([0.5, 1.0]))
        r = np.sqrt(0.8) / (np.sqrt(0.8) + np.sqrt(0.2))
        np.testing.assert_allclose(lv[0], [r, 1 - r], rtol=1e-15)
        assert lv[0][0] == pytest.approx(2 / 3, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
    def test_top_level_is_target(self, n, N, seed):
        target = random_density(n, np.random.default_rng(seed))
        lv = temper(target, linear_ladder(N))
        np.testing.assert_allclose(lv.target, target, rtol=0, atol=1e-12)
        np.testing.assert_allclose(lv.levels.sum(axis=1), 1.0, atol=1e-12)


class TestProductIndex:
    def test_extremes(self):
        assert product_index([0, 0, 0], 4, 2) == 0
        assert product_index([3, 3, 3], 4, 2) == 4 ** 3 - 1

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            product_index([0, 4], 4, 1)
        with pytest.raises(ShapeError):
            product_index([0, 1, 2], 4, 1)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 4), st.data())
    def test_round_trip(self, base, N, data):
        comps = data.draw(st.lists(st.integers(0, base - 1), min_size=N + 1, max_size=N + 1))
        idx = product_index(comps, base, N)
        np.testing.assert_array_equal(product_components(idx, base, N), comps)
        np.testing.assert_array_equal(product_states(base, N)[idx], comps)


class TestUpdateKernel:
    def test_identity_components(self):
        lv = temper(np.array([0.3, 0.7]), linear_ladder(2))
        eye = [ExactKernel(np.eye(2), lv[k]) for k in range(3)]
        np.testing.assert_allclose(update_kernel_T(lv, eye).dense(), np.eye(8))

    def test_single_level(self, rng):
        k = random_reversible_chain(4, rng)
        lv = LevelDensities(k.stationary[None, :])
        T = update_kernel_T(lv, [k])
        np.testing.assert_allclose(T.dense(), 0.5 * np.eye(4) + 0.5 * k.dense(), atol=1e-15)

    def test_product_gap_formula(self, rng):
        for N in (1, 2):
            comps = [random_reversible_chain(3, rng) for _ in range(N + 1)]
            lv = LevelDensities([c.stationary for c in comps])
            T = update_kernel_T(lv, comps)
            expected = min(spectral_gap(c) for c in comps) / (2 * (N + 1))
            assert spectral_gap(T) == pytest.approx(expected, abs=1e-10)
            assert check_nonneg_definite(T)
            np.testing.assert_allclose(T.stationary, product_density(lv.levels), atol=1e-15)

    def test_component_must_match_level(self, rng):
        lv = temper(np.array([0.3, 0.7]), linear_ladder(1))
        wrong = ExactKernel(np.full((2, 2), 0.5), np.array([0.5, 0.5]))
        with pytest.raises(DomainError):
            update_kernel_T(lv, [wrong, wrong])


class TestSwapKernel:
    def test_equal_levels_always_accept(self):
        pi = np.array([0.2, 0.8])
        lv = LevelDensities([pi, pi])
        Q = swap_kernel_Q(lv).dense()
        # (0,1) swaps to (1,0) with probability 1/2
        assert Q[product_index([0, 1], 2, 1), product_index([1, 0], 2, 1)] == pytest.approx(0.5)
        assert Q[product_index([0, 0], 2, 1), product_index([0, 0], 2, 1)] == pytest.approx(1.0)

    def test_acceptance_values(self):
        lv = LevelDensities([[0.5, 0.5], [0.8, 0.2]])
        Q = swap_kernel_Q(lv).dense()
        # moving the heavy state 0 up to level 1 is always accepted
        up = Q[product_index([0, 1], 2, 1), product_index([1, 0], 2, 1)]
        down = Q[product_index([1, 0], 2, 1), product_index([0, 1], 2, 1)]
        assert up == pytest.approx(0.5 * 1.0)
        assert down == pytest.approx(0.5 * 0.25)

    def test_single_level_is_identity(self):
        lv = LevelDensities([[0.3, 0.7]])
        np.testing.assert_array_equal(swap_kernel_Q(lv).dense(), np.eye(2))

    def test_reversible_and_nonneg_definite(self, rng):
        lv = LevelDensities([random_density(3, rng) for _ in range(3)])
        Q = swap_kernel_Q(lv)
        assert check_reversible(Q)
        assert check_nonneg_definite(Q)


class TestSwappingChain:
    @pytest.mark.parametrize("M,N", [(3, 1), (3, 2), (3, 3)])
    def test_matches_loop_oracle(self, M, N):
        levels, comps = ising_instance(M, N)
        ref = swapping_loops(*ising_tempered_instance(M, 2.0, N))
        np.testing.assert_allclose(swapping_chain(levels, comps).dense(), ref, atol=1e-14)

    @pytest.mark.parametrize("M,N", sorted(ORACLE_GAPS))
    def test_frozen_gaps(self, M, N):
        levels, comps = ising_instance(M, N)
        sc = swapping_chain(levels, comps)
        st_ = simulated_tempering_chain(levels, comps)
        assert spectral_gap(sc) == pytest.approx(ORACLE_GAPS[M, N][0], abs=1e-11)
        assert spectral_gap(st_) == pytest.approx(ORACLE_GAPS[M, N][1], abs=1e-11)

    def test_reversible_nonneg_definite_marginal(self):
        levels, comps = ising_instance(3, 2)
        P = swapping_chain(levels, comps)
        assert check_reversible(P)
        assert check_nonneg_definite(P)
        marg = P.stationary.reshape((4,) * 3).sum(axis=(0, 1))
        np.testing.assert_allclose(marg, levels.target, atol=1e-15)

    def test_single_level_reduces_to_update(self, rng):
        k = random_reversible_chain(5, rng)
        lv = LevelDensities(k.stationary[None, :])
        np.testing.assert_allclose(swapping_chain(lv, [k]).dense(),
                                   update_kernel_T(lv, [k]).dense(), atol=1e-15)

    def test_identity_components_equal_levels(self):
        pi = np.array([0.4, 0.6])
        lv = LevelDensities([pi, pi])
        eye = [ExactKernel(np.eye(2), pi)] * 2
        Q = swap_kernel_Q(lv).dense()
        np.testing.assert_allclose(swapping_chain(lv, eye).dense(), Q @ Q, atol=1e-15)

    def test_equal_levels_gap_at_least_update_gap(self, rng):
        for _ in range(5):
            k = add_holding(random_reversible_chain(3, rng), 0.5)
            lv = LevelDensities([k.stationary] * 3)
            T = update_kernel_T(lv, [k] * 3)
            assert spectral_gap(swapping_chain(lv, [k] * 3)) >= spectral_gap(T) - 1e-9

    def test_size_cap(self):
        levels, comps = ising_instance(3, 3)
        with pytest.raises(SizeCapError):
            swapping_chain(levels, comps, cap=100)


class TestSimulatedTempering:
    @pytest.mark.parametrize("M,N", [(3, 1), (3, 3), (4, 2)])
    def test_matches_loop_oracle(self, M, N):
        levels, comps = ising_instance(M, N)
        ref = st_loops(*ising_tempered_instance(M, 2.0, N))
        np.testing.assert_allclose(simulated_tempering_chain(levels, comps).dense(), ref, atol=1e-14)

    def test_stationary_and_reversible(self):
        levels, comps = ising_instance(3, 2)
        P = simulated_tempering_chain(levels, comps)
        np.testing.assert_allclose(P.stationary, levels.levels.ravel() / 3, atol=1e-15)
        assert check_reversible(P)
        assert check_nonneg_definite(P)

    def test_equal_levels_resample_uniformly(self):
        pi = np.array([0.25, 0.75])
        lv = LevelDensities([pi] * 3)
        eye = [ExactKernel(np.eye(2), pi)] * 3
        P = simulated_tempering_chain(lv, eye).dense()
        # Q' T' Q' with identity T: Q' is idempotent-like, rows over levels at fixed z
        Qp = 0.5 * np.eye(6) + 0.5 * np.kron(np.full((3, 3), 1 / 3), np.eye(2))
        np.testing.assert_allclose(P, Qp @ Qp, atol=1e-15)

    def test_single_level(self, rng):
        k = random_reversible_chain(4, rng)
        lv = LevelDensities(k.stationary[None, :])
        P = simulated_tempering_chain(lv, [k])
        assert spectral_gap(P) == pytest.approx(spectral_gap(add_holding(k, 0.5)), abs=1e-12)
