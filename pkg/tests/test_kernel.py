import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from temperlab.errors import DomainError, KernelValidationError, ReversibilityError, ShapeError
from temperlab.kernel import (
    ExactKernel,
    Partition,
    add_holding,
    as_density,
    balance_residual,
    check_nonneg_definite,
    check_reversible,
    compose,
    dirichlet_form,
    dirichlet_form_edges,
    distribution_after,
    eigenvalues,
    metropolis_hastings,
    power_kernel,
    project,
    rayleigh_gap,
    restrict,
    smallest_eigenvalue,
    spectral_gap,
    sqrt_kernel,
    tv_distance,
    variance,
)
from temperlab.random_chains import random_density, random_reversible_chain

from oracle import gap_general, mh_loops

HOLD2 = np.array([[0.75, 0.25], [0.25, 0.75]])
UNIF2 = np.array([0.5, 0.5])


def uniform_kernel(n):
    return ExactKernel(np.full((n, n), 1.0 / n), np.full(n, 1.0 / n))


def two_state():
    return ExactKernel(HOLD2, UNIF2)


class TestConstruction:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(KernelValidationError):
            ExactKernel(np.array([[0.5, 0.51], [0.5, 0.5]]), UNIF2)

    def test_negative_entries_rejected(self):
        with pytest.raises(KernelValidationError):
            ExactKernel(np.array([[1.1, -0.1], [0.5, 0.5]]), UNIF2)

    def test_detailed_balance_enforced_when_flagged(self):
        P = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        with pytest.raises(KernelValidationError):
            ExactKernel(P, np.full(3, 1 / 3))
        k = ExactKernel(P, np.full(3, 1 / 3), reversible=False)
        assert not check_reversible(k)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ExactKernel(HOLD2, np.full(3, 1 / 3))

    def test_density_must_be_normalized(self):
        with pytest.raises(DomainError):
            as_density([0.5, 0.6])
        with pytest.raises(DomainError):
            as_density([1.2, -0.2])

    def test_matrix_is_read_only(self):
        k = two_state()
        with pytest.raises(ValueError):
            k.dense()[0, 0] = 0.0
        with pytest.raises(ValueError):
            k.stationary[0] = 1.0

    def test_sparse_input_accepted(self):
        k = ExactKernel(sparse.csr_matrix(HOLD2), UNIF2)
        assert spectral_gap(k) == pytest.approx(0.5, abs=1e-12)


class TestPartition:
    def test_blocks_and_sizes(self):
        p = Partition([0, 1, 1, 0])
        assert p.J == 2
        np.testing.assert_array_equal(p.blocks()[0], [0, 3])
        np.testing.assert_array_equal(p.blocks()[1], [1, 2])

    def test_empty_block_rejected(self):
        with pytest.raises(DomainError):
            Partition([0, 2, 2], 3)


class TestSpectralGap:
    def test_two_state(self):
        assert spectral_gap(two_state()) == pytest.approx(0.5, abs=1e-12)

    def test_identity(self):
        k = ExactKernel(np.eye(3), np.array([0.2, 0.3, 0.5]))
        assert spectral_gap(k) == pytest.approx(0.0, abs=1e-12)

    def test_uniform(self):
        assert spectral_gap(uniform_kernel(5)) == pytest.approx(1.0, abs=1e-12)

    def test_one_state_convention(self):
        assert spectral_gap(ExactKernel(np.ones((1, 1)), np.ones(1))) == 1.0

    def test_periodic_chain_gap_uses_signed_eigenvalue(self):
        k = ExactKernel(np.array([[0.0, 1.0], [1.0, 0.0]]), UNIF2)
        assert spectral_gap(k) == pytest.approx(2.0)

    def test_non_reversible_rejected(self):
        P = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        k = ExactKernel(P, np.full(3, 1 / 3), reversible=False)
        with pytest.raises(ReversibilityError):
            spectral_gap(k)

    def test_zero_mass_state_rejected(self):
        k = ExactKernel(np.eye(2), np.array([1.0, 0.0]))
        with pytest.raises(DomainError):
            spectral_gap(k)

    def test_matches_general_eigensolver(self, rng):
        for n in (3, 7, 15):
            k = random_reversible_chain(n, rng)
            assert spectral_gap(k) == pytest.approx(gap_general(k.dense()), abs=1e-10)

    def test_sparse_lanczos_route_matches_dense(self, rng):
        k = random_reversible_chain(60, rng, holding=0.5)
        dense = spectral_gap(k)
        lanczos = spectral_gap(ExactKernel(sparse.csr_matrix(k.dense()), k.stationary),
                               dense_limit=10)
        assert lanczos == pytest.approx(dense, abs=1e-9)

    def test_eigenvalues_sorted_descending(self, rng):
        ev = eigenvalues(random_reversible_chain(6, rng))
        assert ev[0] == pytest.approx(1.0)
        assert np.all(np.diff(ev) <= 1e-14)
        assert smallest_eigenvalue(random_reversible_chain(6, rng, holding=0.5)) >= -1e-12


class TestDirichletAndVariance:
    def test_constant_function(self, rng):
        k = random_reversible_chain(5, rng)
        assert dirichlet_form(k, np.full(5, 3.0)) == pytest.approx(0.0, abs=1e-14)

    def test_identity_kernel(self):
        k = ExactKernel(np.eye(3), np.full(3, 1 / 3))
        assert dirichlet_form(k, [1.0, -2.0, 5.0]) == pytest.approx(0.0, abs=1e-14)

    def test_two_state_value(self):
        assert dirichlet_form(two_state(), [0.0, 1.0]) == pytest.approx(0.125, abs=1e-15)

    def test_edge_form_agrees(self, rng):
        k = random_reversible_chain(8, rng)
        f = rng.normal(size=8)
        assert dirichlet_form(k, f) == pytest.approx(dirichlet_form_edges(k, f), rel=1e-12)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            dirichlet_form(two_state(), [1.0, 2.0, 3.0])
        with pytest.raises(ShapeError):
            variance(UNIF2, [1.0])

    def test_variance_values(self):
        assert variance(UNIF2, [4.0, 4.0]) == 0.0
        assert variance(UNIF2, [0.0, 1.0]) == pytest.approx(0.25)
        assert variance([0.3, 0.7], [0.0, 1.0]) == pytest.approx(0.21, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
    def test_variance_nonnegative(self, n, seed):
        rng = np.random.default_rng(seed)
        assert variance(random_density(n, rng), rng.normal(size=n)) >= 0.0


class TestRayleighGap:
    def test_identity(self, rng):
        k = ExactKernel(np.eye(3), np.full(3, 1 / 3))
        assert rayleigh_gap(k, 50, rng) == pytest.approx(0.0, abs=1e-12)

    def test_uniform(self, rng):
        assert rayleigh_gap(uniform_kernel(4), 50, rng) >= 1 - 1e-9

    def test_two_state(self, rng):
        r = rayleigh_gap(two_state(), 100, rng)
        assert r >= 0.5 - 1e-9
        assert r == pytest.approx(0.5, abs=1e-9)

    def test_never_below_spectral_gap(self, rng):
        for _ in range(10):
            k = random_reversible_chain(int(rng.integers(3, 10)), rng)
            assert rayleigh_gap(k, 200, rng) >= spectral_gap(k) - 1e-9


class TestRestrict:
    SYM3 = np.array([[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]])

    def test_full_space_unchanged(self, rng):
        k = random_reversible_chain(5, rng)
        r = restrict(k, range(5))
        np.testing.assert_allclose(r.dense(), k.dense(), atol=1e-15)

    def test_substitution(self):
        k = ExactKernel(self.SYM3, np.full(3, 1 / 3))
        r = restrict(k, [0, 1])
        np.testing.assert_allclose(r.dense(), HOLD2, atol=1e-15)
        np.testing.assert_allclose(r.stationary, UNIF2)

    def test_singleton(self):
        r = restrict(ExactKernel(self.SYM3, np.full(3, 1 / 3)), [2])
        np.testing.assert_array_equal(r.dense(), [[1.0]])

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            restrict(two_state(), [])

    def test_reversible(self, rng):
        k = random_reversible_chain(9, rng)
        r = restrict(k, [0, 3, 4, 8])
        assert check_reversible(r)
        np.testing.assert_allclose(r.stationary, k.stationary[[0, 3, 4, 8]] / k.stationary[[0, 3, 4, 8]].sum())


class TestProject:
    def test_single_block(self, rng):
        k = random_reversible_chain(4, rng)
        np.testing.assert_allclose(project(k, Partition([0, 0, 0, 0])).dense(), [[1.0]])

    def test_uniform_kernel(self):
        p = project(uniform_kernel(4), Partition([0, 0, 1, 1]))
        np.testing.assert_allclose(p.dense(), np.full((2, 2), 0.5), atol=1e-15)

    def test_identity_kernel(self):
        k = ExactKernel(np.eye(5), np.full(5, 0.2))
        np.testing.assert_allclose(project(k, Partition([0, 1, 2, 1, 0])).dense(), np.eye(3))

    def test_stationary_and_reversible(self, rng):
        k = random_reversible_chain(8, rng)
        part = Partition([0, 1, 2, 0, 1, 2, 0, 1])
        p = project(k, part)
        np.testing.assert_allclose(p.stationary, [k.stationary[b].sum() for b in part.blocks()])
        assert check_reversible(p)

    def test_zero_mass_block_rejected(self):
        k = ExactKernel(np.eye(3), np.array([0.5, 0.5, 0.0]))
        with pytest.raises(DomainError):
            project(k, Partition([0, 0, 1]))


class TestMetropolisHastings:
    def test_symmetric_proposal_uniform_target(self, rng):
        S = uniform_kernel(4).dense()
        np.testing.assert_allclose(metropolis_hastings(S, np.full(4, 0.25)).dense(), S)

    def test_two_state_value(self):
        k = metropolis_hastings(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([2 / 3, 1 / 3]))
        np.testing.assert_allclose(k.dense(), [[0.5, 0.5], [1.0, 0.0]], atol=1e-15)

    def test_identity_proposal(self):
        k = metropolis_hastings(np.eye(3), np.array([0.1, 0.2, 0.7]))
        np.testing.assert_array_equal(k.dense(), np.eye(3))

    def test_matches_loop_oracle(self, rng):
        for _ in range(5):
            n = 6
            S = rng.random((n, n))
            S /= S.sum(axis=1, keepdims=True)
            pi = random_density(n, rng)
            k = metropolis_hastings(S, pi)
            np.testing.assert_allclose(k.dense(), mh_loops(S, pi), atol=1e-14)
            assert check_reversible(k)

    def test_zero_origin_mass_accepts(self):
        S = np.array([[0.0, 1.0], [1.0, 0.0]])
        k = metropolis_hastings(S, np.array([0.0, 1.0]))
        assert k.dense()[0, 1] == 1.0


class TestHoldingAndComposition:
    FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])

    def test_holding_zero(self, rng):
        k = random_reversible_chain(4, rng)
        np.testing.assert_allclose(add_holding(k, 0.0).dense(), k.dense())

    def test_holding_half_on_flip(self):
        k = add_holding(ExactKernel(self.FLIP, UNIF2), 0.5)
        np.testing.assert_allclose(k.dense(), np.full((2, 2), 0.5))
        assert check_nonneg_definite(k)
        assert not check_nonneg_definite(ExactKernel(self.FLIP, UNIF2))

    def test_holding_range(self):
        with pytest.raises(DomainError):
            add_holding(two_state(), 1.0)
        with pytest.raises(DomainError):
            add_holding(two_state(), -0.1)

    def test_holding_half_nonneg_definite(self, rng):
        for _ in range(10):
            k = random_reversible_chain(int(rng.integers(2, 12)), rng)
            assert check_nonneg_definite(add_holding(k, 0.5))

    def test_compose_identities(self, rng):
        k = random_reversible_chain(4, rng)
        eye = ExactKernel(np.eye(4), k.stationary)
        np.testing.assert_allclose(compose(eye, k, eye).dense(), k.dense(), atol=1e-15)
        np.testing.assert_allclose(compose(k, eye, k).dense(), k.dense() @ k.dense(), atol=1e-15)

    def test_compose_qtq(self):
        Q = two_state()
        T = ExactKernel(np.array([[0.6, 0.4], [0.4, 0.6]]), UNIF2)
        P = compose(Q, T, Q)
        np.testing.assert_allclose(P.dense(), HOLD2 @ T.dense() @ HOLD2, atol=1e-15)
        assert check_reversible(P)

    def test_compose_stationary_mismatch(self):
        other = ExactKernel(np.eye(2), np.array([0.3, 0.7]))
        with pytest.raises(DomainError):
            compose(two_state(), other, two_state())

    def test_power(self):
        k = two_state()
        np.testing.assert_allclose(power_kernel(k, 1).dense(), k.dense())
        np.testing.assert_allclose(power_kernel(uniform_kernel(3), 5).dense(), np.full((3, 3), 1 / 3))
        g2 = spectral_gap(power_kernel(k, 2))
        assert g2 == pytest.approx(0.75, abs=1e-12)
        assert spectral_gap(k) >= g2 / 2
        with pytest.raises(DomainError):
            power_kernel(k, 0)

    def test_sqrt_squares_back(self, rng):
        k = random_reversible_chain(6, rng, holding=0.5)
        r = sqrt_kernel(k)
        np.testing.assert_allclose(r.dense() @ r.dense(), k.dense(), atol=1e-12)


class TestReversibilityChecks:
    def test_cycle_not_reversible(self):
        P = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        k = ExactKernel(P, np.full(3, 1 / 3), reversible=False)
        assert not check_reversible(k)
        assert balance_residual(k) == pytest.approx(1 / 3)

    def test_identity(self):
        assert check_reversible(ExactKernel(np.eye(3), np.full(3, 1 / 3)))
        assert check_nonneg_definite(ExactKernel(np.eye(3), np.full(3, 1 / 3)))


class TestDistances:
    def test_tv(self):
        assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert tv_distance([0.2, 0.8], [0.5, 0.5]) == pytest.approx(0.3)

    def test_distribution_after(self):
        k = two_state()
        rows = distribution_after(k, [1.0, 0.0], [0, 1, 3])
        np.testing.assert_allclose(rows[0], [1.0, 0.0])
        np.testing.assert_allclose(rows[1], [0.75, 0.25])
        np.testing.assert_allclose(rows[2], [0.5 + 0.5 * 0.5 ** 3, 0.5 - 0.5 * 0.5 ** 3])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2 ** 32 - 1))
def test_random_chains_reversible_with_positive_gap(n, seed):
    k = random_reversible_chain(n, np.random.default_rng(seed))
    assert check_reversible(k)
    g = spectral_gap(k)
    assert 0.0 < g <= 2.0
