"""Spectral-gap lower bounds for swapping and simulated tempering chains.

The ingredients are the overlap ``delta`` between adjacent levels within
each block, the block-mass decay factor ``gamma``, the gap of the
hottest component projected onto the blocks, and the smallest gap of any
component restricted to any block. The module also carries the generic
tools the bounds rest on: the decomposition sandwich, product-chain gaps,
path comparison, and the signature decomposition of the swapping chain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .errors import BoundViolationError, DomainError, ShapeError
from .kernel import (
    INEQUALITY_SLACK,
    ExactKernel,
    Partition,
    _flow,
    as_dense,
    check_nonneg_definite,
    project,
    restrict,
    spectral_gap,
)
from .tempering import (
    DEFAULT_CAP,
    LevelDensities,
    _check_cap,
    product_kernel,
    product_states,
    simulated_tempering_chain,
    swapping_chain,
)


def _exact_block_sums(partition: Partition, row) -> np.ndarray:
    return np.array([math.fsum(row[A]) for A in partition.blocks()])


def block_masses(levels: LevelDensities, partition: Partition) -> np.ndarray:
    """``pi_k[A_j]`` as an ``(N+1, J)`` array; every entry must be positive.

    Block sums are exactly rounded and each row is renormalized, so blocks
    holding the same multiset of probabilities get identical masses and a
    symmetric two-block level has masses of exactly 1/2.
    """
    if partition.size != levels.n:
        raise ShapeError("partition and level densities disagree on size")
    sums = np.array([_exact_block_sums(partition, row) for row in levels.levels])
    masses = sums / sums.sum(axis=1, keepdims=True)
    if np.any(masses <= 0):
        k, j = np.argwhere(masses <= 0)[0]
        raise DomainError(f"block {j} has zero mass at level {k}")
    return masses


def overlap_delta(levels: LevelDensities, partition: Partition) -> float:
    """Worst within-block overlap of adjacent levels, normalized by ``pi_k[A_j]``.

    Both orders ``(k, k+1)`` and ``(k+1, k)`` are taken since the
    normalization is by the first level's block mass. A single level has
    no adjacent pair and gets overlap 1.
    """
    masses = block_masses(levels, partition)
    best = 1.0
    for k in range(levels.N):
        common = partition.masses(np.minimum(levels[k], levels[k + 1]))
        best = min(best, np.min(common / masses[k]), np.min(common / masses[k + 1]))
    return float(best)


def madras_randall_overlap(levels: LevelDensities) -> float:
    """``min_k sum_z min(pi_k(z), pi_{k+1}(z))``, the partition-free overlap."""
    if levels.N == 0:
        return 1.0
    common = np.minimum(levels.levels[:-1], levels.levels[1:]).sum(axis=1)
    return float(common.min())


def gamma(levels: LevelDensities, partition: Partition) -> float:
    """``min_j prod_k min(1, pi_{k-1}[A_j] / pi_k[A_j])``."""
    masses = block_masses(levels, partition)
    if levels.N == 0:
        return 1.0
    ratios = np.minimum(1.0, masses[:-1] / masses[1:])
    return float(np.min(np.prod(ratios, axis=0)))


def swap_acceptance_marginal(levels: LevelDensities, partition: Partition,
                             k: int, i: int, j: int) -> float:
    """Stationary probability of accepting a swap of ``x_k in A_i`` with ``x_{k+1} in A_j``."""
    if not 0 <= k < levels.N:
        raise DomainError("swap level out of range")
    if not (0 <= i < partition.J and 0 <= j < partition.J):
        raise DomainError("block index out of range")
    masses = block_masses(levels, partition)
    blocks = partition.blocks()
    z, w = blocks[i], blocks[j]
    pk, pk1 = levels[k], levels[k + 1]
    direct = np.outer(pk[z], pk1[w])
    swapped = np.outer(pk1[z], pk[w])
    total = np.minimum(direct, swapped).sum()
    return float(total / (masses[k, i] * masses[k + 1, j]))


def _check_bound_inputs(*values) -> None:
    if any(not v > 0 for v in values):
        raise DomainError("bound inputs must be positive")


def swapping_gap_bound(delta: float, gamma: float, gap_T0_bar: float,
                    min_restricted_gap: float, J: int, N: int) -> float:
    """Lower bound on the swapping-chain gap."""
    _check_bound_inputs(delta, gamma, gap_T0_bar, min_restricted_gap, J)
    if N < 0:
        raise DomainError("N must be nonnegative")
    const = gamma ** (J + 3) * delta ** 2 / (2.0 ** 12 * (N + 1) ** 4 * J ** 3)
    return float(const * gap_T0_bar * min_restricted_gap)


def tempering_gap_bound(delta: float, gamma: float, gap_T0_bar: float,
                      min_restricted_gap: float, J: int, N: int) -> float:
    """Lower bound on the simulated-tempering gap."""
    _check_bound_inputs(delta, gamma, gap_T0_bar, min_restricted_gap, J)
    if N < 0:
        raise DomainError("N must be nonnegative")
    const = gamma ** (J + 3) * delta ** 3 / (2.0 ** 14 * (N + 1) ** 5 * J ** 3)
    return float(const * gap_T0_bar * min_restricted_gap)


def restricted_gaps(components: Sequence[ExactKernel], partition: Partition) -> np.ndarray:
    """``Gap(T_k|A_j)`` as an ``(N+1, J)`` array."""
    blocks = partition.blocks()
    return np.array([[spectral_gap(restrict(T, A)) for A in blocks] for T in components])


def decomposition_bounds(k: ExactKernel, partition: Partition,
                         require_nonneg: bool = True) -> tuple[float, float]:
    """``(1/2 Gap(P_bar) min_j Gap(P|A_j), Gap(P_bar))``.

    The lower value is only a bound for nonnegative definite ``k``; with
    ``require_nonneg`` that is checked and a :class:`DomainError` raised
    otherwise.
    """
    if require_nonneg and not check_nonneg_definite(k):
        raise DomainError("the lower decomposition bound needs a nonnegative definite kernel")
    upper = spectral_gap(project(k, partition))
    inner = min(spectral_gap(restrict(k, A)) for A in partition.blocks())
    return 0.5 * upper * inner, upper


def product_chain_gap(components: Sequence[ExactKernel], weights=None,
                      cap: int = DEFAULT_CAP, verify: bool = True,
                      tol: float = 1e-10) -> float:
    """``min_k b_k Gap(P_k)`` for the product chain, checked against its spectrum.

    With ``verify`` the product kernel is built (subject to ``cap``) and its
    eigendecomposition gap compared with the formula; a mismatch above
    ``tol`` raises :class:`BoundViolationError`.
    """
    K = len(components)
    b = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, float)
    formula = float(min(bk * spectral_gap(c) for bk, c in zip(b, components)))
    if verify:
        exact = spectral_gap(product_kernel(components, b, cap=cap))
        if abs(exact - formula) > tol:
            raise BoundViolationError(
                f"product-chain gap {exact!r} differs from formula {formula!r}")
    return formula


# -- path comparison -------------------------------------------------------


@dataclass
class PathSet:
    """For each directed edge ``(x, y)`` of a chain Q, a vertex path in chain P."""

    paths: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)

    def __getitem__(self, edge):
        return self.paths[edge]

    def __contains__(self, edge) -> bool:
        return edge in self.paths

    def __len__(self) -> int:
        return len(self.paths)


def edge_set(k: ExactKernel) -> set[tuple[int, int]]:
    """Directed off-diagonal edges with positive stationary flow."""
    F = as_dense(_flow(k))
    np.fill_diagonal(F, 0.0)
    return {(int(x), int(y)) for x, y in zip(*np.nonzero(F > 0))}


def shortest_paths(P: ExactKernel, Q: ExactKernel) -> PathSet:
    """Route every edge of Q along a fewest-hops path of P."""
    F = as_dense(_flow(P))
    np.fill_diagonal(F, 0.0)
    _, pred = shortest_path((F > 0).astype(float), unweighted=True,
                            return_predecessors=True)
    out = PathSet()
    for x, y in sorted(edge_set(Q)):
        if pred[x, y] < 0:
            raise DomainError(f"no path from {x} to {y} in the comparison chain")
        path = [y]
        while path[-1] != x:
            path.append(int(pred[x, path[-1]]))
        out.paths[(x, y)] = tuple(reversed(path))
    return out


def path_comparison_constant(P: ExactKernel, Q: ExactKernel, paths: PathSet) -> float:
    """Congestion constant ``c`` with ``E_Q(f, f) <= c E_P(f, f)``.

    ``c = max over P-edges e of (1 / pi_P Q_P(e)) sum_{paths through e} |path| pi_Q(x) Q(x, y)``.
    """
    if P.n != Q.n:
        raise ShapeError("chains live on different spaces")
    FP = as_dense(_flow(P))
    FQ = as_dense(_flow(Q))
    EP = edge_set(P)
    load: dict[tuple[int, int], float] = {}
    for (x, y) in edge_set(Q):
        if (x, y) not in paths:
            raise DomainError(f"missing path for edge {(x, y)}")
        path = paths[(x, y)]
        if path[0] != x or path[-1] != y:
            raise DomainError(f"path for {(x, y)} has wrong endpoints")
        length = len(path) - 1
        for e in zip(path[:-1], path[1:]):
            if e not in EP:
                raise DomainError(f"path edge {e} is not an edge of P")
            load[e] = load.get(e, 0.0) + length * FQ[x, y]
    if not load:
        return 0.0
    return float(max(v / FP[e] for e, v in load.items()))


# -- signature decomposition -------------------------------------------------


@dataclass
class InequalityCheck:
    """Outcome of a numerical ``lhs >= rhs`` check; truthy when it holds."""

    lhs: float
    rhs: float
    slack: float = INEQUALITY_SLACK

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - self.slack

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def __bool__(self) -> bool:
        return self.holds


def signature_partition(partition: Partition, N: int,
                        cap: int = DEFAULT_CAP) -> tuple[Partition, np.ndarray]:
    """Partition the product space by the block label of every level.

    Returns the partition and the ``(K, N+1)`` array of signatures of its
    blocks, in block order. Empty signature classes are dropped with a
    warning.
    """
    n, J = partition.size, partition.J
    _check_cap(n ** (N + 1), cap)
    sig = partition.block_of[product_states(n, N)]
    code = np.ravel_multi_index(tuple(sig.T), (J,) * (N + 1))
    present, labels = np.unique(code, return_inverse=True)
    if present.size < J ** (N + 1):
        warnings.warn(f"{J ** (N + 1) - present.size} empty signature classes dropped",
                      stacklevel=2)
    signatures = np.array(np.unravel_index(present, (J,) * (N + 1))).T
    return Partition(labels.ravel(), present.size), signatures


def signature_gaps(P_sc: ExactKernel, sig_partition: Partition) -> np.ndarray:
    """``Gap(P_sc | X_sigma)`` for every signature class."""
    return np.array([spectral_gap(restrict(P_sc, A)) for A in sig_partition.blocks()])


def signature_decomposition_check(P_sc: ExactKernel, sig_partition: Partition,
               sigma_gaps: np.ndarray | None = None) -> InequalityCheck:
    """``Gap(P_sc) >= 1/2 Gap(P_sc projected) min_sigma Gap(P_sigma)``."""
    if sigma_gaps is None:
        sigma_gaps = signature_gaps(P_sc, sig_partition)
    rhs = 0.5 * spectral_gap(project(P_sc, sig_partition)) * float(np.min(sigma_gaps))
    return InequalityCheck(spectral_gap(P_sc), rhs)


def signature_restriction_check(P_sc: ExactKernel, sig_partition: Partition,
               components: Sequence[ExactKernel], partition: Partition,
               sigma_gaps: np.ndarray | None = None) -> InequalityCheck:
    """Every ``Gap(P_sigma) >= min_{k,j} Gap(T_k|A_j) / (8(N+1))``."""
    if sigma_gaps is None:
        sigma_gaps = signature_gaps(P_sc, sig_partition)
    N = len(components) - 1
    rhs = float(np.min(restricted_gaps(components, partition))) / (8.0 * (N + 1))
    return InequalityCheck(float(np.min(sigma_gaps)), rhs)


# -- assembled report --------------------------------------------------------


@dataclass
class BoundReport:
    delta: float
    gamma: float
    gap_T0_bar: float
    min_restricted_gap: float
    J: int
    N: int
    swapping_bound: float
    tempering_bound: float
    exact_gap_sc: float | None = None
    exact_gap_st: float | None = None
    delta_se: float | None = None
    madras_randall_overlap: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def check(self, slack: float = INEQUALITY_SLACK) -> list[str]:
        """Names of violated inequalities (empty when everything holds)."""
        bad = []
        if self.exact_gap_sc is not None and self.swapping_bound > self.exact_gap_sc + slack:
            bad.append("swapping_bound <= exact_gap_sc")
        if self.exact_gap_st is not None and self.tempering_bound > self.exact_gap_st + slack:
            bad.append("tempering_bound <= exact_gap_st")
        return bad


def bound_ingredients(levels: LevelDensities, components: Sequence[ExactKernel],
                      partition: Partition) -> dict:
    return {
        "delta": overlap_delta(levels, partition),
        "gamma": gamma(levels, partition),
        "gap_T0_bar": spectral_gap(project(components[0], partition)),
        "min_restricted_gap": float(np.min(restricted_gaps(components, partition))),
        "J": partition.J,
        "N": levels.N,
    }


def full_bound_report(levels: LevelDensities, components: Sequence[ExactKernel],
                      partition: Partition, exact: bool = True,
                      cap: int = DEFAULT_CAP, P_sc: ExactKernel | None = None,
                      delta: float | None = None, delta_se: float | None = None,
                      raise_on_violation: bool = True) -> BoundReport:
    """Compute every bound ingredient, both bounds and (optionally) the exact gaps.

    ``delta``/``delta_se`` override the grid-exact overlap with a Monte
    Carlo estimate; the bounds then use ``delta - 3 se``. Exact gaps are
    skipped for state spaces above ``cap``. A violated bound raises
    :class:`BoundViolationError` unless ``raise_on_violation`` is false.
    """
    ing = bound_ingredients(levels, components, partition)
    if delta is not None:
        ing["delta"] = delta
    used_delta = ing["delta"] - 3.0 * (delta_se or 0.0)
    args = dict(ing, delta=used_delta)
    report = BoundReport(
        **ing,
        swapping_bound=swapping_gap_bound(**args),
        tempering_bound=tempering_gap_bound(**args),
        delta_se=delta_se,
        madras_randall_overlap=madras_randall_overlap(levels),
    )
    if exact:
        if levels.n ** (levels.N + 1) <= cap:
            if P_sc is None:
                P_sc = swapping_chain(levels, components, cap=cap)
            report.exact_gap_sc = spectral_gap(P_sc)
        if levels.n * (levels.N + 1) <= cap:
            report.exact_gap_st = spectral_gap(
                simulated_tempering_chain(levels, components, cap=cap))
    bad = report.check()
    if bad and raise_on_violation:
        raise BoundViolationError("violated: " + ", ".join(bad))
    return report
