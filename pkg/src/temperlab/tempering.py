"""Temperature ladders and exact swapping / simulated tempering chains.

The swapping chain lives on the product space ``X^(N+1)`` with states
encoded in mixed radix (component 0 most significant, matching
``np.ravel_multi_index`` and ``scipy.sparse.kron`` ordering). Simulated
tempering lives on ``X x {0..N}`` with flat index ``k * |X| + z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import DomainError, ShapeError, SizeCapError
from .kernel import (
    BALANCE_TOL,
    DENSE_LIMIT,
    STOCHASTIC_TOL,
    ExactKernel,
    as_density,
    compose,
    check_reversible,
)

DEFAULT_CAP = 200_000


@dataclass(frozen=True, eq=False)
class TemperatureLadder:
    """Inverse temperatures ``0 <= beta_0 < ... < beta_N = 1``."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.array(self.betas, dtype=float)
        if b.ndim != 1 or b.size == 0:
            raise DomainError("ladder needs at least one inverse temperature")
        if b[0] < 0:
            raise DomainError("inverse temperatures must be nonnegative")
        if np.any(np.diff(b) <= 0):
            raise DomainError("inverse temperatures must be strictly increasing")
        if b[-1] != 1.0:
            raise DomainError("the last inverse temperature must be exactly 1")
        object.__setattr__(self, "betas", b)

    @property
    def N(self) -> int:
        return self.betas.size - 1

    def __len__(self) -> int:
        return self.betas.size


def geometric_betas(M: int) -> np.ndarray:
    """Raw geometric progression ``M^(-(M-k)/M)``, k = 0..M (not validated)."""
    if M < 1:
        raise DomainError("M must be at least 1")
    k = np.arange(M + 1)
    return np.power(float(M), -(M - k) / M)


def geometric_ladder(M: int) -> TemperatureLadder:
    # M = 1 gives (1, 1), which breaks strict monotonicity
    if M < 2:
        raise DomainError("geometric ladder needs M >= 2")
    return TemperatureLadder(geometric_betas(M))


def linear_ladder(M: int) -> TemperatureLadder:
    if M < 1:
        raise DomainError("M must be at least 1")
    return TemperatureLadder(np.arange(M + 1) / M)


def union_ladder(M: int, merge_tol: float = 1e-12) -> TemperatureLadder:
    """Union of the geometric and linear ladders, duplicates merged.

    Values closer than ``merge_tol`` are treated as one temperature (the
    linear value is kept), so ``N`` may be smaller than ``2M``.
    """
    if M < 2:
        raise DomainError("union ladder needs M >= 2")
    linear = np.arange(1, M + 1) / M
    merged = list(linear)
    for g in geometric_betas(M):
        if not np.any(np.abs(linear - g) <= merge_tol):
            merged.append(g)
    return TemperatureLadder(np.sort(np.array(merged)))


@dataclass(frozen=True, eq=False)
class LevelDensities:
    """Densities ``pi_0..pi_N`` on a shared finite base space, one per row."""

    levels: np.ndarray
    betas: np.ndarray | None = None

    def __post_init__(self):
        lv = np.array(self.levels, dtype=float)
        if lv.ndim != 2:
            raise ShapeError("levels must be a 2-D array (N+1, n)")
        for row in lv:
            as_density(row)
        object.__setattr__(self, "levels", lv)

    @property
    def N(self) -> int:
        return self.levels.shape[0] - 1

    @property
    def n(self) -> int:
        return self.levels.shape[1]

    @property
    def target(self) -> np.ndarray:
        return self.levels[-1]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.levels[k]


def temper(target, ladder: TemperatureLadder, base_measure=None) -> LevelDensities:
    """Tempered densities ``pi_k ∝ m * (pi / m)^beta_k``.

    ``base_measure`` ``m`` gives the number of microstates behind each
    state (e.g. binomial multiplicities of a lumped chain), so that the
    power is taken of the per-microstate density. Omitted means counting
    measure. States outside the support of ``target`` stay at zero; the
    last level equals ``target`` exactly.
    """
    pi = as_density(target)
    m = np.ones_like(pi) if base_measure is None else np.asarray(base_measure, float)
    if m.shape != pi.shape or np.any(m <= 0):
        raise ShapeError("base measure must be positive with one entry per state")
    support = pi > 0
    log_m = np.log(m[support])
    log_rel = np.log(pi[support]) - log_m
    rows = np.zeros((len(ladder), pi.size))
    for k, beta in enumerate(ladder.betas):
        logw = log_m + beta * log_rel
        rows[k, support] = np.exp(logw - logsumexp(logw))
    rows[-1] = pi
    return LevelDensities(rows, ladder.betas)


def product_states(base: int, N: int) -> np.ndarray:
    """All product states as an ``(base^(N+1), N+1)`` array of components."""
    shape = (base,) * (N + 1)
    return np.array(np.unravel_index(np.arange(base ** (N + 1)), shape)).T


def product_index(components: Sequence[int], base: int, N: int) -> int:
    c = np.asarray(components, dtype=np.int64)
    if c.shape != (N + 1,):
        raise ShapeError(f"expected {N + 1} components")
    if np.any(c < 0) or np.any(c >= base):
        raise DomainError("component out of range")
    return int(np.ravel_multi_index(tuple(c), (base,) * (N + 1)))


def product_components(index: int, base: int, N: int) -> np.ndarray:
    size = base ** (N + 1)
    if not 0 <= index < size:
        raise DomainError("flat index out of range")
    return np.array(np.unravel_index(index, (base,) * (N + 1)))


def augmented_index(z: int, k: int, base: int) -> int:
    return k * base + z


def _check_cap(size: int, cap: int) -> None:
    if size > cap:
        raise SizeCapError(
            f"state space of {size} states exceeds the cap of {cap}; use a lumped "
            "model, a coarser grid, or Monte Carlo simulation"
        )


def _finish(m, pi, dense_limit, reversible=True) -> ExactKernel:
    m = sp.csr_array(m)
    m.sum_duplicates()
    m.eliminate_zeros()
    if m.shape[0] <= dense_limit:
        m = m.toarray()
    return ExactKernel(m, pi, reversible=reversible)


def product_density(densities: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.multiply.outer, densities).ravel()


def product_kernel(components: Sequence[ExactKernel], weights=None,
                   cap: int = DEFAULT_CAP, dense_limit: int = DENSE_LIMIT) -> ExactKernel:
    """Product chain: with probability ``b_k`` update coordinate ``k`` by ``P_k``."""
    K = len(components)
    if K == 0:
        raise DomainError("product chain needs at least one component")
    b = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, float)
    if b.shape != (K,) or np.any(b <= 0) or abs(b.sum() - 1.0) > STOCHASTIC_TOL:
        raise DomainError("weights must be positive and sum to 1")
    sizes = [c.n for c in components]
    _check_cap(int(np.prod(sizes)), cap)
    total = None
    for k, comp in enumerate(components):
        factors = [sp.eye_array(s, format="csr") for s in sizes]
        factors[k] = sp.csr_array(comp.matrix)
        term = reduce(lambda a, c: sp.kron(a, c, format="csr"), factors)
        term = b[k] * term
        total = term if total is None else total + term
    pi = product_density([c.stationary for c in components])
    reversible = all(c.reversible for c in components)
    return _finish(total, pi, dense_limit, reversible=reversible)


def _check_components(levels: LevelDensities, components: Sequence[ExactKernel]) -> None:
    if len(components) != levels.N + 1:
        raise ShapeError(f"need {levels.N + 1} component kernels, got {len(components)}")
    for k, comp in enumerate(components):
        if comp.n != levels.n:
            raise ShapeError(f"component {k} has {comp.n} states, levels have {levels.n}")
        if np.max(np.abs(comp.stationary - levels[k])) > BALANCE_TOL:
            raise DomainError(f"component {k} does not preserve level density {k}")
        if not (comp.reversible or check_reversible(comp)):
            raise DomainError(f"component {k} is not reversible w.r.t. its level")


def update_kernel_T(levels: LevelDensities, components: Sequence[ExactKernel],
                    cap: int = DEFAULT_CAP, dense_limit: int = DENSE_LIMIT) -> ExactKernel:
    """Update move: hold w.p. 1/2, else apply ``T_k`` at a uniform level ``k``."""
    _check_components(levels, components)
    _check_cap(levels.n ** (levels.N + 1), cap)
    inner = product_kernel(components, cap=cap, dense_limit=0)
    size = inner.n
    m = 0.5 * sp.eye_array(size, format="csr") + 0.5 * inner.matrix
    return _finish(m, inner.stationary, dense_limit)


def swap_kernel_Q(levels: LevelDensities, cap: int = DEFAULT_CAP,
                  dense_limit: int = DENSE_LIMIT) -> ExactKernel:
    """Swap move between adjacent levels, Metropolis-accepted, holding 1/2.

    With a single level (``N = 0``) no swap exists and ``Q`` is the identity.
    """
    n, N = levels.n, levels.N
    size = n ** (N + 1)
    _check_cap(size, cap)
    pi = product_density(list(levels.levels))
    if N == 0:
        return _finish(sp.eye_array(size, format="csr"), pi, dense_limit)
    states = product_states(n, N)
    with np.errstate(divide="ignore"):
        logp = np.log(levels.levels)
    shape = (n,) * (N + 1)
    rows, cols, vals = [], [], []
    hold = np.ones(size)
    flat = np.arange(size)
    for k in range(N):
        a, b = states[:, k], states[:, k + 1]
        swapped = states.copy()
        swapped[:, [k, k + 1]] = swapped[:, [k + 1, k]]
        target = np.ravel_multi_index(tuple(swapped.T), shape)
        with np.errstate(invalid="ignore"):
            log_ratio = logp[k, b] + logp[k + 1, a] - logp[k, a] - logp[k + 1, b]
        # states outside the support of pi_pt never move
        log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
        rho = np.exp(np.minimum(0.0, log_ratio))
        move = rho / (2 * N)
        rows.append(flat)
        cols.append(target)
        vals.append(move)
        hold -= move
    rows.append(flat)
    cols.append(flat)
    vals.append(hold)
    m = sp.csr_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    return _finish(m, pi, dense_limit)


def swapping_chain(levels: LevelDensities, components: Sequence[ExactKernel],
                   cap: int = DEFAULT_CAP, dense_limit: int = DENSE_LIMIT) -> ExactKernel:
    """``P_sc = Q T Q``: two swap moves around each update move."""
    Q = swap_kernel_Q(levels, cap=cap, dense_limit=dense_limit)
    T = update_kernel_T(levels, components, cap=cap, dense_limit=dense_limit)
    return compose(Q, T, Q)


def simulated_tempering_chain(levels: LevelDensities, components: Sequence[ExactKernel],
                              cap: int = DEFAULT_CAP,
                              dense_limit: int = DENSE_LIMIT) -> ExactKernel:
    """``P_st = Q' T' Q'`` on the augmented space, index ``k * n + z``.

    ``T'`` holds w.p. 1/2, else moves ``z`` by ``T_k`` at the current level.
    ``Q'`` holds w.p. 1/2, else redraws ``k`` with probability proportional
    to ``pi_k(z)``.
    """
    _check_components(levels, components)
    n, L = levels.n, levels.N + 1
    size = n * L
    _check_cap(size, cap)
    pi_st = levels.levels.ravel() / L
    eye = sp.eye_array(size, format="csr")
    blocks = sp.block_diag([sp.csr_array(c.matrix) for c in components], format="csr")
    T_prime = 0.5 * eye + 0.5 * blocks

    col_sum = levels.levels.sum(axis=0)
    cond = np.divide(levels.levels, col_sum, out=np.zeros_like(levels.levels),
                     where=col_sum > 0)
    z = np.arange(n)
    rows, cols, vals = [], [], []
    for k in range(L):
        for l in range(L):
            w = cond[l]
            if k == l:
                w = np.where(col_sum > 0, w, 1.0)
            rows.append(k * n + z)
            cols.append(l * n + z)
            vals.append(w)
    R = sp.csr_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    Q_prime = _finish(0.5 * eye + 0.5 * R, pi_st, dense_limit)
    T_k = _finish(T_prime, pi_st, dense_limit)
    return compose(Q_prime, T_k, Q_prime)
