"""Mean-field (Curie-Weiss) Ising model, full and magnetization-lumped.

The density depends on a spin configuration only through its
magnetization ``s = sum(z)``, and the single-site flip proposal moves
``s`` by +-2 with probabilities set by the spin counts. Both the target
and the Metropolis-Hastings chain therefore lump exactly onto the
``M + 1`` magnetization classes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.special import gammaln, logsumexp

from ..errors import DomainError, SizeCapError
from ..kernel import ExactKernel, Partition, metropolis_hastings, spectral_gap
from ..tempering import (
    DEFAULT_CAP,
    LevelDensities,
    TemperatureLadder,
    swapping_chain,
    temper,
)


@dataclass(frozen=True)
class IsingModel:
    M: int
    alpha: float

    def __post_init__(self):
        if self.M < 1:
            raise DomainError("need at least one spin")
        if self.alpha < 0:
            raise DomainError("coupling must be nonnegative")


def magnetizations(M: int) -> np.ndarray:
    return np.arange(-M, M + 1, 2)


def multiplicities(M: int) -> np.ndarray:
    """Number of configurations in each magnetization class, ``C(M, (M+s)/2)``."""
    return np.array([comb(M, u) for u in range(M + 1)], dtype=float)


def _log_multiplicities(M: int) -> np.ndarray:
    u = np.arange(M + 1)
    # grouped so that classes s and -s get bitwise identical values
    return gammaln(M + 1) - (gammaln(u + 1) + gammaln(M - u + 1))


def config_log_weight(model: IsingModel, s) -> np.ndarray:
    """Unnormalized log-density of one configuration with magnetization ``s``."""
    s = np.asarray(s, dtype=float)
    return model.alpha * s ** 2 / (2.0 * model.M)


def spin_states(M: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    if 2 ** M > cap:
        raise SizeCapError(f"2^{M} configurations exceed the cap of {cap}; "
                           "use the lumped model")
    return np.array(list(itertools.product([-1, 1], repeat=M)), dtype=np.int8)


def ising_density(model: IsingModel, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Normalized density on all ``2^M`` configurations (``spin_states`` order)."""
    states = spin_states(model.M, cap)
    logw = config_log_weight(model, states.sum(axis=1))
    return np.exp(logw - logsumexp(logw))


def ising_lumped_density(model: IsingModel, beta: float = 1.0) -> np.ndarray:
    """Law of the magnetization under ``pi^beta``, classes ordered by ``s``."""
    s = magnetizations(model.M)
    logw = _log_multiplicities(model.M) + beta * config_log_weight(model, s)
    return np.exp(logw - logsumexp(logw))


def log_partition(model: IsingModel, beta: float = 1.0) -> float:
    """log sum_z exp(beta * alpha s(z)^2 / 2M), exact via lumping."""
    s = magnetizations(model.M)
    return float(logsumexp(_log_multiplicities(model.M)
                           + beta * config_log_weight(model, s)))


def single_site_proposal(M: int, lumped: bool = False, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Flip one uniformly chosen spin.

    Full form acts on ``spin_states(M)``. Lumped form acts on magnetization
    classes: from ``s`` go to ``s + 2`` w.p. (#down spins)/M and to ``s - 2``
    w.p. (#up spins)/M.
    """
    if lumped:
        up = np.arange(M + 1)
        P = np.zeros((M + 1, M + 1))
        idx = np.arange(M + 1)
        P[idx[:-1], idx[:-1] + 1] = (M - up[:-1]) / M
        P[idx[1:], idx[1:] - 1] = up[1:] / M
        return P
    states = spin_states(M, cap)
    n = states.shape[0]
    # spin_states enumerates in binary order with -1 as bit 0
    bits = (states > 0).astype(np.int64)
    weights = 1 << np.arange(M - 1, -1, -1)
    index = bits @ weights
    P = np.zeros((n, n))
    for i in range(M):
        flipped = index ^ weights[i]
        P[index, flipped] += 1.0 / M
    return P


def mode_partition(M: int, lumped: bool = True, cap: int = DEFAULT_CAP) -> Partition:
    """``A_1 = {s < 0}`` (block 0) and ``A_2 = {s >= 0}`` (block 1)."""
    s = magnetizations(M) if lumped else spin_states(M, cap).sum(axis=1)
    if M == 0 or np.all(s >= 0):
        raise DomainError("mode partition needs states on both sides of zero")
    return Partition((s >= 0).astype(np.int64), 2)


def ising_levels(model: IsingModel, ladder: TemperatureLadder, lumped: bool = True,
                 cap: int = DEFAULT_CAP) -> LevelDensities:
    """Tempered level densities, lumped or on all configurations."""
    if lumped:
        target = ising_lumped_density(model)
        return temper(target, ladder, base_measure=multiplicities(model.M))
    return temper(ising_density(model, cap), ladder)


def ising_components(model: IsingModel, levels: LevelDensities, lumped: bool = True,
                     cap: int = DEFAULT_CAP) -> list[ExactKernel]:
    """Single-site Metropolis-Hastings kernel for every level."""
    S = single_site_proposal(model.M, lumped=lumped, cap=cap)
    return [metropolis_hastings(S, levels[k]) for k in range(levels.N + 1)]


def ising_mh_kernel(model: IsingModel, beta: float = 1.0, lumped: bool = True,
                    cap: int = DEFAULT_CAP) -> ExactKernel:
    """Untempered (or fixed-beta) single-site Metropolis-Hastings chain."""
    ladder = TemperatureLadder([1.0]) if beta == 1.0 else TemperatureLadder([beta, 1.0])
    levels = ising_levels(model, ladder, lumped=lumped, cap=cap)
    S = single_site_proposal(model.M, lumped=lumped, cap=cap)
    return metropolis_hastings(S, levels[0])


def lumping_consistency_check(model: IsingModel, ladder: TemperatureLadder,
                              cap: int = DEFAULT_CAP, tol: float = 1e-9) -> bool:
    """Compare full and lumped spectral gaps level by level and for the swapping chain.

    The swapping-chain comparison is skipped when the full product space
    ``2^(M(N+1))`` exceeds ``cap``; the per-level comparison needs
    ``2^M <= cap``.
    """
    full_levels = ising_levels(model, ladder, lumped=False, cap=cap)
    lumped_levels = ising_levels(model, ladder, lumped=True)
    full_T = ising_components(model, full_levels, lumped=False, cap=cap)
    lumped_T = ising_components(model, lumped_levels, lumped=True)
    for a, b in zip(full_T, lumped_T):
        if abs(spectral_gap(a) - spectral_gap(b)) > tol:
            return False
    if 2 ** (model.M * (ladder.N + 1)) <= cap:
        g_full = spectral_gap(swapping_chain(full_levels, full_T, cap=cap))
        g_lumped = spectral_gap(swapping_chain(lumped_levels, lumped_T, cap=cap))
        if abs(g_full - g_lumped) > tol:
            return False
    return True
