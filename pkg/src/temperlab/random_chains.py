"""Random reversible chains, partitions and comparison instances for property checks."""

from __future__ import annotations

import numpy as np

from .kernel import ExactKernel, Partition, add_holding
from .bounds import PathSet, shortest_paths


def random_density(n: int, rng, floor: float = 0.05) -> np.ndarray:
    """Positive density with every entry at least ``floor / n``."""
    w = rng.dirichlet(np.ones(n))
    return (1.0 - floor) * w + floor / n


def _random_graph(n: int, rng, p_extra: float) -> np.ndarray:
    """Symmetric boolean adjacency: a random spanning tree plus extra edges."""
    adj = np.zeros((n, n), dtype=bool)
    order = rng.permutation(n)
    for i in range(1, n):
        a, b = order[i], order[rng.integers(i)]
        adj[a, b] = adj[b, a] = True
    extra = np.triu(rng.random((n, n)) < p_extra, 1)
    adj |= extra | extra.T
    return adj


def random_reversible_chain(n: int, rng, pi=None, p_extra: float = 0.4,
                            holding: float | None = None) -> ExactKernel:
    """Irreducible chain reversible w.r.t. ``pi`` (random if not given).

    Symmetric flows on a random connected graph are scaled so that no row
    leaves more than a random fraction in ``[0.5, 1]`` of its mass, and the
    remainder goes on the diagonal.
    """
    pi = random_density(n, rng) if pi is None else np.asarray(pi, dtype=float)
    if n == 1:
        k = ExactKernel(np.ones((1, 1)), pi)
        return k if holding is None else add_holding(k, holding)
    adj = _random_graph(n, rng, p_extra)
    W = np.triu(rng.random((n, n)) * adj, 1)
    W = W + W.T
    P = W / pi[:, None]
    P *= rng.uniform(0.5, 1.0) / P.sum(axis=1).max()
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    k = ExactKernel(P, pi)
    return k if holding is None else add_holding(k, holding)


def random_nonneg_definite_chain(n: int, rng, pi=None, p_extra: float = 0.4) -> ExactKernel:
    """Reversible chain with holding 1/2, hence nonnegative definite."""
    return random_reversible_chain(n, rng, pi=pi, p_extra=p_extra, holding=0.5)


def random_partition(n: int, J: int, rng) -> Partition:
    """Uniformly shuffled labels with every one of the ``J`` blocks nonempty."""
    labels = np.concatenate([np.arange(J), rng.integers(J, size=n - J)])
    return Partition(rng.permutation(labels), J)


def thinned_chain(k: ExactKernel, rng) -> ExactKernel:
    """Scale each off-diagonal flow by a symmetric factor in ``[0, 1]``.

    The result keeps ``k``'s stationary density and has every off-diagonal
    transition probability at most that of ``k``.
    """
    P = k.dense()
    n = P.shape[0]
    F = np.triu(rng.random((n, n)), 1)
    F = F + F.T
    Q = P * F
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, 1.0 - Q.sum(axis=1))
    return ExactKernel(Q, k.stationary)


def random_comparison_instance(n: int, rng) -> tuple[ExactKernel, ExactKernel, PathSet]:
    """Two reversible chains sharing a density, with Q-edges routed along P."""
    pi = random_density(n, rng)
    P = random_reversible_chain(n, rng, pi=pi, p_extra=0.2)
    Q = random_reversible_chain(n, rng, pi=pi, p_extra=0.6)
    return P, Q, shortest_paths(P, Q)
