"""Brute-force reference constructions used to cross-check the package.

Everything here is written from the definitions with explicit loops over
states and a general (non-symmetric) eigensolver, sharing no code with the
package beyond plain numpy.
"""

import itertools
from math import comb, exp

import numpy as np


def gap_general(P):
    """1 - second largest real eigenvalue, from the unsymmetrized matrix."""
    P = np.asarray(P, dtype=float)
    if P.shape[0] == 1:
        return 1.0
    ev = np.sort(np.linalg.eigvals(P).real)[::-1]
    return 1.0 - ev[1]


def mh_loops(S, pi):
    n = len(pi)
    P = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            if x == y or S[x][y] == 0:
                continue
            num, den = pi[y] * S[y][x], pi[x] * S[x][y]
            P[x][y] = S[x][y] * (1.0 if den == 0 else min(1.0, num / den))
        P[x][x] = 1.0 - P[x].sum()
    return P


def lumped_ising(M, alpha, beta):
    """Magnetization law of pi^beta, pi(z) ~ exp(alpha s^2 / 2M)."""
    w = [comb(M, u) * exp(beta * alpha * (2 * u - M) ** 2 / (2 * M)) for u in range(M + 1)]
    t = sum(w)
    return [v / t for v in w]


def lumped_flip_proposal(M):
    S = np.zeros((M + 1, M + 1))
    for u in range(M + 1):
        if u < M:
            S[u][u + 1] = (M - u) / M
        if u > 0:
            S[u][u - 1] = u / M
    return S


def swapping_loops(levels, comps):
    """P_sc = Q T Q with T = 1/2 I + 1/(2(N+1)) sum_k T_k and Q the swap move."""
    L, n = len(levels), len(levels[0])
    states = list(itertools.product(range(n), repeat=L))
    index = {s: i for i, s in enumerate(states)}
    size = len(states)
    T = np.zeros((size, size))
    Q = np.zeros((size, size))
    for s in states:
        i = index[s]
        T[i][i] += 0.5
        for k in range(L):
            for y in range(n):
                t = list(s)
                t[k] = y
                T[i][index[tuple(t)]] += 0.5 / L * comps[k][s[k]][y]
        Q[i][i] += 0.5
        if L == 1:
            Q[i][i] += 0.5
            continue
        for k in range(L - 1):
            a, b = s[k], s[k + 1]
            num = levels[k][b] * levels[k + 1][a]
            den = levels[k][a] * levels[k + 1][b]
            rho = 1.0 if den == 0 and num > 0 else (0.0 if den == 0 else min(1.0, num / den))
            t = list(s)
            t[k], t[k + 1] = b, a
            j = index[tuple(t)]
            Q[i][j] += 0.5 / (L - 1) * rho
            Q[i][i] += 0.5 / (L - 1) * (1 - rho)
    return Q @ T @ Q


def st_loops(levels, comps):
    """P_st on pairs (k, z), flat index k * n + z."""
    L, n = len(levels), len(levels[0])
    size = L * n
    T = np.zeros((size, size))
    Q = np.zeros((size, size))
    for k in range(L):
        for z in range(n):
            i = k * n + z
            T[i][i] += 0.5
            for y in range(n):
                T[i][k * n + y] += 0.5 * comps[k][z][y]
            Q[i][i] += 0.5
            col = sum(levels[l][z] for l in range(L))
            for l in range(L):
                Q[i][l * n + z] += 0.5 * levels[l][z] / col
    return Q @ T @ Q


def ising_tempered_instance(M, alpha, N):
    """Linear ladder beta_k = k/N, lumped levels and MH components."""
    betas = [k / N for k in range(N + 1)] if N else [1.0]
    levels = [lumped_ising(M, alpha, b) for b in betas]
    S = lumped_flip_proposal(M)
    comps = [mh_loops(S, lv) for lv in levels]
    return levels, comps
