"""Monte Carlo simulation of swapping and simulated tempering chains.

Replicas are simulated in lockstep: a swapping-chain state is an array of
shape ``(R, N+1, *site)`` and a simulated-tempering state is a pair of
levels ``(R,)`` and points ``(R, *site)``, where ``site`` is ``()`` for
finite models, ``(M,)`` for spin vectors and ``(dim,)`` for real vectors.
Each step applies the swap (or level) move, the update move and the swap
move again, each holding with probability 1/2, exactly as the matrices
built in :mod:`temperlab.tempering`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import DomainError, ShapeError
from .kernel import ExactKernel, Partition
from .models.ising import IsingModel, log_partition
from .models.mixture import NormalMixtureModel, log_density
from .tempering import LevelDensities, TemperatureLadder

DEFAULT_BURN_IN = 0.1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator for ``(seed, stream)``; distinct streams are independent."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


# -- level models ------------------------------------------------------------


class DiscreteLevels:
    """Tempered levels on a finite space with a fixed proposal matrix.

    Acceptance uses the Hastings ratio, so the update move at level ``k`` is
    the Metropolis-Hastings kernel of ``proposal`` for ``levels[k]``.
    """

    site_shape: tuple = ()

    def __init__(self, levels: LevelDensities, proposal, block_of):
        S = np.asarray(proposal, dtype=float)
        if S.shape != (levels.n, levels.n):
            raise ShapeError("proposal and levels disagree on size")
        self.levels = levels
        self.N = levels.N
        with np.errstate(divide="ignore"):
            self._logp = np.log(levels.levels)
            self._logS = np.log(S)
        self._cdf = np.cumsum(S, axis=1)
        self._cdf[:, -1] = 1.0
        self.block_of = np.asarray(block_of, dtype=np.int64)

    def log_density(self, x, k):
        return self._logp[k, x]

    def propose(self, x, rng):
        u = rng.random(x.shape)
        y = (self._cdf[x] < u[:, None]).sum(axis=1)
        return y, self._logS[y, x] - self._logS[x, y]

    def block(self, x):
        return self.block_of[x]

    def sample_level(self, k: int, size: int, rng):
        return rng.choice(self.levels.n, size=size, p=self.levels[k])


class SpinIsingLevels:
    """Mean-field Ising on full spin vectors with single-site flips."""

    def __init__(self, model: IsingModel, ladder: TemperatureLadder):
        self.model = model
        self.betas = np.asarray(ladder.betas)
        self.N = ladder.N
        self.site_shape = (model.M,)
        self._log_z = np.array([log_partition(model, b) for b in self.betas])

    def log_density(self, x, k):
        s = x.sum(axis=-1).astype(float)
        return self.betas[k] * self.model.alpha * s ** 2 / (2.0 * self.model.M) - self._log_z[k]

    def propose(self, x, rng):
        y = x.copy()
        i = rng.integers(self.model.M, size=x.shape[0])
        y[np.arange(x.shape[0]), i] *= -1
        return y, np.zeros(x.shape[0])

    def block(self, x):
        return (x.sum(axis=-1) >= 0).astype(np.int64)


class MixtureLevels:
    """Tempered truncated normal mixture with a uniform-ball random walk."""

    def __init__(self, model: NormalMixtureModel, ladder: TemperatureLadder,
                 radius: float = 1.0):
        if not radius > 0:
            raise DomainError("ball radius must be positive")
        if ladder.betas[0] <= 0:
            raise DomainError("the mixture needs positive inverse temperatures")
        self.model = model
        self.betas = np.asarray(ladder.betas)
        self.N = ladder.N
        self.radius = radius
        self.site_shape = (model.dim,)

    def log_density(self, x, k):
        k = np.asarray(k)
        out = np.empty(x.shape[0])
        for level in np.unique(k):
            sel = k == level
            out[sel] = log_density(self.model, x[sel], self.betas[level])
        return out

    def propose(self, x, rng):
        R, d = x.shape
        g = rng.standard_normal((R, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(R) ** (1.0 / d)
        return x + g * r[:, None], np.zeros(R)

    def block(self, x):
        return (x.sum(axis=-1) >= 0).astype(np.int64)


# -- single moves ------------------------------------------------------------


def _accept(log_ratio, rng):
    log_ratio = np.nan_to_num(log_ratio, nan=-np.inf, posinf=np.inf)
    return np.log(rng.random(log_ratio.shape)) < log_ratio


def swap_move(x, model, rng):
    """Q: hold w.p. 1/2, else propose swapping a uniform adjacent pair.

    Returns the new state, the proposed pair (``-1`` when holding) and the
    acceptance flags.
    """
    R, N = x.shape[0], model.N
    pair = np.full(R, -1)
    accepted = np.zeros(R, dtype=bool)
    if N == 0:
        return x, pair, accepted
    move = rng.random(R) >= 0.5
    k = rng.integers(N, size=R)
    idx = np.flatnonzero(move)
    k = k[idx]
    a, b = x[idx, k], x[idx, k + 1]
    log_ratio = (model.log_density(b, k) + model.log_density(a, k + 1)
                 - model.log_density(a, k) - model.log_density(b, k + 1))
    ok = _accept(log_ratio, rng)
    x = x.copy()
    x[idx[ok], k[ok]] = b[ok]
    x[idx[ok], k[ok] + 1] = a[ok]
    pair[idx] = k
    accepted[idx] = ok
    return x, pair, accepted


def update_move(x, model, rng):
    """T: hold w.p. 1/2, else one Metropolis-Hastings step at a uniform level."""
    R, N = x.shape[0], model.N
    move = rng.random(R) >= 0.5
    k = rng.integers(N + 1, size=R)
    idx = np.flatnonzero(move)
    k = k[idx]
    return _mh_at(x, idx, k, model, rng)


def _mh_at(x, idx, k, model, rng):
    cur = x[idx, k]
    prop, log_q = model.propose(cur, rng)
    log_ratio = model.log_density(prop, k) - model.log_density(cur, k) + log_q
    ok = _accept(log_ratio, rng)
    x = x.copy()
    x[idx[ok], k[ok]] = prop[ok]
    return x


def step_swapping(x, model, rng):
    """One step of ``P_sc = Q T Q`` for every replica.

    Returns the new state and the ``(2, R)`` proposed pairs and acceptance
    flags of the two swap moves.
    """
    x, p1, a1 = swap_move(x, model, rng)
    x = update_move(x, model, rng)
    x, p2, a2 = swap_move(x, model, rng)
    return x, np.stack([p1, p2]), np.stack([a1, a2])


def _level_log_weights(z, model):
    return np.stack([model.log_density(z, np.full(z.shape[0], k))
                     for k in range(model.N + 1)], axis=1)


def level_move(level, z, model, rng):
    """Q': hold w.p. 1/2, else redraw the level from its conditional given ``z``."""
    if model.N == 0:
        return level
    R = level.shape[0]
    move = rng.random(R) >= 0.5
    logw = _level_log_weights(z, model)
    cond = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    u = rng.random(R)
    new = np.minimum((np.cumsum(cond, axis=1) < u[:, None]).sum(axis=1), model.N)
    return np.where(move, new, level)


def step_simulated_tempering(level, z, model, rng):
    """One step of ``P_st = Q' T' Q'`` for every replica."""
    level = level_move(level, z, model, rng)
    move = rng.random(level.shape[0]) >= 0.5
    idx = np.flatnonzero(move)
    z = _mh_at(z[:, None], idx, np.zeros(idx.size, dtype=np.int64),
               _AtLevels(model, level[idx]), rng)[:, 0]
    level = level_move(level, z, model, rng)
    return level, z


class _AtLevels:
    """View of a level model whose level index is taken from a fixed array."""

    def __init__(self, model, levels):
        self.model, self.levels = model, levels

    def log_density(self, x, k):
        return self.model.log_density(x, self.levels)

    def propose(self, x, rng):
        return self.model.propose(x, rng)


# -- trajectories --------------------------------------------------------------


@dataclass
class Trajectory:
    """Per-step records of a run.

    ``blocks`` is ``(steps, R, N+1)`` for the swapping chain (block of each
    level's component) and ``(steps, R)`` for simulated tempering, where
    ``levels`` holds the level of every replica. ``swap_proposed`` and
    ``swap_accepted`` count, per step and adjacent pair, swap proposals and
    acceptances summed over replicas and over both swap moves.
    """

    kind: str
    N: int
    blocks: np.ndarray
    levels: np.ndarray | None = None
    swap_proposed: np.ndarray | None = None
    swap_accepted: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.blocks.shape[0]

    @property
    def replicas(self) -> int:
        return self.blocks.shape[1]


def run_swapping(model, x0, steps: int, rng, seed: int | None = None) -> Trajectory:
    x = np.asarray(x0)
    R, N = x.shape[0], model.N
    if x.shape[1] != N + 1:
        raise ShapeError(f"state needs {N + 1} levels")
    blocks = np.empty((steps, R, N + 1), dtype=np.int8)
    proposed = np.zeros((steps, max(N, 0)), dtype=np.int64)
    accepted = np.zeros((steps, max(N, 0)), dtype=np.int64)
    for t in range(steps):
        x, pairs, acc = step_swapping(x, model, rng)
        for p, a in zip(pairs, acc):
            sel = p >= 0
            proposed[t] += np.bincount(p[sel], minlength=N)
            accepted[t] += np.bincount(p[sel & a], minlength=N)
        blocks[t] = model.block(x.reshape(R * (N + 1), *model.site_shape)).reshape(R, N + 1)
    return Trajectory("swapping", N, blocks, swap_proposed=proposed,
                      swap_accepted=accepted, seed=seed)


def run_simulated_tempering(model, level0, z0, steps: int, rng,
                            seed: int | None = None) -> Trajectory:
    level, z = np.asarray(level0), np.asarray(z0)
    R = level.shape[0]
    blocks = np.empty((steps, R), dtype=np.int8)
    levels = np.empty((steps, R), dtype=np.int16)
    for t in range(steps):
        level, z = step_simulated_tempering(level, z, model, rng)
        blocks[t] = model.block(z)
        levels[t] = level
    return Trajectory("simulated_tempering", model.N, blocks, levels=levels, seed=seed)


# -- diagnostics ---------------------------------------------------------------


def _level_blocks(traj: Trajectory, level: int, replica: int = 0) -> np.ndarray:
    if traj.kind == "swapping":
        return traj.blocks[:, replica, level]
    if traj.kind == "untempered":
        return traj.blocks[:, replica]
    return traj.blocks[:, replica][traj.levels[:, replica] == level]


def mode_crossing_count(traj: Trajectory, level: int, replica: int = 0) -> int:
    """Number of recorded steps at which the block of level ``level`` changes."""
    b = _level_blocks(traj, level, replica)
    return int(np.count_nonzero(np.diff(b)))


def occupancy(traj: Trajectory, level: int, burn_in: float = DEFAULT_BURN_IN,
              n_blocks: int = 2) -> np.ndarray:
    """Empirical block occupancy of ``level`` after discarding a burn-in fraction."""
    start = int(np.floor(burn_in * traj.steps))
    if start >= traj.steps:
        raise DomainError("trajectory is not longer than the burn-in")
    sub = Trajectory(traj.kind, traj.N, traj.blocks[start:],
                     None if traj.levels is None else traj.levels[start:])
    counts = np.zeros(n_blocks)
    for r in range(traj.replicas):
        counts += np.bincount(_level_blocks(sub, level, r), minlength=n_blocks)
    if counts.sum() == 0:
        return np.full(n_blocks, np.nan)
    return counts / counts.sum()


def occupancy_tv(traj: Trajectory, level: int, reference,
                 burn_in: float = DEFAULT_BURN_IN) -> float:
    """TV distance between empirical block occupancy of ``level`` and ``reference``."""
    ref = np.asarray(reference, dtype=float)
    occ = occupancy(traj, level, burn_in, n_blocks=ref.size)
    return float(0.5 * np.abs(occ - ref).sum())


def round_trip_rate(traj: Trajectory) -> tuple[float, bool]:
    """Completed ``0 -> N -> 0`` level excursions per step and replica.

    Returns ``(rate, defined)``; with a single level no excursion exists and
    the rate is reported as 0 with ``defined`` false.
    """
    if traj.kind != "simulated_tempering":
        raise DomainError("round trips are defined for simulated tempering runs")
    if traj.N == 0:
        return 0.0, False
    if traj.steps == 0:
        return 0.0, True
    trips = 0
    for r in range(traj.replicas):
        # an excursion starts at level 0, must touch level N, and ends back at 0
        target, been_up = 0, False
        for lev in traj.levels[:, r]:
            if target == 0 and lev == 0:
                trips += been_up
                target = traj.N
            elif target == traj.N and lev == traj.N:
                been_up, target = True, 0
    return trips / (traj.steps * traj.replicas), True


def swap_acceptance_rates(traj: Trajectory) -> np.ndarray:
    """Accepted over proposed swaps per adjacent pair (NaN when never proposed)."""
    if traj.swap_proposed is None or traj.N == 0:
        return np.zeros(0)
    prop = traj.swap_proposed.sum(axis=0)
    acc = traj.swap_accepted.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(prop > 0, acc / np.maximum(prop, 1), np.nan)


def run_untempered(model, x0, steps: int, rng, level: int | None = None,
                   seed: int | None = None) -> Trajectory:
    """Plain Metropolis-Hastings at one level (default: the target level)."""
    level = model.N if level is None else level
    x = np.asarray(x0)[:, None]
    R = x.shape[0]
    k = np.full(R, level)
    blocks = np.empty((steps, R), dtype=np.int8)
    for t in range(steps):
        x = _mh_at(x, np.arange(R), np.zeros(R, dtype=np.int64), _AtLevels(model, k), rng)
        blocks[t] = model.block(x[:, 0])
    return Trajectory("untempered", 0, blocks, seed=seed)


# -- exactness checks ----------------------------------------------------------


@dataclass
class TransitionCheck:
    counts: np.ndarray
    expected: np.ndarray
    worst_sigma: float
    outside: int

    @property
    def passed(self) -> bool:
        return self.outside == 0


def transition_frequency_check(exact: ExactKernel, start, end, sigmas: float = 4.0) -> TransitionCheck:
    """Compare observed one-step transitions ``start -> end`` with a kernel's rows.

    Given ``n_x`` visits to ``x``, the count of moves to ``y`` is
    Binomial(``n_x``, ``P(x, y)``). A cell is outside its band when the
    count falls beyond the exact binomial quantiles carrying the two-sided
    tail mass of ``sigmas`` normal standard deviations; unlike a normal
    band this stays valid for cells with small expected counts. A move with
    zero probability is always outside. ``worst_sigma`` is the largest
    normal-scale deviation, reported for information.
    """
    P = exact.dense()
    n = P.shape[0]
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (np.asarray(start), np.asarray(end)), 1)
    n_x = np.broadcast_to(counts.sum(axis=1, keepdims=True), P.shape)
    expected = n_x * P
    tail = stats.norm.sf(sigmas)
    lo = stats.binom.ppf(tail, n_x, P)
    hi = stats.binom.isf(tail, n_x, P)
    outside = int(np.count_nonzero((counts < lo) | (counts > hi)))
    sd = np.sqrt(expected * (1.0 - P))
    dev = np.abs(counts - expected)
    z = np.where(sd > 0, dev / np.where(sd > 0, sd, 1.0), np.where(dev > 0, np.inf, 0.0))
    return TransitionCheck(counts, expected, float(z.max()), outside)


def sample_product_stationary(levels: LevelDensities, size: int, rng) -> np.ndarray:
    """Exact draws from ``prod_k pi_k`` as ``(size, N+1)`` integer states."""
    return np.stack([rng.choice(levels.n, size=size, p=levels[k])
                     for k in range(levels.N + 1)], axis=1)


def sample_augmented_stationary(levels: LevelDensities, size: int, rng):
    """Exact draws ``(level, z)`` from ``pi_st(k, z) = pi_k(z) / (N+1)``."""
    flat = rng.choice(levels.n * (levels.N + 1), size=size, p=levels.levels.ravel() / (levels.N + 1))
    return flat // levels.n, flat % levels.n


# -- debugging dump ------------------------------------------------------------


def dump_trajectory(traj: Trajectory, path, replica: int = 0) -> None:
    """Write one replica's records as whitespace-separated columns.

    Columns: ``step``, then ``level`` (simulated tempering only), then one
    ``block_k`` column per level (swapping) or a single ``block`` column.
    """
    if traj.kind == "swapping":
        header = ["step"] + [f"block_{k}" for k in range(traj.N + 1)]
        cols = [traj.blocks[:, replica, k] for k in range(traj.N + 1)]
    elif traj.kind == "simulated_tempering":
        header = ["step", "level", "block"]
        cols = [traj.levels[:, replica], traj.blocks[:, replica]]
    else:
        header = ["step", "block"]
        cols = [traj.blocks[:, replica]]
    table = np.column_stack([np.arange(traj.steps)] + cols)
    np.savetxt(path, table, fmt="%d", header=" ".join(header), comments="")


def mode_partition_of(model) -> Partition | None:
    """Block labels of a finite model, if it has them."""
    if isinstance(model, DiscreteLevels):
        return Partition(model.block_of)
    return None
