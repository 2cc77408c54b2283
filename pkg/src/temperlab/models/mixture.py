"""Two-component normal mixtures with the tails truncated at the mode boundary.

The truncated target puts ``a N(z; -b 1, I)`` on ``A_1 = {sum z < 0}`` and
``(1 - a) N(z; b 1, I)`` on ``A_2 = {sum z >= 0}``. Tempering it by ``beta``
keeps the same shape with covariance ``I / beta`` and block weights
proportional to ``a^beta`` and ``(1 - a)^beta``, so block masses and
normalizers have closed forms in any dimension.

Three levels of exactness are offered: closed-form block masses (any
dimension), an exact 1-D grid discretization, and Monte Carlo integrals
with standard errors (any dimension).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import log_ndtr, ndtr

from ..errors import DomainError
from ..kernel import ExactKernel, Partition, metropolis_hastings
from ..tempering import LevelDensities, TemperatureLadder


def normal_cdf(x):
    return ndtr(x)


@dataclass(frozen=True)
class NormalMixtureModel:
    """Mixture in ``dim`` dimensions; ``a`` is the weight of the negative mode."""

    dim: int
    b: float
    a: float = 0.5
    truncated: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dimension must be at least 1")
        if not self.b > 0:
            raise DomainError("mode offset b must be positive")
        if not 0.0 < self.a < 1.0:
            raise DomainError("weight a must lie in (0, 1)")
        if not self.truncated:
            raise DomainError("only the truncated mixture is computable here")

    def block_weights(self, beta: float) -> np.ndarray:
        return np.array([self.a ** beta, (1.0 - self.a) ** beta])


def mixture_level_mass(model: NormalMixtureModel, beta: float) -> tuple[float, float]:
    """Block masses ``(pi_beta[A_1], pi_beta[A_2])`` of the tempered mixture."""
    if not beta > 0:
        raise DomainError("beta must be positive")
    w = model.block_weights(beta)
    m1 = w[0] / w.sum()
    return float(m1), float(1.0 - m1)


def log_density(model: NormalMixtureModel, z, beta: float) -> np.ndarray:
    """Normalized log-density of the tempered truncated mixture at points ``z``.

    ``z`` has shape ``(..., dim)``.
    """
    z = np.asarray(z, dtype=float)
    d = model.dim
    w = model.block_weights(beta)
    log_w = np.log(w / w.sum())
    on_a2 = z.sum(axis=-1) >= 0
    centre = np.where(on_a2, model.b, -model.b)[..., None]
    sq = np.sum((z - centre) ** 2, axis=-1)
    log_gauss = 0.5 * d * np.log(beta / (2 * np.pi)) - 0.5 * beta * sq
    log_half = log_ndtr(model.b * np.sqrt(d * beta))
    return np.where(on_a2, log_w[1], log_w[0]) + log_gauss - log_half


@dataclass(frozen=True)
class Grid1D:
    """``cells`` equal cells covering ``[-half_width, half_width]``.

    Grid points are the cell midpoints. An even cell count puts zero on a
    cell boundary, so every cell lies entirely inside one mode block.
    """

    half_width: float
    cells: int

    def __post_init__(self):
        if not self.half_width > 0 or self.cells < 2:
            raise DomainError("grid needs positive width and at least two cells")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.cells

    @property
    def edges(self) -> np.ndarray:
        if self.cells % 2:
            return np.linspace(-self.half_width, self.half_width, self.cells + 1)
        h = self.cells // 2
        half = self.half_width * (np.arange(h + 1) / h)
        # mirrored so the grid is exactly symmetric about zero
        return np.concatenate([-half[:0:-1], half])

    @property
    def points(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


def default_grid(b: float) -> Grid1D:
    return Grid1D(half_width=b + 10.0, cells=2000)


def _half_line_mass(lo, hi, centre, beta, side):
    """Integral of N(.; centre, 1/beta) over [lo, hi] intersected with one side of 0."""
    if side < 0:
        lo, hi = lo, np.minimum(hi, 0.0)
    else:
        lo, hi = np.maximum(lo, 0.0), hi
    r = np.sqrt(beta)
    u, v = r * (lo - centre), r * (hi - centre)
    # upper-tail cells are differenced through the survival function so far
    # cells keep their (tiny) mass instead of cancelling to zero
    mass = np.where(u > 0, ndtr(-u) - ndtr(-v), ndtr(v) - ndtr(u))
    return np.where(hi > lo, mass, 0.0)


def mixture_tempered_density_1d(model: NormalMixtureModel, beta: float,
                                grid: Grid1D | None = None,
                                max_deficit: float | None = 1e-6) -> np.ndarray:
    """Exact cell masses of the tempered 1-D mixture on ``grid``, renormalized.

    Raises :class:`DomainError` when more than ``max_deficit`` of the mass
    falls outside the grid (pass ``None`` to skip this check on deliberately
    coarse grids).
    """
    if model.dim != 1:
        raise DomainError("grid discretization is only available in one dimension")
    if not beta > 0:
        raise DomainError("beta must be positive")
    grid = grid or default_grid(model.b)
    w = model.block_weights(beta)
    e = grid.edges
    lo, hi = e[:-1], e[1:]
    # the negative side is evaluated as the mirror image of the positive one
    raw = (w[0] * _half_line_mass(-hi, -lo, model.b, beta, +1)
           + w[1] * _half_line_mass(lo, hi, model.b, beta, +1))
    total = w.sum() * ndtr(model.b * np.sqrt(beta))
    deficit = 1.0 - raw.sum() / total
    if max_deficit is not None and deficit > max_deficit:
        raise DomainError(
            f"grid misses {deficit:.3g} of the mass at beta={beta}; widen it "
            f"(half-width >= b + 8/sqrt(beta) = {model.b + 8 / np.sqrt(beta):.3g})"
        )
    return raw / raw.sum()


def grid_mode_partition(grid: Grid1D) -> Partition:
    return Partition((grid.points >= 0).astype(np.int64), 2)


def mixture_grid_levels(model: NormalMixtureModel, ladder: TemperatureLadder,
                        grid: Grid1D | None = None,
                        max_deficit: float | None = 1e-6) -> LevelDensities:
    rows = [mixture_tempered_density_1d(model, beta, grid, max_deficit)
            for beta in ladder.betas]
    return LevelDensities(np.array(rows), ladder.betas)


def ball_proposal_1d(radius: float, grid: Grid1D) -> np.ndarray:
    """Uniform proposal over grid points within ``radius`` of the current point.

    Each neighbour gets probability ``1/K`` with ``K`` the interior neighbour
    count, so the matrix is symmetric; proposals that would leave the grid
    stay on the diagonal (rejected).
    """
    h = grid.spacing
    if h > radius / 4 * (1 + 1e-12):
        raise DomainError(f"grid spacing {h:.3g} exceeds radius/4 = {radius / 4:.3g}")
    reach = int(np.floor(radius / h + 1e-9))
    K = 2 * reach
    n = grid.cells
    i = np.arange(n)
    P = np.zeros((n, n))
    for off in range(1, reach + 1):
        P[i[:-off], i[:-off] + off] = 1.0 / K
        P[i[off:], i[off:] - off] = 1.0 / K
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def mixture_grid_components(levels: LevelDensities, grid: Grid1D,
                            radius: float = 1.0) -> list[ExactKernel]:
    S = ball_proposal_1d(radius, grid)
    return [metropolis_hastings(S, levels[k]) for k in range(levels.N + 1)]


def boundary_mass(b: float, M: int) -> float:
    """Mass of the width-1/M boundary band of a mode block at beta = 1/M."""
    if not b > 0 or M < 1:
        raise DomainError("need b > 0 and M >= 1")
    return float((ndtr(b) - ndtr(b * (1.0 - 1.0 / M))) / ndtr(b))


def geometric_overlap_floor(M: int) -> float:
    """Floor ``1/(2 sqrt(M))`` on adjacent-level overlap under the geometric ladder."""
    if M < 1:
        raise DomainError("M must be at least 1")
    return 1.0 / (2.0 * np.sqrt(M))


def gamma_weighted_bound(model: NormalMixtureModel, ladder: TemperatureLadder) -> float:
    """Exact mass-decay factor gamma from closed-form block masses (``a >= 1/2``)."""
    if model.a < 0.5:
        raise DomainError("the weighted analysis assumes a >= 1/2")
    masses = np.array([mixture_level_mass(model, beta) for beta in ladder.betas])
    ratios = np.minimum(1.0, masses[:-1] / masses[1:])
    return float(np.min(np.prod(ratios, axis=0)))


def minimal_c(model: NormalMixtureModel, M: int) -> float:
    """Smallest ``c`` with ``a/(1-a) <= c^M``."""
    return float(max((model.a / (1.0 - model.a)) ** (1.0 / M), 1.0))


def delta_weighted_bound(c: float, M: int) -> float:
    """Floor ``1/(2 c sqrt(M))`` on the overlap for the union ladder."""
    if not c >= 1 or M < 1:
        raise DomainError("need c >= 1 and M >= 1")
    return 1.0 / (2.0 * c * np.sqrt(M))


def sample_block(model: NormalMixtureModel, beta: float, block: int, n: int, rng) -> np.ndarray:
    """Exact draws from the tempered mixture restricted to ``A_1`` (0) or ``A_2`` (1).

    The coordinate along ``1/sqrt(dim)`` is a truncated normal; the
    orthogonal complement is an untruncated isotropic normal.
    """
    d = model.dim
    sd = 1.0 / np.sqrt(beta)
    e = np.full(d, 1.0 / np.sqrt(d))
    mu_u = model.b * np.sqrt(d)
    # A_2 side: u >= 0 with u ~ N(mu_u, sd^2)
    u = stats.truncnorm.rvs((0.0 - mu_u) / sd, np.inf, loc=mu_u, scale=sd,
                            size=n, random_state=rng)
    g = rng.standard_normal((n, d)) * sd
    g -= np.outer(g @ e, e)
    z = model.b + g + np.outer(u - mu_u, e)
    return z if block == 1 else -z


def mc_block_overlap(model: NormalMixtureModel, beta_k: float, beta_l: float,
                     block: int, n: int, rng) -> tuple[float, float]:
    """Monte Carlo ``int_{A_j} min(pi_k, pi_l) / pi_k[A_j]`` with its standard error.

    Samples from ``pi_l`` restricted to ``A_j`` and averages
    ``min(1, pi_k / pi_l)``, scaled by ``pi_l[A_j] / pi_k[A_j]``.
    """
    z = sample_block(model, beta_l, block, n, rng)
    ratio = np.exp(log_density(model, z, beta_k) - log_density(model, z, beta_l))
    vals = np.minimum(1.0, ratio)
    scale = mixture_level_mass(model, beta_l)[block] / mixture_level_mass(model, beta_k)[block]
    est = scale * vals.mean()
    se = scale * vals.std(ddof=1) / np.sqrt(n)
    return float(est), float(se)


def mc_overlap_integral(model: NormalMixtureModel, beta_k: float, beta_l: float,
                        n: int, rng) -> tuple[float, float]:
    """Monte Carlo ``int min(pi_k, pi_l)`` over the whole space, with standard error.

    Each block is sampled separately (``n`` draws per block) from ``pi_l``
    restricted to it; block estimates are weighted by ``pi_l[A_j]``.
    """
    est, var = 0.0, 0.0
    masses_l = mixture_level_mass(model, beta_l)
    for block in (0, 1):
        z = sample_block(model, beta_l, block, n, rng)
        ratio = np.exp(log_density(model, z, beta_k) - log_density(model, z, beta_l))
        vals = np.minimum(1.0, ratio)
        est += masses_l[block] * vals.mean()
        var += masses_l[block] ** 2 * vals.var(ddof=1) / n
    return float(est), float(np.sqrt(var))
