"""Concrete targets: mean-field Ising and truncated normal mixtures."""

from .ising import (
    IsingModel,
    ising_components,
    ising_density,
    ising_levels,
    ising_lumped_density,
    ising_mh_kernel,
    lumping_consistency_check,
    magnetizations,
    mode_partition,
    multiplicities,
    single_site_proposal,
)
from .mixture import (
    Grid1D,
    NormalMixtureModel,
    ball_proposal_1d,
    boundary_mass,
    default_grid,
    delta_weighted_bound,
    gamma_weighted_bound,
    grid_mode_partition,
    mc_block_overlap,
    mc_overlap_integral,
    minimal_c,
    mixture_grid_components,
    mixture_grid_levels,
    mixture_level_mass,
    mixture_tempered_density_1d,
    geometric_overlap_floor,
)
