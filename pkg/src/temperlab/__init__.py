"""Exact spectral-gap analysis and simulation of parallel and simulated tempering."""

from .errors import (
    BoundViolationError,
    ConfigError,
    DomainError,
    KernelValidationError,
    ShapeError,
    SizeCapError,
    TemperlabError,
)
from .kernel import (
    ExactKernel,
    Partition,
    add_holding,
    compose,
    metropolis_hastings,
    project,
    restrict,
    spectral_gap,
)
from .tempering import (
    LevelDensities,
    TemperatureLadder,
    geometric_ladder,
    linear_ladder,
    simulated_tempering_chain,
    swapping_chain,
    temper,
    union_ladder,
)
from .bounds import BoundReport, full_bound_report
