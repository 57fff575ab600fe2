"""Seasonal multitype contact process: exact lattice simulation and mean-field analysis."""
from .lattice import (
    Configuration,
    LatticeSpec,
    SeasonalParams,
    box_count,
    neighbor_fraction,
    neighborhood_size,
    rates_at,
    season_of,
)
from .meanfield import (
    EquilibriumCurve,
    LogisticFlow,
    equilibrium_curve,
    equilibrium_curve_eval,
    ode_solve,
    rho,
    rho_integral,
    season_fixed_point,
    single_species_survives,
)
from .invasibility import corollary3_check, invasion_index, theorem1_check, worked_example_params
from .simulator import SimState, Trajectory, init_configuration, make_rng, quasi_coexistence, run

__version__ = "0.1.0"
