"""Simulation of slowly driven quantum systems and rigorous bounds on their adiabatic error."""

from .bounds import (
    BoundReport,
    beta_derivative_bounds,
    cancellation_times,
    gamma_factor,
    jrs_bound,
    one_jump_remainder_bounds,
    remainder_R,
    tail_bound,
    error_bounds,
    timescales,
)
from .errors import AdiabaticError, InputError, NumericalError
from .linalg import (
    DerivativeNorms,
    Spectrum,
    derivative_norms,
    gauge_transport,
    hermitian_eigs,
    min_gap,
    transported_frames,
)
from .models import (
    HamiltonianModel,
    linear_interpolation_model,
    load_model,
    marzlin_sanders_model,
    search_model,
)
from .pathsum import (
    JumpPath,
    beta,
    first_order_term,
    jump_contribution,
    one_jump_phasors,
    path_product_check,
)
from .propagator import (
    EvolutionResult,
    Schedule,
    adiabatic_error,
    evolve_adaptive,
    evolve_product,
    evolve_rk,
    phi_schedule,
    uniform_schedule,
)
from .sweep import SweepConfig, SweepRecord, emit, parse_config, run_sweep

__version__ = "0.1.0"
