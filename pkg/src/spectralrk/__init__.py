"""Spectral-Galerkin discretization of semilinear evolution equations
with A-stable implicit Runge-Kutta time stepping, plus a harness that
measures convergence orders against the predicted exponents."""

from .tableau import (ButcherTableau, AStabilityGridSpec, StabilityReport,
                      gauss_legendre, stability_function, verify_a_stability,
                      verify_order_conditions, save_tableau, load_tableau)
from .spectral import (ModeGrid, SpectralState, diagonal_grid, block_grid,
                       zero_state, scale_norm, inner, project, remainder,
                       apply_A, apply_semigroup, save_state, load_state)
from .equations import (Problem, wave_problem, nls_problem, cubic_nls,
                        evaluate_B_m, make_initial_data)
from .integrator import (ResolventCache, StageVector, RunDiagnostics,
                         build_resolvent_cache, rk_step, integrate,
                         reference_solution, picard_oracle, dense_stage_step,
                         flow_derivative, clear_reference_cache)
from .analysis import (OrderFit, StudyReport, fit_order, temporal_order_study,
                       spatial_order_study, coupling_study,
                       derivative_projection_study, invariant_monitor)
from . import errors

__version__ = "0.1.0"
