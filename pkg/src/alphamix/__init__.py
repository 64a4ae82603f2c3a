"""Monotonic alpha-divergence minimisation for mixture models."""
from .components import (StudentTParams, dof_from_moment, g_tau, kappa_fn, kappa_inv, mg_update,
                         rgd_update_means, student_update)
from .divergence import (QuadratureGrid, build_grid, f_alpha, psi_alpha_exact, psi_alpha_from_logs,
                         vr_bound_exact, vr_bound_mc)
from .errors import ConfigError, ImageError, NormalizationError, NumericalDegeneracyError
from .expfam import (ExpFamilySpec, GaussianParams, MomentEstimate, gaussian_diag_spec,
                     gaussian_fixed_cov_spec, gaussian_full_spec, gaussian_update,
                     grad_g_canonical, gradient_step_canonical, gradient_step_noncanonical,
                     solve_argmax_update)
from .harness import ExperimentConfig, log_mse, replicate, run_trial
from .kernels import BACKEND
from .mixture import (MixtureState, ScheduleConfig, eval_log_mixture, log_responsibility,
                      power_descent_step, state_from_json, state_to_json, update_weights)
from .sampling import SampleBatch, WeightedStats, draw_samples, estimate_stats, exact_stats, rng_stream
from .targets import Target, builtin_target, load_grid_target

__version__ = "0.1.0"
