"""Momentum-method trajectory analysis toolkit.

Implements the general two-parameter stochastic momentum iteration
(heavy ball, Nesterov extrapolation, plain SGD as special cases),
time-window trajectory diagnostics built on accumulated step size, and
closed-form almost-sure convergence-rate predictors with an empirical
slope-fitting harness.
"""

from .schedules import (StepSchedule, ScheduleExhaustedError, InvalidRangeError,
                        ScheduleValidity, step_size, partial_sum_delta,
                        validate_schedule)
from .noise import NoiseModel, NoiseStream, DimensionMismatchError, sample_noise
from .problems import (Problem, UnknownProblemError, OutOfRegionError,
                       make_problem, problem_names, problem_eval,
                       fd_gradient_check, loja_residual)
from .optimizer import (MomentumParams, IterateState, StepRecord, DivergenceError,
                        sgdm_step, auxiliary_z, merit_zeta, merit_value,
                        merit_gradient)
from .trajectory import (RecordingPolicy, Trajectory, RunBatch, WindowTrace,
                         InsufficientRecordingError)
from .runner import run_batch, run_trajectory
from .windows import (WindowPartition, WindowCapError, default_window,
                      bounds_window_cap, build_partition, verify_window_lengths,
                      applicability_index, aggregate_errors, iterate_spread,
                      check_iterate_bounds, check_descent, cauchy_profile,
                      summability_profile, tail_error_sums)
from .rates import (RatePrediction, EmpiricalRate, OptimalGamma, LogRateDecision,
                    ChungCheck, rate_psi_phi, rate_Phi_Psi, transition_theta,
                    tadic_Phi, optimal_gamma, log_rate_case, estimate_exponent,
                    chung_bound_check)
from .config import ExperimentConfig, ConfigError, parse_config
from .harness import RunSummary, run_experiment, emit_outputs, emit_rate_curves

__version__ = "0.1.0"
