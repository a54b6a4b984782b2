"""Additively coupled sum-constrained games: models, solvers and certificates."""

from .best_response import (ContractionReport, DynamicsConfig, Trajectory, best_response,
                            contraction_check, run_dynamics, water_fill_theta)
from .conditions import (ConditionReport, Status, build_s_bar_max, build_s_max,
                         build_t_bar_max, build_t_max, check_conditions,
                         curvature_and_lipschitz, spectral_radius)
from .gamefile import GameFileError, load_game, save_game
from .model import (Affine, DomainError, GameSpec, GeneralCoupling, GenericKernel,
                    GenericPenalty, InfeasibleError, KernelOfCouplingPenalty,
                    NoCertificateError, NumericError, PerDimensionLinear, SumConstrainedSet,
                    ThetaKernel, UnsupportedError, ZeroPenalty, own_gradient, utilities,
                    utility, validate)
from .pricing import (gradient_play_step, jacobi_step, kkt_residuals, prices, run_pricing,
                      safe_stepsize)
from .projection import budget_multiplier, project

__version__ = "0.1.0"
