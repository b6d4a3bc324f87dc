"""Solver polynomials for quantum linear system solvers, a noisy execution
simulator for them, and a benchmark harness."""

from .chebpoly import (ChebPoly, cheb_eval, compose_square, divide_by_y,
                       grid_supnorm, parity_split, poly_from_values)
from .density import (MaxentInfeasibleError, MomentVector, SpectralDensity,
                      density_samples, maxent_density, moments_of)
from .optim import OptimError, QpProblem, bfgs_minimize, kkt_check, solve_qp
from .polyfactory import (SolverPlan, apply_transform, cap_poly, cheb1_poly,
                          cheb2_poly, cheb3_poly, cup_poly, qsvt_poly)
from .quadrature import QuadRule, gauss_legendre
from .qsim import (CostCounter, NoiseModel, ProblemInstance, WalkState,
                   build_noise, estimate_moments, estimate_quadratic_form,
                   exact_apply, noisy_walk, run_solver_shot)
from .bench import (BenchConfig, BenchRecord, SolverSpec, best_n_view,
                    err_metric, gen_problem, run_single, sweep)

__all__ = [
    "BenchConfig", "BenchRecord", "ChebPoly", "CostCounter",
    "MaxentInfeasibleError", "MomentVector", "NoiseModel", "OptimError",
    "ProblemInstance", "QpProblem", "QuadRule", "SolverPlan", "SolverSpec",
    "SpectralDensity", "WalkState", "apply_transform", "best_n_view",
    "bfgs_minimize", "build_noise", "cap_poly", "cheb1_poly", "cheb2_poly",
    "cheb3_poly", "cheb_eval", "compose_square", "cup_poly",
    "density_samples", "divide_by_y", "err_metric", "estimate_moments",
    "estimate_quadratic_form", "exact_apply", "gauss_legendre",
    "gen_problem", "grid_supnorm", "kkt_check", "maxent_density", "moments_of",
    "noisy_walk", "parity_split", "poly_from_values", "qsvt_poly",
    "run_single", "run_solver_shot", "solve_qp", "sweep",
]

__version__ = "0.1.0"
