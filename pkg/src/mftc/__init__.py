"""Mean-field-type control on particle ensembles: fixed-point solver,
quadratic closed forms and verification audits."""

from .measure_space import (ParticleEnsemble, ShapeError, TimeGrid, inner_product, mean, permute,
                            optimal_matching, wasserstein2)
from .functionals import (CostFunctional, KernelCost, QuadraticCost, QuadraticModel, ZeroCost,
                          bilinear_kernel, eval_F, functional_derivative, gaussian_kernel, grad_F,
                          lipschitz_constant, make_kernel)
from .bvp_solver import (InadmissibleError, NonConvergenceError, SolverConfig, TrajectoryBundle,
                         admissibility_check, gradient_value, particle_values, solve_fixed_point,
                         solve_quadratic, time_derivative_value, value_function)
from .riccati_quadratic import RiccatiBlowUpError, RiccatiTables, solve_riccati, value_closed_form
from .verification import AuditReport, run_suite

__version__ = "0.1.0"

__all__ = [
    "ParticleEnsemble", "ShapeError", "TimeGrid", "inner_product", "mean", "permute", "optimal_matching",
    "wasserstein2", "CostFunctional", "KernelCost", "QuadraticCost", "QuadraticModel", "ZeroCost",
    "bilinear_kernel", "eval_F", "functional_derivative", "gaussian_kernel", "grad_F", "lipschitz_constant",
    "make_kernel", "InadmissibleError", "NonConvergenceError", "SolverConfig", "TrajectoryBundle",
    "admissibility_check", "gradient_value", "particle_values", "solve_fixed_point", "solve_quadratic",
    "time_derivative_value", "value_function", "RiccatiBlowUpError", "RiccatiTables", "solve_riccati",
    "value_closed_form", "AuditReport", "run_suite",
]
