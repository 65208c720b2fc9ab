from goalstep.schemes import SchemePair, builtin_rk4_pair, builtin_theta_pair, get_scheme, verify_order_conditions
from goalstep.problems import IvpProblem, MolGrid1d, convdiff_1d, get_problem, toy_exact_qoi, toy_goal_principal_error, toy_problem
from goalstep.integrators import StepOutput, explicit_rk_step, pair_step, theta_step_linear
from goalstep.control import ControllerConfig, EstimateRecord, classic_estimate, deadbeat_next_step, goal_estimate, initial_step
from goalstep.qoi import SIMPSON, TRAPEZOID, LinearDensity, accumulate, get_density, get_quadrature, step_increment
from goalstep.solver import RunReport, adaptive_solve, fixed_step_solve
from goalstep.dwr import DwrConfig, TimeGrid, dwr_adjoint, dwr_estimate, dwr_forward, dwr_loop, dwr_refine
from goalstep.analysis import cusp_diagnostic, fit_observed_order, lipschitz_seminorm, seminorm, sweep
from goalstep.config import ExperimentConfig
