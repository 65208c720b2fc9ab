import argparse
from dataclasses import asdict
from logging import Logger
import os
import sys
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from goalstep.analysis.convergence import compare_methods, estimate_scheme_order, sweep
from goalstep.analysis.seminorms import lipschitz_seminorm, seminorm
from goalstep.config import ExperimentConfig
from goalstep.dwr import dwr_loop
from goalstep.problems import toy_exact_qoi, toy_problem
from goalstep.qoi.density import get_density
from goalstep.qoi.quadrature import simpson_reference_qoi
from goalstep.schemes import SchemePair, builtin_rk4_pair, builtin_theta_pair, verify_order_conditions
from goalstep.solver import adaptive_solve
from goalstep.utils.constants import (
    EXIT_BLOW_UP,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_NON_CONVERGENCE,
    EXIT_OK,
    ORDER_CONDITION_TOL,
)
from goalstep.utils.exceptions import ConfigurationError, InsufficientDataError, NonConvergenceError, StepLimitError
from goalstep.utils.logging import close_logger, get_logger, log_parameters


########################################### checks ###########################################

def _check(name: str, value: float, target: float, tol: float) -> Dict[str, Any]:
    residual = abs(value - target)
    return {'check': name, 'value': value, 'target': target, 'residual': residual, 'passed': bool(residual <= tol)}


def _pair_checks(pair: SchemePair) -> List[Dict[str, Any]]:
    rows = []
    
    if pair.kind == 'theta-method':
        problem = toy_problem(-1.)
        rows.append(_check(f'{pair.name} main order (theta={pair.theta})',
                           estimate_scheme_order(problem, pair, 256, 'high'), pair.order_p, .05))
        rows.append(_check(f'{pair.name} companion order (theta={pair.companion_theta})',
                           estimate_scheme_order(problem, pair, 256, 'low'), pair.order_p_hat, .05))
        return rows
    
    tableau = pair.tableau
    rows.append(_check(f'{pair.name} b: sum(b) = 1', float(tableau.b.sum()), 1., 1e-14))
    rows.append(_check(f'{pair.name} row sums: max|sum_j a_ij - c_i|',
                       float(np.max(np.abs(tableau.a.sum(axis=1) - tableau.c))), 0., 1e-14))
    for cond in verify_order_conditions(tableau.b, tableau, 1., tableau.order_p).conditions:
        rows.append(_check(f'{pair.name} b: {cond.name}', cond.value, cond.target, ORDER_CONDITION_TOL))
    
    embedded = pair.embedded
    for cond in verify_order_conditions(embedded.b_hat, tableau, 1., embedded.condition_order).conditions:
        rows.append(_check(f'{pair.name} b_hat: {cond.name}', cond.value, cond.target, ORDER_CONDITION_TOL))
    above = verify_order_conditions(embedded.b_hat, tableau, 1., embedded.condition_order + 1)
    worst = max(c.residual for c in above.conditions)
    rows.append({
        'check': f'{pair.name} b_hat: fails order {embedded.condition_order + 1}',
        'value': worst,
        'target': 0.,
        'residual': worst,
        'passed': bool(worst >= ORDER_CONDITION_TOL),
    })
    
    for dense in pair.dense:
        for cond in verify_order_conditions(dense.b_star, tableau, dense.gamma, dense.order).conditions:
            rows.append(_check(f'{pair.name} dense(gamma={dense.gamma}): {cond.name}', cond.value, cond.target,
                               ORDER_CONDITION_TOL))
    
    return rows


def _seminorm_checks() -> List[Dict[str, Any]]:
    A = np.array([[2., 1.], [0., 4.]])
    x = np.array([1., 2.])
    w = np.array([1., 0.])
    ones = np.ones(2)
    
    rows = [
        _check('seminorm ||x||_w = 1', seminorm(x, w), 1., 0.),
        _check('seminorm ||x||_1 = 3', seminorm(x, ones), 3., 0.),
        _check('Lipschitz seminorm ||A||_w = 2', lipschitz_seminorm(A, w), 2., 0.),
        _check('seminorm ||Ax||_w = 4', seminorm(A @ x, w), 4., 0.),
    ]
    gap = seminorm(A @ x, w) - lipschitz_seminorm(A, w) * seminorm(x, w)
    rows.append({
        'check': 'counterexample ||Ax||_w > ||A||_w ||x||_w',
        'value': gap,
        'target': 0.,
        'residual': gap,
        'passed': bool(gap > 0),
    })
    
    return rows


def _toy_checks() -> List[Dict[str, Any]]:
    rows = []
    for k in (-1., -100.):
        problem = toy_problem(k)
        rows.append(_check(f'toy k={k:g} exact-solution residual', problem.exact_residual(), 0., 1e-10))
    problem = toy_problem(-1.)
    for label in ('u1', 'u2'):
        exact = toy_exact_qoi(-1., label)
        reference = simpson_reference_qoi(problem, get_density(label, problem))
        rows.append(_check(f'toy k=-1 QoI {label}: antiderivative vs Simpson', reference / exact, 1., 1e-12))
    return rows


def run_checks(pair: SchemePair | None = None) -> pd.DataFrame:
    """
    Run the verification battery: scheme order conditions, seminorm examples and toy exact-solution checks.
    
    Parameters
    ----------
    pair : SchemePair | None, optional
        Check only this pair's conditions, by default both built-in pairs.
    
    Returns
    -------
    pd.DataFrame
        Columns check, value, target, residual, passed.
    """
    
    pairs = [builtin_rk4_pair(), builtin_theta_pair()] if pair is None else [pair]
    
    rows = []
    for p in pairs:
        rows.extend(_pair_checks(p))
    rows.extend(_seminorm_checks())
    rows.extend(_toy_checks())
    
    return pd.DataFrame(rows, columns=['check', 'value', 'target', 'residual', 'passed'])


########################################### commands ###########################################

def _write_csv(frame: pd.DataFrame, out_directory: str, file_name: str, footer: List[str] | None = None) -> str:
    path = os.path.join(out_directory, file_name)
    frame.to_csv(path, index=False)
    if footer:
        with open(path, 'a') as file:
            for line in footer:
                file.write(f'# {line}\n')
    return path


def cmd_check(pair: SchemePair | None = None) -> int:
    """
    Print the verification table. Returns 0 if every check passes and 1 otherwise.
    """
    
    results = run_checks(pair)
    with pd.option_context('display.max_rows', None, 'display.width', 200):
        print(results.to_string(index=False))
    
    failed = results[~results['passed']]
    if len(failed):
        for name in failed['check']:
            print(f'[GOALSTEP] FAILED: {name}')
        return EXIT_CHECK_FAILED
    
    print(f'[GOALSTEP] All {len(results)} checks passed.')
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig, logger: Logger | None = None) -> int:
    """
    Single adaptive run at the first tolerance. Writes run_steps.csv (t, dt, est, zero_flag) and run_summary.csv
    (tau, N, J_h, e_J, e_sol_te, wall_ms).
    """
    
    problem = cfg.build_problem()
    pair = cfg.build_pair()
    density = cfg.build_density(problem)
    rule = cfg.build_rule()
    tau = cfg.tau[0]
    if len(cfg.tau) > 1 and logger:
        logger.info(f'[GOALSTEP] run uses only the first tolerance ({tau}).')
    
    try:
        report = adaptive_solve(
            problem,
            pair,
            density,
            rule,
            cfg.controller_config(tau, pair),
            max_steps=cfg.max_steps,
            store_states=cfg.store_trajectory,
            logger=logger,
            )
    except StepLimitError as e:
        print(str(e), file=sys.stderr)
        return EXIT_BLOW_UP
    
    _write_csv(report.to_frame(), cfg.out, 'run_steps.csv')
    _write_csv(pd.DataFrame([report.summary()]), cfg.out, 'run_summary.csv')
    
    if cfg.store_trajectory:
        trajectory = pd.DataFrame(report.states, columns=[f'u{i + 1}' for i in range(problem.dimension)])
        trajectory.insert(0, 't', np.append(report.times, report.t_final))
        _write_csv(trajectory, cfg.out, 'run_trajectory.csv')
    
    if report.failed:
        print(f'[GOALSTEP] Run failed: {report.failure}', file=sys.stderr)
        return EXIT_BLOW_UP
    
    print(f'[GOALSTEP] N={report.n_steps}, J_h={report.J_h!r}, e_J={report.e_J}')
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, logger: Logger | None = None) -> int:
    """
    Tolerance sweep. Writes sweep.csv (tau, n_steps, J_h, err_J, err_sol_te, wall_ms) in descending tolerance order
    with a fitted-slope footer line.
    """
    
    problem = cfg.build_problem()
    pair = cfg.build_pair()
    density = cfg.build_density(problem)
    rule = cfg.build_rule()
    
    result = sweep(
        problem,
        pair,
        density,
        rule,
        cfg.variant,
        cfg.tau,
        limiter_enabled=cfg.limiter,
        norm=cfg.norm,
        initial_step_rule=cfg.initial_step_rule,
        jobs=cfg.jobs,
        max_steps=cfg.max_steps,
        verbose=cfg.jobs > 1,
        logger=logger,
        )
    
    try:
        slope = result.fit('tau', 'err_J', logger)
    except InsufficientDataError as e:
        if logger:
            logger.warning(str(e))
        slope = float('nan')
    
    columns = ['tau', 'n_steps', 'J_h', 'err_J', 'err_sol_te', 'wall_ms']
    _write_csv(result.frame[columns], cfg.out, 'sweep.csv', footer=[f'slope={slope!r}', f'J_ref={result.J_ref!r}'])
    print(f'[GOALSTEP] Fitted slope of err_J vs tau: {slope:.4f}')
    
    if result.frame['failed'].any():
        return EXIT_BLOW_UP
    return EXIT_OK


def cmd_dwr(cfg: ExperimentConfig, logger: Logger | None = None) -> int:
    """
    DWR refinement loop at the first tolerance. Writes dwr_trace.csv (iteration, cells, eta, J_h, e_J, effectivity).
    """
    
    problem = cfg.build_problem()
    density = cfg.build_density(problem)
    if not problem.is_linear or density.linear_weights is None:
        raise ConfigurationError('[GOALSTEP] dwr needs a linear problem and a linear density.')
    
    result = dwr_loop(problem, density, cfg.dwr_config(cfg.tau[0]), logger=logger)
    _write_csv(result.trace, cfg.out, 'dwr_trace.csv')
    
    if not result.converged:
        print(f'[GOALSTEP] DWR did not converge: eta={result.eta:.3e} > tau={cfg.tau[0]:.3e}.', file=sys.stderr)
        return EXIT_NON_CONVERGENCE
    
    print(f'[GOALSTEP] DWR converged: cells={result.grid.n_cells}, eta={result.eta:.3e}, J_h={result.J_h!r}')
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, logger: Logger | None = None) -> int:
    """
    Classic, goal-oriented and DWR runs over the tolerance list. Writes compare.csv
    (method, tau, n_steps, J_h, err_J, wall_ms).
    """
    
    problem = cfg.build_problem()
    pair = cfg.build_pair()
    density = cfg.build_density(problem)
    rule = cfg.build_rule()
    
    frame = compare_methods(
        problem,
        pair,
        density,
        rule,
        cfg.tau,
        dwr_config=cfg.dwr_config(min(cfg.tau)),
        limiter_enabled=cfg.limiter,
        jobs=cfg.jobs,
        logger=logger,
        )
    _write_csv(frame, cfg.out, 'compare.csv')
    print(f'[GOALSTEP] Wrote {len(frame)} rows to {os.path.join(cfg.out, "compare.csv")}')
    
    return EXIT_OK


########################################### entry point ###########################################

COMMANDS = {
    'run': (cmd_run, 1),
    'sweep': (cmd_sweep, 2),
    'dwr': (cmd_dwr, 1),
    'compare': (cmd_compare, 2),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='goalstep',
        description='Goal-oriented adaptive time integration experiments.',
        )
    subparsers = parser.add_subparsers(dest='command', required=True)
    
    subparsers.add_parser('check', help='run the built-in verification battery')
    
    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument('--config', help='flat JSON configuration file')
    experiment.add_argument('--problem', help='problem id: toy, convdiff-fwd or convdiff-bwd')
    experiment.add_argument('--k', type=float, help='toy stiffness (k < 0)')
    experiment.add_argument('--a', type=float, help='convection speed')
    experiment.add_argument('--gamma', type=float, help='diffusivity')
    experiment.add_argument('--c', type=float, help='Robin boundary coefficient')
    experiment.add_argument('--n-cells', dest='n_cells', type=int, help='spatial cells of the convection-diffusion grid')
    experiment.add_argument('--scheme', help='scheme pair: rk4 or theta')
    experiment.add_argument('--density', help='density label')
    experiment.add_argument('--quadrature', help='quadrature rule: trapezoid or simpson')
    experiment.add_argument('--variant', help='error estimator: classic or goal')
    experiment.add_argument('--tau', type=float, action='append', help='tolerance (repeatable)')
    experiment.add_argument('--limiter', dest='limiter', action='store_const', const=True, help='enable the step-ratio limiter')
    experiment.add_argument('--no-limiter', dest='limiter', action='store_const', const=False, help='disable the step-ratio limiter')
    experiment.add_argument('--norm', help='classic estimator norm: l2 or max')
    experiment.add_argument('--initial-step-rule', dest='initial_step_rule', help='initial step rule: power or tolerance')
    experiment.add_argument('--out', help='output directory')
    experiment.add_argument('--jobs', type=int, help='worker processes for sweeps')
    experiment.add_argument('--store-trajectory', dest='store_trajectory', action='store_const', const=True, help='write the state trajectory of a run')
    experiment.add_argument('--max-steps', dest='max_steps', type=int, help='step-count guard')
    experiment.add_argument('--refine-fraction', dest='refine_fraction', type=float, help='DWR refinement fraction')
    experiment.add_argument('--initial-cells', dest='initial_cells', type=int, help='DWR initial cells')
    experiment.add_argument('--max-iterations', dest='max_iterations', type=int, help='DWR refinement guard')
    
    subparsers.add_parser('run', parents=[experiment], help='single adaptive run')
    subparsers.add_parser('sweep', parents=[experiment], help='tolerance sweep with order fit')
    subparsers.add_parser('dwr', parents=[experiment], help='DWR refinement loop')
    subparsers.add_parser('compare', parents=[experiment], help='classic vs goal vs DWR comparison')
    
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Merge the JSON configuration (if given) with the command-line overrides.
    """
    
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    return cfg.merged(vars(args))


def main(argv: List[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    
    if args.command == 'check':
        return cmd_check()
    
    command, min_taus = COMMANDS[args.command]
    
    try:
        cfg = load_config(args)
        cfg.validate(min_taus)
        os.makedirs(cfg.out, exist_ok=True)
    except (ConfigurationError, OSError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    
    logger = get_logger(cfg.out)
    log_parameters({'command': args.command, **asdict(cfg)}, cfg.out)
    
    try:
        return command(cfg, logger)
    except ConfigurationError as e:
        logger.error(str(e))
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NonConvergenceError as e:
        logger.error(str(e))
        print(str(e), file=sys.stderr)
        return EXIT_NON_CONVERGENCE
    except RuntimeError as e:
        # step limits and failed reference runs
        logger.error(str(e))
        print(str(e), file=sys.stderr)
        return EXIT_BLOW_UP
    finally:
        close_logger(logger)


if __name__ == '__main__':
    sys.exit(main())
