from dataclasses import dataclass, replace
from functools import partial
from logging import Logger
import time
from typing import Any, Dict, List, Literal, Sequence
import warnings

import numpy as np
from numpy.typing import NDArray
import pandas as pd
from tqdm import tqdm
from tqdm.contrib.concurrent import process_map

from goalstep.control.controller import ControllerConfig
from goalstep.dwr import DwrConfig, dwr_loop
from goalstep.integrators import LinearThetaSolver, pair_step
from goalstep.problems import IvpProblem
from goalstep.qoi.density import DensityFunction
from goalstep.qoi.quadrature import QuadratureRule
from goalstep.schemes import SchemePair
from goalstep.solver import adaptive_solve
from goalstep.utils.batching import get_batch_size
from goalstep.utils.constants import MACHINE_EPS, MAX_STEPS, ZERO_ERROR_FACTOR, bar_format
from goalstep.utils.exceptions import InsufficientDataError, StepLimitError


SWEEP_COLUMNS = ['tau', 'n_steps', 'J_h', 'err_J', 'err_sol_te', 'wall_ms', 'failed', 'failure']


def fit_observed_order(
    xs: Sequence[float],
    ys: Sequence[float],
    floor: float = 0.,
    logger: Logger | None = None,
    ) -> float:
    """
    Least-squares slope of log(y) against log(x).
    
    Parameters
    ----------
    xs : Sequence[float]
        Positive abscissae (tolerances or step counts).
    ys : Sequence[float]
        Errors. Points with y <= `floor` or non-finite y are dropped with a warning.
    floor : float, optional
        Errors at or below this value count as exact, by default 0.
    logger : Logger | None, optional
        Logger, by default None.
    
    Returns
    -------
    float
        The fitted slope.
    
    Raises
    ------
    InsufficientDataError
        If fewer than three usable points remain.
    """
    
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError(f'[GOALSTEP] Got {xs.size} abscissae but {ys.size} errors.')
    if np.any(~(xs > 0)):
        raise ValueError('[GOALSTEP] Abscissae of an order fit must be positive.')
    
    keep = np.isfinite(ys) & (ys > floor)
    n_dropped = int((~keep).sum())
    if n_dropped:
        message = f'[GOALSTEP] Dropped {n_dropped} point(s) with error <= {floor:.3e} from the order fit.'
        if logger:
            logger.warning(message)
        warnings.warn(message)
    
    if keep.sum() < 3:
        raise InsufficientDataError(f'[GOALSTEP] An order fit needs at least 3 usable points (got {int(keep.sum())}).')
    
    slope, _ = np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)
    
    return float(slope)


def _fixed_march_error(problem: IvpProblem, pair: SchemePair, n_steps: int, solution: Literal['high', 'low']) -> float:
    solver = LinearThetaSolver(problem.A) if pair.kind == 'theta-method' else None
    grid = np.linspace(problem.t0, problem.te, n_steps + 1)
    u = np.array(problem.u0, dtype=float)
    for n in range(n_steps):
        step = pair_step(problem, grid[n], u, grid[n + 1] - grid[n], pair, solver)
        u = step.u_high if solution == 'high' else step.u_low
    return float(np.linalg.norm(u - problem.exact(problem.te)))


def estimate_scheme_order(
    problem: IvpProblem,
    pair: SchemePair,
    n_steps: int = 64,
    solution: Literal['high', 'low'] = 'high',
    ) -> float:
    """
    Observed order log2(e(N) / e(2N)) of fixed-step runs against the exact final state.
    
    Parameters
    ----------
    problem : IvpProblem
        A problem with an exact solution.
    pair : SchemePair
        The scheme pair.
    n_steps : int, optional
        The coarse step count N, by default 64.
    solution : Literal['high', 'low'], optional
        Propagate the main scheme ('high') or the companion ('low'), by default 'high'.
    
    Returns
    -------
    float
        The observed order.
    """
    
    if problem.exact is None:
        raise ValueError(f'[GOALSTEP] Problem "{problem.name}" has no exact solution.')
    
    coarse = _fixed_march_error(problem, pair, n_steps, solution)
    fine = _fixed_march_error(problem, pair, 2 * n_steps, solution)
    
    return float(np.log2(coarse / fine))


@dataclass
class SweepResult:
    """
    One adaptive run per tolerance, in descending tolerance order.
    
    Parameters
    ----------
    frame : pd.DataFrame
        Columns tau, n_steps, J_h, err_J, err_sol_te, wall_ms, failed, failure.
    variant : str
        The estimator variant.
    J_ref : float | None
        The reference QoI the errors are measured against.
    """
    
    frame: pd.DataFrame
    variant: str
    J_ref: float | None
    
    def fit(
        self,
        x: Literal['tau', 'n_steps'] = 'tau',
        y: Literal['err_J', 'err_sol_te'] = 'err_J',
        logger: Logger | None = None,
        ) -> float:
        """
        Observed order of `y` against `x` over the rows that did not fail. Errors below 100 machine epsilons of
        |J_ref| count as exact and are left out.
        """
        
        rows = self.frame[~self.frame['failed'].astype(bool)]
        floor = 0. if self.J_ref is None or y != 'err_J' else ZERO_ERROR_FACTOR * MACHINE_EPS * abs(self.J_ref)
        
        return fit_observed_order(rows[x].to_numpy(dtype=float), rows[y].to_numpy(dtype=float), floor, logger)


def _sweep_row(
    tau: float,
    problem: IvpProblem,
    pair: SchemePair,
    density: DensityFunction,
    rule: QuadratureRule,
    cfg: ControllerConfig,
    j_ref: float | None,
    max_steps: int,
    ) -> Dict[str, Any]:
    
    try:
        report = adaptive_solve(
            problem,
            pair,
            density,
            rule,
            replace(cfg, tau=tau),
            j_ref=j_ref,
            max_steps=max_steps,
            store_states=False,
            )
    except StepLimitError as e:
        return {'tau': tau, 'n_steps': max_steps, 'J_h': np.nan, 'err_J': np.nan, 'err_sol_te': np.nan,
                'wall_ms': np.nan, 'failed': True, 'failure': str(e)}
    
    return {
        'tau': tau,
        'n_steps': report.n_steps,
        'J_h': report.J_h,
        'err_J': np.nan if report.e_J is None else report.e_J,
        'err_sol_te': np.nan if report.e_sol_te is None else report.e_sol_te,
        'wall_ms': 1e3 * report.wall_time,
        'failed': report.failed,
        'failure': report.failure or '',
    }


def reference_qoi(
    problem: IvpProblem,
    pair: SchemePair,
    density: DensityFunction,
    rule: QuadratureRule,
    taus: Sequence[float],
    cfg: ControllerConfig,
    max_steps: int = MAX_STEPS,
    logger: Logger | None = None,
    ) -> float:
    """
    Reference QoI for a sweep: the problem's exact value if it has one for this density, otherwise a classic adaptive
    run at min(taus) / 10.
    """
    
    if problem.qoi_oracle is not None:
        value = problem.qoi_oracle(density.label, problem.t0, problem.te)
        if value is not None:
            if logger:
                logger.info(f'[GOALSTEP] Reference QoI from closed form: {value!r}.')
            return value
    
    tau_ref = min(taus) / 10
    report = adaptive_solve(problem, pair, density, rule, replace(cfg, tau=tau_ref, variant='classic'),
                            max_steps=max_steps, store_states=False)
    if report.failed:
        raise RuntimeError(f'[GOALSTEP] Reference run at tau={tau_ref} failed: {report.failure}')
    if logger:
        logger.info(f'[GOALSTEP] Reference QoI from a classic run at tau={tau_ref}: {report.J_h!r} ({report.n_steps} steps).')
    
    return report.J_h


def sweep(
    problem: IvpProblem,
    pair: SchemePair,
    density: DensityFunction,
    rule: QuadratureRule,
    variant: Literal['classic', 'goal'],
    taus: Sequence[float],
    limiter_enabled: bool = True,
    norm: Literal['l2', 'max'] = 'l2',
    initial_step_rule: Literal['power', 'tolerance'] = 'power',
    j_ref: float | None = None,
    jobs: int = 1,
    max_steps: int = MAX_STEPS,
    verbose: bool = False,
    logger: Logger | None = None,
    ) -> SweepResult:
    """
    Run one adaptive solve per tolerance.
    
    Parameters
    ----------
    problem : IvpProblem
        The problem.
    pair : SchemePair
        The scheme pair.
    density : DensityFunction
        The QoI density.
    rule : QuadratureRule
        The quadrature rule.
    variant : Literal['classic', 'goal']
        The estimator variant.
    taus : Sequence[float]
        At least two positive tolerances.
    limiter_enabled : bool, optional
        Whether the step-ratio limiter is on, by default True.
    norm : Literal['l2', 'max'], optional
        Norm of the classic estimator, by default 'l2'.
    initial_step_rule : Literal['power', 'tolerance'], optional
        Initial step rule, by default 'power'.
    j_ref : float | None, optional
        Reference QoI, by default from `reference_qoi`.
    jobs : int, optional
        Number of worker processes, by default 1 (sequential).
    max_steps : int, optional
        Step-count guard per run, by default 10**7. Runs hitting it are marked as failed.
    verbose : bool, optional
        Whether to show a progress bar, by default False.
    logger : Logger | None, optional
        Logger, by default None.
    
    Returns
    -------
    SweepResult
        The sweep, sorted by descending tolerance.
    """
    
    taus = [float(tau) for tau in taus]
    if len(taus) < 2:
        raise ValueError(f'[GOALSTEP] A sweep needs at least two tolerances (got {len(taus)}).')
    if any(not tau > 0 for tau in taus):
        raise ValueError('[GOALSTEP] Sweep tolerances must be positive.')
    
    cfg = ControllerConfig(
        tau=taus[0],
        p_hat=pair.order_p_hat,
        variant=variant,
        limiter_enabled=limiter_enabled,
        norm=norm,
        initial_step_rule=initial_step_rule,
        )
    cfg.validate()
    
    if j_ref is None:
        j_ref = reference_qoi(problem, pair, density, rule, taus, cfg, max_steps, logger)
    
    if logger:
        logger.info(f'[GOALSTEP] Sweeping {len(taus)} tolerances ({variant}, scheme={pair.name}, jobs={jobs}).')
    
    task = partial(
        _sweep_row,
        problem=problem,
        pair=pair,
        density=density,
        rule=rule,
        cfg=cfg,
        j_ref=j_ref,
        max_steps=max_steps,
        )
    
    if jobs > 1:
        rows = process_map(
            task,
            taus,
            max_workers=jobs,
            disable=not verbose,
            desc=f'[GOALSTEP] Sweeping {variant} tolerances',
            chunksize=get_batch_size(len(taus)),
            bar_format=bar_format,
            tqdm_class=tqdm,
            )
    else:
        rows = [task(tau) for tau in tqdm(taus, disable=not verbose, desc=f'[GOALSTEP] Sweeping {variant} tolerances', bar_format=bar_format)]
    
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    frame = frame.sort_values('tau', ascending=False, kind='stable').reset_index(drop=True)
    
    if logger:
        for row in frame.itertuples():
            if row.failed:
                logger.warning(f'[GOALSTEP] Run at tau={row.tau} failed: {row.failure}')
    
    return SweepResult(frame=frame, variant=variant, J_ref=j_ref)


def steps_for_error(result: SweepResult, target: float) -> float | None:
    """
    Number of steps a sweep needs to reach err_J = target, by log-log interpolation between the rows bracketing the
    target.
    
    Parameters
    ----------
    result : SweepResult
        The sweep.
    target : float
        The QoI error to reach.
    
    Returns
    -------
    float | None
        The interpolated step count, the smallest step count if every row already meets the target, or None if no row
        does.
    """
    
    rows = result.frame[~result.frame['failed'].astype(bool) & (result.frame['err_J'] > 0)]
    rows = rows.sort_values('n_steps', kind='stable')
    n = rows['n_steps'].to_numpy(dtype=float)
    e = rows['err_J'].to_numpy(dtype=float)
    
    reached = np.nonzero(e <= target)[0]
    if reached.size == 0:
        return None
    i = reached[0]
    if i == 0:
        return float(n[0])
    
    log_n0, log_n1 = np.log(n[i - 1]), np.log(n[i])
    log_e0, log_e1 = np.log(e[i - 1]), np.log(e[i])
    if log_e1 == log_e0:
        return float(n[i])
    
    return float(np.exp(log_n0 + (np.log(target) - log_e0) * (log_n1 - log_n0) / (log_e1 - log_e0)))


def compare_methods(
    problem: IvpProblem,
    pair: SchemePair,
    density: DensityFunction,
    rule: QuadratureRule,
    taus: Sequence[float],
    dwr_config: DwrConfig | None = None,
    limiter_enabled: bool = True,
    jobs: int = 1,
    j_ref: float | None = None,
    logger: Logger | None = None,
    ) -> pd.DataFrame:
    """
    Classic and goal-oriented sweeps plus one DWR loop per tolerance, against a common reference.
    
    Parameters
    ----------
    problem : IvpProblem
        The problem.
    pair : SchemePair
        The scheme pair of the adaptive runs.
    density : DensityFunction
        The QoI density.
    rule : QuadratureRule
        The quadrature rule of the adaptive runs.
    taus : Sequence[float]
        At least two tolerances.
    dwr_config : DwrConfig | None, optional
        DWR settings (the tolerance is replaced per row), by default the standard settings. DWR rows are only produced
        for linear problems with linear densities.
    limiter_enabled : bool, optional
        Whether the step-ratio limiter is on, by default True.
    jobs : int, optional
        Worker processes for the sweeps, by default 1.
    j_ref : float | None, optional
        Reference QoI, by default from `reference_qoi`.
    logger : Logger | None, optional
        Logger, by default None.
    
    Returns
    -------
    pd.DataFrame
        Columns method, tau, n_steps, J_h, err_J, wall_ms.
    """
    
    if j_ref is None:
        cfg = ControllerConfig(tau=min(taus), p_hat=pair.order_p_hat, limiter_enabled=limiter_enabled)
        j_ref = reference_qoi(problem, pair, density, rule, taus, cfg, logger=logger)
    
    frames: List[pd.DataFrame] = []
    for variant in ('classic', 'goal'):
        result = sweep(problem, pair, density, rule, variant, taus, limiter_enabled=limiter_enabled, j_ref=j_ref,
                       jobs=jobs, logger=logger)
        frame = result.frame[['tau', 'n_steps', 'J_h', 'err_J', 'wall_ms']].copy()
        frame.insert(0, 'method', variant)
        frames.append(frame)
    
    if problem.is_linear and density.linear_weights is not None:
        dwr_config = dwr_config or DwrConfig(tau=min(taus))
        rows = []
        for tau in sorted(taus, reverse=True):
            start = time.perf_counter()
            result = dwr_loop(problem, density, replace(dwr_config, tau=tau), j_ref=j_ref)
            rows.append({
                'method': 'dwr',
                'tau': tau,
                'n_steps': result.grid.n_cells,
                'J_h': result.J_h,
                'err_J': abs(j_ref - result.J_h),
                'wall_ms': 1e3 * (time.perf_counter() - start),
            })
        frames.append(pd.DataFrame(rows))
    elif logger:
        logger.info('[GOALSTEP] Skipping DWR: it needs a linear problem with a linear density.')
    
    return pd.concat(frames, ignore_index=True)
