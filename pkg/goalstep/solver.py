from dataclasses import dataclass, field
from logging import Logger
import time
from typing import Any, Dict, List, Tuple
import warnings

import numpy as np
from numpy.typing import NDArray
import pandas as pd

from goalstep.control.controller import ControllerConfig, deadbeat_next_step, initial_step
from goalstep.control.estimators import classic_estimate, get_estimator
from goalstep.integrators import LinearThetaSolver, pair_step
from goalstep.problems import IvpProblem
from goalstep.qoi.density import DensityFunction
from goalstep.qoi.quadrature import QoiAccumulator, QuadratureRule
from goalstep.schemes import SchemePair
from goalstep.utils.constants import MACHINE_EPS, MAX_STEPS
from goalstep.utils.exceptions import BlowUpError, ConfigurationError, StepFailureError, StepLimitError


@dataclass
class RunReport:
    """
    Record of one integration run.
    
    Parameters
    ----------
    times : NDArray
        Step start times t_n, n = 0, ..., N - 1.
    dt : NDArray
        Step sizes dt_n.
    est : NDArray
        Error estimates of each step.
    zero_flag : NDArray
        Whether each estimate was exactly zero.
    u_final : NDArray
        The final state.
    J_h : float
        The accumulated QoI.
    states : NDArray | None
        Step endpoint states u_0, ..., u_N, one per row, if stored.
    dense : List[Dict[float, NDArray]] | None
        Per-step dense output, if stored.
    tau : float | None
        The tolerance (None for fixed-step runs).
    variant : str
        'classic', 'goal' or 'fixed'.
    J_ref : float | None
        Reference QoI, if known.
    e_sol_te : float | None
        Euclidean error of the final state against the exact solution, if known.
    wall_time : float
        Wall-clock time of the run in seconds.
    failed : bool
        Whether the run aborted.
    failure : str | None
        The failure message of an aborted run.
    """
    
    times: NDArray
    dt: NDArray
    est: NDArray
    zero_flag: NDArray
    u_final: NDArray
    J_h: float
    states: NDArray | None = None
    dense: List[Dict[float, NDArray]] | None = None
    tau: float | None = None
    variant: str = 'goal'
    J_ref: float | None = None
    e_sol_te: float | None = None
    wall_time: float = 0.
    failed: bool = False
    failure: str | None = None
    
    @property
    def n_steps(self) -> int:
        return int(len(self.dt))
    
    @property
    def e_J(self) -> float | None:
        if self.J_ref is None or self.failed:
            return None
        return abs(self.J_ref - self.J_h)
    
    @property
    def t_final(self) -> float:
        if len(self.dt) == 0:
            return float('nan')
        return float(self.times[-1] + self.dt[-1])
    
    def to_frame(self) -> pd.DataFrame:
        """
        Per-step table with columns t, dt, est, zero_flag.
        """
        
        return pd.DataFrame({
            't': self.times,
            'dt': self.dt,
            'est': self.est,
            'zero_flag': self.zero_flag.astype(int),
        })
    
    def summary(self) -> Dict[str, Any]:
        """
        One-line summary with keys tau, N, J_h, e_J, e_sol_te, wall_ms.
        """
        
        return {
            'tau': self.tau,
            'N': self.n_steps,
            'J_h': self.J_h,
            'e_J': self.e_J,
            'e_sol_te': self.e_sol_te,
            'wall_ms': 1e3 * self.wall_time,
        }


class _StepRecorder:
    """
    Collects per-step records during a run.
    """
    
    def __init__(self, u0: NDArray, store_states: bool, store_dense: bool):
        self.times: List[float] = []
        self.dt: List[float] = []
        self.est: List[float] = []
        self.zero_flag: List[bool] = []
        self.states: List[NDArray] | None = [u0.copy()] if store_states else None
        self.dense: List[Dict[float, NDArray]] | None = [] if store_dense else None
    
    def add(self, t: float, dt: float, est: float, zero_flag: bool, u_next: NDArray, dense: Dict[float, NDArray]) -> None:
        self.times.append(t)
        self.dt.append(dt)
        self.est.append(est)
        self.zero_flag.append(zero_flag)
        if self.states is not None:
            self.states.append(u_next)
        if self.dense is not None:
            self.dense.append(dense)
    
    def report(self, u_final: NDArray, J_h: float, **kwargs) -> RunReport:
        return RunReport(
            times=np.array(self.times),
            dt=np.array(self.dt),
            est=np.array(self.est),
            zero_flag=np.array(self.zero_flag, dtype=bool),
            u_final=u_final,
            J_h=J_h,
            states=None if self.states is None else np.array(self.states),
            dense=self.dense,
            **kwargs,
            )


def check_pairing(pair: SchemePair, rule: QuadratureRule) -> None:
    """
    Check that the pair provides dense output of order >= p - 1 at every interior node of the rule.
    
    Raises
    ------
    ConfigurationError
        If a node is not covered.
    """
    
    for gamma in rule.interior_fractions:
        order = pair.dense_order(gamma)
        if order == 0:
            raise ConfigurationError(f'[GOALSTEP] Scheme "{pair.name}" has no dense output at gamma={gamma}, required by the {rule.id} rule.')
        if order < pair.order_p - 1:
            raise ConfigurationError(f'[GOALSTEP] Dense output of scheme "{pair.name}" at gamma={gamma} has order {order} < p - 1 = {pair.order_p - 1}.')


def clamp_step(t: float, dt: float, te: float) -> Tuple[float, float, bool]:
    """
    Shrink a step that would pass te so that it lands exactly on te.
    
    Parameters
    ----------
    t : float
        The current time.
    dt : float
        The proposed step.
    te : float
        The end time.
    
    Returns
    -------
    Tuple[float, float, bool]
        The step actually taken, the time it ends at, and whether it is the final step. The returned step is the
        exact floating-point difference of the two times.
    """
    
    t_next = t + dt
    # absorb slivers that would leave a step of a few ulps
    if t_next >= te or te - t_next <= 4 * np.finfo(float).eps * max(1., abs(te)):
        return te - t, te, True
    return t_next - t, t_next, False


def _reference_qoi(problem: IvpProblem, density: DensityFunction, j_ref: float | None) -> float | None:
    if j_ref is not None:
        return j_ref
    if problem.qoi_oracle is not None:
        return problem.qoi_oracle(density.label, problem.t0, problem.te)
    return None


def _final_error(problem: IvpProblem, u: NDArray, failed: bool) -> float | None:
    if problem.exact is None or failed:
        return None
    return float(np.linalg.norm(u - problem.exact(problem.te)))


def adaptive_solve(
    problem: IvpProblem,
    pair: SchemePair,
    density: DensityFunction,
    rule: QuadratureRule,
    cfg: ControllerConfig,
    j_ref: float | None = None,
    max_steps: int = MAX_STEPS,
    store_states: bool = True,
    store_dense: bool = False,
    logger: Logger | None = None,
    ) -> RunReport:
    """
    Adaptive time integration with a deadbeat controller driven by a classic or goal-oriented local error estimate.
    Every step is accepted; the higher-order solution is propagated and the QoI is accumulated from it.
    
    Parameters
    ----------
    problem : IvpProblem
        The problem.
    pair : SchemePair
        The scheme pair.
    density : DensityFunction
        The QoI density.
    rule : QuadratureRule
        The per-step quadrature rule.
    cfg : ControllerConfig
        The controller settings.
    j_ref : float | None, optional
        Reference QoI, by default the problem's oracle value if it has one.
    max_steps : int, optional
        Step-count guard, by default 10**7.
    store_states : bool, optional
        Whether to keep the endpoint state of every step, by default True.
    store_dense : bool, optional
        Whether to keep the dense output of every step, by default False.
    logger : Logger | None, optional
        Logger, by default None.
    
    Returns
    -------
    RunReport
        The run report. If a step blows up or fails, the report covers the steps taken so far and has `failed` set.
    
    Raises
    ------
    ConfigurationError
        If the pair cannot serve the quadrature rule or the controller settings are invalid.
    StepLimitError
        If more than `max_steps` steps are needed.
    """
    
    cfg.validate()
    check_pairing(pair, rule)
    
    J_ref = _reference_qoi(problem, density, j_ref)
    estimator = get_estimator(cfg.variant, density, cfg.norm)
    solver = LinearThetaSolver(problem.A) if pair.kind == 'theta-method' else None
    
    if logger:
        logger.info(f'[GOALSTEP] Adaptive run: problem={problem.name}, scheme={pair.name}, variant={cfg.variant}, tau={cfg.tau}, quadrature={rule.id}, density={density.label}, limiter={cfg.limiter_enabled}.')
    
    start = time.perf_counter()
    
    t = problem.t0
    u = np.array(problem.u0, dtype=float)
    dt = initial_step(cfg.tau, cfg.p_hat, problem.te - problem.t0, cfg.initial_step_rule)
    
    accumulator = QoiAccumulator(density, rule)
    accumulator.start(t, u)
    recorder = _StepRecorder(u, store_states, store_dense)
    
    failed = False
    failure = None
    n_zero = 0
    
    while t < problem.te:
        if len(recorder.dt) >= max_steps:
            raise StepLimitError(f'[GOALSTEP] Run exceeded {max_steps} steps at t={t!r} (tau={cfg.tau}).')
        
        dt_step, t_next, _ = clamp_step(t, dt, problem.te)
        
        try:
            if dt_step < 4 * MACHINE_EPS * max(1., abs(t)):
                raise StepFailureError(t, dt_step, f'[GOALSTEP] Step size dt={dt_step!r} fell below the time resolution at t={t!r}.')
            step = pair_step(problem, t, u, dt_step, pair, solver)
        except (BlowUpError, StepFailureError) as e:
            failed = True
            failure = str(e)
            if logger:
                logger.warning(f'[GOALSTEP] Run aborted after {len(recorder.dt)} steps: {e}')
            warnings.warn(f'[GOALSTEP] Run aborted after {len(recorder.dt)} steps: {e}')
            break
        
        est = estimator(t_next, step)
        accumulator.add(t, dt_step, step)
        recorder.add(t, dt_step, est.value, est.zero_flag, step.u_high, step.dense)
        n_zero += est.zero_flag
        
        u = step.u_high
        t = t_next
        dt = deadbeat_next_step(dt_step, est, cfg)
    
    wall_time = time.perf_counter() - start
    
    if n_zero:
        message = f'[GOALSTEP] {n_zero} step(s) had a zero error estimate; the step ratio f_max={cfg.f_max} was used.'
        if logger:
            logger.warning(message)
        warnings.warn(message)
    
    if logger:
        logger.info(f'[GOALSTEP] Run finished: N={len(recorder.dt)}, J_h={accumulator.value!r}, wall time {wall_time:.3f} s.')
    
    return recorder.report(
        u_final=u,
        J_h=accumulator.value,
        tau=cfg.tau,
        variant=cfg.variant,
        J_ref=J_ref,
        e_sol_te=_final_error(problem, u, failed),
        wall_time=wall_time,
        failed=failed,
        failure=failure,
        )


def fixed_step_solve(
    problem: IvpProblem,
    pair: SchemePair,
    density: DensityFunction,
    rule: QuadratureRule,
    n_steps: int,
    j_ref: float | None = None,
    store_states: bool = True,
    store_dense: bool = False,
    logger: Logger | None = None,
    ) -> RunReport:
    """
    Integration on a uniform grid of `n_steps` steps, through the same step and accumulation path as
    `adaptive_solve`. The classic estimate of each step is recorded for diagnostics only.
    
    Parameters
    ----------
    problem : IvpProblem
        The problem.
    pair : SchemePair
        The scheme pair.
    density : DensityFunction
        The QoI density.
    rule : QuadratureRule
        The per-step quadrature rule.
    n_steps : int
        The number of steps (>= 1).
    j_ref : float | None, optional
        Reference QoI, by default the problem's oracle value if it has one.
    store_states : bool, optional
        Whether to keep the endpoint state of every step, by default True.
    store_dense : bool, optional
        Whether to keep the dense output of every step, by default False.
    logger : Logger | None, optional
        Logger, by default None.
    
    Returns
    -------
    RunReport
        The run report.
    """
    
    if n_steps < 1:
        raise ValueError(f'[GOALSTEP] n_steps must be at least 1 (got {n_steps}).')
    check_pairing(pair, rule)
    
    J_ref = _reference_qoi(problem, density, j_ref)
    solver = LinearThetaSolver(problem.A) if pair.kind == 'theta-method' else None
    grid = np.linspace(problem.t0, problem.te, n_steps + 1)
    
    if logger:
        logger.info(f'[GOALSTEP] Fixed-step run: problem={problem.name}, scheme={pair.name}, N={n_steps}, quadrature={rule.id}, density={density.label}.')
    
    start = time.perf_counter()
    
    u = np.array(problem.u0, dtype=float)
    accumulator = QoiAccumulator(density, rule)
    accumulator.start(grid[0], u)
    recorder = _StepRecorder(u, store_states, store_dense)
    
    failed = False
    failure = None
    
    for n in range(n_steps):
        t = grid[n]
        dt = grid[n + 1] - t
        
        try:
            step = pair_step(problem, t, u, dt, pair, solver)
        except (BlowUpError, StepFailureError) as e:
            failed = True
            failure = str(e)
            if logger:
                logger.warning(f'[GOALSTEP] Run aborted after {n} steps: {e}')
            warnings.warn(f'[GOALSTEP] Run aborted after {n} steps: {e}')
            break
        
        est = classic_estimate(step)
        accumulator.add(t, dt, step)
        recorder.add(t, dt, est.value, est.zero_flag, step.u_high, step.dense)
        u = step.u_high
    
    wall_time = time.perf_counter() - start
    
    return recorder.report(
        u_final=u,
        J_h=accumulator.value,
        tau=None,
        variant='fixed',
        J_ref=J_ref,
        e_sol_te=_final_error(problem, u, failed),
        wall_time=wall_time,
        failed=failed,
        failure=failure,
        )
