from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson

from goalstep.integrators import StepOutput
from goalstep.problems import IvpProblem
from goalstep.qoi.density import DensityFunction
from goalstep.utils.exceptions import ConfigurationError


@dataclass(frozen=True)
class QuadratureRule:
    """
    Per-step quadrature rule with nodes at fractions gamma_k of the step and weights sigma_k (summing to 1).
    """
    
    id: str
    order_r: int
    fractions: Tuple[float, ...]
    weights: Tuple[float, ...]
    
    @property
    def interior_fractions(self) -> Tuple[float, ...]:
        return tuple(g for g in self.fractions if 0 < g < 1)


TRAPEZOID = QuadratureRule(id='trapezoid', order_r=2, fractions=(0., 1.), weights=(.5, .5))
SIMPSON = QuadratureRule(id='simpson', order_r=4, fractions=(0., .5, 1.), weights=(1 / 6, 4 / 6, 1 / 6))

QUADRATURES = {rule.id: rule for rule in (TRAPEZOID, SIMPSON)}


def get_quadrature(rule_id: str) -> QuadratureRule:
    if rule_id not in QUADRATURES:
        raise ConfigurationError(f'[GOALSTEP] Unknown quadrature "{rule_id}". Available rules: {sorted(QUADRATURES)}.')
    return QUADRATURES[rule_id]


def step_increment(rule: QuadratureRule, dt: float, j_values: Sequence[float]) -> float:
    """
    QoI increment of one step, dt * sum_k sigma_k j(t + gamma_k dt).
    
    Parameters
    ----------
    rule : QuadratureRule
        The rule.
    dt : float
        The step size.
    j_values : Sequence[float]
        j at the rule's nodes, in node order.
    
    Returns
    -------
    float
        The increment.
    
    Raises
    ------
    ValueError
        If the number of values does not match the rule's nodes.
    """
    
    if len(j_values) != len(rule.fractions):
        raise ValueError(f'[GOALSTEP] The {rule.id} rule needs {len(rule.fractions)} values (got {len(j_values)}).')
    
    return dt * float(np.dot(rule.weights, j_values))


class QoiAccumulator:
    """
    Accumulates J_h alongside a time march. The density at each step endpoint is evaluated once and shared with the
    following step.
    """
    
    def __init__(self, density: DensityFunction, rule: QuadratureRule):
        self.density = density
        self.rule = rule
        self.value = 0.
        self._j_start: float | None = None
    
    def start(self, t0: float, u0: NDArray) -> None:
        self.value = 0.
        self._j_start = self.density(t0, u0)
    
    def add_step(self, t: float, dt: float, u_next: NDArray, dense: Dict[float, NDArray] | None = None) -> float:
        """
        Add the increment of the step [t, t + dt] ending in u_next.
        
        Raises
        ------
        ConfigurationError
            If the rule needs a node the dense output does not provide.
        """
        
        if self._j_start is None:
            raise RuntimeError('[GOALSTEP] QoiAccumulator.start() must be called before adding steps.')
        
        j_end = self.density(t + dt, u_next)
        
        j_values = []
        for gamma in self.rule.fractions:
            if gamma == 0:
                j_values.append(self._j_start)
            elif gamma == 1:
                j_values.append(j_end)
            else:
                if dense is None or gamma not in dense:
                    raise ConfigurationError(f'[GOALSTEP] The {self.rule.id} rule needs dense output at gamma={gamma}.')
                j_values.append(self.density(t + gamma * dt, dense[gamma]))
        
        increment = step_increment(self.rule, dt, j_values)
        self.value += increment
        self._j_start = j_end
        
        return increment
    
    def add(self, t: float, dt: float, step: StepOutput) -> float:
        return self.add_step(t, dt, step.u_high, step.dense)


def accumulate(
    times: NDArray,
    states: NDArray,
    j: DensityFunction,
    rule: QuadratureRule,
    dense: List[Dict[float, NDArray]] | None = None,
    ) -> float:
    """
    Composite quadrature of j along a stored run.
    
    Parameters
    ----------
    times : NDArray
        Grid times t_0 < ... < t_N.
    states : NDArray
        States at the grid times, one per row.
    j : DensityFunction
        The density.
    rule : QuadratureRule
        The rule.
    dense : List[Dict[float, NDArray]] | None, optional
        Per-step dense output at the rule's interior nodes (required for Simpson).
    
    Returns
    -------
    float
        J_h.
    
    Raises
    ------
    ConfigurationError
        If the rule needs dense output that is missing.
    """
    
    times = np.asarray(times, dtype=float)
    if len(times) != len(states):
        raise ValueError(f'[GOALSTEP] Got {len(times)} times but {len(states)} states.')
    if len(times) < 2:
        return 0.
    if rule.interior_fractions and (dense is None or len(dense) != len(times) - 1):
        raise ConfigurationError(f'[GOALSTEP] The {rule.id} rule needs dense output for every step.')
    
    # fast path: endpoint-only rules evaluate the density once per node
    if not rule.interior_fractions:
        j_nodes = j.series(times, np.asarray(states))
        dts = np.diff(times)
        return float(np.sum(dts * (rule.weights[0] * j_nodes[:-1] + rule.weights[-1] * j_nodes[1:])))
    
    accumulator = QoiAccumulator(j, rule)
    accumulator.start(times[0], states[0])
    for n in range(len(times) - 1):
        accumulator.add_step(times[n], times[n + 1] - times[n], states[n + 1], dense[n])
    
    return accumulator.value


def simpson_reference_qoi(
    problem: IvpProblem,
    density: DensityFunction,
    n_intervals: int = 2**20,
    t0: float | None = None,
    te: float | None = None,
    ) -> float:
    """
    Reference QoI from composite Simpson quadrature of the exact solution.
    
    Parameters
    ----------
    problem : IvpProblem
        A problem with an exact solution.
    density : DensityFunction
        The density.
    n_intervals : int, optional
        Number of (even) Simpson intervals, by default 2**20.
    t0 : float | None, optional
        Lower limit, by default `problem.t0`.
    te : float | None, optional
        Upper limit, by default `problem.te`.
    
    Returns
    -------
    float
        The reference QoI.
    """
    
    if problem.exact is None:
        raise ValueError(f'[GOALSTEP] Problem "{problem.name}" has no exact solution.')
    if n_intervals % 2:
        raise ValueError('[GOALSTEP] Simpson quadrature needs an even number of intervals.')
    
    t0 = problem.t0 if t0 is None else t0
    te = problem.te if te is None else te
    if te == t0:
        return 0.
    
    times = np.linspace(t0, te, n_intervals + 1)
    values = density.series(times, problem.exact(times))
    
    return float(simpson(values, x=times))
