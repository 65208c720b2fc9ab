from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, lu_factor, lu_solve, solve_banded

from goalstep.problems import IvpProblem
from goalstep.schemes import SchemePair
from goalstep.utils.exceptions import BlowUpError, ConfigurationError, StepFailureError


@dataclass
class StepOutput:
    """
    Result of one step of a scheme pair from the state u at time t.
    
    Parameters
    ----------
    u_high : NDArray
        The solution of the main scheme at t + dt.
    u_low : NDArray
        The solution of the embedded companion at t + dt.
    dense : Dict[float, NDArray]
        Dense output, mapping step fractions gamma to the state at t + gamma * dt.
    stage_derivatives : NDArray | None, optional
        The stage derivatives (explicit pairs only), one row per stage.
    """
    
    u_high: NDArray
    u_low: NDArray
    dense: Dict[float, NDArray] = field(default_factory=dict)
    stage_derivatives: NDArray | None = None


def explicit_rk_step(
    problem: IvpProblem,
    t: float,
    u: NDArray,
    dt: float,
    pair: SchemePair,
    ) -> StepOutput:
    """
    Take one step of an explicit embedded Runge-Kutta pair. The main, embedded and dense solutions all reuse the same
    stage derivatives.
    
    Parameters
    ----------
    problem : IvpProblem
        The problem.
    t : float
        The current time.
    u : NDArray
        The current state.
    dt : float
        The step size.
    pair : SchemePair
        An explicit pair.
    
    Returns
    -------
    StepOutput
        The step output.
    
    Raises
    ------
    BlowUpError
        If a stage derivative is not finite.
    """
    
    if pair.kind != 'explicit-rk':
        raise ConfigurationError(f'[GOALSTEP] explicit_rk_step requires an explicit pair (got "{pair.kind}").')
    if not dt > 0:
        raise ValueError(f'[GOALSTEP] dt must be positive (got {dt}).')
    
    tableau = pair.tableau
    K = np.zeros((tableau.stage_count, u.size))
    for i in range(tableau.stage_count):
        stage_state = u + dt * (tableau.a[i, :i] @ K[:i])
        K[i] = problem.rhs(t + tableau.c[i] * dt, stage_state)
        if not np.all(np.isfinite(K[i])):
            raise BlowUpError(t, dt)
    
    return StepOutput(
        u_high=u + dt * (tableau.b @ K),
        u_low=u + dt * (pair.embedded.b_hat @ K),
        dense={d.gamma: u + dt * (d.b_star @ K) for d in pair.dense},
        stage_derivatives=K,
        )


class LinearThetaSolver:
    """
    Solves the theta-method systems (I - theta dt A) x = r for a fixed matrix A. Tridiagonal matrices use a banded
    solver; anything else is LU-factorised. Factorisations are cached per (theta, dt) within one run.
    """
    
    max_cache = 64
    
    def __init__(self, A: NDArray):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        self.tridiagonal = n > 2 and not np.any(np.triu(self.A, 2)) and not np.any(np.tril(self.A, -2))
        self._cache: Dict[Tuple[float, float], Tuple[NDArray, NDArray] | NDArray] = {}
    
    def _banded(self, theta: float, dt: float) -> NDArray:
        n = self.A.shape[0]
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * dt * np.diag(self.A, 1)
        ab[1, :] = 1 - theta * dt * np.diag(self.A)
        ab[2, :-1] = -theta * dt * np.diag(self.A, -1)
        return ab
    
    def _factor(self, theta: float, dt: float, t: float):
        key = (theta, dt)
        if key in self._cache:
            return self._cache[key]
        if len(self._cache) >= self.max_cache:
            self._cache.clear()
        
        if self.tridiagonal:
            factor = self._banded(theta, dt)
        else:
            lhs = np.eye(self.A.shape[0]) - theta * dt * self.A
            lu, piv = lu_factor(lhs, check_finite=False)
            if np.any(np.diag(lu) == 0):
                raise StepFailureError(t, dt)
            factor = (lu, piv)
        
        self._cache[key] = factor
        return factor
    
    def solve(self, theta: float, dt: float, rhs: NDArray, t: float = 0.) -> NDArray:
        """
        Solve (I - theta dt A) x = rhs.
        
        Raises
        ------
        StepFailureError
            If the system is singular.
        """
        
        factor = self._factor(theta, dt, t)
        try:
            if self.tridiagonal:
                x = solve_banded((1, 1), factor, rhs, check_finite=False)
            else:
                x = lu_solve(factor, rhs, check_finite=False)
        except (LinAlgError, ValueError) as e:
            raise StepFailureError(t, dt, f'[GOALSTEP] Singular step system at t={t!r}, dt={dt!r}: {e}') from e
        if not np.all(np.isfinite(x)):
            raise StepFailureError(t, dt)
        return x


def theta_step_linear(
    A: NDArray,
    g: Callable[[float], NDArray] | None,
    t: float,
    u: NDArray,
    dt: float,
    theta: float,
    solver: LinearThetaSolver | None = None,
    ) -> NDArray:
    """
    One theta-method step of u' = A u + g(t), solving
    (I - theta dt A) u+ = (I + (1 - theta) dt A) u + dt (theta g(t + dt) + (1 - theta) g(t)).
    
    Parameters
    ----------
    A : NDArray
        The system matrix.
    g : Callable[[float], NDArray] | None
        The forcing, or None for g = 0.
    t : float
        The current time.
    u : NDArray
        The current state.
    dt : float
        The step size.
    theta : float
        The implicitness parameter (1/2: Crank-Nicolson, 1: implicit Euler).
    solver : LinearThetaSolver | None, optional
        A solver for A, reused across steps of one run. A fresh one is built if None.
    
    Returns
    -------
    NDArray
        The state at t + dt.
    
    Raises
    ------
    StepFailureError
        If the step system is singular.
    """
    
    if solver is None:
        solver = LinearThetaSolver(A)
    
    u = np.atleast_1d(np.asarray(u, dtype=float))
    rhs = u + (1 - theta) * dt * (solver.A @ u)
    if g is not None:
        if theta == 1:
            rhs = rhs + dt * g(t + dt)
        elif theta == 0:
            rhs = rhs + dt * g(t)
        else:
            rhs = rhs + dt * (theta * g(t + dt) + (1 - theta) * g(t))
    
    return solver.solve(theta, dt, rhs, t)


def pair_step(
    problem: IvpProblem,
    t: float,
    u: NDArray,
    dt: float,
    pair: SchemePair,
    solver: LinearThetaSolver | None = None,
    ) -> StepOutput:
    """
    Advance the main scheme and its companion from the same state u.
    
    Parameters
    ----------
    problem : IvpProblem
        The problem. Theta pairs require a linear problem.
    t : float
        The current time.
    u : NDArray
        The current state.
    dt : float
        The step size.
    pair : SchemePair
        The scheme pair.
    solver : LinearThetaSolver | None, optional
        Solver cache for theta pairs.
    
    Returns
    -------
    StepOutput
        The step output. For theta pairs, the dense output at 1/2 is the endpoint average.
    
    Raises
    ------
    BlowUpError
        If a state becomes non-finite.
    StepFailureError
        If an implicit step system is singular.
    """
    
    if pair.kind == 'explicit-rk':
        return explicit_rk_step(problem, t, u, dt, pair)
    
    if not problem.is_linear:
        raise ConfigurationError(f'[GOALSTEP] Theta pairs need a linear problem; "{problem.name}" has a general right-hand side.')
    if solver is None:
        solver = LinearThetaSolver(problem.A)
    
    g = problem.g if problem.forcing is not None else None
    u_high = theta_step_linear(problem.A, g, t, u, dt, pair.theta, solver)
    u_low = theta_step_linear(problem.A, g, t, u, dt, pair.companion_theta, solver)
    if not (np.all(np.isfinite(u_high)) and np.all(np.isfinite(u_low))):
        raise BlowUpError(t, dt)
    
    return StepOutput(u_high=u_high, u_low=u_low, dense={.5: (u + u_high) / 2})
