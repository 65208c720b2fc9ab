from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Tuple

import numpy as np
from numpy.typing import NDArray

from goalstep.utils.exceptions import ConfigurationError


@dataclass(frozen=True, eq=False)
class IvpProblem:
    """
    An initial value problem u' = f(t, u), u(t0) = u0 on [t0, te], given either by a general right-hand side or in
    linear form u' = A u + g(t).
    
    Parameters
    ----------
    name : str
        The problem name.
    u0 : NDArray
        The initial state.
    t0 : float
        The start time.
    te : float
        The end time.
    f : Callable[[float, NDArray], NDArray] | None, optional
        The general right-hand side. Ignored when `A` is given.
    A : NDArray | None, optional
        The system matrix of a linear problem.
    forcing : Callable[[float], NDArray] | None, optional
        The forcing g(t) of a linear problem, by default None (g = 0).
    exact : Callable | None, optional
        Closed-form solution. Must provide `__call__(t)` and `derivative(t)`.
    qoi_oracle : Callable[[str, float, float], float | None] | None, optional
        Returns the exact QoI for a density label over [t0, te], or None if the label is not catalogued.
    params : Dict[str, Any], optional
        Construction parameters, kept for logging and for catalog lookups.
    """
    
    name: str
    u0: NDArray
    t0: float
    te: float
    f: Callable[[float, NDArray], NDArray] | None = None
    A: NDArray | None = None
    forcing: Callable[[float], NDArray] | None = None
    exact: Any = None
    qoi_oracle: Callable[[str, float, float], float | None] | None = None
    params: Dict[str, Any] = field(default_factory=dict)
    
    def __post_init__(self):
        if not self.te > self.t0:
            raise ValueError(f'[GOALSTEP] te must be greater than t0 (got t0={self.t0}, te={self.te}).')
        if self.f is None and self.A is None:
            raise ValueError('[GOALSTEP] A problem needs either a right-hand side f or a system matrix A.')
        if self.A is not None and self.A.shape != (self.dimension, self.dimension):
            raise ValueError(f'[GOALSTEP] A has shape {self.A.shape} but the state has dimension {self.dimension}.')
    
    @property
    def dimension(self) -> int:
        return int(np.asarray(self.u0).size)
    
    @property
    def is_linear(self) -> bool:
        return self.A is not None
    
    def g(self, t: float) -> NDArray:
        """
        The forcing of a linear problem at time t (zero if none is set).
        """
        
        if self.forcing is None:
            return np.zeros(self.dimension)
        return self.forcing(t)
    
    def rhs(self, t: float, u: NDArray) -> NDArray:
        """
        Evaluate the right-hand side f(t, u).
        """
        
        if self.A is not None:
            if self.forcing is None:
                return self.A @ u
            return self.A @ u + self.forcing(t)
        return np.asarray(self.f(t, u), dtype=float)
    
    def exact_residual(self, n_samples: int = 100) -> float:
        """
        Largest relative ODE residual of the exact solution over uniform sample times,
        max |u'(t) - f(t, u(t))| / (1 + |u(t)|) in the max-norm.
        
        Raises
        ------
        ValueError
            If the problem has no exact solution.
        """
        
        if self.exact is None:
            raise ValueError(f'[GOALSTEP] Problem "{self.name}" has no exact solution.')
        
        worst = 0.
        for t in np.linspace(self.t0, self.te, n_samples):
            u = self.exact(t)
            residual = np.max(np.abs(self.exact.derivative(t) - self.rhs(t, u)))
            worst = max(worst, residual / (1 + np.max(np.abs(u))))
        
        return float(worst)


class ToyExactSolution:
    """
    Closed-form solution of u1' = -u1 + u2, u2' = k u2, u(0) = (1, 1).
    """
    
    def __init__(self, k: float):
        self.k = k
    
    def __call__(self, t: float | NDArray) -> NDArray:
        t = np.asarray(t, dtype=float)
        k = self.k
        u2 = np.exp(k * t)
        if k == -1:
            u1 = (1 + t) * np.exp(-t)
        else:
            u1 = (1 - 1 / (k + 1)) * np.exp(-t) + np.exp(k * t) / (k + 1)
        return np.stack([u1, u2], axis=-1)
    
    def derivative(self, t: float | NDArray) -> NDArray:
        t = np.asarray(t, dtype=float)
        k = self.k
        du2 = k * np.exp(k * t)
        if k == -1:
            du1 = -t * np.exp(-t)
        else:
            du1 = -(1 - 1 / (k + 1)) * np.exp(-t) + k * np.exp(k * t) / (k + 1)
        return np.stack([du1, du2], axis=-1)


TOY_DENSITY_LABELS = ('u1', 'u2', 'u1+u2', 't*u1', 'exp(-t)*u2')


def _integral_exp(a: float, t0: float, te: float) -> float:
    """
    Integral of exp(a t) over [t0, te], a != 0.
    """
    
    return (np.exp(a * te) - np.exp(a * t0)) / a


def _integral_t_exp(a: float, t0: float, te: float) -> float:
    """
    Integral of t exp(a t) over [t0, te], a != 0.
    """
    
    antiderivative = lambda t: np.exp(a * t) * (t / a - 1 / a**2)
    return antiderivative(te) - antiderivative(t0)


def toy_exact_qoi(k: float, j_variant: str, t0: float = 0., te: float = 2.) -> float:
    """
    Exact QoI of the toy problem for a catalogued density, from the antiderivative of the closed-form solution.
    
    Parameters
    ----------
    k : float
        The stiffness parameter (k < 0).
    j_variant : str
        The density label, one of 'u1', 'u2', 'u1+u2', 't*u1' or 'exp(-t)*u2'.
    t0 : float, optional
        Lower integration limit, by default 0.
    te : float, optional
        Upper integration limit, by default 2.
    
    Returns
    -------
    float
        The integral of j(t, u(t)) over [t0, te].
    
    Raises
    ------
    ValueError
        If k >= 0.
    ConfigurationError
        If the density label is not catalogued.
    """
    
    if not k < 0:
        raise ValueError(f'[GOALSTEP] The toy problem requires k < 0 (got k={k}).')
    if j_variant not in TOY_DENSITY_LABELS:
        raise ConfigurationError(f'[GOALSTEP] No exact QoI for density "{j_variant}". Catalogued densities: {list(TOY_DENSITY_LABELS)}.')
    if te == t0:
        return 0.
    
    if j_variant == 'u2':
        return float(_integral_exp(k, t0, te))
    if j_variant == 'exp(-t)*u2':
        return float(_integral_exp(k - 1, t0, te))
    if j_variant == 'u1+u2':
        return toy_exact_qoi(k, 'u1', t0, te) + toy_exact_qoi(k, 'u2', t0, te)
    
    if k == -1:
        if j_variant == 'u1':
            antiderivative = lambda t: -(2 + t) * np.exp(-t)
        else:
            antiderivative = lambda t: -(t**2 + 3 * t + 3) * np.exp(-t)
        return float(antiderivative(te) - antiderivative(t0))
    
    alpha = 1 - 1 / (k + 1)
    if j_variant == 'u1':
        return float(alpha * _integral_exp(-1., t0, te) + _integral_exp(k, t0, te) / (k + 1))
    return float(alpha * _integral_t_exp(-1., t0, te) + _integral_t_exp(k, t0, te) / (k + 1))


class ToyQoiOracle:
    """
    Exact QoI lookup for the toy problem. Returns None for densities without a closed form.
    """
    
    def __init__(self, k: float):
        self.k = k
    
    def __call__(self, label: str, t0: float, te: float) -> float | None:
        if label not in TOY_DENSITY_LABELS:
            return None
        return toy_exact_qoi(self.k, label, t0, te)


def toy_problem(k: float = -1.) -> IvpProblem:
    """
    The linear toy problem u1' = -u1 + u2, u2' = k u2, u(0) = (1, 1) on [0, 2].
    
    Parameters
    ----------
    k : float, optional
        The stiffness of the second component, by default -1. Must be negative.
    
    Returns
    -------
    IvpProblem
        The toy problem with its exact solution and QoI oracle.
    
    Raises
    ------
    ValueError
        If k >= 0.
    """
    
    if not k < 0:
        raise ValueError(f'[GOALSTEP] The toy problem requires k < 0 (got k={k}).')
    
    return IvpProblem(
        name='toy',
        u0=np.array([1., 1.]),
        t0=0.,
        te=2.,
        A=np.array([[-1., 1.], [0., k]]),
        exact=ToyExactSolution(k),
        qoi_oracle=ToyQoiOracle(k),
        params={'k': k},
        )


def toy_goal_principal_error(t: float | NDArray) -> float | NDArray:
    """
    Principal error of the goal estimate for the toy problem with k = -1, j = u1 and implicit Euler as the companion,
    1/2 exp(-t) (t - 1). Vanishes at t = 1.
    """
    
    return .5 * np.exp(-t) * (t - 1)


def linear_problem(
    A: NDArray,
    u0: NDArray,
    t0: float = 0.,
    te: float = 1.,
    forcing: Callable[[float], NDArray] | None = None,
    exact: Any = None,
    name: str = 'linear',
    ) -> IvpProblem:
    """
    Convenience constructor for a linear problem u' = A u + g(t).
    """
    
    return IvpProblem(
        name=name,
        u0=np.atleast_1d(np.asarray(u0, dtype=float)),
        t0=t0,
        te=te,
        A=np.atleast_2d(np.asarray(A, dtype=float)),
        forcing=forcing,
        exact=exact,
        )


@dataclass(frozen=True, eq=False)
class MolGrid1d:
    """
    Uniform cell-centred grid on [x_left, x_right].
    """
    
    x_left: float
    x_right: float
    n_cells: int
    
    def __post_init__(self):
        if not self.x_right > self.x_left:
            raise ValueError('[GOALSTEP] x_right must be greater than x_left.')
        if self.n_cells < 8:
            raise ValueError(f'[GOALSTEP] A MOL grid needs at least 8 cells (got {self.n_cells}).')
    
    @property
    def dx(self) -> float:
        return (self.x_right - self.x_left) / self.n_cells
    
    @property
    def nodes(self) -> NDArray:
        return self.x_left + (np.arange(self.n_cells) + .5) * self.dx
    
    def window_mask(self, window: Tuple[float, float]) -> NDArray:
        """
        Boolean mask of the cells whose centres lie in the closed interval `window`.
        """
        
        x = self.nodes
        return (x >= window[0]) & (x <= window[1])


def spike_profile(t: float) -> float:
    """
    Source time profile: 5 t^3 on [0, 1), 5 (2 - t)^3 on [1, 2), 0 afterwards.
    """
    
    if t < 1:
        return 5 * t**3
    if t < 2:
        return 5 * (2 - t)**3
    return 0.


class WindowedSpikeSource:
    """
    Forcing g(t) = spike_profile(t) on the cells of a source window, zero elsewhere.
    """
    
    def __init__(self, mask: NDArray):
        self.mask = np.asarray(mask, dtype=float)
    
    def __call__(self, t: float) -> NDArray:
        return spike_profile(t) * self.mask


def convdiff_matrix(grid: MolGrid1d, a: float, gamma: float, c: float, sign: int) -> NDArray:
    """
    Finite-volume matrix of u' = gamma u_xx - a sign u_x with the Robin condition grad(u).n = -c u at both ends.
    Diffusion uses central differences, convection first-order upwinding. The result is tridiagonal.
    """
    
    n = grid.n_cells
    dx = grid.dx
    A = np.zeros((n, n))
    
    # diffusion
    d = gamma / dx**2
    for i in range(n - 1):
        A[i, i] -= d
        A[i, i + 1] += d
        A[i + 1, i + 1] -= d
        A[i + 1, i] += d
    # Robin boundary fluxes
    A[0, 0] -= gamma * c / dx
    A[-1, -1] -= gamma * c / dx
    
    # convection
    v = a * sign
    if v > 0:
        for i in range(1, n):
            A[i, i] -= v / dx
            A[i, i - 1] += v / dx
        # inflow at the left end: u_x = c u
        A[0, 0] -= v * c
    elif v < 0:
        for i in range(n - 1):
            A[i, i] += v / dx
            A[i, i + 1] -= v / dx
        # inflow at the right end: u_x = -c u
        A[-1, -1] += v * c
    
    return A


def convdiff_1d(
    a: float = .5,
    gamma: float = .01,
    c: float = .15,
    grid: MolGrid1d | None = None,
    source_window: Tuple[float, float] = (.25, .75),
    obs_window: Tuple[float, float] = (2.25, 2.75),
    sign: int = 1,
    ) -> IvpProblem:
    """
    One-dimensional method-of-lines convection-diffusion problem with a spike-shaped source.
    
    Parameters
    ----------
    a : float, optional
        Convection speed, by default 0.5.
    gamma : float, optional
        Diffusivity, by default 0.01.
    c : float, optional
        Robin boundary coefficient, by default 0.15.
    grid : MolGrid1d | None, optional
        The spatial grid, by default 96 cells on [0, 3].
    source_window : Tuple[float, float], optional
        Interval carrying the source, by default (0.25, 0.75).
    obs_window : Tuple[float, float], optional
        Interval of the observation QoI, by default (2.25, 2.75).
    sign : int, optional
        Convection direction, +1 (towards the observation window) or -1, by default +1.
    
    Returns
    -------
    IvpProblem
        The linear MOL system on [0, 6] for sign = +1 and on [0, 3] for sign = -1.
    """
    
    if grid is None:
        grid = MolGrid1d(0., 3., 96)
    if grid.x_left > 0 or grid.x_right < 3:
        raise ValueError('[GOALSTEP] The convection-diffusion grid must cover [0, 3].')
    if not gamma > 0:
        raise ValueError(f'[GOALSTEP] Diffusivity must be positive (got {gamma}).')
    if sign not in (1, -1):
        raise ValueError(f'[GOALSTEP] sign must be +1 or -1 (got {sign}).')
    
    source_mask = grid.window_mask(source_window)
    if not source_mask.any() or not grid.window_mask(obs_window).any():
        raise ValueError('[GOALSTEP] Source and observation windows must each contain at least one cell.')
    
    return IvpProblem(
        name='convdiff-fwd' if sign == 1 else 'convdiff-bwd',
        u0=np.ones(grid.n_cells),
        t0=0.,
        te=6. if sign == 1 else 3.,
        A=convdiff_matrix(grid, a, gamma, c, sign),
        forcing=WindowedSpikeSource(source_mask),
        params={
            'a': a,
            'gamma': gamma,
            'c': c,
            'sign': sign,
            'grid': grid,
            'source_window': tuple(source_window),
            'obs_window': tuple(obs_window),
            },
        )


PROBLEMS = ('toy', 'convdiff-fwd', 'convdiff-bwd')


def get_problem(
    problem_id: str,
    k: float = -1.,
    a: float = .5,
    gamma: float = .01,
    c: float = .15,
    n_cells: int = 96,
    ) -> IvpProblem:
    """
    Build a catalogued problem by id.
    
    Parameters
    ----------
    problem_id : str
        One of 'toy', 'convdiff-fwd' or 'convdiff-bwd'.
    k : float, optional
        Toy stiffness, by default -1.
    a, gamma, c : float, optional
        Convection-diffusion parameters, by default 0.5, 0.01 and 0.15.
    n_cells : int, optional
        Convection-diffusion grid cells on [0, 3], by default 96.
    
    Returns
    -------
    IvpProblem
        The problem.
    
    Raises
    ------
    ConfigurationError
        If the id is unknown.
    """
    
    if problem_id == 'toy':
        return toy_problem(k)
    if problem_id in ('convdiff-fwd', 'convdiff-bwd'):
        return convdiff_1d(
            a=a,
            gamma=gamma,
            c=c,
            grid=MolGrid1d(0., 3., n_cells),
            sign=1 if problem_id == 'convdiff-fwd' else -1,
            )
    raise ConfigurationError(f'[GOALSTEP] Unknown problem id "{problem_id}". Available problems: {list(PROBLEMS)}.')
