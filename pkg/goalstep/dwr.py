from dataclasses import dataclass, field
from logging import Logger
import math
from typing import List, Literal, Tuple
import warnings

import numpy as np
from numpy.typing import NDArray
import pandas as pd

from goalstep.integrators import LinearThetaSolver, theta_step_linear
from goalstep.problems import IvpProblem
from goalstep.qoi.density import DensityFunction, LinearDensity
from goalstep.qoi.quadrature import TRAPEZOID, accumulate
from goalstep.utils.exceptions import ConfigurationError, NonConvergenceError


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """
    Time grid t0 = s_0 < s_1 < ... < s_M = te with cells I_n = [s_n, s_{n+1}].
    """
    
    nodes: NDArray
    
    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError('[GOALSTEP] A time grid needs at least two nodes.')
        if np.any(np.diff(nodes) <= 0):
            raise ValueError('[GOALSTEP] Time grid nodes must be strictly increasing.')
        object.__setattr__(self, 'nodes', nodes)
    
    @classmethod
    def uniform(cls, t0: float, te: float, n_cells: int) -> 'TimeGrid':
        return cls(np.linspace(t0, te, n_cells + 1))
    
    @property
    def n_cells(self) -> int:
        return int(self.nodes.size - 1)
    
    @property
    def dt(self) -> NDArray:
        return np.diff(self.nodes)
    
    @property
    def midpoints(self) -> NDArray:
        return (self.nodes[:-1] + self.nodes[1:]) / 2
    
    def refined(self, factor: int = 2) -> 'TimeGrid':
        """
        Split every cell into `factor` equal parts.
        """
        
        fractions = np.arange(factor) / factor
        inner = self.nodes[:-1, None] + fractions[None, :] * self.dt[:, None]
        return TimeGrid(np.append(inner.ravel(), self.nodes[-1]))
    
    def is_nested_in(self, other: 'TimeGrid') -> bool:
        """
        Whether every node of this grid is also a node of `other`.
        """
        
        return bool(np.all(np.isin(self.nodes, other.nodes)))


@dataclass(frozen=True)
class DwrConfig:
    """
    Settings of the dual-weighted-residual refinement loop.
    
    Parameters
    ----------
    tau : float
        Target tolerance for the estimate.
    refine_fraction : float, optional
        Fraction X of cells bisected per iteration, by default 0.8.
    initial_cells : int, optional
        Cells of the initial uniform grid, by default 10.
    fine_factor : int, optional
        Subdivision of the grid the enriched adjoint is solved on, by default 2.
    max_iterations : int, optional
        Refinement guard, by default 40.
    coarse_adjoint : Literal['cell', 'interpolated'], optional
        How the coarse adjoint enters the weight, by default 'cell' (constant per cell at its midpoint value).
    """
    
    tau: float
    refine_fraction: float = .8
    initial_cells: int = 10
    fine_factor: int = 2
    max_iterations: int = 40
    coarse_adjoint: Literal['cell', 'interpolated'] = 'cell'
    
    def validate(self) -> None:
        if not 0 < self.refine_fraction <= 1:
            raise ConfigurationError(f'[GOALSTEP] refine_fraction must lie in (0, 1] (got {self.refine_fraction}).')
        if not self.tau > 0:
            raise ConfigurationError(f'[GOALSTEP] tau must be positive (got {self.tau}).')
        if self.initial_cells < 1:
            raise ConfigurationError('[GOALSTEP] initial_cells must be at least 1.')
        if self.fine_factor < 2 or self.fine_factor % 2:
            raise ConfigurationError(f'[GOALSTEP] fine_factor must be an even integer >= 2 (got {self.fine_factor}).')
        if self.max_iterations < 0:
            raise ConfigurationError('[GOALSTEP] max_iterations must be nonnegative.')
        if self.coarse_adjoint not in ('cell', 'interpolated'):
            raise ConfigurationError(f'[GOALSTEP] Unknown coarse adjoint weighting "{self.coarse_adjoint}".')


def _require_linear(problem: IvpProblem) -> None:
    if not problem.is_linear:
        raise ConfigurationError(f'[GOALSTEP] DWR needs a linear problem; "{problem.name}" has a general right-hand side.')


def dwr_forward(problem: IvpProblem, grid: TimeGrid) -> NDArray:
    """
    Crank-Nicolson solution of a linear problem on a time grid.
    
    Parameters
    ----------
    problem : IvpProblem
        A linear problem.
    grid : TimeGrid
        The grid, spanning the problem's time window.
    
    Returns
    -------
    NDArray
        Nodal states, one row per grid node.
    """
    
    _require_linear(problem)
    solver = LinearThetaSolver(problem.A)
    g = problem.g if problem.forcing is not None else None
    
    u_h = np.zeros((grid.nodes.size, problem.dimension))
    u_h[0] = problem.u0
    for n in range(grid.n_cells):
        u_h[n + 1] = theta_step_linear(problem.A, g, grid.nodes[n], u_h[n], grid.dt[n], .5, solver)
    
    return u_h


class _ConstantForcing:
    
    def __init__(self, value: NDArray):
        self.value = value
    
    def __call__(self, t: float) -> NDArray:
        return self.value


def dwr_adjoint(problem: IvpProblem, w: NDArray, grid: TimeGrid) -> NDArray:
    """
    Crank-Nicolson solution of the adjoint problem -z' = A^T z + w, z(te) = 0, marching backwards on the grid.
    
    Parameters
    ----------
    problem : IvpProblem
        A linear problem.
    w : NDArray
        Weights of the linear density j(t, u) = w^T u.
    grid : TimeGrid
        The grid.
    
    Returns
    -------
    NDArray
        Nodal adjoint values, one row per grid node.
    """
    
    _require_linear(problem)
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.dimension,):
        raise ValueError(f'[GOALSTEP] Density weights have shape {w.shape}, expected ({problem.dimension},).')
    
    AT = problem.A.T
    solver = LinearThetaSolver(AT)
    forcing = _ConstantForcing(w)
    
    z_h = np.zeros((grid.nodes.size, problem.dimension))
    # in reversed time s = te - t the adjoint is an initial value problem z_s = A^T z + w
    for n in range(grid.n_cells - 1, -1, -1):
        z_h[n] = theta_step_linear(AT, forcing, 0., z_h[n + 1], grid.dt[n], .5, solver)
    
    return z_h


def dwr_estimate(
    problem: IvpProblem,
    u_h: NDArray,
    z_h: NDArray,
    z_h_plus: NDArray,
    grid: TimeGrid,
    coarse_adjoint: Literal['cell', 'interpolated'] = 'cell',
    ) -> Tuple[float, NDArray]:
    """
    Dual-weighted-residual estimate of the QoI error. On each cell the residual R(t) = (u_h' - A u_h - g) . (z+ - z_h)
    is sampled at both endpoints and the midpoint and integrated with the composite trapezoidal rule on the two
    half cells.
    
    Parameters
    ----------
    problem : IvpProblem
        The linear problem.
    u_h : NDArray
        Nodal forward solution on `grid`.
    z_h : NDArray
        Nodal adjoint on `grid`.
    z_h_plus : NDArray
        Nodal adjoint on `grid` refined by an even factor.
    grid : TimeGrid
        The grid.
    coarse_adjoint : Literal['cell', 'interpolated'], optional
        'cell' holds z_h at its midpoint value over each cell; 'interpolated' uses the nodal linear interpolant
        everywhere. By default 'cell'.
    
    Returns
    -------
    Tuple[float, NDArray]
        The total estimate and the per-cell estimates.
    
    Raises
    ------
    ValueError
        If the arrays do not match the grid.
    """
    
    M = grid.n_cells
    if u_h.shape[0] != M + 1 or z_h.shape[0] != M + 1:
        raise ValueError(f'[GOALSTEP] Forward and adjoint solutions need {M + 1} nodes (got {u_h.shape[0]} and {z_h.shape[0]}).')
    factor, remainder = divmod(z_h_plus.shape[0] - 1, M)
    if remainder or factor < 2 or factor % 2:
        raise ValueError(f'[GOALSTEP] The enriched adjoint has {z_h_plus.shape[0]} nodes, which is not an even refinement of {M} cells.')
    if coarse_adjoint not in ('cell', 'interpolated'):
        raise ConfigurationError(f'[GOALSTEP] Unknown coarse adjoint weighting "{coarse_adjoint}".')
    
    nodes = grid.nodes
    dts = grid.dt
    mids = grid.midpoints
    
    slope = np.diff(u_h, axis=0) / dts[:, None]
    u_mid = (u_h[:-1] + u_h[1:]) / 2
    
    def residual(t: NDArray, u: NDArray) -> NDArray:
        g = np.array([problem.g(ti) for ti in t])
        return slope - u @ problem.A.T - g
    
    r_left = residual(nodes[:-1], u_h[:-1])
    r_mid = residual(mids, u_mid)
    r_right = residual(nodes[1:], u_h[1:])
    
    zp_left = z_h_plus[:-1:factor]
    zp_mid = z_h_plus[factor // 2::factor]
    zp_right = z_h_plus[factor::factor]
    
    z_mid = (z_h[:-1] + z_h[1:]) / 2
    if coarse_adjoint == 'cell':
        z_left = z_right = z_mid
    else:
        z_left, z_right = z_h[:-1], z_h[1:]
    
    R_left = np.sum(r_left * (zp_left - z_left), axis=1)
    R_mid = np.sum(r_mid * (zp_mid - z_mid), axis=1)
    R_right = np.sum(r_right * (zp_right - z_right), axis=1)
    
    cell_etas = dts / 4 * np.abs(R_left + 2 * R_mid + R_right)
    
    return float(np.sum(cell_etas)), cell_etas


def dwr_refine(grid: TimeGrid, cell_etas: NDArray, X: float) -> TimeGrid:
    """
    Fixed-rate refinement: bisect the ceil(X M) cells with the largest estimates, ties broken towards earlier cells.
    
    Parameters
    ----------
    grid : TimeGrid
        The grid.
    cell_etas : NDArray
        Per-cell estimates.
    X : float
        Fraction of cells to refine, in (0, 1].
    
    Returns
    -------
    TimeGrid
        The refined grid.
    """
    
    cell_etas = np.asarray(cell_etas, dtype=float)
    if cell_etas.shape != (grid.n_cells,):
        raise ValueError(f'[GOALSTEP] Got {cell_etas.size} cell estimates for {grid.n_cells} cells.')
    if not 0 < X <= 1:
        raise ValueError(f'[GOALSTEP] X must lie in (0, 1] (got {X}).')
    
    n_refine = math.ceil(X * grid.n_cells - 1e-12)
    order = np.argsort(-cell_etas, kind='stable')
    chosen = order[:n_refine]
    
    return TimeGrid(np.sort(np.concatenate([grid.nodes, grid.midpoints[chosen]])))


@dataclass
class DwrResult:
    """
    Outcome of a DWR refinement loop.
    """
    
    grid: TimeGrid
    eta: float
    cell_etas: NDArray
    u_h: NDArray
    J_h: float
    trace: pd.DataFrame
    converged: bool
    grids: List[TimeGrid] = field(default_factory=list)
    tau: float | None = None
    
    def raise_for_convergence(self) -> None:
        """
        Raise NonConvergenceError if the loop stopped before meeting its tolerance.
        """
        
        if not self.converged:
            raise NonConvergenceError(f'[GOALSTEP] DWR loop stopped at eta={self.eta:.3e} with {self.grid.n_cells} cells (tau={self.tau}).')


def _as_density(density: DensityFunction | NDArray) -> LinearDensity:
    if isinstance(density, DensityFunction):
        if density.linear_weights is None:
            raise ConfigurationError(f'[GOALSTEP] DWR needs a linear density; "{density.label}" is not of the form w^T u.')
        return density
    return LinearDensity(density, label='custom')


def dwr_loop(
    problem: IvpProblem,
    density: DensityFunction | NDArray,
    cfg: DwrConfig,
    j_ref: float | None = None,
    logger: Logger | None = None,
    ) -> DwrResult:
    """
    Dual-weighted-residual loop: forward solve, adjoint solves on the grid and on its refinement, estimate, and
    fixed-rate refinement until the estimate meets the tolerance.
    
    Parameters
    ----------
    problem : IvpProblem
        A linear problem.
    density : DensityFunction | NDArray
        A linear density, or its weight vector.
    cfg : DwrConfig
        The loop settings.
    j_ref : float | None, optional
        Reference QoI for the error columns of the trace, by default the problem's oracle value if it has one.
    logger : Logger | None, optional
        Logger, by default None.
    
    Returns
    -------
    DwrResult
        The final grid and solution, the estimate, J_h on the final grid and the iteration trace (columns iteration,
        cells, eta, J_h, e_J, effectivity). `converged` is False if the tolerance was not met within
        `cfg.max_iterations` refinements.
    """
    
    cfg.validate()
    _require_linear(problem)
    density = _as_density(density)
    w = density.linear_weights
    
    if j_ref is None and problem.qoi_oracle is not None:
        j_ref = problem.qoi_oracle(density.label, problem.t0, problem.te)
    
    if logger:
        logger.info(f'[GOALSTEP] DWR loop: problem={problem.name}, density={density.label}, tau={cfg.tau}, X={cfg.refine_fraction}, initial cells={cfg.initial_cells}.')
    
    grid = TimeGrid.uniform(problem.t0, problem.te, cfg.initial_cells)
    grids = []
    rows = []
    converged = False
    
    for iteration in range(cfg.max_iterations + 1):
        grids.append(grid)
        
        u_h = dwr_forward(problem, grid)
        z_h = dwr_adjoint(problem, w, grid)
        z_h_plus = dwr_adjoint(problem, w, grid.refined(cfg.fine_factor))
        eta, cell_etas = dwr_estimate(problem, u_h, z_h, z_h_plus, grid, cfg.coarse_adjoint)
        J_h = accumulate(grid.nodes, u_h, density, TRAPEZOID)
        
        e_J = None if j_ref is None else abs(j_ref - J_h)
        rows.append({
            'iteration': iteration,
            'cells': grid.n_cells,
            'eta': eta,
            'J_h': J_h,
            'e_J': e_J,
            'effectivity': None if e_J is None or e_J == 0 else eta / e_J,
        })
        
        if logger:
            logger.info(f'[GOALSTEP] DWR iteration {iteration}: cells={grid.n_cells}, eta={eta:.3e}, J_h={J_h!r}.')
        
        if eta <= cfg.tau:
            converged = True
            break
        if iteration == cfg.max_iterations:
            break
        
        grid = dwr_refine(grid, cell_etas, cfg.refine_fraction)
    
    if not converged:
        message = f'[GOALSTEP] DWR loop did not reach eta <= {cfg.tau} within {cfg.max_iterations} refinements (eta={eta:.3e}).'
        if logger:
            logger.warning(message)
        warnings.warn(message)
    
    return DwrResult(
        grid=grid,
        eta=eta,
        cell_etas=cell_etas,
        u_h=u_h,
        J_h=J_h,
        trace=pd.DataFrame(rows, columns=['iteration', 'cells', 'eta', 'J_h', 'e_J', 'effectivity']),
        converged=converged,
        grids=grids,
        tau=cfg.tau,
        )
