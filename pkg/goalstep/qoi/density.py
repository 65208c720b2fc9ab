from abc import ABC, abstractmethod
from typing import Literal, Tuple

import numpy as np
from numpy.typing import NDArray

from goalstep.problems import IvpProblem, MolGrid1d
from goalstep.utils.exceptions import ConfigurationError


class DensityFunction(ABC):
    """
    Base class for QoI densities j(t, u). The QoI is the integral of j(t, u(t)) over the time window.
    """
    
    label: str = 'custom'
    linear_weights: NDArray | None = None
    
    @abstractmethod
    def __call__(self, t: float, u: NDArray) -> float:
        """
        Evaluate j(t, u).
        
        Parameters
        ----------
        t : float
            The time.
        u : NDArray
            The state.
        
        Returns
        -------
        float
            The density value.
        """
        
        pass
    
    def series(self, times: NDArray, states: NDArray) -> NDArray:
        """
        Evaluate j along a trajectory, one state per row.
        """
        
        return np.array([self(t, u) for t, u in zip(times, states)])
    
    def difference(self, t: float, u_a: NDArray, u_b: NDArray) -> float:
        """
        j(t, u_a) - j(t, u_b).
        """
        
        return self(t, u_a) - self(t, u_b)


class LinearDensity(DensityFunction):
    """
    Linear density j(t, u) = w^T u with nonnegative weights.
    """
    
    def __init__(self, weights: NDArray, label: str = 'linear'):
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        if np.any(weights < 0):
            raise ValueError('[GOALSTEP] Linear density weights must be nonnegative.')
        self.linear_weights = weights
        self.label = label
    
    def __call__(self, t: float, u: NDArray) -> float:
        return float(self.linear_weights @ u)
    
    def series(self, times: NDArray, states: NDArray) -> NDArray:
        return np.asarray(states) @ self.linear_weights
    
    def difference(self, t: float, u_a: NDArray, u_b: NDArray) -> float:
        return float(self.linear_weights @ (u_a - u_b))


class TimeWeightedLinearDensity(DensityFunction):
    """
    Time-dependent density j(t, u) = s(t) w^T u with s(t) = t or exp(-t). Not of the form w^T u, so
    `linear_weights` is None.
    """
    
    def __init__(
        self,
        weights: NDArray,
        time_weight: Literal['t', 'exp(-t)'],
        label: str = 'time-weighted',
        ):
        if time_weight not in ('t', 'exp(-t)'):
            raise ConfigurationError(f'[GOALSTEP] Unknown time weight "{time_weight}".')
        self.weights = np.atleast_1d(np.asarray(weights, dtype=float))
        self.time_weight = time_weight
        self.label = label
    
    def scale(self, t: float | NDArray) -> float | NDArray:
        if self.time_weight == 't':
            return t
        return np.exp(-np.asarray(t))
    
    def __call__(self, t: float, u: NDArray) -> float:
        return float(self.scale(t) * (self.weights @ u))
    
    def series(self, times: NDArray, states: NDArray) -> NDArray:
        return self.scale(np.asarray(times)) * (np.asarray(states) @ self.weights)
    
    def difference(self, t: float, u_a: NDArray, u_b: NDArray) -> float:
        return float(self.scale(t) * (self.weights @ (u_a - u_b)))


class ConstantDensity(DensityFunction):
    """
    j(t, u) = value, independent of the state.
    """
    
    def __init__(self, value: float = 1.):
        self.value = value
        self.label = f'const({value})'
    
    def __call__(self, t: float, u: NDArray) -> float:
        return self.value
    
    def series(self, times: NDArray, states: NDArray) -> NDArray:
        return np.full(len(times), self.value, dtype=float)
    
    def difference(self, t: float, u_a: NDArray, u_b: NDArray) -> float:
        return 0.


def window_mean_density(
    grid: MolGrid1d,
    window: Tuple[float, float],
    t0: float,
    te: float,
    ) -> LinearDensity:
    """
    Time-averaged mean over a spatial window, j(t, u) = sum_{i in W} u_i dx / (|W| (te - t0)), where |W| is the
    length covered by the window cells.
    """
    
    mask = grid.window_mask(window)
    if not mask.any():
        raise ValueError(f'[GOALSTEP] Window {window} contains no cells.')
    measure = mask.sum() * grid.dx
    weights = np.where(mask, grid.dx / (measure * (te - t0)), 0.)
    
    return LinearDensity(weights, label='window-mean')


DENSITY_LABELS = ('u1', 'u2', 'u1+u2', 't*u1', 'exp(-t)*u2', 'window-mean')


def get_density(label: str, problem: IvpProblem) -> DensityFunction:
    """
    Build a catalogued density for a problem.
    
    Parameters
    ----------
    label : str
        One of 'u1', 'u2', 'u1+u2', 't*u1', 'exp(-t)*u2' (problems with at least two components) or 'window-mean'
        (method-of-lines problems).
    problem : IvpProblem
        The problem the density is evaluated on.
    
    Returns
    -------
    DensityFunction
        The density.
    
    Raises
    ------
    ConfigurationError
        If the label is unknown or does not fit the problem.
    """
    
    if label not in DENSITY_LABELS:
        raise ConfigurationError(f'[GOALSTEP] Unknown density "{label}". Available densities: {list(DENSITY_LABELS)}.')
    
    if label == 'window-mean':
        if 'grid' not in problem.params:
            raise ConfigurationError(f'[GOALSTEP] Density "window-mean" needs a method-of-lines problem (got "{problem.name}").')
        return window_mean_density(problem.params['grid'], problem.params['obs_window'], problem.t0, problem.te)
    
    if problem.dimension < 2:
        raise ConfigurationError(f'[GOALSTEP] Density "{label}" needs at least two state components.')
    
    def unit(*indices: int) -> NDArray:
        w = np.zeros(problem.dimension)
        w[list(indices)] = 1.
        return w
    
    if label == 'u1':
        return LinearDensity(unit(0), label=label)
    if label == 'u2':
        return LinearDensity(unit(1), label=label)
    if label == 'u1+u2':
        return LinearDensity(unit(0, 1), label=label)
    if label == 't*u1':
        return TimeWeightedLinearDensity(unit(0), 't', label=label)
    return TimeWeightedLinearDensity(unit(1), 'exp(-t)', label=label)
