from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Literal

import numpy as np

from goalstep.integrators import StepOutput
from goalstep.qoi.density import DensityFunction
from goalstep.utils.exceptions import ConfigurationError


@dataclass(frozen=True)
class EstimateRecord:
    """
    A local error estimate.
    
    Parameters
    ----------
    value : float
        The estimate (nonnegative).
    variant : str
        'classic' or 'goal'.
    zero_flag : bool
        Set when the estimate is exactly zero.
    """
    
    value: float
    variant: str
    zero_flag: bool


def classic_estimate(step: StepOutput, norm: Literal['l2', 'max'] = 'l2') -> EstimateRecord:
    """
    Norm-based local error estimate |u_low - u_high|.
    
    Parameters
    ----------
    step : StepOutput
        The step.
    norm : Literal['l2', 'max'], optional
        The vector norm, by default 'l2'.
    
    Returns
    -------
    EstimateRecord
        The estimate.
    """
    
    difference = step.u_low - step.u_high
    if norm == 'l2':
        value = float(np.linalg.norm(difference))
    elif norm == 'max':
        value = float(np.max(np.abs(difference)))
    else:
        raise ConfigurationError(f'[GOALSTEP] Unknown norm "{norm}".')
    
    return EstimateRecord(value=value, variant='classic', zero_flag=value == 0)


def goal_estimate(j: DensityFunction, t_next: float, step: StepOutput) -> EstimateRecord:
    """
    Goal-oriented local error estimate |j(t_next, u_low) - j(t_next, u_high)|.
    
    Parameters
    ----------
    j : DensityFunction
        The QoI density.
    t_next : float
        The end time of the step.
    step : StepOutput
        The step.
    
    Returns
    -------
    EstimateRecord
        The estimate.
    """
    
    value = abs(j.difference(t_next, step.u_low, step.u_high))
    return EstimateRecord(value=value, variant='goal', zero_flag=value == 0)


class BaseEstimator(ABC):
    """
    Base class for local error estimators used by the adaptive driver.
    """
    
    variant: str
    
    @abstractmethod
    def __call__(self, t_next: float, step: StepOutput) -> EstimateRecord:
        """
        Estimate the local error of a step ending at t_next.
        
        Parameters
        ----------
        t_next : float
            The end time of the step.
        step : StepOutput
            The step.
        
        Returns
        -------
        EstimateRecord
            The estimate.
        """
        
        pass


class ClassicEstimator(BaseEstimator):
    
    variant = 'classic'
    
    def __init__(self, norm: Literal['l2', 'max'] = 'l2'):
        self.norm = norm
    
    def __call__(self, t_next: float, step: StepOutput) -> EstimateRecord:
        return classic_estimate(step, self.norm)


class GoalEstimator(BaseEstimator):
    
    variant = 'goal'
    
    def __init__(self, density: DensityFunction):
        self.density = density
    
    def __call__(self, t_next: float, step: StepOutput) -> EstimateRecord:
        return goal_estimate(self.density, t_next, step)


def get_estimator(
    variant: Literal['classic', 'goal'],
    density: DensityFunction,
    norm: Literal['l2', 'max'] = 'l2',
    ) -> BaseEstimator:
    """
    Build the estimator of a controller variant.
    """
    
    if variant == 'classic':
        return ClassicEstimator(norm)
    if variant == 'goal':
        return GoalEstimator(density)
    raise ConfigurationError(f'[GOALSTEP] Unknown estimator variant "{variant}".')
