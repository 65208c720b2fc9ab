from dataclasses import dataclass
from typing import Literal

from goalstep.control.estimators import EstimateRecord
from goalstep.utils.constants import F_MAX, F_MIN
from goalstep.utils.exceptions import ConfigurationError


@dataclass(frozen=True)
class ControllerConfig:
    """
    Settings of the deadbeat timestep controller.
    
    Parameters
    ----------
    tau : float
        The tolerance.
    p_hat : int
        The order of the error-estimating companion.
    variant : Literal['classic', 'goal'], optional
        The error estimator, by default 'goal'.
    f_min : float, optional
        Lower bound of the step ratio, by default 0.01.
    f_max : float, optional
        Upper bound of the step ratio, by default 3.
    limiter_enabled : bool, optional
        Whether the step ratio is confined to [f_min, f_max], by default True.
    norm : Literal['l2', 'max'], optional
        Vector norm of the classic estimator, by default 'l2'.
    initial_step_rule : Literal['power', 'tolerance'], optional
        Rule for the first step, tau^(1 / (p_hat + 1)) ('power') or tau ('tolerance'), by default 'power'.
    """
    
    tau: float
    p_hat: int
    variant: Literal['classic', 'goal'] = 'goal'
    f_min: float = F_MIN
    f_max: float = F_MAX
    limiter_enabled: bool = True
    norm: Literal['l2', 'max'] = 'l2'
    initial_step_rule: Literal['power', 'tolerance'] = 'power'
    
    def validate(self) -> None:
        """
        Raises
        ------
        ConfigurationError
            If any setting is out of range.
        """
        
        if not self.tau > 0:
            raise ConfigurationError(f'[GOALSTEP] tau must be positive (got {self.tau}).')
        if self.p_hat < 1:
            raise ConfigurationError(f'[GOALSTEP] p_hat must be at least 1 (got {self.p_hat}).')
        if not 0 < self.f_min < 1 < self.f_max:
            raise ConfigurationError(f'[GOALSTEP] Limiter bounds must satisfy 0 < f_min < 1 < f_max (got f_min={self.f_min}, f_max={self.f_max}).')
        if self.variant not in ('classic', 'goal'):
            raise ConfigurationError(f'[GOALSTEP] Unknown estimator variant "{self.variant}".')
        if self.norm not in ('l2', 'max'):
            raise ConfigurationError(f'[GOALSTEP] Unknown norm "{self.norm}".')
        if self.initial_step_rule not in ('power', 'tolerance'):
            raise ConfigurationError(f'[GOALSTEP] Unknown initial step rule "{self.initial_step_rule}".')


def deadbeat_next_step(dt: float, est: EstimateRecord, cfg: ControllerConfig) -> float:
    """
    Deadbeat controller dt_next = dt * (tau / est)^(1 / (p_hat + 1)), optionally limited to
    dt * [f_min, f_max]. A zero estimate uses the ratio f_max, with or without the limiter.
    
    Parameters
    ----------
    dt : float
        The current step.
    est : EstimateRecord
        The error estimate of the current step.
    cfg : ControllerConfig
        The controller settings.
    
    Returns
    -------
    float
        The next step.
    """
    
    if not dt > 0:
        raise ValueError(f'[GOALSTEP] dt must be positive (got {dt}).')
    
    if est.zero_flag or est.value == 0:
        ind = cfg.f_max
    else:
        ind = (cfg.tau / est.value)**(1 / (cfg.p_hat + 1))
    
    if cfg.limiter_enabled:
        ind = min(cfg.f_max, max(cfg.f_min, ind))
    
    return dt * ind


def initial_step(
    tau: float,
    p_hat: int,
    span: float | None = None,
    rule: Literal['power', 'tolerance'] = 'power',
    ) -> float:
    """
    Initial timestep tau^(1 / (p_hat + 1)), or tau itself for the 'tolerance' rule, clamped to the length of the time
    window.
    
    Parameters
    ----------
    tau : float
        The tolerance.
    p_hat : int
        The companion order.
    span : float | None, optional
        te - t0, by default None (no clamping).
    rule : Literal['power', 'tolerance'], optional
        The rule, by default 'power'.
    
    Returns
    -------
    float
        The initial step.
    """
    
    if not tau > 0:
        raise ValueError(f'[GOALSTEP] tau must be positive (got {tau}).')
    
    if rule == 'power':
        dt = tau**(1 / (p_hat + 1))
    elif rule == 'tolerance':
        dt = tau
    else:
        raise ConfigurationError(f'[GOALSTEP] Unknown initial step rule "{rule}".')
    
    if span is not None and dt > span:
        dt = span
    
    return dt
