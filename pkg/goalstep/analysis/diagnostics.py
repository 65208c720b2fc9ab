from typing import Tuple

import numpy as np

from goalstep.solver import RunReport


def cusp_diagnostic(report: RunReport, window: Tuple[float, float]) -> Tuple[float, float]:
    """
    Locate the largest step inside a time window.
    
    Parameters
    ----------
    report : RunReport
        A run with at least 10 steps.
    window : Tuple[float, float]
        The window [t_lo, t_hi] searched for step start times.
    
    Returns
    -------
    Tuple[float, float]
        The start time of the largest step in the window and the ratio of that step to the median step of the run.
    
    Raises
    ------
    ValueError
        If the run is too short or no step starts in the window.
    """
    
    if report.n_steps < 10:
        raise ValueError(f'[GOALSTEP] The cusp diagnostic needs at least 10 steps (got {report.n_steps}).')
    
    inside = np.nonzero((report.times >= window[0]) & (report.times <= window[1]))[0]
    if inside.size == 0:
        raise ValueError(f'[GOALSTEP] No step starts in the window {tuple(window)}.')
    
    peak = inside[np.argmax(report.dt[inside])]
    
    return float(report.times[peak]), float(report.dt[peak] / np.median(report.dt))
