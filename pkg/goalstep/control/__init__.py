from goalstep.control.controller import ControllerConfig, deadbeat_next_step, initial_step
from goalstep.control.estimators import (
    BaseEstimator,
    ClassicEstimator,
    EstimateRecord,
    GoalEstimator,
    classic_estimate,
    get_estimator,
    goal_estimate,
)
