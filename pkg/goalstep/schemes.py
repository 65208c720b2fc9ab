from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Tuple

import numpy as np
from numpy.typing import NDArray
import pandas as pd

from goalstep.utils.constants import ORDER_CONDITION_TOL, TABLEAU_TOL
from goalstep.utils.exceptions import ConfigurationError, UnsupportedOrderError


MAX_SUPPORTED_ORDER = 4


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """
    Butcher tableau of an explicit Runge-Kutta scheme.
    
    Parameters
    ----------
    a : NDArray
        The stage coefficient matrix (strictly lower triangular).
    c : NDArray
        The stage nodes.
    b : NDArray
        The main weights.
    order_p : int
        The classical order of the scheme.
    """
    
    a: NDArray
    c: NDArray
    b: NDArray
    order_p: int
    
    @property
    def stage_count(self) -> int:
        return int(self.b.size)
    
    def validate(self) -> None:
        """
        Check shapes, row-sum consistency, weight normalisation and the order conditions through `order_p`.
        
        Raises
        ------
        ConfigurationError
            If any invariant is violated.
        """
        
        s = self.stage_count
        if s < 1:
            raise ConfigurationError('[GOALSTEP] A tableau needs at least one stage.')
        if self.a.shape != (s, s) or self.c.shape != (s,):
            raise ConfigurationError(f'[GOALSTEP] Inconsistent tableau shapes: a={self.a.shape}, c={self.c.shape}, b={self.b.shape}.')
        if np.any(np.triu(self.a) != 0):
            raise ConfigurationError('[GOALSTEP] Explicit tableaus must have a strictly lower triangular coefficient matrix.')
        if np.any(self.c < 0) or np.any(self.c > 1):
            raise ConfigurationError('[GOALSTEP] Stage nodes must lie in [0, 1].')
        if np.max(np.abs(self.a.sum(axis=1) - self.c)) > TABLEAU_TOL:
            raise ConfigurationError('[GOALSTEP] Row sums of a must equal the stage nodes c.')
        if abs(self.b.sum() - 1) > TABLEAU_TOL:
            raise ConfigurationError(f'[GOALSTEP] Main weights must sum to 1 (got {self.b.sum()!r}).')
        
        report = verify_order_conditions(self.b, self, gamma=1., up_to_order=self.order_p)
        if not report.passed:
            raise ConfigurationError(f'[GOALSTEP] Tableau fails order conditions: {report.failed_names()}.')


@dataclass(frozen=True, eq=False)
class EmbeddedWeights:
    """
    Weights of the embedded lower-order companion.
    
    Parameters
    ----------
    b_hat : NDArray
        The embedded weights.
    order_p_hat : int
        The order the controller works with.
    condition_order : int
        The order through which the general (non-autonomous) order conditions hold. Equal to `order_p_hat` unless
        the companion gains an order on autonomous linear problems.
    """
    
    b_hat: NDArray
    order_p_hat: int
    condition_order: int
    
    def validate(self, tableau: ButcherTableau) -> None:
        if self.b_hat.shape != tableau.b.shape:
            raise ConfigurationError('[GOALSTEP] Embedded weights must have one entry per stage.')
        if not 1 <= self.order_p_hat < tableau.order_p:
            raise ConfigurationError('[GOALSTEP] The embedded order must satisfy 1 <= p_hat < p.')
        if abs(self.b_hat.sum() - 1) > TABLEAU_TOL:
            raise ConfigurationError(f'[GOALSTEP] Embedded weights must sum to 1 (got {self.b_hat.sum()!r}).')
        
        report = verify_order_conditions(self.b_hat, tableau, gamma=1., up_to_order=self.condition_order)
        if not report.passed:
            raise ConfigurationError(f'[GOALSTEP] Embedded weights fail order conditions: {report.failed_names()}.')
        
        if self.condition_order < MAX_SUPPORTED_ORDER:
            above = verify_order_conditions(self.b_hat, tableau, gamma=1., up_to_order=self.condition_order + 1)
            if above.passed:
                raise ConfigurationError(f'[GOALSTEP] Embedded weights satisfy order {self.condition_order + 1}; the stated order is too low.')


@dataclass(frozen=True, eq=False)
class DenseWeights:
    """
    Dense-output weights producing the solution at t + gamma * dt from the stage derivatives.
    """
    
    gamma: float
    b_star: NDArray
    order: int
    
    def validate(self, tableau: ButcherTableau) -> None:
        if not 0 < self.gamma <= 1:
            raise ConfigurationError(f'[GOALSTEP] Dense-output fraction must lie in (0, 1] (got {self.gamma}).')
        if self.b_star.shape != tableau.b.shape:
            raise ConfigurationError('[GOALSTEP] Dense weights must have one entry per stage.')
        if abs(self.b_star.sum() - self.gamma) > TABLEAU_TOL:
            raise ConfigurationError(f'[GOALSTEP] Dense weights must sum to gamma={self.gamma} (got {self.b_star.sum()!r}).')
        
        report = verify_order_conditions(self.b_star, tableau, gamma=self.gamma, up_to_order=self.order)
        if not report.passed:
            raise ConfigurationError(f'[GOALSTEP] Dense weights at gamma={self.gamma} fail order conditions: {report.failed_names()}.')


@dataclass(frozen=True, eq=False)
class SchemePair:
    """
    A one-step method of order p with an embedded companion of order p_hat and optional dense output.
    
    Parameters
    ----------
    name : str
        The catalog name of the pair.
    kind : Literal['explicit-rk', 'theta-method']
        The scheme family.
    tableau : ButcherTableau | None, optional
        The tableau (explicit case).
    embedded : EmbeddedWeights | None, optional
        The embedded weights (explicit case).
    dense : Tuple[DenseWeights, ...], optional
        Dense-output weight sets (explicit case).
    theta : float | None, optional
        The main theta value (theta case).
    companion_theta : float | None, optional
        The companion theta value (theta case).
    """
    
    name: str
    kind: Literal['explicit-rk', 'theta-method']
    tableau: ButcherTableau | None = None
    embedded: EmbeddedWeights | None = None
    dense: Tuple[DenseWeights, ...] = field(default_factory=tuple)
    theta: float | None = None
    companion_theta: float | None = None
    
    @property
    def order_p(self) -> int:
        if self.kind == 'explicit-rk':
            return self.tableau.order_p
        return 2 if self.theta == 0.5 else 1
    
    @property
    def order_p_hat(self) -> int:
        if self.kind == 'explicit-rk':
            return self.embedded.order_p_hat
        return 2 if self.companion_theta == 0.5 else 1
    
    @property
    def dense_fractions(self) -> Tuple[float, ...]:
        if self.kind == 'explicit-rk':
            return tuple(d.gamma for d in self.dense)
        # endpoint linear interpolation
        return (0.5,)
    
    def dense_order(self, gamma: float) -> int:
        """
        Order of the dense output at fraction `gamma`, or 0 if the pair provides none there.
        """
        
        if self.kind == 'explicit-rk':
            for d in self.dense:
                if np.isclose(d.gamma, gamma, rtol=0, atol=TABLEAU_TOL):
                    return d.order
            return 0
        return 1 if np.isclose(gamma, 0.5) else 0
    
    def validate(self) -> None:
        """
        Check every descriptor invariant of the pair.
        
        Raises
        ------
        ConfigurationError
            If any invariant is violated.
        """
        
        if self.kind == 'explicit-rk':
            if self.tableau is None or self.embedded is None:
                raise ConfigurationError('[GOALSTEP] Explicit pairs need a tableau and embedded weights.')
            self.tableau.validate()
            self.embedded.validate(self.tableau)
            for d in self.dense:
                d.validate(self.tableau)
        elif self.kind == 'theta-method':
            for value in (self.theta, self.companion_theta):
                if value is None or not 0 <= value <= 1:
                    raise ConfigurationError(f'[GOALSTEP] Theta values must lie in [0, 1] (got {value}).')
        else:
            raise ConfigurationError(f'[GOALSTEP] Unknown scheme kind "{self.kind}".')


@dataclass(frozen=True)
class OrderCondition:
    """
    Result of a single gamma-scaled order condition.
    """
    
    name: str
    order: int
    value: float
    target: float
    
    @property
    def residual(self) -> float:
        return abs(self.value - self.target)
    
    @property
    def passed(self) -> bool:
        return self.residual < ORDER_CONDITION_TOL


@dataclass(frozen=True)
class OrderConditionReport:
    """
    All order conditions checked for one weight vector.
    """
    
    gamma: float
    conditions: Tuple[OrderCondition, ...]
    
    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)
    
    def failed_names(self) -> List[str]:
        return [c.name for c in self.conditions if not c.passed]
    
    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'condition': [c.name for c in self.conditions],
            'order': [c.order for c in self.conditions],
            'value': [c.value for c in self.conditions],
            'target': [c.target for c in self.conditions],
            'residual': [c.residual for c in self.conditions],
            'passed': [c.passed for c in self.conditions],
        })


# (name, order, sum over stages, denominator of gamma^order)
_CONDITIONS: List[Tuple[str, int, Callable[[NDArray, NDArray, NDArray], float], float]] = [
    ('sum(b)', 1, lambda b, a, c: b.sum(), 1.),
    ('sum(b*c)', 2, lambda b, a, c: b @ c, 2.),
    ('sum(b*c^2)', 3, lambda b, a, c: b @ c**2, 3.),
    ('sum(b*(a@c))', 3, lambda b, a, c: b @ (a @ c), 6.),
    ('sum(b*c^3)', 4, lambda b, a, c: b @ c**3, 4.),
    ('sum(b*c*(a@c))', 4, lambda b, a, c: b @ (c * (a @ c)), 8.),
    ('sum(b*(a@c^2))', 4, lambda b, a, c: b @ (a @ c**2), 12.),
    ('sum(b*(a@a@c))', 4, lambda b, a, c: b @ (a @ (a @ c)), 24.),
]


def verify_order_conditions(
    weights: NDArray,
    tableau: ButcherTableau,
    gamma: float = 1.,
    up_to_order: int | None = None,
    ) -> OrderConditionReport:
    """
    Evaluate the gamma-scaled order conditions of a weight vector on a tableau. The right-hand side of every
    condition of order q is multiplied by gamma^q, so the same checks serve main, embedded and dense weights.
    
    Parameters
    ----------
    weights : NDArray
        The stage weights to check.
    tableau : ButcherTableau
        The tableau providing the stage coefficients and nodes.
    gamma : float, optional
        The step fraction the weights produce the solution at, by default 1.
    up_to_order : int | None, optional
        The highest order to check, by default `tableau.order_p`.
    
    Returns
    -------
    OrderConditionReport
        The per-condition values, targets and residuals.
    
    Raises
    ------
    UnsupportedOrderError
        If `up_to_order` exceeds 4.
    """
    
    if up_to_order is None:
        up_to_order = tableau.order_p
    if up_to_order > MAX_SUPPORTED_ORDER:
        raise UnsupportedOrderError(f'[GOALSTEP] Order conditions are only available up to order {MAX_SUPPORTED_ORDER} (requested {up_to_order}).')
    
    b = np.asarray(weights, dtype=float)
    conditions = tuple(
        OrderCondition(
            name=name,
            order=order,
            value=float(evaluate(b, tableau.a, tableau.c)),
            target=gamma**order / denominator,
            )
        for name, order, evaluate, denominator in _CONDITIONS
        if order <= up_to_order
        )
    
    return OrderConditionReport(gamma=gamma, conditions=conditions)


def builtin_rk4_pair() -> SchemePair:
    """
    The classical Runge-Kutta scheme with embedded weights 1/3 (1, 1, 0, 1) and dense output
    1/24 (5, 4, 4, -1) at the step midpoint.
    
    Returns
    -------
    SchemePair
        The RK4 pair, (p, p_hat) = (4, 3).
    """
    
    a = np.array([
        [0., 0., 0., 0.],
        [.5, 0., 0., 0.],
        [0., .5, 0., 0.],
        [0., 0., 1., 0.],
    ])
    c = np.array([0., .5, .5, 1.])
    b = np.array([1., 2., 2., 1.]) / 6
    
    tableau = ButcherTableau(a=a, c=c, b=b, order_p=4)
    # second order in general, third order for autonomous linear systems
    embedded = EmbeddedWeights(b_hat=np.array([1., 1., 0., 1.]) / 3, order_p_hat=3, condition_order=2)
    dense = (DenseWeights(gamma=.5, b_star=np.array([5., 4., 4., -1.]) / 24, order=3),)
    
    return SchemePair(name='rk4', kind='explicit-rk', tableau=tableau, embedded=embedded, dense=dense)


def builtin_theta_pair() -> SchemePair:
    """
    Crank-Nicolson (theta = 1/2) with implicit Euler (theta = 1) as the error-estimating companion.
    
    Returns
    -------
    SchemePair
        The theta pair, (p, p_hat) = (2, 1).
    """
    
    return SchemePair(name='theta', kind='theta-method', theta=.5, companion_theta=1.)


SCHEMES: Dict[str, Callable[[], SchemePair]] = {
    'rk4': builtin_rk4_pair,
    'theta': builtin_theta_pair,
}


def get_scheme(name: str) -> SchemePair:
    """
    Look up a built-in scheme pair by name.
    
    Raises
    ------
    ConfigurationError
        If the name is not in the catalog.
    """
    
    if name not in SCHEMES:
        raise ConfigurationError(f'[GOALSTEP] Unknown scheme "{name}". Available schemes: {sorted(SCHEMES)}.')
    return SCHEMES[name]()
