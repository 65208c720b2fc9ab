from dataclasses import dataclass, field, fields, replace
import json
from typing import Any, Dict, List, Tuple

from goalstep.control.controller import ControllerConfig
from goalstep.dwr import DwrConfig
from goalstep.problems import PROBLEMS, IvpProblem, get_problem
from goalstep.qoi.density import DENSITY_LABELS, DensityFunction, get_density
from goalstep.qoi.quadrature import QUADRATURES, QuadratureRule, get_quadrature
from goalstep.schemes import SCHEMES, SchemePair, get_scheme
from goalstep.utils.exceptions import ConfigurationError


@dataclass
class ExperimentConfig:
    """
    Flat experiment configuration, loadable from JSON. Every field can be overridden from the command line.
    
    Parameters
    ----------
    problem : str, optional
        Problem id, by default 'toy'.
    k : float, optional
        Toy stiffness, by default -1.
    a, gamma, c : float, optional
        Convection-diffusion parameters, by default 0.5, 0.01 and 0.15.
    n_cells : int, optional
        Convection-diffusion grid cells, by default 96.
    scheme : str, optional
        Scheme pair, by default 'theta'.
    density : str | None, optional
        Density label, by default 'window-mean' for convection-diffusion and 'u2' otherwise.
    quadrature : str | None, optional
        Quadrature rule, by default 'simpson' for RK4 and 'trapezoid' otherwise.
    variant : str, optional
        Estimator variant, by default 'goal'.
    tau : List[float], optional
        Tolerances, by default [1e-6].
    limiter : bool, optional
        Whether the step-ratio limiter is on, by default True.
    norm : str, optional
        Classic estimator norm, by default 'l2'.
    initial_step_rule : str, optional
        Initial step rule, by default 'power'.
    out : str, optional
        Output directory, by default 'goalstep_output'.
    jobs : int, optional
        Worker processes for sweeps, by default 1.
    store_trajectory : bool, optional
        Whether `run` also writes the state trajectory, by default False.
    max_steps : int, optional
        Step-count guard, by default 10**7.
    refine_fraction : float, optional
        DWR refinement fraction, by default 0.8.
    initial_cells : int, optional
        DWR initial cells, by default 10.
    max_iterations : int, optional
        DWR refinement guard, by default 40.
    """
    
    problem: str = 'toy'
    k: float = -1.
    a: float = .5
    gamma: float = .01
    c: float = .15
    n_cells: int = 96
    scheme: str = 'theta'
    density: str | None = None
    quadrature: str | None = None
    variant: str = 'goal'
    tau: List[float] = field(default_factory=lambda: [1e-6])
    limiter: bool = True
    norm: str = 'l2'
    initial_step_rule: str = 'power'
    out: str = 'goalstep_output'
    jobs: int = 1
    store_trajectory: bool = False
    max_steps: int = 10**7
    refine_fraction: float = .8
    initial_cells: int = 10
    max_iterations: int = 40
    
    @classmethod
    def keys(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))
    
    @classmethod
    def from_dict(cls, params: Dict[str, Any]) -> 'ExperimentConfig':
        unknown = sorted(set(params) - set(cls.keys()))
        if unknown:
            raise ConfigurationError(f'[GOALSTEP] Unknown configuration key(s): {unknown}.')
        params = dict(params)
        if 'tau' in params and not isinstance(params['tau'], list):
            params['tau'] = [params['tau']]
        return cls(**params)
    
    @classmethod
    def from_json(cls, path: str) -> 'ExperimentConfig':
        """
        Load a configuration from a flat JSON object.
        
        Raises
        ------
        ConfigurationError
            If the file cannot be read or contains unknown keys.
        """
        
        try:
            with open(path, 'r') as file:
                params = json.load(file)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f'[GOALSTEP] Could not read configuration file {path}: {e}') from e
        if not isinstance(params, dict):
            raise ConfigurationError(f'[GOALSTEP] Configuration file {path} must contain a JSON object.')
        
        return cls.from_dict(params)
    
    def merged(self, overrides: Dict[str, Any]) -> 'ExperimentConfig':
        """
        Copy of this configuration with every non-None override applied.
        """
        
        overrides = {key: value for key, value in overrides.items() if value is not None and key in self.keys()}
        return replace(self, **overrides)
    
    @property
    def density_label(self) -> str:
        if self.density is not None:
            return self.density
        return 'window-mean' if self.problem.startswith('convdiff') else 'u2'
    
    @property
    def quadrature_id(self) -> str:
        if self.quadrature is not None:
            return self.quadrature
        return 'simpson' if self.scheme == 'rk4' else 'trapezoid'
    
    def validate(self, min_taus: int = 1) -> None:
        """
        Check that every referenced id exists and the tolerance list is usable.
        
        Parameters
        ----------
        min_taus : int, optional
            Minimum number of tolerances, by default 1.
        
        Raises
        ------
        ConfigurationError
            If the configuration is invalid.
        """
        
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f'[GOALSTEP] Unknown problem id "{self.problem}". Available problems: {list(PROBLEMS)}.')
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f'[GOALSTEP] Unknown scheme "{self.scheme}". Available schemes: {sorted(SCHEMES)}.')
        if self.density_label not in DENSITY_LABELS:
            raise ConfigurationError(f'[GOALSTEP] Unknown density "{self.density_label}". Available densities: {list(DENSITY_LABELS)}.')
        if self.quadrature_id not in QUADRATURES:
            raise ConfigurationError(f'[GOALSTEP] Unknown quadrature "{self.quadrature_id}". Available rules: {sorted(QUADRATURES)}.')
        if self.variant not in ('classic', 'goal'):
            raise ConfigurationError(f'[GOALSTEP] Unknown variant "{self.variant}". Use "classic" or "goal".')
        if len(self.tau) < min_taus:
            raise ConfigurationError(f'[GOALSTEP] This command needs at least {min_taus} tolerance(s) (got {len(self.tau)}).')
        if any(not tau > 0 for tau in self.tau):
            raise ConfigurationError(f'[GOALSTEP] Tolerances must be positive (got {self.tau}).')
        if self.jobs < 1:
            raise ConfigurationError(f'[GOALSTEP] jobs must be at least 1 (got {self.jobs}).')
    
    def build_problem(self) -> IvpProblem:
        try:
            return get_problem(self.problem, k=self.k, a=self.a, gamma=self.gamma, c=self.c, n_cells=self.n_cells)
        except ConfigurationError:
            raise
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
    
    def build_pair(self) -> SchemePair:
        return get_scheme(self.scheme)
    
    def build_density(self, problem: IvpProblem) -> DensityFunction:
        return get_density(self.density_label, problem)
    
    def build_rule(self) -> QuadratureRule:
        return get_quadrature(self.quadrature_id)
    
    def controller_config(self, tau: float, pair: SchemePair) -> ControllerConfig:
        return ControllerConfig(
            tau=tau,
            p_hat=pair.order_p_hat,
            variant=self.variant,
            limiter_enabled=self.limiter,
            norm=self.norm,
            initial_step_rule=self.initial_step_rule,
            )
    
    def dwr_config(self, tau: float) -> DwrConfig:
        return DwrConfig(
            tau=tau,
            refine_fraction=self.refine_fraction,
            initial_cells=self.initial_cells,
            max_iterations=self.max_iterations,
            )
