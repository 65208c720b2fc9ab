from contextlib import redirect_stderr, redirect_stdout
from dataclasses import replace
import io
import json
import os
import tempfile
import unittest
import warnings

import numpy as np
import pandas as pd

from goalstep.cli import cmd_check, main, run_checks
from goalstep.config import ExperimentConfig
from goalstep.control.controller import ControllerConfig
from goalstep.problems import toy_problem
from goalstep.qoi.density import get_density
from goalstep.qoi.quadrature import TRAPEZOID
from goalstep.schemes import DenseWeights, builtin_rk4_pair, builtin_theta_pair
from goalstep.solver import adaptive_solve
from goalstep.utils.exceptions import ConfigurationError
from goalstep.utils.logging import recursive_log


def _main(argv):
    """
    Run the CLI with captured output. Returns the exit code, stdout and stderr.
    """
    
    stdout, stderr = io.StringIO(), io.StringIO()
    with redirect_stdout(stdout), redirect_stderr(stderr), warnings.catch_warnings():
        warnings.simplefilter('ignore')
        code = main(argv)
    return code, stdout.getvalue(), stderr.getvalue()


def _footer(path):
    with open(path, 'r') as file:
        lines = [line.strip() for line in file if line.startswith('#')]
    return dict(line[2:].split('=', 1) for line in lines)


class TestRun(unittest.TestCase):
    
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name
    
    def tearDown(self):
        self.tmp.cleanup()
    
    def test_unknown_problem(self):
        code, _, stderr = _main(['run', '--problem', 'heat-2d', '--out', self.out])
        
        self.assertEqual(code, 2)
        self.assertIn('heat-2d', stderr)
    
    def test_summary_round_trip(self):
        code, _, _ = _main(['run', '--tau', '1e-5', '--out', self.out])
        self.assertEqual(code, 0)
        
        summary = pd.read_csv(os.path.join(self.out, 'run_summary.csv'), float_precision='round_trip')
        steps = pd.read_csv(os.path.join(self.out, 'run_steps.csv'), float_precision='round_trip')
        
        problem = toy_problem(-1.)
        report = adaptive_solve(problem, builtin_theta_pair(), get_density('u2', problem), TRAPEZOID,
                                ControllerConfig(tau=1e-5, p_hat=1), store_states=False)
        
        self.assertEqual(list(summary.columns), ['tau', 'N', 'J_h', 'e_J', 'e_sol_te', 'wall_ms'])
        self.assertEqual(summary['N'].iloc[0], report.n_steps)
        self.assertEqual(summary['J_h'].iloc[0], report.J_h)
        self.assertEqual(summary['e_J'].iloc[0], report.e_J)
        self.assertEqual(summary['e_sol_te'].iloc[0], report.e_sol_te)
        self.assertEqual(list(steps.columns), ['t', 'dt', 'est', 'zero_flag'])
        self.assertTrue(np.array_equal(steps['dt'].to_numpy(), report.dt))
    
    def test_repeated_runs_are_identical(self):
        second = os.path.join(self.out, 'second')
        
        _main(['run', '--tau', '1e-6', '--out', self.out])
        _main(['run', '--tau', '1e-6', '--out', second])
        
        with open(os.path.join(self.out, 'run_steps.csv'), 'rb') as a, open(os.path.join(second, 'run_steps.csv'), 'rb') as b:
            self.assertEqual(a.read(), b.read())
    
    def test_trajectory_and_logs(self):
        code, _, _ = _main(['run', '--tau', '1e-4', '--store-trajectory', '--out', self.out])
        self.assertEqual(code, 0)
        
        trajectory = pd.read_csv(os.path.join(self.out, 'run_trajectory.csv'))
        steps = pd.read_csv(os.path.join(self.out, 'run_steps.csv'))
        
        self.assertEqual(list(trajectory.columns), ['t', 'u1', 'u2'])
        self.assertEqual(len(trajectory), len(steps) + 1)
        self.assertTrue(os.path.isfile(os.path.join(self.out, 'info.log')))
        with open(os.path.join(self.out, 'experiment_parameters.json'), 'r') as file:
            params = json.load(file)
        self.assertEqual(params['command'], 'run')
        self.assertEqual(params['tau'], [1e-4])
    
    def test_step_limit_exit_code(self):
        code, _, stderr = _main(['run', '--tau', '1e-8', '--max-steps', '10', '--out', self.out])
        
        self.assertEqual(code, 4)
        self.assertIn('10 steps', stderr)


class TestSweepCommand(unittest.TestCase):
    
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name
    
    def tearDown(self):
        self.tmp.cleanup()
    
    def test_single_tolerance_rejected(self):
        code, _, _ = _main(['sweep', '--tau', '1e-6', '--out', self.out])
        
        self.assertEqual(code, 2)
    
    def test_sweep_csv(self):
        taus = ['1e-7', '1e-4', '1e-9', '1e-5', '1e-8', '1e-6']
        argv = ['sweep', '--out', self.out]
        for tau in taus:
            argv += ['--tau', tau]
        
        code, _, _ = _main(argv)
        self.assertEqual(code, 0)
        
        path = os.path.join(self.out, 'sweep.csv')
        frame = pd.read_csv(path, comment='#')
        footer = _footer(path)
        
        self.assertEqual(list(frame.columns), ['tau', 'n_steps', 'J_h', 'err_J', 'err_sol_te', 'wall_ms'])
        self.assertTrue(np.all(np.diff(frame['tau']) < 0))
        self.assertAlmostEqual(float(footer['slope']), 1., delta=.15)
        self.assertAlmostEqual(float(footer['J_ref']), 1 - np.exp(-2), places=15)
    
    def test_config_file_with_override(self):
        path = os.path.join(self.out, 'config.json')
        with open(path, 'w') as file:
            json.dump({'problem': 'toy', 'tau': [1e-3, 1e-4, 1e-5], 'variant': 'classic', 'k': -2.}, file)
        
        code, _, _ = _main(['sweep', '--config', path, '--variant', 'goal', '--out', self.out])
        self.assertEqual(code, 0)
        
        with open(os.path.join(self.out, 'experiment_parameters.json'), 'r') as file:
            params = json.load(file)
        self.assertEqual(params['variant'], 'goal')
        self.assertEqual(params['k'], -2.)
        self.assertEqual(params['tau'], [1e-3, 1e-4, 1e-5])
        self.assertEqual(len(pd.read_csv(os.path.join(self.out, 'sweep.csv'), comment='#')), 3)
    
    def test_unknown_config_key(self):
        path = os.path.join(self.out, 'config.json')
        with open(path, 'w') as file:
            json.dump({'problem': 'toy', 'tolerance': 1e-3}, file)
        
        code, _, stderr = _main(['run', '--config', path, '--out', self.out])
        
        self.assertEqual(code, 2)
        self.assertIn('tolerance', stderr)
    
    def test_reference_run_step_limit(self):
        """
        Convection-diffusion has no closed-form QoI, so the sweep first runs a reference solve that hits the step limit.
        """
        
        argv = ['sweep', '--problem', 'convdiff-fwd', '--tau', '1e-3', '--tau', '1e-4', '--max-steps', '10',
                '--out', self.out]
        
        code, _, stderr = _main(argv)
        
        self.assertEqual(code, 4)
        self.assertIn('10 steps', stderr)
        self.assertFalse(os.path.isfile(os.path.join(self.out, 'sweep.csv')))


class TestDwrCommand(unittest.TestCase):
    
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name
    
    def tearDown(self):
        self.tmp.cleanup()
    
    def _trace(self):
        return pd.read_csv(os.path.join(self.out, 'dwr_trace.csv'))
    
    def test_loose_tolerance(self):
        code, _, _ = _main(['dwr', '--density', 'u1', '--tau', '1e3', '--out', self.out])
        
        self.assertEqual(code, 0)
        self.assertEqual(len(self._trace()), 1)
        self.assertEqual(self._trace()['cells'].iloc[0], 10)
    
    def test_convergence(self):
        code, _, _ = _main(['dwr', '--density', 'u1', '--tau', '1e-6', '--out', self.out])
        trace = self._trace()
        
        self.assertEqual(code, 0)
        self.assertEqual(list(trace.columns), ['iteration', 'cells', 'eta', 'J_h', 'e_J', 'effectivity'])
        self.assertLessEqual(trace['eta'].iloc[-1], 1e-6)
        self.assertTrue(np.all(np.diff(trace['cells']) > 0))
    
    def test_non_convergence(self):
        code, _, _ = _main(['dwr', '--density', 'u1', '--tau', '1e-14', '--max-iterations', '1', '--out', self.out])
        
        self.assertEqual(code, 3)
        self.assertEqual(len(self._trace()), 2)
    
    def test_nonlinear_density_rejected(self):
        code, _, _ = _main(['dwr', '--density', 't*u1', '--out', self.out])
        
        self.assertEqual(code, 2)


class TestCompareCommand(unittest.TestCase):
    
    def test_compare_csv(self):
        with tempfile.TemporaryDirectory() as out:
            code, _, _ = _main(['compare', '--density', 'u1', '--tau', '1e-3', '--tau', '1e-4', '--out', out])
            frame = pd.read_csv(os.path.join(out, 'compare.csv'))
        
        self.assertEqual(code, 0)
        self.assertEqual(list(frame['method']), ['classic', 'classic', 'goal', 'goal', 'dwr', 'dwr'])


class TestCheckCommand(unittest.TestCase):
    
    def test_pristine_build(self):
        stdout = io.StringIO()
        with redirect_stdout(stdout):
            code = cmd_check()
        
        self.assertEqual(code, 0)
        self.assertIn('||A||_w = 2', stdout.getvalue())
        self.assertTrue(run_checks()['passed'].all())
    
    def test_tampered_dense_weights(self):
        """
        A perturbed dense-output weight fails the gamma-scaled order conditions and is named in the output.
        """
        
        pair = builtin_rk4_pair()
        bad = DenseWeights(gamma=.5, b_star=np.array([5., 4.1, 4., -1.1]) / 24, order=3)
        tampered = replace(pair, dense=(bad,))
        
        stdout = io.StringIO()
        with redirect_stdout(stdout):
            code = cmd_check(tampered)
        
        self.assertEqual(code, 1)
        self.assertIn('FAILED: rk4 dense(gamma=0.5): sum(b*c)', stdout.getvalue())
    
    def test_main_entry(self):
        code, stdout, _ = _main(['check'])
        
        self.assertEqual(code, 0)
        self.assertIn('checks passed', stdout)


class TestConfig(unittest.TestCase):
    
    def test_defaults(self):
        cfg = ExperimentConfig()
        cfg.validate()
        
        self.assertEqual(cfg.density_label, 'u2')
        self.assertEqual(cfg.quadrature_id, 'trapezoid')
        self.assertEqual(replace(cfg, scheme='rk4').quadrature_id, 'simpson')
        self.assertEqual(replace(cfg, problem='convdiff-fwd').density_label, 'window-mean')
    
    def test_merged_ignores_unset_flags(self):
        cfg = ExperimentConfig(variant='classic').merged({'variant': None, 'jobs': 3, 'command': 'sweep'})
        
        self.assertEqual(cfg.variant, 'classic')
        self.assertEqual(cfg.jobs, 3)
    
    def test_invalid(self):
        invalid = [
            ExperimentConfig(scheme='dopri5'),
            ExperimentConfig(density='u3'),
            ExperimentConfig(quadrature='gauss'),
            ExperimentConfig(variant='dwr'),
            ExperimentConfig(tau=[1e-6, 0.]),
            ExperimentConfig(jobs=0),
        ]
        for cfg in invalid:
            with self.assertRaises(ConfigurationError):
                cfg.validate()
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(tau=[1e-6]).validate(min_taus=2)
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(k=1.).build_problem()
    
    def test_scalar_tau_in_dict(self):
        self.assertEqual(ExperimentConfig.from_dict({'tau': 1e-4}).tau, [1e-4])


class TestRecursiveLog(unittest.TestCase):
    
    def test_numpy_and_dataclasses(self):
        logged = recursive_log({'cfg': ControllerConfig(tau=1e-6, p_hat=1), 'w': np.array([1., 0.]), 'n': np.int64(3)})
        
        self.assertEqual(logged['cfg']['tau'], 1e-6)
        self.assertEqual(logged['w'], [1., 0.])
        self.assertEqual(logged['n'], 3)
        json.dumps(logged)


if __name__ == '__main__':
    unittest.main()
