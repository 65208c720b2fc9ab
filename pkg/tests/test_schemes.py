from dataclasses import replace
import unittest

import numpy as np

from goalstep.analysis.convergence import estimate_scheme_order
from goalstep.integrators import explicit_rk_step
from goalstep.problems import IvpProblem, toy_problem
from goalstep.schemes import (
    ButcherTableau,
    DenseWeights,
    builtin_rk4_pair,
    builtin_theta_pair,
    get_scheme,
    verify_order_conditions,
)
from goalstep.utils.exceptions import ConfigurationError, UnsupportedOrderError


def _t_squared(t, u):
    return np.array([t**2])


class TestOrderConditions(unittest.TestCase):
    
    def setUp(self):
        self.pair = builtin_rk4_pair()
        self.tableau = self.pair.tableau
    
    def test_rk4_main_weights(self):
        """
        The classical weights satisfy all conditions through order 4.
        """
        
        report = verify_order_conditions(np.array([1., 2., 2., 1.]) / 6, self.tableau, 1., 4)
        
        self.assertEqual(len(report.conditions), 8)
        self.assertTrue(report.passed)
        for cond in report.conditions:
            self.assertLess(cond.residual, 1e-15)
    
    def test_dense_weights_gamma_half(self):
        """
        b* = (5, 4, 4, -1) / 24 satisfies the gamma-scaled conditions through order 3 at gamma = 1/2.
        """
        
        report = verify_order_conditions(np.array([5., 4., 4., -1.]) / 24, self.tableau, .5, 3)
        values = {cond.name: cond.value for cond in report.conditions}
        
        self.assertTrue(report.passed)
        self.assertAlmostEqual(values['sum(b)'], 1 / 2, places=15)
        self.assertAlmostEqual(values['sum(b*c)'], 1 / 8, places=15)
        self.assertAlmostEqual(values['sum(b*c^2)'], 1 / 24, places=15)
        self.assertAlmostEqual(values['sum(b*(a@c))'], 1 / 48, places=15)
        for cond in report.conditions:
            self.assertLess(cond.residual, 1e-13)
    
    def test_embedded_weights_fail_at_order_three(self):
        """
        b_hat = (1, 1, 0, 1) / 3 passes orders 1 and 2, and sum(b c^2) misses 1/3 by 1/12.
        """
        
        report = verify_order_conditions(np.array([1., 1., 0., 1.]) / 3, self.tableau, 1., 3)
        by_name = {cond.name: cond for cond in report.conditions}
        
        self.assertTrue(by_name['sum(b)'].passed)
        self.assertTrue(by_name['sum(b*c)'].passed)
        self.assertFalse(by_name['sum(b*c^2)'].passed)
        self.assertAlmostEqual(by_name['sum(b*c^2)'].residual, 1 / 12, places=14)
        self.assertEqual(report.failed_names(), ['sum(b*c^2)'])
    
    def test_unsupported_order(self):
        with self.assertRaises(UnsupportedOrderError):
            verify_order_conditions(self.tableau.b, self.tableau, 1., 5)
    
    def test_report_frame(self):
        frame = verify_order_conditions(self.tableau.b, self.tableau).to_frame()
        
        self.assertEqual(list(frame.columns), ['condition', 'order', 'value', 'target', 'residual', 'passed'])
        self.assertTrue(frame['passed'].all())


class TestBuiltinPairs(unittest.TestCase):
    
    def test_rk4_pair(self):
        """
        The RK4 pair satisfies every descriptor invariant.
        """
        
        pair = builtin_rk4_pair()
        pair.validate()
        
        self.assertEqual(pair.order_p, 4)
        self.assertEqual(pair.order_p_hat, 3)
        self.assertTrue(np.allclose(pair.tableau.c, [0., .5, .5, 1.]))
        self.assertAlmostEqual(pair.embedded.b_hat.sum(), 1., places=14)
        self.assertEqual(pair.dense_fractions, (.5,))
        self.assertEqual(pair.dense_order(.5), 3)
        self.assertTrue(verify_order_conditions(pair.dense[0].b_star, pair.tableau, .5, 3).passed)
    
    def test_tampered_pairs_are_rejected(self):
        pair = builtin_rk4_pair()
        
        bad_dense = replace(pair, dense=(DenseWeights(.5, np.array([5., 4.1, 4., -1.1]) / 24, 3),))
        with self.assertRaises(ConfigurationError):
            bad_dense.validate()
        
        bad_tableau = ButcherTableau(a=pair.tableau.a, c=pair.tableau.c, b=np.array([1., 1., 1., 1.]) / 4, order_p=4)
        with self.assertRaises(ConfigurationError):
            bad_tableau.validate()
    
    def test_theta_pair(self):
        """
        Crank-Nicolson with an implicit Euler companion, orders 2 and 1 by step halving.
        """
        
        pair = builtin_theta_pair()
        pair.validate()
        problem = toy_problem(-1.)
        
        self.assertEqual(pair.theta, .5)
        self.assertEqual(pair.companion_theta, 1.)
        self.assertAlmostEqual(estimate_scheme_order(problem, pair, 256, 'high'), 2., delta=.05)
        self.assertAlmostEqual(estimate_scheme_order(problem, pair, 256, 'low'), 1., delta=.05)
    
    def test_catalog(self):
        self.assertEqual(get_scheme('rk4').name, 'rk4')
        self.assertEqual(get_scheme('theta').kind, 'theta-method')
        with self.assertRaises(ConfigurationError):
            get_scheme('dopri5')


class TestOneStepAccuracy(unittest.TestCase):
    
    def test_dense_output_midpoint_order(self):
        """
        The midpoint error of the dense output shrinks by ~16 when the step is halved.
        """
        
        pair = builtin_rk4_pair()
        problem = toy_problem(-1.)
        
        errors = []
        for dt in (.1, .05):
            step = explicit_rk_step(problem, 0., problem.u0, dt, pair)
            errors.append(np.linalg.norm(step.dense[.5] - problem.exact(.5 * dt)))
        
        ratio = errors[0] / errors[1]
        self.assertGreaterEqual(ratio, 14)
        self.assertLessEqual(ratio, 18)
    
    def test_embedded_order_autonomous(self):
        """
        On the autonomous toy problem the embedded solution has local error O(dt^4).
        """
        
        pair = builtin_rk4_pair()
        problem = toy_problem(-1.)
        
        errors = []
        for dt in (.1, .05):
            step = explicit_rk_step(problem, 0., problem.u0, dt, pair)
            errors.append(np.linalg.norm(step.u_low - problem.exact(dt)))
        
        ratio = errors[0] / errors[1]
        self.assertGreaterEqual(ratio, 14)
        self.assertLessEqual(ratio, 18)
    
    def test_embedded_order_non_autonomous(self):
        """
        For u' = t^2 the embedded solution has local error O(dt^3) (the sum(b c^2) condition fails).
        """
        
        pair = builtin_rk4_pair()
        problem = IvpProblem(name='t-squared', u0=np.array([0.]), t0=0., te=1., f=_t_squared)
        
        errors = []
        for dt in (.1, .05):
            step = explicit_rk_step(problem, 0., problem.u0, dt, pair)
            errors.append(abs(step.u_low[0] - dt**3 / 3))
        
        self.assertAlmostEqual(errors[0] / errors[1], 8., delta=.01)


if __name__ == '__main__':
    unittest.main()
