import unittest

import numpy as np

from goalstep.analysis.convergence import estimate_scheme_order
from goalstep.integrators import LinearThetaSolver, explicit_rk_step, pair_step, theta_step_linear
from goalstep.problems import IvpProblem, convdiff_1d, linear_problem, toy_problem
from goalstep.schemes import builtin_rk4_pair, builtin_theta_pair
from goalstep.utils.exceptions import BlowUpError, ConfigurationError, StepFailureError


def _zero_field(t, u):
    return np.zeros_like(u)


def _infinite_field(t, u):
    return np.full_like(u, np.inf)


class _MatrixField:
    
    def __init__(self, A):
        self.A = A
    
    def __call__(self, t, u):
        return self.A @ u


class TestExplicitStep(unittest.TestCase):
    
    def setUp(self):
        self.pair = builtin_rk4_pair()
        self.growth = linear_problem(np.array([[1.]]), np.array([1.]))
    
    def test_exponential_growth(self):
        """
        RK4 on u' = u reproduces the degree-4 Taylor polynomial of exp(0.1); the embedded solution is 1.105175.
        """
        
        step = explicit_rk_step(self.growth, 0., np.array([1.]), .1, self.pair)
        
        self.assertAlmostEqual(step.u_high[0], 1 + .1 + .005 + .1**3 / 6 + .1**4 / 24, places=15)
        self.assertAlmostEqual(step.u_high[0], 1.1051708, places=7)
        self.assertAlmostEqual(step.u_low[0], 1.105175, places=14)
    
    def test_shared_stage_derivatives(self):
        problem = toy_problem(-1.)
        u = problem.u0
        dt = .2
        
        step = explicit_rk_step(problem, 0., u, dt, self.pair)
        K = step.stage_derivatives
        
        self.assertEqual(K.shape, (4, 2))
        self.assertTrue(np.allclose(step.u_high, u + dt * (self.pair.tableau.b @ K), rtol=0, atol=1e-14))
        self.assertTrue(np.allclose(step.u_low, u + dt * (self.pair.embedded.b_hat @ K), rtol=0, atol=1e-14))
        self.assertTrue(np.allclose(step.dense[.5], u + dt * (self.pair.dense[0].b_star @ K), rtol=0, atol=1e-14))
    
    def test_zero_field(self):
        problem = IvpProblem(name='still', u0=np.array([1., -2.]), t0=0., te=1., f=_zero_field)
        
        for dt in (1e-3, .7):
            step = explicit_rk_step(problem, 0., problem.u0, dt, self.pair)
            self.assertTrue(np.array_equal(step.u_high, problem.u0))
            self.assertTrue(np.array_equal(step.u_low, problem.u0))
            self.assertTrue(np.array_equal(step.dense[.5], problem.u0))
    
    def test_blow_up(self):
        problem = IvpProblem(name='inf', u0=np.array([1.]), t0=0., te=1., f=_infinite_field)
        
        with self.assertRaises(BlowUpError) as context:
            explicit_rk_step(problem, .25, problem.u0, .1, self.pair)
        
        self.assertEqual(context.exception.t, .25)
        self.assertEqual(context.exception.dt, .1)
    
    def test_rejects_implicit_pair_and_bad_step(self):
        with self.assertRaises(ConfigurationError):
            explicit_rk_step(self.growth, 0., np.array([1.]), .1, builtin_theta_pair())
        with self.assertRaises(ValueError):
            explicit_rk_step(self.growth, 0., np.array([1.]), 0., self.pair)
    
    def test_linear_form_matches_closure(self):
        """
        A problem given by its matrix steps exactly like the same problem given as a right-hand side closure.
        """
        
        A = np.array([[-1., 1.], [0., -3.]])
        u0 = np.array([1., 1.])
        matrix_form = linear_problem(A, u0, 0., 2.)
        closure_form = IvpProblem(name='closure', u0=u0, t0=0., te=2., f=_MatrixField(A))
        
        a = explicit_rk_step(matrix_form, .3, u0, .1, self.pair)
        b = explicit_rk_step(closure_form, .3, u0, .1, self.pair)
        
        self.assertTrue(np.allclose(a.u_high, b.u_high, rtol=0, atol=1e-14))
        self.assertTrue(np.allclose(a.u_low, b.u_low, rtol=0, atol=1e-14))
    
    def test_deterministic(self):
        problem = toy_problem(-100.)
        
        a = explicit_rk_step(problem, 0., problem.u0, .01, self.pair)
        b = explicit_rk_step(problem, 0., problem.u0, .01, self.pair)
        
        self.assertTrue(np.array_equal(a.u_high, b.u_high))
        self.assertTrue(np.array_equal(a.u_low, b.u_low))
        self.assertTrue(np.array_equal(a.dense[.5], b.dense[.5]))


class TestThetaStep(unittest.TestCase):
    
    def test_scalar_decay(self):
        A = np.array([[-1.]])
        u = np.array([1.])
        
        self.assertAlmostEqual(theta_step_linear(A, None, 0., u, .1, .5)[0], .95 / 1.05, places=15)
        self.assertAlmostEqual(theta_step_linear(A, None, 0., u, .1, .5)[0], 0.9047619, places=7)
        self.assertAlmostEqual(theta_step_linear(A, None, 0., u, .1, 1.)[0], 1 / 1.1, places=15)
    
    def test_identity_flow(self):
        A = np.zeros((3, 3))
        u = np.array([1., -2., 3.])
        
        for theta in (.5, 1.):
            for dt in (1e-3, 10.):
                self.assertTrue(np.array_equal(theta_step_linear(A, None, 0., u, dt, theta), u))
    
    def test_constant_forcing(self):
        """
        u' = 1 is integrated exactly by every theta method.
        """
        
        A = np.zeros((1, 1))
        for theta in (.5, 1.):
            u_next = theta_step_linear(A, lambda t: np.array([1.]), 0., np.array([2.]), .25, theta)
            self.assertAlmostEqual(u_next[0], 2.25, places=15)
    
    def test_singular_system(self):
        A = np.array([[2.]])
        
        with self.assertRaises(StepFailureError) as context:
            theta_step_linear(A, None, 1., np.array([1.]), .5, 1.)
        
        self.assertEqual(context.exception.dt, .5)
    
    def test_banded_solver_matches_dense(self):
        """
        The tridiagonal path solves the same system as a dense solve.
        """
        
        A = convdiff_1d().A
        solver = LinearThetaSolver(A)
        rhs = np.sin(np.arange(A.shape[0]))
        
        self.assertTrue(solver.tridiagonal)
        self.assertFalse(LinearThetaSolver(toy_problem(-1.).A).tridiagonal)
        
        for theta, dt in ((.5, .1), (1., .37)):
            expected = np.linalg.solve(np.eye(A.shape[0]) - theta * dt * A, rhs)
            self.assertTrue(np.allclose(solver.solve(theta, dt, rhs), expected, rtol=1e-12, atol=1e-12))


class TestPairStep(unittest.TestCase):
    
    def test_theta_pair_on_toy(self):
        """
        The decoupled second row is scalar implicit Euler for the companion.
        """
        
        problem = toy_problem(-1.)
        
        step = pair_step(problem, 0., problem.u0, .1, builtin_theta_pair())
        
        self.assertAlmostEqual(step.u_low[1], 1 / 1.1, places=15)
        self.assertAlmostEqual(step.u_high[1], .95 / 1.05, places=15)
        self.assertTrue(np.allclose(step.dense[.5], (problem.u0 + step.u_high) / 2, rtol=0, atol=1e-16))
    
    def test_zero_dynamics(self):
        problem = linear_problem(np.zeros((2, 2)), np.array([1., 2.]))
        
        for pair in (builtin_theta_pair(), builtin_rk4_pair()):
            step = pair_step(problem, 0., problem.u0, .5, pair)
            self.assertTrue(np.array_equal(step.u_high, step.u_low))
    
    def test_theta_pair_needs_linear_problem(self):
        problem = IvpProblem(name='still', u0=np.array([1.]), t0=0., te=1., f=_zero_field)
        
        with self.assertRaises(ConfigurationError):
            pair_step(problem, 0., problem.u0, .1, builtin_theta_pair())
    
    def test_rk4_difference_is_fourth_order(self):
        """
        |u_high - u_low| shrinks by 16 per step halving on the autonomous toy problem.
        """
        
        pair = builtin_rk4_pair()
        problem = toy_problem(-1.)
        
        differences = []
        for dt in (.1, .05):
            step = pair_step(problem, 0., problem.u0, dt, pair)
            differences.append(np.linalg.norm(step.u_high - step.u_low))
        
        ratio = differences[0] / differences[1]
        self.assertGreaterEqual(ratio, 14)
        self.assertLessEqual(ratio, 18)
    
    def test_global_convergence_orders(self):
        problem = toy_problem(-1.)
        
        self.assertAlmostEqual(estimate_scheme_order(problem, builtin_rk4_pair(), 64), 4., delta=.1)
        self.assertAlmostEqual(estimate_scheme_order(problem, builtin_theta_pair(), 128), 2., delta=.1)


if __name__ == '__main__':
    unittest.main()
