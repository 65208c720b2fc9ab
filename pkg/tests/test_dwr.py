import unittest

import numpy as np

from goalstep.dwr import DwrConfig, TimeGrid, dwr_adjoint, dwr_estimate, dwr_forward, dwr_loop, dwr_refine
from goalstep.problems import IvpProblem, linear_problem, toy_exact_qoi, toy_problem
from goalstep.qoi.density import get_density
from goalstep.qoi.quadrature import TRAPEZOID, accumulate
from goalstep.utils.exceptions import ConfigurationError, NonConvergenceError


def _zero_field(t, u):
    return np.zeros_like(u)


class TestTimeGrid(unittest.TestCase):
    
    def test_uniform_and_refined(self):
        grid = TimeGrid.uniform(0., 2., 4)
        fine = grid.refined(2)
        
        self.assertEqual(grid.n_cells, 4)
        self.assertTrue(np.allclose(grid.dt, .5))
        self.assertTrue(np.allclose(grid.midpoints, [.25, .75, 1.25, 1.75]))
        self.assertEqual(fine.n_cells, 8)
        self.assertTrue(grid.is_nested_in(fine))
        self.assertFalse(fine.is_nested_in(grid))
    
    def test_invalid_nodes(self):
        with self.assertRaises(ValueError):
            TimeGrid(np.array([0.]))
        with self.assertRaises(ValueError):
            TimeGrid(np.array([0., .5, .5, 1.]))


class TestForwardAndAdjoint(unittest.TestCase):
    
    def test_forward_one_cell(self):
        problem = linear_problem(np.array([[-1.]]), np.array([1.]), 0., .1)
        
        u_h = dwr_forward(problem, TimeGrid.uniform(0., .1, 1))
        
        self.assertAlmostEqual(u_h[1, 0], .95 / 1.05, places=15)
    
    def test_forward_identity_flow(self):
        problem = linear_problem(np.zeros((2, 2)), np.array([1., 2.]), 0., 1.)
        
        u_h = dwr_forward(problem, TimeGrid.uniform(0., 1., 5))
        
        self.assertTrue(np.array_equal(u_h, np.tile([1., 2.], (6, 1))))
    
    def test_forward_second_order(self):
        problem = toy_problem(-1.)
        
        errors = []
        for n_cells in (10, 20):
            u_h = dwr_forward(problem, TimeGrid.uniform(0., 2., n_cells))
            errors.append(np.linalg.norm(u_h[-1] - problem.exact(2.)))
        
        self.assertLess(errors[0], 1e-2)
        self.assertAlmostEqual(errors[0] / errors[1], 4., delta=.5)
    
    def test_adjoint_terminal_value_and_zero_weights(self):
        problem = toy_problem(-1.)
        grid = TimeGrid.uniform(0., 2., 7)
        
        self.assertTrue(np.array_equal(dwr_adjoint(problem, np.zeros(2), grid), np.zeros((8, 2))))
        self.assertTrue(np.array_equal(dwr_adjoint(problem, np.array([1., 0.]), grid)[-1], [0., 0.]))
    
    def test_adjoint_scalar_closed_form(self):
        """
        For A = a, w = 1 the adjoint is (exp(a (te - t)) - 1) / a, reproduced to second order.
        """
        
        a = -1.
        problem = linear_problem(np.array([[a]]), np.array([1.]), 0., 2.)
        exact = (np.exp(a * 2.) - 1) / a
        
        errors = []
        for n_cells in (10, 20):
            z_h = dwr_adjoint(problem, np.array([1.]), TimeGrid.uniform(0., 2., n_cells))
            errors.append(abs(z_h[0, 0] - exact))
        
        self.assertAlmostEqual(errors[0] / errors[1], 4., delta=.5)
    
    def test_adjoint_eigendirection(self):
        A = np.array([[-2., 1.], [1., -2.]])
        problem = linear_problem(A, np.array([1., 0.]), 0., 2.)
        
        z_h = dwr_adjoint(problem, np.array([1., 1.]), TimeGrid.uniform(0., 2., 13))
        
        self.assertTrue(np.allclose(z_h[:, 0], z_h[:, 1], rtol=0, atol=1e-12))
    
    def test_nonlinear_problem_rejected(self):
        problem = IvpProblem(name='still', u0=np.array([1.]), t0=0., te=1., f=_zero_field)
        
        with self.assertRaises(ConfigurationError):
            dwr_forward(problem, TimeGrid.uniform(0., 1., 2))


class TestEstimate(unittest.TestCase):
    
    def setUp(self):
        self.toy = toy_problem(-1.)
        self.w = np.array([1., 0.])
    
    def test_zero_residual(self):
        problem = linear_problem(np.zeros((2, 2)), np.array([1., 2.]), 0., 1.)
        grid = TimeGrid.uniform(0., 1., 4)
        u_h = dwr_forward(problem, grid)
        z_h = dwr_adjoint(problem, self.w, grid)
        z_plus = dwr_adjoint(problem, self.w, grid.refined())
        
        eta, cell_etas = dwr_estimate(problem, u_h, z_h, z_plus, grid)
        
        self.assertEqual(eta, 0.)
        self.assertTrue(np.all(cell_etas == 0))
    
    def test_no_adjoint_enrichment(self):
        """
        An enriched adjoint that is just the interpolated coarse adjoint carries no information.
        """
        
        grid = TimeGrid.uniform(0., 2., 10)
        fine = grid.refined()
        u_h = dwr_forward(self.toy, grid)
        z_h = dwr_adjoint(self.toy, self.w, grid)
        z_interp = np.column_stack([np.interp(fine.nodes, grid.nodes, z_h[:, i]) for i in range(2)])
        
        eta, _ = dwr_estimate(self.toy, u_h, z_h, z_interp, grid, coarse_adjoint='interpolated')
        
        self.assertAlmostEqual(eta, 0., delta=1e-14)
    
    def test_estimate_tracks_true_error(self):
        grid = TimeGrid.uniform(0., 2., 10)
        u_h = dwr_forward(self.toy, grid)
        z_h = dwr_adjoint(self.toy, self.w, grid)
        z_plus = dwr_adjoint(self.toy, self.w, grid.refined())
        
        eta, cell_etas = dwr_estimate(self.toy, u_h, z_h, z_plus, grid)
        J_h = accumulate(grid.nodes, u_h, get_density('u1', self.toy), TRAPEZOID)
        e_J = abs(toy_exact_qoi(-1., 'u1') - J_h)
        
        self.assertEqual(eta, float(np.sum(cell_etas)))
        self.assertTrue(np.all(cell_etas >= 0))
        self.assertGreaterEqual(eta / e_J, .1)
        self.assertLessEqual(eta / e_J, 10.)
    
    def test_grid_mismatch(self):
        grid = TimeGrid.uniform(0., 2., 10)
        u_h = dwr_forward(self.toy, grid)
        z_h = dwr_adjoint(self.toy, self.w, grid)
        
        with self.assertRaises(ValueError):
            dwr_estimate(self.toy, u_h[:-1], z_h, z_h, grid)
        with self.assertRaises(ValueError):
            dwr_estimate(self.toy, u_h, z_h, z_h, grid)


class TestRefine(unittest.TestCase):
    
    def test_fixed_rate(self):
        grid = TimeGrid.uniform(0., 2., 10)
        etas = np.linspace(1., 2., 10)
        
        self.assertEqual(dwr_refine(grid, etas, .8).n_cells, 18)
        self.assertEqual(dwr_refine(grid, etas, 1.).n_cells, 20)
    
    def test_ties_refine_earlier_cells(self):
        grid = TimeGrid.uniform(0., 4., 4)
        
        refined = dwr_refine(grid, np.ones(4), .5)
        
        self.assertTrue(np.allclose(refined.nodes, [0., .5, 1., 1.5, 2., 3., 4.]))
    
    def test_largest_cells_refined(self):
        grid = TimeGrid.uniform(0., 4., 4)
        
        refined = dwr_refine(grid, np.array([1., 5., 2., 4.]), .5)
        
        self.assertTrue(np.allclose(refined.nodes, [0., 1., 1.5, 2., 3., 3.5, 4.]))
    
    def test_invalid_input(self):
        grid = TimeGrid.uniform(0., 1., 4)
        
        with self.assertRaises(ValueError):
            dwr_refine(grid, np.ones(3), .5)
        with self.assertRaises(ValueError):
            dwr_refine(grid, np.ones(4), 0.)


class TestLoop(unittest.TestCase):
    
    def setUp(self):
        self.toy = toy_problem(-1.)
        self.density = get_density('u1', self.toy)
    
    def test_loose_tolerance(self):
        result = dwr_loop(self.toy, self.density, DwrConfig(tau=1e3))
        
        self.assertTrue(result.converged)
        self.assertEqual(len(result.trace), 1)
        self.assertEqual(result.trace['cells'].iloc[0], 10)
        self.assertEqual(result.grid.n_cells, 10)
        result.raise_for_convergence()
    
    def test_convergence(self):
        result = dwr_loop(self.toy, self.density, DwrConfig(tau=1e-6))
        trace = result.trace
        
        self.assertTrue(result.converged)
        self.assertLessEqual(len(trace), 41)
        self.assertLessEqual(result.eta, 1e-6)
        self.assertEqual(result.eta, trace['eta'].iloc[-1])
        self.assertLessEqual(trace['e_J'].iloc[-1], 10 * result.eta)
        self.assertLess(trace['e_J'].iloc[-1], trace['e_J'].iloc[0] / 100)
        self.assertTrue(np.all(trace['effectivity'] > 0))
        
        for coarse, fine in zip(result.grids[:-1], result.grids[1:]):
            self.assertTrue(coarse.is_nested_in(fine))
            self.assertLessEqual(fine.n_cells, 2 * coarse.n_cells)
    
    def test_weights_instead_of_density(self):
        a = dwr_loop(self.toy, self.density, DwrConfig(tau=1e-3))
        b = dwr_loop(self.toy, np.array([1., 0.]), DwrConfig(tau=1e-3))
        
        self.assertEqual(a.grid.n_cells, b.grid.n_cells)
        self.assertEqual(a.J_h, b.J_h)
    
    def test_non_convergence(self):
        with self.assertWarns(UserWarning):
            result = dwr_loop(self.toy, self.density, DwrConfig(tau=1e-14, max_iterations=1))
        
        self.assertFalse(result.converged)
        self.assertEqual(len(result.trace), 2)
        self.assertEqual(list(result.trace['cells']), [10, 18])
        with self.assertRaises(NonConvergenceError):
            result.raise_for_convergence()
    
    def test_invalid_inputs(self):
        with self.assertRaises(ConfigurationError):
            dwr_loop(self.toy, get_density('t*u1', self.toy), DwrConfig(tau=1e-3))
        with self.assertRaises(ConfigurationError):
            dwr_loop(self.toy, self.density, DwrConfig(tau=1e-3, refine_fraction=1.5))
        with self.assertRaises(ConfigurationError):
            DwrConfig(tau=1e-3, fine_factor=3).validate()


if __name__ == '__main__':
    unittest.main()
