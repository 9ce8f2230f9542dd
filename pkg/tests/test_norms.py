import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_field
from nscontrol.forcing import ChiProfile
from nscontrol.grid import Grid, SpectralField, SymTensorField, VectorField
from nscontrol.initial_data import KINDS, make_initial_data
from nscontrol.norms import (heat_energy_integral, hminus1_norm, lp_norm, spacetime_lebesgue_norm, spectral_l2,
                             trajectory_norm, weight_exponent)
from nscontrol.solver import heat_flow_trajectory


@pytest.fixture(scope="module")
def grid():
    return Grid(2, 128, 32 * math.pi)


def gaussian(grid, sigma=2.0):
    x = grid.coords()
    return SpectralField.from_physical(grid, np.exp(-np.sum(x ** 2, axis=0) / (2 * sigma ** 2)))


class TestLebesgue:
    @pytest.mark.parametrize("p", [1, 2, 3, 4.5, math.inf])
    def test_gaussian_closed_form(self, grid, p):
        sigma = 2.0
        # ||exp(-|x|^2 / 2 s^2)||_p^p = 2 pi s^2 / p in 2D
        expected = 1.0 if math.isinf(p) else (2 * math.pi * sigma ** 2 / p) ** (1 / p)
        assert lp_norm(gaussian(grid, sigma), p) == pytest.approx(expected, rel=1e-10)

    def test_oversampling_agrees_for_smooth_fields(self, grid):
        f = gaussian(grid)
        assert lp_norm(f, 1, oversample=2) == pytest.approx(lp_norm(f, 1), rel=1e-10)

    def test_vector_magnitude(self, grid):
        g = gaussian(grid)
        v = VectorField(grid, np.stack([0.6 * g.coeffs, 0.8 * g.coeffs]))
        assert lp_norm(v, 3) == pytest.approx(lp_norm(g, 3), rel=1e-12)

    def test_tensor_frobenius(self, grid):
        g = gaussian(grid)
        T = SymTensorField.from_matrix_profile(np.array([[0.0, 1.0], [1.0, 0.0]]), g)
        assert lp_norm(T, 2) == pytest.approx(math.sqrt(2) * lp_norm(g, 2), rel=1e-12)

    def test_plancherel(self, grid, rng):
        v = VectorField(grid, random_field(grid, rng, 2))
        assert spectral_l2(v) == pytest.approx(lp_norm(v, 2), rel=1e-12)

    def test_rejects_p_below_one(self, grid):
        with pytest.raises(ValueError):
            lp_norm(gaussian(grid), 0.5)


class TestHMinus1:
    @pytest.mark.parametrize("kind", KINDS)
    def test_heat_energy_identity(self, grid, kind):
        """int_0^inf ||e^{t Lap} a||^2 dt = ||a||_{H^-1}^2 / 2, independently by quadrature."""
        a = make_initial_data(kind, 0.3, grid)
        h = hminus1_norm(a)
        assert heat_energy_integral(a) == pytest.approx(h.heat_energy_integral, rel=1e-9)
        assert h.heat_energy_integral == pytest.approx(0.5 * h.norm ** 2, rel=1e-15)

    def test_single_mode(self, grid):
        x = grid.coords()
        k = 3 * grid.kmin
        v = VectorField.from_physical(grid, np.stack([np.sin(k * x[1]), np.zeros(grid.shape)]))
        # ||sin(ky)||_{H^-1}^2 = L^2 / (2 k^2)
        assert hminus1_norm(v).norm ** 2 == pytest.approx(grid.volume / (2 * k * k), rel=1e-12)

    def test_nonzero_mean_rejected(self, grid):
        v = VectorField.from_physical(grid, np.ones((2,) + grid.shape))
        with pytest.raises(ValueError):
            hminus1_norm(v)
        with pytest.raises(ValueError):
            heat_energy_integral(v)


class TestTrajectoryNorms:
    def test_weight_exponents(self):
        assert weight_exponent("X_r", 4, 2) == pytest.approx(0.25)
        assert weight_exponent("Y_r", 4, 2) == pytest.approx(0.75)
        assert weight_exponent("Xbar_p", 2, 2) == pytest.approx(0.5)
        assert weight_exponent("Ybar_p", 2, 2) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            weight_exponent("Z", 2, 2)

    def test_single_mode_sup(self, grid):
        """t^{1/2} ||e^{t Lap} sin(ky)||_2 peaks at t = 1/(2k^2)."""
        x = grid.coords()
        k = 4 * grid.kmin
        v = VectorField.from_physical(grid, np.stack([np.sin(k * x[1]), np.zeros(grid.shape)]))
        t_star = 1 / (2 * k * k)
        traj = heat_flow_trajectory(v, np.geomspace(t_star / 10, t_star * 10, 201))
        tn = trajectory_norm(traj, "Xbar_p", 2)
        expected = math.sqrt(t_star) * math.exp(-k * k * t_star) * math.sqrt(grid.volume / 2)
        assert tn.value == pytest.approx(expected, rel=1e-8)
        assert tn.argmax_t == pytest.approx(t_star, rel=1e-10)
        assert tn.csv_row()[0] == "Xbar_p"

    def test_needs_positive_snapshots(self, grid):
        traj = heat_flow_trajectory(VectorField.zeros(grid), [])
        with pytest.raises(ValueError):
            trajectory_norm(traj, "X_r", 4)

    def test_spacetime_norm_profile(self):
        chi = ChiProfile(2, 2.0, 3.0, "indicator")
        assert spacetime_lebesgue_norm(chi, 2) == pytest.approx(math.sqrt(12.0))

    def test_spacetime_norm_trajectory(self, grid):
        x = grid.coords()
        k = 2 * grid.kmin
        v = VectorField.from_physical(grid, np.stack([np.sin(k * x[1]), np.zeros(grid.shape)]))
        traj = heat_flow_trajectory(v, np.linspace(0.01, 5.0, 2001))
        # int_0^5 ||e^{t Lap} v||_2^2 dt = (L^2/2)(1 - e^{-10 k^2}) / (2 k^2)
        exact = grid.volume / 2 * (1 - math.exp(-10 * k * k)) / (2 * k * k)
        assert spacetime_lebesgue_norm(traj, 2) ** 2 == pytest.approx(exact, rel=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 8.0), st.floats(0.1, 10.0))
def test_lp_homogeneity(p, c):
    grid = Grid(2, 32, 8 * math.pi)
    f = gaussian(grid)
    g = SpectralField(grid, c * f.coeffs)
    assert lp_norm(g, p) == pytest.approx(c * lp_norm(f, p), rel=1e-12)
