import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nscontrol.forcing import ChiProfile, Forcing
from nscontrol.grid import Grid, VectorField
from nscontrol.initial_data import make_initial_data, taylor_green
from nscontrol.norms import spectral_l2
from nscontrol.operators import bilinear_term, heat_semigroup
from nscontrol.solver import (CFLError, SolverConfig, duhamel_force, geometric_schedule, heat_flow_trajectory,
                              integrate, nonlinear, picard_residual, step)


@pytest.fixture(scope="module")
def grid():
    return Grid(2, 64, 16 * math.pi)


@pytest.fixture(scope="module")
def data(grid):
    return make_initial_data("dipole", 0.3, grid, width=2.0)


def rel(a, b):
    return spectral_l2(VectorField(a.grid, a.coeffs - b.coeffs)) / spectral_l2(b)


class TestConfig:
    def test_validation(self, grid):
        with pytest.raises(ValueError):
            SolverConfig(grid, 0.0, 1.0)
        with pytest.raises(ValueError):
            SolverConfig(grid, 0.3, 1.0)
        with pytest.raises(ValueError):
            SolverConfig(grid, 0.1, 1.0, picard_check_times=[0.3])  # odd step count
        with pytest.raises(ValueError):
            SolverConfig(grid, 0.1, 1.0, snapshot_times=[2.0])

    def test_schedule_contains_checks_and_last_decade(self, grid):
        cfg = SolverConfig(grid, 0.05, 51.2, picard_check_times=[0.8, 1.6])
        steps = {round(t / 0.05) for t in cfg.snapshot_times}
        assert {16, 32, round(5.12 / 0.05), 1024} <= steps
        assert cfg.steps == 1024

    def test_forcing_must_fit(self, grid):
        with pytest.raises(ValueError):
            SolverConfig(grid, 0.1, 1.0, forcing=Forcing(ChiProfile(2, 1.0, 0.5), np.eye(2)))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([0.01, 0.05, 0.1]), st.integers(1, 2000), st.floats(1.05, 3.0))
def test_geometric_schedule(dt, steps, ratio):
    T = dt * steps
    sched = geometric_schedule(dt, T, ratio)
    k = [round(t / dt) for t in sched]
    assert k[-1] == steps
    assert all(b > a for a, b in zip(k, k[1:]))
    assert all(abs(t - kk * dt) < 1e-12 for t, kk in zip(sched, k))


class TestNonlinear:
    def test_matches_bilinear_operator(self, grid, data):
        N, up = nonlinear(data.coeffs, grid)
        ref = bilinear_term(data, data).coeffs
        assert np.abs(N + ref).max() < 1e-13 * np.abs(ref).max()
        assert np.allclose(up, data.physical())

    def test_single_step_matches_integrate(self, grid, data):
        u1 = step(data, 0.0, 0.05)
        traj = integrate(SolverConfig(grid, 0.05, 0.05), data, check_picard=False)
        assert np.array_equal(u1.coeffs, traj.final.coeffs)


class TestTaylorGreen:
    def test_exact_decay(self):
        g = Grid(2, 32, 8 * math.pi)
        a = taylor_green(g, 1.0)
        traj = integrate(SolverConfig(g, 1e-3, 1.0, snapshot_times=[0.5, 1.0]), a, check_picard=False)
        for t, u in traj.snapshots:
            assert rel(u, VectorField(g, math.exp(-2 * t) * a.coeffs)) < 1e-12

    def test_second_order(self):
        g = Grid(2, 32, 8 * math.pi)
        a = taylor_green(g, 1.0, perturbation=0.5)
        res = {dt: integrate(SolverConfig(g, dt, 1.0), a, check_picard=False).final.coeffs
               for dt in (0.04, 0.02, 0.0025, 0.00125)}
        # Richardson-extrapolated fine reference
        ref = res[0.00125] + (res[0.00125] - res[0.0025]) / 3
        e1 = spectral_l2(VectorField(g, res[0.04] - ref))
        e2 = spectral_l2(VectorField(g, res[0.02] - ref))
        assert 3.9 < e1 / e2 < 4.1


@pytest.fixture(scope="module")
def traj(grid, data):
    return integrate(SolverConfig(grid, 0.05, 6.4, picard_check_times=[0.8, 1.6, 3.2, 6.4]), data)


class TestTrajectory:
    def test_picard_residual_small(self, traj):
        assert np.all(traj.picard.relative < 1e-4)

    def test_picard_residual_is_second_order(self, grid, data):
        times = [0.8, 1.6]
        r1 = integrate(SolverConfig(grid, 0.1, 1.6, picard_check_times=times), data).picard.relative
        r2 = integrate(SolverConfig(grid, 0.05, 1.6, picard_check_times=times), data).picard.relative
        assert np.all((r1 / r2 > 3.0) & (r1 / r2 < 5.0))

    def test_divergence_free_and_decaying(self, traj):
        assert all(u.divergence_defect() < 1e-12 for _, u in traj.snapshots)
        assert np.all(np.diff(traj.l2) <= 1e-15)

    def test_energy_accumulator_trace(self, traj):
        tr = np.trace(traj.acc_uu, axis1=1, axis2=2)
        l2sq = traj.l2 ** 2
        trap = np.concatenate([[0.0], np.cumsum(0.5 * traj.config.dt * (l2sq[1:] + l2sq[:-1]))])
        assert np.allclose(tr, trap, rtol=1e-12)
        assert np.allclose(traj.rate[0], [[traj.grid.inner(a, b) for b in traj.a.coeffs] for a in traj.a.coeffs])

    def test_csv(self, traj):
        header = traj.csv_header()
        rows = traj.csv_rows()
        assert len(rows) == len(traj.t)
        assert all(len(r) == len(header) for r in rows)
        with_res = [r for r in rows if r[-1] != ""]
        assert len(with_res) == 4

    def test_snapshot_lookup(self, traj):
        assert traj.snapshot(0.8) is not None
        with pytest.raises(KeyError):
            traj.snapshot(0.77)

    def test_picard_needs_recorded_time(self, traj, data):
        with pytest.raises(ValueError):
            picard_residual(traj, data, None, [2.4])


class TestForced:
    def test_forced_mild_equation_holds(self, grid, data):
        chi = ChiProfile(2, 0.5, 1.0)
        f = Forcing(chi, np.array([[0.4, -0.2], [-0.2, -0.4]]))
        traj = integrate(SolverConfig(grid, 0.05, 3.2, forcing=f, picard_check_times=[0.4, 1.0, 3.2]), data)
        assert np.all(traj.picard.relative < 1e-4)
        assert np.allclose(traj.acc_f[-1], f.coeffs)

    def test_weak_forcing_is_linear_response(self, grid):
        """Zero data, forcing of size eps: u(t) = Phi(f)(t) + O(eps^2)."""
        chi = ChiProfile(2, 0.5, 1.0)
        eps = 1e-4
        f = Forcing(chi, eps * np.array([[1.0, 0.5], [0.5, -1.0]]))
        traj = integrate(SolverConfig(grid, 0.05, 2.0, forcing=f), VectorField.zeros(grid), check_picard=False)
        lin = duhamel_force(f, 2.0, grid)
        assert rel(traj.final, lin) < 1e-3


class TestMisc:
    def test_cfl_abort(self, grid):
        a = make_initial_data("dipole", 50.0, grid, width=2.0)
        with pytest.raises(CFLError):
            integrate(SolverConfig(grid, 0.5, 5.0), a)

    def test_rejects_divergent_data(self, grid):
        x = grid.coords()
        v = VectorField.from_physical(grid, np.stack([np.sin(x[0] * grid.kmin), np.zeros(grid.shape)]))
        with pytest.raises(ValueError):
            integrate(SolverConfig(grid, 0.1, 0.2), v)

    def test_heat_flow_trajectory(self, grid, data):
        traj = heat_flow_trajectory(data, [0.5, 2.0])
        assert traj.config is None
        assert np.allclose(traj.snapshot(2.0).coeffs, heat_semigroup(data, 2.0).coeffs)
