from __future__ import annotations

import numpy as np
import pytest

from flatwing.errors import Infeasible
from flatwing.harness import min_surface_distance, physical_objective, two_cylinder_config, two_cylinder_scenario
from flatwing.initializer import Scaling, initial_guess, normalize
from flatwing.planner import feasibility_check, solve
from flatwing.problem import Scenario, SolverConfig, TimeCost, deg_state
from flatwing.spline import FlatTrajectory
from flatwing.costs import boundary_from_scenario


@pytest.fixture(scope="module")
def two_cylinder_solution():
    return solve(two_cylinder_scenario(), two_cylinder_config(), keep_history=True)


class TestTwoCylinder:
    def test_converged_and_feasible(self, two_cylinder_solution):
        r = two_cylinder_solution.report
        assert r.converged and r.feasible
        assert r.grad_norm <= 1e-3
        assert all(v == 0.0 for v in r.residuals.values())
        assert min_surface_distance(two_cylinder_solution.trajectory, two_cylinder_solution.scenario) >= 100.0 - 1e-6

    def test_flight_time_near_reference(self, two_cylinder_solution):
        # the optimum for this layout is about 167 s
        assert two_cylinder_solution.report.T == pytest.approx(167.16, rel=0.02)

    def test_history_monotone(self, two_cylinder_solution):
        h = np.array(two_cylinder_solution.report.history)
        assert np.all(np.diff(h) <= 0)

    def test_first_feasible_before_convergence(self, two_cylinder_solution):
        r = two_cylinder_solution.report
        assert r.first_feasible_iter is not None
        assert r.first_feasible_iter <= r.iterations
        assert r.cpu_to_feasible <= r.cpu_time

    def test_physical_boundary(self, two_cylinder_solution):
        traj, sc = two_cylinder_solution.trajectory, two_cylinder_solution.scenario
        fp = traj.evaluate(traj.T)
        np.testing.assert_allclose(fp.p, sc.xf.position, atol=1e-6)
        assert np.linalg.norm(fp.v) == pytest.approx(sc.xf.V, rel=1e-9)

    def test_residuals_recomputed(self, two_cylinder_solution):
        res = feasibility_check(two_cylinder_solution.trajectory, two_cylinder_solution.scenario, two_cylinder_config())
        assert max(res.values()) <= 1e-6

    def test_scale_invariance(self, two_cylinder_solution):
        other = solve(two_cylinder_scenario(), two_cylinder_config(), eta_L=2 * two_cylinder_solution.scaling.eta_L)
        a, b = physical_objective(two_cylinder_solution), physical_objective(other)
        assert b == pytest.approx(a, rel=0.01)


class TestModes:
    def test_straight_corridor_near_time_bound(self):
        sc = Scenario(x0=deg_state(0, 0, -500, 30, 0, 0), xf=deg_state(6000, 0, -500, 30, 0, 0))
        sol = solve(sc)
        assert sol.report.success
        # time bound with V ramping 30 -> 40 -> 30 m/s at |n_x| <= 0.2 g
        ramp = 10.0 / (0.2 * 9.81)
        bound = 2 * ramp + (6000 - 2 * ramp * 35.0) / 40.0
        assert sol.report.T >= bound * (1 - 1e-3)
        assert sol.report.T <= bound * 1.02
        V = np.linalg.norm(sol.trajectory.derivative(np.linspace(0, sol.report.T, 200), 1), axis=1)
        assert V.max() > 39.0

    def test_fixed_time_exact(self):
        sc = Scenario(x0=deg_state(0, 0, -500, 30, 0, 0), xf=deg_state(4000, 1000, -600, 30, 0, 0), time_cost=TimeCost.fixed(130.0))
        sol = solve(sc)
        assert sol.report.T == 130.0
        assert sol.trajectory.T == 130.0
        assert sol.report.feasible

    def test_window(self):
        sc = Scenario(x0=deg_state(0, 0, -500, 30, 0, 0), xf=deg_state(4000, 0, -500, 30, 0, 0), time_cost=TimeCost.window(120, 130))
        sol = solve(sc)
        assert sol.report.feasible
        assert 120 - 0.5 <= sol.report.T <= 130 + 0.5

    def test_infeasible_raises_with_solution(self):
        with pytest.raises(Infeasible) as info:
            solve(two_cylinder_scenario(), two_cylinder_config(max_iter=2))
        assert info.value.solution.report.feasible is False
        sol = solve(two_cylinder_scenario(), two_cylinder_config(max_iter=2), raise_infeasible=False)
        assert sol.report.status == "max_iter"


class TestFeasibilityCheck:
    def test_initial_guess_hits_obstacles(self):
        sc = two_cylinder_scenario()
        nsc, scaling, path = normalize(sc)
        P, tau = initial_guess(path, 12, scaling)
        traj = FlatTrajectory.from_waypoints(P * scaling.eta_L, scaling.eta_T, boundary_from_scenario(sc))
        assert feasibility_check(traj, sc, SolverConfig())["obs"] > 0

    def test_scale_invariant(self):
        sc = two_cylinder_scenario()
        nsc, scaling, path = normalize(sc)
        P, tau = initial_guess(path, 12, scaling)
        ntraj = FlatTrajectory.from_waypoints(P, 1.0, boundary_from_scenario(nsc))
        phys = ntraj.scaled(scaling.eta_L, scaling.eta_T)
        rn = feasibility_check(ntraj, nsc, SolverConfig())
        rp = feasibility_check(phys, sc, SolverConfig())
        for k in ("gamma", "nx", "ny", "nz"):
            assert rn[k] == pytest.approx(rp[k], rel=1e-9, abs=1e-12)
        assert rn["V"] * scaling.speed == pytest.approx(rp["V"], rel=1e-9, abs=1e-9)
        assert rn["obs"] * scaling.eta_L == pytest.approx(rp["obs"], rel=1e-9)

    def test_other_scaling(self):
        sc = two_cylinder_scenario()
        s2 = Scaling(777.0, 31.0)
        nsc, scaling, path = normalize(sc)
        P, _ = initial_guess(path, 8, scaling)
        phys = FlatTrajectory.from_waypoints(P * scaling.eta_L, 150.0, boundary_from_scenario(sc))
        other = FlatTrajectory.from_waypoints(phys.P / s2.eta_L, 150.0 / s2.eta_T, boundary_from_scenario(s2.scale_scenario(sc)))
        r1 = feasibility_check(phys, sc, SolverConfig())
        r2 = feasibility_check(other, s2.scale_scenario(sc), SolverConfig())
        assert r2["nz"] == pytest.approx(r1["nz"], rel=1e-9, abs=1e-12)
        assert r2["obs"] * s2.eta_L == pytest.approx(r1["obs"], rel=1e-9)
