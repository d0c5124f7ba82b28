from __future__ import annotations

import numpy as np
import pytest

from flatwing._kernel import sample_pass
from flatwing.costs import box_phi, hinge, sample_trajectory
from flatwing.flat import controls_batch
from flatwing.gradients import (
    FiniteDifferenceObjective,
    grad_gamma,
    grad_jerk,
    grad_load,
    grad_obstacle,
    grad_speed,
    grad_time_mapping,
    propagate,
)
from flatwing.harness import central_difference, random_instance, two_cylinder_scenario
from flatwing.planner import prepare
from flatwing.problem import PENALTY_KINDS, SolverConfig
from flatwing.spline import S, Boundary

G = 9.81


def _fd_rows(fun, X, h=1e-6):
    """Row-wise central differences of a per-row scalar function."""
    out = np.zeros_like(X)
    for k in range(X.shape[1]):
        e = np.zeros_like(X)
        e[:, k] = h
        out[:, k] = (fun(X + e) - fun(X - e)) / (2 * h)
    return out


def _close(actual, fd, rel=1e-6):
    assert np.linalg.norm(actual - fd) <= rel * np.linalg.norm(fd)


def _active_velocities(rng, n=40):
    V = rng.uniform(20, 50, n)
    chi = rng.uniform(-np.pi, np.pi, n)
    gam = rng.uniform(-0.6, 0.6, n)
    return np.column_stack([V * np.cos(gam) * np.cos(chi), V * np.cos(gam) * np.sin(chi), -V * np.sin(gam)])


class TestSamplePartials:
    def test_speed(self):
        v = _active_velocities(np.random.default_rng(0))
        _, dv = grad_speed(v, 35.0, 4.75)
        fd = _fd_rows(lambda x: grad_speed(x, 35.0, 4.75)[0], v)
        _close(dv, fd)

    def test_speed_zero_at_center(self):
        _, dv = grad_speed(np.array([[35.0, 0, 0]]), 35.0, 4.75)
        np.testing.assert_array_equal(dv, 0)

    def test_speed_symmetric(self):
        _, up = grad_speed(np.array([[42.0, 0, 0]]), 35.0, 4.75)
        _, dn = grad_speed(np.array([[28.0, 0, 0]]), 35.0, 4.75)
        np.testing.assert_allclose(up, -dn)

    def test_gamma(self):
        v = _active_velocities(np.random.default_rng(1))
        c, h = 0.0, 0.95 * np.sin(0.3)
        _, dv = grad_gamma(v, c, h)
        fd = _fd_rows(lambda x: grad_gamma(x, c, h)[0], v)
        _close(dv, fd)

    def test_gamma_orthogonal_to_velocity(self):
        v = _active_velocities(np.random.default_rng(2))
        _, dv = grad_gamma(v, 0.0, 0.1)
        scale = np.linalg.norm(dv, axis=1) * np.linalg.norm(v, axis=1)
        assert np.all(np.abs(np.sum(dv * v, axis=1)) <= 1e-12 * (1 + scale))

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    def test_load(self, axis):
        rng = np.random.default_rng(3)
        v = _active_velocities(rng)
        a = rng.normal(size=v.shape) * 4
        c, h = (0.0, 0.19) if axis != "z" else (1.0, 0.19)
        _, dv, da = grad_load(v, a, G, axis, c, h)
        fdv = _fd_rows(lambda x: grad_load(x, a, G, axis, c, h)[0], v)
        fda = _fd_rows(lambda x: grad_load(v, x, G, axis, c, h)[0], a, h=1e-5)
        _close(dv, fdv)
        _close(da, fda)

    def test_load_zero_when_centered(self):
        _, dv, da = grad_load(np.array([[30.0, 0, 0]]), np.zeros((1, 3)), G, "z", 1.0, 0.19)
        np.testing.assert_array_equal(dv, 0)
        np.testing.assert_array_equal(da, 0)

    def test_jerk(self):
        j = np.random.default_rng(4).normal(size=(10, 3))
        _, dj = grad_jerk(j)
        np.testing.assert_allclose(dj, _fd_rows(lambda x: grad_jerk(x)[0], j), atol=1e-8)

    def test_obstacle(self):
        rng = np.random.default_rng(5)
        centers = np.array([[0.0, 0.0], [300.0, 100.0]])
        rho = np.array([500.0, 400.0])
        p = np.column_stack([rng.uniform(-200, 400, 30), rng.uniform(-200, 300, 30), rng.uniform(-900, 0, 30)])
        _, dp = grad_obstacle(p, centers, rho)
        fd = _fd_rows(lambda x: grad_obstacle(x, centers, rho)[0], p, h=1e-4)
        np.testing.assert_allclose(dp, fd, rtol=1e-6, atol=1e-12)
        np.testing.assert_array_equal(dp[:, 2], 0)

    def test_obstacle_far_field(self):
        _, dp = grad_obstacle(np.array([[5000.0, 0, 0]]), np.zeros((1, 2)), np.array([500.0]))
        np.testing.assert_array_equal(dp, 0)

    def test_time_mapping(self):
        assert grad_time_mapping(5.0, 0.0) == 5.0
        assert grad_time_mapping(2.0, np.log(3.0)) == pytest.approx(6.0)


class TestKernelAgreesWithReference:
    def test_per_sample_partials(self):
        rng = np.random.default_rng(6)
        M = 60
        v = _active_velocities(rng, M)
        a = rng.normal(size=(M, 3)) * 3
        j = rng.normal(size=(M, 3))
        p = np.column_stack([rng.uniform(-500, 500, M), rng.uniform(-500, 500, M), np.zeros(M)])
        centers = np.array([[0.0, 0.0], [200.0, -100.0]])
        radii = np.array([300.0, 200.0])
        rho = 1.05 * (radii + 100.0)
        bounds = {"V": (35.0, 5.0), "gamma": (0.0, np.sin(0.3)), "nx": (0.0, 0.2), "ny": (0.0, 0.2), "nz": (1.0, 0.2)}
        cfg = SolverConfig()
        box_c = np.array([bounds[k][0] for k in PENALTY_KINDS])
        box_h = np.array([(1 - cfg.zeta(k)) * bounds[k][1] for k in PENALTY_KINDS])
        box_lam = np.array([cfg.weight(k) for k in PENALTY_KINDS])
        wq = np.ones(M)
        gp, gv, ga, gj = (np.empty((M, 3)) for _ in range(4))
        Vo, sgo, clo, lo = np.empty(M), np.empty(M), np.empty(M), np.empty((M, 3))
        acc, _, status = sample_pass(p, v, a, j, wq, centers, radii, rho, 100.0, box_c, box_h, box_lam,
                                     0.5, cfg.lambda_obs, 3, G, 1e-6, gp, gv, ga, gj, Vo, sgo, lo, clo)  # fmt: skip
        assert status == 0

        Gs, dvs = grad_speed(v, box_c[0], box_h[0])
        Gg, dvg = grad_gamma(v, box_c[1], box_h[1])
        Go, dpo = grad_obstacle(p, centers, rho)
        Ge, dje = grad_jerk(j)
        total = 0.5 * Ge + cfg.lambda_obs * Go + box_lam[0] * Gs + box_lam[1] * Gg
        ref_v = box_lam[0] * dvs + box_lam[1] * dvg
        ref_a = np.zeros_like(a)
        for i, axis in enumerate("xyz"):
            Gl, dvl, dal = grad_load(v, a, G, axis, box_c[2 + i], box_h[2 + i])
            total += box_lam[2 + i] * Gl
            ref_v += box_lam[2 + i] * dvl
            ref_a += box_lam[2 + i] * dal
        assert acc == pytest.approx(np.sum(total), rel=1e-12)
        np.testing.assert_allclose(gp, cfg.lambda_obs * dpo, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(gv, ref_v, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(ga, ref_a, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(gj, 0.5 * dje, rtol=1e-12)
        np.testing.assert_allclose(lo, controls_batch(v, a, G), atol=1e-12)
        d = np.linalg.norm(p[:, None, :2] - centers[None], axis=-1) - (radii + 100.0)
        np.testing.assert_allclose(clo, d.min(axis=1), atol=1e-9)

    def test_singularity_status(self):
        M = 2
        v = np.array([[30.0, 0, 0], [0, 0, 0]])
        z = np.zeros((M, 3))
        out = [np.empty((M, 3)) for _ in range(4)]
        _, _, status = sample_pass(z, v, z, z, np.ones(M), np.zeros((0, 2)), np.zeros(0), np.zeros(0), 0.0,
                                   np.zeros(5), np.ones(5), np.zeros(5), 0.0, 0.0, 3, G, 1e-6,
                                   *out, np.empty(M), np.empty(M), np.empty((M, 3)), np.empty(M))  # fmt: skip
        assert status == 1


class TestObjective:
    def test_value_matches_reference_cost(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            obj, x, reference, _, _ = random_instance(rng)
            assert obj.value(x) == pytest.approx(reference(x), rel=1e-11)

    def test_full_gradient_vs_fd(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            obj, x, reference, _, _ = random_instance(rng)
            g = obj(x)[1]
            fd = central_difference(reference, x, 1e-6)
            assert np.linalg.norm(g - fd) / (1 + np.linalg.norm(fd)) <= 1e-5

    def test_mild_iterate_h_refinement(self):
        # near the optimum the FD truncation error dominates; it must shrink as h^2
        sc = two_cylinder_scenario()
        *_, obj, x0 = prepare(sc, SolverConfig(n_segments=8))
        x = x0 + 1e-3 * np.random.default_rng(10).normal(size=x0.size)
        g = obj(x)[1]
        errs = [np.linalg.norm(g - central_difference(obj.value, x, h)) for h in (1e-4, 1e-5)]
        assert errs[1] < errs[0]
        assert errs[1] / (1 + np.linalg.norm(g)) <= 1e-5

    def test_fixed_time_drops_duration(self):
        rng = np.random.default_rng(11)
        while True:
            obj, x, reference, _, mode = random_instance(rng)
            if mode == "fixed":
                break
        assert x.size == 3 * (obj.N - 1)
        fd = central_difference(reference, x)
        g = obj(x)[1]
        assert np.linalg.norm(g - fd) / (1 + np.linalg.norm(fd)) <= 1e-5

    def test_propagate_linear(self):
        rng = np.random.default_rng(12)
        N, T = 6, 1.7
        b = Boundary(*(rng.normal(size=3) for _ in range(6)))
        A, B = rng.normal(size=(S * N, 3)), rng.normal(size=(S * N, 3))
        pa, ta = propagate(A, 0.0, N, T, b)
        pb, tb = propagate(B, 0.0, N, T, b)
        pab, tab = propagate(2 * A + 3 * B, 0.0, N, T, b)
        np.testing.assert_allclose(pab, 2 * pa + 3 * pb, atol=1e-10)
        assert tab == pytest.approx(2 * ta + 3 * tb)

    def test_propagate_zero(self):
        b = Boundary(*(np.ones(3) for _ in range(6)))
        dP, dT = propagate(np.zeros((S * 4, 3)), 1.0, 4, 2.0, b)
        np.testing.assert_array_equal(dP, 0)
        assert dT == 1.0

    def test_single_segment(self):
        sc = two_cylinder_scenario()
        *_, obj, x0 = prepare(sc, SolverConfig(n_segments=1))
        assert x0.size == 1
        f, g = obj(x0 + 0.1)
        fd = central_difference(obj.value, x0 + 0.1)
        np.testing.assert_allclose(g, fd, rtol=1e-6)

    def test_finite_difference_objective(self):
        sc = two_cylinder_scenario()
        *_, obj, x0 = prepare(sc, SolverConfig(n_segments=4))
        fdo = FiniteDifferenceObjective(obj)
        f, g = fdo(x0)
        f2, g2 = obj(x0)
        assert f == f2
        assert np.linalg.norm(g - g2) / (1 + np.linalg.norm(g2)) <= 1e-5


def test_penalties_vanish_inside_shrunk_set():
    q = np.linspace(-0.94, 0.94, 50)
    np.testing.assert_array_equal(hinge(box_phi(q, 0.0, 1.0, 0.05), 3), 0)


def test_sample_reuse_matches_trajectory_sampling():
    sc = two_cylinder_scenario()
    nsc, ncfg, _, N, obj, x0 = prepare(sc, SolverConfig(n_segments=5))
    ev = obj.evaluate(x0)
    from flatwing.spline import FlatTrajectory

    P, T = obj.unpack(x0)
    smp = sample_trajectory(FlatTrajectory.from_waypoints(P, T, obj.boundary), ncfg.kappa)
    np.testing.assert_allclose(ev.V, np.linalg.norm(smp.v, axis=-1).reshape(-1), rtol=1e-12)
