"""Analytical gradient of the discretized objective.

Integrand partials are taken with respect to the flat derivatives (p, v, a, j)
at each quadrature sample, pulled back to the normalized coefficients through
the basis table, and then to the waypoints and duration through one transpose
solve with the banded boundary/continuity system.

The duration enters three ways: the quadrature step ``T / (kappa N)``, the
``(N/T)^n`` scaling of derivatives at fixed coefficients, and the boundary
velocity/acceleration rows of the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernel import coefficient_pullback, sample_pass
from .costs import boundary_from_scenario, time_cost, time_cost_derivative, trapezoid_weights
from .errors import NumericalSingular, SingularVelocity, SingularVertical
from .problem import PENALTY_KINDS, Scenario, SolverConfig, TimeMode
from .spline import S, Boundary, banded_system, basis, basis_table, waypoint_rows


def _dphi_factor(phi, power):
    """d max(phi, 0)^w / d phi."""
    return power * np.maximum(phi, 0.0) ** (power - 1)


def grad_speed(v, center: float, half: float, power: int = 3):
    """Speed penalty and its partial w.r.t. velocity; ``half`` already shrunk."""
    v = np.atleast_2d(v)
    V = np.linalg.norm(v, axis=-1)
    phi = ((V - center) / half) ** 2 - 1.0
    G = np.maximum(phi, 0.0) ** power
    coef = _dphi_factor(phi, power) * 2.0 * (V - center) / half**2 / V
    return G, coef[:, None] * v


def grad_gamma(v, center: float, half: float, power: int = 3):
    """Flight-path penalty (on ``sin(gamma) = -v_z/|v|``) and its velocity partial."""
    v = np.atleast_2d(v)
    V = np.linalg.norm(v, axis=-1)
    r1 = v / V[:, None]
    sg = -r1[:, 2]
    phi = ((sg - center) / half) ** 2 - 1.0
    G = np.maximum(phi, 0.0) ** power
    coef = _dphi_factor(phi, power) * 2.0 * (sg - center) / half**2
    # d(sin gamma)/dv = -(I - r1 r1^T) e3 / |v|
    dsg = -(np.array([0.0, 0.0, 1.0]) - r1 * r1[:, 2:3]) / V[:, None]
    return G, coef[:, None] * dsg


def load_factor_partials(v, a, g: float, axis: str):
    """Load factor ``n_axis`` and its partials w.r.t. velocity and acceleration."""
    v = np.atleast_2d(v)
    a = np.atleast_2d(a)
    ng = a / g
    ng[:, 2] -= 1.0
    vx, vy, vz = v[:, 0], v[:, 1], v[:, 2]
    if axis == "x":
        V = np.linalg.norm(v, axis=-1)
        r = v / V[:, None]
        n = np.sum(ng * r, axis=-1)
        dv = (ng - n[:, None] * r) / V[:, None]
        return n, dv, r / g
    h = np.hypot(vx, vy)
    if axis == "y":
        w2 = np.stack([-vy, vx, np.zeros_like(vx)], axis=-1)
        r = w2 / h[:, None]
        n = np.sum(ng * r, axis=-1)
        u = (ng - n[:, None] * r) / h[:, None]
        dv = np.stack([u[:, 1], -u[:, 0], np.zeros_like(vx)], axis=-1)
        return n, dv, r / g
    V2 = vx * vx + vy * vy + vz * vz
    w3 = np.stack([-vx * vz, -vy * vz, V2 - vz * vz], axis=-1)
    nw3 = np.sqrt(V2) * h
    r = w3 / nw3[:, None]
    m = np.sum(ng * r, axis=-1)
    u = (ng - m[:, None] * r) / nw3[:, None]
    # (dw3/dv)^T u with dw3/dv = 2 e3 v^T - v_z I - v e3^T
    vu = np.sum(v * u, axis=-1)
    dm = 2.0 * v * u[:, 2:3] - vz[:, None] * u
    dm[:, 2] -= vu
    return -m, -dm, -r / g


def grad_load(v, a, g: float, axis: str, center: float, half: float, power: int = 3):
    n, dn_dv, dn_da = load_factor_partials(v, a, g, axis)
    phi = ((n - center) / half) ** 2 - 1.0
    G = np.maximum(phi, 0.0) ** power
    coef = (_dphi_factor(phi, power) * 2.0 * (n - center) / half**2)[:, None]
    return G, coef * dn_dv, coef * dn_da


def grad_jerk(j):
    j = np.atleast_2d(j)
    return np.sum(j * j, axis=-1), 2.0 * j


def grad_obstacle(p, centers, rho, power: int = 3):
    """Summed obstacle penalty and its position partial (z component always zero)."""
    p = np.atleast_2d(p)
    diff = p[:, None, :2] - np.asarray(centers)[None]
    phi = 1.0 - np.sum(diff * diff, axis=-1) / rho**2
    G = np.sum(np.maximum(phi, 0.0) ** power, axis=-1)
    dxy = np.sum((_dphi_factor(phi, power) * (-2.0 / rho**2))[:, :, None] * diff, axis=1)
    return G, np.concatenate([dxy, np.zeros((p.shape[0], 1))], axis=1)


def coefficient_gradient(tau: float, N: int, T: float, dp=None, dv=None, da=None, dj=None):
    """Map flat-derivative partials at one sample to ``(d/dCbar_i, d/dT at fixed Cbar)``.

    The second entry needs the sample's derivatives and is returned as a
    callable ``f(v, a, j)`` to keep this helper independent of the trajectory.
    """
    s = N / T
    out = np.zeros((S, 3))
    parts = (dp, dv, da, dj)
    for n, d in enumerate(parts):
        if d is not None:
            out += np.outer(basis(tau, n), np.asarray(d)) * s**n

    def dT(v=None, a=None, j=None):
        total = 0.0
        for n, (d, x) in enumerate(zip(parts[1:], (v, a, j)), start=1):
            if d is not None and x is not None:
                total -= n * float(np.dot(d, x)) / T
        return total

    return out, dT


def grad_time_mapping(dJ_dT: float, tau: float) -> float:
    return float(np.exp(tau) * dJ_dT)


def propagate(dJ_dC: np.ndarray, dJ_dT: float, N: int, T: float, boundary: Boundary):
    """Pull a coefficient gradient back to waypoints and duration.

    ``dJ_dT`` carries the explicit duration dependence; the right-hand-side
    channel is added here.
    """
    lam = banded_system(N).solve_transpose(np.asarray(dJ_dC, dtype=float).reshape(S * N, 3))
    dP = lam[waypoint_rows(N)]
    dT = dJ_dT
    dT += (lam[1] @ boundary.v0 + lam[-2] @ boundary.vf) / N
    dT += 2.0 * T * (lam[2] @ boundary.a0 + lam[-1] @ boundary.af) / N**2
    return dP, float(dT)


@dataclass
class Evaluation:
    x: np.ndarray
    f: float
    grad: np.ndarray
    T: float
    Cbar: np.ndarray
    V: np.ndarray
    sin_gamma: np.ndarray
    loads: np.ndarray
    clearance: np.ndarray  # center distance minus (R + r_safe), min over obstacles


class Objective:
    """Cost and gradient over the decision vector ``x = [vec(P), log T]``.

    With a fixed terminal time the duration is eliminated and ``x = vec(P)``.
    """

    def __init__(self, scenario: Scenario, config: SolverConfig, N: int, boundary: Boundary | None = None):
        self.sc = scenario
        self.config = config
        self.N = N
        self.boundary = boundary_from_scenario(scenario) if boundary is None else boundary
        self.system = banded_system(N)
        kappa = config.kappa
        self.K = kappa + 1
        table = basis_table(np.linspace(0.0, 1.0, self.K), range(4))
        self.Bstack = table.reshape(4 * self.K, S)
        self.BstackT = np.ascontiguousarray(self.Bstack.T)
        self.weights = np.tile(trapezoid_weights(kappa), N)
        self.fixed_T = scenario.time_cost.t_fixed if scenario.time_cost.mode is TimeMode.FIXED else None
        self.n_p = 3 * (N - 1)
        self.dim = self.n_p + (0 if self.fixed_T else 1)
        self.centers = np.ascontiguousarray(scenario.obstacle_centers, dtype=float)
        self.radii = np.ascontiguousarray(scenario.obstacle_radii, dtype=float).reshape(-1)
        self.rho = (1.0 + config.zeta_obs) * (self.radii + scenario.r_safe)
        self.box = {}
        for kind in PENALTY_KINDS:
            c, h = scenario.bounds.center_half(kind)
            self.box[kind] = (c, (1.0 - config.zeta(kind)) * h, config.weight(kind))
        self._box_c, self._box_h, self._box_lam = (np.array([self.box[k][i] for k in PENALTY_KINDS], dtype=float) for i in range(3))
        self._dC = np.zeros((S * N, 3))
        self._D = np.zeros((S * N, 3))
        self._wrows = waypoint_rows(N)
        self.n_evals = 0
        self.last: Evaluation | None = None

    # -- packing --------------------------------------------------------------

    def pack(self, P, T: float | None = None) -> np.ndarray:
        P = np.asarray(P, dtype=float).reshape(-1)
        if self.fixed_T:
            return P.copy()
        return np.concatenate([P, [np.log(T)]])

    def unpack(self, x) -> tuple[np.ndarray, float]:
        P = np.asarray(x[: self.n_p]).reshape(self.N - 1, 3)
        if self.fixed_T:
            return P, self.fixed_T
        with np.errstate(over="ignore"):
            T = float(np.exp(x[-1]))
        return P, T

    def _rhs(self, P, T) -> np.ndarray:
        D = self._D
        b, N = self.boundary, self.N
        h = T / N
        D[0] = b.p0
        D[1] = h * b.v0
        D[2] = h * h * b.a0
        D[self._wrows] = P
        D[-3] = b.pf
        D[-2] = h * b.vf
        D[-1] = h * h * b.af
        return D

    # -- evaluation -----------------------------------------------------------

    def __call__(self, x) -> tuple[float, np.ndarray]:
        ev = self.evaluate(x)
        return ev.f, ev.grad

    def value(self, x) -> float:
        return self.evaluate(x).f

    def evaluate(self, x) -> Evaluation:
        x = np.array(x, dtype=float)
        self.n_evals += 1
        cfg, sc, N, K = self.config, self.sc, self.N, self.K
        w = cfg.power
        P, T = self.unpack(x)
        if not (1e-8 < T < 1e8 and np.all(np.isfinite(P))):
            raise NumericalSingular(f"iterate out of range (T={T})")
        Cbar = self.system.solve(self._rhs(P, T))
        Y = np.matmul(self.Bstack, Cbar.reshape(N, S, 3))  # (N, 4K, 3)
        s = N / T
        M = N * K
        p = Y[:, 0:K].reshape(M, 3)
        v = Y[:, K : 2 * K].reshape(M, 3) * s
        a = Y[:, 2 * K : 3 * K].reshape(M, 3) * (s * s)
        j = Y[:, 3 * K :].reshape(M, 3) * (s * s * s)
        wq = self.weights
        gp, gv, ga, gj = (np.empty((M, 3)) for _ in range(4))
        V, sg, clearance = np.empty(M), np.empty(M), np.empty(M)
        loads = np.empty((M, 3))
        acc, tsum, status = sample_pass(
            p, v, a, j, wq,
            self.centers, self.radii, self.rho, float(sc.r_safe),
            self._box_c, self._box_h, self._box_lam,
            float(cfg.lambda_e), float(cfg.lambda_obs), w, float(sc.g), float(cfg.v_eps),
            gp, gv, ga, gj, V, sg, loads, clearance,
        )  # fmt: skip
        if status == 1:
            raise SingularVelocity("velocity below singularity guard")
        if status == 2:
            raise SingularVertical("velocity parallel to vertical axis")

        h = T / (cfg.kappa * N)
        Jint = h * acc
        f = time_cost(T, sc.time_cost, w) + Jint
        dC = coefficient_pullback(self.BstackT, gp, gv, ga, gj, wq, h, s, N, K, self._dC)

        dT = time_cost_derivative(T, sc.time_cost, w) + Jint / T - h / T * tsum
        dP, dT = propagate(dC, dT, N, T, self.boundary)
        grad = dP.reshape(-1)
        if not self.fixed_T:
            grad = np.concatenate([grad, [T * dT]])

        ev = Evaluation(x, f, grad, T, Cbar, V, sg, loads, clearance)
        self.last = ev
        return ev


class FiniteDifferenceObjective:
    """Drop-in for :class:`Objective` whose gradient is central differences of the value.

    Used to compare solve times against the analytic gradient.
    """

    def __init__(self, inner: Objective, h: float = 1e-6):
        self.inner = inner
        self.h = h
        self.N = inner.N
        self.boundary = inner.boundary
        self.last: Evaluation | None = None

    def pack(self, P, T: float | None = None) -> np.ndarray:
        return self.inner.pack(P, T)

    def unpack(self, x):
        return self.inner.unpack(x)

    def evaluate(self, x) -> Evaluation:
        ev = self.inner.evaluate(x)
        x = ev.x
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = self.h
            g[i] = (self.inner.value(x + e) - self.inner.value(x - e)) / (2.0 * self.h)
        ev.grad = g
        self.last = ev
        return ev

    def __call__(self, x) -> tuple[float, np.ndarray]:
        ev = self.evaluate(x)
        return ev.f, ev.grad
