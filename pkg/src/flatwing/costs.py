"""Objective terms: time cost, trapezoidal integral penalties, active-set filter.

All functions are unit-agnostic: they work the same on a physical scenario
or on its normalized copy, as long as the inputs are consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flat import controls_batch, inverse_map
from .problem import PENALTY_KINDS, Scenario, SolverConfig, TimeCost, TimeMode
from .spline import Boundary, FlatTrajectory, basis_table


def boundary_from_scenario(sc: Scenario) -> Boundary:
    start = inverse_map(sc.x0, sc.u0, sc.g)
    end = inverse_map(sc.xf, sc.uf, sc.g)
    return Boundary(start.p, start.v, start.a, end.p, end.v, end.a)


# -- time ------------------------------------------------------------------


def time_mapping(tau: float) -> float:
    return float(np.exp(tau))


def inverse_time_mapping(T: float) -> float:
    return float(np.log(T))


def time_cost(T: float, tc: TimeCost, power: int = 3) -> float:
    if tc.mode is TimeMode.MIN_TIME:
        return float(T)
    if tc.mode is TimeMode.WINDOW:
        center = 0.5 * (tc.t_max + tc.t_min)
        half = 0.5 * (tc.t_max - tc.t_min)
        phi = ((T - center) / half) ** 2 - 1.0
        return max(phi, 0.0) ** power
    return 0.0


def time_cost_derivative(T: float, tc: TimeCost, power: int = 3) -> float:
    if tc.mode is TimeMode.MIN_TIME:
        return 1.0
    if tc.mode is TimeMode.WINDOW:
        center = 0.5 * (tc.t_max + tc.t_min)
        half = 0.5 * (tc.t_max - tc.t_min)
        phi = ((T - center) / half) ** 2 - 1.0
        if phi <= 0:
            return 0.0
        return power * phi ** (power - 1) * 2.0 * (T - center) / half**2
    return 0.0


# -- quadrature ------------------------------------------------------------


def trapezoid_weights(kappa: int) -> np.ndarray:
    w = np.ones(kappa + 1)
    w[0] = w[-1] = 0.5
    return w


def integral_cost(values: np.ndarray, T: float, kappa: int) -> float:
    """Trapezoidal integral of per-sample values shaped ``(N, kappa + 1)``."""
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    return float(T / (kappa * N) * np.sum(values @ trapezoid_weights(kappa)))


@dataclass
class Samples:
    """Flat derivatives at the ``kappa + 1`` quadrature nodes of every segment."""

    traj: FlatTrajectory
    kappa: int
    p: np.ndarray  # (N, K, 3)
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray

    @property
    def times(self) -> np.ndarray:
        N, K = self.p.shape[:2]
        k = np.arange(K) / self.kappa
        return (np.arange(N)[:, None] + k[None, :]) * self.traj.T / N


def sample_trajectory(traj: FlatTrajectory, kappa: int) -> Samples:
    taus = np.linspace(0.0, 1.0, kappa + 1)
    table = basis_table(taus, range(4))
    C = traj.Cbar.reshape(traj.N, 6, 3)
    s = traj.N / traj.T
    d = [np.einsum("kc,ncd->nkd", table[n], C) * s**n for n in range(4)]
    return Samples(traj, kappa, *d)


# -- integrands --------------------------------------------------------------


def hinge(phi, power: int):
    return np.maximum(phi, 0.0) ** power


def jerk_integrand(j) -> np.ndarray:
    j = np.asarray(j, dtype=float)
    return np.sum(j * j, axis=-1)


def obstacle_phi(p, centers, radii, r_safe: float, zeta_obs: float) -> np.ndarray:
    """Normalized distance field per obstacle, shape ``p.shape[:-1] + (M,)``."""
    p = np.asarray(p, dtype=float)
    rho = (1.0 + zeta_obs) * (np.asarray(radii) + r_safe)
    diff = p[..., None, :2] - np.asarray(centers)
    d2 = np.sum(diff * diff, axis=-1)
    return 1.0 - d2 / rho**2


def obstacle_integrand(p, sc: Scenario, zeta_obs: float, power: int = 3) -> np.ndarray:
    if not sc.obstacles:
        return np.zeros(np.shape(p)[:-1])
    phi = obstacle_phi(p, sc.obstacle_centers, sc.obstacle_radii, sc.r_safe, zeta_obs)
    return np.sum(hinge(phi, power), axis=-1)


def box_phi(q, center: float, half: float, zeta: float) -> np.ndarray:
    return ((np.asarray(q) - center) / ((1.0 - zeta) * half)) ** 2 - 1.0


def speed_integrand(v, sc: Scenario, zeta_v: float, power: int = 3) -> np.ndarray:
    c, h = sc.bounds.center_half("V")
    return hinge(box_phi(np.linalg.norm(v, axis=-1), c, h, zeta_v), power)


def sin_gamma(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return -v[..., 2] / np.linalg.norm(v, axis=-1)


def gamma_integrand(v, sc: Scenario, zeta_gamma: float, power: int = 3) -> np.ndarray:
    c, h = sc.bounds.center_half("gamma")
    return hinge(box_phi(sin_gamma(v), c, h, zeta_gamma), power)


def load_integrand(v, a, sc: Scenario, axis: str, zeta_n: float, power: int = 3) -> np.ndarray:
    n = controls_batch(v, a, sc.g)[..., "xyz".index(axis[-1])]
    c, h = sc.bounds.center_half(f"n{axis[-1]}")
    return hinge(box_phi(n, c, h, zeta_n), power)


def constraint_quantities(v, a, g: float) -> dict[str, np.ndarray]:
    """Physical quantities each box penalty acts on."""
    n = controls_batch(v, a, g)
    return {
        "V": np.linalg.norm(v, axis=-1),
        "gamma": sin_gamma(v),
        "nx": n[..., 0],
        "ny": n[..., 1],
        "nz": n[..., 2],
    }


# -- filter --------------------------------------------------------------------


@dataclass
class ActiveSets:
    obstacles: np.ndarray  # (N, M) bool
    performance: dict[str, np.ndarray] = field(default_factory=dict)  # kind -> (N,) bool


def filter_active(samples: Samples, sc: Scenario, config: SolverConfig) -> ActiveSets:
    """Per-segment terms that can be non-zero at the current iterate.

    Obstacle ``j`` is dropped on segment ``i`` when every sample is farther than
    the inflated radius plus the segment's largest sample spacing; a box
    constraint is dropped when every sample lies inside its shrunk interval.
    """
    N = samples.p.shape[0]
    horiz = samples.p[..., :2]
    if sc.obstacles:
        spacing = np.max(np.linalg.norm(np.diff(horiz, axis=1), axis=-1), axis=1)
        rho = (1.0 + config.zeta_obs) * (sc.obstacle_radii + sc.r_safe)
        d = np.linalg.norm(horiz[:, :, None, :] - sc.obstacle_centers[None, None], axis=-1)
        obs = ~np.all(d >= rho[None, None, :] + spacing[:, None, None], axis=1)
    else:
        obs = np.zeros((N, 0), dtype=bool)
    q = constraint_quantities(samples.v, samples.a, sc.g)
    perf = {}
    for kind in PENALTY_KINDS:
        c, h = sc.bounds.center_half(kind)
        inside = np.abs(q[kind] - c) <= (1.0 - config.zeta(kind)) * h
        perf[kind] = ~np.all(inside, axis=1)
    return ActiveSets(obs, perf)


# -- totals --------------------------------------------------------------------


@dataclass
class CostBreakdown:
    Q: float
    integrals: dict[str, float]
    weights: dict[str, float]

    @property
    def weighted(self) -> dict[str, float]:
        return {k: self.weights[k] * v for k, v in self.integrals.items()}

    @property
    def total(self) -> float:
        return self.Q + sum(self.weighted.values())

    def as_dict(self) -> dict[str, float]:
        out = {"Q": self.Q}
        out.update({f"I_{k}": v for k, v in self.integrals.items()})
        out["J"] = self.total
        return out


def integrand_values(samples: Samples, sc: Scenario, config: SolverConfig, active: ActiveSets | None = None) -> dict[str, np.ndarray]:
    w = config.power
    vals = {"e": jerk_integrand(samples.j)}
    if sc.obstacles:
        phi = obstacle_phi(samples.p, sc.obstacle_centers, sc.obstacle_radii, sc.r_safe, config.zeta_obs)
        G = hinge(phi, w)
        if active is not None:
            G = G * active.obstacles[:, None, :]
        vals["obs"] = np.sum(G, axis=-1)
    else:
        vals["obs"] = np.zeros(samples.p.shape[:2])
    q = constraint_quantities(samples.v, samples.a, sc.g)
    for kind in PENALTY_KINDS:
        c, h = sc.bounds.center_half(kind)
        if active is not None and not np.any(active.performance[kind]):
            vals[kind] = np.zeros(samples.p.shape[:2])
            continue
        G = hinge(box_phi(q[kind], c, h, config.zeta(kind)), w)
        if active is not None:
            G = G * active.performance[kind][:, None]
        vals[kind] = G
    return vals


def trajectory_cost(traj: FlatTrajectory, sc: Scenario, config: SolverConfig, use_filter: bool | None = None) -> CostBreakdown:
    samples = sample_trajectory(traj, config.kappa)
    use_filter = config.use_filter if use_filter is None else use_filter
    active = filter_active(samples, sc, config) if use_filter else None
    vals = integrand_values(samples, sc, config, active)
    integrals = {k: integral_cost(v, traj.T, config.kappa) for k, v in vals.items()}
    weights = {k: config.weight(k) for k in vals}
    return CostBreakdown(time_cost(traj.T, sc.time_cost, config.power), integrals, weights)


def total_cost(P, tau: float, sc: Scenario, config: SolverConfig, boundary: Boundary | None = None) -> CostBreakdown:
    """Cost breakdown for interior waypoints ``P`` and log-duration ``tau``."""
    boundary = boundary_from_scenario(sc) if boundary is None else boundary
    traj = FlatTrajectory.from_waypoints(P, time_mapping(tau), boundary)
    return trajectory_cost(traj, sc, config)
