"""Full solve loop: normalize, seed from the Dubins path, run L-BFGS, de-normalize."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._kernel import max_violations
from .detour import detour_waypoints
from .costs import CostBreakdown, sample_trajectory, trajectory_cost
from .errors import FlatwingError, Infeasible, InitFailure
from .flat import controls_batch
from .gradients import Evaluation, Objective
from .initializer import Scaling, choose_N, initial_guess, normalize
from .lbfgs import minimize
from .problem import PENALTY_KINDS, Scenario, SolverConfig, TimeMode
from .spline import FlatTrajectory

RESIDUAL_KINDS = PENALTY_KINDS + ("obs",)
FEAS_TOL = 1e-9


@dataclass
class SolveReport:
    converged: bool
    feasible: bool
    status: str
    iterations: int
    first_feasible_iter: Optional[int]
    wall_time: float
    cpu_time: float
    cpu_to_feasible: Optional[float]
    n_evals: int
    N: int
    T: float  # physical duration (s)
    objective: float  # normalized J at exit
    grad_norm: float
    breakdown: CostBreakdown  # normalized units
    residuals: dict[str, float]  # physical units, against the unshrunk bounds
    history: list = field(default_factory=list)  # objective per iteration of the returned attempt
    restarts: int = 0  # detour restarts run after the first attempt

    @property
    def success(self) -> bool:
        return self.converged and self.feasible

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("converged", "feasible", "status", "iterations", "first_feasible_iter",
                                              "wall_time", "cpu_time", "cpu_to_feasible", "n_evals", "N", "T",
                                              "objective", "grad_norm", "restarts")}  # fmt: skip
        out["residuals"] = dict(self.residuals)
        out["breakdown"] = self.breakdown.as_dict()
        return out


@dataclass
class Solution:
    report: SolveReport
    trajectory: FlatTrajectory  # physical units
    scenario: Scenario
    scaling: Scaling
    config: SolverConfig


def _residuals(V, sg, loads, clearance, sc: Scenario) -> dict[str, float]:
    b = sc.bounds
    lo, hi = np.array([b.interval(k) for k in PENALTY_KINDS], dtype=float).T
    if not sc.obstacles:
        clearance = np.zeros(0)
    out = max_violations(np.ascontiguousarray(V, dtype=float), np.ascontiguousarray(sg, dtype=float),
                         np.ascontiguousarray(loads, dtype=float).reshape(-1, 3),
                         np.ascontiguousarray(clearance, dtype=float), lo, hi, np.empty(6))  # fmt: skip
    return {k: float(v) for k, v in zip(RESIDUAL_KINDS, out)}


def _is_feasible(res: dict[str, float], sc: Scenario) -> bool:
    # relative tolerance per family so the test is the same in any unit system
    scale = {"V": sc.bounds.V[1], "obs": max(sc.r_safe, 1e-12)}
    return all(v <= FEAS_TOL * scale.get(k, 1.0) for k, v in res.items())


def feasibility_check(traj: FlatTrajectory, sc: Scenario, config: SolverConfig) -> dict[str, float]:
    """Largest violation of each constraint family over all quadrature samples.

    Uses the original bounds (no margin). The obstacle entry is
    ``max(R_obs + R_safe - d_obs, 0)`` with ``d_obs`` the horizontal center distance.
    """
    smp = sample_trajectory(traj, config.kappa)
    v = smp.v.reshape(-1, 3)
    a = smp.a.reshape(-1, 3)
    p = smp.p.reshape(-1, 3)
    V = np.linalg.norm(v, axis=-1)
    sg = -v[:, 2] / V
    loads = controls_batch(v, a, sc.g)
    if sc.obstacles:
        d = np.linalg.norm(p[:, None, :2] - sc.obstacle_centers[None], axis=-1)
        clearance = np.min(d - (sc.obstacle_radii + sc.r_safe), axis=1)
    else:
        clearance = np.zeros(0)
    return _residuals(V, sg, loads, clearance, sc)


def _eval_residuals(ev: Evaluation, nsc: Scenario) -> dict[str, float]:
    return _residuals(ev.V, ev.sin_gamma, ev.loads, ev.clearance, nsc)


def _physical_residuals(res: dict[str, float], scaling: Scaling) -> dict[str, float]:
    out = dict(res)
    out["V"] *= scaling.speed
    out["obs"] *= scaling.eta_L
    return out


def normalized_config(config: SolverConfig, scaling: Scaling) -> SolverConfig:
    """Config whose weights give ``J_physical / eta_T`` on the normalized problem.

    Time and the dimensionless penalties already scale by ``1 / eta_T``; the
    jerk integral picks up ``eta_T^5 / eta_L^2`` and is compensated here so the
    weight ``lambda_e`` always refers to ``int j^T j dt`` in SI units.
    """
    return config.with_(lambda_e=config.lambda_e * scaling.eta_L**2 / scaling.eta_T**6)


def prepare(scenario: Scenario, config: SolverConfig, eta_L: float | None = None):
    """Normalized scenario and config, scaling, segment count, objective and initial point."""
    nsc, scaling, path = normalize(scenario, config, eta_L)
    ncfg = normalized_config(config, scaling)
    N = config.n_segments or choose_N(path.length, scenario.r_min, config.kn)
    P0, tau0 = initial_guess(path, N, scaling)
    obj = Objective(nsc, ncfg, N)
    x0 = obj.pack(P0, np.exp(tau0))
    return nsc, ncfg, scaling, N, obj, x0


def solve(
    scenario: Scenario,
    config: SolverConfig | None = None,
    *,
    raise_infeasible: bool = True,
    eta_L: float | None = None,
    keep_history: bool = False,
    objective_factory=None,
) -> Solution:
    """Optimize a trajectory for ``scenario``.

    Exits once the current iterate satisfies every original bound at every
    quadrature sample and the gradient norm is at most ``config.gtol``.
    If only feasibility is reached within the budget the result is returned
    with ``converged=False``; otherwise :class:`Infeasible` is raised (or the
    infeasible solution is returned when ``raise_infeasible`` is false).
    A run that stops with an obstacle violated gets up to
    ``config.detour_rounds`` recovery rounds within the same iteration
    budget. Each round restarts from waypoints pushed around either side of
    the offending cluster of overlapping obstacles, and the best attempt is
    returned.
    ``objective_factory(nsc, config, N)`` swaps the cost/gradient callable,
    which is how the finite-difference comparison is run.
    """
    config = config or SolverConfig()
    scenario.validate()
    cpu0, wall0 = time.process_time(), time.perf_counter()
    nsc, ncfg, scaling, N, obj, x0 = prepare(scenario, config, eta_L)
    if objective_factory is not None:
        obj = objective_factory(nsc, ncfg, N)
    try:
        obj.evaluate(x0)
    except FlatwingError as exc:
        raise InitFailure(f"objective undefined at the initial guess: {exc}") from exc

    offset = 0  # iterations spent in earlier attempts
    state = {"first": None, "cpu_first": None}

    def current(x) -> Evaluation:
        ev = obj.last
        if ev is None or not np.array_equal(ev.x, x):
            ev = obj.evaluate(x)
        return ev

    def note_feasible(k, res) -> bool:
        feas = _is_feasible(res, nsc)
        if feas and state["first"] is None:
            state["first"], state["cpu_first"] = offset + k, time.process_time() - cpu0
        return feas

    def stop(k, x, f, g):
        return note_feasible(k, _eval_residuals(current(x), nsc)) and float(np.linalg.norm(g)) <= config.gtol

    def attempt(x_start, budget):
        note_feasible(0, _eval_residuals(current(x_start), nsc))
        result = minimize(obj, x_start, memory=config.memory, max_iter=budget, gtol=config.gtol,
                          callback=stop, keep_history=keep_history)  # fmt: skip
        res = _eval_residuals(current(result.x), nsc)
        feasible = _is_feasible(res, nsc)
        return result, res, feasible, feasible and result.grad_norm <= config.gtol

    def rank(outcome):
        result, _, feasible, converged = outcome
        return (not converged, not feasible, result.f)

    best = attempt(x0, config.max_iter)
    offset = best[0].iterations
    restarts = 0
    for _ in range(config.detour_rounds):
        if best[3] or best[1]["obs"] <= 0 or offset >= config.max_iter:
            break
        P, T_norm = obj.unpack(best[0].x)
        starts = detour_waypoints(
            FlatTrajectory.from_waypoints(P, T_norm, obj.boundary),
            nsc.obstacle_centers,
            nsc.obstacle_radii + nsc.r_safe,
            (1.0 + ncfg.zeta_obs) * (nsc.obstacle_radii + nsc.r_safe),
        )
        for Pc, Tc in starts:
            x_start = obj.pack(Pc, Tc)
            try:
                current(x_start)
            except FlatwingError:
                continue
            outcome = attempt(x_start, config.max_iter - offset)
            offset += outcome[0].iterations
            restarts += 1
            best = min(best, outcome, key=rank)
            if offset >= config.max_iter or best[3]:
                break

    result, res, feasible, converged = best
    P, T_norm = obj.unpack(result.x)
    ntraj = FlatTrajectory.from_waypoints(P, T_norm, obj.boundary)
    breakdown = trajectory_cost(ntraj, nsc, ncfg)
    traj = ntraj.scaled(scaling.eta_L, scaling.eta_T)
    if scenario.time_cost.mode is TimeMode.FIXED:
        traj = replace(traj, T=scenario.time_cost.t_fixed)
    cpu, wall = time.process_time() - cpu0, time.perf_counter() - wall0

    report = SolveReport(
        converged=converged,
        feasible=feasible,
        status=result.status,
        iterations=offset,
        first_feasible_iter=state["first"],
        wall_time=wall,
        cpu_time=cpu,
        cpu_to_feasible=state["cpu_first"],
        n_evals=result.n_evals,
        N=N,
        T=float(traj.T),
        objective=float(result.f),
        grad_norm=result.grad_norm,
        breakdown=breakdown,
        residuals=_physical_residuals(res, scaling),
        history=result.history,
        restarts=restarts,
    )
    sol = Solution(report, traj, scenario, scaling, config)
    if not feasible and raise_infeasible:
        exc = Infeasible(f"constraints violated after {result.iterations} iterations ({result.status}): "
                         f"{ {k: v for k, v in report.residuals.items() if v > 0} }")  # fmt: skip
        exc.solution = sol
        raise exc
    return sol
