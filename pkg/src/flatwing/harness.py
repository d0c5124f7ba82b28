"""Scenario files, preset scenarios, random environments, metrics, bench and sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .costs import sample_trajectory
from .errors import FlatwingError, Infeasible, InvalidScenario
from .flat import G0, LoadControls, UavState, controls_batch, states_batch
from .costs import total_cost
from .initializer import reference_path
from .lbfgs import minimize
from .planner import Solution, prepare, solve
from .problem import Bounds, Obstacle, Scenario, SolverConfig, TimeCost, TimeMode, deg_state
from .spline import FlatTrajectory

SCHEMA_VERSION = 1
UNITS = {"length": "m", "speed": "m/s", "angle": "deg", "time": "s", "load": "g"}
GROUP_WIDTH_Y = 5000.0
DENSITY = 0.4  # obstacles per km^2
RADIUS_RANGE = (200.0, 400.0)

# -- scenario files --------------------------------------------------------------


def _state_to_dict(s: UavState) -> dict:
    return {"x": s.x, "y": s.y, "z": s.z, "V": s.V, "chi": math.degrees(s.chi), "gamma": math.degrees(s.gamma)}


def _state_from_dict(d: dict) -> UavState:
    try:
        return deg_state(d["x"], d["y"], d["z"], d["V"], d["chi"], d["gamma"])
    except KeyError as exc:
        raise InvalidScenario(f"state is missing field {exc}") from None


def _controls_from_dict(d: dict | None) -> LoadControls:
    if d is None:
        return LoadControls(0.0, 0.0, 1.0)
    return LoadControls(float(d.get("n_x", 0.0)), float(d.get("n_y", 0.0)), float(d.get("n_z", 1.0)))


def scenario_to_dict(sc: Scenario, config: SolverConfig | None = None, seed: int | None = None) -> dict:
    b = sc.bounds
    tc = sc.time_cost
    if tc.mode is TimeMode.WINDOW:
        time_cost = {"mode": "window", "t_min": tc.t_min, "t_max": tc.t_max}
    elif tc.mode is TimeMode.FIXED:
        time_cost = {"mode": "fixed", "t": tc.t_fixed}
    else:
        time_cost = {"mode": "min_time"}
    out = {
        "schema_version": SCHEMA_VERSION,
        "units": dict(UNITS),
        "name": sc.name,
        "x0": _state_to_dict(sc.x0),
        "xf": _state_to_dict(sc.xf),
        "u0": asdict(sc.u0),
        "uf": asdict(sc.uf),
        "bounds": {
            "V": list(b.V),
            "gamma": [math.degrees(b.gamma[0]), math.degrees(b.gamma[1])],
            "n_x": list(b.nx),
            "n_y": list(b.ny),
            "n_z": list(b.nz),
        },
        "obstacles": [{"x": o.x, "y": o.y, "radius": o.radius} for o in sc.obstacles],
        "r_safe": sc.r_safe,
        "time_cost": time_cost,
        "g": sc.g,
    }
    if config is not None:
        default = SolverConfig()
        out["solver"] = {f.name: getattr(config, f.name) for f in fields(config) if getattr(config, f.name) != getattr(default, f.name)}
    if seed is not None:
        out["seed"] = seed
    return out


def scenario_from_dict(d: dict) -> tuple[Scenario, SolverConfig]:
    """Parse a scenario document; raises :class:`InvalidScenario` on any problem."""
    if not isinstance(d, dict):
        raise InvalidScenario("scenario document must be an object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InvalidScenario(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    units = d.get("units", UNITS)
    if units.get("angle", "deg") != "deg" or units.get("length", "m") != "m":
        raise InvalidScenario(f"unsupported units {units}")
    for key in ("x0", "xf"):
        if key not in d:
            raise InvalidScenario(f"missing required field '{key}'")
    try:
        bd = d.get("bounds", {})
        default = Bounds()
        bounds = Bounds(
            V=tuple(bd.get("V", default.V)),
            gamma=tuple(math.radians(g) for g in bd["gamma"]) if "gamma" in bd else default.gamma,
            nx=tuple(bd.get("n_x", default.nx)),
            ny=tuple(bd.get("n_y", default.ny)),
            nz=tuple(bd.get("n_z", default.nz)),
        )
        tcd = d.get("time_cost", {"mode": "min_time"})
        mode = TimeMode(tcd.get("mode", "min_time"))
        if mode is TimeMode.WINDOW:
            tc = TimeCost.window(float(tcd["t_min"]), float(tcd["t_max"]))
        elif mode is TimeMode.FIXED:
            tc = TimeCost.fixed(float(tcd["t"]))
        else:
            tc = TimeCost()
        obstacles = tuple(Obstacle(float(o["x"]), float(o["y"]), float(o["radius"])) for o in d.get("obstacles", []))
        sc = Scenario(
            x0=_state_from_dict(d["x0"]),
            xf=_state_from_dict(d["xf"]),
            u0=_controls_from_dict(d.get("u0")),
            uf=_controls_from_dict(d.get("uf")),
            bounds=bounds,
            obstacles=obstacles,
            r_safe=float(d.get("r_safe", 100.0)),
            time_cost=tc,
            g=float(d.get("g", G0)),
            name=str(d.get("name", "")),
        )
        config = SolverConfig(**d.get("solver", {}))
    except InvalidScenario:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScenario(f"malformed scenario: {exc}") from None
    return sc, config


def load_scenario(path) -> tuple[Scenario, SolverConfig]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidScenario(f"cannot read scenario {path}: {exc}") from None
    return scenario_from_dict(doc)


def save_scenario(path, sc: Scenario, config: SolverConfig | None = None, seed: int | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc, config, seed), fh, indent=2)
        fh.write("\n")


# -- random environments -------------------------------------------------------------


def _keepout_ok(c, r, points, clearance) -> bool:
    return all(math.hypot(c[0] - p[0], c[1] - p[1]) >= r + clearance for p in points)


def gen_random_env(
    extent: tuple[float, float],
    density: float = DENSITY,
    radius_range: tuple[float, float] = RADIUS_RANGE,
    seed: int = 0,
    origin: tuple[float, float] = (0.0, 0.0),
    keep_clear: Sequence[tuple[float, float]] = (),
    clearance: float = 0.0,
) -> list[Obstacle]:
    """Cylinders with Latin-hypercube centers over a rectangle.

    ``extent`` is the horizontal size in meters; the count is
    ``round(density * area_km2)``. Centers that land within ``r + clearance``
    of any point in ``keep_clear`` are redrawn uniformly.
    """
    lx, ly = extent
    count = int(round(density * lx * ly / 1e6))
    rng = np.random.default_rng(seed)
    lhs = qmc.LatinHypercube(d=2, seed=rng).random(count) if count else np.zeros((0, 2))
    radii = rng.uniform(*radius_range, size=count)
    out = []
    for (u, v), r in zip(lhs, radii):
        c = (origin[0] + u * lx, origin[1] + v * ly)
        for _ in range(1000):
            if _keepout_ok(c, r, keep_clear, clearance):
                break
            c = (origin[0] + rng.uniform() * lx, origin[1] + rng.uniform() * ly)
        else:
            raise InvalidScenario("could not place obstacle outside the keep-out zones")
        out.append(Obstacle(float(c[0]), float(c[1]), float(r)))
    return out


# -- preset scenarios ----------------------------------------------------------------

# Fifteen cylinders between the start and goal of the penetration case. The
# layout was generated once (LHS, radii in [200, 400] m) and frozen here.
# 15 cylinders drawn once with gen_random_env((7500, 5000), seed=0,
# origin=(1000, -2000), keep-out around both endpoints) and frozen here.
PENETRATION_OBSTACLES = (
    Obstacle(4528.5, 1894.6, 327.4),
    Obstacle(1638.8, 958.1, 254.0),
    Obstacle(5288.5, -216.0, 208.2),
    Obstacle(8471.7, 1060.4, 203.3),
    Obstacle(4365.7, -559.7, 362.7),
    Obstacle(3072.7, 636.7, 382.6),
    Obstacle(6544.6, 2026.2, 321.3),
    Obstacle(2441.7, 2830.4, 345.9),
    Obstacle(5665.8, -1335.7, 308.7),
    Obstacle(3778.2, -1155.5, 387.0),
    Obstacle(7899.9, 118.4, 363.2),
    Obstacle(2762.6, -823.5, 200.5),
    Obstacle(7389.0, -1957.4, 371.5),
    Obstacle(1118.4, 2545.9, 206.7),
    Obstacle(6174.0, 1451.8, 345.9),
)


def penetration_scenario() -> Scenario:
    return Scenario(
        x0=deg_state(500, 500, -200, 30.5, -90, 0),
        xf=deg_state(9500, 500, -1800, 30.5, 0, 0),
        obstacles=PENETRATION_OBSTACLES,
        name="penetration",
    )


def two_cylinder_scenario() -> Scenario:
    return Scenario(
        x0=deg_state(300, 4700, -500, 30, -90, 0),
        xf=deg_state(4700, 300, -1000, 30, -90, 0),
        obstacles=(Obstacle(1800, 3800, 800), Obstacle(3200, 1200, 800)),
        name="two-cylinder",
    )


def two_cylinder_config(**kw) -> SolverConfig:
    return SolverConfig.uniform(1e3, 0.01, lambda_e=1e-3, **kw)


def random_group_scenario(group: int, seed: int) -> Scenario:
    """Scenario of bench group ``group`` (1-based): ``(5 + 2.5 i) km x 5 km``."""
    if group < 1:
        raise InvalidScenario("group index starts at 1")
    lx = 5000.0 + 2500.0 * group
    x0 = deg_state(500, 2500, -500, 30, 0, 0)
    xf = deg_state(4500 + 2500 * group, 2500, -1000, 30, 0, 0)
    sc0 = Scenario(x0=x0, xf=xf)
    obstacles = gen_random_env(
        (lx, GROUP_WIDTH_Y),
        seed=seed,
        keep_clear=[(x0.x, x0.y), (xf.x, xf.y)],
        clearance=sc0.r_safe + sc0.r_min,
    )
    return sc0.with_(obstacles=tuple(obstacles), name=f"group{group}-seed{seed}")


# -- metrics -----------------------------------------------------------------------------


def _dense_samples(traj: FlatTrajectory, kappa: int):
    smp = sample_trajectory(traj, kappa)
    w = np.ones(kappa + 1)
    w[0] = w[-1] = 0.5
    h = traj.T / (kappa * traj.N)
    return smp, h * np.tile(w, traj.N)


def surface_distance(p, sc: Scenario) -> np.ndarray:
    """Horizontal distance from each point to the nearest cylinder surface."""
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    if not sc.obstacles:
        return np.full(p.shape[0], np.inf)
    d = np.linalg.norm(p[:, None, :2] - sc.obstacle_centers[None], axis=-1) - sc.obstacle_radii
    return np.min(d, axis=1)


def min_surface_distance(traj: FlatTrajectory, sc: Scenario, kappa: int = 20) -> float:
    """Smallest surface distance over ``kappa`` samples per segment (inf without obstacles)."""
    smp = sample_trajectory(traj, kappa)
    return float(np.min(surface_distance(smp.p, sc)))


def obstacle_violation(traj: FlatTrajectory, sc: Scenario, kappa: int = 20) -> float:
    """``int max(1 - d_obs / R_safe, 0) dt`` with ``d_obs`` the surface distance."""
    if not sc.obstacles:
        return 0.0
    smp, w = _dense_samples(traj, kappa)
    d = surface_distance(smp.p, sc)
    return float(w @ np.maximum(1.0 - d / sc.r_safe, 0.0))


def smoothness(traj: FlatTrajectory, kappa: int = 20) -> float:
    """``E = int j^T j dt`` in SI units."""
    smp, w = _dense_samples(traj, kappa)
    j = smp.j.reshape(-1, 3)
    return float(w @ np.sum(j * j, axis=1))


def physical_objective(sol: Solution) -> float:
    """Objective in seconds: the normalized value times ``eta_T``."""
    return sol.report.objective * sol.scaling.eta_T


# -- trajectory export ---------------------------------------------------------------------

TRAJ_COLUMNS = ("t", "x", "y", "z", "V", "chi", "gamma", "n_x", "n_y", "n_z", "min_d_obs")


def trajectory_table(traj: FlatTrajectory, sc: Scenario, dt: float = 1.0) -> np.ndarray:
    """Rows of :data:`TRAJ_COLUMNS`; angles in degrees, the last row at ``t = T``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t = np.arange(0.0, traj.T, dt)
    if t.size == 0 or traj.T - t[-1] > 1e-9 * traj.T:
        t = np.append(t, traj.T)
    t[-1] = min(t[-1], traj.T)
    p = traj.derivative(t, 0)
    v = traj.derivative(t, 1)
    a = traj.derivative(t, 2)
    V, chi, gamma = states_batch(v)
    n = controls_batch(v, a, sc.g)
    d = surface_distance(p, sc)
    return np.column_stack([t, p, V, np.degrees(chi), np.degrees(gamma), n, d])


def export_trajectory(traj: FlatTrajectory, sc: Scenario, dt: float = 1.0, out=None) -> str:
    """Write the trajectory table as CSV (to ``out`` if given) and return the text."""
    rows = trajectory_table(traj, sc, dt)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJ_COLUMNS)
    for r in rows:
        writer.writerow([f"{x:.9g}" for x in r])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text


def read_trajectory_csv(text: str) -> dict[str, np.ndarray]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    data = np.array([[float(x) for x in row] for row in reader])
    return {name: data[:, i] for i, name in enumerate(header)}


# -- bench ------------------------------------------------------------------------------------


@dataclass
class BenchResult:
    group: int
    scenario: str
    seed: int
    n_obstacles: int
    success: bool
    feasible: bool
    converged: bool
    objective: float  # seconds
    T: float
    cpu_time: float
    iterations: int
    first_feasible_iter: Optional[int]
    max_residual: float
    x_obs: float
    error: str = ""
    restarts: int = 0


def run_one(sc: Scenario, config: SolverConfig, group: int = 0, seed: int = 0) -> BenchResult:
    try:
        sol = solve(sc, config, raise_infeasible=False)
    except FlatwingError as exc:
        return BenchResult(group, sc.name, seed, len(sc.obstacles), False, False, False,
                           math.nan, math.nan, math.nan, 0, None, math.inf, math.nan, type(exc).__name__)  # fmt: skip
    r = sol.report
    return BenchResult(
        group, sc.name, seed, len(sc.obstacles), r.success, r.feasible, r.converged,
        physical_objective(sol), r.T, r.cpu_time, r.iterations, r.first_feasible_iter,
        r.max_residual, obstacle_violation(sol.trajectory, sc), "", r.restarts,
    )  # fmt: skip


def _bench_task(args):
    group, seed, config = args
    return run_one(random_group_scenario(group, seed), config, group, seed)


def run_bench(groups: Iterable[int], runs: int, config: SolverConfig | None = None, seed: int = 0, jobs: int = 1) -> list[BenchResult]:
    """Solve ``runs`` random scenarios per group; results in (group, run) order."""
    config = config or SolverConfig()
    tasks = [(g, seed + 1000 * g + k, config) for g in groups for k in range(runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_bench_task, tasks))
    return [_bench_task(t) for t in tasks]


def aggregate(results: Sequence[BenchResult]) -> list[dict]:
    """Per-group success rate, CPU statistics and mean objective, in group order."""
    out = []
    for g in sorted({r.group for r in results}):
        rs = [r for r in results if r.group == g]
        cpu = np.array([r.cpu_time for r in rs], dtype=float)
        ok = [r for r in rs if r.success]
        out.append({
            "group": g,
            "runs": len(rs),
            "n_obstacles_mean": float(np.mean([r.n_obstacles for r in rs])),
            "success_rate": len(ok) / len(rs),
            "feasible_rate": sum(r.feasible for r in rs) / len(rs),
            "cpu_mean": float(np.nanmean(cpu)),
            "cpu_p50": float(np.nanpercentile(cpu, 50)),
            "cpu_p90": float(np.nanpercentile(cpu, 90)),
            "objective_mean": float(math.fsum(r.objective for r in ok) / len(ok)) if ok else math.nan,
        })  # fmt: skip
    return out


def write_csv(rows: Sequence, out=None) -> str:
    """CSV of dataclass instances or dicts, columns in declaration order."""
    dicts = [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in rows]
    buf = io.StringIO()
    if dicts:
        writer = csv.DictWriter(buf, fieldnames=list(dicts[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(dicts)
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text


# -- sweeps -----------------------------------------------------------------------------------

SWEEP_PARAMS = {"N": "n_segments", "lambda-obs": "lambda_obs", "lambda-e": "lambda_e"}


@dataclass
class SweepRow:
    param: str
    value: float
    J: float  # seconds
    Q: float  # seconds (flight time in min-time mode)
    E: float
    x_obs: float
    cpu_time: float
    iterations: int
    converged: bool
    feasible: bool


def sweep(param: str, values: Sequence[float], sc: Scenario, config: SolverConfig) -> list[SweepRow]:
    """Re-solve ``sc`` for each value of ``param`` (``N``, ``lambda-obs`` or ``lambda-e``)."""
    if param not in SWEEP_PARAMS:
        raise InvalidScenario(f"unknown sweep parameter {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    rows = []
    for value in values:
        v = int(value) if param == "N" else float(value)
        cfg = config.with_(**{SWEEP_PARAMS[param]: v})
        try:
            sol = solve(sc, cfg, raise_infeasible=False)
        except Infeasible as exc:  # pragma: no cover - raise_infeasible=False
            sol = exc.solution
        r = sol.report
        rows.append(SweepRow(
            param, v, physical_objective(sol), r.T, smoothness(sol.trajectory),
            obstacle_violation(sol.trajectory, sc), r.cpu_time, r.iterations, r.converged, r.feasible,
        ))  # fmt: skip
    return rows


# -- gradient check ----------------------------------------------------------------------------


@dataclass
class GradCheckRow:
    sample: int
    seed: int
    N: int
    mode: str
    dim: int
    grad_norm: float
    rel_error: float  # |g - g_fd| / (1 + |g_fd|)


def central_difference(fun, x, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return out


def random_instance(rng: np.random.Generator, N: int | None = None):
    """Random scenario, time mode, weights and a perturbed iterate for gradient checks.

    Returns ``(objective, x, reference)`` where ``reference(x)`` evaluates the
    cost through the independent forward path in :mod:`flatwing.costs`.
    """
    N = int(rng.integers(3, 21)) if N is None else N
    seed = int(rng.integers(2**31))
    sc = random_group_scenario(1, seed)
    t_ref = reference_path(sc).length / sc.bounds.V[1]
    mode = str(rng.choice([m.value for m in TimeMode]))
    if mode == "window":
        sc = sc.with_(time_cost=TimeCost.window(0.9 * t_ref, 1.1 * t_ref))
    elif mode == "fixed":
        sc = sc.with_(time_cost=TimeCost.fixed(float(rng.uniform(1.0, 1.3)) * t_ref))
    config = SolverConfig(n_segments=N, lambda_e=float(10 ** rng.uniform(-4, -2)))
    nsc, ncfg, _, _, obj, x0 = prepare(sc, config)
    x = x0.copy()
    x[: obj.n_p] += 0.02 * rng.standard_normal(obj.n_p)
    if not obj.fixed_T:
        x[-1] += rng.uniform(-0.2, 0.2)

    def reference(xx):
        P, T = obj.unpack(xx)
        return total_cost(P, math.log(T), nsc, ncfg, obj.boundary).total

    return obj, x, reference, seed, mode


def grad_check(samples: int = 100, seed: int = 0, h: float = 1e-6) -> list[GradCheckRow]:
    """Analytic gradient against central differences of the reference cost."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(samples):
        obj, x, reference, sc_seed, mode = random_instance(rng)
        g = obj(x)[1]
        g_fd = central_difference(reference, x, h)
        err = float(np.linalg.norm(g - g_fd) / (1.0 + np.linalg.norm(g_fd)))
        rows.append(GradCheckRow(i, sc_seed, obj.N, mode, obj.dim, float(np.linalg.norm(g)), err))
    return rows


# -- timing ------------------------------------------------------------------------------------


def per_iteration_time(sc: Scenario, config: SolverConfig, N: int, iterations: int = 200, repeats: int = 3) -> float:
    """Wall time of one optimizer iteration at ``N`` segments.

    Median callback interval of a run, minimum over ``repeats`` runs so
    scheduler noise does not masquerade as cost.
    """
    *_, obj, x0 = prepare(sc, config.with_(n_segments=N))
    best = math.inf
    for _ in range(repeats):
        stamps = [time.perf_counter()]

        def tick(k, x, f, g):
            stamps.append(time.perf_counter())
            return False

        minimize(obj, x0, memory=config.memory, max_iter=iterations, gtol=0.0, callback=tick)
        best = min(best, float(np.median(np.diff(stamps[1:]))))
    return best


def power_law_fit(x, y) -> tuple[float, float]:
    """Exponent and R^2 of a least-squares line through ``(log x, log y)``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    r2 = 1.0 - float(resid @ resid) / float(np.sum((ly - ly.mean()) ** 2))
    return float(slope), r2
