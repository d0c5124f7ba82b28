"""Problem scaling and the Dubins-based initial guess.

Headings follow the NED convention: ``chi`` is measured from +x (north) toward
+y (east). Arc types are named by the sign of the heading rate: ``L`` turns
toward decreasing ``chi``, ``R`` toward increasing ``chi``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import atan2, cos, sin, sqrt, acos, pi, tan, ceil

import numpy as np

from .errors import DegenerateEndpoints, InitFailure
from .flat import UavState
from .problem import Bounds, Obstacle, Scenario, SolverConfig

TWO_PI = 2.0 * pi
WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")


def _mod2pi(x: float) -> float:
    return x % TWO_PI


@dataclass(frozen=True)
class Scaling:
    eta_L: float
    eta_T: float

    @property
    def speed(self) -> float:
        return self.eta_L / self.eta_T

    @property
    def accel(self) -> float:
        return self.eta_L / self.eta_T**2

    def scale_state(self, s: UavState) -> UavState:
        L = self.eta_L
        return UavState(s.x / L, s.y / L, s.z / L, s.V / self.speed, s.chi, s.gamma)

    def unscale_state(self, s: UavState) -> UavState:
        L = self.eta_L
        return UavState(s.x * L, s.y * L, s.z * L, s.V * self.speed, s.chi, s.gamma)

    def scale_scenario(self, sc: Scenario) -> Scenario:
        return _rescale(sc, 1.0 / self.eta_L, 1.0 / self.eta_T)

    def unscale_scenario(self, sc: Scenario) -> Scenario:
        return _rescale(sc, self.eta_L, self.eta_T)


def _rescale(sc: Scenario, length: float, time: float) -> Scenario:
    speed = length / time

    def st(s: UavState) -> UavState:
        return UavState(s.x * length, s.y * length, s.z * length, s.V * speed, s.chi, s.gamma)

    b = sc.bounds
    bounds = Bounds(V=(b.V[0] * speed, b.V[1] * speed), gamma=b.gamma, nx=b.nx, ny=b.ny, nz=b.nz)
    obstacles = tuple(Obstacle(o.x * length, o.y * length, o.radius * length) for o in sc.obstacles)
    tc = sc.time_cost.scaled(1.0 / time)
    return replace(
        sc,
        x0=st(sc.x0),
        xf=st(sc.xf),
        bounds=bounds,
        obstacles=obstacles,
        r_safe=sc.r_safe * length,
        time_cost=tc,
        g=sc.g * length / time**2,
    )


# -- 2D Dubins ---------------------------------------------------------------------


def _word_params(word: str, alpha: float, beta: float, d: float):
    """Segment lengths (t, p, q) in units of the radius, or None if infeasible.

    Standard closed forms for counter-clockwise ``L`` in a frame where the
    start-goal line is the +x axis.
    """
    sa, sb, ca, cb = sin(alpha), sin(beta), cos(alpha), cos(beta)
    cab = cos(alpha - beta)
    if word == "LSL":
        p2 = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
        if p2 < 0:
            return None
        tmp = atan2(cb - ca, d + sa - sb)
        return _mod2pi(-alpha + tmp), sqrt(p2), _mod2pi(beta - tmp)
    if word == "RSR":
        p2 = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
        if p2 < 0:
            return None
        tmp = atan2(ca - cb, d - sa + sb)
        return _mod2pi(alpha - tmp), sqrt(p2), _mod2pi(-beta + tmp)
    if word == "LSR":
        p2 = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
        if p2 < 0:
            return None
        p = sqrt(p2)
        tmp = atan2(-ca - cb, d + sa + sb) - atan2(-2.0, p)
        return _mod2pi(-alpha + tmp), p, _mod2pi(-_mod2pi(beta) + tmp)
    if word == "RSL":
        p2 = d * d - 2 + 2 * cab - 2 * d * (sa + sb)
        if p2 < 0:
            return None
        p = sqrt(p2)
        tmp = atan2(ca + cb, d - sa - sb) - atan2(2.0, p)
        return _mod2pi(alpha - tmp), p, _mod2pi(beta - tmp)
    if word in ("RLR", "LRL"):
        sign = 1.0 if word == "RLR" else -1.0
        tmp = (6.0 - d * d + 2 * cab + 2 * sign * d * (sa - sb)) / 8.0
        if abs(tmp) > 1:
            return None
        # both middle-arc branches; the caller keeps whichever closes the path
        out = []
        for p in (_mod2pi(TWO_PI - acos(tmp)), acos(tmp)):
            if word == "RLR":
                t = _mod2pi(alpha - atan2(ca - cb, d - sa + sb) + p / 2.0)
                q = _mod2pi(alpha - beta - t + p)
            else:
                t = _mod2pi(-alpha - atan2(ca - cb, d + sa - sb) + p / 2.0)
                q = _mod2pi(beta - alpha - t + p)
            out.append((t, p, q))
        return out
    raise ValueError(word)


def _ccw_segments(word: str, params) -> list[tuple[str, float]]:
    return list(zip(word, params))


def propagate_segments(x: float, y: float, th: float, segments, radius: float, ccw_sign: float = 1.0):
    """End pose after flying ``segments`` [(type, length_in_radius_units)]."""
    for kind, length in segments:
        if kind == "S":
            x += length * radius * cos(th)
            y += length * radius * sin(th)
        else:
            turn = ccw_sign * (1.0 if kind == "L" else -1.0)
            nth = th + turn * length
            x += radius * turn * (sin(nth) - sin(th))
            y += radius * turn * (-cos(nth) + cos(th))
            th = nth
    return x, y, th


def dubins_candidates(start, goal, radius: float) -> dict[str, tuple[float, float, float]]:
    """All feasible words between planar poses ``(x, y, heading)`` in the math (CCW) frame."""
    dx, dy = goal[0] - start[0], goal[1] - start[1]
    d = sqrt(dx * dx + dy * dy) / radius
    theta = _mod2pi(atan2(dy, dx)) if d > 0 else 0.0
    alpha = _mod2pi(start[2] - theta)
    beta = _mod2pi(goal[2] - theta)
    out = {}
    for word in WORDS:
        params = _word_params(word, alpha, beta, d)
        if params is None:
            continue
        options = params if isinstance(params, list) else [params]
        for option in options:
            # reject numerically bad solutions by forward propagation
            ex, ey, eth = propagate_segments(start[0], start[1], start[2], _ccw_segments(word, option), radius)
            err = np.hypot(ex - goal[0], ey - goal[1]) / radius
            herr = abs((eth - goal[2] + pi) % TWO_PI - pi)
            if err < 1e-6 and herr < 1e-6 and (word not in out or sum(option) < sum(out[word])):
                out[word] = option
    return out


@dataclass(frozen=True)
class DubinsPath3D:
    """Planar Dubins path with a linear altitude profile.

    ``segments`` are in the NED heading convention (``R`` increases ``chi``) with
    lengths in radius units; ``loops`` extra full turns are flown at the start
    when the climb would otherwise exceed the flight-path angle bound.
    """

    start: UavState
    goal: UavState
    radius: float
    word: str
    segments: tuple[tuple[str, float], ...]
    loops: int = 0

    @property
    def horizontal_length(self) -> float:
        return self.radius * sum(length for _, length in self.segments)

    @property
    def planar_length(self) -> float:
        return self.horizontal_length + self.loops * TWO_PI * self.radius

    @property
    def length(self) -> float:
        """3D arc length of the path."""
        dz = self.goal.z - self.start.z
        return sqrt(self.planar_length**2 + dz * dz)

    @property
    def gamma(self) -> float:
        return atan2(-(self.goal.z - self.start.z), self.planar_length) if self.planar_length > 0 else 0.0

    def _all_segments(self):
        if not self.loops:
            return list(self.segments)
        first = self.segments[0][0] if self.segments[0][0] != "S" else "R"
        return [(first, self.loops * TWO_PI)] + list(self.segments)

    def sample(self, s) -> np.ndarray:
        """Positions ``(len(s), 3)`` at 3D arc lengths ``s`` (clipped to the path)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        total = self.length
        frac = np.clip(s / total, 0.0, 1.0) if total > 0 else np.zeros_like(s)
        planar = frac * self.planar_length / self.radius
        out = np.empty((s.size, 3))
        segs = self._all_segments()
        for m, target in enumerate(planar):
            x, y, th = self.start.x, self.start.y, self.start.chi
            remaining = target
            for kind, length in segs:
                step = min(length, remaining)
                # NED heading: positive rate is R, which is CCW in (x, y) math terms
                x, y, th = propagate_segments(x, y, th, [(_to_ccw(kind), step)], self.radius)
                remaining -= step
                if remaining <= 0:
                    break
            out[m] = (x, y, self.start.z + frac[m] * (self.goal.z - self.start.z))
        return out

    def heading_at(self, s: float) -> float:
        eps = 1e-6 * max(self.length, 1.0)
        a, b = self.sample([max(s - eps, 0.0), min(s + eps, self.length)])
        return atan2(b[1] - a[1], b[0] - a[0])


def _to_ccw(kind: str) -> str:
    # (x north, y east) is a right-handed planar frame: increasing chi is
    # counter-clockwise in (x, y) coordinates, so NED "R" = math "L".
    return {"L": "R", "R": "L", "S": "S"}[kind]


def dubins2d(start, goal, radius: float):
    """Shortest word between planar poses; returns ``(word, params)`` in NED naming."""
    cands = dubins_candidates(start, goal, radius)
    if not cands:
        raise InitFailure("no Dubins word connects the endpoints")
    word, params = min(cands.items(), key=lambda kv: sum(kv[1]))
    ned = "".join(_to_ccw(c) for c in word)
    return ned, params


def dubins3d(x0: UavState, xf: UavState, r_min: float, gamma_bounds: tuple[float, float]) -> DubinsPath3D:
    same_xy = np.hypot(xf.x - x0.x, xf.y - x0.y) < 1e-9 * max(r_min, 1.0)
    same_heading = abs((xf.chi - x0.chi + pi) % TWO_PI - pi) < 1e-12
    if same_xy and same_heading and abs(xf.z - x0.z) < 1e-9 * max(r_min, 1.0):
        raise DegenerateEndpoints("start and goal poses coincide")
    if same_xy and same_heading:
        word, params = "S", (0.0,)
    else:
        word, params = dubins2d((x0.x, x0.y, x0.chi), (xf.x, xf.y, xf.chi), r_min)
    segments = tuple(zip(word, params))
    path = DubinsPath3D(x0, xf, r_min, word, segments)
    climb = -(xf.z - x0.z)
    limit = gamma_bounds[1] if climb > 0 else -gamma_bounds[0]
    need = abs(climb) / tan(limit) if climb else 0.0
    if need > path.horizontal_length:
        loops = int(ceil((need - path.horizontal_length) / (TWO_PI * r_min)))
        path = replace(path, loops=loops)
    return path


# -- normalization and initial guess ---------------------------------------------


def reference_path(sc: Scenario, config: SolverConfig | None = None) -> DubinsPath3D:
    """Dubins path between the terminal states; loops are added only past the true gamma bounds."""
    return dubins3d(sc.x0, sc.xf, sc.r_min, sc.bounds.gamma)


def normalize(sc: Scenario, config: SolverConfig | None = None, eta_L: float | None = None):
    """Scaled scenario, scale factors and the physical reference path."""
    path = reference_path(sc, config)
    eta_L = path.length if eta_L is None else eta_L
    if not eta_L > 0:
        raise InitFailure("reference path has zero length")
    scaling = Scaling(eta_L, eta_L / sc.bounds.V[1])
    return scaling.scale_scenario(sc), scaling, path


def choose_N(length: float, r_min: float, kn: float = 1.25) -> int:
    return max(2, int(round(kn * length / r_min)))


def initial_guess(path: DubinsPath3D, N: int, scaling: Scaling) -> tuple[np.ndarray, float]:
    """Interior waypoints equally spaced in arc length, normalized, and ``log T = 0``."""
    s = path.length * np.arange(1, N) / N
    P = path.sample(s) / scaling.eta_L if N > 1 else np.zeros((0, 3))
    return P.reshape(N - 1, 3), 0.0
