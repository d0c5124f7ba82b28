"""Scenario and solver configuration types."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InvalidScenario
from .flat import G0, LoadControls, UavState

PENALTY_KINDS = ("V", "gamma", "nx", "ny", "nz")
COST_KINDS = ("e", "obs") + PENALTY_KINDS


class TimeMode(str, Enum):
    MIN_TIME = "min_time"
    WINDOW = "window"
    FIXED = "fixed"


@dataclass(frozen=True)
class TimeCost:
    mode: TimeMode = TimeMode.MIN_TIME
    t_min: float = 0.0
    t_max: float = 0.0
    t_fixed: float = 0.0

    @classmethod
    def window(cls, t_min: float, t_max: float) -> "TimeCost":
        return cls(TimeMode.WINDOW, t_min=t_min, t_max=t_max)

    @classmethod
    def fixed(cls, t: float) -> "TimeCost":
        return cls(TimeMode.FIXED, t_fixed=t)

    def scaled(self, time: float) -> "TimeCost":
        return TimeCost(self.mode, self.t_min / time, self.t_max / time, self.t_fixed / time)


@dataclass(frozen=True)
class Obstacle:
    """Vertical cylinder of infinite height."""

    x: float
    y: float
    radius: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Bounds:
    """Box bounds on speed, flight-path angle (rad) and load factors."""

    V: tuple[float, float] = (30.0, 40.0)
    gamma: tuple[float, float] = (np.deg2rad(-10.0), np.deg2rad(10.0))
    nx: tuple[float, float] = (-0.2, 0.2)
    ny: tuple[float, float] = (-0.2, 0.2)
    nz: tuple[float, float] = (0.8, 1.2)

    def interval(self, kind: str) -> tuple[float, float]:
        """Constraint interval in the quantity the penalty acts on (``sin(gamma)`` for gamma)."""
        if kind == "gamma":
            return float(np.sin(self.gamma[0])), float(np.sin(self.gamma[1]))
        return getattr(self, kind)

    def center_half(self, kind: str) -> tuple[float, float]:
        lo, hi = self.interval(kind)
        return 0.5 * (hi + lo), 0.5 * (hi - lo)


DEFAULT_BOUNDS = Bounds()


@dataclass(frozen=True)
class Scenario:
    x0: UavState
    xf: UavState
    u0: LoadControls = LoadControls(0.0, 0.0, 1.0)
    uf: LoadControls = LoadControls(0.0, 0.0, 1.0)
    bounds: Bounds = DEFAULT_BOUNDS
    obstacles: tuple[Obstacle, ...] = ()
    r_safe: float = 100.0
    time_cost: TimeCost = TimeCost()
    g: float = G0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        self.validate()

    def validate(self) -> None:
        b = self.bounds
        if not 0 < b.V[0] < b.V[1]:
            raise InvalidScenario(f"speed bounds {b.V} must satisfy 0 < V_min < V_max")
        if not -np.pi / 2 < b.gamma[0] < b.gamma[1] < np.pi / 2:
            raise InvalidScenario(f"gamma bounds {b.gamma} must lie inside (-pi/2, pi/2)")
        for kind in ("nx", "ny", "nz"):
            lo, hi = getattr(b, kind)
            if not lo < hi:
                raise InvalidScenario(f"{kind} bounds {lo, hi} empty")
        for o in self.obstacles:
            if not o.radius > 0:
                raise InvalidScenario(f"obstacle radius {o.radius} must be positive")
        if self.r_safe < 0:
            raise InvalidScenario("r_safe must be non-negative")
        for s in (self.x0, self.xf):
            if not s.V > 0 or not abs(s.gamma) < np.pi / 2:
                raise InvalidScenario(f"terminal state {s} is singular")
        tc = self.time_cost
        if tc.mode is TimeMode.WINDOW and not 0 < tc.t_min < tc.t_max:
            raise InvalidScenario("time window must satisfy 0 < T_min < T_max")
        if tc.mode is TimeMode.FIXED and not tc.t_fixed > 0:
            raise InvalidScenario("fixed terminal time must be positive")

    @property
    def obstacle_centers(self) -> np.ndarray:
        return np.array([o.center for o in self.obstacles]).reshape(-1, 2)

    @property
    def obstacle_radii(self) -> np.ndarray:
        return np.array([o.radius for o in self.obstacles], dtype=float)

    @property
    def r_min(self) -> float:
        """Minimum turning radius ``V_min^2 / (g n_y,max)``."""
        return self.bounds.V[0] ** 2 / (self.g * self.bounds.ny[1])

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass(frozen=True)
class SolverConfig:
    lambda_e: float = 1e-3
    lambda_obs: float = 1e3
    lambda_V: float = 1e3
    lambda_gamma: float = 1e3
    lambda_nx: float = 1e3
    lambda_ny: float = 1e3
    lambda_nz: float = 1e3
    # margins: effective factor (1 + zeta) on obstacles, (1 - zeta) on box bounds
    zeta_obs: float = 0.05
    zeta_V: float = 0.05
    zeta_gamma: float = 0.05
    zeta_nx: float = 0.05
    zeta_ny: float = 0.05
    zeta_nz: float = 0.05
    kappa: int = 5
    power: int = 3
    gtol: float = 1e-3
    memory: int = 128
    max_iter: int = 5000
    detour_rounds: int = 2  # restarts around trapping obstacle clusters
    n_segments: Optional[int] = None
    kn: float = 1.25
    use_filter: bool = True
    v_eps: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.kappa < 2:
            raise InvalidScenario("kappa must be >= 2")
        if self.power < 2:
            raise InvalidScenario("penalty exponent must be >= 2")
        for k in COST_KINDS:
            if self.weight(k) < 0:
                raise InvalidScenario(f"weight lambda_{k} must be non-negative")
        if self.detour_rounds < 0:
            raise InvalidScenario("detour_rounds must be >= 0")
        if self.n_segments is not None and self.n_segments < 1:
            raise InvalidScenario("n_segments must be >= 1")

    def weight(self, kind: str) -> float:
        return getattr(self, f"lambda_{kind}")

    def zeta(self, kind: str) -> float:
        return getattr(self, f"zeta_{kind}")

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)

    @classmethod
    def uniform(cls, lambda_penalty: float = 1e3, zeta: float = 0.05, **kw) -> "SolverConfig":
        """Config with one weight for every penalty and one margin for every constraint."""
        base = {f"lambda_{k}": lambda_penalty for k in ("obs",) + PENALTY_KINDS}
        base.update({f"zeta_{k}": zeta for k in ("obs",) + PENALTY_KINDS})
        base.update(kw)
        return cls(**base)


def deg_state(x, y, z, V, chi_deg, gamma_deg) -> UavState:
    return UavState(float(x), float(y), float(z), float(V), float(np.deg2rad(chi_deg)), float(np.deg2rad(gamma_deg)))
