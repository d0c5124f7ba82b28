"""Flat mappings between the 3-DOF point-mass UAV model and position derivatives.

Frame is north-east-down: ``e3 = [0, 0, 1]`` points down, altitude is ``-z``.
The scalar functions operate on the small dataclasses below; the ``*_batch``
functions take ``(..., 3)`` arrays and are what the optimizer uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import SingularVelocity, SingularVertical, ZeroNormalLoad

G0 = 9.81
V_EPS = 1e-6
E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class UavState:
    x: float
    y: float
    z: float
    V: float
    chi: float
    gamma: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.V, self.chi, self.gamma])


@dataclass(frozen=True)
class LoadControls:
    n_x: float
    n_y: float
    n_z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.n_x, self.n_y, self.n_z])


@dataclass
class FlatPoint:
    """Position and its time derivatives at one instant."""

    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FrameVectors:
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    n_g: np.ndarray
    w2: np.ndarray
    w3: np.ndarray


def speed_frame(v, a, g: float = G0, v_eps: float = V_EPS) -> FrameVectors:
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    V = np.linalg.norm(v)
    if V < v_eps:
        raise SingularVelocity(f"|v| = {V:.3g} below guard {v_eps:.3g}")
    w2 = np.cross(E3, v)
    nw2 = np.linalg.norm(w2)
    if nw2 < v_eps:
        raise SingularVertical(f"|e3 x v| = {nw2:.3g} below guard {v_eps:.3g}")
    w3 = np.cross(v, w2)
    return FrameVectors(
        r1=v / V,
        r2=w2 / nw2,
        r3=w3 / np.linalg.norm(w3),
        n_g=a / g - E3,
        w2=w2,
        w3=w3,
    )


def map_state(fp: FlatPoint, v_eps: float = V_EPS) -> UavState:
    v = np.asarray(fp.v, dtype=float)
    V = float(np.linalg.norm(v))
    if V < v_eps:
        raise SingularVelocity(f"|v| = {V:.3g} below guard {v_eps:.3g}")
    sin_gamma = np.clip(-v[2] / V, -1.0, 1.0)
    return UavState(
        x=float(fp.p[0]),
        y=float(fp.p[1]),
        z=float(fp.p[2]),
        V=V,
        chi=float(np.arctan2(v[1], v[0])),
        gamma=float(np.arcsin(sin_gamma)),
    )


def map_controls(fp: FlatPoint, g: float = G0, v_eps: float = V_EPS) -> LoadControls:
    f = speed_frame(fp.v, fp.a, g, v_eps)
    return LoadControls(
        n_x=float(f.n_g @ f.r1),
        n_y=float(f.n_g @ f.r2),
        n_z=float(-(f.n_g @ f.r3)),
    )


def zero_drag(state: UavState | None = None, controls: LoadControls | None = None) -> float:
    return 0.0


def physical_controls(
    u: LoadControls,
    mass: float,
    g: float = G0,
    drag: Callable[..., float] | float = zero_drag,
    state: UavState | None = None,
    tol: float = 1e-9,
) -> tuple[float, float, float]:
    """Thrust, lift and bank angle realising a set of load factors.

    ``drag`` is either a constant (N) or a callable ``drag(state, controls)``.
    Only used for reporting; the optimizer works on load factors alone.
    """
    if abs(u.n_z) < tol:
        raise ZeroNormalLoad(f"n_z = {u.n_z:.3g}")
    D = drag(state, u) if callable(drag) else float(drag)
    thrust = u.n_x * mass * g + D
    lift = mass * g * np.hypot(u.n_y, u.n_z)
    bank = np.arctan(u.n_y / u.n_z)
    return float(thrust), float(lift), float(bank)


def rotation_speed_to_inertial(chi: float, gamma: float) -> np.ndarray:
    cc, sc = np.cos(chi), np.sin(chi)
    cg, sg = np.cos(gamma), np.sin(gamma)
    return np.array(
        [
            [cg * cc, -sc, -cc * sg],
            [cg * sc, cc, -sc * sg],
            [-sg, 0.0, -cg],
        ]
    )


def inverse_map(x: UavState, u: LoadControls, g: float = G0) -> FlatPoint:
    if not x.V > 0:
        raise SingularVelocity(f"V = {x.V}")
    if not abs(x.gamma) < np.pi / 2:
        raise SingularVertical(f"gamma = {x.gamma}")
    cg, sg = np.cos(x.gamma), np.sin(x.gamma)
    v = x.V * np.array([cg * np.cos(x.chi), cg * np.sin(x.chi), -sg])
    a = g * rotation_speed_to_inertial(x.chi, x.gamma) @ u.as_array() + g * E3
    return FlatPoint(p=x.position, v=v, a=a)


# -- vectorised forms -------------------------------------------------------


def states_batch(v: np.ndarray, v_eps: float = V_EPS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Speed, heading, flight-path angle for an array of velocities ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    V = np.linalg.norm(v, axis=-1)
    if np.any(V < v_eps):
        raise SingularVelocity("velocity below singularity guard")
    chi = np.arctan2(v[..., 1], v[..., 0])
    gamma = np.arcsin(np.clip(-v[..., 2] / V, -1.0, 1.0))
    return V, chi, gamma


def controls_batch(v: np.ndarray, a: np.ndarray, g: float = G0, v_eps: float = V_EPS) -> np.ndarray:
    """Load factors ``(..., 3)`` for arrays of velocity and acceleration."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    V2 = vx * vx + vy * vy + vz * vz
    V = np.sqrt(V2)
    h = np.sqrt(vx * vx + vy * vy)  # = |e3 x v|
    if np.any(V < v_eps):
        raise SingularVelocity("velocity below singularity guard")
    if np.any(h < v_eps):
        raise SingularVertical("velocity parallel to vertical axis")
    ngx, ngy, ngz = a[..., 0] / g, a[..., 1] / g, a[..., 2] / g - 1.0
    nx = (ngx * vx + ngy * vy + ngz * vz) / V
    ny = (-ngx * vy + ngy * vx) / h
    # w3 = e3 |v|^2 - v v_z, |w3| = |v| h
    nz = -(ngx * (-vx * vz) + ngy * (-vy * vz) + ngz * (V2 - vz * vz)) / (V * h)
    return np.stack([nx, ny, nz], axis=-1)


def inverse_map_batch(states: np.ndarray, controls: np.ndarray, g: float = G0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised inverse map. ``states`` is ``(..., 6)``, ``controls`` ``(..., 3)``."""
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    V, chi, gam = states[..., 3], states[..., 4], states[..., 5]
    cc, sc, cg, sg = np.cos(chi), np.sin(chi), np.cos(gam), np.sin(gam)
    v = np.stack([V * cg * cc, V * cg * sc, -V * sg], axis=-1)
    nx, ny, nz = controls[..., 0], controls[..., 1], controls[..., 2]
    a = g * np.stack(
        [
            cg * cc * nx - sc * ny - cc * sg * nz,
            cg * sc * nx + cc * ny - sc * sg * nz,
            -sg * nx - cg * nz + 1.0,
        ],
        axis=-1,
    )
    return states[..., :3].copy(), v, a
