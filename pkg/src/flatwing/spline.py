"""Uniform-time piecewise quintic splines in normalized time.

Each segment ``i`` is ``p(t) = Cbar_i^T b(tau)`` with ``b = [1, tau, ..., tau^5]``
and ``tau`` in [0, 1]. Segment durations are all ``T / N``, so the
boundary/continuity matrix only depends on ``N`` and is factorized once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.linalg.lapack import dgbtrf, dgbtrs

from .errors import NumericalSingular, OutOfDomain
from .flat import FlatPoint

S = 6  # coefficients per segment
MAX_ORDER = S - 1


def basis(tau: float, order: int = 0) -> np.ndarray:
    """``order``-th derivative of the monomial basis with respect to ``tau``."""
    out = np.zeros(S)
    for k in range(order, S):
        out[k] = factorial(k) / factorial(k - order) * tau ** (k - order)
    return out


def basis_table(taus, orders=range(S)) -> np.ndarray:
    """Basis derivatives at several nodes, shape ``(len(orders), len(taus), 6)``."""
    taus = np.asarray(taus, dtype=float)
    return np.stack([np.stack([basis(t, n) for t in taus]) for n in orders])


@dataclass(frozen=True)
class Boundary:
    """Initial and final (p, v, a) in flat space."""

    p0: np.ndarray
    v0: np.ndarray
    a0: np.ndarray
    pf: np.ndarray
    vf: np.ndarray
    af: np.ndarray

    def scaled(self, length: float, time: float) -> "Boundary":
        return Boundary(
            self.p0 / length,
            self.v0 * time / length,
            self.a0 * time**2 / length,
            self.pf / length,
            self.vf * time / length,
            self.af * time**2 / length,
        )


def dense_system(N: int) -> np.ndarray:
    """The ``6N x 6N`` boundary/continuity matrix, assembled densely."""
    if N < 1:
        raise ValueError("N must be >= 1")
    n = S * N
    B = np.zeros((n, n))
    b0 = [basis(0.0, k) for k in range(S)]
    b1 = [basis(1.0, k) for k in range(S)]
    for k in range(3):
        B[k, 0:S] = b0[k]
    for i in range(1, N):
        r = 3 + S * (i - 1)
        left = slice(S * (i - 1), S * i)
        right = slice(S * i, S * (i + 1))
        B[r, left] = b1[0]  # waypoint row
        for k in range(5):
            B[r + 1 + k, left] = b1[k]
            B[r + 1 + k, right] = -b0[k]
    for k in range(3):
        B[n - 3 + k, S * (N - 1) :] = b1[k]
    return B


def waypoint_rows(N: int) -> np.ndarray:
    return 3 + S * np.arange(N - 1)


class BandedSystem:
    """LU factorization of the boundary/continuity matrix in LAPACK band storage."""

    def __init__(self, N: int):
        self.N = N
        self.n = S * N
        B = dense_system(N)
        rows, cols = np.nonzero(B)
        self.kl = int(max(0, np.max(rows - cols)))
        self.ku = int(max(0, np.max(cols - rows)))
        kl, ku = self.kl, self.ku
        ab = np.zeros((2 * kl + ku + 1, self.n))
        for i, j in zip(rows, cols):
            ab[kl + ku + i - j, j] = B[i, j]
        lu, piv, info = dgbtrf(ab, kl, ku)
        if info != 0:
            raise NumericalSingular(f"dgbtrf info={info} for N={N}")
        self._lu = lu
        self._piv = piv

    @property
    def bandwidth(self) -> int:
        return self.kl + self.ku + 1

    def solve(self, D: np.ndarray) -> np.ndarray:
        x, info = dgbtrs(self._lu, self.kl, self.ku, D, self._piv)
        if info != 0:
            raise NumericalSingular(f"dgbtrs info={info}")
        return x

    def solve_transpose(self, G: np.ndarray) -> np.ndarray:
        x, info = dgbtrs(self._lu, self.kl, self.ku, G, self._piv, trans=1)
        if info != 0:
            raise NumericalSingular(f"dgbtrs info={info}")
        return x


@lru_cache(maxsize=64)
def banded_system(N: int) -> BandedSystem:
    return BandedSystem(N)


def assemble_rhs(P: np.ndarray, T: float, boundary: Boundary, out: np.ndarray | None = None) -> np.ndarray:
    P = np.asarray(P, dtype=float).reshape(-1, 3)
    N = P.shape[0] + 1
    D = np.zeros((S * N, 3)) if out is None else out
    h = T / N
    D[0] = boundary.p0
    D[1] = h * boundary.v0
    D[2] = h * h * boundary.a0
    if N > 1:
        D[waypoint_rows(N)] = P
    D[-3] = boundary.pf
    D[-2] = h * boundary.vf
    D[-1] = h * h * boundary.af
    return D


def assemble_system(N: int, boundary: Boundary, T: float, P: np.ndarray | None = None):
    """Factorized system and right-hand side; ``P`` defaults to zeros."""
    if P is None:
        P = np.zeros((N - 1, 3))
    return banded_system(N), assemble_rhs(P, T, boundary)


def solve_coefficients(system: BandedSystem, D: np.ndarray) -> np.ndarray:
    return system.solve(D)


@dataclass
class FlatTrajectory:
    """Quintic spline parameterized by interior waypoints and total duration."""

    N: int
    T: float
    P: np.ndarray
    Cbar: np.ndarray
    boundary: Boundary
    _segments: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float).reshape(self.N - 1, 3)
        self.Cbar = np.asarray(self.Cbar, dtype=float)
        self._segments = self.Cbar.reshape(self.N, S, 3)

    @classmethod
    def from_waypoints(cls, P, T: float, boundary: Boundary) -> "FlatTrajectory":
        P = np.asarray(P, dtype=float).reshape(-1, 3)
        N = P.shape[0] + 1
        system = banded_system(N)
        Cbar = system.solve(assemble_rhs(P, T, boundary))
        return cls(N, T, P, Cbar, boundary)

    def residual(self) -> float:
        B = dense_system(self.N)
        D = assemble_rhs(self.P, self.T, self.boundary)
        return float(np.max(np.abs(B @ self.Cbar - D)))

    def locate(self, t):
        """Segment index and local normalized time for absolute time ``t``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.T):
            raise OutOfDomain(f"t outside [0, {self.T}]")
        u = t * self.N / self.T
        i = np.minimum(np.floor(u).astype(int), self.N - 1)
        return i, u - i

    def derivative(self, t, order: int = 0) -> np.ndarray:
        i, tau = self.locate(t)
        tau = np.atleast_1d(tau)
        i = np.atleast_1d(i)
        powers = np.zeros((tau.size, S))
        for k in range(order, S):
            powers[:, k] = factorial(k) / factorial(k - order) * tau ** (k - order)
        out = np.einsum("mk,mkd->md", powers, self._segments[i]) * (self.N / self.T) ** order
        return out if np.ndim(t) else out[0]

    def evaluate(self, t: float, max_order: int = 3) -> FlatPoint:
        d = [self.derivative(t, k) for k in range(max_order + 1)]
        d += [None] * (5 - len(d))
        return FlatPoint(p=d[0], v=d[1], a=d[2], j=d[3], s=d[4])

    def segment_derivative(self, i: int, tau: float, order: int) -> np.ndarray:
        """Derivative of segment ``i`` at local time ``tau`` (no clamping to the segment)."""
        return self._segments[i].T @ basis(tau, order) * (self.N / self.T) ** order

    def scaled(self, length: float, time: float) -> "FlatTrajectory":
        """Same curve with lengths multiplied by ``length`` and times by ``time``."""
        b = self.boundary
        boundary = Boundary(
            b.p0 * length,
            b.v0 * length / time,
            b.a0 * length / time**2,
            b.pf * length,
            b.vf * length / time,
            b.af * length / time**2,
        )
        return FlatTrajectory(self.N, self.T * time, self.P * length, self.Cbar * length, boundary)
