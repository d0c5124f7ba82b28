"""Restart points that route a trapped path around a cluster of obstacles.

A path that runs through two obstacles whose inflated disks overlap can
settle where the two penalties cancel, still inside both. No local step
leaves that point, because any feasible route has to pass around the whole
cluster. These helpers build waypoint sets that start on one side of it.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .spline import FlatTrajectory

PUSH_FACTOR = 1.1  # clear each disk by this multiple of its inflated radius
DENSE = 20  # samples per segment when locating violations


def obstacle_clusters(centers: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Component label per obstacle, linking disks of radius ``rho`` that overlap."""
    if len(rho) == 0:
        return np.zeros(0, dtype=int)
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    _, labels = connected_components(csr_matrix(d < rho[:, None] + rho[None]), directed=False)
    return labels


def push_out(q: np.ndarray, u: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> float:
    """Smallest ``t >= 0`` such that ``q + t u`` lies outside every disk (``u`` unit)."""
    t = 0.0
    for _ in range(4 * len(radii) + 1):
        moved = False
        for c, r in zip(centers, radii):
            w = q + t * u - c
            if w @ w < r * r:
                b = w @ u
                t += -b + np.sqrt(b * b - (w @ w - r * r))
                moved = True
        if not moved:
            break
    return t


def _segment_hits(a: np.ndarray, b: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> bool:
    s = np.linspace(0.0, 1.0, 21)[:, None]
    pts = a + s * (b - a)
    return bool(np.any(np.linalg.norm(pts[:, None] - centers[None], axis=-1) < radii[None]))


def _side_push(nodes: np.ndarray, lo: int, hi: int, centers, radii, side: float):
    """Shift nodes ``lo..hi`` sideways by one common offset, widening the range until the entry and exit legs clear."""
    last = len(nodes) - 2
    while True:
        chord = nodes[hi + 1, :2] - nodes[lo - 1, :2]
        u = np.array([-chord[1], chord[0]]) / max(np.linalg.norm(chord), 1e-12) * side
        off = np.full(hi - lo + 1, max(push_out(nodes[i, :2], u, centers, radii) for i in range(lo, hi + 1)))
        new = nodes[:, :2].copy()
        new[lo : hi + 1] += off[:, None] * u
        grow_lo = lo > 1 and _segment_hits(new[lo - 1], new[lo], centers, radii / PUSH_FACTOR)
        grow_hi = hi < last and _segment_hits(new[hi], new[hi + 1], centers, radii / PUSH_FACTOR)
        if not (grow_lo or grow_hi):
            return lo, hi, u, off
        lo, hi = lo - grow_lo, hi + grow_hi


def detour_waypoints(traj: FlatTrajectory, centers: np.ndarray, radii: np.ndarray, rho: np.ndarray) -> list[tuple[np.ndarray, float]]:
    """Candidate ``(P, T)`` restarts for a trajectory that cuts into obstacles.

    ``radii`` are the hard radii (obstacle plus safety distance) and ``rho``
    the penalty radii. For every violated cluster the interior waypoints near
    it are pushed sideways until they and the legs joining them to the rest
    of the path are clear. The first candidate uses the cheaper
    side of each cluster, the second the opposite sides. Duration is scaled
    with the polyline length.
    """
    N = traj.N
    if N < 2 or len(radii) == 0:
        return []
    t = np.linspace(0.0, traj.T, DENSE * N + 1)
    p = traj.derivative(t, 0)[:, :2]
    gap = np.linalg.norm(p[:, None] - centers[None], axis=-1) - radii[None]
    hit = np.unique(np.nonzero(gap < 0)[1])
    if hit.size == 0:
        return []
    labels = obstacle_clusters(centers, rho)
    nodes = np.vstack([traj.boundary.p0, traj.P, traj.boundary.pf])

    plans = []  # per cluster: (lo, hi, [(u, offsets) for both sides])
    for lab in np.unique(labels[hit]):
        members = labels == lab
        c, r = centers[members], rho[members] * PUSH_FACTOR
        near = np.min(np.linalg.norm(nodes[1:-1, None, :2] - c[None], axis=-1) - r[None], axis=1) < r.max()
        idx = np.nonzero(near)[0] + 1
        if idx.size == 0:
            k = int(np.argmin(np.min(gap[:, members], axis=1)))
            idx = np.array([min(max(int(round(t[k] / traj.T * N)), 1), N - 1)])
        lo, hi = int(idx.min()), int(idx.max())
        sides = [_side_push(nodes, lo, hi, c, r, s) for s in (1.0, -1.0)]
        sides.sort(key=lambda side: float(np.sum(side[3])))
        plans.append(sides)

    out = []
    base_len = float(np.sum(np.linalg.norm(np.diff(nodes, axis=0), axis=1)))
    for choice in (0, 1):
        new = nodes.copy()
        for sides in plans:
            lo, hi, u, off = sides[choice]
            new[lo : hi + 1, :2] += off[:, None] * u
        length = float(np.sum(np.linalg.norm(np.diff(new, axis=0), axis=1)))
        out.append((new[1:-1].copy(), traj.T * length / base_len))
    return out
