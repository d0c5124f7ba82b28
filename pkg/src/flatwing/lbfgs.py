"""Limited-memory BFGS with a weak-Wolfe bracketing line search.

Written out rather than delegated to ``scipy.optimize`` because the planner
needs a per-iteration stop hook (feasible *and* small gradient) and must treat
evaluations that hit a singularity as an infinite cost instead of aborting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import FlatwingError

C1 = 1e-4
C2 = 0.9


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    n_evals: int
    status: str  # "gtol", "callback", "max_iter", "line_search"
    history: list = field(default_factory=list)

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))


def _safe_eval(fun, x):
    try:
        f, g = fun(x)
    except (FlatwingError, ArithmeticError, FloatingPointError):
        return np.inf, None
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return np.inf, None
    return float(f), np.asarray(g, dtype=float)


@njit(cache=True)
def _two_loop(g, S, Y, rho, start, count):
    m = S.shape[0]
    q = g.copy()
    alpha = np.empty(count)
    for k in range(count - 1, -1, -1):
        i = (start + k) % m
        alpha[k] = rho[i] * (S[i] @ q)
        q -= alpha[k] * Y[i]
    if count:
        i = (start + count - 1) % m
        q *= (S[i] @ Y[i]) / (Y[i] @ Y[i])
    for k in range(count):
        i = (start + k) % m
        beta = rho[i] * (Y[i] @ q)
        q += (alpha[k] - beta) * S[i]
    return -q


class PairMemory:
    """Ring buffer of the last ``m`` curvature pairs ``(s, y)``."""

    def __init__(self, m: int, n: int):
        self.S = np.zeros((m, n))
        self.Y = np.zeros((m, n))
        self.rho = np.zeros(m)
        self.start = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def clear(self) -> None:
        self.start = self.count = 0

    def append(self, s, y) -> None:
        m = self.S.shape[0]
        i = (self.start + self.count) % m
        if self.count == m:
            self.start = (self.start + 1) % m
        else:
            self.count += 1
        self.S[i] = s
        self.Y[i] = y
        self.rho[i] = 1.0 / float(s @ y)

    def direction(self, g: np.ndarray) -> np.ndarray:
        """``-H g`` for the current inverse-Hessian approximation."""
        return _two_loop(g, self.S, self.Y, self.rho, self.start, self.count)


def weak_wolfe(fun, x, f0, g0, d, step=1.0, max_evals=40):
    """Bracketing search for a step satisfying the weak Wolfe conditions.

    Returns ``(t, f, g, n_evals)``; ``g`` is ``None`` on failure.
    """
    slope = float(g0 @ d)
    lo, hi = 0.0, np.inf
    t = step
    best = (0.0, f0, None)
    for n in range(1, max_evals + 1):
        f, g = _safe_eval(fun, x + t * d)
        if g is None or f > f0 + C1 * t * slope:
            hi = t
        elif g @ d < C2 * slope:
            if f < best[1]:
                best = (t, f, g)
            lo = t
        else:
            return t, f, g, n
        t = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * lo
    t, f, g = best
    return t, f, g, max_evals


def minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    memory: int = 8,
    max_iter: int = 1000,
    gtol: float = 1e-5,
    callback: Optional[Callable[[int, np.ndarray, float, np.ndarray], bool]] = None,
    keep_history: bool = False,
) -> LbfgsResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    ``callback(k, x, f, g)`` runs after every accepted step; returning ``True``
    stops the solve with status ``"callback"``.
    """
    x = np.array(x0, dtype=float)
    f, g = _safe_eval(fun, x)
    if g is None:
        raise FlatwingError("objective is not finite at the initial point")
    pairs = PairMemory(memory, x.size)
    n_evals = 1
    history = [f] if keep_history else []
    if callback is not None and callback(0, x, f, g):
        return LbfgsResult(x, f, g, 0, n_evals, "callback", history)
    if np.linalg.norm(g) <= gtol:
        return LbfgsResult(x, f, g, 0, n_evals, "gtol", history)
    for k in range(1, max_iter + 1):
        d = pairs.direction(g)
        if not g @ d < 0:
            pairs.clear()
            d = -g
        step = 1.0 if pairs else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        t, f_new, g_new, n = weak_wolfe(fun, x, f, g, d, step)
        n_evals += n
        if g_new is None or t == 0.0:
            if pairs:
                pairs.clear()
                continue
            return LbfgsResult(x, f, g, k - 1, n_evals, "line_search", history)
        s = t * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            pairs.append(s, y)
        x, f, g = x + s, f_new, g_new
        if keep_history:
            history.append(f)
        if callback is not None and callback(k, x, f, g):
            return LbfgsResult(x, f, g, k, n_evals, "callback", history)
        if np.linalg.norm(g) <= gtol:
            return LbfgsResult(x, f, g, k, n_evals, "gtol", history)
    return LbfgsResult(x, f, g, max_iter, n_evals, "max_iter", history)
