"""Least-squares fitting, gradient checks and reproducible random streams."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

# model(params, x) -> (values[m], jacobian[m, p])
ModelFn = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

_MASK64 = (1 << 64) - 1


class FitError(RuntimeError):
    """Raised when a fit cannot be carried out (degenerate data, NaN model)."""


@dataclass
class FitProblem:
    model: ModelFn
    x: np.ndarray
    y: np.ndarray
    initial: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        p = self.initial.size
        self.lower = (np.full(p, -np.inf) if self.lower is None
                      else np.asarray(self.lower, dtype=float))
        self.upper = (np.full(p, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float))
        self.weights = (np.ones_like(self.y) if self.weights is None
                        else np.asarray(self.weights, dtype=float))
        if self.x.shape[0] != self.y.shape[0] or self.weights.shape != self.y.shape:
            raise ValueError("x, y and weights must have matching lengths")
        if self.y.size < p:
            raise ValueError(f"need at least {p} data points, got {self.y.size}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds exceed upper bounds")
        for name in ("x", "y", "initial", "weights"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")
        if np.any(self.initial < self.lower) or np.any(self.initial > self.upper):
            raise ValueError("initial parameters outside bounds")


@dataclass
class FitOutcome:
    params: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def _evaluate(problem: FitProblem, p: np.ndarray):
    f, jac = problem.model(p, problem.x)
    f = np.asarray(f, dtype=float)
    jac = np.asarray(jac, dtype=float)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(jac))):
        raise FitError(f"model returned non-finite values at params {p!r}")
    w = problem.weights
    return w * (f - problem.y), w[:, None] * jac


def _damped_step(jac, r, lam, diag):
    if lam > 0:
        a = np.vstack([jac, np.diag(np.sqrt(lam * diag))])
        b = np.concatenate([-r, np.zeros(jac.shape[1])])
    else:
        a, b = jac, -r
    return np.linalg.lstsq(a, b, rcond=None)[0]


def least_squares_fit(problem: FitProblem, tol: float = 1e-10,
                      max_iterations: int = 500) -> FitOutcome:
    """Damped Gauss-Newton (Levenberg-Marquardt) with box constraints.

    Every iteration first tries the undamped step; damping is switched on
    after a rejected step and relaxed again after successes. Parameters are
    clamped onto the bounds after each step.
    """
    lo, hi = problem.lower, problem.upper
    p = problem.initial.copy()
    r, jac = _evaluate(problem, p)
    cost = float(r @ r)
    floor = (np.finfo(float).eps * max(1.0, float(np.abs(problem.y * problem.weights).max()))) ** 2

    lam = 0.0
    lam0 = None
    converged = cost <= floor
    it = 0
    while not converged and it < max_iterations:
        it += 1
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        dmax = diag.max() if diag.size else 0.0
        diag = np.maximum(diag, 1e-12 * max(dmax, 1e-300))
        if lam0 is None:
            lam0 = 1e-3
        step = _damped_step(jac, r, lam, diag)
        # parameters pinned on a bound and pushed outward drop out of the step
        active = ((p <= lo) & (step < 0)) | ((p >= hi) & (step > 0))
        if active.any() and not active.all():
            free = ~active
            step = np.zeros_like(p)
            step[free] = _damped_step(jac[:, free], r, lam, diag[free])
        p_new = np.clip(p + step, lo, hi)
        actual = p_new - p
        if np.linalg.norm(actual) <= tol * (np.linalg.norm(p) + tol):
            converged = True
            break
        r_new, jac_new = _evaluate(problem, p_new)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            # stretch a successful step while it keeps paying off; this is
            # what moves the fit along long shallow valleys
            stretch = 2.0
            while stretch <= 1024:
                p_try = np.clip(p + stretch * actual, lo, hi)
                r_try, jac_try = _evaluate(problem, p_try)
                cost_try = float(r_try @ r_try)
                if not cost_try < cost_new:
                    break
                p_new, r_new, jac_new, cost_new = p_try, r_try, jac_try, cost_try
                stretch *= 2.0
            rel = (cost - cost_new) / cost
            p, r, jac, cost = p_new, r_new, jac_new, cost_new
            lam = lam / 3.0 if lam > lam0 * 1e-6 else 0.0
            if rel < tol or cost <= floor:
                converged = True
        else:
            lam = lam0 if lam == 0.0 else lam * 4.0
            if lam > 1e16:
                # stuck at a point no damped step can improve
                converged = True
    return FitOutcome(params=p, residual_norm=float(np.sqrt(cost)),
                      iterations=it, converged=converged)


def finite_difference_check(model: ModelFn, params, x, step: float = 1e-6) -> float:
    """Largest deviation between the analytic Jacobian and central differences.

    Each parameter's deviation is scaled by the largest analytic derivative
    magnitude for that parameter; all-zero columns compare absolutely.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = np.asarray(params, dtype=float)
    x = np.asarray(x, dtype=float)
    _, jac = model(params, x)
    jac = np.asarray(jac, dtype=float).reshape(x.shape[0], params.size)
    worst = 0.0
    for j in range(params.size):
        h = step * max(1.0, abs(params[j]))
        up = params.copy()
        dn = params.copy()
        up[j] += h
        dn[j] -= h
        numeric = (np.asarray(model(up, x)[0]) - np.asarray(model(dn, x)[0])) / (2 * h)
        scale = np.abs(jac[:, j]).max()
        diff = np.abs(numeric - jac[:, j]).max()
        worst = max(worst, diff / scale if scale > 0 else diff)
    return float(worst)


def derive_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based substream keyed on ``(seed, index)``.

    Philox is a keyed bijection, so distinct keys give independent streams
    and any index can be generated without touching the others.
    """
    key = ((int(index) & _MASK64) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
