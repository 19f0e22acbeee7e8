"""Univariate global optimization from a value+derivative oracle and a
curvature bound, by piecewise-quadratic support functions.

Each evaluated point (x_j, f_j, f'_j) contributes the model

    q_j(x) = f_j + f'_j (x - x_j) + (gamma/2) (x - x_j)^2,

a global underestimator of f whenever gamma <= inf f''.  All models share
the curvature, so their pointwise maximum is

    Q_k(x) = (gamma/2) x^2 + max_j (b_j x + c_j),

the quadratic plus an upper envelope of affines — a purely combinatorial
object.  The next iterate is the global minimizer of Q_k over the interval,
and the certified error bound is f_best - min Q_k, which is nondecreasing in
accuracy because models are only ever added.

Non-finite oracle values (the objective may be +inf where a supremum is not
attained) are replaced by a finite penalty cap, re-derived from the best
finite value seen so far, with zero slope; the search continues around them.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np


@dataclass
class OptimizerOutcome:
    """Result of a support-function optimization run.

    ``history`` records every oracle evaluation (initial points first) with
    raw values — penalties appear as the non-finite value the oracle
    produced.  ``gap`` is the certified bound f_best - min Q_k at exit and
    ``model_value`` evaluates the final piecewise-quadratic certificate.
    """

    x: float
    value: float
    iterations: int
    history: List[Tuple[float, float]]
    converged: bool
    gap: float
    n_penalties: int
    model_value: Callable[[float], float] = field(repr=False, default=None)


def _penalty_cap(best: Optional[float], factor: float) -> float:
    """A finite stand-in lying strictly above the best value seen so far."""
    if best is None or best == 0.0:
        return 1.0  # provisional cap before any finite value
    return factor * best if best > 0 else best / factor


def _upper_envelope(lines):
    """Active pieces of max_j (b_j x + c_j): returns (kept lines, breakpoints).

    Standard slope-sorted hull scan; for equal slopes only the largest
    intercept can be active.  Breakpoint i is where kept line i+1 takes over
    from kept line i.
    """
    by_slope = {}
    for b, c in lines:
        if b not in by_slope or c > by_slope[b]:
            by_slope[b] = c
    items = sorted(by_slope.items())
    kept = []          # (b, c)
    starts = []        # activity start of kept[i] (first entry -inf)
    for b, c in items:
        while kept:
            b0, c0 = kept[-1]
            xi = (c0 - c) / (b - b0)
            if len(starts) and xi <= starts[-1]:
                kept.pop()
                starts.pop()
            else:
                break
        starts.append(-math.inf if not kept else (kept[-1][1] - c) / (b - kept[-1][0]))
        kept.append((b, c))
    return kept, starts[1:]


class _SupportModel:
    """Envelope Q(x) = gamma/2 x^2 + max_j (b_j x + c_j) over [lo, hi]."""

    def __init__(self, gamma: float, lo: float, hi: float):
        self.gamma = gamma
        self.lo = lo
        self.hi = hi
        self.bc = []
        self._env = None

    def add(self, x: float, f: float, fp: float):
        g = self.gamma
        self.bc.append((fp - g * x, f - fp * x + 0.5 * g * x * x))
        self._env = None

    def set_value(self, index: int, x: float, f: float, fp: float):
        """Replace model ``index`` (added at center x) with new value/slope;
        used when the dynamic penalty cap moves."""
        g = self.gamma
        self.bc[index] = (fp - g * x, f - fp * x + 0.5 * g * x * x)
        self._env = None

    def __call__(self, x: float) -> float:
        b = np.fromiter((t[0] for t in self.bc), float, len(self.bc))
        c = np.fromiter((t[1] for t in self.bc), float, len(self.bc))
        return float(0.5 * self.gamma * x * x + np.max(b * x + c))

    def argmin(self) -> Tuple[float, float]:
        """Exact global minimizer of Q over [lo, hi].

        The active segments partition the line, so the minimum over [lo, hi]
        is the smallest of each segment's quadratic minimized over the
        segment clipped to [lo, hi]: segment ends always, plus the interior
        vertex when the quadratic is convex.  Each candidate is evaluated
        through its own segment's line, which equals the envelope there.
        """
        if self._env is None:
            self._env = _upper_envelope(self.bc)
        kept, breaks = self._env
        g = self.gamma
        n = len(kept)
        bs = np.fromiter((t[0] for t in kept), float, n)
        cs = np.fromiter((t[1] for t in kept), float, n)
        starts = np.empty(n)
        ends = np.empty(n)
        starts[0], starts[1:] = -math.inf, breaks
        ends[:-1], ends[-1] = breaks, math.inf
        live = (starts <= self.hi) & (ends >= self.lo)
        bs, cs = bs[live], cs[live]
        lo_seg = np.clip(starts[live], self.lo, self.hi)
        hi_seg = np.clip(ends[live], self.lo, self.hi)
        candidates = [lo_seg, hi_seg]
        if g > 0:
            candidates.append(np.clip(-bs / g, lo_seg, hi_seg))
        best_x, best_q = self.lo, math.inf
        for xs in candidates:
            q = (0.5 * g) * xs * xs + bs * xs + cs
            j = int(np.argmin(q))
            if q[j] < best_q:
                best_x, best_q = float(xs[j]), float(q[j])
        return best_x, best_q


def minimize_pq(oracle, a: float, b: float, gamma: float, tol: float = 1e-8,
                max_iter: int = 200, initial_points=None,
                penalty_factor: float = 10.0) -> OptimizerOutcome:
    """Global minimum of ``oracle`` on [a, b] given the curvature bound
    ``gamma`` <= inf f''.

    ``oracle(x)`` returns ``(value, derivative)``; non-finite values are
    penalized (see module docstring).  ``initial_points`` defaults to the
    interval endpoints.  Raises if the oracle is never finite.
    """
    if not b > a:
        raise ValueError("need a < b")
    if tol <= 0:
        raise ValueError("tol must be positive")
    pts = list(initial_points) if initial_points is not None else [a, b]
    if not pts:
        raise ValueError("need at least one initial point")

    history: List[Tuple[float, float]] = []
    model = _SupportModel(gamma, a, b)
    pen_rows: List[Tuple[int, float]] = []   # (model index, center x)
    n_added = 0
    best_f = math.inf
    best_x = None

    def _eval(x):
        nonlocal n_added, best_f, best_x
        f, fp = oracle(x)
        f = float(f)
        history.append((x, f))
        if math.isfinite(f):
            model.add(x, f, float(fp))
            if f < best_f or (f == best_f and x < best_x):
                best_f, best_x = f, x
        else:
            # placeholder; the loop rewrites it with the current cap
            pen_rows.append((n_added, x))
            model.add(x, 0.0, 0.0)
        n_added += 1

    for x in pts:
        _eval(float(x))

    iterations = 0
    converged = False
    gap = math.inf
    cap_applied = None
    pen_synced = 0
    while True:
        best = best_f if best_x is not None else None
        cap = _penalty_cap(best, penalty_factor)
        if cap != cap_applied:
            for index, x in pen_rows:
                model.set_value(index, x, cap, 0.0)
            cap_applied = cap
        else:
            for index, x in pen_rows[pen_synced:]:
                model.set_value(index, x, cap, 0.0)
        pen_synced = len(pen_rows)
        xnext, qmin = model.argmin()
        if best is not None:
            gap = best - qmin
            if gap <= tol * max(1.0, abs(best)):
                converged = True
                break
        if iterations >= max_iter:
            break
        _eval(xnext)
        iterations += 1

    if best_x is None:
        raise ArithmeticError(
            "objective was never finite on the interval; cannot certify a "
            "minimum")
    return OptimizerOutcome(x=best_x, value=best_f, iterations=iterations,
                            history=history, converged=converged, gap=gap,
                            n_penalties=len(pen_rows), model_value=model)


def maximize_pq(oracle, a: float, b: float, gamma: float, tol: float = 1e-8,
                max_iter: int = 200, initial_points=None,
                penalty_factor: float = 10.0) -> OptimizerOutcome:
    """Global maximum via minimize_pq on -f with curvature -gamma
    (valid whenever gamma >= sup f''; any small positive gamma works for
    concave objectives)."""

    def neg(x):
        f, fp = oracle(x)
        return -f, -fp

    out = minimize_pq(neg, a, b, -gamma, tol=tol, max_iter=max_iter,
                      initial_points=initial_points,
                      penalty_factor=penalty_factor)
    inner_model = out.model_value
    return OptimizerOutcome(
        x=out.x, value=-out.value, iterations=out.iterations,
        history=[(x, -f) for (x, f) in out.history],
        converged=out.converged, gap=out.gap, n_penalties=out.n_penalties,
        model_value=(lambda x: -inner_model(x)))


def bracket_maximum(oracle, start: float = 1.0, width_cap: float = 1e8):
    """Symmetric interval doubling from [-start, start] until the oracle's
    derivative signs bracket an interior maximum (fp(a) >= 0 >= fp(b)).

    Returns the bracket, or None once the width cap is exceeded — for a
    concave objective that means the supremum is not attained on the real
    line.
    """
    if start <= 0:
        raise ValueError("start must be positive")
    a, b = -float(start), float(start)
    while True:
        _, ga = oracle(a)
        _, gb = oracle(b)
        if ga >= 0.0 >= gb:
            return a, b
        if b - a >= width_cap:
            return None
        a, b = 2 * a, 2 * b
