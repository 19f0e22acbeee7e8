"""Structured (Hermitian-perturbation) stability radius of a DH system.

For perturbations of the dissipation matrix restricted as R + B Delta B^H
with Hermitian Delta, the squared backward error of the eigenvalue i w is

    eta(w) = sup_t  lambda_min( H0(w) + t H1(w) ),

where, with W(i w) = (J - R) Q - i w I and T(w) = B^H Q W(i w)^{-1} B,

    Ht0 = T^H T,   L = chol(Ht0) (lower, positive diagonal),
    H0  = L^{-1} L^{-H},   Ht1 = L^{-1} T^H L^{-H},   H1 = i (Ht1 - Ht1^H).

The supremum is finite (attained) exactly when H1 is indefinite or zero; at
frequencies where H1 is definite the backward error is infinite and the
outer minimization treats the point through the optimizer's penalty
machinery.  The radius is

    r = sqrt( min_w eta(w) ),

minimized over the imaginary extent of the spectrum.  The subspace variant
projects (J, R, Q, B) onto bases built from [W(i w)^{-1} B, W(i w)^{-2} B]
blocks, which interpolate H0, H1, and eta at the visited frequencies.
"""

import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt

from .core import (DegenerateProblemError, FrameworkOptions, IterationRecord,
                   RadiusResult, RestrictionPair, _dense,
                   orthonormal_extend, realify_block, reduce_structured)
from .eigopt import bracket_maximum, maximize_pq, minimize_pq
from .solvers import evaluate_off_spectrum, make_solver
from .unstructured import (DEGENERATE_RANGE_RTOL, _spectrum_for_init,
                           select_initial_points)

INNER_TOL = 1e-10
INNER_MAX_ITER = 300
OUTER_MAX_ITER = 2000
FD_STEP_RTOL = 1e-6

# ||H1|| below this times max(||H0||, 1) counts as H1 = 0 (supremum at t = 0)
H1_ZERO_RTOL = 1e-12

# relative eigenvalue threshold for classifying H1 as indefinite
H1_SIGN_RTOL = 1e-12

# smallest Cholesky diagonal relative to ||L|| before the tangential data
# counts as degenerate
CHOL_DIAG_RTOL = 1e-14

# offsets, in units of |Re lambda|, of the seed frequencies placed around
# every resonance (eigenvalue) of the spectrum; see _resonance_clusters
CLUSTER_OFFSETS = (-3.0, -1.0, -0.3, -0.1, 0.0, 0.1, 0.3, 1.0, 3.0)

# basin polish: refine sampled local minima whose value is within this
# factor of the running best, up to this many basins, seeding each local
# stage with a uniform scan of this many points
BASIN_VALUE_FACTOR = 1e3
BASIN_MAX = 24
BASIN_GRID = 33


@dataclass
class StructuredPieces:
    """The Hermitian pencil data of the structured backward error at one
    frequency (see module docstring for the formulas)."""

    Ht0: np.ndarray
    L: np.ndarray
    H0: np.ndarray
    Ht1: np.ndarray
    H1: np.ndarray


def assemble_h0_h1(system, B, omega: float, solver=None) -> StructuredPieces:
    """StructuredPieces at frequency ``omega`` via one shifted solve.

    Uses W(i w) = -D(i w), so the framework's cached D-solves serve here too.
    """
    if solver is None:
        solver = make_solver(system)
    B = _dense(B)
    S = -solver.solve(omega, B)          # W(i w)^{-1} B
    T = B.conj().T @ system.q_mul(S)     # B^H Q W^{-1} B
    Ht0 = T.conj().T @ T
    try:
        L = sla.cholesky(Ht0, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateProblemError(
            f"tangential degeneracy at frequency {omega}: the Gram matrix of "
            f"the restricted resolvent is numerically singular") from exc
    dmin = float(np.min(np.real(np.diag(L))))
    if dmin <= CHOL_DIAG_RTOL * np.linalg.norm(L):
        raise DegenerateProblemError(
            f"tangential degeneracy at frequency {omega}: Cholesky diagonal "
            f"{dmin:.3e} below threshold")
    m = B.shape[1]
    Linv = sla.solve_triangular(L, np.eye(m), lower=True)
    H0 = Linv @ Linv.conj().T
    Ht1 = Linv @ T.conj().T @ Linv.conj().T
    H1 = 1j * (Ht1 - Ht1.conj().T)
    return StructuredPieces(Ht0, L, H0, Ht1, H1)


@dataclass
class EtaEvaluation:
    """One evaluation of the squared structured backward error eta(w).

    ``value`` is +inf when the inner supremum is not attained (H1 definite
    and nonzero); ``t_star`` is the inner maximizer (0 by convention when
    H1 = 0, nan when not attained).  ``derivative`` is a central/one-sided
    finite difference in w, or 0 when no neighboring value is finite.
    """

    value: float
    derivative: float
    t_star: float
    attained: bool
    H1_indefinite: bool


def _inner_point(pieces: StructuredPieces, opts: FrameworkOptions):
    """(value, t*, attained, indefinite) of sup_t lambda_min(H0 + t H1)."""
    H0, H1 = pieces.H0, pieces.H1
    ev1 = np.linalg.eigvalsh(H1)
    h1norm = max(abs(float(ev1[0])), abs(float(ev1[-1])))
    h0norm = float(np.linalg.norm(H0, 2))
    if h1norm <= H1_ZERO_RTOL * max(h0norm, 1.0):
        lam0 = float(np.linalg.eigvalsh(H0)[0])
        return lam0, 0.0, True, False
    tol = H1_SIGN_RTOL * h1norm
    indefinite = ev1[0] < -tol and ev1[-1] > tol
    if not indefinite:
        return math.inf, math.nan, False, False

    # near resonances the whole eigenvalue family lives at a tiny scale;
    # normalize the value (not the argument) so the optimizer's gap
    # tolerance acts relative to lambda_min(H0)
    scale = float(np.linalg.eigvalsh(H0)[0])
    if not (math.isfinite(scale) and scale > 0):
        scale = max(h0norm, 1.0)

    def g(t):
        w, V = np.linalg.eigh(H0 + t * H1)
        v = V[:, 0]
        return (float(w[0]) / scale,
                float(np.real(v.conj() @ H1 @ v)) / scale)

    bracket = bracket_maximum(g)
    if bracket is None:
        return math.inf, math.nan, False, True
    out = maximize_pq(g, bracket[0], bracket[1], gamma=opts.gamma_inner,
                      tol=INNER_TOL, max_iter=INNER_MAX_ITER)
    return (float(out.value) * scale, float(out.x), True, True)


class EtaOracle:
    """Cached evaluations of eta(w) for one (system, B) pair.

    ``point(w)`` returns (value, t*, attained, indefinite) without the
    frequency derivative; ``evaluate(w)`` adds the finite-difference
    derivative; calling the oracle returns the (value, slope) pair the
    support-function optimizer consumes.
    """

    def __init__(self, system, B, opts: Optional[FrameworkOptions] = None,
                 solver=None):
        self.system = system
        self.B = _dense(B)
        self.opts = opts or FrameworkOptions()
        self.solver = solver if solver is not None else make_solver(system)
        self._points = {}

    def point(self, omega: float):
        key = float(omega)
        if key not in self._points:
            pieces = assemble_h0_h1(self.system, self.B, key,
                                    solver=self.solver)
            self._points[key] = _inner_point(pieces, self.opts)
        return self._points[key]

    def evaluate(self, omega: float) -> EtaEvaluation:
        value, t_star, attained, indef = self.point(omega)
        h = FD_STEP_RTOL * max(1.0, abs(omega))
        vp = self.point(omega + h)[0]
        vm = self.point(omega - h)[0]
        if math.isfinite(vp) and math.isfinite(vm):
            deriv = (vp - vm) / (2 * h)
        elif math.isfinite(vp) and math.isfinite(value):
            deriv = (vp - value) / h
        elif math.isfinite(vm) and math.isfinite(value):
            deriv = (value - vm) / h
        else:
            deriv = 0.0
        return EtaEvaluation(value, deriv, t_star, attained, indef)

    def __call__(self, omega: float):
        e = self.evaluate(omega)
        return e.value, e.derivative


def eta_structured(system, B, omega: float,
                   opts: Optional[FrameworkOptions] = None,
                   solver=None) -> EtaEvaluation:
    """One-shot eta(w) evaluation (squared backward error + FD derivative)."""
    return EtaOracle(system, B, opts, solver=solver).evaluate(omega)


def _probe_scale(oracle: EtaOracle, lo: float, hi: float, extra=()):
    """Probe the interval for finite eta values; returns (points, scale).

    Tries 5 spread points, then 21, always together with the ``extra``
    (eigenvalue-informed) frequencies; raises when every probe is infinite.
    """
    extra = [float(w) for w in extra if lo <= w <= hi]
    for count in (5, 21):
        pts = sorted(set(np.linspace(lo, hi, count)) | set(extra))
        finite = [oracle.point(w)[0] for w in pts]
        finite = [v for v in finite if math.isfinite(v)]
        if finite:
            return pts, max(1.0, max(abs(v) for v in finite))
    raise DegenerateProblemError(
        f"radius not determined on interval [{lo:.6g}, {hi:.6g}]: the "
        f"structured backward error is infinite at every probe frequency")


def _default_outer_curvature(scale: float, width: float) -> float:
    return -1e4 * scale / width ** 2


def _resonance_clusters(lam, lo: float, hi: float) -> List[float]:
    """Seed frequencies bracketing every resonance of the spectrum.

    Near a weakly damped eigenvalue -a + i b the backward error dips inside
    a band of width comparable to a around b, with the bottom a fraction of
    a away from b (the phase of the resonant term decides where the
    realness constraint of the Hermitian problem can be met; at b itself
    the supremum is often not even attained).  Offsets proportional to a
    put finite values inside every such band, so the outer minimizer and
    the basin polish cannot overlook it.  Empty when no spectrum is
    available (large sparse path).
    """
    if lam is None:
        return []
    lam = np.asarray(lam).ravel()
    seeds = []
    span = max(hi - lo, 1.0)
    for z in lam:
        beta = float(np.imag(z))
        alpha = abs(float(np.real(z)))
        if alpha == 0.0:
            alpha = 1e-8 * span
        for c in CLUSTER_OFFSETS:
            w = beta + c * alpha
            if lo <= w <= hi:
                seeds.append(w)
    seeds.sort()
    out: List[float] = []
    for w in seeds:
        if not out or w - out[-1] > 1e-12 * max(1.0, abs(w)):
            out.append(w)
    return out


def _polish_basins(oracle: EtaOracle, history, lo: float, hi: float):
    """Local refinement of every promising sampled basin.

    The support-function pass certifies only down to its curvature
    heuristic, which no moderate value can make a true underestimator at
    resonance dips, so each sampled local minimum is refined by a bounded
    scan-then-parabolic stage between its sampled neighbours.  Pure
    improvement: returns the best (x, f) seen plus the number of extra
    evaluations.
    """
    pts = sorted({(float(x), float(f)) for x, f in history})
    if not pts:
        return math.nan, math.inf, 0
    xs = [p[0] for p in pts]
    fs = [p[1] for p in pts]
    candidates = []
    for i, (x, f) in enumerate(pts):
        if not math.isfinite(f):
            continue
        f_left = fs[i - 1] if i > 0 else math.inf
        f_right = fs[i + 1] if i + 1 < len(pts) else math.inf
        if f <= f_left and f <= f_right:
            left = xs[i - 1] if i > 0 else lo
            right = xs[i + 1] if i + 1 < len(pts) else hi
            candidates.append((f, x, left, right))
    candidates.sort()
    if not candidates:
        return math.nan, math.inf, 0
    f_best, x_best = candidates[0][0], candidates[0][1]
    cap = 1e12 * max(1.0, f_best)
    calls = [0]

    def value_only(w):
        calls[0] += 1
        v = oracle.point(float(w))[0]
        return v if math.isfinite(v) else cap

    for f0, x0, left, right in candidates[:BASIN_MAX]:
        if f0 > BASIN_VALUE_FACTOR * max(f_best, 1e-300):
            break
        if not right > left:
            continue
        grid = np.linspace(left, right, BASIN_GRID)
        vals = [value_only(w) for w in grid]
        j = int(np.argmin(vals))
        sub_lo = grid[max(j - 1, 0)]
        sub_hi = grid[min(j + 1, BASIN_GRID - 1)]
        if not sub_hi > sub_lo:
            continue
        res = sopt.minimize_scalar(
            value_only, bounds=(sub_lo, sub_hi), method="bounded",
            options={"xatol": 1e-12 * max(1.0, abs(grid[j])),
                     "maxiter": 150})
        for w, v in [(float(res.x), float(res.fun)), (grid[j], vals[j])]:
            if v < f_best:
                x_best, f_best = w, v
    return x_best, f_best, calls[0]


def radius_structured_small(system, B, interval=None, gamma_outer=None,
                            opts: Optional[FrameworkOptions] = None
                            ) -> RadiusResult:
    """Structured radius by direct global minimization of eta(w).

    Every eta evaluation touches the full system, so this is meant for small
    problems and as the inner engine of the subspace variant.  ``interval``
    defaults to the imaginary extent of the spectrum; ``gamma_outer`` to the
    probe-scaled heuristic curvature.
    """
    opts = opts or FrameworkOptions()
    solver = make_solver(system)
    lam, extent = _spectrum_for_init(system)
    if interval is None:
        scale0 = max(abs(extent[0]), abs(extent[1]), 1.0)
        degenerate = extent[1] - extent[0] <= DEGENERATE_RANGE_RTOL * scale0
        interval = (-1.0, 1.0) if degenerate else extent
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        lo, hi = lo - 1.0, hi + 1.0
    seeds = _resonance_clusters(lam, lo, hi)
    oracle = EtaOracle(system, B, opts, solver=solver)
    probes, scale = _probe_scale(oracle, lo, hi, extra=seeds)
    if gamma_outer is None:
        gamma_outer = opts.gamma_outer
    if gamma_outer is None:
        gamma_outer = _default_outer_curvature(scale, hi - lo)
    records = []

    def timed(w):
        t = time.perf_counter()
        val, slope = oracle(w)
        records.append(IterationRecord(float(w), float(val), system.n,
                                       time.perf_counter() - t))
        return val, slope

    out = minimize_pq(timed, lo, hi, gamma_outer, tol=opts.eps,
                      max_iter=OUTER_MAX_ITER, initial_points=probes,
                      penalty_factor=opts.penalty_factor)
    x_star, f_star, extra_evals = _polish_basins(oracle, out.history, lo, hi)
    if not f_star < out.value:
        x_star, f_star = out.x, out.value
    return RadiusResult(kind="structured-small", radius=math.sqrt(f_star),
                        optimum=f_star, omega=x_star,
                        iterations=out.iterations + extra_evals,
                        subspace_dim=system.n,
                        termination="f_close" if out.converged else "max_iter",
                        history=records, reduced=None,
                        iterates=None, interp_points=None)


def radius_structured_sf(system, B,
                         opts: Optional[FrameworkOptions] = None
                         ) -> RadiusResult:
    """Structured radius by the interpolatory subspace framework.

    Projects onto growing bases fed by [W(i w)^{-1} B, W(i w)^{-2} B] blocks
    (spans match the D-solve blocks up to sign), solves each reduced
    minimization with the small-scale engine over the full system's spectral
    interval, and expands at the reduced minimizer until the visited
    frequencies or optimal values stagnate.
    """
    opts = opts or FrameworkOptions()
    B = _dense(B)
    solver = make_solver(system)
    ell = opts.resolve_initial(system.n)
    init = select_initial_points(
        system, RestrictionPair(B, B.conj().T), "rj",
        num_probes=max(opts.num_probes, ell), num_initial=ell, solver=solver)
    interval = (-1.0, 1.0) if init.degenerate else init.interval

    real_problem = getattr(system, "is_real", False) \
        and not np.iscomplexobj(B)

    def block_at(w):
        blk = np.hstack([solver.solve(w, B), solver.solve(w, B, power=2)])
        return realify_block(blk) if real_problem else blk

    basis = None
    interp_points: List[float] = []
    for w in init.points:
        blk, w_used = evaluate_off_spectrum(block_at, w)
        basis, _ = orthonormal_extend(basis, blk)
        interp_points.append(w_used)

    gamma_outer = opts.gamma_outer
    history: List[IterationRecord] = []
    w_prev = f_prev = None
    termination = "max_iter"
    reduced = None
    f_k = w_k = None
    for k in range(1, opts.max_iter + 1):
        t0 = time.perf_counter()
        reduced = reduce_structured(system, B, basis)
        rsys = reduced.system()
        if gamma_outer is None:
            # fix the outer curvature from the first reduced problem and
            # reuse it for every later iteration
            oracle_k = EtaOracle(rsys, reduced.B, opts)
            _, scale = _probe_scale(oracle_k, interval[0], interval[1])
            gamma_outer = _default_outer_curvature(
                scale, interval[1] - interval[0])
        sub = radius_structured_small(rsys, reduced.B, interval=interval,
                                      gamma_outer=gamma_outer, opts=opts)
        f_k, w_k = sub.optimum, sub.omega
        history.append(IterationRecord(
            w_k, f_k, basis.shape[1], time.perf_counter() - t0,
            reduced if opts.keep_iterates else None))
        if k > 1:
            if w_k == w_prev or \
                    abs(w_k - w_prev) < opts.eps * abs(w_k + w_prev) / 2:
                termination = "omega_close"
                break
            if abs(f_k - f_prev) < opts.eps * abs(f_k + f_prev) / 2:
                termination = "f_close"
                break
        if k == opts.max_iter:
            termination = "max_iter"
            break
        blk, w_used = evaluate_off_spectrum(block_at, w_k)
        basis, added = orthonormal_extend(basis, blk)
        if added == 0:
            termination = "omega_close"
            break
        interp_points.append(w_used)
        w_prev, f_prev = w_k, f_k

    return RadiusResult(kind="structured-sf", radius=math.sqrt(f_k),
                        optimum=f_k, omega=w_k, iterations=len(history),
                        subspace_dim=basis.shape[1], termination=termination,
                        history=history, reduced=reduced,
                        iterates=([r.reduced for r in history]
                                  if opts.keep_iterates else None),
                        interp_points=interp_points)
