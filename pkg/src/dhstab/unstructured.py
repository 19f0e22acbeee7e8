"""Structure-preserving subspace frameworks for the unstructured restricted
stability radii of a DH system x' = (J - R) Q x.

Both radii are reciprocals of an H-infinity norm,

    r(R; B, C) = r(J; B, C) = 1 / sup_w sigma_max(C Q D(i w)^{-1} B),
    r(Q; B, C)              = 1 / sup_w sigma_max(C D(i w)^{-1} (J - R) B),

and the frameworks replace the large system by a sequence of small projected
DH systems that Hermite-interpolate sigma_max at the visited frequencies:

  * "rj": the search basis V collects [D(i w)^{-1} B, D(i w)^{-2} B] blocks,
    the test basis is the oblique W = Q V (V^H Q V)^{-1};
  * "q":  the orthonormal basis W collects adjoint blocks
    [D(i w)^{-H} C^H, D(i w)^{-2H} C^H] and V = (J-R)^H W (W^H (J-R)^H W)^{-1}.

Each reduced H-infinity problem is solved by the level-set method; its
maximizer is the next interpolation frequency.  The loop stops when
consecutive maximizers or values are relatively closer than eps, or at
k_max iterations.
"""

import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (DegenerateProblemError, FrameworkOptions, IterationRecord,
                   ObliqueBreakdownError, RadiusResult, RestrictionPair,
                   UnstableSystemError, _dense, orthonormal_extend,
                   realify_block, reduce_dh)
from .hinf import hinf_norm_bb, sigma_max_at, transfer_statespace
from .solvers import evaluate_off_spectrum, make_solver

# relative width of the spectrum's imaginary extent below which the spectrum
# counts as real and the degenerate initialization kicks in
DEGENERATE_RANGE_RTOL = 1e-12

# the largest initial sigma must exceed this times ||B||_F ||C||_F or the
# transfer function is treated as identically zero
ZERO_TRANSFER_RTOL = 1e-12

# dense eigendecompositions for initialization are allowed up to this size
# for matrix-free (implicit) systems
IMPLICIT_DENSE_CAP = 600


def _drift_matrix(system):
    """The drift (J - R) Q as a concrete dense/sparse matrix."""
    if getattr(system, "storage", "") == "implicit":
        n = system.n
        if n > IMPLICIT_DENSE_CAP:
            raise ValueError(
                f"initialization needs the spectrum; n = {n} exceeds the "
                f"dense cap {IMPLICIT_DENSE_CAP} for matrix-free systems")
        return np.asarray(system.jr_mul(system.q_mul(np.eye(n))))
    return system.drift()


@dataclass
class InitialSelection:
    """Ranked initialization frequencies plus the spectral context."""

    points: List[float]          # chosen frequencies, best sigma first
    sigma_values: List[float]    # sigma_max(G(i w)) at each chosen point
    probes: List[float]          # the equispaced probe frequencies
    interval: Tuple[float, float]  # imaginary extent of the spectrum
    degenerate: bool             # True when the spectrum was (nearly) real


def _spectrum_for_init(system):
    """Eigenvalues (dense path) or extremal-imaginary info (sparse path).

    Returns (lam, (lo, hi)) where lam is the full spectrum when affordable,
    else None with ARPACK-estimated imaginary extremes.
    """
    A = _drift_matrix(system)
    if not sp.issparse(A):
        lam = np.linalg.eigvals(np.asarray(A))
        if lam.real.max() >= 0:
            raise UnstableSystemError(
                "system is not asymptotically stable; stability radii are "
                "undefined")
        return lam, (float(lam.imag.min()), float(lam.imag.max()))
    Ac = A.astype(complex).tocsc()
    try:
        hi = spla.eigs(Ac, k=1, which="LI", return_eigenvectors=False)
        lo = spla.eigs(Ac, k=1, which="SI", return_eigenvectors=False)
        return None, (float(lo[0].imag), float(hi[0].imag))
    except (spla.ArpackError, spla.ArpackNoConvergence):
        lam = np.linalg.eigvals(Ac.toarray())
        if lam.real.max() >= 0:
            raise UnstableSystemError(
                "system is not asymptotically stable; stability radii are "
                "undefined")
        return lam, (float(lam.imag.min()), float(lam.imag.max()))


def _nearest_imag(system, lam, probe: float):
    """Imaginary part of the eigenvalue nearest to i*probe."""
    if lam is not None:
        return float(lam[np.argmin(np.abs(lam - 1j * probe))].imag)
    A = system.drift().astype(complex).tocsc()
    try:
        z = spla.eigs(A, k=1, sigma=1j * probe, ncv=20,
                      return_eigenvectors=False)
        return float(z[0].imag)
    except (spla.ArpackError, spla.ArpackNoConvergence, RuntimeError):
        return float(probe)  # keep the probe itself


def select_initial_points(system, restriction: RestrictionPair, kind: str,
                          num_probes: int = 20, num_initial: int = 10,
                          solver=None) -> InitialSelection:
    """Initial interpolation frequencies for the subspace frameworks.

    Probes the imaginary extent of the spectrum with ``num_probes``
    equispaced frequencies, snaps each to the nearest eigenvalue, and keeps
    the ``num_initial`` frequencies with largest sigma_max(G(i w)).  A
    (nearly) real spectrum falls back to 0 plus spread points on [-1, 1].
    """
    if not 1 <= num_initial <= num_probes:
        raise ValueError("need 1 <= num_initial <= num_probes")
    if solver is None:
        solver = make_solver(system)
    lam, (lo, hi) = _spectrum_for_init(system)
    scale = max(abs(lo), abs(hi), 1.0)
    if hi - lo <= DEGENERATE_RANGE_RTOL * scale:
        pts = [0.0]
        if num_initial > 1:
            pts.extend(np.linspace(-1.0, 1.0, num_initial - 1))
        sig = [sigma_max_at(system, restriction, w, kind, solver=solver)
               for w in pts]
        return InitialSelection(pts, sig, pts, (lo, hi), True)

    probes = np.linspace(lo, hi, num_probes)
    freqs = [_nearest_imag(system, lam, mu) for mu in probes]
    sig = [sigma_max_at(system, restriction, w, kind, solver=solver)
           for w in freqs]
    order = np.argsort(-np.asarray(sig), kind="stable")[:num_initial]
    return InitialSelection([freqs[j] for j in order],
                            [sig[j] for j in order],
                            list(probes), (lo, hi), False)


def _expansion_block(solver, system, restriction, omega: float, kind: str):
    if kind == "rj":
        B = _dense(restriction.B)
        return np.hstack([solver.solve(omega, B),
                          solver.solve(omega, B, power=2)])
    CH = _dense(restriction.C).conj().T
    return np.hstack([solver.solve(omega, CH, adjoint=True),
                      solver.solve(omega, CH, power=2, adjoint=True)])


def _radius_unstructured(system, restriction: RestrictionPair, kind: str,
                         opts: Optional[FrameworkOptions]) -> RadiusResult:
    opts = opts or FrameworkOptions()
    restriction = RestrictionPair(restriction.B, restriction.C) \
        if not isinstance(restriction, RestrictionPair) else restriction
    solver = make_solver(system)
    ell = opts.resolve_initial(system.n)
    init = select_initial_points(system, restriction, kind,
                                 num_probes=max(opts.num_probes, ell),
                                 num_initial=ell, solver=solver)
    bnorm = np.linalg.norm(_dense(restriction.B))
    cnorm = np.linalg.norm(_dense(restriction.C))
    if max(init.sigma_values) <= ZERO_TRANSFER_RTOL * bnorm * cnorm:
        raise DegenerateProblemError(
            "radius infinite (transfer function identically zero not "
            "excluded by the probe frequencies)")

    real_problem = (getattr(system, "is_real", False)
                    and not np.iscomplexobj(_dense(restriction.B))
                    and not np.iscomplexobj(_dense(restriction.C)))

    def block_at(w):
        blk = _expansion_block(solver, system, restriction, w, kind)
        return realify_block(blk) if real_problem else blk

    basis = None
    interp_points: List[float] = []
    for w in init.points:
        blk, w_used = evaluate_off_spectrum(block_at, w)
        basis, added = orthonormal_extend(basis, blk)
        interp_points.append(w_used)

    history: List[IterationRecord] = []
    w_prev = f_prev = None
    termination = "max_iter"
    reduced = None
    f_k = w_k = None
    for k in range(1, opts.max_iter + 1):
        t0 = time.perf_counter()
        try:
            if kind == "rj":
                reduced = reduce_dh(system, restriction.B, restriction.C,
                                    V=basis, mode="rj")
            else:
                reduced = reduce_dh(system, restriction.B, restriction.C,
                                    W=basis, mode="q")
        except ObliqueBreakdownError as exc:
            raise ObliqueBreakdownError(
                f"oblique basis breakdown at iteration {k}: {exc}") from exc
        ss = transfer_statespace(reduced.J, reduced.R, reduced.Q,
                                 reduced.B, reduced.C, kind)
        try:
            res = hinf_norm_bb(ss, tol=opts.hinf_tol)
        except UnstableSystemError as exc:
            raise UnstableSystemError(
                f"reduced system lost asymptotic stability at iteration {k} "
                f"(numerical structure loss): {exc}") from exc
        f_k, w_k = res.norm, res.omega
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
            # maximizer brings no new directions: interpolation already holds
            termination = "omega_close"
            break
        interp_points.append(w_used)
        w_prev, f_prev = w_k, f_k

    if f_k <= 0:
        raise DegenerateProblemError(
            "radius infinite (reduced transfer function vanished)")
    return RadiusResult(kind=kind, radius=1.0 / f_k, optimum=f_k, omega=w_k,
                        iterations=len(history), subspace_dim=basis.shape[1],
                        termination=termination, history=history,
                        reduced=reduced,
                        iterates=([r.reduced for r in history]
                                  if opts.keep_iterates else None),
                        interp_points=interp_points)


def radius_rj(system, restriction: RestrictionPair,
              opts: Optional[FrameworkOptions] = None) -> RadiusResult:
    """Restricted stability radius of the dissipation (or conservation)
    matrix: the smallest ||Delta||_2 such that R + B Delta C (equivalently
    J + B Delta C) makes the system lose asymptotic stability."""
    return _radius_unstructured(system, restriction, "rj", opts)


def radius_q(system, restriction: RestrictionPair,
             opts: Optional[FrameworkOptions] = None) -> RadiusResult:
    """Restricted stability radius of the energy matrix Q: the smallest
    ||Delta||_2 such that Q + B Delta C destroys asymptotic stability."""
    return _radius_unstructured(system, restriction, "q", opts)
