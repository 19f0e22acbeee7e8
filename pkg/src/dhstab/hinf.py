"""Transfer-function evaluation and a level-set H-infinity norm solver.

Two transfer functions drive the two unstructured radii of a DH system
x' = (J - R) Q x restricted by (B, C):

    kind "rj":  G(i w) = C Q  D(i w)^{-1} B            (radius w.r.t. J or R)
    kind "q":   G(i w) = C    D(i w)^{-1} (J - R) B    (radius w.r.t. Q)

with D(i w) = i w I - (J - R) Q.  Evaluation always goes through shifted
solves, never explicit inversion.  The H-infinity norm of small dense
state-space triples (the reduced problems) is computed by a level-set
iteration: for a level gamma > 0, i*mu is a crossing frequency of
sigma_max(G(i.)) = gamma exactly when i*mu is an eigenvalue of

    M(gamma) = [[A, BB^H / gamma], [-C^H C / gamma, -A^H]],

and the level is pushed up by evaluating sigma_max at midpoints between
consecutive crossings until no crossings remain.
"""

from dataclasses import dataclass

import numpy as np

from .core import UnstableSystemError, _dense
from .solvers import make_solver

TRANSFER_KINDS = ("rj", "q")

# eigenvalues of the level matrix with |Re| below this times ||A||_2 count
# as imaginary-axis crossings
CROSSING_RTOL = 1e-8

# relative gap between the two largest singular values below which the
# derivative of sigma_max is flagged as non-smooth
SMOOTH_GAP_RTOL = 1e-12


def _check_kind(kind):
    if kind not in TRANSFER_KINDS:
        raise ValueError(f"unknown transfer kind {kind!r}; expected 'rj' or 'q'")


def eval_transfer(system, restriction, omega: float, kind: str, solver=None):
    """G(i w) of the chosen kind as a dense (p x m) array."""
    _check_kind(kind)
    if solver is None:
        solver = make_solver(system)
    B = _dense(restriction.B)
    C = _dense(restriction.C)
    if kind == "rj":
        X = solver.solve(omega, B)
        return C @ system.q_mul(X)
    X = solver.solve(omega, system.jr_mul(B))
    return C @ X


@dataclass
class SigmaEval:
    """Largest singular value of G(i w), its frequency derivative, and the
    corresponding singular pair.  ``smooth`` is False when the two largest
    singular values (nearly) coincide, in which case ``derivative`` is only
    a one-sided/subgradient value."""

    sigma: float
    derivative: float
    u: np.ndarray
    v: np.ndarray
    smooth: bool


def sigma_max_at(system, restriction, omega: float, kind: str,
                 solver=None) -> float:
    """sigma_max(G(i w)) without derivative information."""
    G = eval_transfer(system, restriction, omega, kind, solver=solver)
    if G.size == 0:
        return 0.0
    return float(np.linalg.svd(G, compute_uv=False)[0])


def sigma_max_with_derivative(system, restriction, omega: float, kind: str,
                              solver=None) -> SigmaEval:
    """sigma_max(G(i w)) together with d/dw sigma_max.

    The derivative uses the singular-pair formula
    Re(u^H G'(i w) v) with G'(i w) = -i * Ct D(i w)^{-2} Bt, which shares the
    frequency factorization of the evaluation solve.
    """
    _check_kind(kind)
    if solver is None:
        solver = make_solver(system)
    G = eval_transfer(system, restriction, omega, kind, solver=solver)
    if G.size == 0:
        return SigmaEval(0.0, 0.0, np.zeros(0), np.zeros(0), True)
    U, s, Vh = np.linalg.svd(G)
    sigma = float(s[0])
    u = U[:, 0]
    v = Vh[0].conj()
    smooth = not (s.size > 1 and s[0] - s[1] < SMOOTH_GAP_RTOL * s[0])
    B = _dense(restriction.B)
    C = _dense(restriction.C)
    if kind == "rj":
        X2 = solver.solve(omega, B, power=2)
        dG = -1j * (C @ system.q_mul(X2))
    else:
        X2 = solver.solve(omega, system.jr_mul(B), power=2)
        dG = -1j * (C @ X2)
    deriv = float(np.real(u.conj() @ dG @ v))
    return SigmaEval(sigma, deriv, u, v, smooth)


# --------------------------------------------------------------------------
# level-set H-infinity norm of a small dense state-space triple
# --------------------------------------------------------------------------

@dataclass
class StateSpace:
    """Dense state-space triple (A, B, C) with zero feed-through."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A))
        self.B = np.atleast_2d(np.asarray(self.B))
        self.C = np.atleast_2d(np.asarray(self.C))
        k = self.A.shape[0]
        if self.A.shape != (k, k):
            raise ValueError("A must be square")
        if self.B.shape[0] != k or self.C.shape[1] != k:
            raise ValueError("B/C dimensions inconsistent with A")

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def is_real(self) -> bool:
        return not (np.iscomplexobj(self.A) or np.iscomplexobj(self.B)
                    or np.iscomplexobj(self.C))

    def sigma_at(self, omega: float) -> float:
        if self.B.shape[1] == 0 or self.C.shape[0] == 0:
            return 0.0
        X = np.linalg.solve(1j * omega * np.eye(self.k) - self.A, self.B)
        return float(np.linalg.svd(self.C @ X, compute_uv=False)[0])


def transfer_statespace(J, R, Q, B, C, kind: str) -> StateSpace:
    """State-space triple whose transfer function is G of the chosen kind."""
    _check_kind(kind)
    J, R, Q, B, C = map(_dense, (J, R, Q, B, C))
    A = (J - R) @ Q
    if kind == "rj":
        return StateSpace(A, B, C @ Q)
    return StateSpace(A, (J - R) @ B, C)


@dataclass
class HinfResult:
    norm: float
    omega: float
    iterations: int


def _golden_max(f, a: float, b: float, tol: float):
    """Golden-section maximization on [a, b]; emergency fallback only."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
    x = (a + b) / 2
    return x, f(x)


def hinf_norm_bb(ss: StateSpace, tol: float = 1e-9,
                 max_levels: int = 100) -> HinfResult:
    """H-infinity norm sup_w sigma_max(C (i w I - A)^{-1} B) by level sets.

    Returns the norm to relative accuracy ``tol`` and a global maximizer
    frequency.  For real (A, B, C) the search exploits conjugate symmetry and
    reports the nonnegative maximizer.  Raises on an unstable A.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A, B, C = ss.A, ss.B, ss.C
    if ss.k == 0 or B.shape[1] == 0 or C.shape[0] == 0:
        return HinfResult(0.0, 0.0, 0)
    lam = np.linalg.eigvals(A)
    if lam.real.max() >= 0:
        raise UnstableSystemError(
            "state matrix is not asymptotically stable; the frequency "
            "response has no finite supremum guarantee")
    real_data = ss.is_real

    # warm start: frequency candidates at 0 and the eigenvalue magnitudes
    cands = np.unique(np.concatenate([[0.0], np.abs(lam)]))
    vals = np.array([ss.sigma_at(w) for w in cands])
    best = int(np.argmax(vals))
    lb, wstar = float(vals[best]), float(cands[best])
    if lb == 0.0:
        return HinfResult(0.0, 0.0, 0)

    anorm = np.linalg.norm(A, 2)
    BBh = B @ B.conj().T
    CCh = C.conj().T @ C
    for it in range(1, max_levels + 1):
        gamma = lb * (1 + 2 * tol)
        M = np.block([[A, BBh / gamma], [-CCh / gamma, -A.conj().T]])
        ev = np.linalg.eigvals(M)
        cross = np.sort(ev.imag[np.abs(ev.real) <= CROSSING_RTOL * anorm])
        if cross.size == 0:
            break
        if cross.size % 2 == 1:
            # numerically inconsistent level set: refine around the best
            # candidate instead of trusting the midpoint structure
            below = cross[cross < wstar]
            above = cross[cross > wstar]
            a = below[-1] if below.size else wstar - max(1.0, abs(wstar))
            b = above[0] if above.size else wstar + max(1.0, abs(wstar))
            wstar, lb = _golden_max(ss.sigma_at, float(a), float(b), tol)
            break
        mids = (cross[:-1] + cross[1:]) / 2
        if real_data:
            mids = np.unique(np.abs(mids))
        mvals = np.array([ss.sigma_at(w) for w in mids])
        j = int(np.argmax(mvals))
        if mvals[j] <= lb:
            break
        lb, wstar = float(mvals[j]), float(mids[j])
    else:
        raise ArithmeticError("level-set iteration did not settle")

    if real_data:
        wstar = abs(wstar)
    return HinfResult(lb * (1 + tol), wstar, it)
