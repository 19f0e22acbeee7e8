"""Shifted linear solves D(i w) = i w I - (J - R) Q with factorization reuse.

One factorization per frequency serves direct and adjoint solves, first and
second powers.  Second powers are always realized as two sequential solves on
the same factorization; D(i w)^2 is never formed.  Every solve is verified by
a relative residual check (<= 1e-10 after at most one refinement step), which
doubles as a-posteriori detection of shifts that fall on the spectrum.

The same interface is provided for rotating second-order (brake-type)
systems whose Q is only available as the inverse of blockdiag(M, K): there
the work horse is a block elimination of

    S(i w) := i w Q^{-1} - (J - R) = [[i w M + D + G,  K],
                                      [-K,             i w K]]

which needs one factorization of K and one of K + i w (i w M + D + G), and
D(i w)^{-1} = Q^{-1} S(i w)^{-1} with Q^{-1} = blockdiag(M, K) applied by
multiplication.
"""

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (DHSystem, DHStructureError, SingularShiftError, _dense,
                   _norm, hermitian_part, skew_part)

RESIDUAL_TOL = 1e-10


def _resid(A, X, RHS) -> float:
    num = _norm(A @ X - RHS)
    den = _norm(RHS)
    return num / den if den > 0 else num


class _DenseFactor:
    def __init__(self, D):
        self.D = D
        try:
            self.lu = sla.lu_factor(D)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularShiftError(f"shift on spectrum: {exc}") from exc

    def solve(self, RHS, adjoint=False):
        return sla.lu_solve(self.lu, RHS, trans=2 if adjoint else 0)

    def matmul(self, X, adjoint=False):
        return (self.D.conj().T if adjoint else self.D) @ X


class _SparseFactor:
    def __init__(self, D):
        self.D = D.tocsc()
        try:
            self.lu = spla.splu(self.D)
        except RuntimeError as exc:
            raise SingularShiftError(f"shift on spectrum: {exc}") from exc

    def solve(self, RHS, adjoint=False):
        RHS = np.asarray(RHS, dtype=complex)
        one_d = RHS.ndim == 1
        out = self.lu.solve(RHS if not one_d else RHS[:, None],
                            trans="H" if adjoint else "N")
        return out[:, 0] if one_d else out

    def matmul(self, X, adjoint=False):
        return (self.D.conj().T if adjoint else self.D) @ X


class _FactorCache:
    """Frequency-keyed LRU of factorization handles; insertion is locked so
    concurrent solves at distinct frequencies can share one cache."""

    def __init__(self, build, capacity):
        self._build = build
        self.capacity = capacity
        self._map = OrderedDict()
        self._lock = threading.Lock()

    def get(self, omega: float):
        key = float(omega)
        with self._lock:
            if key in self._map:
                self._map.move_to_end(key)
                return self._map[key]
        fac = self._build(key)
        with self._lock:
            self._map[key] = fac
            if len(self._map) > self.capacity:
                self._map.popitem(last=False)
        return fac


class ShiftedSolver:
    """Cached solves with D(i w) = i w I - (J - R) Q for an explicit system."""

    def __init__(self, system: DHSystem, capacity: int = 64):
        self.system = system
        A = system.drift()
        self._A = A.tocsc() if sp.issparse(A) else np.asarray(A)
        self._cache = _FactorCache(self._make_factor, capacity)

    @property
    def n(self) -> int:
        return self.system.n

    def shifted_matrix(self, omega: float):
        n = self.n
        if sp.issparse(self._A):
            return (1j * omega * sp.identity(n, format="csc") - self._A).tocsc()
        return 1j * omega * np.eye(n) - self._A

    def _make_factor(self, omega: float):
        D = self.shifted_matrix(omega)
        return _SparseFactor(D) if sp.issparse(D) else _DenseFactor(D)

    def solve(self, omega: float, RHS, power: int = 1, adjoint: bool = False):
        """D(i w)^{-power} RHS (or the adjoint solve).  power in {1, 2}."""
        if power not in (1, 2):
            raise ValueError("power must be 1 or 2")
        RHS = _dense(RHS)
        fac = self._cache.get(omega)
        X = _checked_solve(fac, RHS, adjoint)
        if power == 2:
            X = _checked_solve(fac, X, adjoint)
        return X


def _checked_solve(fac, RHS, adjoint):
    X = fac.solve(RHS, adjoint=adjoint)
    A = fac.D.conj().T if adjoint else fac.D
    r = _resid(A, X, RHS)
    # "not <=" instead of ">" so a NaN residual (exactly singular
    # factorization producing inf/nan) also fails the contract
    if not r <= RESIDUAL_TOL:
        if not np.all(np.isfinite(X)):
            raise SingularShiftError(
                "shift on spectrum: factorization is exactly singular")
        # one step of iterative refinement before giving up
        X = X + fac.solve(RHS - fac.matmul(X, adjoint=adjoint), adjoint=adjoint)
        r = _resid(A, X, RHS)
        if not r <= RESIDUAL_TOL:
            raise SingularShiftError(
                f"shift on spectrum: solve residual {r:.3e} exceeds "
                f"{RESIDUAL_TOL:.1e}")
    return X


def solve_shifted(system, omega: float, RHS, power: int = 1,
                  adjoint: bool = False):
    """One-shot D(i w)^{-power} RHS; builds a throwaway factorization."""
    return make_solver(system).solve(omega, RHS, power=power, adjoint=adjoint)


# relative frequency offsets retried when a shift sits numerically on the
# spectrum (0.0 first: the unperturbed frequency itself)
SHIFT_NUDGES = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def evaluate_off_spectrum(build, omega: float):
    """``build(w)`` at ``w = omega``, backing off when the shift is singular.

    Interpolation frequencies are deliberately placed near resonances; for a
    very weakly damped mode the requested shift can sit so close to an
    eigenvalue that the shifted solve fails its residual contract.  Nearby
    frequencies span the same resonant directions, so retry at
    ``omega + s*step*max(1, |omega|)`` with growing ``step`` and return
    ``(result, frequency_actually_used)``.  Re-raises the last solver error
    if every retry fails.
    """
    last_error = None
    for step in SHIFT_NUDGES:
        for sign in (1.0,) if step == 0.0 else (1.0, -1.0):
            w = omega + sign * step * max(1.0, abs(omega))
            try:
                return build(w), w
            except SingularShiftError as exc:
                last_error = exc
    raise last_error


# --------------------------------------------------------------------------
# second-order (brake-type) systems
# --------------------------------------------------------------------------

@dataclass
class SecondOrderDH:
    """Rotating second-order model at rotation speed ``omega_rot``:

        mass x'' + (damping(.) + gyro(.)) x' + (stiffness(.) + circ) x = 0

    with speed-dependent coefficients

        stiffness = stiffness_const + omega_rot^2 * stiffness_speed2
        damping   = damping_const + damping_speedinv / omega_rot
        gyro      = omega_rot * gyro_speed            (skew-symmetric)

    The induced first-order DH form has n = 2q and
    Q^{-1} = blockdiag(mass, stiffness); the optional non-symmetric
    ``circulatory`` block is only representable in the explicit assembly
    (and breaks positive semidefiniteness of R unless it vanishes).
    """

    mass: object
    damping_const: object
    damping_speedinv: object
    stiffness_const: object
    stiffness_speed2: object
    gyro_speed: object
    omega_rot: float
    circulatory: object = None
    _q: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        self._q = self.mass.shape[0]
        for name in ("mass", "damping_const", "damping_speedinv",
                     "stiffness_const", "stiffness_speed2", "gyro_speed",
                     "circulatory"):
            mat = getattr(self, name)
            if mat is None:
                continue
            if mat.shape != (self._q, self._q):
                raise DHStructureError(
                    f"{name} has shape {mat.shape}, expected ({self._q}, {self._q})")
        if not self.omega_rot > 0:
            raise ValueError("rotation speed omega_rot must be positive")

    @property
    def q(self) -> int:
        return self._q

    @property
    def n(self) -> int:
        return 2 * self._q

    def stiffness(self):
        return self.stiffness_const + self.omega_rot ** 2 * self.stiffness_speed2

    def damping(self):
        return self.damping_const + self.damping_speedinv / self.omega_rot

    def gyro(self):
        return self.omega_rot * self.gyro_speed

    def has_circulatory(self) -> bool:
        return self.circulatory is not None and _norm(self.circulatory) > 0


def validate_secondorder(so: SecondOrderDH, tol: float = 1e-10) -> list:
    """List of structural violations of the speed-evaluated coefficients."""
    issues = []
    for name, mat, kind in (("mass", so.mass, "spd"),
                            ("stiffness", so.stiffness(), "spd"),
                            ("damping", so.damping(), "psd"),
                            ("gyro", so.gyro(), "skew")):
        mat = _dense(mat)
        scale = max(_norm(mat), 1e-300)
        if kind == "skew":
            if _norm(mat + mat.conj().T) > tol * scale:
                issues.append(f"{name} not skew-symmetric")
            continue
        if _norm(mat - mat.conj().T) > tol * scale:
            issues.append(f"{name} not symmetric")
            continue
        lam_min = float(np.linalg.eigvalsh(hermitian_part(mat))[0])
        if kind == "spd" and lam_min <= 0:
            issues.append(f"{name} not positive definite")
        if kind == "psd" and lam_min < -tol * scale:
            issues.append(f"{name} not positive semidefinite")
    return issues


def assemble_brake_dh(so: SecondOrderDH, max_q: int = 2000) -> DHSystem:
    """Explicit dense DH triple of the second-order model.

    Q = blockdiag(mass, stiffness)^{-1} is formed explicitly, so this is for
    verification and small problems (q <= max_q).  A circulatory block N is
    split half into J and half into R; with N = 0 the result is a valid DH
    triple.
    """
    q = so.q
    if q > max_q:
        raise ValueError(f"q = {q} too large for the explicit dense form")
    K = _dense(so.stiffness())
    D = _dense(so.damping())
    G = _dense(so.gyro())
    Zq = np.zeros((q, q))
    Nh = _dense(so.circulatory) / 2 if so.circulatory is not None else Zq
    for name, mat in (("mass", _dense(so.mass)), ("stiffness", K)):
        try:
            sla.cholesky(hermitian_part(mat))
        except np.linalg.LinAlgError as exc:
            raise DHStructureError(f"{name} block not positive definite") from exc
    J = np.block([[-G, -(K + Nh)], [K + Nh.conj().T, Zq]])
    R = np.block([[D, Nh], [Nh.conj().T, Zq]])
    Qinv = sla.block_diag(_dense(so.mass), K)
    Q = np.linalg.inv(Qinv)
    return DHSystem(J, R, hermitian_part(Q))


class BrakeOperator:
    """DH-system view of a second-order model without ever forming Q.

    Provides the protocol the frameworks use on :class:`DHSystem` (``n``,
    ``is_real``, ``J``, ``R``, ``q_mul``, ``jr_mul``, ``drift``): applying Q
    means solving with blockdiag(mass, stiffness), applying Q^{-1} means
    multiplying by it.  Requires a vanishing circulatory block (the block
    elimination below is not valid otherwise).
    """

    storage = "implicit"
    is_real = True

    def __init__(self, so: SecondOrderDH, sparse=None):
        if so.has_circulatory():
            raise DHStructureError(
                "implicit second-order path requires a zero circulatory block")
        self.so = so
        q = so.q
        self.q = q
        self.n = 2 * q
        if sparse is None:
            sparse = sp.issparse(so.mass)
        self._sparse = sparse
        K, D, G = so.stiffness(), so.damping(), so.gyro()
        if sparse:
            K = sp.csc_matrix(K)
            Z = sp.csc_matrix((q, q))
            self.J = sp.bmat([[-sp.csc_matrix(G), -K], [K, Z]], format="csc")
            self.R = sp.bmat([[sp.csc_matrix(D), Z], [Z, Z]], format="csc")
            self._M = sp.csc_matrix(so.mass)
            self._K = K
            try:
                self._M_lu = spla.splu(self._M)
                self._K_lu = spla.splu(self._K)
            except RuntimeError as exc:
                raise DHStructureError(f"singular mass/stiffness block: {exc}") from exc
        else:
            K = _dense(K)
            Z = np.zeros((q, q))
            self.J = np.block([[-_dense(G), -K], [K, Z]])
            self.R = np.block([[_dense(D), Z], [Z, Z]])
            self._M = _dense(so.mass)
            self._K = K
            try:
                self._M_ch = sla.cho_factor(self._M)
                self._K_ch = sla.cho_factor(self._K)
            except np.linalg.LinAlgError as exc:
                raise DHStructureError(
                    f"mass/stiffness block not positive definite: {exc}") from exc

    def _block_solve(self, X):
        q = self.q
        X1, X2 = X[:q], X[q:]
        if self._sparse:
            top = _spd_solve(self._M_lu, X1)
            bot = _spd_solve(self._K_lu, X2)
        else:
            top = sla.cho_solve(self._M_ch, X1)
            bot = sla.cho_solve(self._K_ch, X2)
        return np.concatenate([top, bot], axis=0)

    def q_mul(self, X):
        """Q @ X, i.e. solve blockdiag(mass, stiffness) against X."""
        return self._block_solve(_dense(X))

    def qinv_mul(self, X):
        """Q^{-1} @ X = blockdiag(mass, stiffness) @ X."""
        X = _dense(X)
        q = self.q
        return np.concatenate([self._M @ X[:q], self._K @ X[q:]], axis=0)

    def jr_mul(self, X, adjoint: bool = False):
        A = self.J - self.R
        if adjoint:
            A = A.conj().T
        return A @ X

    def drift(self):
        """(J - R) Q as a matrix-free LinearOperator."""
        def mv(x):
            return self.jr_mul(self.q_mul(x))
        return spla.LinearOperator((self.n, self.n), matvec=mv, matmat=mv,
                                   dtype=complex)


def _spd_solve(lu, X):
    if np.iscomplexobj(X):
        return lu.solve(np.real(X)) + 1j * lu.solve(np.imag(X))
    return lu.solve(X)


def _splu_solve(lu, Z, adjoint):
    Z = np.asarray(Z, dtype=complex)
    one_d = Z.ndim == 1
    out = lu.solve(Z if not one_d else Z[:, None], trans="H" if adjoint else "N")
    return out[:, 0] if one_d else out


class _BrakeFactor:
    """Block elimination of S(i w) = i w Q^{-1} - (J - R): one complex
    factorization of K + i w Mt with Mt = i w M + D + G, reusing the parent's
    real stiffness factorization for the second block row."""

    def __init__(self, op: BrakeOperator, omega: float):
        self.op = op
        self.omega = float(omega)
        so = op.so
        Mt = (1j * self.omega) * _as_storage(op._M, op._sparse) \
            + _as_storage(so.damping(), op._sparse) \
            + _as_storage(so.gyro(), op._sparse)
        KioMt = _as_storage(op._K, op._sparse) + 1j * self.omega * Mt
        K = op._K
        if op._sparse:
            self._Mt = sp.csc_matrix(Mt)
            try:
                self._lu = spla.splu(sp.csc_matrix(KioMt))
            except RuntimeError as exc:
                raise SingularShiftError(f"shift on spectrum: {exc}") from exc
            self._kio_solve = lambda Z, adj: _splu_solve(self._lu, Z, adj)
            self.D = sp.bmat([[self._Mt, K], [-K, 1j * self.omega * K]],
                             format="csc")
        else:
            self._Mt = Mt
            try:
                lu = sla.lu_factor(KioMt)
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise SingularShiftError(f"shift on spectrum: {exc}") from exc
            self._kio_solve = lambda Z, adj: sla.lu_solve(
                lu, Z, trans=2 if adj else 0)
            self.D = np.block([[self._Mt, K], [-K, 1j * self.omega * K]])

    def _k_solve(self, Z):
        if self.op._sparse:
            return _splu_solve(self.op._K_lu, Z, False)
        return sla.cho_solve(self.op._K_ch, Z)

    def solve(self, RHS, adjoint=False):
        RHS = np.asarray(RHS, dtype=complex)
        one_d = RHS.ndim == 1
        if one_d:
            RHS = RHS[:, None]
        q = self.op.q
        W1, W2 = RHS[:q], RHS[q:]
        w = self.omega
        if not adjoint:
            Z1 = -self._kio_solve(W2 - 1j * w * W1, False)
            Z2 = self._k_solve(W1 - self._Mt @ Z1)
            Z = np.vstack([Z1, Z2])
        else:
            T = self._k_solve(W2)
            Y2 = -self._kio_solve(W1 - self._Mt.conj().T @ T, True)
            Y1 = T + 1j * w * Y2
            Z = np.vstack([Y1, Y2])
        return Z[:, 0] if one_d else Z

    def matmul(self, X, adjoint=False):
        return (self.D.conj().T if adjoint else self.D) @ X


def _as_storage(M, sparse):
    return sp.csc_matrix(M) if sparse else _dense(M)


class BrakeShiftedSolver:
    """Shifted solves for brake operators via D(i w)^{-1} = Q^{-1} S(i w)^{-1}.

    The block-elimination factorization of S(i w) is cached per frequency and
    shared by direct and adjoint solves; Q^{-1} = blockdiag(mass, stiffness)
    is applied by multiplication (never by inverting Q).
    """

    def __init__(self, op: BrakeOperator, capacity: int = 64):
        self.op = op
        self._cache = _FactorCache(lambda w: _BrakeFactor(op, w), capacity)

    @property
    def n(self):
        return self.op.n

    def solve_inner(self, omega: float, RHS, adjoint: bool = False):
        """Solve the block-eliminated system S(i w) Z = RHS (or adjoint)."""
        return _checked_solve(self._cache.get(omega), _dense(RHS), adjoint)

    def solve(self, omega: float, RHS, power: int = 1, adjoint: bool = False):
        if power not in (1, 2):
            raise ValueError("power must be 1 or 2")
        X = _dense(RHS)
        fac = self._cache.get(omega)
        for _ in range(power):
            if adjoint:
                # D^{-H} = S^{-H} Q^{-1}: blockdiag multiply first
                X = _checked_solve(fac, self.op.qinv_mul(X), True)
            else:
                # D^{-1} = Q^{-1} S^{-1}: S-solve, then blockdiag multiply
                X = self.op.qinv_mul(_checked_solve(fac, X, False))
        return X


def solve_secondorder(so: SecondOrderDH, omega: float, RHS,
                      adjoint: bool = False):
    """One-shot solve of (i w Q^{-1} - (J - R)) Z = RHS for a brake model."""
    return BrakeShiftedSolver(BrakeOperator(so)).solve_inner(
        omega, RHS, adjoint=adjoint)


def make_solver(system, capacity: int = 64):
    """Shifted-solver factory covering explicit and implicit systems."""
    if isinstance(system, BrakeOperator):
        return BrakeShiftedSolver(system, capacity=capacity)
    if isinstance(system, SecondOrderDH):
        return BrakeShiftedSolver(BrakeOperator(system), capacity=capacity)
    return ShiftedSolver(system, capacity=capacity)
