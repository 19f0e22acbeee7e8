"""Dissipative Hamiltonian system model: validation, oblique bases, projections.

A dissipative Hamiltonian (DH) system here is the triple (J, R, Q) driving
x' = (J - R) Q x with J skew-Hermitian, R Hermitian positive semidefinite and
Q Hermitian positive definite.  All structure-preserving reduction machinery
shared by the radius solvers lives in this module.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


# --------------------------------------------------------------------------
# errors
# --------------------------------------------------------------------------

class DHStructureError(ValueError):
    """Input matrices violate the DH structure beyond repairable roundoff."""


class ObliqueBreakdownError(ArithmeticError):
    """The oblique projector V -> Q V (V^H Q V)^-1 could not be formed."""


class SingularShiftError(ArithmeticError):
    """A shifted solve hit a (numerically) singular matrix."""


class UnstableSystemError(ArithmeticError):
    """An operation that requires asymptotic stability met a spectrum touching
    or crossing the imaginary axis."""


class DegenerateProblemError(ArithmeticError):
    """The problem data is degenerate for the requested quantity (vanishing
    transfer function, tangentially deficient restriction, ...)."""


# --------------------------------------------------------------------------
# small helpers
# --------------------------------------------------------------------------

def _is_sparse(M) -> bool:
    return sp.issparse(M)


def _dense(M) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def _norm(M) -> float:
    """Frobenius norm for dense or sparse input."""
    if sp.issparse(M):
        return float(sp.linalg.norm(M))
    return float(np.linalg.norm(M))


def _herm_defect(M) -> float:
    return _norm(M - M.conj().T)


def _skew_defect(M) -> float:
    return _norm(M + M.conj().T)


def _all_real(*mats) -> bool:
    for M in mats:
        if M is None:
            continue
        data = M.data if sp.issparse(M) else np.asarray(M)
        if np.iscomplexobj(data) and np.any(data.imag != 0):
            return False
    return True


def hermitian_part(M):
    return (M + M.conj().T) / 2


def skew_part(M):
    return (M - M.conj().T) / 2


def _min_eig_hermitian(M) -> float:
    """Smallest eigenvalue of a Hermitian matrix, dense or sparse."""
    if sp.issparse(M):
        n = M.shape[0]
        if n <= 400:
            return float(np.linalg.eigvalsh(_dense(hermitian_part(M)))[0])
        from scipy.sparse.linalg import eigsh
        try:
            val = eigsh(M, k=1, which="SA", return_eigenvectors=False,
                        maxiter=5000)
            return float(val[0].real)
        except Exception:
            return float(np.linalg.eigvalsh(_dense(hermitian_part(M)))[0])
    return float(np.linalg.eigvalsh(hermitian_part(np.asarray(M)))[0])


# --------------------------------------------------------------------------
# system containers
# --------------------------------------------------------------------------

@dataclass
class DHSystem:
    """Explicit dissipative Hamiltonian triple (J, R, Q).

    The constructor stores the matrices as given; use :func:`dh_system` to get
    roundoff repair and structure checking, or :func:`validate_dh` for a
    report.  Matrices may be dense ndarrays or scipy sparse matrices (all
    three in the same storage).
    """

    J: object
    R: object
    Q: object

    def __post_init__(self):
        n = self.J.shape[0]
        for name, M in (("J", self.J), ("R", self.R), ("Q", self.Q)):
            if M.shape != (n, n):
                raise DHStructureError(
                    f"{name} has shape {M.shape}, expected ({n}, {n})")

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def is_sparse(self) -> bool:
        return _is_sparse(self.J)

    @property
    def is_real(self) -> bool:
        return _all_real(self.J, self.R, self.Q)

    @property
    def storage(self) -> str:
        return "sparse" if self.is_sparse else "dense"

    # -- operator views used by the reduction/solve machinery --------------

    def q_mul(self, X):
        """Q @ X."""
        return self.Q @ X

    def qinv_mul(self, X):
        """Q^-1 @ X (dense solve; rarely needed for explicit systems)."""
        if self.is_sparse:
            from scipy.sparse.linalg import spsolve
            return spsolve(self.Q.tocsc(), X)
        return np.linalg.solve(_dense(self.Q), X)

    def jr_mul(self, X, adjoint: bool = False):
        """(J - R) @ X, or (J - R)^H @ X when adjoint."""
        A = self.J - self.R
        if adjoint:
            A = A.conj().T
        return A @ X

    def drift(self):
        """The state matrix (J - R) Q, in the native storage."""
        return (self.J - self.R) @ self.Q


def dh_system(J, R, Q, repair_tol: float = 1e-10) -> DHSystem:
    """Build a :class:`DHSystem`, repairing roundoff-level structure defects.

    Defects up to ``repair_tol`` (relative) are removed by projecting J onto
    skew-Hermitian and R, Q onto Hermitian matrices; larger defects raise
    :class:`DHStructureError`.  Definiteness of R and Q is *not* enforced
    here -- run :func:`validate_dh` for the full report.
    """
    mats = {"J": J, "R": R, "Q": Q}
    out = {}
    for name, M in mats.items():
        scale = _norm(M)
        defect = _skew_defect(M) if name == "J" else _herm_defect(M)
        if scale > 0 and defect > repair_tol * scale:
            kindname = "skew-Hermitian" if name == "J" else "Hermitian"
            raise DHStructureError(
                f"{name} is not {kindname}: defect {defect:.3e} exceeds "
                f"{repair_tol:.1e} * ||{name}||")
        out[name] = skew_part(M) if name == "J" else hermitian_part(M)
    return DHSystem(out["J"], out["R"], out["Q"])


@dataclass
class ValidationIssue:
    prop: str
    defect: float
    tol: float

    def __str__(self):
        return f"{self.prop} (defect {self.defect:.3e}, tol {self.tol:.3e})"


@dataclass
class ValidationReport:
    ok: bool
    issues: list
    asymptotically_stable: Optional[bool]
    spectral_abscissa: Optional[float]

    def __str__(self):
        if self.ok:
            extra = ""
            if self.asymptotically_stable is not None:
                extra = (" (asymptotically stable)"
                         if self.asymptotically_stable
                         else " (NOT asymptotically stable)")
            return "DH structure ok" + extra
        return "DH structure violated: " + "; ".join(str(i) for i in self.issues)


def validate_dh(system: DHSystem, tol: float = 1e-10,
                check_stability: str = "auto") -> ValidationReport:
    """Check the DH structure of ``system`` and report all violations.

    Checks J skew-Hermitian, R Hermitian with lambda_min(R) >= -tol*||R||,
    Q Hermitian positive definite.  For dense systems (and sparse ones with
    n <= 400) the spectrum of (J - R) Q is also examined: an eigenvalue with
    nonnegative real part marks the system as not asymptotically stable,
    which is itself reported as a violation since every radius computation
    requires asymptotic stability.

    ``check_stability``: 'auto' (dense always, sparse if small), 'never',
    or 'always' (densifies sparse input).
    """
    issues = []
    J, R, Q = system.J, system.R, system.Q

    nj = _norm(J)
    d = _skew_defect(J)
    if d > tol * max(nj, 1e-300):
        issues.append(ValidationIssue("J skew-Hermitian", d, tol * nj))

    nr = _norm(R)
    d = _herm_defect(R)
    if d > tol * max(nr, 1e-300):
        issues.append(ValidationIssue("R Hermitian", d, tol * nr))
    else:
        rmin = _min_eig_hermitian(R)
        if rmin < -tol * max(nr, 1e-300):
            issues.append(ValidationIssue("R positive semidefinite", -rmin, tol * nr))

    nq = _norm(Q)
    d = _herm_defect(Q)
    if d > tol * max(nq, 1e-300):
        issues.append(ValidationIssue("Q Hermitian", d, tol * nq))
    else:
        qmin = _min_eig_hermitian(Q)
        if qmin <= 0:
            issues.append(ValidationIssue("Q positive definite", -qmin, 0.0))

    stable = None
    abscissa = None
    do_spec = (check_stability == "always"
               or (check_stability == "auto"
                   and (not system.is_sparse or system.n <= 400)))
    if do_spec and not issues:
        lam = np.linalg.eigvals(_dense(system.drift()))
        abscissa = float(np.max(lam.real))
        stable = abscissa < 0
        if not stable:
            issues.append(ValidationIssue("asymptotically stable", abscissa, 0.0))

    return ValidationReport(ok=not issues, issues=issues,
                            asymptotically_stable=stable,
                            spectral_abscissa=abscissa)


@dataclass
class RestrictionPair:
    """Restriction matrices B (n x m) and C (p x n) selecting the perturbation
    range and the measured output."""

    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.B = _dense(self.B)
        self.C = _dense(self.C)
        if self.B.ndim != 2 or self.C.ndim != 2:
            raise DHStructureError("B and C must be 2-d matrices")
        if self.B.shape[0] != self.C.shape[1]:
            raise DHStructureError(
                f"B has {self.B.shape[0]} rows but C has {self.C.shape[1]} columns")
        if not (np.all(np.isfinite(self.B.real)) and np.all(np.isfinite(self.C.real))):
            raise DHStructureError("restriction matrices contain non-finite entries")
        if np.linalg.matrix_rank(self.B) < self.B.shape[1]:
            raise DHStructureError("B does not have full column rank")
        if np.linalg.matrix_rank(self.C) < self.C.shape[0]:
            raise DHStructureError("C does not have full row rank")

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


# --------------------------------------------------------------------------
# options / results shared by the radius solvers
# --------------------------------------------------------------------------

@dataclass
class FrameworkOptions:
    """Knobs for the subspace frameworks and the structured optimizers.

    eps          relative termination tolerance of the subspace loops
    max_iter     iteration cap of the subspace loops
    num_probes   equally spaced probe frequencies used for initialization
    num_initial  interpolation points kept from the probes (None: min(10, n/4),
                 at least 1)
    seed         seed for randomized auxiliary steps (sampling verifiers)
    hinf_tol     relative accuracy of the level-set H-infinity solver
    gamma_inner  curvature bound for the inner concave maximization over t
    gamma_outer  curvature bound for the outer frequency minimization
                 (None: -1e4 * scale / width^2 heuristic)
    penalty_factor   cap multiplier for non-attained (infinite) objectives
    keep_iterates    record the per-iteration reduced models on the result
    """

    eps: float = 1e-6
    max_iter: int = 100
    num_probes: int = 20
    num_initial: Optional[int] = None
    seed: int = 0
    hinf_tol: float = 1e-9
    gamma_inner: float = 1e-6
    gamma_outer: Optional[float] = None
    penalty_factor: float = 10.0
    keep_iterates: bool = False

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.num_probes < 2:
            raise ValueError("num_probes must be at least 2")
        if self.num_initial is not None and not (
                1 <= self.num_initial <= self.num_probes):
            raise ValueError("num_initial must lie in [1, num_probes]")

    def resolve_initial(self, n: int) -> int:
        if self.num_initial is not None:
            return self.num_initial
        return max(1, min(10, n // 4))


@dataclass
class IterationRecord:
    omega: float
    value: float
    dim: int
    seconds: float
    reduced: object = None  # the iteration's ReducedDH when iterates are kept


@dataclass
class RadiusResult:
    """Outcome of a stability-radius computation.

    ``radius`` is 1/optimum for the unstructured kinds and sqrt(optimum) for
    the structured Hermitian kind.  ``history`` collects one record per
    iteration of the driving loop (subspace iterations, or optimizer
    iterations for the small-scale structured solver).
    """

    kind: str
    radius: float
    optimum: float
    omega: float
    iterations: int
    subspace_dim: int
    termination: str
    history: list = field(default_factory=list)
    reduced: object = None
    iterates: Optional[list] = None
    interp_points: Optional[list] = None

    def __str__(self):
        return (f"{self.kind} radius {self.radius:.8e} at omega {self.omega:.6e} "
                f"({self.iterations} iterations, dim {self.subspace_dim}, "
                f"{self.termination})")


# --------------------------------------------------------------------------
# orthonormal bases and oblique projections
# --------------------------------------------------------------------------

def orthonormal_extend(V: Optional[np.ndarray], block: np.ndarray,
                       defl_tol: float = 1e-12):
    """Extend the orthonormal basis ``V`` by the columns of ``block``.

    Columns are orthogonalized with two classical Gram-Schmidt passes and
    deflated when the residual drops below ``defl_tol`` times the incoming
    column norm.  Returns ``(V_new, added)``.
    """
    block = np.atleast_2d(_dense(block))
    n = block.shape[0]
    if V is None or V.size == 0:
        V = np.zeros((n, 0), dtype=block.dtype)
    if V.dtype != np.result_type(V.dtype, block.dtype):
        V = V.astype(np.result_type(V.dtype, block.dtype))
    cols = [V[:, j] for j in range(V.shape[1])]
    added = 0
    for j in range(block.shape[1]):
        v = block[:, j].astype(np.result_type(V.dtype, block.dtype), copy=True)
        incoming = np.linalg.norm(v)
        if incoming == 0:
            continue
        for _ in range(2):  # repeated re-orthogonalization
            for q in cols:
                v -= q * (q.conj() @ v)
        r = np.linalg.norm(v)
        if r <= defl_tol * incoming:
            continue
        cols.append(v / r)
        added += 1
    if not cols:
        return np.zeros((n, 0), dtype=block.dtype), 0
    return np.column_stack(cols), added


def realify_block(block: np.ndarray) -> np.ndarray:
    """Split a complex block into [Re, Im] columns (drops the zero half when
    the block is already real).  Keeps bases of real systems real, so that a
    single expansion covers the conjugate frequency pair."""
    block = np.atleast_2d(block)
    if not np.iscomplexobj(block):
        return block
    if not np.any(block.imag != 0):
        return block.real.copy()
    return np.hstack([block.real, block.imag])


def oblique_basis(system, V: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """W = Q V (V^H Q V)^{-1} for orthonormal V; satisfies W^H V = I.

    Raises :class:`ObliqueBreakdownError` when V is not orthonormal or when
    V^H Q V is numerically singular (no regularization is attempted).
    """
    V = np.atleast_2d(V)
    k = V.shape[1]
    gram = V.conj().T @ V
    if np.linalg.norm(gram - np.eye(k)) > tol:
        raise ObliqueBreakdownError("basis not orthonormal")
    QV = system.q_mul(V)
    VQV = hermitian_part(V.conj().T @ QV)
    try:
        cf = np.linalg.cholesky(VQV)
    except np.linalg.LinAlgError as exc:
        raise ObliqueBreakdownError(
            "V^H Q V is not positive definite (oblique projector breakdown)"
        ) from exc
    diag = np.abs(np.diag(cf))
    if diag.min() <= 1e-14 * max(diag.max(), 1e-300):
        raise ObliqueBreakdownError("V^H Q V is numerically singular")
    W = sla.cho_solve((cf, True), QV.conj().T).conj().T
    resid = np.linalg.norm(W.conj().T @ V - np.eye(k))
    if not np.isfinite(resid) or resid > tol:
        raise ObliqueBreakdownError(
            f"oblique projector inaccurate: ||W^H V - I|| = {resid:.3e}")
    return W


# --------------------------------------------------------------------------
# structure-preserving reductions
# --------------------------------------------------------------------------

@dataclass
class ReducedDH:
    """Projected DH triple plus restrictions and the projection bases.

    ``mode`` records which side carries the orthonormal basis:
    'rj'          V orthonormal, W = Q V (V^H Q V)^{-1}, B_k = W^H B, C_k = C W
    'q'           W orthonormal, V = (J-R)^H W (W^H (J-R)^H W)^{-1},
                  B_k = V^H B, C_k = C V
    'structured'  V orthonormal, W as in 'rj', B_k = W^H B, no C
    In every mode W^H V = I and (J_k, R_k, Q_k) inherits the DH structure.
    """

    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    C: Optional[np.ndarray]
    V: np.ndarray
    W: np.ndarray
    mode: str

    @property
    def dim(self) -> int:
        return self.J.shape[0]

    def drift(self) -> np.ndarray:
        return (self.J - self.R) @ self.Q

    def system(self) -> "DHSystem":
        """The reduced triple as a standalone (dense) DH system."""
        return DHSystem(self.J, self.R, self.Q)

    def structure_defects(self) -> dict:
        """Relative structure defects, for monitoring the projections."""
        nj = np.linalg.norm(self.J)
        nr = np.linalg.norm(self.R)
        return {
            "skew": np.linalg.norm(self.J + self.J.conj().T) / max(nj, 1e-300),
            "r_min": float(np.linalg.eigvalsh(hermitian_part(self.R))[0]),
            "r_norm": nr,
            "q_min": float(np.linalg.eigvalsh(hermitian_part(self.Q))[0]),
            "biorth": float(np.linalg.norm(
                self.W.conj().T @ self.V - np.eye(self.dim))),
        }


def _project_triple(system, V, W):
    """(W^H J W, W^H R W, V^H Q V) with symmetrized roundoff."""
    JW = system.J @ W
    RW = system.R @ W
    Jk = skew_part(W.conj().T @ JW)
    Rk = hermitian_part(W.conj().T @ RW)
    Qk = hermitian_part(V.conj().T @ system.q_mul(V))
    return Jk, Rk, Qk


def reduce_dh(system, B, C, V=None, W=None, mode: str = "rj") -> ReducedDH:
    """Project (J, R, Q, B, C) onto a subspace, preserving the DH structure.

    mode 'rj': give an orthonormal ``V``; W is the Q-oblique completion.
    mode 'q':  give an orthonormal ``W`` (from adjoint directions); V solves
               the obliqueness condition through (J - R)^H.
    """
    B = _dense(B)
    if mode == "rj":
        if V is None:
            raise ValueError("mode 'rj' needs the orthonormal basis V")
        W = oblique_basis(system, V)
        Jk, Rk, Qk = _project_triple(system, V, W)
        Bk = W.conj().T @ B
        Ck = None if C is None else _dense(C) @ W
        return ReducedDH(Jk, Rk, Qk, Bk, Ck, V, W, "rj")
    if mode == "q":
        if W is None:
            raise ValueError("mode 'q' needs the orthonormal basis W")
        k = W.shape[1]
        gram = W.conj().T @ W
        if np.linalg.norm(gram - np.eye(k)) > 1e-8:
            raise ObliqueBreakdownError("basis not orthonormal")
        AW = system.jr_mul(W, adjoint=True)
        S = W.conj().T @ AW
        try:
            V = np.linalg.solve(S.conj().T, AW.conj().T).conj().T
        except np.linalg.LinAlgError as exc:
            raise ObliqueBreakdownError(
                "W^H (J-R)^H W is singular (oblique projector breakdown)") from exc
        resid = np.linalg.norm(W.conj().T @ V - np.eye(k))
        if not np.isfinite(resid) or resid > 1e-8:
            raise ObliqueBreakdownError(
                f"oblique projector inaccurate: ||W^H V - I|| = {resid:.3e}")
        Jk, Rk, Qk = _project_triple(system, V, W)
        Bk = V.conj().T @ B
        Ck = None if C is None else _dense(C) @ V
        return ReducedDH(Jk, Rk, Qk, Bk, Ck, V, W, "q")
    raise ValueError(f"unknown reduction mode {mode!r}")


def reduce_structured(system, B, V) -> ReducedDH:
    """Projection used by the structured radius: orthonormal V, Q-oblique W,
    and the restriction projected through W (B_k = W^H B)."""
    W = oblique_basis(system, V)
    Jk, Rk, Qk = _project_triple(system, V, W)
    Bk = W.conj().T @ _dense(B)
    return ReducedDH(Jk, Rk, Qk, Bk, None, V, W, "structured")
