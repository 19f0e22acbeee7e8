"""A-posteriori checks on computed radii.

``verify_unstructured`` rebuilds the worst-case rank-one perturbation from
the optimal singular pair and measures how close the perturbed system comes
to losing stability exactly at the reported frequency.
``sample_structured_spectra`` stress-tests a structured Hermitian radius by
sampling random Hermitian perturbations of a given norm and counting
spectra that reach the closed right half-plane.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import DHSystem, RestrictionPair, _dense
from .hinf import TRANSFER_KINDS, eval_transfer

VERIFY_WARN_RTOL = 1e-4
_SIGNS = (1.0, -1.0, 1.0j, -1.0j)


def _dense_triple(system: DHSystem):
    return _dense(system.J), _dense(system.R), _dense(system.Q)


def verify_unstructured(system: DHSystem, kind: str,
                        restriction: RestrictionPair, radius: float,
                        omega_star: float) -> float:
    """Distance from i*omega_star to the spectrum after the worst-case
    rank-one perturbation of norm ``radius``.

    The perturbation B @ Delta @ C enters the field matching ``kind`` (the
    drift J for "rj", the energy matrix Q for "q"); Delta is built from the
    optimal singular pair of the transfer function at omega_star, with the
    scalar phase resolved by trying +-1 and +-i.  A tight radius should make
    an eigenvalue land (numerically) on i*omega_star; a residual above
    1e-4 * (1 + |omega_star|) triggers a warning.
    """
    if kind not in TRANSFER_KINDS:
        raise ValueError(f"kind must be one of {TRANSFER_KINDS}")
    if not isinstance(system, DHSystem):
        raise TypeError("verification needs an explicit DHSystem; assemble "
                        "second-order models first")
    G = eval_transfer(system, restriction, omega_star, kind)
    U, s, Vh = np.linalg.svd(G)
    u = U[:, 0]
    v = Vh[0, :].conj()
    J, R, Q = _dense_triple(system)
    B = restriction.B
    C = restriction.C
    target = 1j * omega_star
    best = np.inf
    for sign in _SIGNS:
        delta = sign * radius * np.outer(v, u.conj())
        E = B @ delta @ C
        if kind == "rj":
            A = ((J + E) - R) @ Q
        else:
            A = (J - R) @ (Q + E)
        lam = np.linalg.eigvals(A)
        best = min(best, float(np.min(np.abs(lam - target))))
    if best > VERIFY_WARN_RTOL * (1.0 + abs(omega_star)):
        warnings.warn(f"verification failed: no sign choice moved an "
                      f"eigenvalue within {VERIFY_WARN_RTOL:.0e}*(1+|omega*|) "
                      f"of i*omega* (residual {best:.3e})")
    return best


@dataclass
class SampleSummary:
    """Outcome of random Hermitian-perturbation sampling.

    min_real_abs   smallest |Re(lambda)| seen over all samples and eigenvalues
    crossings      number of samples with an eigenvalue in Re(lambda) >= 0
    count          number of samples drawn
    """

    min_real_abs: float
    crossings: int
    count: int


def sample_structured_spectra(system: DHSystem, B, r: float, count: int,
                              seed: int = 0) -> SampleSummary:
    """Spectra of (J - (R + B Delta B^H)) Q for ``count`` random complex
    Hermitian Delta with spectral norm ``r``."""
    if r < 0:
        raise ValueError("perturbation norm r must be nonnegative")
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    J, R, Q = _dense_triple(system)
    B = _dense(B)
    m = B.shape[1]
    nominal = (J - R) @ Q
    min_abs = np.inf
    crossings = 0
    for _ in range(count):
        if r == 0.0:
            delta = np.zeros((m, m))
        else:
            X = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            delta = (X + X.conj().T) / 2
            nrm = np.linalg.norm(delta, 2)
            if nrm == 0.0:
                continue
            delta = (r / nrm) * delta
        lam = np.linalg.eigvals(nominal - (B @ delta @ B.conj().T) @ Q)
        re = lam.real
        min_abs = min(min_abs, float(np.min(np.abs(re))))
        if np.any(re >= 0.0):
            crossings += 1
    return SampleSummary(min_real_abs=min_abs, crossings=crossings, count=count)
