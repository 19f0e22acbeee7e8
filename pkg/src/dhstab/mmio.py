"""Matrix Market I/O and the on-disk layout of DH problem directories.

A problem directory holds one coefficient matrix per file:

* first-order form: ``J.mtx``, ``R.mtx``, ``Q.mtx`` and optionally
  ``B.mtx``, ``C.mtx``;
* second-order (brake) form: ``M.mtx``, ``DM.mtx``, ``DR.mtx``, ``KE.mtx``,
  ``Kg.mtx``, ``DG.mtx`` and optionally ``N.mtx`` plus, again optionally,
  ``B.mtx``/``C.mtx`` for restricted radii;

plus an optional ``config.json`` with run options (for brake directories the
rotation speed ``omega_rot`` lives there).

Matrices are written with 17 significant digits so that write -> read
round-trips are bit exact for double precision data.
"""

import json
import os
from typing import Optional, Tuple

import numpy as np
import scipy.io
import scipy.sparse as sp

from .core import DHSystem, RestrictionPair, dh_system
from .solvers import SecondOrderDH

DH_NAMES = ("J", "R", "Q")
BRAKE_NAMES = ("M", "DM", "DR", "KE", "Kg", "DG")
_PRECISION = 17


def _diagnose(path: str) -> Optional[Tuple[int, str]]:
    """Best-effort scan for the first malformed line of a Matrix Market file."""
    try:
        with open(path, "r", errors="replace") as fh:
            lines = fh.readlines()
    except OSError:
        return None
    if not lines:
        return (1, "empty file")
    header = lines[0].strip().split()
    if len(header) < 4 or header[0].lower() != "%%matrixmarket":
        return (1, "invalid header (expected '%%MatrixMarket matrix ...')")
    fmt = header[2].lower() if len(header) > 2 else ""
    size_seen = False
    entries = None
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        parts = line.split()
        if not size_seen:
            want = 3 if fmt == "coordinate" else 2
            if len(parts) < want:
                return (i, "malformed size line")
            try:
                dims = [int(p) for p in parts[:want]]
            except ValueError:
                return (i, "malformed size line")
            entries = dims[2] if fmt == "coordinate" else dims[0] * dims[1]
            size_seen = True
            continue
        try:
            if fmt == "coordinate":
                int(parts[0]), int(parts[1])
                for p in parts[2:]:
                    float(p)
            else:
                for p in parts:
                    float(p)
        except (ValueError, IndexError):
            return (i, "malformed entry")
    if not size_seen:
        return (len(lines), "missing size line")
    return None


def read_matrix_market(path: str):
    """Read a Matrix Market file.

    Array files come back as dense ndarrays, coordinate files as CSC sparse
    matrices; symmetry qualifiers (symmetric, skew-symmetric, hermitian) are
    expanded to the full matrix.  Malformed files raise ValueError carrying
    the offending line number when it can be located.
    """
    try:
        mat = scipy.io.mmread(path)
    except Exception as exc:  # add file/line context to the parser error
        diag = _diagnose(path)
        if diag is not None:
            raise ValueError(f"{path}:{diag[0]}: {diag[1]}") from exc
        raise ValueError(f"{path}: not a readable Matrix Market file "
                         f"({exc})") from exc
    if sp.issparse(mat):
        return mat.tocsc()
    return np.asarray(mat)


def write_matrix_market(path: str, mat, comment: str = "") -> None:
    """Write a matrix with round-trip-exact precision; symmetry is detected
    automatically so symmetric/skew/hermitian inputs use compact storage."""
    scipy.io.mmwrite(path, sp.coo_matrix(mat) if sp.issparse(mat) else np.asarray(mat),
                     comment=comment, precision=_PRECISION)


def _mtx(directory: str, name: str) -> str:
    return os.path.join(directory, name + ".mtx")


def read_dh_dir(directory: str) -> dict:
    """Load a problem directory.

    Returns a dict with ``form`` ("dh" or "brake") and either a ``system``
    (plus optional ``B``/``C``) or the second-order ``components`` dict, along
    with any ``config`` found in the directory.
    """
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"{directory} is not a directory")
    out = {"config": {}}
    cfg_path = os.path.join(directory, "config.json")
    if os.path.exists(cfg_path):
        with open(cfg_path) as fh:
            out["config"] = json.load(fh)

    if os.path.exists(_mtx(directory, "J")):
        missing = [n for n in DH_NAMES if not os.path.exists(_mtx(directory, n))]
        if missing:
            raise FileNotFoundError(
                f"{directory}: missing {', '.join(n + '.mtx' for n in missing)}")
        J, R, Q = (read_matrix_market(_mtx(directory, n)) for n in DH_NAMES)
        out["form"] = "dh"
        out["system"] = dh_system(J, R, Q)
    elif os.path.exists(_mtx(directory, "M")):
        missing = [n for n in BRAKE_NAMES if not os.path.exists(_mtx(directory, n))]
        if missing:
            raise FileNotFoundError(
                f"{directory}: missing {', '.join(n + '.mtx' for n in missing)}")
        comps = {n: read_matrix_market(_mtx(directory, n)) for n in BRAKE_NAMES}
        if os.path.exists(_mtx(directory, "N")):
            comps["N"] = read_matrix_market(_mtx(directory, "N"))
        out["form"] = "brake"
        out["components"] = {k: (v.toarray() if sp.issparse(v) else v)
                             for k, v in comps.items()}
    else:
        raise FileNotFoundError(
            f"{directory}: found neither J.mtx (first-order form) nor M.mtx "
            f"(second-order form)")

    for name in ("B", "C"):
        p = _mtx(directory, name)
        if os.path.exists(p):
            mat = read_matrix_market(p)
            out[name] = mat.toarray() if sp.issparse(mat) else mat
        else:
            out[name] = None
    return out


def secondorder_from_components(components: dict, omega_rot: float) -> SecondOrderDH:
    return SecondOrderDH(mass=components["M"],
                         damping_const=components["DM"],
                         damping_speedinv=components["DR"],
                         stiffness_const=components["KE"],
                         stiffness_speed2=components["Kg"],
                         gyro_speed=components["DG"],
                         omega_rot=omega_rot,
                         circulatory=components.get("N"))


def write_dh_dir(directory: str, problem, restriction: Optional[RestrictionPair] = None,
                 config: Optional[dict] = None) -> None:
    """Write a DHSystem or SecondOrderDH (plus optional restriction pair and
    config) as a problem directory."""
    os.makedirs(directory, exist_ok=True)
    if isinstance(problem, DHSystem):
        for name, mat in zip(DH_NAMES, (problem.J, problem.R, problem.Q)):
            write_matrix_market(_mtx(directory, name), mat)
    elif isinstance(problem, SecondOrderDH):
        pieces = {"M": problem.mass, "DM": problem.damping_const,
                  "DR": problem.damping_speedinv, "KE": problem.stiffness_const,
                  "Kg": problem.stiffness_speed2, "DG": problem.gyro_speed}
        if problem.circulatory is not None:
            pieces["N"] = problem.circulatory
        for name, mat in pieces.items():
            write_matrix_market(_mtx(directory, name), mat)
        config = dict(config or {})
        config.setdefault("omega_rot", problem.omega_rot)
    else:
        raise TypeError(f"cannot write problem of type {type(problem).__name__}")
    if restriction is not None:
        write_matrix_market(_mtx(directory, "B"), restriction.B)
        write_matrix_market(_mtx(directory, "C"), restriction.C)
    if config:
        with open(os.path.join(directory, "config.json"), "w") as fh:
            json.dump(config, fh, indent=2, sort_keys=True)
            fh.write("\n")
