"""Command-line interface.

Tasks: ``radius-rj``, ``radius-q``, ``radius-structured`` (subspace),
``radius-structured-small`` (direct), ``hinf``, ``gen``, ``verify`` and
``sweep`` (a radius task repeated over rotation speeds for second-order
inputs).  Inputs are problem directories of Matrix Market files; options can
come from a ``config.json`` (in the directory or via ``--config``) with
command-line flags taking precedence.  Every run prints a human-readable
table and writes one machine-readable JSON report.

Exit codes: 0 success; 2 invalid input/configuration; 3 numerical failure
(singular shift, oblique breakdown, degenerate or unstable problem);
4 non-convergence (iteration cap hit).
"""

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import __version__
from .core import (DegenerateProblemError, DHStructureError, DHSystem,
                   FrameworkOptions, ObliqueBreakdownError, RestrictionPair,
                   SingularShiftError, UnstableSystemError, validate_dh)
from .generators import GenSpec, generate
from .hinf import hinf_norm_bb, sigma_max_at, transfer_statespace
from .mmio import read_dh_dir, secondorder_from_components, write_dh_dir
from .solvers import BrakeOperator, assemble_brake_dh
from .structured import eta_structured, radius_structured_sf, radius_structured_small
from .unstructured import radius_q, radius_rj
from .verification import sample_structured_spectra, verify_unstructured

RADIUS_TASKS = ("radius-rj", "radius-q", "radius-structured",
                "radius-structured-small")
TASKS = RADIUS_TASKS + ("hinf", "gen", "verify", "sweep")

_OPTION_KEYS = ("eps", "k_max", "rho", "ell", "seed", "hinf_tol",
                "gamma_inner", "gamma_outer", "penalty_factor")

CURVE_POINTS = 400


@dataclass
class RunConfig:
    """Resolved configuration of one CLI run (defaults < file < flags)."""

    task: str
    input: Optional[str] = None
    output: Optional[str] = None
    emit_curve: bool = False
    omega_range: Optional[Tuple[float, float]] = None
    kind: str = "rj"
    omega_values: Optional[List[float]] = None
    sweep_task: str = "radius-rj"
    omega_rot: Optional[float] = None
    radius: Optional[float] = None
    omega_star: Optional[float] = None
    report: Optional[str] = None
    count: int = 1000
    scale: float = 0.99
    family: str = "dense"
    n: int = 20
    bandwidth: int = 10
    rank_cap: Optional[int] = None
    m: int = 2
    p: int = 2
    options: FrameworkOptions = field(default_factory=FrameworkOptions)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["options"] = dataclasses.asdict(self.options)
        if self.omega_range is not None:
            d["omega_range"] = list(self.omega_range)
        return d


@dataclass
class ResultReport:
    """Uniform machine-readable outcome; inapplicable fields are None.

    The schema is stable across tasks: radius runs fill the RadiusResult
    fields and the per-iteration table; ``hinf`` fills ``hinf_norm``;
    ``verify`` fills ``residual``/``tolerance`` or ``samples``; ``sweep``
    fills ``rows``; ``gen`` fills ``files``.
    """

    task: str
    version: str
    config: dict
    kind: Optional[str] = None
    radius: Optional[float] = None
    optimum: Optional[float] = None
    omega: Optional[float] = None
    iterations: Optional[int] = None
    subspace_dim: Optional[int] = None
    termination: Optional[str] = None
    table: Optional[list] = None
    interp_points: Optional[list] = None
    hinf_norm: Optional[float] = None
    residual: Optional[float] = None
    tolerance: Optional[float] = None
    samples: Optional[dict] = None
    rows: Optional[list] = None
    files: Optional[list] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultReport":
        return cls(**d)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="dhstab",
        description="Stability radii of dissipative Hamiltonian systems")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="task", required=True)

    def common(p, with_input=True):
        if with_input:
            p.add_argument("input", help="problem directory of .mtx files")
        p.add_argument("--config", help="JSON config file (default: "
                                        "config.json inside the directory)")
        p.add_argument("--output", help="report file path "
                                        "(default: dhstab-report.json)")
        p.add_argument("--eps", type=float, default=argparse.SUPPRESS,
                       help="relative termination tolerance")
        p.add_argument("--k-max", type=int, default=argparse.SUPPRESS,
                       dest="k_max", help="iteration cap")
        p.add_argument("--rho", type=int, default=argparse.SUPPRESS,
                       help="number of initialization probes")
        p.add_argument("--ell", type=int, default=argparse.SUPPRESS,
                       help="number of retained initial points")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                       help="seed for randomized auxiliary steps")
        p.add_argument("--hinf-tol", type=float, default=argparse.SUPPRESS,
                       dest="hinf_tol", help="H-infinity solver tolerance")
        p.add_argument("--gamma-inner", type=float, default=argparse.SUPPRESS,
                       dest="gamma_inner", help="inner curvature bound")
        p.add_argument("--gamma-outer", type=float, default=argparse.SUPPRESS,
                       dest="gamma_outer", help="outer curvature bound")
        p.add_argument("--penalty-factor", type=float,
                       default=argparse.SUPPRESS, dest="penalty_factor",
                       help="penalty cap multiplier")
        p.add_argument("--emit-curve", action="store_true",
                       default=argparse.SUPPRESS, dest="emit_curve",
                       help="write (omega, value) CSV samples")
        p.add_argument("--omega-range", type=float, nargs=2,
                       default=argparse.SUPPRESS, dest="omega_range",
                       metavar=("LO", "HI"), help="frequency interval")
        p.add_argument("--omega-rot", type=float, default=argparse.SUPPRESS,
                       dest="omega_rot",
                       help="rotation speed for second-order inputs")
        return p

    for t in RADIUS_TASKS:
        common(sub.add_parser(t, help=f"compute the {t[7:]} stability radius"))

    p = common(sub.add_parser("hinf", help="H-infinity norm of the "
                                           "restricted transfer function"))
    p.add_argument("--kind", choices=("rj", "q"), default=argparse.SUPPRESS,
                   help="transfer-function kind (default rj)")

    p = sub.add_parser("gen", help="generate a seeded problem directory")
    p.add_argument("outdir", help="directory to write")
    p.add_argument("--family", choices=("dense", "sparse_banded", "brake_toy"),
                   default="dense")
    p.add_argument("--n", type=int, default=20,
                   help="dimension (second-order dimension for brake_toy)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bandwidth", type=int, default=10)
    p.add_argument("--rank-cap", type=int, default=None, dest="rank_cap")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--omega-rot", type=float, default=1.0, dest="omega_rot")
    p.add_argument("--output", help="report file path")

    p = common(sub.add_parser("verify", help="a-posteriori perturbation check "
                                             "of a computed radius"))
    p.add_argument("--kind", choices=("rj", "q", "structured"),
                   default=argparse.SUPPRESS)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    p.add_argument("--omega-star", type=float, default=argparse.SUPPRESS,
                   dest="omega_star")
    p.add_argument("--report", default=argparse.SUPPRESS,
                   help="read kind/radius/omega from this report file")
    p.add_argument("--count", type=int, default=argparse.SUPPRESS,
                   help="number of sampled perturbations (structured)")
    p.add_argument("--scale", type=float, default=argparse.SUPPRESS,
                   help="sampled norm as a fraction of the radius")

    p = common(sub.add_parser("sweep", help="repeat a radius task over "
                                            "rotation speeds"))
    p.add_argument("--omega-values", type=float, nargs="+", required=True,
                   dest="omega_values", metavar="OMEGA")
    p.add_argument("--task", choices=RADIUS_TASKS, default=argparse.SUPPRESS,
                   dest="sweep_task", help="radius task to repeat")
    return top


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file, and explicitly given flags."""
    ns = vars(args).copy()
    task = ns.pop("task")
    cfg_path = ns.pop("config", None)
    file_cfg = {}
    input_dir = ns.get("input") or ns.get("outdir")
    if cfg_path is None and input_dir and os.path.isdir(input_dir):
        candidate = os.path.join(input_dir, "config.json")
        if os.path.exists(candidate):
            cfg_path = candidate
    if cfg_path:
        with open(cfg_path) as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError(f"{cfg_path}: config must be a JSON object")

    merged = dict(file_cfg)
    merged.update({k: v for k, v in ns.items() if v is not None})
    if "outdir" in merged:
        merged["input"] = merged.pop("outdir")

    opt_kwargs = {}
    rename = {"k_max": "max_iter", "rho": "num_probes", "ell": "num_initial"}
    for key in _OPTION_KEYS:
        if key in merged:
            opt_kwargs[rename.get(key, key)] = merged.pop(key)
    options = FrameworkOptions(**opt_kwargs)

    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(merged) - fields
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    if "omega_range" in merged and merged["omega_range"] is not None:
        lohi = merged["omega_range"]
        merged["omega_range"] = (float(lohi[0]), float(lohi[1]))
    return RunConfig(task=task, options=options, **merged)


def _load_problem(config: RunConfig):
    """(system, B, C, secondorder-or-None) for the configured input."""
    if not config.input:
        raise ValueError(f"task {config.task} requires an input directory")
    data = read_dh_dir(config.input)
    if data["form"] == "dh":
        return data["system"], data["B"], data["C"], None
    omega_rot = config.omega_rot
    if omega_rot is None:
        omega_rot = data["config"].get("omega_rot")
    if omega_rot is None:
        raise ValueError("second-order input needs omega_rot (flag or config)")
    so = secondorder_from_components(data["components"], float(omega_rot))
    return None, data["B"], data["C"], so


def _restriction(B, C, need_c: bool) -> RestrictionPair:
    if B is None:
        raise ValueError("this task needs B.mtx in the input directory")
    if need_c and C is None:
        raise ValueError("this task needs C.mtx in the input directory")
    if C is None:
        C = np.asarray(B).conj().T
    return RestrictionPair(B, C)


def _radius_once(task: str, system, B, C, opts: FrameworkOptions):
    if task == "radius-rj":
        return radius_rj(system, _restriction(B, C, True), opts=opts)
    if task == "radius-q":
        return radius_q(system, _restriction(B, C, True), opts=opts)
    if B is None:
        raise ValueError("structured tasks need B.mtx in the input directory")
    if task == "radius-structured":
        return radius_structured_sf(system, B, opts=opts)
    return radius_structured_small(system, B, opts=opts)


def _system_for(task: str, so, sparse_ok: bool = True):
    """Operator realization of a second-order model suited to the task."""
    if task in ("radius-rj", "radius-q"):
        return BrakeOperator(so)
    return assemble_brake_dh(so)


def _iteration_table(result) -> list:
    return [{"omega": float(r.omega), "value": float(r.value),
             "dim": int(r.dim), "seconds": float(r.seconds)}
            for r in result.history]


def _fill_radius(report: ResultReport, result) -> None:
    report.kind = result.kind
    report.radius = float(result.radius)
    report.optimum = float(result.optimum)
    report.omega = float(result.omega)
    report.iterations = int(result.iterations)
    report.subspace_dim = int(result.subspace_dim)
    report.termination = result.termination
    report.table = _iteration_table(result)
    if result.interp_points is not None:
        report.interp_points = [float(w) for w in result.interp_points]


def _curve_grid(config: RunConfig, result) -> np.ndarray:
    if config.omega_range is not None:
        lo, hi = config.omega_range
    else:
        visited = [abs(float(r.omega)) for r in result.history]
        visited.append(abs(float(result.omega)))
        span = max(max(visited), 1.0) * 1.5
        lo, hi = -span, span
    return np.linspace(lo, hi, CURVE_POINTS)


def _write_curves(config: RunConfig, result, system, B, C, out_base: str) -> List[str]:
    grid = _curve_grid(config, result)
    files = []
    structured = result.kind.startswith("structured")

    def sample(sysem, BB, CC):
        vals = []
        for w in grid:
            try:
                if structured:
                    vals.append(eta_structured(sysem, BB, float(w),
                                               config.options).value)
                else:
                    vals.append(sigma_max_at(sysem, RestrictionPair(BB, CC),
                                             float(w), result.kind))
            except (SingularShiftError, DegenerateProblemError):
                vals.append(float("nan"))
        return vals

    def write(path, vals):
        with open(path, "w") as fh:
            fh.write("omega,value\n")
            for w, v in zip(grid, vals):
                fh.write(f"{w!r},{v!r}\n")
        files.append(path)

    CC = None if structured else (C if C is not None else np.asarray(B).conj().T)
    write(out_base + "-curve-full.csv", sample(system, B, CC))
    red = result.reduced
    if red is not None:
        rsys = red.system()
        write(out_base + "-curve-reduced.csv",
              sample(rsys, red.B, None if structured else red.C))
    return files


def run(config: RunConfig) -> ResultReport:
    """Execute one configured task and return its report."""
    report = ResultReport(task=config.task, version=__version__,
                          config=config.echo())

    if config.task == "gen":
        spec = GenSpec(family=config.family, n=config.n,
                       seed=config.options.seed, bandwidth=config.bandwidth,
                       rank_cap=config.rank_cap, m=config.m, p=config.p,
                       omega_rot=config.omega_rot
                       if config.omega_rot is not None else 1.0)
        produced = generate(spec)
        if spec.family == "brake_toy":
            write_dh_dir(config.input, produced)
        else:
            system, restriction = produced
            write_dh_dir(config.input, system, restriction)
        report.files = sorted(os.listdir(config.input))
        return report

    system, B, C, so = _load_problem(config)

    if config.task in RADIUS_TASKS or config.task == "hinf":
        if so is not None:
            system = _system_for(config.task, so)

    if config.task == "hinf":
        pair = _restriction(B, C, True)
        rep = validate_dh(system) if isinstance(system, DHSystem) else None
        if rep is not None and not rep.ok:
            raise DHStructureError("input failed validation: "
                                   + "; ".join(str(i) for i in rep.issues))
        ss = transfer_statespace(system.J, system.R, system.Q,
                                 pair.B, pair.C, config.kind)
        out = hinf_norm_bb(ss, tol=config.options.hinf_tol)
        report.kind = config.kind
        report.hinf_norm = float(out.norm)
        report.omega = float(out.omega)
        report.iterations = int(out.iterations)
        return report

    if config.task in RADIUS_TASKS:
        result = _radius_once(config.task, system, B, C, config.options)
        _fill_radius(report, result)
        if config.emit_curve:
            base = os.path.splitext(config.output or "dhstab-report.json")[0]
            report.files = _write_curves(config, result, system, B, C, base)
        return report

    if config.task == "verify":
        kind = config.kind
        radius, omega_star = config.radius, config.omega_star
        if config.report:
            with open(config.report) as fh:
                prev = json.load(fh)
            kind = prev.get("kind") or kind
            radius = prev.get("radius") if radius is None else radius
            omega_star = (prev.get("omega") if omega_star is None
                          else omega_star)
        if radius is None:
            raise ValueError("verify needs --radius/--report")
        if so is not None:
            system = assemble_brake_dh(so)
        if kind == "structured" or kind.startswith("structured"):
            if B is None:
                raise ValueError("structured verify needs B.mtx")
            summary = sample_structured_spectra(
                system, B, config.scale * float(radius), config.count,
                seed=config.options.seed)
            report.kind = "structured"
            report.radius = float(radius)
            report.samples = dataclasses.asdict(summary)
            return report
        if omega_star is None:
            raise ValueError("verify needs --omega-star/--report")
        pair = _restriction(B, C, True)
        resid = verify_unstructured(system, kind, pair, float(radius),
                                    float(omega_star))
        report.kind = kind
        report.radius = float(radius)
        report.omega = float(omega_star)
        report.residual = float(resid)
        report.tolerance = 1e-6 * (1.0 + abs(float(omega_star)))
        return report

    if config.task == "sweep":
        if so is None:
            raise ValueError("sweep needs a second-order problem directory")
        if not config.omega_values:
            raise ValueError("sweep needs --omega-values")
        rows = []
        for om in config.omega_values:
            so_om = dataclasses.replace(so, omega_rot=float(om))
            sys_om = _system_for(config.sweep_task, so_om)
            result = _radius_once(config.sweep_task, sys_om, B, C,
                                  config.options)
            rows.append({"omega_rot": float(om),
                         "radius": float(result.radius),
                         "omega": float(result.omega),
                         "iterations": int(result.iterations),
                         "dim": int(result.subspace_dim),
                         "termination": result.termination})
        report.kind = config.sweep_task
        report.rows = rows
        return report

    raise ValueError(f"unknown task {config.task!r}")


def _print_report(report: ResultReport) -> None:
    print(f"dhstab {report.version}  task {report.task}")
    if report.rows is not None:
        print(f"{'omega_rot':>12} {'radius':>16} {'omega*':>14} "
              f"{'iters':>6} {'dim':>5}  termination")
        for row in report.rows:
            print(f"{row['omega_rot']:>12.6g} {row['radius']:>16.8e} "
                  f"{row['omega']:>14.6e} {row['iterations']:>6d} "
                  f"{row['dim']:>5d}  {row['termination']}")
        return
    if report.table:
        print(f"{'iter':>5} {'omega_k':>16} {'value_k':>16} {'dim':>5} "
              f"{'seconds':>9}")
        for k, row in enumerate(report.table, start=1):
            print(f"{k:>5d} {row['omega']:>16.8e} {row['value']:>16.8e} "
                  f"{row['dim']:>5d} {row['seconds']:>9.3f}")
    if report.radius is not None and report.kind != "structured":
        print(f"{report.kind} radius {report.radius:.10e} at omega "
              f"{report.omega:.8e} ({report.iterations} iterations, "
              f"dim {report.subspace_dim}, {report.termination})")
    if report.hinf_norm is not None:
        print(f"hinf norm {report.hinf_norm:.10e} at omega "
              f"{report.omega:.8e} ({report.iterations} iterations)")
    if report.residual is not None:
        ok = report.residual <= report.tolerance
        print(f"verification residual {report.residual:.3e} "
              f"(tolerance {report.tolerance:.3e}) -> "
              f"{'ok' if ok else 'FAILED'}")
    if report.samples is not None:
        s = report.samples
        print(f"sampled {s['count']} Hermitian perturbations at norm "
              f"{report.radius:.6e}*scale: {s['crossings']} crossings, "
              f"min |Re(lambda)| {s['min_real_abs']:.3e}")
    if report.files:
        print("files: " + ", ".join(report.files))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        report = run(config)
    except (DHStructureError, FileNotFoundError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SingularShiftError, ObliqueBreakdownError, DegenerateProblemError,
            UnstableSystemError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    out_path = config.output or "dhstab-report.json"
    with open(out_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    _print_report(report)
    if report.termination == "max_iter" or (
            report.rows is not None and
            any(r["termination"] == "max_iter" for r in report.rows)):
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
