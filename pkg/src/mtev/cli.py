"""Command-line front end: ``mtev <command> [flags]``.

Exit codes: 0 success, 2 results with warnings (partial solves, failed
checks), 1 errors including usage errors.  Every file output gets a
``<output>.manifest.json`` next to it.
"""

from __future__ import annotations

import os

# BLAS/OpenMP read these at import time, so cap before numpy loads.
if os.environ.get("TEV_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["TEV_THREADS"])

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import platform  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from dataclasses import dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import scipy  # noqa: E402
import scipy.sparse as sp  # noqa: E402

from . import __version__  # noqa: E402
from .assembly import assemble_reduced  # noqa: E402
from .element_lab import dumps as lab_dumps  # noqa: E402
from .element_lab import lab_report  # noqa: E402
from .fixed_point import scan_assumption_a, write_scan_csv  # noqa: E402
from .mesh import DomainKind, build_mesh  # noqa: E402
from .reference_tables import run_all  # noqa: E402
from .refraction import estimate_bounds, parse_model  # noqa: E402
from .tev_driver import (bracketing_check, convergence_study, solve_tev,  # noqa: E402
                         write_bracket_json, write_convergence_csv, write_solve_csv)

log = logging.getLogger("mtev")

COMMANDS = ("mesh-info", "solve", "scan", "convergence", "bracket", "element-lab",
            "reference-tables")

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2

LSHAPE_NOTE = ("L-shaped domain: re-entrant corner singularity and the substituted "
               "C1 bicubic element slow convergence; compare at the looser tolerance")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    domain: str = "square"
    model: str = "n16"
    n: int = 16
    levels: int = 3
    n0: int | None = None
    count: int = 4
    targets: list | None = None
    k_center: str | None = None
    radius: float = 0.03
    samples: int = 5
    tol: float = 1e-8
    scan_samples: int = 0
    per_target: int | None = None
    sector_only: bool = False
    seed: int = 0
    out: str | None = None
    dump_matrices: str | None = None
    only: list | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if self.n < 1 or self.levels < 1 or self.count < 1:
            raise UsageError("n, levels and count must be positive")
        if self.command == "scan" and self.k_center is None:
            raise UsageError("scan needs --k-center")
        if self.per_target is not None and self.per_target < 1:
            raise UsageError("per_target must be positive")
        if self.tol <= 0:
            raise UsageError("tol must be positive")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def parse_complex(s) -> complex:
    try:
        return complex(str(s).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise UsageError(f"not a number: {s!r}") from None


# ------------------------------------------------------------ argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS  # unset flags must not override config-file values
    p = _Parser(prog="mtev", description="Maxwell transmission eigenvalues (fixed-point form)")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp_):
        sp_.add_argument("--config", help="JSON file with RunConfig fields")
        sp_.add_argument("--seed", type=int, default=S)
        sp_.add_argument("--out", default=S, help="output file (stdout when omitted)")
        sp_.add_argument("-v", "--verbose", action="store_true")

    def problem(sp_, n=True):
        sp_.add_argument("--domain", default=S, choices=["square", "lshape"])
        sp_.add_argument("--model", default=S)
        if n:
            sp_.add_argument("--n", type=int, default=S)
        sp_.add_argument("--tol", type=float, default=S)
        sp_.add_argument("--dump-matrices", dest="dump_matrices", default=S, metavar="DIR")

    def selection(sp_):
        sp_.add_argument("--per-target", dest="per_target", type=int, default=S,
                         help="pairs requested per shift (default: count)")
        sp_.add_argument("--sector-only", dest="sector_only", action="store_true", default=S,
                         help="drop complex tau outside the fixed-point sector")

    m = sub.add_parser("mesh-info", help="mesh counts and h as JSON")
    common(m)
    m.add_argument("--domain", default=S, choices=["square", "lshape"])
    m.add_argument("--n", type=int, default=S)

    s = sub.add_parser("solve", help="transmission eigenvalues on one mesh (CSV)")
    common(s)
    problem(s)
    s.add_argument("--count", type=int, default=S)
    s.add_argument("--targets", nargs="+", default=S, help="shift targets in tau = k^2")
    s.add_argument("--scan-samples", dest="scan_samples", type=int, default=S,
                   help="0 takes |f'| from the root eigenvector")
    selection(s)

    sc = sub.add_parser("scan", help="f_h along a k interval (CSV)")
    common(sc)
    problem(sc)
    sc.add_argument("--k-center", dest="k_center", default=S)
    sc.add_argument("--radius", type=float, default=S)
    sc.add_argument("--samples", type=int, default=S)

    c = sub.add_parser("convergence", help="refinement study (CSV)")
    common(c)
    problem(c, n=False)
    c.add_argument("--levels", type=int, default=S)
    c.add_argument("--n0", type=int, default=S)
    c.add_argument("--count", type=int, default=S)
    c.add_argument("--targets", nargs="+", default=S)
    selection(c)

    b = sub.add_parser("bracket", help="bracketing by constant models (JSON)")
    common(b)
    problem(b)
    b.add_argument("--count", type=int, default=S)
    b.add_argument("--targets", nargs="+", default=S)

    e = sub.add_parser("element-lab", help="triangular local-space probes (JSON)")
    common(e)

    t = sub.add_parser("reference-tables", help="reference configurations diffed against "
                                            "bundled expected values (JSON)")
    common(t)
    t.add_argument("--only", nargs="+", default=S, help="subset of configuration names")
    t.add_argument("--tol", type=float, default=S)
    return p


def config_from_args(argv) -> tuple[RunConfig, bool]:
    ns = vars(build_parser().parse_args(argv))
    verbose = ns.pop("verbose", False)
    data = {}
    path = ns.pop("config", None)
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
    data.update(ns)
    cfg = RunConfig.from_json(data)
    cfg.validate()
    return cfg, verbose


# ------------------------------------------------------------ outputs

def dump_matrices(ms, directory) -> list:
    """One coordinate-format text file per matrix: ``i j re im`` per entry."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, A in ms.items():
        coo = sp.coo_matrix(A)
        order = np.lexsort((coo.col, coo.row))
        path = d / f"{name}.coo"
        with open(path, "w") as fh:
            fh.write(f"# {A.shape[0]} {A.shape[1]} {coo.nnz}\n")
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                v = complex(v)
                fh.write(f"{i} {j} {v.real!r} {v.imag!r}\n")
        paths.append(str(path))
    return paths


def versions() -> dict:
    return {"mtev": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def write_manifest(cfg: RunConfig, outputs: list, wall: float, status: int,
                   extra: dict | None = None) -> str | None:
    if not cfg.out:
        return None
    man = {"command": cfg.command, "config": cfg.to_json(),
           "tolerances": {"pencil_residual": cfg.tol, "scan_radius": cfg.radius},
           "versions": versions(), "wall_time_s": wall,
           "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
           "threads": os.environ.get("TEV_THREADS"), "outputs": outputs, "exit_code": status,
           "notes": []}
    if cfg.domain == "lshape" and cfg.command in ("solve", "convergence", "bracket", "scan"):
        man["notes"].append(LSHAPE_NOTE)
    if extra:
        man.update(extra)
    path = cfg.out + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, default=str)
    return path


def _emit_text(cfg: RunConfig, text: str) -> list:
    if cfg.out:
        Path(cfg.out).write_text(text)
        return [cfg.out]
    sys.stdout.write(text)
    return []


def _emit_csv(cfg: RunConfig, writer, obj) -> list:
    if cfg.out:
        writer(obj, cfg.out)
        return [cfg.out]
    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "out.csv"
        writer(obj, path)
        sys.stdout.write(path.read_text())
    return []


# ------------------------------------------------------------ commands

def _targets(cfg):
    return [parse_complex(t) for t in cfg.targets] if cfg.targets else None


def _problem(cfg):
    mesh = build_mesh(cfg.domain, cfg.n)
    model = parse_model(cfg.model)
    ms = assemble_reduced(mesh, model)
    dumped = dump_matrices(ms, cfg.dump_matrices) if cfg.dump_matrices else []
    return mesh, model, ms, dumped


def cmd_mesh_info(cfg):
    mesh = build_mesh(cfg.domain, cfg.n)
    return EXIT_OK, _emit_text(cfg, json.dumps(mesh.summary(), indent=2) + "\n"), {}


def cmd_solve(cfg):
    _, _, ms, dumped = _problem(cfg)
    out = solve_tev(cfg.domain, cfg.model, cfg.n, _targets(cfg), cfg.count, cfg.tol,
                    per_target=cfg.per_target, scan_samples=cfg.scan_samples, radius=cfg.radius,
                    seed=cfg.seed, ms=ms, sector_only=cfg.sector_only)
    files = _emit_csv(cfg, write_solve_csv, out.results) + dumped
    status = EXIT_WARN if out.partial else EXIT_OK
    return status, files, {"partial": out.partial, "found": len(out.results)}


def cmd_scan(cfg):
    mesh, model, ms, dumped = _problem(cfg)
    kc = parse_complex(cfg.k_center)
    bounds = estimate_bounds(model, mesh) if kc.imag else None
    rep = scan_assumption_a(ms, kc, cfg.radius, cfg.samples, bounds, seed=cfg.seed)
    files = _emit_csv(cfg, write_scan_csv, rep) + dumped
    info = {"min_abs_fprime": rep.min_abs_fprime, "assumption_a_holds": rep.assumption_a_holds,
            "sign_changes": rep.sign_changes, "branch_jumps": rep.branch_jumps, "eta": rep.eta}
    ok = rep.assumption_a_holds and rep.branch_jumps == 0 and rep.sign_changes in (None, 1)
    return (EXIT_OK if ok else EXIT_WARN), files, info


def cmd_convergence(cfg):
    study = convergence_study(cfg.domain, cfg.model, cfg.levels, cfg.count, cfg.n0,
                              _targets(cfg), cfg.tol, cfg.seed, per_target=cfg.per_target,
                              sector_only=cfg.sector_only)
    files = _emit_csv(cfg, write_convergence_csv, study)
    matching = all(r.matching_ok for r in study.rows)
    upper_ok = all(u["decreasing"] and u["fprime_negative"] for u in study.upper_report)
    extrap = {str(j): [study.extrapolated(j).real, study.extrapolated(j).imag]
              for j in study.indices}
    info = {"partial": study.partial, "matching_ok": matching, "upper_report": study.upper_report,
            "extrapolated": extrap}
    ok = not study.partial and matching and upper_ok
    return (EXIT_OK if ok else EXIT_WARN), files, info


def cmd_bracket(cfg):
    rep = bracketing_check(cfg.domain, cfg.model, cfg.n, cfg.count, _targets(cfg), cfg.tol,
                           cfg.seed)
    if cfg.out:
        write_bracket_json(rep, cfg.out)
        files = [cfg.out]
    else:
        files = _emit_text(cfg, json.dumps(rep.to_json(), indent=2) + "\n")
    ok = bool(rep.lines) and all(line.bracketed for line in rep.lines)
    return (EXIT_OK if ok else EXIT_WARN), files, {}


def cmd_element_lab(cfg):
    return EXIT_OK, _emit_text(cfg, lab_dumps(lab_report()) + "\n"), {}


def cmd_reference_tables(cfg):
    rep = run_all(cfg.only, cfg.seed, cfg.tol)
    files = _emit_text(cfg, json.dumps(rep, indent=2) + "\n")
    return (EXIT_OK if rep["ok"] else EXIT_WARN), files, {}


HANDLERS = {"mesh-info": cmd_mesh_info, "solve": cmd_solve, "scan": cmd_scan,
            "convergence": cmd_convergence, "bracket": cmd_bracket,
            "element-lab": cmd_element_lab, "reference-tables": cmd_reference_tables}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit code."""
    cfg.validate()
    t0 = time.perf_counter()
    status, files, extra = HANDLERS[cfg.command](cfg)
    write_manifest(cfg, files, time.perf_counter() - t0, status, extra)
    return status


def main(argv=None) -> int:
    try:
        cfg, verbose = config_from_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"mtev: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(cfg)
    except UsageError as exc:
        print(f"mtev: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"mtev: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
