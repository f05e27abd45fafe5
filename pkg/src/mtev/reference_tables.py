"""Reference configurations and their expected converged values.

Each configuration is a refinement study; extrapolated values are matched to
expected ones by nearest distance and compared componentwise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources

from .tev_driver import ConvergenceStudy, convergence_study


@dataclass
class Comparison:
    expected: complex
    tol: float
    computed: complex | None
    error: float | None
    ok: bool

    def to_json(self) -> dict:
        d = asdict(self)
        for key in ("expected", "computed"):
            v = d[key]
            d[key] = None if v is None else [v.real, v.imag]
        return d


def load_expected() -> dict:
    text = resources.files("mtev").joinpath("data/expected_tables.json").read_text()
    return json.loads(text)


def componentwise(a: complex, b: complex) -> float:
    return max(abs(a.real - b.real), abs(a.imag - b.imag))


def match_nearest(expected: list, computed: list) -> list:
    """Greedy one-to-one assignment by increasing distance; ``None`` when exhausted."""
    pairs = sorted((componentwise(e, c), i, j) for i, e in enumerate(expected)
                   for j, c in enumerate(computed))
    out = [None] * len(expected)
    used = set()
    for _, i, j in pairs:
        if out[i] is None and j not in used:
            out[i] = j
            used.add(j)
    return out


def compare(expected: list, computed: list) -> list:
    """``expected`` is a list of ``(value, tol)``."""
    vals = [complex(v) for v, _ in expected]
    idx = match_nearest(vals, computed)
    out = []
    for (v, tol), j in zip(expected, idx):
        v, tol = complex(v), float(tol)
        if j is None:
            out.append(Comparison(v, tol, None, None, False))
            continue
        err = componentwise(v, computed[j])
        out.append(Comparison(v, tol, computed[j], err, err <= tol))
    return out


def run_entry(entry: dict, seed: int = 0, tol: float = 1e-8) -> tuple[ConvergenceStudy, list]:
    study = convergence_study(entry["domain"], entry["model"], entry["levels"],
                              count=entry["count"], n0=entry["n0"], tol=tol, seed=seed,
                              per_target=entry.get("per_target"),
                              sector_only=entry.get("sector_only", False),
                              max_restarts=entry.get("max_restarts", 20))
    extrap = [study.extrapolated(j) for j in study.indices]
    return study, compare(entry["expected"], extrap)


def fprime_checks(studies: dict, specs: list) -> list:
    """``|f_h'|`` at the finest level of the sequence nearest to each reference ``k``."""
    out = []
    for s in specs:
        study = studies.get(s["table"])
        if study is None:
            continue
        k = complex(s["k"])
        j = min(study.indices, key=lambda i: componentwise(study.extrapolated(i), k))
        finest = [r for r in study.rows if r.eig_index == j][-1]
        err = abs(finest.abs_fprime - s["abs_fprime"])
        out.append({"table": s["table"], "k": [k.real, k.imag], "expected": s["abs_fprime"],
                    "tol": s["tol"], "computed": finest.abs_fprime, "n": finest.n,
                    "ok": bool(err <= s["tol"])})
    return out


def run_all(only=None, seed: int = 0, tol: float = 1e-8) -> dict:
    spec = load_expected()
    tables, studies = [], {}
    for entry in spec["eigenvalues"]:
        if only and entry["name"] not in only:
            continue
        study, comps = run_entry(entry, seed, tol)
        studies[entry["name"]] = study
        tables.append({"name": entry["name"], "partial": study.partial,
                       "comparisons": [c.to_json() for c in comps],
                       "ok": all(c.ok for c in comps)})
    fp = fprime_checks(studies, spec["fprime"])
    return {"tables": tables, "fprime": fp,
            "ok": all(t["ok"] for t in tables) and all(f["ok"] for f in fp)}
