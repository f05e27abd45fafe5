"""Transmission eigenvalues from the linearized pencil, refinement studies, bracketing.

The quadratic problem ``S u - tau (G + H) u + tau^2 MN u = 0`` is linearized
with ``w = tau u``:

    [S 0] [u]       [G+H  -MN] [u]
    [0 M] [w] = tau [M     0 ] [w]

Shift-invert solves with ``P - sigma Q`` go through the block elimination
``(S - sigma (G+H) + sigma^2 MN) x = b1 - sigma MN M^{-1} b2``, ``y = sigma x + M^{-1} b2``,
which factors a matrix of half the size and avoids the pollution that the
badly scaled monolithic system produces near the defective ``tau = 0`` block.
"""

from __future__ import annotations

import cmath
import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import DimensionMismatch, MatrixSet, assemble_reduced
from .fixed_point import DegenerateNormalization, in_sector, lambda_prime, scan_assumption_a
from .mesh import DomainKind, build_mesh
from .pencil import (EigenPair, arnoldi_shift_invert, lu_factor, pencil_residual)
from .refraction import RefractionModel, const_scalar, estimate_bounds, parse_model

log = logging.getLogger(__name__)

DEFAULT_TARGETS = {
    DomainKind.UNIT_SQUARE: (3.7, 5.5, 12.0),
    DomainKind.LSHAPE: (1.4, 1.6 + 1.1j, 4.2),
}

# Shift targets (in tau = k^2) tuned to the presets' spectra.
PRESET_TARGETS = {
    (DomainKind.UNIT_SQUARE, "n16"): (3.7, 5.5),
    (DomainKind.UNIT_SQUARE, "n8aff"): (12.0,),
    (DomainKind.LSHAPE, "n16"): (1.4, 1.6 + 1.1j),
    (DomainKind.LSHAPE, "ndiag"): (1.45, 1.6 + 1.1j),
    (DomainKind.LSHAPE, "noffdiag"): (1.5 + 3.2j, 4.7, 6.3),
}

MERGE_TOL = 1e-7
GROUP_TOL = 1e-6


class PartialResults(RuntimeWarning):
    pass


class DegenerateDifferences(ArithmeticError):
    pass


class MatchingFailed(RuntimeWarning):
    pass


def default_targets(domain, model) -> tuple:
    domain = DomainKind.parse(domain)
    name = model.name if isinstance(model, RefractionModel) else str(model)
    return PRESET_TARGETS.get((domain, name), DEFAULT_TARGETS[domain])


# ------------------------------------------------------------ pencil

@dataclass
class LinearizedPencil:
    P: sp.csr_matrix
    Q: sp.csr_matrix
    ms: MatrixSet = field(repr=False)

    @property
    def dim(self) -> int:
        return self.ms.dim

    def factorize(self, sigma) -> "BlockShiftSolver":
        return BlockShiftSolver(self.ms, sigma)


class BlockShiftSolver:
    """Solves ``(P - sigma Q) z = b`` for the linearized pencil by block elimination."""

    def __init__(self, ms: MatrixSet, sigma):
        sigma = complex(sigma)
        s = sigma.real if sigma.imag == 0 else sigma
        self.sigma = s
        self._gh = (ms.G + ms.H).tocsr()
        self._mn = ms.MN
        self._k = lu_factor((ms.S - s * self._gh + s * s * ms.MN).tocsc())
        self._m = lu_factor(ms.M.tocsc())
        self._d = ms.dim

    def solve(self, b):
        d = self._d
        b1, b2 = b[:d], b[d:]
        w = self._m.solve(b2)
        x = self._k.solve(b1 - self.sigma * (self._mn @ w))
        return np.concatenate([x, self.sigma * x + w])


def build_linearized_pencil(ms: MatrixSet) -> LinearizedPencil:
    """``P = [[S, 0], [0, M]]``, ``Q = [[G + H, -MN], [M, 0]]``."""
    if not ms.reduced:
        raise DimensionMismatch("the linearized pencil needs a reduced MatrixSet")
    d = ms.dim
    for name, A in ms.items():
        if A.shape != (d, d):
            raise DimensionMismatch(f"{name} has shape {A.shape}, expected {(d, d)}")
    P = sp.bmat([[ms.S, None], [None, ms.M]], format="csr")
    Q = sp.bmat([[ms.G + ms.H, -ms.MN], [ms.M, None]], format="csr")
    return LinearizedPencil(P=P, Q=Q, ms=ms)


# ------------------------------------------------------------ solve

@dataclass
class TevResult:
    k: complex
    tau: complex
    residual: float
    multiplicity_group: int
    abs_fprime: float = math.nan
    fprime: complex = complex("nan")
    vector: np.ndarray | None = field(default=None, repr=False)

    def row(self) -> dict:
        return {"k_re": self.k.real, "k_im": self.k.imag, "tau_re": self.tau.real,
                "tau_im": self.tau.imag, "residual": self.residual,
                "multiplicity_group": self.multiplicity_group, "abs_fprime": self.abs_fprime}


def principal_k(tau) -> complex:
    k = cmath.sqrt(complex(tau))
    return -k if k.real < 0 else k


def _close(a, b, tol) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b))


def merge_pairs(found: list, new: list, tol: float = MERGE_TOL) -> list:
    """Add ``new`` pairs to ``found``; each found value absorbs at most one new one.

    Repeated eigenvalues reported by one shift keep their multiplicity while
    the same eigenvalue seen from two shifts is counted once.
    """
    used = set()
    out = list(found)
    for p in new:
        hit = None
        for i, q in enumerate(found):
            if i not in used and _close(p.value, q.value, tol):
                hit = i
                break
        if hit is None:
            out.append(p)
        else:
            used.add(hit)
            if p.residual < out[hit].residual:
                out[hit] = p
    return out


def group_ids(values, tol: float = GROUP_TOL) -> list:
    """Same id for values that coincide or are conjugate within ``tol`` (relative)."""
    ids = [-1] * len(values)
    nxt = 0
    for i, v in enumerate(values):
        if ids[i] >= 0:
            continue
        ids[i] = nxt
        for j in range(i + 1, len(values)):
            w = values[j]
            if ids[j] < 0 and (_close(v, w, tol) or _close(v, w.conjugate(), tol)):
                ids[j] = nxt
        nxt += 1
    return ids


@dataclass
class SolveOutcome:
    results: list
    partial: bool
    reports: list = field(default_factory=list, repr=False)
    ms: MatrixSet | None = field(default=None, repr=False)


def solve_pencil(lp: LinearizedPencil, targets, per_target: int, tol: float = 1e-8,
                 seed: int = 0, max_restarts: int = 20):
    """Certified pairs of the linearized pencil near every target (merged, conjugates added)."""
    found, reports, partial = [], [], False
    real = not (np.iscomplexobj(lp.P.data) or np.iscomplexobj(lp.Q.data))
    for t in targets:
        rep = arnoldi_shift_invert(lp.P, lp.Q, t, per_target, tol, factorize=lp.factorize,
                                   seed=seed, max_restarts=max_restarts)
        reports.append(rep)
        partial |= not rep.converged
        found = merge_pairs(found, rep.pairs)
    if real:
        # complete and symmetrize conjugate pairs from the better-resolved member
        found = sorted(found, key=lambda p: p.residual)
        out = []
        for p in found:
            if any(_close(q.value, p.value, MERGE_TOL) and q is not p for q in out
                   if abs(q.value.imag) > GROUP_TOL * abs(q.value)):
                continue
            if abs(p.value.imag) > GROUP_TOL * abs(p.value):
                out.append(p)
                tau, z = p.value.conjugate(), p.vector.conj()
                out.append(EigenPair(tau, z, pencil_residual(lp.P, lp.Q, tau, z)))
            else:
                out.append(_realify(lp, p))
        found = out
    return found, reports, partial


def _realify(lp: LinearizedPencil, p: EigenPair) -> EigenPair:
    """Real representative of a real eigenpair of a real pencil (kept if no worse)."""
    z = p.vector
    phase = z[np.argmax(np.abs(z))]
    zr = (z * (abs(phase) / phase)).real
    zr /= np.linalg.norm(zr)
    tau = float(p.value.real)
    res = pencil_residual(lp.P, lp.Q, tau, zr)
    if res <= max(p.residual, 1e-300) * 10:
        return EigenPair(complex(tau), zr, res)
    return p


def root_fprime(ms: MatrixSet, tau, z) -> complex:
    """``f_h'(tau_h)`` from the displacement part of a linearized eigenvector."""
    return lambda_prime(ms, tau, z[: ms.dim]) - 1.0


def solve_tev(domain, model, n: int, targets=None, count: int = 4, tol: float = 1e-8,
              per_target: int | None = None, scan_samples: int = 0, radius: float = 0.03,
              seed: int = 0, ms: MatrixSet | None = None, max_restarts: int = 20,
              sector_only: bool = False) -> SolveOutcome:
    """Transmission eigenvalues ``k = sqrt(tau)`` of the discrete problem.

    ``scan_samples = 0`` skips the Assumption-A scan and takes ``|f_h'|`` from
    the root eigenvector directly (the centre sample of any odd scan).
    ``sector_only`` drops complex ``tau`` outside the sector where the
    fixed-point function is defined.  The result is partial only when fewer
    than ``count`` certified pairs remain; a shift that leaves some of its
    nearest Ritz values unconverged is logged, not flagged.
    """
    domain = DomainKind.parse(domain)
    model = parse_model(model)
    targets = list(targets) if targets else list(default_targets(domain, model))
    mesh = build_mesh(domain, n)
    if ms is None:
        ms = assemble_reduced(mesh, model)
    lp = build_linearized_pencil(ms)
    found, reports, unconverged = solve_pencil(lp, targets, per_target or count, tol, seed,
                                               max_restarts)
    if unconverged:
        log.info("some shifts stopped before all requested Ritz values converged")
    found = [p for p in found if p.residual <= tol]
    if sector_only:
        found = [p for p in found if p.value.imag == 0 or in_sector(p.value)]
    found.sort(key=lambda p: (round(abs(principal_k(p.value)), 9), -p.value.imag))
    found = found[:count]
    partial = len(found) < count
    ids = group_ids([p.value for p in found])
    bounds = estimate_bounds(model, mesh) if scan_samples else None
    results = []
    for p, g in zip(found, ids):
        k = principal_k(p.value)
        if scan_samples:
            rep = scan_assumption_a(ms, k, radius, scan_samples, bounds, seed=seed)
            fp = rep.samples[scan_samples // 2].fprime_formula
        else:
            try:
                fp = root_fprime(ms, p.value, p.vector)
            except DegenerateNormalization:
                fp = complex(math.nan, math.nan)
        results.append(TevResult(k=k, tau=p.value, residual=p.residual, multiplicity_group=g,
                                 abs_fprime=abs(fp), fprime=fp, vector=p.vector))
    return SolveOutcome(results=results, partial=partial, reports=reports, ms=ms)


SOLVE_COLUMNS = ["index", "k_re", "k_im", "tau_re", "tau_im", "residual",
                 "multiplicity_group", "abs_fprime"]


def write_solve_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SOLVE_COLUMNS)
        for i, r in enumerate(results, 1):
            row = r.row()
            w.writerow([i] + [repr(float(row[c])) if c != "multiplicity_group" else row[c]
                              for c in SOLVE_COLUMNS[1:]])


# ------------------------------------------------------------ convergence

def conv_order(a, b, c) -> float:
    """``log2(|a - b| / |b - c|)`` for three successive approximations."""
    a, b, c = complex(a), complex(b), complex(c)
    if abs(b - c) <= 1e-15 * abs(b):
        raise DegenerateDifferences("successive values coincide")
    return math.log2(abs(a - b) / abs(b - c))


def richardson(a, b, c) -> complex:
    """Aitken extrapolation of three successive values (falls back to ``c``)."""
    a, b, c = complex(a), complex(b), complex(c)
    den = (c - b) - (b - a)
    if abs(den) <= 1e-14 * max(abs(c), 1.0) or abs(b - c) <= 1e-15 * abs(c):
        return c
    return c - (c - b) ** 2 / den


def richardson_order(b, c, p: float) -> complex:
    """Two-level extrapolation assuming error ``~ h^p``."""
    b, c = complex(b), complex(c)
    return c + (c - b) / (2 ** p - 1)


@dataclass
class ConvergenceRow:
    eig_index: int
    level: int
    n: int
    h: float
    k: complex
    r_h: float | None
    abs_fprime: float
    residual: float
    monotone_flag: bool | None = None
    matching_ok: bool = True


@dataclass
class ConvergenceStudy:
    domain: str
    model: str
    rows: list
    upper_report: list
    partial: bool = False

    def sequence(self, j: int) -> list:
        return [r.k for r in self.rows if r.eig_index == j]

    def extrapolated(self, j: int) -> complex:
        ks = self.sequence(j)
        if len(ks) >= 3:
            return richardson(*ks[-3:])
        return ks[-1]

    @property
    def indices(self) -> list:
        return sorted({r.eig_index for r in self.rows})


def match_levels(prev: list, cur: list, amb_tol: float = 1e-3):
    """Index map prev -> cur by nearest value; returns (mapping, ambiguous flags)."""
    mapping, amb = [], []
    taken = set()
    for k in prev:
        d = np.array([abs(k - c) if i not in taken else np.inf for i, c in enumerate(cur)])
        order = np.argsort(d)
        best = int(order[0])
        mapping.append(best)
        taken.add(best)
        second = d[order[1]] if len(order) > 1 else np.inf
        # ambiguous: a distinct second candidate lies within amb_tol of the best one
        close = second < np.inf and abs(cur[order[1]] - cur[best]) > GROUP_TOL * abs(k) \
            and abs(second - d[best]) <= amb_tol * abs(k)
        amb.append(bool(close))
    return mapping, amb


def convergence_study(domain, model, levels: int, count: int = 4, n0: int | None = None,
                      targets=None, tol: float = 1e-8, seed: int = 0,
                      per_target: int | None = None, sector_only: bool = False,
                      max_restarts: int = 20) -> ConvergenceStudy:
    """Solve on ``n0 * 2^l`` for ``l < levels`` and match eigenvalues across levels.

    Rows carry ``|f_h'|`` from the root eigenvector (centre sample of a scan).
    ``per_target`` (default ``count``) caps the pairs requested at each shift.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    domain = DomainKind.parse(domain)
    model = parse_model(model)
    n0 = n0 or (8 if domain is DomainKind.UNIT_SQUARE else 4)
    seqs = None
    partial = False
    for lev in range(levels):
        n = n0 * 2 ** lev
        out = solve_tev(domain, model, n, targets, count, tol, scan_samples=0, seed=seed,
                        per_target=per_target or count, sector_only=sector_only,
                        max_restarts=max_restarts)
        partial |= out.partial
        res = out.results
        if seqs is None:
            seqs = [[(lev, n, r, True)] for r in res]
            continue
        prev = [s[-1][2].k for s in seqs]
        mapping, amb = match_levels(prev, [r.k for r in res])
        for s, i, a in zip(seqs, mapping, amb):
            if a:
                warnings.warn(MatchingFailed(f"ambiguous matching at level {lev} "
                                             f"near k = {s[-1][2].k}"), stacklevel=2)
            s.append((lev, n, res[i], not a))
    rows, upper = [], []
    mesh_h = lambda n: math.sqrt(2.0) / n  # noqa: E731
    for j, s in enumerate(seqs, 1):
        ks = [e[2].k for e in s]
        mono = None
        if len(ks) >= 2 and abs(ks[-1].imag) <= GROUP_TOL * abs(ks[-1]):
            mono = all(ks[i + 1].real < ks[i].real for i in range(len(ks) - 1))
        for i, (lev, n, r, ok) in enumerate(s):
            rh = None
            if i >= 2:
                try:
                    rh = conv_order(ks[i - 2], ks[i - 1], ks[i])
                except DegenerateDifferences:
                    rh = None
            rows.append(ConvergenceRow(eig_index=j, level=lev, n=n, h=mesh_h(n), k=r.k, r_h=rh,
                                       abs_fprime=r.abs_fprime, residual=r.residual,
                                       monotone_flag=mono, matching_ok=ok))
        if mono is not None:
            last = s[-1][2]
            upper.append({"eig_index": j, "k": [ks[-1].real, ks[-1].imag],
                          "decreasing": bool(mono), "fprime": [last.fprime.real, last.fprime.imag],
                          "fprime_negative": bool(last.fprime.real < 0)})
            if not mono or last.fprime.real >= 0:
                log.warning("eigenvalue %d does not approach from above monotonically", j)
    return ConvergenceStudy(domain=domain.value, model=model.name, rows=rows, upper_report=upper,
                            partial=partial)


CONVERGENCE_COLUMNS = ["domain", "model", "eig_index", "level", "n", "h", "k_re", "k_im", "r_h",
                       "abs_fprime", "residual", "monotone_flag"]


def write_convergence_csv(study: ConvergenceStudy, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONVERGENCE_COLUMNS)
        for r in study.rows:
            w.writerow([study.domain, study.model, r.eig_index, r.level, r.n, repr(r.h),
                        repr(r.k.real), repr(r.k.imag), "" if r.r_h is None else repr(r.r_h),
                        repr(r.abs_fprime), repr(r.residual),
                        "" if r.monotone_flag is None else int(r.monotone_flag)])


# ------------------------------------------------------------ bracketing

@dataclass
class BracketLine:
    tau: float
    tau_hat: float | None  # from n_upper * I
    tau_tilde: float | None  # from n_star * I
    bracketed: bool


@dataclass
class BracketReport:
    domain: str
    model: str
    n: int
    n_star: float
    n_upper: float
    lines: list

    def to_json(self) -> dict:
        return asdict(self)


def _real_taus(results) -> list:
    return [r.tau.real for r in results if abs(r.tau.imag) <= GROUP_TOL * abs(r.tau)]


def bracketing_check(domain, model, n: int, count: int = 4, targets=None,
                     tol: float = 1e-8, seed: int = 0) -> BracketReport:
    """Compare real eigenvalues with those of the constant models ``N_* I`` and ``N^* I``.

    The j-th real eigenvalue is bracketed when ``tau_hat_j <= tau_j <= tau_tilde_j``
    (``tau_hat`` from ``N^* I``, ``tau_tilde`` from ``N_* I``).
    """
    domain = DomainKind.parse(domain)
    model = parse_model(model)
    mesh = build_mesh(domain, n)
    bounds = estimate_bounds(model, mesh)
    base = solve_tev(domain, model, n, targets, count, tol, scan_samples=0, seed=seed)
    taus = _real_taus(base.results)
    if model.is_constant:
        hat = tilde = taus
    else:
        # constant problems: the spectrum scales roughly like 1/(n - 1)
        def const_taus(c):
            m = const_scalar(c)
            tg = [t * (model_mean(model, mesh) - 1) / (c - 1) for t in taus] or None
            out = solve_tev(domain, m, n, tg, count, tol, scan_samples=0, seed=seed,
                            per_target=count)
            return _real_taus(out.results)
        hat = const_taus(bounds.n_upper)
        tilde = const_taus(bounds.n_star)
    lines = []
    for j, t in enumerate(taus):
        th = hat[j] if j < len(hat) else None
        tt = tilde[j] if j < len(tilde) else None
        ok = th is not None and tt is not None and th <= t * (1 + 1e-12) and t <= tt * (1 + 1e-12)
        lines.append(BracketLine(tau=t, tau_hat=th, tau_tilde=tt, bracketed=bool(ok)))
    return BracketReport(domain=domain.value, model=model.name, n=n, n_star=bounds.n_star,
                         n_upper=bounds.n_upper, lines=lines)


def model_mean(model: RefractionModel, mesh) -> float:
    """Mean of the eigenvalues of N at the mesh nodes."""
    eig = np.linalg.eigvalsh(model.matrix(mesh.nodes))
    return float(eig.mean())


def write_bracket_json(report: BracketReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
