"""The fixed-point function f_h(tau) = lambda_h(tau) - tau and its derivative.

``lambda_h(tau)`` is an eigenvalue of ``A_tau u = lambda B u``.  For complex
``tau`` the form ``A_tau`` is only coercive after adding ``eta B``; the
shifted problem ``(A_tau + eta B) u = (lambda + eta) B u`` has the same
``lambda``, so ``eta`` only changes the linear algebra.  All products with
eigenvectors are bilinear (plain transpose).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import MatrixSet, form_A_tau
from .pencil import NoConvergence, arnoldi_shift_invert, lu_factor
from .refraction import ModelBounds

SECTOR = math.sqrt(2.0) - 1.0


class ConditionViolated(ValueError):
    """Complex tau outside the sector |Re tau| > (sqrt 2 - 1)|Im tau|."""


class DegenerateNormalization(ArithmeticError):
    pass


@dataclass
class BranchState:
    center: complex
    last_vector: np.ndarray | None = None
    eta: float = 0.0

    def __post_init__(self):
        if complex(self.center).imag != 0 and self.eta <= 0:
            raise ValueError("eta must be positive for complex center")


@dataclass
class ScanSample:
    tau: complex
    lam: complex
    f: complex
    fprime_formula: complex
    fprime_fd: complex | None
    vector: np.ndarray = field(repr=False)
    overlap: float = 1.0


@dataclass
class ScanReport:
    samples: list
    min_abs_fprime: float
    assumption_a_holds: bool
    c_threshold: float = 0.05
    eta: float = 0.0
    branch_jumps: int = 0
    sign_changes: int | None = None

    def write_csv(self, path) -> None:
        write_scan_csv(self, path)


SCAN_COLUMNS = ["tau_re", "tau_im", "lambda_re", "lambda_im", "f_re", "f_im",
                "fprime_formula_re", "fprime_formula_im", "fprime_fd_re", "fprime_fd_im",
                "overlap"]


def in_sector(tau) -> bool:
    tau = complex(tau)
    return abs(tau.real) > SECTOR * abs(tau.imag)


def compute_eta(tau, bounds: ModelBounds, safety: float = 1.1,
                eps_fraction: float = 0.5) -> float:
    """Shift making ``A_tau + eta B`` coercive for complex ``tau``."""
    tau = complex(tau)
    t1, t2 = tau.real, tau.imag
    if t2 == 0.0:
        raise ConditionViolated("eta is only defined for non-real tau")
    if not in_sector(tau):
        raise ConditionViolated(f"|Re tau| <= (sqrt2 - 1)|Im tau| at tau = {tau}")
    nu = bounds.n_upper
    eps_max = (math.sqrt(2) * abs(t1 * t2) + (t1 * t1 - t2 * t2) / math.sqrt(2)) * nu / (nu - 1)
    eps = eps_fraction * eps_max
    a = abs(tau)
    return safety * math.sqrt(2) * (2 * a / (bounds.n_star - 1)
                                    + bounds.grad_seminorm ** 2 * a * a / eps)


def b_normalize(ms: MatrixSet, u) -> np.ndarray:
    """Scale ``u`` so that ``u^T B u = 1`` (plain transpose)."""
    u = np.asarray(u)
    ubu = u @ (ms.B @ u)
    if abs(ubu) <= 1e-12 * np.vdot(u, u).real:
        raise DegenerateNormalization("u^T B u vanishes (curl-free vector)")
    return u / np.sqrt(complex(ubu)) if np.iscomplexobj(u) or ubu < 0 else u / math.sqrt(ubu)


def lambda_prime(ms: MatrixSet, tau, u) -> complex:
    """d lambda / d tau = u^T (-(G + G^T) + 2 tau MN) u / u^T B u."""
    u = np.asarray(u)
    ubu = u @ (ms.B @ u)
    if abs(ubu) <= 1e-12 * np.vdot(u, u).real:
        raise DegenerateNormalization("u^T B u vanishes (curl-free vector)")
    num = -2.0 * (u @ (ms.G @ u)) + 2.0 * complex(tau) * (u @ (ms.MN @ u))
    return complex(num / ubu)


def _herm_overlap(ms, u, v) -> float:
    buv = np.vdot(u, ms.B @ v)
    nu = np.vdot(u, ms.B @ u).real
    nv = np.vdot(v, ms.B @ v).real
    return float(abs(buv) / math.sqrt(max(nu * nv, 1e-300)))


def _project(ms, vecs, target):
    """B-orthogonal projection of ``target`` onto span(vecs)."""
    V = np.column_stack(vecs)
    BV = ms.B @ V
    gram = V.conj().T @ BV
    rhs = BV.conj().T @ target
    return V @ np.linalg.solve(gram, rhs)


def eval_lambda(ms: MatrixSet, tau, state: BranchState, count: int = 4, tol: float = 1e-9,
                cluster_tol: float = 1e-8, seed: int = 0):
    """Branch value ``lambda_h(tau)`` and its B-normalized eigenvector.

    Solves ``(A_tau + eta B) u = (lambda + eta) B u`` near ``center + eta``.
    The pair with the largest overlap with ``state.last_vector`` wins (nearest
    to ``center`` when there is none).  If several eigenvalues coincide with
    the winner, the previous vector is projected onto their span so that a
    degenerate branch is followed smoothly.  Updates ``state.last_vector``.
    """
    tau = complex(tau)
    if tau.imag != 0 and not in_sector(tau):
        raise ConditionViolated(f"|Re tau| <= (sqrt2 - 1)|Im tau| at tau = {tau}")
    eta = state.eta if tau.imag != 0 else 0.0
    A = form_A_tau(ms, tau)
    if eta:
        A = A + eta * ms.B
    if tau.imag == 0:
        A = A.real
    shift = complex(state.center) + eta
    rep = arnoldi_shift_invert(A, ms.B, shift, count, tol, seed=seed)
    if not rep.pairs:
        raise NoConvergence(f"no eigenpair converged near {shift}", rep)
    lams = np.array([p.value - eta for p in rep.pairs])
    vecs = [p.vector for p in rep.pairs]
    if state.last_vector is not None:
        ov = [_herm_overlap(ms, v, state.last_vector) for v in vecs]
        j = int(np.argmax(ov))
    else:
        j = int(np.argmin(np.abs(lams - state.center)))
    cluster = [i for i in range(len(lams))
               if abs(lams[i] - lams[j]) <= cluster_tol * (1 + abs(lams[j]))]
    u = vecs[j]
    if len(cluster) > 1:
        ref = state.last_vector if state.last_vector is not None else vecs[j]
        u = _project(ms, [vecs[i] for i in cluster], ref)
    if tau.imag == 0 and np.iscomplexobj(u):
        # real symmetric pencil: a real representative exists
        u = (u * (abs(u[np.argmax(np.abs(u))]) / u[np.argmax(np.abs(u))])).real
    u = b_normalize(ms, u)
    # Rayleigh quotient (stationary for the complex-symmetric pencil)
    A0 = form_A_tau(ms, tau)
    lam = complex((u @ (A0 @ u)) / (u @ (ms.B @ u)))
    state.last_vector = u
    return lam, u


def apply_solution_operator(ms: MatrixSet, tau, f, eta: float = 0.0) -> np.ndarray:
    """``x`` with ``(A_tau + eta B) x = B f``."""
    tau = complex(tau)
    A = form_A_tau(ms, tau)
    if eta:
        A = A + eta * ms.B
    if tau.imag == 0:
        A = A.real
    return lu_factor(A).solve(ms.B @ np.asarray(f))


def scan_eta(taus, bounds: ModelBounds, **kw) -> float:
    """Largest admissible eta over a set of complex tau (0 for real ones)."""
    vals = [compute_eta(t, bounds, **kw) for t in taus if complex(t).imag != 0]
    return max(vals) if vals else 0.0


def scan_assumption_a(ms: MatrixSet, k_center, radius: float = 0.03, samples: int = 5,
                      bounds: ModelBounds | None = None, c_threshold: float = 0.05,
                      fd_step: float = 1e-4, seed: int = 0) -> ScanReport:
    """Sample ``f_h`` on ``tau = k^2`` with ``Re k`` in ``[Re k_c - r, Re k_c + r]``.

    The branch is seeded at ``tau = k_center^2`` (nearest eigenvalue) and then
    tracked by eigenvector overlap in increasing order.  Interior samples get a
    central difference of step ``fd_step |tau|`` along ``dtau/dk``.
    """
    if samples < 5:
        raise ValueError("samples must be >= 5")
    if radius <= 0:
        raise ValueError("radius must be positive")
    kc = complex(k_center)
    ks = kc.real - radius + 2 * radius * np.arange(samples) / (samples - 1) + 1j * kc.imag
    taus = ks * ks
    if kc.imag != 0 and bounds is None:
        raise ValueError("complex scans need model bounds for eta")
    eta = scan_eta(list(taus) + [kc * kc], bounds) if kc.imag != 0 else 0.0

    def lam_at(tau, last):
        st = BranchState(center=tau, last_vector=last, eta=eta)
        return eval_lambda(ms, tau, st, seed=seed)

    _, seed_vec = lam_at(kc * kc, None)
    prev = seed_vec
    out = []
    jumps = 0
    for m, (k, tau) in enumerate(zip(ks, taus)):
        lam, u = lam_at(tau, prev)
        ov = _herm_overlap(ms, u, prev)
        if ov < 0.9:
            jumps += 1
        fpf = lambda_prime(ms, tau, u) - 1.0
        fpd = None
        if 0 < m < samples - 1:
            d = fd_step * abs(tau) * k / abs(k)
            lp, _ = lam_at(tau + d, u)
            lm, _ = lam_at(tau - d, u)
            fpd = (lp - lm) / (2 * d) - 1.0
        out.append(ScanSample(tau=complex(tau), lam=lam, f=lam - complex(tau),
                              fprime_formula=fpf, fprime_fd=fpd, vector=u, overlap=ov))
        prev = u
    interior = [abs(s.fprime_formula) for s in out[1:-1]]
    mn = float(min(interior))
    signs = None
    if kc.imag == 0:
        fr = np.sign([s.f.real for s in out])
        signs = int(np.sum(fr[1:] != fr[:-1]))
    return ScanReport(samples=out, min_abs_fprime=mn, assumption_a_holds=mn >= c_threshold,
                      c_threshold=c_threshold, eta=eta, branch_jumps=jumps, sign_changes=signs)


def write_scan_csv(report: ScanReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for s in report.samples:
            fd = s.fprime_fd if s.fprime_fd is not None else complex(math.nan, math.nan)
            w.writerow([_fmt(s.tau.real), _fmt(s.tau.imag), _fmt(s.lam.real), _fmt(s.lam.imag),
                        _fmt(s.f.real), _fmt(s.f.imag), _fmt(s.fprime_formula.real),
                        _fmt(s.fprime_formula.imag), _fmt(fd.real), _fmt(fd.imag),
                        _fmt(s.overlap)])


def _fmt(x: float) -> str:
    return repr(float(x))
