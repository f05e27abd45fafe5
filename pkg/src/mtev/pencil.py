"""Generalized pencils ``P z = tau Q z`` near a shift.

Sparse LU (SuperLU with symmetric diagonal equilibration), shift-invert
Arnoldi with locking and certified residuals, and a small dense
nonsymmetric eigensolver (Householder Hessenberg reduction followed by
single-shift complex QR) that drives both the Ritz step and the oracle.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla


class NumericallySingular(ArithmeticError):
    pass


class ShiftHitEigenvalue(NumericallySingular):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TooLarge(ValueError):
    pass


# ---------------------------------------------------------------- sparse LU

class Factorization:
    """LU factors of ``D A D`` with ``D`` the inverse square-root diagonal scaling."""

    def __init__(self, A, lu, scale):
        self.shape = A.shape
        self.dtype = lu.L.dtype
        self._lu = lu
        self._d = scale

    @property
    def nnz(self) -> int:
        return int(self._lu.L.nnz + self._lu.U.nnz)

    def solve(self, b):
        b = np.asarray(b)
        d = self._d if b.ndim == 1 else self._d[:, None]
        rhs = d * b
        if np.iscomplexobj(rhs) and not np.iscomplexobj(np.empty(0, self.dtype)):
            x = self._lu.solve(np.ascontiguousarray(rhs.real)) \
                + 1j * self._lu.solve(np.ascontiguousarray(rhs.imag))
        else:
            x = self._lu.solve(np.ascontiguousarray(rhs.astype(self.dtype, copy=False)))
        return d * x


def lu_factor(A, pivot_ratio: float = 1e-14, diag_pivot_thresh: float = 0.1) -> Factorization:
    """Factor a square sparse matrix.

    Rows and columns are scaled by ``|a_ii|^{-1/2}`` (unit scaling for zero
    diagonals) before SuperLU with a minimum-degree ordering on ``A + A^T``.
    Raises ``NumericallySingular`` when the smallest pivot of ``U`` falls below
    ``pivot_ratio`` times the largest.
    """
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if not np.iscomplexobj(A.data):
        A = A.astype(float)
    diag = np.abs(A.diagonal())
    scale = np.ones(A.shape[0])
    nz = diag > 0
    scale[nz] = 1.0 / np.sqrt(diag[nz])
    D = sp.diags(scale)
    As = sp.csc_matrix(D @ A @ D)
    As.sort_indices()
    try:
        lu = sla.splu(As, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=diag_pivot_thresh,
                      options=dict(SymmetricMode=True))
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise NumericallySingular(str(exc)) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and (piv.max() == 0 or piv.min() < pivot_ratio * piv.max()):
        raise NumericallySingular(
            f"pivot ratio {piv.min() / max(piv.max(), 1e-300):.2e} below {pivot_ratio:g}")
    return Factorization(A, lu, scale)


def backward_error(A, x, b) -> float:
    r = A @ x - b
    nA = sla.norm(A, np.inf) if sp.issparse(A) else np.linalg.norm(A, np.inf)
    return float(np.linalg.norm(r, np.inf)
                 / (nA * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)))


# ------------------------------------------------- dense Hessenberg + QR

def _householder_vector(x):
    alpha = np.linalg.norm(x)
    if alpha == 0.0:
        return None
    phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
    v = x.astype(complex)
    v[0] += phase * alpha
    return v / np.linalg.norm(v)


def hessenberg(A, want_z: bool = True):
    """Unitary reduction ``A = Z H Z^H`` with ``H`` upper Hessenberg."""
    H = np.array(A, dtype=complex)
    n = H.shape[0]
    Z = np.eye(n, dtype=complex) if want_z else None
    for k in range(n - 2):
        v = _householder_vector(H[k + 1:, k])
        if v is None:
            continue
        H[k + 1:, k:] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
        if want_z:
            Z[:, k + 1:] -= 2.0 * np.outer(Z[:, k + 1:] @ v, v.conj())
    return H, Z


def _givens(x, y):
    """``c`` real, ``s`` complex with ``[[c, s], [-conj(s), c]] @ [x, y] = [r, 0]``."""
    ax = abs(x)
    r = math.hypot(ax, abs(y))
    if r == 0.0:
        return 1.0, 0j
    if ax == 0.0:
        return 0.0, np.conj(y) / abs(y)
    return ax / r, (x / ax) * np.conj(y) / r


def schur_qr(H, Z=None, want_t: bool = True, max_sweeps: int = 60):
    """Complex Schur form of an upper Hessenberg matrix by shifted QR.

    Uses Wilkinson shifts from the trailing 2x2 block, deflation on
    negligible subdiagonals, and an ad hoc exceptional shift every 10 sweeps
    without deflation.  With ``want_t=False`` only the diagonal is reliable.
    Returns ``(T, Z)``.
    """
    T = np.array(H, dtype=complex)
    n = T.shape[0]
    eps = np.finfo(float).eps
    hi = n - 1
    sweeps = 0
    while hi > 0:
        lo = hi
        while lo > 0:
            s = abs(T[lo - 1, lo - 1]) + abs(T[lo, lo])
            if s == 0.0:
                s = np.abs(T[: hi + 1, : hi + 1]).max()
            if abs(T[lo, lo - 1]) <= eps * s:
                T[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            sweeps = 0
            continue
        sweeps += 1
        if sweeps > max_sweeps:
            raise NoConvergence(f"QR iteration stalled at index {hi}")
        a, b, c, d = T[hi - 1, hi - 1], T[hi - 1, hi], T[hi, hi - 1], T[hi, hi]
        if sweeps % 10 == 0:
            mu = d + 0.75 * abs(c)
        else:
            disc = cmath.sqrt(0.25 * (a - d) ** 2 + b * c)
            m1, m2 = 0.5 * (a + d) + disc, 0.5 * (a + d) - disc
            mu = m1 if abs(m1 - d) <= abs(m2 - d) else m2
        col_end = n if want_t else hi + 1
        row_start = 0 if want_t else lo
        x, y = T[lo, lo] - mu, T[lo + 1, lo]
        for k in range(lo, hi):
            if k > lo:
                x, y = T[k, k - 1], T[k + 1, k - 1]
            cs, sn = _givens(x, y)
            G = np.array([[cs, sn], [-np.conj(sn), cs]])
            c0 = k - 1 if k > lo else lo
            T[k:k + 2, c0:col_end] = G @ T[k:k + 2, c0:col_end]
            if k > lo:
                T[k + 1, k - 1] = 0.0
            r1 = min(k + 3, hi + 1)
            T[row_start:r1, k:k + 2] = T[row_start:r1, k:k + 2] @ G.conj().T
            if Z is not None:
                Z[:, k:k + 2] = Z[:, k:k + 2] @ G.conj().T
    return T, Z


def _triangular_eigvecs(T):
    """Right eigenvectors of an upper triangular matrix (columns, unit 2-norm)."""
    n = T.shape[0]
    X = np.zeros((n, n), dtype=complex)
    small = np.finfo(float).eps * max(np.abs(T).max(), 1e-300)
    for i in range(n):
        lam = T[i, i]
        x = np.zeros(n, dtype=complex)
        x[i] = 1.0
        for j in range(i - 1, -1, -1):
            den = T[j, j] - lam
            if abs(den) < small:
                den = small
            x[j] = -(T[j, j + 1:i + 1] @ x[j + 1:i + 1]) / den
        X[:, i] = x / np.linalg.norm(x)
    return X


def eig_dense(A, vectors: bool = True):
    """Eigenvalues (and unit right eigenvectors) of a dense square matrix."""
    A = np.asarray(A)
    if A.shape[0] == 0:
        return np.zeros(0, complex), np.zeros((0, 0), complex)
    H, Z = hessenberg(A, want_z=vectors)
    T, Z = schur_qr(H, Z, want_t=vectors)
    vals = np.diag(T).copy()
    if not vectors:
        return vals, None
    V = Z @ _triangular_eigvecs(T)
    return vals, V / np.linalg.norm(V, axis=0)


# ------------------------------------------------------------ pencil solve

@dataclass
class EigenPair:
    value: complex
    vector: np.ndarray
    residual: float


@dataclass
class PencilSolveReport:
    shift: complex
    requested: int
    pairs: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    tol: float = 1e-8

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs], dtype=complex)


def pencil_residual(P, Q, tau, z) -> float:
    Pz, Qz = P @ z, Q @ z
    den = np.linalg.norm(Pz) + abs(tau) * np.linalg.norm(Qz)
    return float(np.linalg.norm(Pz - tau * Qz) / den) if den > 0 else math.inf


def _mgs(V, w, ncols):
    """Two passes of modified Gram-Schmidt against the first ``ncols`` columns."""
    for _ in range(2):
        for j in range(ncols):
            w = w - (V[:, j].conj() @ w) * V[:, j]
    return w


def _is_real(*mats) -> bool:
    return all(not np.iscomplexobj(m.data if sp.issparse(m) else m) for m in mats)


def arnoldi_shift_invert(P, Q, shift, count: int, tol: float = 1e-8, *,
                         factorize: Callable | None = None, seed: int = 0,
                         max_restarts: int = 20, nu_min: float = 1e-12,
                         subspace: int | None = None) -> PencilSolveReport:
    """Eigenpairs of ``P z = tau Q z`` nearest ``shift``.

    Arnoldi runs on ``T = (P - shift Q)^{-1} Q``; Ritz values ``nu`` give
    ``tau = shift + 1/nu``.  Every cycle does Rayleigh-Ritz on the locked
    vectors plus the new Krylov basis; Ritz pairs whose true pencil residual
    is below ``tol`` are locked.  Once the ``count`` largest ``|nu|`` are all
    certified, one extra cycle from a fresh random vector must not reveal a
    closer eigenvalue (this is what exposes multiplicities).

    ``factorize(shift)`` may supply any object with ``solve``; by default the
    sparse LU of ``P - shift Q`` is used.  A singular shift is perturbed once.
    """
    shift = complex(shift)
    if factorize is None:
        factorize = lambda s: lu_factor(sp.csc_matrix(P - (s.real if s.imag == 0 else s) * Q))  # noqa: E731
    try:
        fac = factorize(shift)
    except NumericallySingular:
        shift = shift * (1 + 1e-8) + 1e-8j
        try:
            fac = factorize(shift)
        except NumericallySingular as exc:
            raise ShiftHitEigenvalue(f"shift {shift} is numerically an eigenvalue") from exc

    n = P.shape[0]
    real_op = _is_real(P, Q) and shift.imag == 0.0
    rng = np.random.default_rng(seed)
    m = subspace or max(4 * count, 40)
    m = min(m, n)
    report = PencilSolveReport(shift=shift, requested=count, tol=tol)

    def apply(v):
        return fac.solve(Q @ v)

    def random_start():
        v = rng.standard_normal(n)
        if not real_op:
            v = v + 1j * rng.standard_normal(n)
        return v.astype(complex)

    X = np.zeros((n, 0), complex)
    TX = np.zeros((n, 0), complex)
    start = random_start()
    confirming = False
    best = []
    for it in range(max_restarts + 1):
        report.iterations = it + 1
        nl = X.shape[1]
        mm = min(m, n - nl)
        V = np.zeros((n, nl + mm), complex)
        TV = np.zeros((n, nl + mm), complex)
        V[:, :nl], TV[:, :nl] = X, TX
        v = _mgs(V, start, nl)
        nv = np.linalg.norm(v)
        k = nl
        if nv > 1e-12 * max(np.linalg.norm(start), 1e-300):
            V[:, k] = v / nv
            while True:
                w = apply(V[:, k])
                TV[:, k] = w
                k += 1
                if k == nl + mm:
                    break
                w = _mgs(V, w, k)
                nw = np.linalg.norm(w)
                if nw <= 1e-12 * np.linalg.norm(TV[:, k - 1]):
                    break
                V[:, k] = w / nw
        W, TW = V[:, :k], TV[:, :k]
        if k == 0:
            break
        Hp = W.conj().T @ TW
        theta, S = eig_dense(Hp)
        order = np.argsort(-np.abs(theta), kind="stable")
        cand = []
        for j in order:
            if abs(theta[j]) <= nu_min:
                continue
            y = W @ S[:, j]
            y /= np.linalg.norm(y)
            tau = shift + 1.0 / theta[j]
            cand.append((theta[j], tau, y, pencil_residual(P, Q, tau, y), j))
        top = cand[:count]
        newly = [c for c in top if c[3] <= tol]
        # lock certified vectors not yet represented in X
        for th, tau, y, res, j in newly:
            ty = TW @ S[:, j] / np.linalg.norm(W @ S[:, j])
            x, tx = y.copy(), ty
            for _ in range(2):
                if X.shape[1]:
                    coef = X.conj().T @ x
                    x, tx = x - X @ coef, tx - TX @ coef
            nx = np.linalg.norm(x)
            if nx < 1e-8:
                continue
            X = np.column_stack([X, x / nx])
            TX = np.column_stack([TX, tx / nx])
        exhausted = k >= n
        all_ok = (len(top) == count or exhausted) and all(c[3] <= tol for c in top)
        if all_ok and exhausted:
            best = top
            report.converged = True
            break
        best = top
        if all_ok and confirming:
            report.converged = True
            break
        if all_ok:
            confirming = True
            start = random_start()
            continue
        confirming = False
        pending = [c[2] for c in top if c[3] > tol]
        start = np.sum(pending, axis=0) if pending else random_start()
    report.pairs = sorted(
        (EigenPair(complex(c[1]), c[2], float(c[3])) for c in best if c[3] <= tol),
        key=lambda p: abs(p.value - shift))
    return report


# ------------------------------------------------------------------ oracle

def dense_oracle(P, Q, shift, max_dim: int = 600, nu_min: float = 1e-10) -> np.ndarray:
    """All finite eigenvalues of ``(P, Q)`` via ``(P - shift Q)^{-1} Q`` and dense QR."""
    n = P.shape[0]
    if n > max_dim:
        raise TooLarge(f"dimension {n} exceeds {max_dim}")
    shift = complex(shift)
    s = shift.real if shift.imag == 0 else shift
    Pd = P.toarray() if sp.issparse(P) else np.asarray(P)
    Qd = Q.toarray() if sp.issparse(Q) else np.asarray(Q)
    fac = lu_factor(sp.csc_matrix(Pd - s * Qd))
    T = fac.solve(Qd)
    nu, _ = eig_dense(T, vectors=False)
    nu = nu[np.abs(nu) > nu_min]
    tau = shift + 1.0 / nu
    return tau[np.argsort(np.abs(tau - shift), kind="stable")]
