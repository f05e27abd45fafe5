"""Global sparse matrices for the transmission-eigenvalue forms.

Matrix entries are ``A[i, j] = a(phi_j, phi_i)`` (row = test function):

    S   (N-I)^-1 curl2 u . curl2 v
    G   (N-I)^-1 u . curl2 v
    H   N(N-I)^-1 curl2 u . v
    B   curl u curl v
    M   u . v
    MN  N(N-I)^-1 u . v
    S1  curl2 u . curl2 v            (unit weight, for norms)

Essential conditions of H0(curl^2) in 2D (u.t = 0 and curl u = 0 on the
boundary) are imposed by null-space elimination, ``A -> K^T A K``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import bfs
from .bfs import Component, Kind
from .mesh import EdgeOrientation, Mesh
from .refraction import RefractionModel, eval_coefficients

MATRIX_NAMES = ("S", "G", "H", "B", "M", "MN", "S1")


class DimensionMismatch(ValueError):
    pass


class DegenerateConstraints(RuntimeError):
    pass


class AlreadyReduced(ValueError):
    pass


@dataclass
class ConstraintSet:
    """Homogeneous boundary constraints and the null-space basis ``K``.

    Attributes:
        rows: sparse ``(num_rows, ndof)`` constraint matrix ``C``; admissible
            DOF vectors satisfy ``C x = 0``.
        null_basis: sparse ``(ndof, nfree)`` matrix ``K`` with ``C K = 0``.
        free: global indices of the DOFs kept as reduced unknowns.
        rank: number of independent constraint rows.
    """

    rows: sp.csr_matrix
    null_basis: sp.csr_matrix
    free: np.ndarray
    rank: int


@dataclass
class MatrixSet:
    S: sp.csr_matrix
    G: sp.csr_matrix
    H: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    MN: sp.csr_matrix
    S1: sp.csr_matrix
    reduced: bool = False
    constraints: ConstraintSet | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def items(self):
        return [(name, getattr(self, name)) for name in MATRIX_NAMES]


def _compress(A: sp.spmatrix) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    if A.nnz:
        cut = 1e-15 * np.max(np.abs(A.data))
        A.data[np.abs(A.data) <= cut] = 0.0
        A.eliminate_zeros()
    A.sort_indices()
    return A


def assemble(mesh: Mesh, model: RefractionModel, quad_order: int = 6,
             chunk: int = 1024) -> MatrixSet:
    """Assemble all forms on the full (unconstrained) Hermite space."""
    a = mesh.cell_size
    quad = bfs.gauss_rule(a, order=quad_order)
    ref = bfs.reference_basis(quad.ref_points[:, 0], quad.ref_points[:, 1], a)
    w = quad.weights
    phi, c1, c2 = ref.value, ref.curl, ref.curl2

    # coefficient independent blocks
    B_loc = np.einsum("q,qi,qj->ij", w, c1, c1)
    M_loc = np.einsum("q,qia,qja->ij", w, phi, phi)
    S1_loc = np.einsum("q,qia,qja->ij", w, c2, c2)

    dofs = bfs.cell_dofs(mesh)
    ncell = mesh.num_cells
    ndof = bfs.DOFS_PER_NODE * mesh.num_nodes
    origins = mesh.nodes[mesh.cells[:, 0]]

    blocks = {k: np.empty((ncell, 32, 32)) for k in ("S", "G", "H", "MN")}
    for start in range(0, ncell, chunk):
        sl = slice(start, min(start + chunk, ncell))
        pts = origins[sl, None, :] + quad.points[None, :, :]
        coeff = eval_coefficients(model, pts)
        C = coeff.invNmI * w[None, :, None, None]
        D = coeff.NinvNmI * w[None, :, None, None]
        C_c2 = np.einsum("cqab,qjb->cqja", C, c2)
        blocks["S"][sl] = np.einsum("qia,cqja->cij", c2, C_c2)
        blocks["G"][sl] = np.einsum("qia,cqab,qjb->cij", c2, C, phi, optimize=True)
        blocks["H"][sl] = np.einsum("qia,cqab,qjb->cij", phi, D, c2, optimize=True)
        blocks["MN"][sl] = np.einsum("qia,cqab,qjb->cij", phi, D, phi, optimize=True)

    rows = np.repeat(dofs, 32, axis=1).ravel()
    cols = np.tile(dofs, (1, 32)).ravel()

    def glob(vals):
        return _compress(sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(ndof, ndof)))

    def glob_const(loc):
        return glob(np.broadcast_to(loc, (ncell, 32, 32)))

    return MatrixSet(
        S=glob(blocks["S"]), G=glob(blocks["G"]), H=glob(blocks["H"]),
        B=glob_const(B_loc), M=glob_const(M_loc), MN=glob(blocks["MN"]),
        S1=glob_const(S1_loc),
    )


# ---------------------------------------------------------------------------
# boundary constraints

def _edge_rows(p: int, q: int, orient: int, length: float):
    """Constraint rows (dicts dof -> coeff) for one boundary edge p -> q.

    Along the edge with tangential coordinate s, the tangential component T
    must vanish (its Hermite trace data: value and d/ds at both ends), and
    d_n T must equal the s-derivative of the normal component's cubic trace,
    which fixes d_n T and d_s d_n T at both ends.
    """
    if orient == EdgeOrientation.X_ALIGNED:
        T, Nc = Component.X, Component.Y
        dt, dn = Kind.DX, Kind.DY
        sign = 1.0  # curl = d_x u_y - d_y u_x = 0  ->  d_y u_x = d_x u_y
    else:
        T, Nc = Component.Y, Component.X
        dt, dn = Kind.DY, Kind.DX
        sign = 1.0  # curl = 0 on x = const  ->  d_x u_y = d_y u_x
    idx = lambda node, comp, kind: int(bfs.dof_index(node, comp, kind))  # noqa: E731
    L = length
    rows = []
    for node in (p, q):
        rows.append({idx(node, T, Kind.VAL): 1.0})
        rows.append({idx(node, T, dt): 1.0})
        # d_n T = d_s (Nc) at the node
        rows.append({idx(node, T, dn): 1.0, idx(node, Nc, dt): -sign})
    # d_s d_n T = second s-derivative of the cubic trace of Nc at each end
    y0, m0 = idx(p, Nc, Kind.VAL), idx(p, Nc, dt)
    y1, m1 = idx(q, Nc, Kind.VAL), idx(q, Nc, dt)
    rows.append({idx(p, T, Kind.DXY): 1.0, y1: -sign * 6 / L**2, y0: sign * 6 / L**2,
                 m0: sign * 4 / L, m1: sign * 2 / L})
    rows.append({idx(q, T, Kind.DXY): 1.0, y1: sign * 6 / L**2, y0: -sign * 6 / L**2,
                 m0: -sign * 2 / L, m1: -sign * 4 / L})
    return rows, (T, Nc, dt, dn)


def _pivot_priority(mesh: Mesh) -> dict:
    """Preferred elimination order of constrained DOFs (lower goes first).

    0: tangential value / tangential slope (pinned to zero)
    1: normal slope of the tangential component
    2: mixed derivative of the tangential component
    3: tangential slope of the normal component at non-corner nodes
       (diagonally dominant spline continuity rows)
    4: anything else
    """
    corners = set(mesh.corner_nodes().tolist())
    prio: dict[int, int] = {}

    def put(dof, level):
        dof = int(dof)
        prio[dof] = min(prio.get(dof, 99), level)

    for p, q, o in mesh.boundary_edges:
        if o == EdgeOrientation.X_ALIGNED:
            T, Nc, dt, dn = Component.X, Component.Y, Kind.DX, Kind.DY
        else:
            T, Nc, dt, dn = Component.Y, Component.X, Kind.DY, Kind.DX
        for node in (p, q):
            put(bfs.dof_index(node, T, Kind.VAL), 0)
            put(bfs.dof_index(node, T, dt), 0)
            # at corners the two normal slopes are tied by one row: pivot on X's only
            put(bfs.dof_index(node, T, dn),
                1 if (node not in corners or o == EdgeOrientation.X_ALIGNED) else 4)
            put(bfs.dof_index(node, T, Kind.DXY), 2)
            put(bfs.dof_index(node, Nc, dt), 3 if node not in corners else 4)
            put(bfs.dof_index(node, Nc, Kind.VAL), 4)
    return prio


def build_constraints(mesh: Mesh, pivot_tol: float = 1e-12,
                      drop_tol: float = 1e-15) -> ConstraintSet:
    """Boundary constraint rows and a sparse null-space basis by row reduction."""
    ndof = bfs.DOFS_PER_NODE * mesh.num_nodes
    raw = []
    for p, q, o in mesh.boundary_edges:
        rows, _ = _edge_rows(int(p), int(q), int(o), mesh.cell_size)
        raw.extend(rows)

    # dedupe identical rows (shared nodes of adjacent edges)
    seen = set()
    rows = []
    for r in raw:
        key = tuple(sorted((k, round(v, 14)) for k, v in r.items()))
        if key not in seen:
            seen.add(key)
            rows.append(dict(r))

    C = sp.lil_matrix((len(rows), ndof))
    for i, r in enumerate(rows):
        for k, v in r.items():
            C[i, k] = v
    C = C.tocsr()

    prio = _pivot_priority(mesh)
    order = sorted(prio, key=lambda d: (prio[d], d))

    # forward elimination over the constrained columns in priority order
    col_rows: dict[int, set] = {}
    for i, r in enumerate(rows):
        for k in r:
            col_rows.setdefault(k, set()).add(i)
    active = set(range(len(rows)))
    pivots: list[tuple[int, dict]] = []
    for col in order:
        cand = [i for i in col_rows.get(col, ()) if i in active and col in rows[i]]
        if not cand:
            continue
        best = max(cand, key=lambda i: (abs(rows[i][col]) / max(abs(v) for v in rows[i].values()), -i))
        prow = rows[best]
        rowmax = max(abs(v) for v in prow.values())
        if abs(prow[col]) <= pivot_tol * rowmax:
            continue
        active.discard(best)
        for i in cand:
            if i == best:
                continue
            r = rows[i]
            f = r[col] / prow[col]
            for k, v in prow.items():
                nv = r.get(k, 0.0) - f * v
                r[k] = nv
                col_rows.setdefault(k, set()).add(i)
            del r[col]
            rmax = max((abs(v) for v in r.values()), default=0.0)
            for k in [k for k, v in r.items() if abs(v) <= 1e-14 * rmax]:
                del r[k]
            if not r:
                active.discard(i)
        pivots.append((col, prow))

    for i in active:
        if rows[i]:
            raise DegenerateConstraints(f"constraint row {i} could not be reduced: {rows[i]}")

    pivot_cols = {c for c, _ in pivots}
    free = np.array([d for d in range(ndof) if d not in pivot_cols], dtype=np.int64)
    free_pos = {int(d): j for j, d in enumerate(free)}

    # back substitution: each pivot DOF as a combination of free DOFs
    expr: dict[int, dict[int, float]] = {}
    for col, prow in reversed(pivots):
        piv = prow[col]
        e: dict[int, float] = {}
        for k, v in prow.items():
            if k == col:
                continue
            coef = -v / piv
            if k in pivot_cols:
                for j, c in expr[k].items():
                    e[j] = e.get(j, 0.0) + coef * c
            else:
                j = free_pos[k]
                e[j] = e.get(j, 0.0) + coef
        if e:
            emax = max(abs(v) for v in e.values())
            e = {j: v for j, v in e.items() if abs(v) > drop_tol * emax}
        expr[col] = e

    ki, kj, kv = [], [], []
    for j, d in enumerate(free):
        ki.append(d)
        kj.append(j)
        kv.append(1.0)
    for col, e in expr.items():
        for j, v in e.items():
            ki.append(col)
            kj.append(j)
            kv.append(v)
    K = sp.csr_matrix((kv, (ki, kj)), shape=(ndof, len(free)))
    K.sort_indices()
    return ConstraintSet(rows=C, null_basis=K, free=free, rank=len(pivots))


def reduce(ms: MatrixSet, cs: ConstraintSet) -> MatrixSet:
    """Project every matrix onto the constrained space: ``A -> K^T A K``."""
    if ms.reduced:
        raise AlreadyReduced("MatrixSet is already reduced")
    K = cs.null_basis
    if K.shape[0] != ms.dim:
        raise DimensionMismatch(f"constraint basis has {K.shape[0]} rows, matrices {ms.dim}")
    Kt = K.T.tocsr()
    mats = {name: _compress(Kt @ A @ K) for name, A in ms.items()}
    return MatrixSet(**mats, reduced=True, constraints=cs)


def form_A_tau(ms: MatrixSet, tau: complex) -> sp.csr_matrix:
    """``A_tau = S - tau (G + G^T) + tau^2 MN`` (complex symmetric for complex tau)."""
    if not ms.reduced:
        raise ValueError("form_A_tau expects a reduced MatrixSet")
    tau = complex(tau)
    GG = ms.G + ms.G.T
    if tau.imag == 0.0:
        t = tau.real
        return (ms.S - t * GG + t * t * ms.MN).tocsr()
    return (ms.S.astype(complex) - tau * GG + tau * tau * ms.MN).tocsr()


def assemble_reduced(mesh: Mesh, model: RefractionModel, **kwargs) -> MatrixSet:
    return reduce(assemble(mesh, model, **kwargs), build_constraints(mesh))


def replace(ms: MatrixSet, **changes) -> MatrixSet:
    return dataclasses.replace(ms, **changes)
