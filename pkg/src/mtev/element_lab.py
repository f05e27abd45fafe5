"""Probes of the lowest-order triangular curl-curl local space grad P1 + p W1.

Polynomials are coefficient arrays ``c[i, j]`` of ``x1^i x2^j``.  The
Poincare operator ``p w = int_0^1 t x_perp w(t x) dt`` is taken about a base
point ``b``; on homogeneous parts of degree ``k`` (in ``y = x - b``) it is
``y_perp w_k(y) / (k + 2)``.  The lab reports numbers; it asserts nothing
about conformity of any particular degree-of-freedom choice.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from math import comb

import numpy as np
from numpy.polynomial import polynomial as npoly

DEG = 5  # coefficient arrays are DEG x DEG (total degree <= 4 after p)


class DegenerateTriangle(ValueError):
    pass


class NotUnisolvent(ValueError):
    pass


# ------------------------------------------------------------ polynomials

def _pad(c, size=DEG):
    out = np.zeros((size, size))
    c = np.asarray(c, dtype=float)
    out[: c.shape[0], : c.shape[1]] = c[:size, :size]
    return out


def poly_mul(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i, j in zip(*np.nonzero(a)):
        out[i:i + b.shape[0], j:j + b.shape[1]] += a[i, j] * b
    return out


def poly_translate(c, d):
    """Coefficients of ``q(x) = p(x + d)``."""
    c = np.asarray(c, dtype=float)
    out = np.zeros_like(c)
    for i, j in zip(*np.nonzero(c)):
        for a in range(i + 1):
            for b in range(j + 1):
                out[a, b] += c[i, j] * comb(i, a) * comb(j, b) * d[0] ** (i - a) * d[1] ** (j - b)
    return out


def poly_eval(c, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return npoly.polyval2d(x[:, 0], x[:, 1], c)


def poly_dx(c, axis):
    d = npoly.polyder(np.asarray(c, float), axis=axis)
    return _pad(d, c.shape[0])


@dataclass(frozen=True)
class TrianglePolyField:
    """Vector field with polynomial components on a triangle."""

    c1: np.ndarray
    c2: np.ndarray

    def value(self, x) -> np.ndarray:
        return np.stack([poly_eval(self.c1, x), poly_eval(self.c2, x)], axis=-1)

    def curl_coeffs(self) -> np.ndarray:
        return poly_dx(self.c2, 0) - poly_dx(self.c1, 1)

    def curl(self, x) -> np.ndarray:
        return poly_eval(self.curl_coeffs(), x)


def poincare_apply(w, base_point=(0.0, 0.0)) -> TrianglePolyField:
    """``p w`` about ``base_point`` for a polynomial ``w`` of degree <= 3."""
    w = _pad(w)
    if any(w[i, j] != 0 for i in range(DEG) for j in range(DEG) if i + j > 3):
        raise ValueError("w must have total degree <= 3")
    b = np.asarray(base_point, dtype=float)
    wy = poly_translate(w, b)  # w as a polynomial in y = x - b
    p1 = np.zeros((DEG, DEG))
    p2 = np.zeros((DEG, DEG))
    for i in range(DEG):
        for j in range(DEG):
            if wy[i, j] == 0 or i + j > 3:
                continue
            s = wy[i, j] / (i + j + 2)
            p1[i, j + 1] -= s  # -y2 * w_k
            p2[i + 1, j] += s  # +y1 * w_k
    return TrianglePolyField(poly_translate(p1, -b), poly_translate(p2, -b))


# ------------------------------------------------------------ local space

def barycentric(tri) -> list:
    """Barycentric coordinates as linear polynomials."""
    tri = np.asarray(tri, dtype=float)
    M = np.column_stack([np.ones(3), tri])
    if abs(np.linalg.det(M)) < 1e-14 * max(np.abs(tri).max(), 1.0) ** 2:
        raise DegenerateTriangle("triangle has (numerically) zero area")
    coef = np.linalg.inv(M)  # lambda_i = coef[0,i] + coef[1,i] x1 + coef[2,i] x2
    out = []
    for i in range(3):
        c = np.zeros((2, 2))
        c[0, 0], c[1, 0], c[0, 1] = coef[0, i], coef[1, i], coef[2, i]
        out.append(c)
    return out


def bubble(tri) -> np.ndarray:
    l1, l2, l3 = barycentric(tri)
    return _pad(poly_mul(poly_mul(l1, l2), l3))


class BasePoint(enum.Enum):
    CENTROID = "centroid"
    FIRST_VERTEX = "first_vertex"
    ORIGIN = "origin"

    def resolve(self, tri) -> np.ndarray:
        tri = np.asarray(tri, dtype=float)
        if self is BasePoint.CENTROID:
            return tri.mean(axis=0)
        if self is BasePoint.FIRST_VERTEX:
            return tri[0].copy()
        return np.zeros(2)


@dataclass
class LocalSpace:
    triangle: np.ndarray
    base_point: np.ndarray
    fields: list
    rank: int


def _sample_matrix(fields, pts) -> np.ndarray:
    return np.column_stack([f.value(pts).reshape(-1) for f in fields])


def build_local_space(triangle, base_point=BasePoint.CENTROID, seed: int = 0) -> LocalSpace:
    """Basis ``grad x1, grad x2, p 1, p x1, p x2, p(l1 l2 l3)`` and its numerical rank."""
    tri = np.asarray(triangle, dtype=float)
    bub = bubble(tri)
    bp = base_point.resolve(tri) if isinstance(base_point, BasePoint) \
        else np.asarray(base_point, dtype=float)
    one = np.zeros((DEG, DEG))
    one[0, 0] = 1
    ex = np.zeros((DEG, DEG))
    ex[1, 0] = 1
    ey = np.zeros((DEG, DEG))
    ey[0, 1] = 1
    fields = [TrianglePolyField(one, np.zeros((DEG, DEG))),
              TrianglePolyField(np.zeros((DEG, DEG)), one.copy())]
    fields += [poincare_apply(w, bp) for w in (one, ex, ey, bub)]
    pts = random_points(tri, 12, seed)
    rank = int(np.linalg.matrix_rank(_sample_matrix(fields, pts)))
    return LocalSpace(triangle=tri, base_point=bp, fields=fields, rank=rank)


def random_points(tri, count, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = rng.random((count, 2))
    flip = r.sum(axis=1) > 1
    r[flip] = 1 - r[flip]
    tri = np.asarray(tri, dtype=float)
    return tri[0] + r[:, :1] * (tri[1] - tri[0]) + r[:, 1:] * (tri[2] - tri[0])


def mutual_rank(triangle, base_points, seed: int = 0) -> int:
    """Rank of the union of local spaces built about several base points."""
    tri = np.asarray(triangle, dtype=float)
    fields = []
    for bp in base_points:
        fields += build_local_space(tri, bp, seed).fields
    return int(np.linalg.matrix_rank(_sample_matrix(fields, random_points(tri, 24, seed))))


# ------------------------------------------------------------ DOFs

@dataclass(frozen=True)
class EdgeTangentialIntegral:
    """``int_e u . t ds``; ``t`` points from the lexicographically smaller endpoint."""

    a: tuple
    b: tuple

    def endpoints(self):
        p, q = np.asarray(self.a, float), np.asarray(self.b, float)
        return (p, q) if tuple(p) <= tuple(q) else (q, p)

    def __call__(self, f: TrianglePolyField, order: int = 8) -> float:
        p, q = self.endpoints()
        x, w = np.polynomial.legendre.leggauss(order)
        s = 0.5 * (x + 1)
        pts = p + s[:, None] * (q - p)
        t = q - p  # ds = |q - p| ds_ref, t_unit |q - p| = q - p
        return float(0.5 * np.sum(w * (f.value(pts) @ t)))


@dataclass(frozen=True)
class VertexCurl:
    vertex: tuple

    def __call__(self, f: TrianglePolyField, order: int = 8) -> float:
        return float(f.curl(np.asarray(self.vertex, float))[0])


@dataclass
class DofCandidate:
    functionals: list
    base_point: object = BasePoint.CENTROID


def edge_vertex_candidate(triangle, base_point=BasePoint.CENTROID) -> DofCandidate:
    """Three edge tangential integrals and three vertex curls."""
    tri = [tuple(map(float, v)) for v in np.asarray(triangle, float)]
    edges = [EdgeTangentialIntegral(tri[i], tri[(i + 1) % 3]) for i in range(3)]
    return DofCandidate(edges + [VertexCurl(v) for v in tri], base_point)


def dof_matrix(space: LocalSpace, dofs: DofCandidate) -> np.ndarray:
    return np.array([[phi(f) for f in space.fields] for phi in dofs.functionals])


def check_unisolvence(space: LocalSpace, dofs: DofCandidate, det_tol: float = 1e-12) -> dict:
    D = dof_matrix(space, dofs)
    if D.shape != (6, 6):
        raise ValueError(f"need 6 functionals on a 6-dimensional space, got {D.shape}")
    det = float(np.linalg.det(D))
    cond = float(np.linalg.cond(D))
    return {"det": det, "cond": cond, "unisolvent": bool(abs(det) > det_tol)}


def _combine(space: LocalSpace, coef) -> TrianglePolyField:
    c1 = sum(a * f.c1 for a, f in zip(coef, space.fields))
    c2 = sum(a * f.c2 for a, f in zip(coef, space.fields))
    return TrianglePolyField(c1, c2)


def local_field(space: LocalSpace, dofs: DofCandidate, values) -> TrianglePolyField:
    """The member of ``space`` with the given DOF values."""
    D = dof_matrix(space, dofs)
    return _combine(space, np.linalg.solve(D, np.asarray(values, float)))


def shared_edge(tri_a, tri_b):
    sa = {tuple(map(float, v)) for v in np.asarray(tri_a, float)}
    common = [tuple(map(float, v)) for v in np.asarray(tri_b, float) if tuple(map(float, v)) in sa]
    if len(common) != 2:
        raise ValueError("triangles must share exactly one edge")
    return sorted(common)


def check_conformity(tri_a, tri_b, base_point=BasePoint.CENTROID, samples: int = 9,
                     global_field: TrianglePolyField | None = None) -> dict:
    """Jumps of ``u . t`` and ``curl u`` across the shared edge of two triangles.

    Each global DOF (shared functionals identified) is switched on in turn;
    with ``global_field`` the DOFs are instead taken from that field.
    """
    spaces, cands = [], []
    for tri in (tri_a, tri_b):
        sp_ = build_local_space(tri, base_point)
        dc = edge_vertex_candidate(tri, base_point)
        if not check_unisolvence(sp_, dc)["unisolvent"]:
            raise NotUnisolvent("candidate DOFs are not unisolvent on one triangle")
        spaces.append(sp_)
        cands.append(dc)
    keys = [[_key(phi) for phi in dc.functionals] for dc in cands]
    global_keys = list(dict.fromkeys(keys[0] + keys[1]))
    p, q = (np.asarray(v) for v in shared_edge(tri_a, tri_b))
    s = np.linspace(0, 1, samples)
    pts = p + s[:, None] * (q - p)
    t = (q - p) / np.linalg.norm(q - p)
    cloud_a = np.vstack([pts, random_points(tri_a, 20), np.asarray(tri_a, float)])
    cloud_b = np.vstack([pts, random_points(tri_b, 20), np.asarray(tri_b, float)])

    def jumps(vals_a, vals_b):
        fa = local_field(spaces[0], cands[0], vals_a)
        fb = local_field(spaces[1], cands[1], vals_b)
        ta, tb = fa.value(pts) @ t, fb.value(pts) @ t
        ca, cb = fa.curl(pts), fb.curl(pts)
        scale = max(np.abs(fa.value(cloud_a)).max(), np.abs(fb.value(cloud_b)).max(),
                    np.abs(fa.curl(cloud_a)).max(), np.abs(fb.curl(cloud_b)).max(), 1e-300)
        return np.abs(ta - tb).max() / scale, np.abs(ca - cb).max() / scale

    if global_field is not None:
        va = [phi(global_field) for phi in cands[0].functionals]
        vb = [phi(global_field) for phi in cands[1].functionals]
        tj, cj = jumps(va, vb)
        return {"max_tangential_jump": float(tj), "max_curl_jump": float(cj), "global_dofs": 1}
    tmax = cmax = 0.0
    for g in global_keys:
        va = [1.0 if k == g else 0.0 for k in keys[0]]
        vb = [1.0 if k == g else 0.0 for k in keys[1]]
        tj, cj = jumps(va, vb)
        tmax, cmax = max(tmax, tj), max(cmax, cj)
    return {"max_tangential_jump": float(tmax), "max_curl_jump": float(cmax),
            "global_dofs": len(global_keys)}


def _key(phi):
    if isinstance(phi, EdgeTangentialIntegral):
        p, q = phi.endpoints()
        return ("edge", tuple(p), tuple(q))
    return ("curl", tuple(map(float, phi.vertex)))


# ------------------------------------------------------------ report

REFERENCE_TRIANGLE = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
SQUARE_PAIR = (((0.0, 0.0), (1.0, 0.0), (1.0, 1.0)), ((0.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


@dataclass
class LabEntry:
    base_point_convention: str
    space_dim: int
    base_point: list
    unisolvence: dict
    conformity: dict
    edge_quadrature_points: int = 8
    edge_samples: int = 9


def lab_report(triangle=REFERENCE_TRIANGLE, pair=SQUARE_PAIR) -> dict:
    """One entry per base-point convention, plus the mutual rank of the three spaces."""
    entries = []
    for bp in BasePoint:
        space = build_local_space(triangle, bp)
        uni = check_unisolvence(space, edge_vertex_candidate(triangle, bp))
        try:
            conf = check_conformity(*pair, base_point=bp)
        except NotUnisolvent as exc:
            conf = {"error": str(exc)}
        entries.append(asdict(LabEntry(bp.value, space.rank, space.base_point.tolist(), uni,
                                       conf)))
    return {"triangle": [list(v) for v in triangle], "pair": [[list(v) for v in t] for t in pair],
            "configurations": entries,
            "mutual_rank_over_base_points": mutual_rank(triangle, list(BasePoint))}


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
