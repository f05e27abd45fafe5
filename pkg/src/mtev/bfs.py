"""Vector Bogner-Fox-Schmit element: bicubic Hermite, C1 across square cells.

Each Cartesian component of the field carries four DOFs per node (value,
d/dx, d/dy, d2/dxdy), so a node owns 8 DOFs laid out as
``8*node + 4*component + kind``.  Derivative DOFs are physical derivatives;
the reference shape functions are scaled by the cell size accordingly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


class Component(enum.IntEnum):
    X = 0
    Y = 1


class Kind(enum.IntEnum):
    VAL = 0
    DX = 1
    DY = 2
    DXY = 3


DOFS_PER_NODE = 8
LOCAL_DOFS = 32

# Reference corners in counterclockwise order, matching Mesh.cells.
CORNERS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])


class PointOutsideCell(ValueError):
    pass


def dof_index(node, component, kind):
    return DOFS_PER_NODE * np.asarray(node) + 4 * int(component) + int(kind)


def hermite_basis_1d(t):
    """Cubic Hermite functions H00, H10, H01, H11 on [0, 1].

    Returns:
        ``(values, first, second)``, each with a trailing axis of length 4.
    """
    t = np.asarray(t, dtype=float)
    t2, t3 = t * t, t * t * t
    one = np.ones_like(t)
    vals = np.stack([2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2], axis=-1)
    d1 = np.stack([6 * t2 - 6 * t, 3 * t2 - 4 * t + one, -6 * t2 + 6 * t, 3 * t2 - 2 * t], axis=-1)
    d2 = np.stack([12 * t - 6, 6 * t - 4, -12 * t + 6, 6 * t - 2], axis=-1)
    return vals, d1, d2


def _scalar_tables(xi, eta, a):
    """Derivatives of the 16 scalar shape functions at reference points.

    Returns a dict of arrays shaped ``(npts, 16)`` for keys
    ``v, x, y, xx, xy, yy`` (physical derivatives, cell size ``a``).
    Local scalar index is ``4*corner + kind``.
    """
    vx, dx, ddx = hermite_basis_1d(xi)
    vy, dy, ddy = hermite_basis_1d(eta)
    npts = np.size(xi)
    out = {k: np.zeros((npts, 16)) for k in ("v", "x", "y", "xx", "xy", "yy")}
    for c, (cx, cy) in enumerate(CORNERS):
        # value function index 0/2 and slope function index 1/3 per direction
        fv_x, fs_x = (0, 1) if cx == 0 else (2, 3)
        fv_y, fs_y = (0, 1) if cy == 0 else (2, 3)
        for kind, (ix, iy, px, py) in enumerate(
            [(fv_x, fv_y, 0, 0), (fs_x, fv_y, 1, 0), (fv_x, fs_y, 0, 1), (fs_x, fs_y, 1, 1)]
        ):
            scale = a ** (px + py)
            col = 4 * c + kind
            out["v"][:, col] = scale * vx[..., ix] * vy[..., iy]
            out["x"][:, col] = scale / a * dx[..., ix] * vy[..., iy]
            out["y"][:, col] = scale / a * vx[..., ix] * dy[..., iy]
            out["xx"][:, col] = scale / a**2 * ddx[..., ix] * vy[..., iy]
            out["xy"][:, col] = scale / a**2 * dx[..., ix] * dy[..., iy]
            out["yy"][:, col] = scale / a**2 * vx[..., ix] * ddy[..., iy]
    return out


@dataclass(frozen=True)
class BasisEval:
    """Vector basis data at a set of points; axis -2 (or -1) runs over the 32 local DOFs.

    Attributes:
        value: ``(npts, 32, 2)`` field values.
        grad: ``(npts, 32, 2, 2)`` with ``grad[..., c, d] = d u_c / d x_d``.
        curl: ``(npts, 32)`` scalar curl ``d_x u_y - d_y u_x``.
        curl2: ``(npts, 32, 2)`` vector curl of the scalar curl, ``(d_y w, -d_x w)``.
    """

    value: np.ndarray
    grad: np.ndarray
    curl: np.ndarray
    curl2: np.ndarray


def reference_basis(xi, eta, a: float) -> BasisEval:
    """Vector basis at reference coordinates of a cell with side ``a``.

    Local DOF index is ``8*corner + 4*component + kind``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    s = _scalar_tables(xi, eta, a)
    npts = xi.size
    value = np.zeros((npts, 4, 2, 4, 2))
    grad = np.zeros((npts, 4, 2, 4, 2, 2))
    curl = np.zeros((npts, 4, 2, 4))
    curl2 = np.zeros((npts, 4, 2, 4, 2))
    r = lambda key: s[key].reshape(npts, 4, 4)  # noqa: E731  (corner, kind)
    v, sx, sy, sxx, sxy, syy = r("v"), r("x"), r("y"), r("xx"), r("xy"), r("yy")
    # component X: u = (s, 0)
    value[:, :, 0, :, 0] = v
    grad[:, :, 0, :, 0, 0] = sx
    grad[:, :, 0, :, 0, 1] = sy
    curl[:, :, 0, :] = -sy
    curl2[:, :, 0, :, 0] = -syy
    curl2[:, :, 0, :, 1] = sxy
    # component Y: u = (0, s)
    value[:, :, 1, :, 1] = v
    grad[:, :, 1, :, 1, 0] = sx
    grad[:, :, 1, :, 1, 1] = sy
    curl[:, :, 1, :] = sx
    curl2[:, :, 1, :, 0] = sxy
    curl2[:, :, 1, :, 1] = -sxx
    return BasisEval(
        value=value.reshape(npts, LOCAL_DOFS, 2),
        grad=grad.reshape(npts, LOCAL_DOFS, 2, 2),
        curl=curl.reshape(npts, LOCAL_DOFS),
        curl2=curl2.reshape(npts, LOCAL_DOFS, 2),
    )


def cell_dofs(mesh: Mesh) -> np.ndarray:
    """``(num_cells, 32)`` global DOF indices in local order."""
    base = DOFS_PER_NODE * mesh.cells[:, :, None] + np.arange(DOFS_PER_NODE)[None, None, :]
    return base.reshape(len(mesh.cells), LOCAL_DOFS)


def eval_cell_basis(mesh: Mesh, cell: int, point) -> BasisEval:
    """Evaluate the 32 local basis functions of ``cell`` at a physical point."""
    a = mesh.cell_size
    origin = mesh.cell_origin(cell)
    ref = (np.asarray(point, dtype=float) - origin) / a
    tol = 1e-12
    if np.any(ref < -tol) or np.any(ref > 1 + tol):
        raise PointOutsideCell(f"point {tuple(point)} is outside cell {cell}")
    ref = np.clip(ref, 0.0, 1.0)
    b = reference_basis(ref[0], ref[1], a)
    return BasisEval(b.value[0], b.grad[0], b.curl[0], b.curl2[0])


def eval_field(mesh: Mesh, coeffs: np.ndarray, cell: int, points) -> BasisEval:
    """Evaluate the global field with DOF vector ``coeffs`` at points of one cell.

    The result has the local-DOF axis contracted away.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = mesh.cell_size
    ref = (pts - mesh.cell_origin(cell)) / a
    if np.any(ref < -1e-12) or np.any(ref > 1 + 1e-12):
        raise PointOutsideCell(f"points outside cell {cell}")
    b = reference_basis(ref[:, 0], ref[:, 1], a)
    c = np.asarray(coeffs)[cell_dofs(mesh)[cell]]
    return BasisEval(
        value=np.einsum("pia,i->pa", b.value, c),
        grad=np.einsum("piab,i->pab", b.grad, c),
        curl=np.einsum("pi,i->p", b.curl, c),
        curl2=np.einsum("pia,i->pa", b.curl2, c),
    )


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (npts, 2) physical points
    weights: np.ndarray  # (npts,)
    ref_points: np.ndarray  # (npts, 2) in [0, 1]^2


def gauss_rule(cell_size: float, origin=(0.0, 0.0), order: int = 6) -> QuadratureRule:
    """Tensor Gauss-Legendre rule on a square cell (``order`` points per axis)."""
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    tx, ty = np.meshgrid(t, t, indexing="xy")
    ref = np.column_stack([tx.ravel(), ty.ravel()])
    weights = np.outer(wt, wt).ravel() * cell_size**2
    return QuadratureRule(points=np.asarray(origin, dtype=float) + cell_size * ref,
                          weights=weights, ref_points=ref)


def interpolate(mesh: Mesh, fun, grad, mixed) -> np.ndarray:
    """Nodal Hermite interpolant of a vector field.

    Args:
        fun: ``f(x, y) -> (2, npts)`` field values.
        grad: ``g(x, y) -> (2, 2, npts)``, ``[c, d]`` = d f_c / d x_d.
        mixed: ``m(x, y) -> (2, npts)`` mixed second derivatives d2 f_c / dxdy.
    """
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    f, g, m = np.asarray(fun(x, y)), np.asarray(grad(x, y)), np.asarray(mixed(x, y))
    out = np.zeros((mesh.num_nodes, 2, 4))
    out[:, :, Kind.VAL] = f.T
    out[:, :, Kind.DX] = g[:, 0, :].T
    out[:, :, Kind.DY] = g[:, 1, :].T
    out[:, :, Kind.DXY] = m.T
    return out.reshape(-1)
