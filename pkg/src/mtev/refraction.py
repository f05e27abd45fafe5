"""Refraction index models N(x) and the coefficients derived from them."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .bfs import gauss_rule
from .mesh import Mesh


class SingularCoefficient(ValueError):
    """N(x) - I is (numerically) singular somewhere."""


class ModelKind(enum.Enum):
    CONST_SCALAR = "const"
    AFFINE_SCALAR = "affine"
    DIAG_AFFINE = "diag"
    SYMMETRIC_AFFINE = "symmetric"


@dataclass(frozen=True)
class RefractionModel:
    """Symmetric 2x2 refraction index with affine entries.

    ``coef[a, b] = (c0, c1, c2)`` means ``N_ab(x) = c0 + c1*x1 + c2*x2``.
    """

    kind: ModelKind
    coef: tuple
    name: str = ""

    @property
    def is_scalar(self) -> bool:
        return self.kind in (ModelKind.CONST_SCALAR, ModelKind.AFFINE_SCALAR)

    @property
    def is_constant(self) -> bool:
        c = np.asarray(self.coef)
        return bool(np.all(c[..., 1:] == 0.0))

    def matrix(self, x) -> np.ndarray:
        """N at points ``x`` of shape ``(..., 2)``; returns ``(..., 2, 2)``."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.coef, dtype=float)
        return c[..., 0] + c[..., 1] * x[..., 0, None, None] + c[..., 2] * x[..., 1, None, None]


def const_scalar(c: float) -> RefractionModel:
    return affine_scalar(c, 0.0, 0.0, kind=ModelKind.CONST_SCALAR, name=f"const:{c:g}")


def affine_scalar(c0, c1, c2, kind=ModelKind.AFFINE_SCALAR, name=None) -> RefractionModel:
    e = (float(c0), float(c1), float(c2))
    z = (0.0, 0.0, 0.0)
    return RefractionModel(kind, ((e, z), (z, e)), name or f"affine:{c0:g},{c1:g},{c2:g}")


def diag_affine(e11, e22, name="diag") -> RefractionModel:
    z = (0.0, 0.0, 0.0)
    return RefractionModel(ModelKind.DIAG_AFFINE,
                           ((tuple(map(float, e11)), z), (z, tuple(map(float, e22)))), name)


def symmetric_affine(e11, e12, e22, name="symmetric") -> RefractionModel:
    e11, e12, e22 = (tuple(map(float, e)) for e in (e11, e12, e22))
    return RefractionModel(ModelKind.SYMMETRIC_AFFINE, ((e11, e12), (e12, e22)), name)


PRESETS = {
    "n16": lambda: const_scalar(16.0),
    # tables use 8 + x1 - x2
    "n8aff": lambda: affine_scalar(8.0, 1.0, -1.0, name="n8aff"),
    "ndiag": lambda: diag_affine((16, 0, 0), (16, 1, -1), name="ndiag"),
    "noffdiag": lambda: symmetric_affine((16, 0, 0), (0, 1, 0), (2, 0, 0), name="noffdiag"),
}


def parse_model(spec: str | RefractionModel) -> RefractionModel:
    """Model from a CLI name: a preset, ``const:<c>`` or ``affine:<c0>,<c1>,<c2>``."""
    if isinstance(spec, RefractionModel):
        return spec
    s = spec.strip()
    if s in PRESETS:
        model = PRESETS[s]()
        return RefractionModel(model.kind, model.coef, s)
    if s.startswith("const:"):
        c = float(s.split(":", 1)[1])
        m = const_scalar(c)
        return RefractionModel(m.kind, m.coef, s)
    if s.startswith("affine:"):
        parts = [float(p) for p in s.split(":", 1)[1].split(",")]
        if len(parts) != 3:
            raise ValueError(f"affine model needs 3 coefficients: {spec!r}")
        m = affine_scalar(*parts)
        return RefractionModel(m.kind, m.coef, s)
    raise ValueError(f"unknown refraction model {spec!r}; presets: {sorted(PRESETS)}")


@dataclass(frozen=True)
class CoefficientSample:
    N: np.ndarray
    invNmI: np.ndarray
    NinvNmI: np.ndarray


def eval_coefficients(model: RefractionModel, x) -> CoefficientSample:
    """N, (N - I)^-1 and N (N - I)^-1 at points ``x`` (closed-form 2x2 inverse)."""
    N = model.matrix(x)
    a = N[..., 0, 0] - 1.0
    b = N[..., 0, 1]
    d = N[..., 1, 1] - 1.0
    det = a * d - b * b
    scale = np.maximum(np.max(np.abs(N), axis=(-2, -1)), 1.0) ** 2
    if np.any(det <= 1e-12 * scale):
        raise SingularCoefficient(f"det(N - I) <= 1e-12 * scale for model {model.name!r}")
    inv = np.empty_like(N)
    inv[..., 0, 0] = d / det
    inv[..., 1, 1] = a / det
    inv[..., 0, 1] = inv[..., 1, 0] = -b / det
    ninv = inv.copy()
    ninv[..., 0, 0] += 1.0
    ninv[..., 1, 1] += 1.0
    return CoefficientSample(N=N, invNmI=inv, NinvNmI=ninv)


@dataclass(frozen=True)
class ModelBounds:
    n_star: float
    n_upper: float
    grad_seminorm: float


def sample_points(mesh: Mesh, order: int = 6) -> np.ndarray:
    """All quadrature points of the mesh together with the mesh nodes."""
    q = gauss_rule(mesh.cell_size, order=order)
    origins = mesh.nodes[mesh.cells[:, 0]]
    pts = (origins[:, None, :] + q.points[None, :, :]).reshape(-1, 2)
    return np.vstack([pts, mesh.nodes])


def estimate_bounds(model: RefractionModel, mesh: Mesh, step: float = 1e-6) -> ModelBounds:
    """Eigenvalue bounds of N and the W^{1,inf} seminorm of (N - I)^-1 over the mesh.

    The seminorm is the Frobenius norm of the gradient tensor divided by
    ``||I||_F = sqrt(2)``, so that ``N = n I`` gives ``max |grad (n-1)^-1|``.
    """
    pts = sample_points(mesh)
    eig = np.linalg.eigvalsh(model.matrix(pts))
    n_star, n_upper = float(eig.min()), float(eig.max())
    if n_star <= 1.0:
        raise SingularCoefficient(f"N has eigenvalue {n_star} <= 1 on the mesh")
    if model.is_constant:
        grad = 0.0
    else:
        qpts = pts[: len(pts) - mesh.num_nodes]
        g2 = np.zeros(len(qpts))
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            dp = eval_coefficients(model, qpts + e).invNmI
            dm = eval_coefficients(model, qpts - e).invNmI
            g2 += np.sum(((dp - dm) / (2 * step)) ** 2, axis=(-2, -1))
        grad = float(np.sqrt(g2.max() / 2.0))
    return ModelBounds(n_star=n_star, n_upper=n_upper, grad_seminorm=grad)
