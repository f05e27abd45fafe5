"""Structured square-cell meshes of the unit square and the L-shaped domain."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DomainKind(enum.Enum):
    UNIT_SQUARE = "square"
    LSHAPE = "lshape"

    @classmethod
    def parse(cls, name: str | "DomainKind") -> "DomainKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        aliases = {"square": cls.UNIT_SQUARE, "unitsquare": cls.UNIT_SQUARE,
                   "unit_square": cls.UNIT_SQUARE, "lshape": cls.LSHAPE,
                   "l-shape": cls.LSHAPE, "l_shape": cls.LSHAPE}
        if key not in aliases:
            raise ValueError(f"unknown domain {name!r}; expected 'square' or 'lshape'")
        return aliases[key]

    @property
    def area(self) -> float:
        return 1.0 if self is DomainKind.UNIT_SQUARE else 3.0


class EdgeOrientation(enum.IntEnum):
    X_ALIGNED = 0
    Y_ALIGNED = 1


# Unit blocks (lower-left corners) making up each domain.
_BLOCKS = {
    DomainKind.UNIT_SQUARE: [(0, 0)],
    DomainKind.LSHAPE: [(-1, -1), (-1, 0), (0, 0)],
}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Axis-aligned square-cell mesh.

    Attributes:
        domain: Which computational domain is covered.
        n: Cells per unit length.
        cell_size: Side length of every cell (``1/n``).
        nodes: ``(num_nodes, 2)`` coordinates, ordered lexicographically by (y, x).
        cells: ``(num_cells, 4)`` node indices, counterclockwise from lower-left.
        boundary_edges: ``(num_bedges, 3)`` rows ``(node_a, node_b, orientation)``
            with ``node_a`` the endpoint with smaller coordinate along the edge.
        lattice: ``(num_nodes, 2)`` integer lattice coordinates (``nodes * n``).
    """

    domain: DomainKind
    n: int
    cell_size: float
    nodes: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    lattice: np.ndarray

    @property
    def h(self) -> float:
        """Cell diagonal, the mesh parameter used in the tables."""
        return self.cell_size * math.sqrt(2.0)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def cell_origin(self, cell: int) -> np.ndarray:
        return self.nodes[self.cells[cell, 0]]

    def cell_edges(self) -> np.ndarray:
        """All cell edges as sorted node pairs, 4 per cell (bottom, right, top, left)."""
        c = self.cells
        pairs = np.stack([c[:, [0, 1]], c[:, [1, 2]], c[:, [3, 2]], c[:, [0, 3]]], axis=1)
        return np.sort(pairs.reshape(-1, 2), axis=1)

    def corner_nodes(self) -> np.ndarray:
        """Boundary nodes where an x-aligned and a y-aligned boundary edge meet."""
        be = self.boundary_edges
        on_x = set(be[be[:, 2] == EdgeOrientation.X_ALIGNED, :2].ravel().tolist())
        on_y = set(be[be[:, 2] == EdgeOrientation.Y_ALIGNED, :2].ravel().tolist())
        return np.array(sorted(on_x & on_y), dtype=np.int64)

    def summary(self) -> dict:
        return {
            "domain": self.domain.value,
            "n": self.n,
            "cells": self.num_cells,
            "nodes": self.num_nodes,
            "boundary_edges": len(self.boundary_edges),
            "h": self.h,
        }


def build_mesh(domain: DomainKind | str, n: int) -> Mesh:
    """Mesh ``domain`` with ``n`` cells per unit length (each unit block is n x n)."""
    domain = DomainKind.parse(domain)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)

    lattice_pts = set()
    cell_ll = []
    for bx, by in _BLOCKS[domain]:
        for j in range(n):
            for i in range(n):
                cell_ll.append((bx * n + i, by * n + j))
        for j in range(n + 1):
            for i in range(n + 1):
                lattice_pts.add((bx * n + i, by * n + j))

    # lexicographic by (y, x)
    ordered = sorted(lattice_pts, key=lambda p: (p[1], p[0]))
    index = {p: k for k, p in enumerate(ordered)}
    lattice = np.array(ordered, dtype=np.int64)
    nodes = lattice.astype(float) / n

    cell_ll.sort(key=lambda p: (p[1], p[0]))
    cells = np.array(
        [[index[(i, j)], index[(i + 1, j)], index[(i + 1, j + 1)], index[(i, j + 1)]]
         for i, j in cell_ll],
        dtype=np.int64,
    )

    # boundary edges: used by exactly one cell
    counts: dict[tuple[int, int, int], int] = {}
    for a, b, c, d in cells:
        for p, q, o in ((a, b, 0), (d, c, 0), (a, d, 1), (b, c, 1)):
            counts[(p, q, o)] = counts.get((p, q, o), 0) + 1
    bedges = sorted(k for k, v in counts.items() if v == 1)
    boundary_edges = np.array(bedges, dtype=np.int64).reshape(-1, 3)

    return Mesh(domain=domain, n=n, cell_size=1.0 / n, nodes=nodes, cells=cells,
                boundary_edges=boundary_edges, lattice=lattice)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Halve the cell size; coarse node coordinates reappear exactly in the result."""
    return build_mesh(mesh.domain, 2 * mesh.n)
