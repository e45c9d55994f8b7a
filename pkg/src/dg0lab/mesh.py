"""Conformal simplicial meshes in one and two space dimensions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument, InvalidMesh


class Mesh:
    """Segments (d=1) or triangles (d=2) with derived boundary and edge data.

    Parameters
    ----------
    vertices : array (nv, d)
    cells : int array (nc, d+1)
    """

    def __init__(self, vertices, cells):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        cells = np.asarray(cells, dtype=np.int64)
        d = vertices.shape[1]
        if d not in (1, 2):
            raise InvalidMesh(f"only 1D and 2D meshes are supported, got d={d}")
        if cells.ndim != 2 or cells.shape[1] != d + 1:
            raise InvalidMesh(f"cells must have {d + 1} vertices in {d}D")
        if cells.min() < 0 or cells.max() >= len(vertices):
            raise InvalidMesh("cell references a missing vertex")
        self.dim = d
        self.vertices = vertices
        self.cells = cells
        vertices.setflags(write=False)
        cells.setflags(write=False)
        if np.any(self.cell_measures <= 0):
            # orient triangles counter-clockwise; degenerate cells stay invalid
            if d == 2:
                signed = self._signed_areas()
                flip = signed < 0
                if np.any(flip):
                    fixed = cells.copy()
                    fixed[flip, 1], fixed[flip, 2] = cells[flip, 2], cells[flip, 1]
                    fixed.setflags(write=False)
                    self.cells = fixed
                    self.__dict__.pop("cell_measures", None)
            if np.any(self.cell_measures <= 0):
                raise InvalidMesh("mesh contains a cell of zero measure")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def _signed_areas(self):
        p = self.vertices[self.cells]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def cell_measures(self) -> np.ndarray:
        if self.dim == 1:
            p = self.vertices[self.cells, 0]
            return np.abs(p[:, 1] - p[:, 0])
        return self._signed_areas()

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        nloc = p.shape[1]
        diam = np.zeros(self.n_cells)
        for a in range(nloc):
            for b in range(a + 1, nloc):
                diam = np.maximum(diam, np.linalg.norm(p[:, a] - p[:, b], axis=1))
        return diam

    @property
    def h(self) -> float:
        return float(self.cell_diameters.max())

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique sorted edges (2D only), shape (ne, 2)."""
        if self.dim != 2:
            raise InvalidMesh("edges are defined for 2D meshes")
        return np.unique(np.sort(self._local_edges().reshape(-1, 2), axis=1), axis=0)

    def _local_edges(self):
        c = self.cells
        # local edge j is opposite to local vertex j
        return np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """Global edge index of each local edge, shape (nc, 3)."""
        loc = np.sort(self._local_edges().reshape(-1, 2), axis=1)
        edges = self.edges
        key = edges[:, 0] * self.n_vertices + edges[:, 1]
        lkey = loc[:, 0] * self.n_vertices + loc[:, 1]
        return np.searchsorted(key, lkey).reshape(-1, 3)

    @cached_property
    def edge_cell_count(self) -> np.ndarray:
        return np.bincount(self.cell_edges.ravel(), minlength=len(self.edges))

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cell_count == 1)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        if self.dim == 1:
            counts = np.bincount(self.cells.ravel(), minlength=self.n_vertices)
            return np.flatnonzero(counts == 1)
        return np.unique(self.edges[self.boundary_edges].ravel())

    def check_conformity(self) -> None:
        """Raise InvalidMesh on hanging nodes, overlaps or non-manifold edges."""
        if self.dim == 1:
            x = self.vertices[:, 0]
            seg = np.sort(x[self.cells], axis=1)
            order = np.argsort(seg[:, 0])
            seg = seg[order]
            if np.any(seg[1:, 0] < seg[:-1, 1] - 1e-14 * (1 + abs(seg[:-1, 1]))):
                raise InvalidMesh("overlapping segments")
            gaps = np.abs(seg[1:, 0] - seg[:-1, 1]) > 1e-14 * (1 + np.abs(seg[:-1, 1]))
            if np.any(gaps):
                raise InvalidMesh("segments do not form a connected interval")
            counts = np.bincount(self.cells.ravel(), minlength=self.n_vertices)
            if np.any(counts > 2) or np.count_nonzero(counts == 1) != 2:
                raise InvalidMesh("segment endpoints are not shared conformally")
            return
        if np.any(self.edge_cell_count > 2):
            raise InvalidMesh("an edge is shared by more than two triangles")
        # hanging node: a vertex strictly inside some edge
        v = self.vertices
        e = self.edges
        a, b = v[e[:, 0]], v[e[:, 1]]
        ab = b - a
        length2 = np.einsum("ij,ij->i", ab, ab)
        for start in range(0, self.n_vertices, 512):
            p = v[start:start + 512]
            ap = p[None, :, :] - a[:, None, :]
            s = np.einsum("eij,ej->ei", ap, ab) / length2[:, None]
            cross = ap[..., 0] * ab[:, None, 1] - ap[..., 1] * ab[:, None, 0]
            tol = 1e-12 * np.sqrt(length2)[:, None]
            inside = (np.abs(cross) <= tol * np.sqrt(length2)[:, None]) & (s > 1e-12) & (s < 1 - 1e-12)
            if np.any(inside):
                raise InvalidMesh("hanging node detected")
        if len(self.boundary_edges) == 0:
            raise InvalidMesh("mesh has no boundary")

    def to_json(self) -> str:
        return json.dumps(
            {
                "dimension": self.dim,
                "vertices": self.vertices.tolist(),
                "cells": self.cells.tolist(),
                "boundary": self.boundary_vertices.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> Mesh:
        data = json.loads(text)
        mesh = cls(np.asarray(data["vertices"], dtype=float), np.asarray(data["cells"]))
        if "boundary" in data and sorted(data["boundary"]) != mesh.boundary_vertices.tolist():
            raise InvalidMesh("stored boundary does not match the mesh topology")
        return mesh


def make_interval_mesh(a: float, b: float, n: int) -> Mesh:
    if a >= b:
        raise InvalidArgument(f"need a < b, got [{a}, {b}]")
    if n < 2:
        raise InvalidArgument(f"need at least two cells, got n={n}")
    x = a + (b - a) * np.arange(n + 1) / n
    x[-1] = b
    return make_interval_mesh_from_nodes(x)


def make_interval_mesh_from_nodes(nodes) -> Mesh:
    x = np.asarray(nodes, dtype=float)
    if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
        raise InvalidArgument("nodes must be strictly increasing with at least two cells")
    cells = np.column_stack([np.arange(x.size - 1), np.arange(1, x.size)])
    return Mesh(x[:, None], cells)


def make_unit_square_tri_mesh(n: int) -> Mesh:
    """n x n squares on [0,1]^2, each cut along its (0,0)-(1,1) diagonal."""
    if n < 1:
        raise InvalidArgument(f"need n >= 1, got {n}")
    g = np.arange(n + 1) / n
    X, Y = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return Mesh(vertices, cells)


@dataclass(frozen=True)
class QuasiUniformReport:
    C_measured: float
    max_diameter: float
    h: float


def check_quasi_uniform(mesh: Mesh) -> QuasiUniformReport:
    """Smallest C with diam(cell) <= h <= C |cell|^{1/d} for every cell."""
    meas = mesh.cell_measures
    if np.any(meas <= 0):
        raise InvalidMesh("degenerate cell")
    h = mesh.h
    C = float(np.max(h / meas ** (1.0 / mesh.dim)))
    return QuasiUniformReport(C_measured=C, max_diameter=float(mesh.cell_diameters.max()), h=h)
