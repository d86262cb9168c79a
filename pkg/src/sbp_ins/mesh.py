"""Tensor-product meshes with Gauss-Lobatto nodes inside each element."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import ReferenceElement
from .sbp import Operators2D, build_operators_2d, element_nodes, metric_scaled_operators


def uniform_edges(n_el: int, a: float, b: float) -> np.ndarray:
    if n_el < 1:
        raise ValueError(f"need at least one element, got {n_el}")
    if not b > a:
        raise ValueError(f"interval end {b} must exceed start {a}")
    edges = np.linspace(a, b, n_el + 1)
    edges[0], edges[-1] = a, b
    return edges


def cosine_stretched_edges(n_points: int, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    """Edges clustered toward both ends: ``(1 - cos(pi i / (n - 1))) / 2`` mapped to [a, b]."""
    if n_points < 2:
        raise ValueError(f"need at least two edge points, got {n_points}")
    i = np.arange(n_points)
    s = 0.5 * (1.0 - np.cos(np.pi * i / (n_points - 1)))
    # symmetrise so the clustering is exactly mirror-symmetric
    s = 0.5 * (s + 1.0 - s[::-1])
    s[0], s[-1] = 0.0, 1.0
    return a + (b - a) * s


@dataclass(frozen=True)
class Mesh2D:
    x_edges: np.ndarray
    y_edges: np.ndarray
    degree: int
    ref: ReferenceElement = field(repr=False)
    x_nodes: np.ndarray = field(repr=False)
    y_nodes: np.ndarray = field(repr=False)

    @property
    def domain(self) -> tuple[float, float, float, float]:
        return (self.x_edges[0], self.x_edges[-1], self.y_edges[0], self.y_edges[-1])

    @property
    def n_elements(self) -> tuple[int, int]:
        return self.x_edges.size - 1, self.y_edges.size - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.x_nodes.size, self.y_nodes.size

    @property
    def n_nodes(self) -> int:
        return self.x_nodes.size * self.y_nodes.size

    def coordinates(self):
        X, Y = np.meshgrid(self.x_nodes, self.y_nodes, indexing="ij")
        return X.ravel(), Y.ravel()

    def operators(self) -> Operators2D:
        gx = metric_scaled_operators(self.ref, self.x_edges)
        gy = metric_scaled_operators(self.ref, self.y_edges)
        return build_operators_2d(gx, gy)

    def summary(self) -> str:
        hx, hy = np.diff(self.x_edges), np.diff(self.y_edges)
        mx, my = self.n_elements
        M, N = self.shape
        return (
            f"mesh: {mx}x{my} elements, degree {self.degree}, {M}x{N} = {M * N} nodes, "
            f"element size x [{hx.min():.4g}, {hx.max():.4g}] y [{hy.min():.4g}, {hy.max():.4g}]"
        )


def build_mesh(x_edges, y_edges, ref: ReferenceElement) -> Mesh2D:
    x_edges = np.asarray(x_edges, dtype=float)
    y_edges = np.asarray(y_edges, dtype=float)
    for name, e in (("x", x_edges), ("y", y_edges)):
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
            raise ValueError(f"{name} edges must be a strictly increasing array of length >= 2")
    return Mesh2D(
        x_edges=x_edges,
        y_edges=y_edges,
        degree=ref.degree,
        ref=ref,
        x_nodes=element_nodes(x_edges, ref),
        y_nodes=element_nodes(y_edges, ref),
    )
