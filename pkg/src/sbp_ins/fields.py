"""Post-processing of nodal states: vorticity, line sampling, CSV field dumps."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import lagrange_basis_matrix
from .mesh import Mesh2D
from .sbp import Operators2D

FIELD_COLUMNS = ("x", "y", "u", "v", "p", "vorticity", "speed")
QUANTITIES = ("u", "v", "p", "vorticity", "speed")


@dataclass
class LineProfile:
    """Samples of one quantity along an axis-aligned line.

    ``axis="x", coordinate=0.5`` is the vertical line x = 0.5, sampled in y;
    ``axis="y"`` is a horizontal line sampled in x.
    """

    quantity: str
    axis: str
    coordinate: float
    abscissa: np.ndarray
    values: np.ndarray
    source: str = "computed"

    @property
    def line(self) -> str:
        return f"{self.axis}={self.coordinate:g}"


def vorticity_field(W, ops: Operators2D) -> np.ndarray:
    """Nodal ``dv/dx - du/dy``."""
    n = ops.n_nodes
    W = np.asarray(W, dtype=float)
    if W.shape != (3 * n,):
        raise ValueError(f"state must have length {3 * n}, got shape {W.shape}")
    return ops.dx @ W[n : 2 * n] - ops.dy @ W[:n]


def nodal_quantity(W, ops: Operators2D, quantity: str) -> np.ndarray:
    n = ops.n_nodes
    W = np.asarray(W, dtype=float)
    if quantity == "u":
        return W[:n]
    if quantity == "v":
        return W[n : 2 * n]
    if quantity == "p":
        return W[2 * n :]
    if quantity == "vorticity":
        return vorticity_field(W, ops)
    if quantity == "speed":
        return np.hypot(W[:n], W[n : 2 * n])
    raise ValueError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")


def interpolation_matrix(edges, nodes, degree: int, ref_nodes, points) -> np.ndarray:
    """Dense ``len(points) x len(nodes)`` matrix of piecewise Lagrange interpolation.

    Each point is evaluated with the cardinal functions of the element that
    contains it; points on a node reproduce that node's value exactly.
    """
    edges = np.asarray(edges, dtype=float)
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    span = edges[-1] - edges[0]
    tol = 1e-12 * span
    if np.any(pts < edges[0] - tol) or np.any(pts > edges[-1] + tol):
        raise ValueError(f"sample points outside [{edges[0]:g}, {edges[-1]:g}]")
    pts = np.clip(pts, edges[0], edges[-1])
    out = np.zeros((pts.size, np.asarray(nodes).size))
    elem = np.clip(np.searchsorted(edges, pts, side="right") - 1, 0, edges.size - 2)
    for m, (s, e) in enumerate(zip(pts, elem)):
        xl, xr = edges[e], edges[e + 1]
        first = e * degree
        local = np.asarray(nodes)[first : first + degree + 1]
        hit = np.flatnonzero(local == s)
        if hit.size:
            out[m, first + hit[0]] = 1.0
            continue
        xi = (2.0 * s - xl - xr) / (xr - xl)
        out[m, first : first + degree + 1] = lagrange_basis_matrix(ref_nodes, np.clip(xi, -1.0, 1.0))[0]
    return out


def extract_line_profile(W, mesh: Mesh2D, axis: str, coordinate: float, quantity: str = "u", points=None, ops=None) -> LineProfile:
    """Sample ``quantity`` along the line ``axis = coordinate``.

    Without ``points`` the samples sit at the global nodes along the line.
    """
    ops = ops if ops is not None else mesh.operators()
    F = ops.to_grid(nodal_quantity(W, ops, quantity))
    ref = mesh.ref
    if axis == "x":
        across = interpolation_matrix(mesh.x_edges, mesh.x_nodes, mesh.degree, ref.nodes, [coordinate])[0]
        line_vals = across @ F
        along_edges, along_nodes = mesh.y_edges, mesh.y_nodes
    elif axis == "y":
        across = interpolation_matrix(mesh.y_edges, mesh.y_nodes, mesh.degree, ref.nodes, [coordinate])[0]
        line_vals = F @ across
        along_edges, along_nodes = mesh.x_edges, mesh.x_nodes
    else:
        raise ValueError(f"line axis must be 'x' or 'y', got {axis!r}")
    if points is None:
        abscissa = along_nodes.copy()
        values = line_vals
    else:
        abscissa = np.atleast_1d(np.asarray(points, dtype=float))
        values = interpolation_matrix(along_edges, along_nodes, mesh.degree, ref.nodes, abscissa) @ line_vals
    return LineProfile(quantity, axis, float(coordinate), abscissa, np.asarray(values, dtype=float))


def export_fields(W, ops: Operators2D, path, derived: bool = True) -> None:
    """Write one CSV row per node in the package node ordering."""
    n = ops.n_nodes
    W = np.asarray(W, dtype=float)
    if W.shape != (3 * n,):
        raise ValueError(f"state must have length {3 * n}, got shape {W.shape}")
    x, y = ops.grid()
    cols = [x, y, W[:n], W[n : 2 * n], W[2 * n :]]
    names = list(FIELD_COLUMNS[:5])
    if derived:
        cols += [vorticity_field(W, ops), np.hypot(W[:n], W[n : 2 * n])]
        names += ["vorticity", "speed"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def read_fields(path) -> dict[str, np.ndarray]:
    """Columns of a field dump written by :func:`export_fields`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty field file")
    header = rows[0]
    missing = [c for c in FIELD_COLUMNS[:5] if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def state_from_fields(cols: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([cols["u"], cols["v"], cols["p"]])
