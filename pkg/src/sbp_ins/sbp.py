"""Summation-by-parts operators: element level, global 1D assembly, 2D Kronecker products.

Node ordering in 2D is x-major: the global node with x-index ``i`` and
y-index ``j`` sits at flat index ``i * N + j`` where ``N`` is the number of
nodes in y. This is the ordering implied by ``P = Px kron Py`` and is used by
every array and sparse matrix in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import ReferenceElement

SEGMENTS = ("north", "south", "east", "west")

# outward unit normal of each side of a rectangle
SEGMENT_NORMALS = {
    "north": (0.0, 1.0),
    "south": (0.0, -1.0),
    "east": (1.0, 0.0),
    "west": (-1.0, 0.0),
}


@dataclass(frozen=True)
class ElementOperators:
    mass: np.ndarray  # diagonal of P^e
    qx: np.ndarray
    boundary: np.ndarray  # diagonal of B~^e
    jacobian: float

    @property
    def P(self) -> np.ndarray:
        return np.diag(self.mass)

    @property
    def dx(self) -> np.ndarray:
        return self.qx / self.mass[:, None]


def build_element_operators(ref: ReferenceElement, element_length: float) -> ElementOperators:
    """Mass and weak first-derivative matrices of one element of the given length.

    With the nodes collocated at the quadrature points the mass matrix is
    diagonal, and ``Q`` needs no Jacobian because ``dx = J^-1 dxi`` cancels
    the ``|J|`` from the measure.
    """
    if not element_length > 0:
        raise ValueError(f"element length must be positive, got {element_length}")
    jac = 0.5 * float(element_length)
    mass = jac * ref.weights
    qx = ref.weights[:, None] * ref.diff_matrix
    boundary = np.zeros(ref.degree + 1)
    boundary[0], boundary[-1] = -1.0, 1.0
    return ElementOperators(mass=mass, qx=qx, boundary=boundary, jacobian=jac)


@dataclass(frozen=True)
class GlobalOperators1D:
    """Assembled operators along one direction.

    ``mass`` and ``boundary`` hold the diagonals of P and B~; the remaining
    operators are CSR matrices.
    """

    mass: np.ndarray
    qx: sp.csr_matrix
    dx: sp.csr_matrix
    boundary: np.ndarray
    qxx: sp.csr_matrix | None = None
    dxx: sp.csr_matrix | None = None
    degree: int = 1
    edges: np.ndarray | None = field(default=None, repr=False)
    nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.mass.size

    @property
    def P(self) -> sp.dia_matrix:
        return sp.diags(self.mass)

    @property
    def B(self) -> sp.dia_matrix:
        return sp.diags(self.boundary)


def assemble_global(element_ops, edges=None, ref: ReferenceElement | None = None) -> GlobalOperators1D:
    """Sum element matrices into global ones; adjacent elements share one node."""
    element_ops = list(element_ops)
    if not element_ops:
        raise ValueError("cannot assemble an empty element list")
    npe = element_ops[0].mass.size
    k = npe - 1
    n_el = len(element_ops)
    n = n_el * k + 1

    mass = np.zeros(n)
    rows, cols, vals = [], [], []
    loc = np.arange(npe)
    for e, op in enumerate(element_ops):
        if op.mass.size != npe:
            raise ValueError("all elements must have the same degree")
        g = e * k + loc
        mass[g] += op.mass
        rows.append(np.repeat(g, npe))
        cols.append(np.tile(g, npe))
        vals.append(op.qx.ravel())
    qx = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    qx.sum_duplicates()
    boundary = np.zeros(n)
    boundary[0], boundary[-1] = -1.0, 1.0
    dx = sp.diags(1.0 / mass) @ qx

    nodes = None
    if edges is not None and ref is not None:
        nodes = element_nodes(edges, ref)
    g = GlobalOperators1D(
        mass=mass,
        qx=qx,
        dx=dx.tocsr(),
        boundary=boundary,
        degree=k,
        edges=None if edges is None else np.asarray(edges, dtype=float),
        nodes=nodes,
    )
    return build_qxx_global(g)


def build_qxx_global(g: GlobalOperators1D) -> GlobalOperators1D:
    """Attach ``Qxx = B~ Dx - Dx^T P Dx`` and ``Dxx = P^-1 Qxx`` to ``g``."""
    qxx = (g.B @ g.dx - g.dx.T @ g.P @ g.dx).tocsr()
    qxx.eliminate_zeros()
    dxx = (sp.diags(1.0 / g.mass) @ qxx).tocsr()
    return GlobalOperators1D(
        mass=g.mass,
        qx=g.qx,
        dx=g.dx,
        boundary=g.boundary,
        qxx=qxx,
        dxx=dxx,
        degree=g.degree,
        edges=g.edges,
        nodes=g.nodes,
    )


def element_nodes(edges, ref: ReferenceElement) -> np.ndarray:
    """Global node coordinates from element edges (affine map of the GL points)."""
    edges = np.asarray(edges, dtype=float)
    xl, xr = edges[:-1, None], edges[1:, None]
    local = 0.5 * (xr - xl) * ref.nodes[None, :] + 0.5 * (xr + xl)
    nodes = np.concatenate([local[:, :-1].ravel(), edges[-1:]])
    # element edges exactly, not via the affine map
    nodes[:: ref.degree] = edges
    return nodes


def metric_scaled_operators(g_or_ref, physical_edges) -> GlobalOperators1D:
    """Operators on a (possibly stretched) grid with the given element edges.

    Each element carries its own Jacobian ``(x_R - x_L)/2`` in its mass
    matrix; ``Q`` is Jacobian free, so the SBP property is untouched by the
    stretching.
    """
    ref = g_or_ref if isinstance(g_or_ref, ReferenceElement) else ReferenceElement.from_degree(g_or_ref.degree)
    edges = np.asarray(physical_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least two element edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("element edges must be strictly increasing")
    ops = [build_element_operators(ref, h) for h in np.diff(edges)]
    return assemble_global(ops, edges=edges, ref=ref)


def operators_1d(ref: ReferenceElement, edges) -> GlobalOperators1D:
    return metric_scaled_operators(ref, edges)


@dataclass(frozen=True)
class Operators2D:
    """Tensor-product operators on an M x N node grid (x-major flattening)."""

    gx: GlobalOperators1D
    gy: GlobalOperators1D
    mass: np.ndarray
    dx: sp.csr_matrix
    dy: sp.csr_matrix
    dxx: sp.csr_matrix
    dyy: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.gx.n_nodes, self.gy.n_nodes

    @property
    def n_nodes(self) -> int:
        return self.mass.size

    @property
    def P(self) -> sp.dia_matrix:
        return sp.diags(self.mass)

    def flat_index(self, i, j):
        return np.asarray(i) * self.gy.n_nodes + np.asarray(j)

    def segment_indices(self, segment: str) -> np.ndarray:
        """Flat indices of the nodes on one side, ordered along the side."""
        M, N = self.shape
        if segment == "north":
            return self.flat_index(np.arange(M), N - 1)
        if segment == "south":
            return self.flat_index(np.arange(M), 0)
        if segment == "east":
            return self.flat_index(M - 1, np.arange(N))
        if segment == "west":
            return self.flat_index(0, np.arange(N))
        raise ValueError(f"unknown boundary segment {segment!r}; expected one of {SEGMENTS}")

    def segment_mass(self, segment: str) -> np.ndarray:
        """Diagonal of the boundary-restricted mass matrix, as a full-length vector."""
        out = np.zeros(self.n_nodes)
        idx = self.segment_indices(segment)
        w = self.gx.mass if segment in ("north", "south") else self.gy.mass
        out[idx] = w
        return out

    def grid(self):
        """Node coordinates ``(X, Y)`` as flat arrays in the package ordering."""
        X, Y = np.meshgrid(self.gx.nodes, self.gy.nodes, indexing="ij")
        return X.ravel(), Y.ravel()

    def to_grid(self, f) -> np.ndarray:
        return np.asarray(f).reshape(self.shape)


def build_operators_2d(gx: GlobalOperators1D, gy: GlobalOperators1D) -> Operators2D:
    Ix = sp.identity(gx.n_nodes, format="csr")
    Iy = sp.identity(gy.n_nodes, format="csr")
    return Operators2D(
        gx=gx,
        gy=gy,
        mass=np.kron(gx.mass, gy.mass),
        dx=sp.kron(gx.dx, Iy, format="csr"),
        dy=sp.kron(Ix, gy.dx, format="csr"),
        dxx=sp.kron(gx.dxx, Iy, format="csr"),
        dyy=sp.kron(Ix, gy.dxx, format="csr"),
    )


def operator_triplets(g: GlobalOperators1D):
    """Yield ``(name, row, col, value)`` for every stored entry of ``g``."""
    n = g.n_nodes
    diag = np.arange(n)
    mats = {
        "P": sp.coo_matrix((g.mass, (diag, diag)), shape=(n, n)),
        "B": sp.coo_matrix((g.boundary, (diag, diag)), shape=(n, n)),
        "Qx": g.qx.tocoo(),
        "Dx": g.dx.tocoo(),
        "Qxx": g.qxx.tocoo(),
        "Dxx": g.dxx.tocoo(),
    }
    for name, m in mats.items():
        for r, c, v in zip(m.row, m.col, m.data):
            if v != 0.0:
                yield name, int(r), int(c), float(v)
