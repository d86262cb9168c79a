"""Gauss-Lobatto quadrature and Lagrange bases on the reference interval [-1, 1].

All element-level operators in this package collocate the Lagrange nodes at
the Gauss-Lobatto points, so the quadrature and the interpolation share one
set of nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_legendre, roots_jacobi

MIN_DEGREE = 1
MAX_DEGREE = 8


def gl_nodes_weights(k: int):
    """Gauss-Lobatto nodes and weights for polynomial degree ``k``.

    Interior nodes are the roots of P_k', i.e. of the Jacobi polynomial
    P^(1,1)_{k-1}. Returns ``(nodes, weights)`` with ``k + 1`` entries each,
    nodes increasing from -1 to 1.
    """
    if not isinstance(k, (int, np.integer)) or not MIN_DEGREE <= k <= MAX_DEGREE:
        raise ValueError(
            f"degree k must be an integer in [{MIN_DEGREE}, {MAX_DEGREE}], got {k!r}"
        )
    k = int(k)
    interior = roots_jacobi(k - 1, 1.0, 1.0)[0] if k > 1 else np.empty(0)
    nodes = np.concatenate(([-1.0], np.sort(interior), [1.0]))
    # enforce exact symmetry
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 2.0 / (k * (k + 1) * eval_legendre(k, nodes) ** 2)
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


def barycentric_weights(nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _check_nodes(nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size < 2:
        raise ValueError("need at least two nodes in a 1D array")
    gaps = np.diff(nodes)
    if np.any(gaps == 0.0):
        raise ValueError("duplicate nodes in Lagrange basis")
    if np.any(gaps < 0.0):
        raise ValueError("nodes must be strictly increasing")
    return nodes


def lagrange_diff_matrix(nodes) -> np.ndarray:
    """Matrix ``D`` with ``D[i, j] = dL_j/dxi`` evaluated at ``nodes[i]``."""
    nodes = _check_nodes(nodes)
    w = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    # negative-sum trick keeps rows annihilating constants to round-off
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def lagrange_eval(nodes, j: int, xi: float) -> float:
    """Value of the ``j``-th Lagrange cardinal function at ``xi`` in [-1, 1]."""
    return float(lagrange_basis_matrix(nodes, np.atleast_1d(xi))[0, j])


def lagrange_basis_matrix(nodes, xi) -> np.ndarray:
    """Values of every cardinal function at the points ``xi``.

    Row ``m`` holds ``[L_0(xi_m), ..., L_k(xi_m)]``. Points that coincide with
    a node return the exact unit vector.
    """
    nodes = _check_nodes(nodes)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    lo, hi = nodes[0], nodes[-1]
    if np.any(xi < lo - 1e-14) or np.any(xi > hi + 1e-14):
        raise ValueError(f"evaluation point outside [{lo}, {hi}]; extrapolation is not supported")
    w = barycentric_weights(nodes)
    out = np.empty((xi.size, nodes.size))
    for m, s in enumerate(xi):
        d = s - nodes
        # within rounding of a node the barycentric quotient overflows; snap to it
        hit = np.flatnonzero(np.abs(d) <= 4.0 * np.finfo(float).eps)
        if hit.size:
            out[m] = 0.0
            out[m, hit[0]] = 1.0
            continue
        t = w / d
        out[m] = t / t.sum()
    return out


@dataclass(frozen=True)
class ReferenceElement:
    degree: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    diff_matrix: np.ndarray = field(repr=False)

    @classmethod
    def from_degree(cls, k: int) -> "ReferenceElement":
        nodes, weights = gl_nodes_weights(k)
        return cls(int(k), nodes, weights, lagrange_diff_matrix(nodes))
