"""Small systems shared by the test modules."""

import numpy as np

from sbp_ins.basis import ReferenceElement
from sbp_ins.mesh import build_mesh, cosine_stretched_edges, uniform_edges
from sbp_ins.system import DIRICHLET, OUTFLOW, BlockSystem, BoundarySegmentSpec


def small_system(k=2, n_el=2, eps=0.05, outflow=False, stretched=False, data=None, domain=(0.0, 1.0, 0.0, 1.0)):
    x0, x1, y0, y1 = domain
    if stretched:
        xe = cosine_stretched_edges(n_el + 1, x0, x1)
        ye = cosine_stretched_edges(n_el + 1, y0, y1)
    else:
        xe, ye = uniform_edges(n_el, x0, x1), uniform_edges(n_el, y0, y1)
    ops = build_mesh(xe, ye, ReferenceElement.from_degree(k)).operators()
    data = data or {}
    segs = []
    for side in ("north", "south", "east", "west"):
        kind = OUTFLOW if (outflow and side == "east") else DIRICHLET
        segs.append(BoundarySegmentSpec(side, kind, data.get(side)))
    return BlockSystem(ops, eps, segs)


def random_state(sys, rng, scale=1.0):
    return scale * rng.standard_normal(3 * sys.n)


def stream_function_state(sys, rng, modes=3):
    """Velocity from a random stream function vanishing with its gradient on the boundary."""
    x, y = sys.x, sys.y
    ops = sys.ops
    lx = x.max() - x.min()
    ly = y.max() - y.min()
    sx = (x - x.min()) / lx
    sy = (y - y.min()) / ly
    psi = np.zeros_like(x)
    for _ in range(modes):
        a, b = rng.integers(1, 3, size=2)
        psi += rng.standard_normal() * np.sin(np.pi * a * sx) * np.sin(np.pi * b * sy)
    psi *= (sx * (1 - sx) * sy * (1 - sy)) ** 2 * 16.0
    u = ops.dy @ psi
    v = -(ops.dx @ psi)
    return np.concatenate([u, v, np.zeros_like(x)])
