"""Semi-discrete three-field INS operator with SAT boundary penalties.

The state ``W`` stacks ``(u, v, p)`` over all nodes, each block in the
x-major node ordering of :mod:`sbp_ins.sbp`. The semi-discrete system is

    I~ dW/dt + D(W) W = SAT(W, t) + F(t)

with the split advective form

    D(W) = 1/2 (A Dx + Dx A + B Dy + Dy B) - eps I~ (Dxx + Dyy)

and one SAT per boundary side. Wall/inflow sides use the penalty
``R^T (Sigma1' + eps Sigma2')`` acting on the boundary error in normal and
tangential components; an outflow side penalises the natural condition
``p - eps dn(u_n) = 0, eps dn(u_t) = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .sbp import SEGMENT_NORMALS, SEGMENTS, Operators2D

log = logging.getLogger(__name__)

DIRICHLET = "dirichlet_velocity"
OUTFLOW = "outflow_natural"
KINDS = (DIRICHLET, OUTFLOW)

BoundaryData = Callable[[np.ndarray, np.ndarray, float], tuple]


@dataclass(frozen=True)
class BoundarySegmentSpec:
    """Boundary condition on one side of the rectangle.

    ``data(x, y, t)`` returns two arrays at the side's nodes. For
    ``frame="cartesian"`` they are the prescribed velocity ``(u, v)``; for
    ``frame="normal_tangential"`` they are ``(U_n, U_t)`` directly, with the
    tangent ``t = (-n_y, n_x)``. ``None`` means homogeneous data.
    """

    segment: str
    kind: str = DIRICHLET
    data: BoundaryData | None = None
    frame: str = "cartesian"

    def __post_init__(self):
        if self.segment not in SEGMENTS:
            raise ValueError(f"unknown boundary segment {self.segment!r}; expected one of {SEGMENTS}")
        if self.frame not in ("cartesian", "normal_tangential"):
            raise ValueError(f"unknown data frame {self.frame!r}")

    @property
    def normals(self) -> tuple[float, float]:
        return SEGMENT_NORMALS[self.segment]

    def restriction(self, ops: Operators2D) -> np.ndarray:
        return ops.segment_mass(self.segment)


@dataclass
class _SegmentCache:
    spec: BoundarySegmentSpec
    idx: np.ndarray
    pb: np.ndarray
    nx: float
    ny: float
    dn: sp.csr_matrix
    dnT_pb: sp.csr_matrix
    pb_dn: sp.csr_matrix
    x: np.ndarray
    y: np.ndarray


class BlockSystem:
    """Discrete INS operator on a fixed mesh; immutable after construction."""

    def __init__(
        self,
        ops: Operators2D,
        epsilon: float,
        boundary_segments,
        forcing: Callable | None = None,
    ):
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.ops = ops
        self.epsilon = float(epsilon)
        self.forcing = forcing
        self.n = ops.n_nodes
        self.P = ops.mass
        self.Pinv = 1.0 / ops.mass
        self.lap = (ops.dxx + ops.dyy).tocsr()
        self.x, self.y = ops.grid()
        self.itilde = np.concatenate([np.ones(2 * self.n), np.zeros(self.n)])

        segs = list(boundary_segments.values()) if isinstance(boundary_segments, dict) else list(boundary_segments)
        names = [s.segment for s in segs]
        if sorted(names) != sorted(SEGMENTS):
            raise ValueError(f"need exactly one condition per side {SEGMENTS}, got {names}")
        self.segments = {s.segment: s for s in segs}
        self._cache = {}
        self._assembler = None
        for s in segs:
            if s.kind not in KINDS:
                raise ValueError(f"unknown boundary condition kind {s.kind!r}; expected one of {KINDS}")
            if s.kind == OUTFLOW and s.segment != "east":
                log.warning("outflow condition on the %s side; only east outflow is exercised by the benchmarks", s.segment)
            nx, ny = s.normals
            dn = (nx * ops.dx + ny * ops.dy).tocsr()
            pb = ops.segment_mass(s.segment)
            idx = ops.segment_indices(s.segment)
            self._cache[s.segment] = _SegmentCache(
                spec=s,
                idx=idx,
                pb=pb,
                nx=nx,
                ny=ny,
                dn=dn,
                dnT_pb=(dn.T @ sp.diags(pb)).tocsr(),
                pb_dn=(sp.diags(pb) @ dn).tocsr(),
                x=self.x[idx],
                y=self.y[idx],
            )

    # -- layout helpers -------------------------------------------------

    def split(self, W):
        n = self.n
        W = np.asarray(W)
        if W.shape != (3 * n,):
            raise ValueError(f"state must have length {3 * n}, got shape {W.shape}")
        return W[:n], W[n : 2 * n], W[2 * n :]

    def stack(self, u, v, p) -> np.ndarray:
        return np.concatenate([u, v, p])

    @property
    def closed(self) -> bool:
        """True when every side carries a velocity condition (pressure fixed only up to a constant)."""
        return all(s.kind == DIRICHLET for s in self.segments.values())

    def boundary_data(self, segment: str, t: float):
        """Full-length vectors ``(G_n, G_t)``, zero off the side."""
        c = self._cache[segment]
        gn = np.zeros(self.n)
        gt = np.zeros(self.n)
        s = c.spec
        if s.data is None:
            return gn, gt
        a, b = s.data(c.x, c.y, t)
        a = np.broadcast_to(np.asarray(a, dtype=float), c.idx.shape)
        b = np.broadcast_to(np.asarray(b, dtype=float), c.idx.shape)
        if s.frame == "cartesian":
            gn[c.idx] = c.nx * a + c.ny * b
            gt[c.idx] = -c.ny * a + c.nx * b
        else:
            gn[c.idx], gt[c.idx] = a, b
        return gn, gt

    def forcing_vector(self, t: float) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(3 * self.n)
        fu, fv, fp = self.forcing(self.x, self.y, t)
        f = np.zeros(3 * self.n)
        f[: self.n] = fu
        f[self.n : 2 * self.n] = fv
        f[2 * self.n :] = fp
        return f


def build_advection_blocks(W, n: int):
    """The block matrices ``A`` and ``B`` of the advective flux for state ``W``."""
    W = np.asarray(W)
    u, v = W[:n], W[n : 2 * n]
    I = sp.identity(n, format="csr")
    du, dv = sp.diags(u), sp.diags(v)
    A = sp.bmat([[du, None, I], [None, du, None], [I, None, None]], format="csr")
    B = sp.bmat([[dv, None, None], [None, dv, I], [None, I, None]], format="csr")
    return A, B


def apply_spatial_operator(sys: BlockSystem, W) -> np.ndarray:
    """``D(W) W``: split-form advection, pressure gradient, divergence and viscous terms."""
    u, v, p = sys.split(W)
    ops = sys.ops
    eps = sys.epsilon
    dxu, dyu = ops.dx @ u, ops.dy @ u
    dxv, dyv = ops.dx @ v, ops.dy @ v
    uv = u * v
    ru = 0.5 * (u * dxu + ops.dx @ (u * u) + v * dyu + ops.dy @ uv) + ops.dx @ p - eps * (sys.lap @ u)
    rv = 0.5 * (u * dxv + ops.dx @ uv + v * dyv + ops.dy @ (v * v)) + ops.dy @ p - eps * (sys.lap @ v)
    rp = dxu + dyv
    return np.concatenate([ru, rv, rp])


def advective_part(sys: BlockSystem, W) -> np.ndarray:
    """Advective contribution alone, built from the block matrices."""
    A, B = build_advection_blocks(W, sys.n)
    I3 = lambda m: sp.kron(sp.identity(3), m, format="csr")  # noqa: E731
    Dx, Dy = I3(sys.ops.dx), I3(sys.ops.dy)
    W = np.asarray(W)
    return 0.5 * (A @ (Dx @ W) + Dx @ (A @ W) + B @ (Dy @ W) + Dy @ (B @ W))


def build_sat(sys: BlockSystem, segment, W, t: float) -> np.ndarray:
    """Penalty term of one velocity-Dirichlet side, already lifted by ``P^-1``."""
    name = segment.segment if isinstance(segment, BoundarySegmentSpec) else segment
    c = sys._cache[name]
    if c.spec.kind != DIRICHLET:
        raise ValueError(f"build_sat handles {DIRICHLET!r} sides, {name} is {c.spec.kind!r}")
    u, v, _ = sys.split(W)
    eps = sys.epsilon
    gn, gt = sys.boundary_data(name, t)
    un = c.nx * u + c.ny * v
    ut = -c.ny * u + c.nx * v
    en = c.pb * (un - gn)
    et = c.pb * (ut - gt)
    a = 0.5 * un * en - eps * (c.dn.T @ en)
    b = 0.5 * un * et - eps * (c.dn.T @ et)
    out = np.empty(3 * sys.n)
    n = sys.n
    out[:n] = sys.Pinv * (c.nx * a - c.ny * b)
    out[n : 2 * n] = sys.Pinv * (c.ny * a + c.nx * b)
    out[2 * n :] = sys.Pinv * en
    return out


def build_outflow_sat(sys: BlockSystem, segment, W, t: float) -> np.ndarray:
    """Penalty of the open-boundary condition ``p - eps dn(u_n) = 0``, ``eps dn(u_t) = 0``.

    The boundary data, if given, are the prescribed values of these two
    quantities (normal and tangential).
    """
    name = segment.segment if isinstance(segment, BoundarySegmentSpec) else segment
    c = sys._cache[name]
    if c.spec.kind != OUTFLOW:
        raise ValueError(f"build_outflow_sat handles {OUTFLOW!r} sides, {name} is {c.spec.kind!r}")
    u, v, p = sys.split(W)
    eps = sys.epsilon
    gn, gt = sys.boundary_data(name, t)
    un = c.nx * u + c.ny * v
    ut = -c.ny * u + c.nx * v
    a = c.pb * (p - eps * (c.dn @ un) - gn)
    b = c.pb * (-eps * (c.dn @ ut) - gt)
    n = sys.n
    out = np.zeros(3 * n)
    out[:n] = sys.Pinv * (c.nx * a - c.ny * b)
    out[n : 2 * n] = sys.Pinv * (c.ny * a + c.nx * b)
    return out


def total_sat(sys: BlockSystem, W, t: float) -> np.ndarray:
    out = np.zeros(3 * sys.n)
    for name, s in sys.segments.items():
        if s.kind == DIRICHLET:
            out += build_sat(sys, name, W, t)
        else:
            out += build_outflow_sat(sys, name, W, t)
    return out


def residual(sys: BlockSystem, W, t: float) -> np.ndarray:
    """Spatial residual ``D(W) W - SAT - F``; zero at a steady discrete solution."""
    return apply_spatial_operator(sys, W) - total_sat(sys, W, t) - sys.forcing_vector(t)


def _sat_diagonal_coefficients(sys: BlockSystem, c: _SegmentCache, u, v, t):
    """State-dependent diagonal factors of a wall SAT Jacobian in the rotated frame."""
    gn, gt = sys.boundary_data(c.spec.segment, t)
    un = c.nx * u + c.ny * v
    ut = -c.ny * u + c.nx * v
    en, et = un - gn, ut - gt
    pb = c.pb
    return 0.5 * pb * (en + un), 0.5 * pb * et, 0.5 * pb * un


def _dirichlet_sat_jacobian(sys: BlockSystem, c: _SegmentCache, alpha, beta, gamma):
    """Blocks of d(SAT)/d(u, v, p) for one wall side.

    ``alpha, beta, gamma`` are the diagonal sensitivities of the rotated
    penalty rows; zero vectors give the state-independent part.
    """
    eps = sys.epsilon
    nx, ny = c.nx, c.ny
    K0 = -eps * c.dnT_pb
    Ka = sp.diags(alpha) + K0
    Kbn = sp.diags(beta)
    Kbt = sp.diags(gamma) + K0
    da_du, da_dv = nx * Ka, ny * Ka
    db_du = nx * Kbn - ny * Kbt
    db_dv = ny * Kbn + nx * Kbt
    Pi = sp.diags(sys.Pinv)
    Pb = sp.diags(c.pb)
    return [
        [Pi @ (nx * da_du - ny * db_du), Pi @ (nx * da_dv - ny * db_dv), None],
        [Pi @ (ny * da_du + nx * db_du), Pi @ (ny * da_dv + nx * db_dv), None],
        [Pi @ (nx * Pb), Pi @ (ny * Pb), None],
    ]


def _outflow_sat_jacobian(sys: BlockSystem, c: _SegmentCache):
    eps = sys.epsilon
    nx, ny = c.nx, c.ny
    G = -eps * c.pb_dn
    da_du, da_dv, da_dp = nx * G, ny * G, sp.diags(c.pb)
    db_du, db_dv = -ny * G, nx * G
    Pi = sp.diags(sys.Pinv)
    return [
        [Pi @ (nx * da_du - ny * db_du), Pi @ (nx * da_dv - ny * db_dv), Pi @ (nx * da_dp)],
        [Pi @ (ny * da_du + nx * db_du), Pi @ (ny * da_dv + nx * db_dv), Pi @ (ny * da_dp)],
        [None, None, None],
    ]


def jacobian_blocks(sys: BlockSystem, W, t: float, bdf_scale: float = 0.0) -> sp.csr_matrix:
    """Exact Jacobian of ``bdf_scale * I~ W + residual(W, t)``, written block by block.

    Readable but slow; :func:`jacobian` produces the same matrix on a fixed
    sparsity pattern.
    """
    u, v, _ = sys.split(W)
    ops = sys.ops
    Dx, Dy = ops.dx, ops.dy
    eps = sys.epsilon
    du, dv = sp.diags(u), sp.diags(v)
    diag = sp.diags

    Juu = 0.5 * (diag(Dx @ u) + du @ Dx + 2.0 * (Dx @ du) + dv @ Dy + Dy @ dv) - eps * sys.lap
    Juv = 0.5 * (diag(Dy @ u) + Dy @ du)
    Jvu = 0.5 * (diag(Dx @ v) + Dx @ dv)
    Jvv = 0.5 * (du @ Dx + Dx @ du + diag(Dy @ v) + dv @ Dy + 2.0 * (Dy @ dv)) - eps * sys.lap
    if bdf_scale:
        I = sp.identity(sys.n, format="csr")
        Juu = Juu + bdf_scale * I
        Jvv = Jvv + bdf_scale * I
    blocks = [[Juu, Juv, Dx], [Jvu, Jvv, Dy], [Dx, Dy, None]]

    for c in sys._cache.values():
        if c.spec.kind == DIRICHLET:
            S = _dirichlet_sat_jacobian(sys, c, *_sat_diagonal_coefficients(sys, c, u, v, t))
        else:
            S = _outflow_sat_jacobian(sys, c)
        for i in range(3):
            for j in range(3):
                if S[i][j] is None:
                    continue
                blocks[i][j] = -S[i][j] if blocks[i][j] is None else blocks[i][j] - S[i][j]
    if blocks[2][2] is None:
        blocks[2][2] = sp.csr_matrix((sys.n, sys.n))
    return sp.bmat(blocks, format="csr")


class _JacobianAssembler:
    """Fills the Jacobian values on a sparsity pattern fixed at construction."""

    def __init__(self, sys: BlockSystem):
        self.sys = sys
        n = sys.n
        self.size = 3 * n
        ops = sys.ops
        Dx, Dy = ops.dx.tocoo(), ops.dy.tocoo()
        eye = sp.identity(n, format="coo")

        const = [[-sys.epsilon * sys.lap, None, ops.dx], [None, -sys.epsilon * sys.lap, ops.dy], [ops.dx, ops.dy, None]]
        for c in sys._cache.values():
            if c.spec.kind == DIRICHLET:
                z = np.zeros(n)
                S = _dirichlet_sat_jacobian(sys, c, z, z, z)
            else:
                S = _outflow_sat_jacobian(sys, c)
            for i in range(3):
                for j in range(3):
                    if S[i][j] is not None:
                        const[i][j] = -S[i][j] if const[i][j] is None else const[i][j] - S[i][j]
        const = sp.bmat(
            [[b if b is not None else sp.csr_matrix((n, n)) for b in row] for row in const], format="coo"
        )

        # (block row, block col, matrix) for value-varying terms
        shapes = [(0, 0, Dx), (0, 0, Dy), (1, 1, Dx), (1, 1, Dy), (0, 1, Dy), (1, 0, Dx)]
        shapes += [(i, j, eye) for i in (0, 1) for j in (0, 1)]
        rows = [const.row]
        cols = [const.col]
        for bi, bj, m in shapes:
            rows.append(m.row + bi * n)
            cols.append(m.col + bj * n)
        pat = sp.coo_matrix(
            (np.ones(sum(r.size for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        ).tocsr()
        pat.sum_duplicates()
        pat.sort_indices()
        self.indptr, self.indices = pat.indptr.copy(), pat.indices.copy()
        self._keys = np.repeat(np.arange(self.size, dtype=np.int64), np.diff(self.indptr)) * self.size + self.indices

        self.const_data = np.zeros(self.indices.size)
        np.add.at(self.const_data, self._locate(const.row, const.col), const.data)

        def term(bi, bj, m):
            return self._locate(m.row + bi * n, m.col + bj * n), m.data.copy(), m.row.copy(), m.col.copy()

        self.dx_uu, self.dy_uu = term(0, 0, Dx), term(0, 0, Dy)
        self.dx_vv, self.dy_vv = term(1, 1, Dx), term(1, 1, Dy)
        self.dy_uv, self.dx_vu = term(0, 1, Dy), term(1, 0, Dx)
        ar = np.arange(n)
        self.diag_pos = {(i, j): self._locate(ar + i * n, ar + j * n) for i in (0, 1) for j in (0, 1)}

    def _locate(self, r, c):
        keys = np.asarray(r, dtype=np.int64) * self.size + np.asarray(c, dtype=np.int64)
        pos = np.searchsorted(self._keys, keys)
        if np.any(self._keys[pos] != keys):  # pragma: no cover - pattern is a superset by construction
            raise AssertionError("entry outside the Jacobian pattern")
        return pos

    def __call__(self, W, t: float, bdf_scale: float = 0.0) -> sp.csr_matrix:
        sys = self.sys
        u, v, _ = sys.split(W)
        ops = sys.ops
        data = self.const_data.copy()

        def add(term, row_coef=None, col_coef=None, scale=1.0):
            pos, vals, r, c = term
            x = vals * scale
            if row_coef is not None:
                x = x * row_coef[r]
            if col_coef is not None:
                x = x * col_coef[c]
            data[pos] += x

        # split-form advection: 1/2 (diag(a) D + D diag(a)) plus product-rule terms
        add(self.dx_uu, row_coef=u, scale=0.5)
        add(self.dx_uu, col_coef=u, scale=1.0)
        add(self.dy_uu, row_coef=v, scale=0.5)
        add(self.dy_uu, col_coef=v, scale=0.5)
        add(self.dy_uv, col_coef=u, scale=0.5)
        add(self.dx_vu, col_coef=v, scale=0.5)
        add(self.dx_vv, row_coef=u, scale=0.5)
        add(self.dx_vv, col_coef=u, scale=0.5)
        add(self.dy_vv, row_coef=v, scale=0.5)
        add(self.dy_vv, col_coef=v, scale=1.0)

        d_uu = 0.5 * (ops.dx @ u) + bdf_scale
        d_uv = 0.5 * (ops.dy @ u)
        d_vu = 0.5 * (ops.dx @ v)
        d_vv = 0.5 * (ops.dy @ v) + bdf_scale
        for c in sys._cache.values():
            if c.spec.kind != DIRICHLET:
                continue
            al, be, ga = _sat_diagonal_coefficients(sys, c, u, v, t)
            nx, ny = c.nx, c.ny
            Pi = sys.Pinv
            d_uu -= Pi * (nx * nx * al - nx * ny * be + ny * ny * ga)
            d_uv -= Pi * (nx * ny * al - ny * ny * be - nx * ny * ga)
            d_vu -= Pi * (nx * ny * al + nx * nx * be - nx * ny * ga)
            d_vv -= Pi * (ny * ny * al + nx * ny * be + nx * nx * ga)
        for key, d in (((0, 0), d_uu), ((0, 1), d_uv), ((1, 0), d_vu), ((1, 1), d_vv)):
            data[self.diag_pos[key]] += d
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.size, self.size))


def jacobian(sys: BlockSystem, W, t: float, bdf_scale: float = 0.0) -> sp.csr_matrix:
    """Exact Jacobian of ``bdf_scale * I~ W + residual(W, t)``.

    Includes the product-rule terms of both halves of the split advection,
    the viscous blocks, the pressure couplings and the dependence of the wall
    penalty on the normal velocity.
    """
    if sys._assembler is None:
        sys._assembler = _JacobianAssembler(sys)
    return sys._assembler(W, t, bdf_scale)


# -- energy diagnostics -------------------------------------------------


def discrete_energy(sys: BlockSystem, W) -> float:
    """``W^T I~ P W``; the pressure block does not contribute."""
    u, v, _ = sys.split(W)
    return float(np.dot(sys.P, u * u) + np.dot(sys.P, v * v))


def dissipation(sys: BlockSystem, W) -> float:
    """``||Dx W||^2 + ||Dy W||^2`` in the ``I~ P`` norm."""
    u, v, _ = sys.split(W)
    ops = sys.ops
    total = 0.0
    for f in (u, v):
        gx, gy = ops.dx @ f, ops.dy @ f
        total += np.dot(sys.P, gx * gx) + np.dot(sys.P, gy * gy)
    return float(total)


def boundary_term(sys: BlockSystem, W) -> float:
    """Boundary contribution of the spatial operator to the energy rate, evaluated side by side."""
    u, v, p = sys.split(W)
    eps = sys.epsilon
    total = 0.0
    for c in sys._cache.values():
        un = c.nx * u + c.ny * v
        ut = -c.ny * u + c.nx * v
        pb = c.pb
        total -= np.sum(pb * un * un * un) + np.sum(pb * un * ut * ut) + 2.0 * np.sum(pb * un * p)
        total += 2.0 * eps * (np.sum(pb * un * (c.dn @ un)) + np.sum(pb * ut * (c.dn @ ut)))
    return float(total)


def boundary_form(sys: BlockSystem, W, t: float = 0.0) -> float:
    """Boundary term plus ``2 W^T P SAT``; zero for homogeneous wall data."""
    W = np.asarray(W)
    sat = total_sat(sys, W, t)
    return boundary_term(sys, W) + 2.0 * float(np.dot(np.tile(sys.P, 3) * W, sat))


@dataclass
class EnergyReport:
    times: np.ndarray
    energy: np.ndarray
    rate: np.ndarray = field(repr=False)
    dissipation: np.ndarray = field(repr=False)
    epsilon: float = 0.0

    @property
    def balance(self) -> np.ndarray:
        """Energy rate plus ``2 eps`` times the interval-averaged dissipation."""
        return self.rate + self.epsilon * (self.dissipation[1:] + self.dissipation[:-1])


def energy_rate_report(sys: BlockSystem, times, trajectory) -> EnergyReport:
    """Energy series, its finite-difference rate and the viscous dissipation."""
    times = np.asarray(times, dtype=float)
    traj = list(trajectory)
    if len(traj) < 2 or times.size != len(traj):
        raise ValueError("need at least two snapshots with matching times")
    energy = np.array([discrete_energy(sys, W) for W in traj])
    diss = np.array([dissipation(sys, W) for W in traj])
    rate = np.diff(energy) / np.diff(times)
    return EnergyReport(times=times, energy=energy, rate=rate, dissipation=diss, epsilon=sys.epsilon)
