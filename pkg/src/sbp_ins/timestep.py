"""BDF2 time marching with Newton iterations on the monolithic (u, v, p) system."""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .system import BlockSystem, discrete_energy, jacobian, residual

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Newton or linear-solver failure during time marching."""


class SingularJacobianError(SolverError):
    pass


class NewtonDivergedError(SolverError):
    pass


@dataclass
class NewtonSettings:
    tol: float = 1e-10  # on the squared P-norm of the update
    max_iter: int = 25
    reuse_jacobian: bool = False
    linear_solver: str = "direct"  # or "gmres"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.linear_solver not in ("direct", "gmres"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class TimeStepperState:
    w_prev: np.ndarray | None
    w_curr: np.ndarray
    dt: float
    step_index: int = 0
    newton_tol: float = 1e-10
    max_newton_iters: int = 25

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if not self.newton_tol > 0:
            raise ValueError("newton tolerance must be positive")


def p_norm_sq(sys: BlockSystem, W) -> float:
    return float(np.dot(np.tile(sys.P, 3), np.asarray(W) ** 2))


def bdf2_residual(sys: BlockSystem, w_new, w_curr, w_prev, dt: float, t_new: float) -> np.ndarray:
    dwdt = (3.0 * w_new - 4.0 * w_curr + w_prev) / (2.0 * dt)
    return sys.itilde * dwdt + residual(sys, w_new, t_new)


def bdf1_residual(sys: BlockSystem, w_new, w_curr, dt: float, t_new: float) -> np.ndarray:
    return sys.itilde * (w_new - w_curr) / dt + residual(sys, w_new, t_new)


_PIVOT_RATIO = 1e-12


class _LinearSolver:
    """Factorises Newton matrices, bordering out the constant-pressure mode when needed."""

    def __init__(self, sys: BlockSystem, settings: NewtonSettings):
        self.sys = sys
        self.settings = settings
        self.bordered = sys.closed
        self._lu = None
        self._key = None
        self._matrix = None
        n = sys.n
        if self.bordered:
            # right null vector: constant pressure; left null vector: P-weighted sum of divergence rows
            self._border = np.concatenate([np.zeros(2 * n), sys.P / sys.P.sum()])
        self.factorizations = 0

    def _assemble(self, J: sp.csr_matrix):
        if not self.bordered:
            return J.tocsc()
        b = sp.csr_matrix(self._border[:, None])
        return sp.bmat([[J, b], [b.T, None]], format="csc")

    def factor(self, J: sp.csr_matrix, key=None):
        A = self._assemble(J)
        self._matrix = A
        self._key = key
        self.factorizations += 1
        if self.settings.linear_solver == "gmres":
            self._lu = None
            try:
                self._ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
            except RuntimeError as exc:
                raise SingularJacobianError(f"incomplete factorisation failed: {exc}") from exc
            return
        try:
            self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularJacobianError(
                f"Newton matrix is singular ({exc}); check that the boundary set fixes the pressure level"
            ) from exc
        # a rounding-level pivot means the matrix is numerically singular even if SuperLU accepted it
        piv = np.abs(self._lu.U.diagonal())
        if piv.min() < _PIVOT_RATIO * piv.max():
            self._lu = None
            raise SingularJacobianError(
                f"Newton matrix is numerically singular (pivot ratio {piv.min() / piv.max():.1e}); "
                "check that the boundary set fixes the pressure level"
            )

    @property
    def key(self):
        return self._key

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.concatenate([rhs, [0.0]]) if self.bordered else rhs
        if self._lu is not None:
            x = self._lu.solve(b)
        else:
            M = spla.LinearOperator(self._matrix.shape, self._ilu.solve)
            x, info = spla.gmres(self._matrix, b, M=M, rtol=1e-12, atol=0.0, restart=200, maxiter=20)
            if info != 0:
                raise SolverError(f"gmres did not converge (info={info})")
        if not np.all(np.isfinite(x)):
            raise SingularJacobianError("linear solve produced non-finite values; Newton matrix is singular")
        return x[: rhs.size]


@dataclass
class NewtonResult:
    W: np.ndarray
    iterations: int
    update_norms: list = field(default_factory=list)  # squared P-norms of the updates
    residual_norms: list = field(default_factory=list)


def _newton(sys, F, bdf_scale, w0, t_new, settings: NewtonSettings, solver: _LinearSolver) -> NewtonResult:
    W = np.array(w0, dtype=float, copy=True)
    result = NewtonResult(W=W, iterations=0)
    prev = None
    for it in range(1, settings.max_iter + 1):
        R = F(W)
        result.residual_norms.append(float(np.sqrt(p_norm_sq(sys, R))))
        fresh = False
        if not settings.reuse_jacobian or solver.key != bdf_scale:
            solver.factor(jacobian(sys, W, t_new, bdf_scale), key=bdf_scale)
            fresh = True
        delta = solver.solve(-R)
        upd = p_norm_sq(sys, delta)
        if settings.reuse_jacobian and not fresh and prev is not None and upd > 0.25 * prev:
            # stale Jacobian contracting too slowly: refactor and redo this iteration
            solver.factor(jacobian(sys, W, t_new, bdf_scale), key=bdf_scale)
            delta = solver.solve(-R)
            upd = p_norm_sq(sys, delta)
        W += delta
        result.update_norms.append(upd)
        result.iterations = it
        if not np.isfinite(upd):
            raise NewtonDivergedError(f"non-finite Newton update at iteration {it}")
        if upd < settings.tol:
            result.W = W
            return result
        prev = upd
    raise NewtonDivergedError(
        f"Newton did not converge in {settings.max_iter} iterations; "
        f"last squared update norm {result.update_norms[-1]:.3e}, "
        f"last residual norm {result.residual_norms[-1]:.3e}"
    )


def newton_solve(sys: BlockSystem, stepper: TimeStepperState, t_new: float, settings: NewtonSettings | None = None, solver=None) -> NewtonResult:
    """One BDF2 step from ``stepper`` (w_prev at t - 2dt, w_curr at t - dt) to ``t_new``."""
    settings = settings or NewtonSettings(tol=stepper.newton_tol, max_iter=stepper.max_newton_iters)
    solver = solver or _LinearSolver(sys, settings)
    dt = stepper.dt
    wc, wp = stepper.w_curr, stepper.w_prev
    F = lambda W: bdf2_residual(sys, W, wc, wp, dt, t_new)  # noqa: E731
    return _newton(sys, F, 1.5 / dt, wc, t_new, settings, solver)


def startup_step(sys: BlockSystem, w_initial, dt: float, t0: float, settings: NewtonSettings | None = None, solver=None) -> NewtonResult:
    """Backward Euler step providing the second starting level for BDF2."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    settings = settings or NewtonSettings()
    solver = solver or _LinearSolver(sys, settings)
    w0 = np.asarray(w_initial, dtype=float)
    F = lambda W: bdf1_residual(sys, W, w0, dt, t0 + dt)  # noqa: E731
    return _newton(sys, F, 1.0 / dt, w0, t0 + dt, settings, solver)


@dataclass
class MarchSettings:
    dt: float
    t_end: float | None = None
    steady_tol: float | None = None
    max_steps: int | None = None
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    snapshot_every: int = 0  # 0 keeps no snapshots
    log_every: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.t_end is None and self.steady_tol is None and self.max_steps is None:
            raise ValueError("need an end time, a steady-state tolerance or a step limit")


@dataclass
class MarchResult:
    W: np.ndarray
    t: float
    steps: int
    steady: bool
    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    increments: list = field(default_factory=list)  # P-norm of W^{n+1} - W^n
    snapshots: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    factorizations: int = 0
    wall_time: float = 0.0


def march(sys: BlockSystem, w_initial, settings: MarchSettings, t0: float = 0.0) -> MarchResult:
    """Advance from ``w_initial`` to ``t_end`` or until ``||W^{n+1} - W^n||_P < steady_tol``."""
    start = _time.perf_counter()
    dt = settings.dt
    W = np.array(w_initial, dtype=float, copy=True)
    res = MarchResult(W=W, t=t0, steps=0, steady=False, times=[t0], energy=[discrete_energy(sys, W)])
    if settings.snapshot_every:
        res.snapshots.append(W.copy())
        res.snapshot_times.append(t0)

    if settings.t_end is not None:
        n_steps = int(round((settings.t_end - t0) / dt))
        if n_steps < 0 or abs(t0 + n_steps * dt - settings.t_end) > 1e-9 * max(1.0, abs(settings.t_end)):
            raise ValueError(f"end time {settings.t_end} is not reached by whole steps of {dt} from {t0}")
    else:
        n_steps = None
    if settings.max_steps is not None:
        n_steps = settings.max_steps if n_steps is None else min(n_steps, settings.max_steps)
    if n_steps == 0:
        res.wall_time = _time.perf_counter() - start
        return res

    solver = _LinearSolver(sys, settings.newton)
    w_prev = None
    step = 0
    t = t0
    while n_steps is None or step < n_steps:
        t_new = t0 + (step + 1) * dt
        try:
            if w_prev is None:
                out = startup_step(sys, W, dt, t, settings.newton, solver)
            else:
                stepper = TimeStepperState(w_prev=w_prev, w_curr=W, dt=dt, step_index=step)
                out = newton_solve(sys, stepper, t_new, settings.newton, solver)
        except SolverError as exc:
            raise type(exc)(f"step {step + 1} (t = {t_new:.6g}): {exc}") from exc
        W_new = out.W
        if not np.all(np.isfinite(W_new)):
            raise NewtonDivergedError(f"step {step + 1} (t = {t_new:.6g}): non-finite state")
        inc = float(np.sqrt(p_norm_sq(sys, W_new - W)))
        w_prev, W, t = W, W_new, t_new
        step += 1
        res.times.append(t)
        res.energy.append(discrete_energy(sys, W))
        res.newton_iterations.append(out.iterations)
        res.increments.append(inc)
        if settings.snapshot_every and step % settings.snapshot_every == 0:
            res.snapshots.append(W.copy())
            res.snapshot_times.append(t)
        if settings.log_every and step % settings.log_every == 0:
            log.info(
                "step %d t=%.5g newton=%d residual=%.3e increment=%.3e energy=%.6e",
                step, t, out.iterations, out.residual_norms[-1], inc, res.energy[-1],
            )
        if settings.steady_tol is not None and inc < settings.steady_tol:
            res.steady = True
            break

    res.W, res.t, res.steps = W, t, step
    res.factorizations = solver.factorizations
    res.wall_time = _time.perf_counter() - start
    return res
