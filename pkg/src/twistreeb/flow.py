"""Integration of Hamiltonian flows and their linearizations.

Everything runs on scipy's DOP853 (8th order embedded Dormand-Prince pair),
stepped by hand so that energy projection, escape detection and event
location can be done between accepted steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq

from .errors import IntegrationError, NotFoundError

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-14


@dataclass
class FlowResult:
    """Trajectory on ``[0, T]`` with the accepted step points and dense output.

    ``x[i]`` is the state at ``t[i]``; calling the result evaluates the dense
    interpolant (unwrapped torus coordinates).
    """

    t: np.ndarray
    x: np.ndarray
    energy_drift: float
    nsteps: int
    nfev: int
    sol: Optional[OdeSolution] = None
    success: bool = True
    message: str = ""

    @property
    def final(self):
        return self.x[-1]

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.sol is None:
            return np.broadcast_to(self.x[0], t.shape + self.x[0].shape).copy()
        out = self.sol(t)
        return out.T if out.ndim == 2 else out

    def sample(self, n: int):
        """``n`` equally spaced points (endpoints included) from the dense output."""
        ts = np.linspace(self.t[0], self.t[-1], n)
        return ts, self(ts)


@dataclass
class MonodromyResult:
    """Linearization ``M = D Phi_T(x0)`` with its symplecticity defect."""

    matrix: np.ndarray
    defect: float
    eigenvalues: np.ndarray
    final: np.ndarray
    flagged: bool = False
    flow: Optional[FlowResult] = field(default=None, repr=False)

    def multiplicity(self, value=1.0, tol=1e-4) -> int:
        return int(np.sum(np.abs(self.eigenvalues - value) < tol))


def _project(system, x, energy, iters=3):
    for _ in range(iters):
        g = system.gradient(x)
        r = system.H(x) - energy
        if abs(r) < 1e-15:
            break
        x = x - r * g / (g @ g)
    return x


def _drive(fun, y0, T, rtol, atol, *, post_step=None, check=None, max_step=np.inf,
           dense=True, max_steps=10**6):
    """Run DOP853 from 0 to T, returning (ts, ys, interpolants, nfev, status, message)."""
    ts = [0.0]
    ys = [np.array(y0, float)]
    interps = []
    if T == 0:
        return np.array(ts), np.array(ys), interps, 0, "finished", ""
    solver = DOP853(fun, 0.0, ys[0], T, rtol=rtol, atol=atol, max_step=max_step)
    status, msg = "finished", ""
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            status, msg = "failed", message or "step failed"
            break
        if dense:
            interps.append(solver.dense_output())
        y = solver.y
        if post_step is not None:
            y_new = post_step(y)
            if y_new is not y:
                solver.y = y_new
                solver.f = fun(solver.t, y_new)
                y = y_new
        ts.append(solver.t)
        ys.append(np.array(y))
        if check is not None:
            bad = check(y)
            if bad:
                status, msg = "failed", bad
                break
        if len(ts) > max_steps:
            status, msg = "failed", "step budget exhausted"
            break
    return np.array(ts), np.array(ys), interps, solver.nfev, status, msg


def integrate_flow(system, x0, T: float, *, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                   project: bool = False, energy: Optional[float] = None,
                   max_step: float = np.inf, dense: bool = True) -> FlowResult:
    """Integrate ``xdot = X_H(x)`` from ``x0`` over ``[0, T]``.

    Parameters
    ----------
    project : bool
        Pull each accepted step back onto ``H = energy`` (default ``H(x0)``)
        with Newton steps along ``grad H``.
    dense : bool
        Keep per-step interpolants.  Turn off when only the endpoint matters.

    Raises
    ------
    IntegrationError
        On step-size underflow or escape beyond ``system.escape_radius``;
        the partial :class:`FlowResult` is attached as ``partial``.
    """
    x0 = np.array(x0, dtype=float)
    if x0.shape != (system.dim,):
        raise IntegrationError(f"initial point has shape {x0.shape}")
    if not np.isfinite(T):
        raise IntegrationError("integration time must be finite")
    h0 = system.H(x0)
    k = h0 if energy is None else energy
    post = (lambda y: _project(system, y, k)) if project else None
    R = system.escape_radius
    n = system.dim // 2
    if np.isfinite(R):
        sl = slice(n, None) if system.structure.is_torus else slice(None)

        def check(y):
            if not np.all(np.isfinite(y)):
                return "non-finite state"
            if np.linalg.norm(y[sl]) > R:
                return f"trajectory left the ball of radius {R}"
            return None
    else:
        def check(y):
            return None if np.all(np.isfinite(y)) else "non-finite state"

    ts, ys, interps, nfev, status, msg = _drive(
        lambda t, y: system.vector_field(y), x0, float(T), rtol, atol,
        post_step=post, check=check, max_step=max_step, dense=dense)
    drift = float(np.max(np.abs([system.H(y) - h0 for y in ys])))
    sol = OdeSolution(ts, interps) if (dense and interps) else None
    res = FlowResult(ts, ys, drift, len(ts) - 1, nfev, sol, status == "finished", msg)
    if status != "finished":
        raise IntegrationError(f"{system.name}: {msg} at t={ts[-1]:.6g}", partial=res)
    return res


def integrate_variational(system, x0, T: float, *, rtol: float = DEFAULT_RTOL,
                          atol: float = DEFAULT_ATOL, defect_tol: float = 1e-6) -> MonodromyResult:
    """Integrate the flow together with its linearization ``dM/dt = DX_H(x) M``."""
    x0 = np.array(x0, dtype=float)
    d = system.dim

    def fun(t, y):
        x = y[:d]
        M = y[d:].reshape(d, d)
        return np.concatenate([system.vector_field(x), (system.vector_field_jacobian(x) @ M).ravel()])

    y0 = np.concatenate([x0, np.eye(d).ravel()])
    ts, ys, interps, nfev, status, msg = _drive(fun, y0, float(T), rtol, atol, dense=False)
    if status != "finished":
        partial = FlowResult(ts, ys[:, :d], np.nan, len(ts) - 1, nfev, None, False, msg)
        raise IntegrationError(f"{system.name}: {msg}", partial=partial)
    M = ys[-1, d:].reshape(d, d)
    Om = system.structure.omega
    defect = float(np.linalg.norm(M.T @ Om @ M - Om))
    flow = FlowResult(ts, ys[:, :d], float(np.max(np.abs([system.H(y) - system.H(x0) for y in ys[:, :d]]))),
                      len(ts) - 1, nfev)
    return MonodromyResult(M, defect, np.linalg.eigvals(M), ys[-1, :d], defect > defect_tol, flow)


def hyperplane(normal, offset=0.0) -> Callable:
    """Section functional ``x -> <normal, x> - offset``."""
    normal = np.asarray(normal, float)
    return lambda x: float(normal @ x) - offset


def section_crossing(system, x0, section, direction: int = 0, *, horizon: float = 100.0,
                     rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL, subdivisions: int = 8,
                     xtol: float = 1e-14):
    """First time ``t > 0`` at which ``section(x(t))`` changes sign.

    Parameters
    ----------
    section : callable or (normal, offset)
        Phase functional, or an affine hyperplane.
    direction : {-1, 0, 1}
        ``+1`` keeps crossings where the functional increases, ``-1`` where it
        decreases, ``0`` keeps both.  A start on the section is never reported.

    Returns
    -------
    (t, x) : float, ndarray
    """
    if not callable(section):
        section = hyperplane(*section)
    x0 = np.array(x0, float)
    fun = lambda t, y: system.vector_field(y)
    solver = DOP853(fun, 0.0, x0, float(horizon), rtol=rtol, atol=atol)
    while solver.status == "running":
        t_old = solver.t
        solver.step()
        if solver.status == "failed":
            raise IntegrationError("section search failed: step size underflow")
        interp = solver.dense_output()
        grid = np.linspace(t_old, solver.t, subdivisions + 1)
        vals = np.array([section(interp(s)) for s in grid])
        for a, b, ga, gb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if a == 0.0 and ga == 0.0:
                continue
            if ga == 0.0 or np.sign(ga) == np.sign(gb):
                continue
            sgn = 1 if gb > ga else -1
            if direction and sgn != direction:
                continue
            tc = brentq(lambda s: section(interp(s)), a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)
            return tc, interp(tc)
    raise NotFoundError(f"no crossing of the section within t <= {horizon}")


def integrate_batch(system, points, T: float, *, n_jobs: int = 1, **opts):
    """Integrate several initial conditions; output order matches input order."""
    points = np.atleast_2d(points)
    if n_jobs == 1:
        return [integrate_flow(system, p, T, **opts) for p in points]
    return Parallel(n_jobs=n_jobs)(delayed(integrate_flow)(system, p, T, **opts) for p in points)
