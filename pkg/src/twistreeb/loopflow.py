"""Discrete loops, the twisted Rabinowitz action functional, its cutoff
perturbation and the associated gradient flow.

A :class:`DiscreteLoop` samples ``v(t) = gamma(L t)`` at ``t_i = i / N``.
Derivatives use periodic central differences ``(Dv)_i = N (v_{i+1} - v_{i-1}) / 2``
and integrals the periodic trapezoidal rule.  The loop inner product is
``<a, b> = (1/N) sum_i a_i^T g b_i + a_tau b_tau`` with ``g`` the metric of
the compatible complex structure ``J``; with it the discrete gradient is
exactly ``(J (Dv / L - tau X_H(v)), -mean (H(v) - k))``.

Flow direction: the flow decreases the action.  The gradient flow of this
strongly indefinite functional is ill-posed as an initial value problem in
``s``: the Hessian at a critical loop has infinitely many eigenvalues of both
signs, growing like ``2 pi k`` (up to about ``N`` after discretization).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .bumps import smooth_step, smooth_step_deriv
from .errors import ContractibilityError, ParameterError
from .flow import integrate_flow
from .orbits import TwistedOrbit, loop_order

BETA_EPS = 0.05


@dataclass
class DiscreteLoop:
    """``N`` samples of ``v(t) = gamma(L t)``, the multiplier ``tau``, the loop
    order ``L = ord(phi^j)`` and the twist exponent ``j``.

    ``energy`` is the level ``k`` of ``Sigma = H^{-1}(k)``; the functional
    uses ``H - k``.  ``None`` means the system's default level.
    """

    points: np.ndarray
    tau: float
    order: int = 1
    j: int = 0
    energy: Optional[float] = None

    @property
    def N(self):
        return self.points.shape[0]

    def copy(self):
        return self.moved(self.points.copy(), self.tau)

    def moved(self, points, tau):
        """Same order, twist and level with new samples and multiplier."""
        return DiscreteLoop(points, float(tau), self.order, self.j, self.energy)


def loop_from_orbit(system, orbit: TwistedOrbit, N: int = 256) -> DiscreteLoop:
    """Sample the closed ``L``-fold loop of a twisted orbit at ``N`` points."""
    L = loop_order(system, orbit.j)
    fl = integrate_flow(system, orbit.x0, L * orbit.tau)
    ts = np.arange(N) / N * L * orbit.tau
    return DiscreteLoop(fl(ts), float(orbit.tau), L, int(orbit.j), float(orbit.energy))


def seam_defect(system, loop: DiscreteLoop, j: Optional[int] = None) -> float:
    """``|gamma(1) - phi^j(gamma(0))|`` read off the samples (needs ``L | N``)."""
    N, L = loop.N, loop.order
    j = loop.j if j is None else j
    if N % L:
        raise ParameterError("N must be a multiple of the loop order")
    k = N // L
    return float(np.linalg.norm(system.difference(loop.points[k % N],
                                                  system.symmetry.apply(loop.points[0], j))))


def _derivative(system, v):
    d_fwd = system.difference(np.roll(v, -1, axis=0), v)
    d_bwd = system.difference(v, np.roll(v, 1, axis=0))
    return 0.5 * v.shape[0] * (d_fwd + d_bwd)


def _check_contractible(system, v):
    if system.structure.is_torus:
        n = system.dim // 2
        steps = system.difference(np.roll(v, -1, axis=0), v)
        wind = np.round(np.sum(steps[:, :n], axis=0) - np.sum((np.roll(v, -1, axis=0) - v)[:, :n], axis=0))
        if np.any(wind != 0):
            raise ContractibilityError(f"loop winds {wind.astype(int).tolist()} around the torus")


def _H_all(system, loop):
    k = system.default_energy if loop.energy is None else loop.energy
    return np.array([system.H(x) for x in loop.points]) - k


def inner(system, a, b, a_tau=0.0, b_tau=0.0):
    """Loop inner product ``(1/N) sum a_i^T g b_i + a_tau b_tau``."""
    g = system.structure.metric
    return float(np.einsum("ij,jk,ik->", a, g, b) / a.shape[0] + a_tau * b_tau)


def rabinowitz_action(loop: DiscreteLoop, system) -> float:
    """``(1/L) int v*lambda - tau mean (H(v) - k)`` on the discrete loop."""
    v = loop.points
    _check_contractible(system, v)
    K = system.structure.primitive_matrix
    area = np.einsum("ij,jk,ik->", v, K, _derivative(system, v)) / loop.N
    return float(area / loop.order - loop.tau * np.mean(_H_all(system, loop)))


def rabinowitz_gradient(loop: DiscreteLoop, system):
    """``(J (Dv/L - tau X_H(v_i)), -mean (H(v) - k))`` in the loop inner product."""
    v = loop.points
    J = system.structure.complex_structure
    X = np.array([system.vector_field(x) for x in v])
    gv = (_derivative(system, v) / loop.order - loop.tau * X) @ J.T
    return gv, float(-np.mean(_H_all(system, loop)))


def gradient_norm(system, gv, gt) -> float:
    return float(np.sqrt(inner(system, gv, gv) + gt * gt))


def _gradient_jacobian(loop, system):
    v = loop.points
    N, d = v.shape
    J = system.structure.complex_structure
    Dm = (np.roll(np.eye(N), 1, axis=1) - np.roll(np.eye(N), -1, axis=1)) * (0.5 * N)
    A = np.kron(Dm, J / loop.order)
    X = np.empty((N, d))
    for i, x in enumerate(v):
        A[i * d:(i + 1) * d, i * d:(i + 1) * d] -= loop.tau * J @ system.vector_field_jacobian(x)
        X[i] = system.vector_field(x)
    col = -(X @ J.T).reshape(-1)
    row = -np.concatenate([system.gradient(x) for x in v]) / N
    return np.block([[A, col[:, None]], [row[None, :], np.zeros((1, 1))]])


def refine_critical(loop: DiscreteLoop, system, tol: float = 1e-12, max_iter: int = 20) -> DiscreteLoop:
    """Gauss-Newton (minimum norm) on the discrete gradient.

    Returns a critical point of the discrete functional near ``loop``; the
    sampled continuous orbit is only critical up to ``O(N^-2)``.
    """
    cur = loop.copy()
    N, d = cur.points.shape
    for _ in range(max_iter):
        gv, gt = rabinowitz_gradient(cur, system)
        if gradient_norm(system, gv, gt) < tol:
            break
        rhs = np.concatenate([gv.reshape(-1), [gt]])
        step = np.linalg.lstsq(_gradient_jacobian(cur, system), -rhs, rcond=1e-10)[0]
        cur = cur.moved(cur.points + step[:-1].reshape(N, d), cur.tau + step[-1])
    return cur


# ------------------------------------------------------------------ cutoff

def cutoff_beta(r: float, s, eps: float = BETA_EPS):
    """Cutoff ``beta_r(s)``: 0 for ``|s| >= r``, 1 for ``|s| <= r - 1``, ``s beta' <= 0``.

    ``beta_r(s) = psi((r - sqrt(s^2 + eps^2)) / (1 - 2 eps))`` with ``psi`` a
    smooth step; smooth in both ``r`` and ``s``.
    """
    if r < 0:
        raise ParameterError("r must be nonnegative")
    s = np.asarray(s, float)
    rho = np.sqrt(s * s + eps * eps)
    return smooth_step((r - rho) / (1 - 2 * eps))


def cutoff_beta_deriv(r: float, s, eps: float = BETA_EPS):
    s = np.asarray(s, float)
    rho = np.sqrt(s * s + eps * eps)
    return smooth_step_deriv((r - rho) / (1 - 2 * eps)) * (-s / rho) / (1 - 2 * eps)


def _F_mean(profile, loop):
    t = np.arange(loop.N) / loop.N
    return float(np.mean(profile(t, loop.points)))


def perturbed_action(loop: DiscreteLoop, system, profile, s: float) -> float:
    """``A(v, tau) - beta_r(s) mean_t F_t(v(t))``."""
    a = rabinowitz_action(loop, system)
    b = float(cutoff_beta(profile.r, s)) if profile is not None else 0.0
    if b == 0.0:
        return a
    return a - b * _F_mean(profile, loop)


def perturbed_gradient(loop: DiscreteLoop, system, profile, s: float):
    gv, gt = rabinowitz_gradient(loop, system)
    b = float(cutoff_beta(profile.r, s)) if profile is not None else 0.0
    if b != 0.0:
        t = np.arange(loop.N) / loop.N
        dF = np.asarray(profile.grad(t, loop.points))
        gv = gv - b * np.linalg.solve(system.structure.metric, dF.T).T
    return gv, gt


# -------------------------------------------------------------------- descent

@dataclass
class Trajectory:
    s: np.ndarray
    taus: np.ndarray
    actions: np.ndarray
    grad_norms: np.ndarray
    loops: List[DiscreteLoop] = field(repr=False)
    converged: bool
    perturbed: bool
    message: str = ""
    F_norm: Optional[float] = None

    @property
    def final(self):
        return self.loops[-1]

    def to_dict(self):
        return dict(s=self.s.tolist(), tau=self.taus.tolist(), action=self.actions.tolist(),
                    grad_norm=self.grad_norms.tolist(), converged=self.converged,
                    perturbed=self.perturbed, message=self.message, F_norm=self.F_norm,
                    flow_energy=flow_energy(self))


@dataclass
class Schedule:
    """Step control for :func:`descend`.

    Unperturbed runs use Armijo backtracking starting from ``h`` (capped at
    ``h_max``) and stop when the gradient norm drops below ``tol``.  Perturbed
    runs march ``s`` from ``s0`` to ``s1`` with step doubling (local error
    below ``local_tol``).  Either run stops once the gradient norm exceeds
    ``blowup`` times its initial value (or 1).
    """

    h: float = 1e-3
    h_max: float = 1e-2
    h_min: float = 1e-12
    tol: float = 1e-6
    max_steps: int = 2000
    s0: float = 0.0
    s1: float = 1.0
    local_tol: float = 1e-6
    blowup: float = 1e6


def _state_norm(system, dv, dt):
    return np.sqrt(inner(system, dv, dv) + dt * dt)


def descend(loop0: DiscreteLoop, system, profile=None, schedule: Optional[Schedule] = None) -> Trajectory:
    """Explicit first-order flow ``d(v, tau)/ds = -grad A_r``.

    Returns a :class:`Trajectory` with the action (``A_r`` at the current
    ``s`` for perturbed runs) and gradient norm recorded at every accepted
    step.  Exhausting the step budget is reported as ``converged = False``.
    """
    sc = schedule or Schedule()
    if profile is None:
        return _descend_plain(loop0, system, sc)
    return _descend_perturbed(loop0, system, profile, sc)


def _descend_plain(loop0, system, sc):
    loop = loop0.copy()
    a = rabinowitz_action(loop, system)
    gv, gt = rabinowitz_gradient(loop, system)
    gn = gradient_norm(system, gv, gt)
    s_vals, taus, acts, gns, loops = [0.0], [loop.tau], [a], [gn], [loop.copy()]
    h = min(sc.h, sc.h_max)
    s = 0.0
    msg = ""
    for _ in range(sc.max_steps):
        if gn < sc.tol:
            break
        while True:
            trial = loop.moved(loop.points - h * gv, loop.tau - h * gt)
            at = rabinowitz_action(trial, system)
            if np.isfinite(at) and at <= a - 0.5 * h * gn * gn:
                break
            h *= 0.5
            if h < sc.h_min:
                msg = "step size underflow"
                break
        if msg:
            break
        s += h
        loop, a = trial, at
        gv, gt = rabinowitz_gradient(loop, system)
        gn = gradient_norm(system, gv, gt)
        s_vals.append(s)
        taus.append(loop.tau)
        acts.append(a)
        gns.append(gn)
        loops.append(loop.copy())
        if not np.isfinite(gn) or gn > sc.blowup * max(gns[0], 1.0):
            msg = "diverged: gradient norm grew past the blow-up threshold"
            break
        h = min(2 * h, sc.h_max)
    conv = bool(gns[-1] < sc.tol)
    if not conv and not msg:
        msg = "step budget exhausted"
    return Trajectory(np.array(s_vals), np.array(taus), np.array(acts), np.array(gns), loops,
                      conv, False, msg)


def _euler(system, profile, loop, s, h):
    gv, gt = perturbed_gradient(loop, system, profile, s)
    return loop.moved(loop.points - h * gv, loop.tau - h * gt)


def _descend_perturbed(loop0, system, profile, sc):
    loop = loop0.copy()
    s = sc.s0
    gv, gt = perturbed_gradient(loop, system, profile, s)
    s_vals = [s]
    taus = [loop.tau]
    acts = [perturbed_action(loop, system, profile, s)]
    gns = [gradient_norm(system, gv, gt)]
    loops = [loop.copy()]
    h = min(sc.h, sc.h_max)
    msg = ""
    steps = 0
    while s < sc.s1 - 1e-15 and steps < sc.max_steps:
        h = min(h, sc.s1 - s)
        big = _euler(system, profile, loop, s, h)
        half = _euler(system, profile, loop, s, h / 2)
        two = _euler(system, profile, half, s + h / 2, h / 2)
        err = _state_norm(system, big.points - two.points, big.tau - two.tau)
        if not np.isfinite(err):
            msg = "flow blew up"
            break
        if err > sc.local_tol and h > sc.h_min:
            h *= 0.5
            continue
        loop = two
        s += h
        steps += 1
        gv, gt = perturbed_gradient(loop, system, profile, s)
        s_vals.append(s)
        taus.append(loop.tau)
        acts.append(perturbed_action(loop, system, profile, s))
        gns.append(gradient_norm(system, gv, gt))
        loops.append(loop.copy())
        if not np.isfinite(gns[-1]) or gns[-1] > sc.blowup * max(gns[0], 1.0):
            msg = "diverged: gradient norm grew past the blow-up threshold"
            break
        if err < 0.25 * sc.local_tol:
            h = min(2 * h, sc.h_max)
    done = s >= sc.s1 - 1e-15
    if not done and not msg:
        msg = "step budget exhausted"
    F_norm = profile.norms.total if profile.norms is not None else None
    return Trajectory(np.array(s_vals), np.array(taus), np.array(acts), np.array(gns), loops,
                      bool(done), True, msg, F_norm)


def flow_energy(traj: Trajectory, system=None) -> float:
    """``sum |Delta u|^2 / Delta s`` over the recorded steps (``int |d_s u|^2 ds``)."""
    if len(traj.loops) < 2:
        return 0.0
    total = 0.0
    for a, b, s0, s1 in zip(traj.loops[:-1], traj.loops[1:], traj.s[:-1], traj.s[1:]):
        ds = s1 - s0
        if ds <= 0:
            continue
        dv = b.points - a.points
        dt = b.tau - a.tau
        if system is not None:
            sq = inner(system, dv, dv) + dt * dt
        else:
            sq = float(np.sum(dv * dv) / dv.shape[0] + dt * dt)
        total += sq / ds
    return float(total)


def energy_balance(traj: Trajectory, system, profile=None) -> dict:
    """Terms of ``E = A_r(start) - A_r(end) - int beta_r'(s) mean_t F ds``.

    The forcing integral uses the trapezoidal rule in ``s``; for unperturbed
    runs it vanishes and ``E`` should match the action drop.
    """
    E = flow_energy(traj, system)
    drop = float(traj.actions[0] - traj.actions[-1])
    forcing = 0.0
    if profile is not None and len(traj.loops) > 1:
        beta = cutoff_beta(profile.r, traj.s)
        Fm = np.array([_F_mean(profile, lp) for lp in traj.loops])
        forcing = float(np.sum(np.diff(beta) * 0.5 * (Fm[1:] + Fm[:-1])))
    return dict(energy=E, action_drop=drop, forcing=forcing, predicted=drop - forcing)
