"""Twisted periodic orbits: solutions of ``Phi_tau(x) = phi^j(x)`` on ``H = k``.

Orbits are parametrized in X_H-time.  The underlying closed orbit is the
``L``-fold concatenation with ``L = m / gcd(j, m)`` the order of ``phi^j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import gcd
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import expm
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import (ConvergenceError, IntegrationError, ParameterError,
                     RankDeficiencyError)
from .flow import integrate_flow, integrate_variational


@dataclass
class TwistedOrbit:
    system_name: str
    j: int
    x0: np.ndarray
    tau: float
    energy: float
    residual: float
    action: Optional[float] = None
    floquet: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(system=self.system_name, j=int(self.j), x0=[float(v) for v in self.x0],
                    tau=float(self.tau), energy=float(self.energy), residual=float(self.residual),
                    action=None if self.action is None else float(self.action),
                    floquet=self.floquet, meta=_plain(self.meta))

    @classmethod
    def from_dict(cls, d):
        return cls(d["system"], int(d["j"]), np.array(d["x0"], float), float(d["tau"]),
                   float(d["energy"]), float(d["residual"]), d.get("action"), d.get("floquet"),
                   dict(d.get("meta", {})))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


@dataclass
class ShootingConfig:
    """Options for :func:`newton_refine` and :func:`seed_sweep`.

    ``degenerate`` controls what happens when the Newton matrix is rank
    deficient (Morse-Bott families such as round spheres): ``"lstsq"`` takes
    minimum-norm steps, ``"raise"`` raises :class:`RankDeficiencyError`.
    """

    energy: float
    j: int = 0
    tau_min: float = 0.1
    tau_max: float = 10.0
    seeds: str = "sobol"
    n_seeds: int = 16
    user_seeds: Optional[Sequence] = None
    newton_tol: float = 1e-11
    accept_tol: float = 1e-8
    max_iter: int = 25
    degenerate: str = "lstsq"
    rank_tol: float = 1e-8
    near_return: float = 0.3
    candidates_per_seed: int = 4
    grad_eps: float = 1e-6
    box: Optional[np.ndarray] = None
    seed: int = 0
    n_jobs: int = 1
    rtol: float = 1e-12

    def __post_init__(self):
        if not self.tau_min > 0:
            raise ParameterError("tau_min must be positive")
        if self.tau_max <= self.tau_min:
            raise ParameterError("tau_max must exceed tau_min")
        if self.seeds not in ("sobol", "grid", "user"):
            raise ParameterError(f"unknown seed strategy {self.seeds!r}")
        if self.degenerate not in ("lstsq", "raise"):
            raise ParameterError("degenerate must be 'lstsq' or 'raise'")


def loop_order(system, j: int) -> int:
    """Order of ``phi^j``: the number of twisted segments in the closed orbit."""
    m = system.symmetry.order
    return m // gcd(int(j) % m, m) if m > 1 else 1


def twisted_residual(system, j: int, x, tau: float, energy: Optional[float] = None, *, rtol=1e-12):
    """``(Phi_tau(x) - phi^j(x), H(x) - k)``; torus ``q`` compared modulo ``Z^n``."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    x = np.asarray(x, float)
    k = system.default_energy if energy is None else energy
    end = integrate_flow(system, x, tau, rtol=rtol, dense=False).final
    return np.concatenate([system.difference(end, system.symmetry.apply(x, j)), [system.H(x) - k]])


def _newton_system(system, j, x, tau, k, x_ref, rtol):
    mono = integrate_variational(system, x, tau, rtol=rtol)
    L, _ = system.symmetry.power(j)
    d = system.dim
    F = np.concatenate([system.difference(mono.final, system.symmetry.apply(x, j)),
                        [system.H(x) - k],
                        [system.vector_field(x_ref) @ (x - x_ref)]])
    A = np.zeros((d + 2, d + 1))
    A[:d, :d] = mono.matrix - L
    A[:d, d] = system.vector_field(mono.final)
    A[d, :d] = system.gradient(x)
    A[d + 1, :d] = system.vector_field(x_ref)
    return F, A, mono


def newton_refine(system, config: ShootingConfig, guess, j: Optional[int] = None) -> TwistedOrbit:
    """Damped Gauss-Newton on the twisted residual with energy and phase rows.

    The unknowns are ``(x, tau)``.  Rows: the ``2n`` boundary conditions,
    the energy ``H(x) - k``, and the phase condition that the correction is
    orthogonal to ``X_H`` at the current base point.  Steps are computed by
    SVD least squares; the numerical kernel dimension of the Jacobian is
    stored in ``meta["kernel_dim"]``.

    Raises
    ------
    RankDeficiencyError
        Rank-deficient Jacobian with ``config.degenerate == "raise"``.
    ConvergenceError
        Iteration budget exhausted or tau driven nonpositive; the report holds
        the residual history.
    """
    j = config.j if j is None else j
    x, tau = np.array(guess[0], float), float(guess[1])
    k = config.energy
    history = []
    kernel_dim = 0
    for it in range(config.max_iter + 1):
        try:
            F, A, mono = _newton_system(system, j, x, tau, k, x, config.rtol)
        except IntegrationError as exc:
            raise ConvergenceError(f"integration failed during Newton: {exc}",
                                   dict(history=history, x=x.tolist(), tau=tau)) from exc
        norm = float(np.linalg.norm(F))
        history.append(norm)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        kernel_dim = int(np.sum(s <= config.rank_tol * s[0]))
        if kernel_dim and config.degenerate == "raise":
            raise RankDeficiencyError(f"Newton matrix has a {kernel_dim}-dimensional kernel", kernel_dim)
        if norm <= config.newton_tol:
            break
        if it == config.max_iter:
            break
        keep = s > config.rank_tol * s[0]
        s_inv = np.divide(1.0, s, out=np.zeros_like(s), where=keep)
        step = -(Vt.T * s_inv) @ (U.T @ F)
        lam = 1.0
        accepted = False
        for _ in range(12):
            xn, tn = x + lam * step[:-1], tau + lam * step[-1]
            if tn > 0:
                try:
                    Fn = np.concatenate([twisted_residual(system, j, xn, tn, k, rtol=config.rtol),
                                         [system.vector_field(x) @ (xn - x)]])
                    if np.linalg.norm(Fn) < (1 - 1e-4 * lam) * norm or np.linalg.norm(step) * lam < 1e-15:
                        accepted = True
                        break
                except IntegrationError:
                    pass
            lam *= 0.5
        if not accepted:
            if norm <= config.accept_tol:
                break
            raise ConvergenceError("line search failed", dict(history=history, x=x.tolist(), tau=tau))
        x, tau = xn, tn
        if np.linalg.norm(lam * step) < 1e-15 * max(1.0, np.linalg.norm(x)):
            F, _, mono = _newton_system(system, j, x, tau, k, x, config.rtol)
            history.append(float(np.linalg.norm(F)))
            break
    res = twisted_residual(system, j, x, tau, k, rtol=config.rtol)
    rnorm = float(np.linalg.norm(res))
    if not (rnorm <= config.accept_tol and abs(res[-1]) <= 1e-10 and tau > 0):
        raise ConvergenceError(f"no convergence: residual {rnorm:.3e} after {len(history)} evaluations",
                               dict(history=history, x=x.tolist(), tau=tau, residual=rnorm))
    drift = integrate_flow(system, x, tau, rtol=config.rtol, dense=False).energy_drift
    return TwistedOrbit(system.name, int(j), x, tau, k, rnorm,
                        meta=dict(kernel_dim=kernel_dim, history=history, energy_drift=drift,
                                  iterations=len(history) - 1))


def verify_orbit(system, orbit: TwistedOrbit, tol: float = 1e-8, samples: int = 5) -> dict:
    """Re-check residual, energy, closure of the concatenation and equivariance."""
    res = twisted_residual(system, orbit.j, orbit.x0, orbit.tau, orbit.energy)
    L = loop_order(system, orbit.j)
    m = system.symmetry.order
    end = integrate_flow(system, orbit.x0, L * orbit.tau, dense=False).final
    closure = float(np.linalg.norm(system.difference(end, orbit.x0)))
    ts = np.linspace(0, orbit.tau, samples + 1)[1:]
    tr = integrate_flow(system, orbit.x0, orbit.tau)
    tr_phi = integrate_flow(system, system.symmetry.apply(orbit.x0), orbit.tau)
    equi = float(np.max([np.linalg.norm(system.difference(tr_phi(t), system.symmetry.apply(tr(t))))
                         for t in ts]))
    return dict(residual=float(np.linalg.norm(res)), residual_ok=bool(np.linalg.norm(res) <= tol),
                energy_error=float(abs(res[-1])), energy_ok=bool(abs(res[-1]) <= 1e-10),
                closure=closure, closure_ok=bool(closure <= m * tol),
                equivariance=equi, equivariance_ok=bool(equi <= 1e-8))


# ------------------------------------------------------------------ seeding

def project_to_level(system, x, energy, max_iter: int = 20, grad_eps: float = 1e-6):
    """Newton steps along ``grad H`` onto ``H = energy``; ``None`` on failure."""
    x = np.array(x, float)
    for _ in range(max_iter):
        r = system.H(x) - energy
        g = system.gradient(x)
        gg = g @ g
        if gg < grad_eps**2:
            return None
        if abs(r) <= 1e-14 * max(1.0, abs(energy)):
            return x
        x = x - r * g / gg
    return x if abs(system.H(x) - energy) <= 1e-12 else None


def _seed_points(system, config: ShootingConfig):
    if config.seeds == "user":
        if config.user_seeds is None:
            raise ParameterError("user seed strategy needs user_seeds")
        return np.atleast_2d(np.asarray(config.user_seeds, float))
    box = np.asarray(config.box if config.box is not None else system.box, float)
    d = system.dim
    if config.seeds == "sobol":
        m = int(np.ceil(np.log2(max(config.n_seeds, 1))))
        u = qmc.Sobol(d, scramble=True, seed=config.seed).random_base2(m)[: config.n_seeds]
    else:
        per = max(2, int(round(config.n_seeds ** (1.0 / d))))
        axes = [(np.arange(per) + 0.5) / per] * d
        u = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    return box[:, 0] + (box[:, 1] - box[:, 0]) * u


def _near_returns(system, j, x0, config):
    """Polished local minima of ``|Phi_t(x0) - phi^j(x0)|`` inside the bracket."""
    T = config.tau_max * 1.02
    fl = integrate_flow(system, x0, T, rtol=1e-10)
    target = system.symmetry.apply(x0, j)
    nt = max(2000, 40 * fl.nsteps)
    ts = np.linspace(0.0, T, nt)
    xs = fl(ts)
    dist = np.linalg.norm(system.difference(xs, target), axis=1)
    scale = max(np.ptp(xs, axis=0).max(), 1e-12)
    thr = config.near_return * scale
    cands = []
    for i in range(1, nt - 1):
        if dist[i] <= dist[i - 1] and dist[i] < dist[i + 1] and dist[i] < thr \
                and config.tau_min * 0.98 <= ts[i] <= T:
            f = lambda t: float(np.linalg.norm(system.difference(fl(t), target)))
            r = minimize_scalar(f, bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                                options=dict(xatol=1e-12))
            cands.append((float(r.fun), float(r.x)))
    cands.sort()
    return cands[: config.candidates_per_seed]


def _sweep_one(system, j, x0, config):
    out = []
    try:
        cands = _near_returns(system, j, x0, config)
    except IntegrationError:
        return out, 1
    for _, t in cands:
        try:
            orb = newton_refine(system, config, (x0, t), j)
        except (ConvergenceError, RankDeficiencyError, IntegrationError):
            continue
        if config.tau_min * (1 - 1e-9) <= orb.tau <= config.tau_max * (1 + 1e-9):
            out.append(orb)
    return out, 0


def _sort_key(o):
    return (o.j, round(o.tau, 9), tuple(np.round(o.x0, 9)))


class SweepResult(list):
    """List of orbits with sweep statistics (discarded seeds, failures)."""

    def __init__(self, orbits=(), stats=None):
        super().__init__(orbits)
        self.stats = stats or {}


def seed_sweep(system, config: ShootingConfig) -> SweepResult:
    """Seeds on ``Sigma_k``, near-return candidates, Newton refinement.

    Ambient seeds (Sobol points in the box, a grid, or a user list) are
    projected onto the level set; seeds where ``|grad H|`` drops below
    ``grad_eps`` or the projection fails are discarded and counted.  Each
    surviving seed is flowed to ``tau_max`` once and the local minima of the
    twisted return distance in the bracket seed :func:`newton_refine`.

    Returns all converged orbits sorted by ``(j, tau, x0)``; an empty result
    is a valid outcome.
    """
    raw = _seed_points(system, config)
    seeds, discarded = [], 0
    for p in raw:
        q = project_to_level(system, p, config.energy, grad_eps=config.grad_eps)
        if q is None:
            discarded += 1
        else:
            seeds.append(q)
    j = config.j
    if config.n_jobs == 1:
        results = [_sweep_one(system, j, s, config) for s in seeds]
    else:
        results = Parallel(n_jobs=config.n_jobs)(delayed(_sweep_one)(system, j, s, config) for s in seeds)
    orbits = [o for r, _ in results for o in r]
    escaped = sum(e for _, e in results)
    orbits.sort(key=_sort_key)
    return SweepResult(orbits, dict(seeds=len(raw), projected=len(seeds), discarded=discarded,
                                    escaped=escaped, converged=len(orbits)))


# ------------------------------------------------------------ deduplication

def orbit_trace(system, orbit: TwistedOrbit, closed: bool = True):
    """Dense flow output over the closed loop (``L tau``) or one segment."""
    T = orbit.tau * (loop_order(system, orbit.j) if closed else 1)
    return integrate_flow(system, orbit.x0, T)


class _Trace:
    def __init__(self, system, orbit, per_segment):
        self.system = system
        self.flow = orbit_trace(system, orbit)
        self.period = self.flow.t[-1]
        n = max(per_segment * loop_order(system, orbit.j), 64)
        self.ts = np.linspace(0.0, self.period, n, endpoint=False)
        base = self.flow(self.ts)
        m = system.symmetry.order
        self.copies = np.array([system.symmetry.apply(base, i) for i in range(m)])
        pts = self.copies.reshape(-1, system.dim)
        self.tree, self.shift = _tree(system, pts)

    def query(self, pts):
        return self.tree.query(_wrap(self.system, pts, self.shift))

    def polish(self, point, flat_index):
        m_idx, t_idx = divmod(int(flat_index), self.ts.size)
        dt = self.period / self.ts.size
        t0 = self.ts[t_idx]
        sym = self.system.symmetry

        def f(t):
            return float(np.sum(self.system.difference(sym.apply(self.flow(t % self.period), m_idx), point) ** 2))

        r = minimize_scalar(f, bounds=(t0 - dt, t0 + dt), method="bounded", options=dict(xatol=1e-12))
        return np.sqrt(max(r.fun, 0.0))

    def points(self):
        return self.copies.reshape(-1, self.system.dim)


def _tree(system, pts):
    if not system.structure.is_torus:
        return cKDTree(pts), None
    n = system.dim // 2
    big = 1e6
    box = np.array([1.0] * n + [big] * n)
    return cKDTree(_wrap(system, pts, box), boxsize=box), box


def _wrap(system, pts, box):
    if box is None:
        return pts
    n = system.dim // 2
    out = np.array(pts, float, copy=True)
    out[..., :n] = np.mod(out[..., :n], 1.0)
    out[..., :n][out[..., :n] >= 1.0] = 0.0
    out[..., n:] += box[n:] / 2
    return out


def _directed(a: _Trace, b: _Trace, threshold):
    pts = a.points()
    d, idx = b.query(pts)
    if np.max(d) > 100 * threshold + 4 * (b.period / b.ts.size) * 10:
        return float(np.max(d))
    worst = 0.0
    for p, i, di in zip(pts, idx, d):
        if di <= threshold:
            continue
        di = b.polish(p, i)
        worst = max(worst, di)
        if worst > threshold:
            return worst
    return worst


def trace_distance(system, a: TwistedOrbit, b: TwistedOrbit, per_segment=200, threshold=1e-6):
    """Hausdorff distance between symmetry-saturated closed traces (polished)."""
    ta, tb = _Trace(system, a, per_segment), _Trace(system, b, per_segment)
    return max(_directed(ta, tb, threshold), _directed(tb, ta, threshold))


def deduplicate_orbits(orbits: List[TwistedOrbit], system, threshold: float = 1e-6,
                       per_segment: int = 200) -> List[TwistedOrbit]:
    """Geometric representatives modulo time shift, symmetry and iteration.

    Two orbits are identified when their closed traces, saturated by the
    symmetry group, are within ``threshold`` in Hausdorff distance.  The
    representative keeps the smallest ``tau``; identified orbits are listed in
    ``meta["iterates"]`` with their multiplicity ``p = tau / tau_rep``.
    """
    ordered = sorted(orbits, key=_sort_key)
    ordered.sort(key=lambda o: o.tau)
    reps, traces = [], []
    for o in ordered:
        to = _Trace(system, o, per_segment)
        hit = None
        for i, tr in enumerate(traces):
            if max(_directed(to, tr, threshold), _directed(tr, to, threshold)) <= threshold:
                hit = i
                break
        if hit is None:
            rep = replace(o, meta=dict(o.meta, iterates=[]))
            reps.append(rep)
            traces.append(to)
        else:
            rep = reps[hit]
            ratio = o.tau / rep.tau
            p = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-6 else float(ratio)
            rep.meta["iterates"].append(dict(tau=float(o.tau), j=int(o.j), p=p))
    reps.sort(key=_sort_key)
    return reps


# ------------------------------------------------------- magnetic closed form

def _psi_and_exp(J, tau):
    n = J.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = J
    blk[:n, n:] = np.eye(n)
    E = expm(tau * blk)
    return E[:n, :n], E[:n, n:]


def _null(A, tol=1e-9):
    if A.size == 0:
        return np.zeros((A.shape[1], 0))
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return Vt[rank:].T


def torus_closed_form(system, k: float, j: int = 0, tau_bracket=(0.1, 20.0), winding: int = 1,
                      anchors=None, verify: bool = True) -> List[TwistedOrbit]:
    """Solve the magnetic-torus twisted conditions algebraically.

    With ``q -> A q + s`` the base map of ``phi^j`` and ``B = A^{-T}`` its action
    on momenta, a twisted orbit satisfies

    * ``e^{tau J} p = B p``, solved on common eigenvectors of the commuting
      pair ``(J, B)`` and confirmed by the smallest singular value,
    * ``q + Psi(tau) p = A q + s + w`` with ``Psi(tau) = int_0^tau e^{sJ} ds``
      and an integer winding ``w`` enumerated in ``[-winding, winding]^n``,
    * ``|p|^2 = 2k``.

    Solution families are represented by the point closest to each anchor
    (default: ``q = 0``, ``p`` along the first kernel direction).  Momenta
    in ``ker J`` fixed by ``B`` give a continuous branch with
    ``tau = |P_U(s + w)| / sqrt(2k)``.
    """
    if k <= 0:
        raise ParameterError("energy must be positive")
    n = system.dim // 2
    J = np.array(system.structure.J_mag, float)
    sym = system.symmetry
    Lj, cj = sym.power(j)
    Aj, sj = Lj[:n, :n], cj[:n]
    B = Lj[n:, n:]
    lo, hi = tau_bracket
    # continuous directions: ker J intersected with the fixed space of B
    U = _null(np.vstack([J, B - np.eye(n)]))
    Q = _null(U.T) if U.shape[1] else np.eye(n)
    windings = [np.array(w, float) for w in np.ndindex(*([2 * winding + 1] * n))]
    windings = [w - winding for w in windings]
    orbits = []

    def sig(t):
        E, _ = _psi_and_exp(J, t)
        M = Q.T @ (E - B) @ Q
        return np.linalg.svd(M, compute_uv=False)[-1] if M.size else np.inf

    # J and B commute and are normal, so a generic combination diagonalizes
    # both; on a common eigenvector e^{tau J} v = B v reads e^{i tau b} = beta.
    taus = []
    if Q.shape[1]:
        _, V = np.linalg.eig(J + (np.sqrt(2) / 3) * B)
        for v in V.T:
            v = v / np.linalg.norm(v)
            b = float(np.imag(np.conj(v) @ J @ v))
            beta = complex(np.conj(v) @ B @ v)
            if abs(b) < 1e-12:
                continue
            base = np.angle(beta) / b
            period = 2 * np.pi / abs(b)
            lo_l = int(np.floor((lo - base) / period)) - 1
            for ell in range(lo_l, lo_l + int((hi - lo) / period) + 3):
                t = base + ell * period
                if lo <= t <= hi and sig(t) < 1e-9 and not any(abs(t - u) < 1e-12 for u in taus):
                    taus.append(float(t))
        taus.sort()
    anchors = None if anchors is None else np.atleast_2d(np.asarray(anchors, float))
    for tau in taus:
        E, Psi = _psi_and_exp(J, tau)
        K = Q @ _null(Q.T @ (E - B) @ Q, 1e-7)
        K = np.linalg.qr(np.hstack([K, U]))[0] if U.shape[1] else K
        d = K.shape[1]
        G = np.hstack([np.eye(n) - Aj, Psi @ K])
        N = _null(G)
        for w in windings:
            rhs = sj + w
            u_p = _affine_solve(G, rhs)
            if np.linalg.norm(G @ u_p - rhs) > 1e-10:
                continue
            for a in (anchors if anchors is not None else [None]):
                u = _closest_on_family(u_p, N, n, d, k, a, K)
                if u is None:
                    continue
                q0, p0 = u[:n], K @ u[n:]
                orbits.append(_closed_form_orbit(system, j, q0, p0, tau, k, w, "discrete"))
    # continuous ker J branch
    if U.shape[1]:
        PU = U @ U.T
        for w in windings:
            v = PU @ (sj + w)
            tau = np.linalg.norm(v) / np.sqrt(2 * k)
            if not (lo <= tau <= hi) or tau == 0:
                continue
            rest = sj + w - v
            q0 = _affine_solve(np.eye(n) - Aj, rest)
            if np.linalg.norm((np.eye(n) - Aj) @ q0 - rest) > 1e-10:
                continue
            orbits.append(_closed_form_orbit(system, j, q0, v / tau, tau, k, w, "kernel"))
    uniq = []
    for o in sorted(orbits, key=_sort_key):
        if not any(abs(o.tau - u.tau) < 1e-10 and np.linalg.norm(system.difference(o.x0, u.x0)) < 1e-10
                   for u in uniq):
            uniq.append(o)
    if verify:
        for o in uniq:
            o.residual = float(np.linalg.norm(twisted_residual(system, o.j, o.x0, o.tau, k)))
    return uniq


def _affine_solve(G, rhs, tol=1e-10):
    """Minimum-norm solution with an absolute singular-value cutoff."""
    U, s, Vt = np.linalg.svd(G, full_matrices=False)
    keep = s > tol * max(1.0, s[0] if s.size else 1.0)
    return Vt[keep].T @ ((U[:, keep].T @ rhs) / s[keep])


def _closest_on_family(u_p, N, n, d, k, anchor, K):
    """Point of ``u_p + N y`` with ``|c|^2 = 2k`` closest to the anchor."""
    R = np.sqrt(2 * k)
    if anchor is None:
        target = np.concatenate([np.zeros(n), np.eye(d)[0] * R]) if d else np.zeros(n)
    else:
        target = np.concatenate([anchor[:n], K.T @ anchor[n:]])
    if N.shape[1] == 0:
        c = u_p[n:]
        return u_p if abs(c @ c - 2 * k) < 1e-10 else None
    y0 = N.T @ (target - u_p)
    cons = dict(type="eq", fun=lambda y: (u_p + N @ y)[n:] @ (u_p + N @ y)[n:] - 2 * k)
    best = None
    for start in (y0, y0 + 0.1, -y0):
        r = minimize(lambda y: np.sum((u_p + N @ y - target) ** 2), start, constraints=[cons],
                     method="SLSQP", options=dict(ftol=1e-15, maxiter=200))
        u = u_p + N @ r.x
        if abs(u[n:] @ u[n:] - 2 * k) < 1e-11 and (best is None or r.fun < best[0]):
            best = (r.fun, u)
    if best is None:
        return None
    u = best[1]
    # exact rescale of c when the family allows it (c enters only through N)
    c = u[n:]
    u[n:] = c * R / np.linalg.norm(c)
    return u


def _closed_form_orbit(system, j, q0, p0, tau, k, w, branch):
    n = system.dim // 2
    q0 = np.mod(q0, 1.0)
    q0[np.isclose(q0, 1.0, atol=1e-15)] = 0.0
    x0 = np.concatenate([q0, p0])
    return TwistedOrbit(system.name, int(j), x0, float(tau), float(k), np.nan,
                        meta=dict(winding=[int(v) for v in w], branch=branch))


# ------------------------------------------------------------- continuation

@dataclass
class ContinuationResult:
    orbits: list
    status: str = "complete"
    message: str = ""
    location: Optional[dict] = None

    def __iter__(self):
        return iter(self.orbits)

    def __len__(self):
        return len(self.orbits)

    def __getitem__(self, i):
        return self.orbits[i]


def _cont_system(system, j, x, tau, k, rtol):
    mono = integrate_variational(system, x, tau, rtol=rtol)
    L, _ = system.symmetry.power(j)
    d = system.dim
    F = np.concatenate([system.difference(mono.final, system.symmetry.apply(x, j)), [system.H(x) - k]])
    A = np.zeros((d + 1, d + 2))
    A[:d, :d] = mono.matrix - L
    A[:d, d] = system.vector_field(mono.final)
    A[d, :d] = system.gradient(x)
    A[d, d + 1] = -1.0
    return F, A


def _tangent(A, prev, rank_tol=1e-8):
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > rank_tol * s[0]))
    Nb = Vt[rank:].T
    t = Nb @ (Nb.T @ prev)
    nt = np.linalg.norm(t)
    if nt < 1e-12:
        t = Nb[:, -1]
        nt = np.linalg.norm(t)
    t = t / nt
    return t if t @ prev >= 0 else -t


def continuation_in_energy(system, orbit: TwistedOrbit, k_target: float, steps: int,
                           *, rtol: float = 1e-12, tol: float = 1e-11, accept_tol: float = 1e-8,
                           max_iter: int = 12) -> ContinuationResult:
    """Pseudo-arclength continuation of ``(x0, tau)`` in the energy.

    The unknowns are ``(x, tau, k)``.  The tangent is the component of the
    previous tangent (initially ``e_k``) in the null space of the Jacobian,
    which picks a single curve inside Morse-Bott families.  The corrector adds
    the arclength condition and the phase condition ``X_H . dx = 0``.  A sign
    change of ``dk`` along the tangent is reported as a fold.
    """
    if steps <= 0 or k_target == orbit.energy:
        return ContinuationResult([orbit])
    wlo, whi = system.energy_window
    if not (wlo <= k_target <= whi):
        raise ParameterError(f"target energy {k_target} outside the window {system.energy_window}")
    d = system.dim
    j = orbit.j
    u = np.concatenate([orbit.x0, [orbit.tau, orbit.energy]])
    direction = np.sign(k_target - orbit.energy)
    prev = np.zeros(d + 2)
    prev[-1] = direction
    F, A = _cont_system(system, j, u[:d], u[d], u[d + 1], rtol)
    t = _tangent(A, prev)
    dk_total = abs(k_target - orbit.energy)
    ds = dk_total / steps / max(abs(t[-1]), 1e-3)
    family = [orbit]
    for step in range(steps):
        remaining = (k_target - u[-1]) * direction
        if remaining <= 1e-14:
            break
        h = ds
        if abs(t[-1]) > 1e-12 and h * abs(t[-1]) > remaining:
            h = remaining / abs(t[-1])
        last = step == steps - 1 or abs(h * t[-1] - remaining) < 1e-12
        for attempt in range(6):
            pred = u + h * t
            try:
                un = _correct(system, j, pred, t, u[:d], rtol, tol, max_iter,
                              fix_k=k_target if last else None)
                break
            except (ConvergenceError, IntegrationError) as exc:
                err = exc
                h *= 0.5
        else:
            return ContinuationResult(family, "failed", f"corrector failed: {err}",
                                      dict(step=step, k=float(u[-1]), tau=float(u[d])))
        F, A = _cont_system(system, j, un[:d], un[d], un[d + 1], rtol)
        tn = _tangent(A, t)
        res = float(np.linalg.norm(twisted_residual(system, j, un[:d], un[d], un[d + 1])))
        o = TwistedOrbit(system.name, j, un[:d].copy(), float(un[d]), float(un[d + 1]), res,
                         meta=dict(step=step + 1, dk=float(tn[-1])))
        if res > accept_tol:
            return ContinuationResult(family, "failed", f"residual {res:.2e} above tolerance",
                                      dict(step=step, k=float(un[-1]), tau=float(un[d])))
        family.append(o)
        if np.sign(tn[-1]) != np.sign(t[-1]) and abs(t[-1]) > 1e-12:
            return ContinuationResult(family, "fold", "dk changed sign along the tangent",
                                      dict(step=step + 1, k=float(un[-1]), tau=float(un[d])))
        u, t = un, tn
        if last:
            break
    return ContinuationResult(family)


def _correct(system, j, pred, t, x_ref, rtol, tol, max_iter, fix_k=None):
    d = system.dim
    u = pred.copy()
    if fix_k is not None:
        u[-1] = fix_k
    xi = system.vector_field(x_ref)
    for it in range(max_iter):
        F, A = _cont_system(system, j, u[:d], u[d], u[d + 1], rtol)
        extra_row = np.zeros(d + 2)
        extra_row[:d] = xi
        if fix_k is None:
            last_row, last_val = t, t @ (u - pred)
        else:
            last_row = np.zeros(d + 2)
            last_row[-1] = 1.0
            last_val = u[-1] - fix_k
        G = np.vstack([A, extra_row, last_row])
        R = np.concatenate([F, [xi @ (u[:d] - pred[:d]) if fix_k is None else xi @ (u[:d] - pred[:d])],
                            [last_val]])
        if np.linalg.norm(F) <= tol and abs(last_val) <= 1e-12:
            return u
        step, *_ = np.linalg.lstsq(G, -R, rcond=1e-10)
        u = u + step
        if u[d] <= 0:
            raise ConvergenceError("tau became nonpositive")
        if np.linalg.norm(step) < 1e-14 * max(1.0, np.linalg.norm(u)):
            F, _ = _cont_system(system, j, u[:d], u[d], u[d + 1], rtol)
            if np.linalg.norm(F) <= 1e3 * tol:
                return u
    F, _ = _cont_system(system, j, u[:d], u[d], u[d + 1], rtol)
    if np.linalg.norm(F) <= 10 * tol:
        return u
    raise ConvergenceError(f"corrector residual {np.linalg.norm(F):.2e}")
