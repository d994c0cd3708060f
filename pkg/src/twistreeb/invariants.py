"""Actions, Reeb time, Floquet data, contractibility classes, the e0
threshold and forcing-inequality checks for twisted orbits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import minimize

from .errors import (ConditioningError, ContractibilityError, InvalidStabilizationError,
                     UnsupportedStructureError)
from .flow import integrate_flow, integrate_variational
from .orbits import TwistedOrbit, loop_order, trace_distance


def _integral_along(system, x0, T, density, rtol=1e-12, atol=1e-14):
    """``int_0^T density(x(t)) dt`` integrated jointly with the flow."""
    d = system.dim

    def fun(t, y):
        x = y[:d]
        return np.concatenate([system.vector_field(x), [density(x)]])

    if T == 0:
        return 0.0, np.asarray(x0, float)
    solver = DOP853(fun, 0.0, np.concatenate([x0, [0.0]]), T, rtol=rtol, atol=atol)
    while solver.status == "running":
        solver.step()
    if solver.status == "failed":
        raise RuntimeError("quadrature along the flow failed")
    return float(solver.y[d]), solver.y[:d]


def orbit_action(orbit: TwistedOrbit, system) -> float:
    """``(1/L) int v*lambda`` over the closed ``L``-fold loop, ``L = ord(phi^j)``.

    Equals the disc area of the filling by exactness; on star-shaped systems
    it equals ``tau`` (``lambda(X_H) = 1`` on ``Sigma``).  Torus loops must
    close in the universal cover.
    """
    L = loop_order(system, orbit.j)
    x0 = np.asarray(orbit.x0, float)
    K = system.structure.primitive_matrix
    val, end = _integral_along(system, x0, L * orbit.tau, lambda x: float(x @ K @ system.vector_field(x)))
    if system.structure.is_torus:
        n = system.dim // 2
        wind = np.round(end[:n] - x0[:n])
        if np.any(wind != 0):
            raise ContractibilityError(f"closed loop winds {wind.astype(int).tolist()} around the torus")
    return val / L


def reeb_time(orbit: TwistedOrbit, system, samples: int = 256) -> float:
    """``int_0^tau lambda(X_H(x(t))) dt`` with the stabilizing form."""
    x0 = np.asarray(orbit.x0, float)
    if np.linalg.norm(system.vector_field(x0)) == 0:
        return 0.0
    dens = lambda x: system.stabilizing(x, system.vector_field(x))
    fl = integrate_flow(system, x0, orbit.tau)
    _, xs = fl.sample(samples)
    vals = np.array([dens(x) for x in xs])
    if np.min(vals) <= 0:
        raise InvalidStabilizationError(f"lambda(X_H) = {np.min(vals):.3e} <= 0 on the orbit")
    return _integral_along(system, x0, orbit.tau, dens)[0]


@dataclass
class FloquetResult:
    multipliers: np.ndarray
    kernel_dim: int
    nondegenerate: bool
    monodromy_eigenvalues: np.ndarray
    defect: float
    condition: float
    singular_values: np.ndarray = field(repr=False, default=None)

    def eigenvalue_one_multiplicity(self, tol: float = 1e-4) -> int:
        return int(np.sum(np.abs(self.monodromy_eigenvalues - 1.0) < tol))

    def to_dict(self):
        return dict(multipliers=[[float(z.real), float(z.imag)] for z in self.multipliers],
                    kernel_dim=self.kernel_dim, nondegenerate=self.nondegenerate,
                    monodromy_eigenvalues=[[float(z.real), float(z.imag)] for z in self.monodromy_eigenvalues],
                    defect=self.defect, condition=self.condition)


def contact_basis(system, x):
    """Orthonormal basis of ``xi = {v : omega(X_H, v) = omega(grad H, v) = 0}``."""
    Om = system.structure.omega
    X = system.vector_field(x)
    g = system.gradient(x)
    C = np.vstack([X @ Om, g @ Om])
    _, _, Vt = np.linalg.svd(C)
    return Vt[2:].T


def floquet_analysis(orbit: TwistedOrbit, system, kernel_tol: float = 1e-6,
                     max_condition: float = 1e8) -> FloquetResult:
    """Twisted return map ``D(phi^{-j} o Phi_tau)`` restricted to ``xi``.

    The restriction uses the symplectic projection onto ``xi`` along
    ``span{X_H, grad H}``: ``P_xi = (B^T Omega B)^{-1} B^T Omega P B``.  The
    kernel of ``P_xi - I`` is counted from singular values below
    ``kernel_tol``; ``monodromy_eigenvalues`` are those of the full twisted
    map.
    """
    x0 = np.asarray(orbit.x0, float)
    mono = integrate_variational(system, x0, orbit.tau)
    Linv, _ = system.symmetry.power(-orbit.j)
    P = Linv @ mono.matrix
    B = contact_basis(system, x0)
    Om = system.structure.omega
    G = B.T @ Om @ B
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > max_condition:
        raise ConditioningError(f"contact basis is ill-conditioned (cond {cond:.3e})", cond)
    P_xi = np.linalg.solve(G, B.T @ Om @ P @ B)
    sv = np.linalg.svd(P_xi - np.eye(P_xi.shape[0]), compute_uv=False)
    kdim = int(np.sum(sv < kernel_tol))
    res = FloquetResult(np.linalg.eigvals(P_xi), kdim, kdim == 0, np.linalg.eigvals(P),
                        mono.defect, cond, sv)
    orbit.floquet = res.to_dict()
    return res


def contractibility_class(orbit: TwistedOrbit, system=None, m: Optional[int] = None) -> int:
    """Residue ``j mod m``; nonzero means noncontractible in ``Sigma / Z_m``."""
    m = system.symmetry.order if m is None else m
    return int(orbit.j) % int(m)


def iterate_orbit(orbit: TwistedOrbit, p: int, system) -> TwistedOrbit:
    """The ``p``-fold twisted iterate: period ``p tau`` and exponent ``p j mod m``."""
    m = system.symmetry.order
    return TwistedOrbit(orbit.system_name, (p * orbit.j) % m, np.array(orbit.x0), p * orbit.tau,
                        orbit.energy, orbit.residual, meta=dict(iterate_of=float(orbit.tau), p=p))


def e0_threshold(system, grid: int = 64, starts: int = 8) -> float:
    """``max V`` over the base torus: the lowest energy whose level projects onto it."""
    if not system.structure.is_torus or system.potential is None:
        raise UnsupportedStructureError("e0 needs a kinetic-plus-potential system on a cotangent bundle")
    n = system.dim // 2
    V = system.potential
    dV = system.potential_gradient
    per = max(4, int(round(grid ** (2.0 / n)))) if n > 2 else grid
    axes = [np.linspace(0, 1, per, endpoint=False)] * n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    vals = np.array([float(V(q)) for q in pts])
    best = float(np.max(vals))
    for i in np.argsort(-vals)[:starts]:
        r = minimize(lambda q: -float(V(q)), pts[i], jac=lambda q: -np.asarray(dV(q), float),
                     method="L-BFGS-B")
        best = max(best, -float(r.fun))
    return best


# ----------------------------------------------------------------- forcing

@dataclass
class ForcingReport:
    verdict: str
    base_tau: float
    tau: Optional[float] = None
    gap: Optional[float] = None
    base_action: Optional[float] = None
    action: Optional[float] = None
    action_gap: Optional[float] = None
    e_upper: Optional[float] = None
    order: int = 1
    p: Optional[int] = None
    case: Optional[int] = None
    checks: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in self.__dict__.items()}


def forcing_check(orbits: List[TwistedOrbit], base: TwistedOrbit, certificate, system,
                  *, action_tol: float = 1e-6, trace_tol: float = 1e-6) -> ForcingReport:
    """Compare the nearest orbit above the base with the displacement bound.

    Only orbits in the base's twisted loop space (same exponent ``j`` mod
    ``m``) are candidates.
    The base's critical component is approximated as follows: if the base is
    transversally degenerate, every orbit with the same action counts as part
    of it (Morse-Bott families); otherwise only orbits with the same trace.
    Among the remaining orbits with larger action, the smallest one is tested
    against ``action gap <= ord(phi) e_upper`` and, on star-shaped systems,
    ``tau - tau_0 <= e_upper``.  If it is a ``p``-fold iterate of the base the
    case-2 bound ``tau_0 <= e_upper / (p - 1)`` is checked instead.
    """
    m = system.symmetry.order
    e_upper = float(certificate.e_upper)
    if not certificate.valid:
        return ForcingReport("inconclusive", float(base.tau), e_upper=e_upper, order=m,
                             message="displacement certificate is not valid")
    a0 = base.action if base.action is not None else orbit_action(base, system)
    try:
        degenerate = not floquet_analysis(base, system).nondegenerate
    except ConditioningError:
        degenerate = True
    star = system.name == "star-shaped"
    cands = []
    for o in orbits:
        if (o.j - base.j) % m:
            continue
        a = o.action if o.action is not None else orbit_action(o, system)
        if a <= a0 + action_tol:
            continue
        cands.append((a, o))
    if not degenerate:
        cands = [(a, o) for a, o in cands
                 if not (abs(o.tau - base.tau) < 1e-8 and trace_distance(system, o, base) <= trace_tol)]
    if not cands:
        return ForcingReport("inconclusive", float(base.tau), base_action=float(a0), e_upper=e_upper,
                             order=m, message="no orbit above the base in the list")
    cands.sort(key=lambda c: (c[0], c[1].tau))
    a, o = cands[0]
    gap = float(o.tau - base.tau)
    agap = float(a - a0)
    checks = dict(action_gap=bool(agap <= m * e_upper))
    if star:
        checks["period_gap"] = bool(0 < gap <= e_upper)
    ratio = o.tau / base.tau
    p = int(round(ratio))
    iterate = (p >= 2 and abs(ratio - p) < 1e-6
               and trace_distance(system, o, base) <= trace_tol)
    rep = ForcingReport("", float(base.tau), float(o.tau), gap, float(a0), float(a), agap, e_upper, m,
                        checks=checks)
    if iterate:
        rep.p, rep.case = p, 2
        checks["case2_bound"] = bool(base.tau <= e_upper / (p - 1))
        ok = checks["case2_bound"] and checks["action_gap"]
        rep.verdict = "iterate" if ok else "inequality-violated"
    else:
        rep.case = 1
        ok = all(checks.values())
        rep.verdict = "distinct-orbits" if ok else "inequality-violated"
    if rep.verdict == "inequality-violated":
        rep.message = "bound failed: either an orbit was missed or the certificate is too weak"
    return rep
