"""Constructors for the concrete systems: star-shaped hypersurfaces, the
magnetic torus, Henon-Heiles and the regularized Hill lunar problem."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParameterError
from .geometry import (
    EXACT_STANDARD,
    MAGNETIC_COTANGENT,
    SymplecticStructure,
    SymplecticSystem,
    complex_rotation,
    cotangent_lift,
    finite_difference_gradient,
    identity_action,
    qp_planes,
    validate_system,
)


@dataclass
class CatalogEntry:
    system: Optional[SymplecticSystem]
    energy_window: tuple
    facts: list = field(default_factory=list)
    name: str = ""
    stub: bool = False

    @property
    def dimension(self):
        return None if self.system is None else self.system.dim

    @property
    def symmetry_order(self):
        return None if self.system is None else self.system.symmetry.order


# ---------------------------------------------------------------- star-shaped

def _star_hamiltonian(f, grad_f, hess_f):
    """``H(z) = |z|^2 / F(z)^2 - 1`` with ``F(z) = f(z/|z|)``.

    ``f`` and its ambient derivatives are evaluated at unit vectors; the chain
    rule through ``u = z/|z|`` is done here.  At the origin ``H = -1`` with
    zero gradient; the Hessian there (defined only for round ``f``) uses the
    direction ``e_1``.
    """

    def parts(z):
        rho = np.linalg.norm(z)
        u = z / rho
        fu, g, Hf = f(u), grad_f(u), hess_f(u)
        P = np.eye(z.size) - np.outer(u, u)
        gF = P @ g / rho
        gu = g @ u
        Hu = (-gu * np.eye(z.size) + 3 * gu * np.outer(u, u)
              - np.outer(u, g) - np.outer(g, u)) / rho**2
        HF = P @ Hf @ P / rho**2 + Hu
        return rho, fu, gF, HF

    def H(z):
        z = np.asarray(z, float)
        rho = np.linalg.norm(z)
        if rho == 0:
            return -1.0
        return rho**2 / f(z / rho) ** 2 - 1.0

    def grad(z):
        z = np.asarray(z, float)
        if not np.any(z):
            return np.zeros(z.size)
        rho, F, gF, _ = parts(z)
        return 2 * z / F**2 - 2 * rho**2 * gF / F**3

    def hess(z):
        z = np.asarray(z, float)
        if not np.any(z):
            e1 = np.zeros(z.size)
            e1[0] = 1.0
            return 2 * np.eye(z.size) / f(e1) ** 2
        rho, F, gF, HF = parts(z)
        s = rho**2
        return (2 * np.eye(z.size) / F**2
                - 2 * (np.outer(2 * z, gF) + np.outer(gF, 2 * z)) / F**3
                - 2 * s * HF / F**3 + 6 * s * np.outer(gF, gF) / F**4)

    return H, grad, hess


def make_star_shaped(n: int, f: Callable, m: int, exponents: Sequence[int],
                     grad_f: Optional[Callable] = None, hess_f: Optional[Callable] = None, *,
                     name="star-shaped", validate=True, rng=None, params=None) -> CatalogEntry:
    """Star-shaped hypersurface ``Sigma_f = {f(z) z : |z| = 1}`` in ``C^n``.

    The defining Hamiltonian ``H_f = |z|^2 / f(z/|z|)^2 - 1`` is 2-homogeneous,
    so ``Sigma_f = H_f^{-1}(0)`` and ``lambda(X_{H_f}) = 1`` on it.

    Parameters
    ----------
    f : callable
        Positive radial function on the unit sphere.
    m, exponents : int, sequence of int
        Rotation ``z_j -> exp(2 pi i k_j / m) z_j``; ``f`` must be invariant.
    grad_f, hess_f : callables, optional
        Ambient gradient and Hessian of ``f`` (as a function on ``R^{2n}``),
        evaluated at unit vectors.  Central differences are used when omitted.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    if m < 1:
        raise ParameterError("rotation order must be positive")
    dim = 2 * n
    if grad_f is None:
        def grad_f(u):
            return finite_difference_gradient(f, u, 1e-5)
    if hess_f is None:
        def hess_f(u, h=1e-5):
            return np.array([(grad_f(u + h * e) - grad_f(u - h * e)) / (2 * h) for e in np.eye(dim)])
    sym = identity_action(dim) if m == 1 else complex_rotation(dim, m, exponents)
    rng = np.random.default_rng(2024) if rng is None else rng
    u = rng.normal(size=(200, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    fu = np.array([f(p) for p in u])
    if np.min(fu) <= 0:
        raise ParameterError("f must be positive on the unit sphere")
    fphi = np.array([f(p) for p in sym.apply(u)])
    if np.max(np.abs(fphi - fu)) > 1e-10:
        raise ParameterError("f is not invariant under the rotation")
    H, grad, hess = _star_hamiltonian(f, grad_f, hess_f)
    R = float(np.max(fu)) * 1.6
    system = SymplecticSystem(
        name=name,
        structure=SymplecticStructure(dim, EXACT_STANDARD),
        hamiltonian=H, gradient=grad, hessian=hess, symmetry=sym,
        energy_window=(-0.5, 1.0), default_energy=0.0,
        box=np.tile([-R, R], (dim, 1)), escape_radius=50 * R,
        params=dict(params or {}),
    )
    if validate:
        validate_system(system)
    facts = [("contact-type", "lambda(X_H) = 1 on H^{-1}(0)"),
             ("reeb-equals-hamiltonian", "X_{H_f} is the Reeb field on Sigma_f")]
    return CatalogEntry(system, (-0.5, 1.0), facts, name=name)


def make_sphere(n: int = 2, r: float = 1.0, m: int = 1, exponents=None, validate=True) -> CatalogEntry:
    """Round sphere of radius ``r``: ``H = |z|^2 / r^2 - 1``; Reeb periods ``pi r^2 Z``."""
    exponents = [1] * n if exponents is None else exponents
    dim = 2 * n
    if r <= 0:
        raise ParameterError("radius must be positive")
    return make_star_shaped(
        n, lambda u: r, m, exponents, lambda u: np.zeros(dim), lambda u: np.zeros((dim, dim)),
        validate=validate,
        params=dict(shape="sphere", n=n, radius=r, m=m, exponents=list(exponents)))


def make_ellipsoid(axes: Sequence[float], m: int = 1, exponents=None, validate=True) -> CatalogEntry:
    """Ellipsoid ``sum |z_j|^2 / a_j^2 = 1`` as a star-shaped surface."""
    a = np.asarray(axes, float)
    n = a.size
    w = np.concatenate([1 / a**2, 1 / a**2])
    W = np.diag(w)
    exponents = [1] * n if exponents is None else exponents

    def f(u):
        return (u @ W @ u) ** -0.5

    def grad_f(u):
        return -((u @ W @ u) ** -1.5) * (W @ u)

    def hess_f(u):
        s = u @ W @ u
        Wu = W @ u
        return 3 * s**-2.5 * np.outer(Wu, Wu) - s**-1.5 * W

    return make_star_shaped(n, f, m, exponents, grad_f, hess_f, validate=validate,
                            params=dict(shape="ellipsoid", axes=a.tolist(), m=m,
                                        exponents=list(exponents)))


def make_bumpy_sphere(n: int = 2, r: float = 1.0, epsilon: float = 0.05, m: int = 2,
                      exponents=None, validate=True) -> CatalogEntry:
    """Radial function ``f(u) = r (1 + eps Re(u_1^m))``, invariant under the rotation."""
    if not abs(epsilon) < 0.5:
        raise ParameterError("|epsilon| must stay below 1/2 to keep f positive")
    exponents = [1] * n if exponents is None else exponents
    dim = 2 * n

    def f(u):
        z = complex(u[0], u[n])
        return r * (1 + epsilon * (z**m).real)

    def grad_f(u):
        z = complex(u[0], u[n])
        d = m * z ** (m - 1)
        g = np.zeros(dim)
        g[0], g[n] = d.real, -d.imag
        return r * epsilon * g

    def hess_f(u):
        z = complex(u[0], u[n])
        d2 = m * (m - 1) * z ** (m - 2) if m >= 2 else 0j
        Hm = np.zeros((dim, dim))
        Hm[0, 0], Hm[0, n], Hm[n, 0], Hm[n, n] = d2.real, -d2.imag, -d2.imag, -d2.real
        return r * epsilon * Hm

    return make_star_shaped(n, f, m, exponents, grad_f, hess_f, validate=validate,
                            params=dict(shape="bumpy", n=n, radius=r, epsilon=epsilon,
                                        m=m, exponents=list(exponents)))


# ------------------------------------------------------------- magnetic torus

def make_magnetic_torus(n: int, J_mag, isometry=None, shift=None, energy: float = 0.5,
                        validate=True) -> CatalogEntry:
    """Magnetic cotangent bundle of the flat torus with ``H = |p|^2 / 2``.

    The stabilizing form evaluates ``pr_perp(p) . dq + 1/2 <pr_par p, A pr_par dp>``
    with ``A = (J|_{im J})^{-1}``.
    """
    if n < 2:
        raise ParameterError("the magnetic torus needs n >= 2")
    J = np.array(J_mag, dtype=float)
    if J.shape != (n, n):
        raise ParameterError(f"J_mag must be {n}x{n}")
    if np.max(np.abs(J + J.T)) > 1e-14:
        raise ParameterError("J_mag must be antisymmetric")
    if not np.any(J):
        raise ParameterError("J_mag must be nonzero")
    if energy <= 0:
        raise ParameterError("energy must be positive")
    A_iso = np.eye(n) if isometry is None else np.array(isometry, float)
    sym = cotangent_lift(A_iso, shift, J_mag=J)
    structure = SymplecticStructure(2 * n, MAGNETIC_COTANGENT, J)

    # orthogonal splitting R^n = ker J + im J
    U, s, Vt = np.linalg.svd(J)
    rank = int(np.sum(s > 1e-12 * s[0]))
    im_basis = U[:, :rank]
    P_par = im_basis @ im_basis.T
    P_perp = np.eye(n) - P_par
    # A = (J|_{im J})^{-1}, extended by zero on ker J
    A = np.linalg.pinv(J)

    def H(x):
        p = x[n:]
        return 0.5 * float(p @ p)

    def grad(x):
        g = np.zeros(2 * n)
        g[n:] = x[n:]
        return g

    hess_const = np.zeros((2 * n, 2 * n))
    hess_const[n:, n:] = np.eye(n)

    def hess(x):
        return hess_const.copy()

    def stabilizing(x, v):
        p = x[n:]
        return float((P_perp @ p) @ v[:n] + 0.5 * (P_par @ p) @ (A @ (P_par @ v[n:])))

    R = np.sqrt(2 * energy)
    box = np.array([[0.0, 1.0]] * n + [[-1.5 * R, 1.5 * R]] * n)
    system = SymplecticSystem(
        name="magnetic-torus", structure=structure, hamiltonian=H, gradient=grad,
        hessian=hess, symmetry=sym, energy_window=(0.0, np.inf), default_energy=energy,
        stabilizing_form=stabilizing, potential=lambda q: 0.0,
        potential_gradient=lambda q: np.zeros(n), box=box,
        params=dict(n=n, J_mag=J.tolist(), isometry=A_iso.tolist(),
                    shift=None if shift is None else list(np.asarray(shift, float)),
                    energy=energy, ker_dim=n - rank),
    )
    system.projections = (P_par, P_perp, A)
    if validate:
        validate_system(system)
    facts = [("displaceable", "Sigma_k is a displaceable stable hypersurface for k > 0"),
             ("e0", "e0(H) = 0")]
    return CatalogEntry(system, (0.0, np.inf), facts, name="magnetic-torus")


def make_mechanical_torus(n: int, potential, potential_gradient, potential_hessian=None,
                          J_mag=None, validate=True) -> CatalogEntry:
    """``H = |p|^2 / 2 + V(q)`` on ``T*T^n`` (optionally magnetic); used for ``e0``."""
    J = np.zeros((n, n)) if J_mag is None else np.array(J_mag, float)
    structure = SymplecticStructure(2 * n, MAGNETIC_COTANGENT, J)
    if potential_hessian is None:
        def potential_hessian(q, h=1e-5):
            return np.array([(potential_gradient(q + h * e) - potential_gradient(q - h * e)) / (2 * h)
                             for e in np.eye(n)])

    def H(x):
        p = x[n:]
        return 0.5 * float(p @ p) + float(potential(x[:n]))

    def grad(x):
        return np.concatenate([potential_gradient(x[:n]), x[n:]])

    def hess(x):
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = potential_hessian(x[:n])
        out[n:, n:] = np.eye(n)
        return out

    system = SymplecticSystem(
        name="mechanical-torus", structure=structure, hamiltonian=H, gradient=grad,
        hessian=hess, symmetry=identity_action(2 * n, torus=True),
        potential=potential, potential_gradient=potential_gradient,
        box=np.array([[0.0, 1.0]] * n + [[-2.0, 2.0]] * n), params=dict(n=n))
    if validate and potential_hessian is not None:
        validate_system(system)
    return CatalogEntry(system, (-np.inf, np.inf), [], name="mechanical-torus")


# ---------------------------------------------------------- Henon-Heiles / Hill

def make_henon_heiles(validate=True) -> CatalogEntry:
    """Henon-Heiles on ``R^4 = (q1, q2, p1, p2)`` with the Z_3 rotation of ``(z, w)``."""

    def H(x):
        q1, q2, p1, p2 = x
        return 0.5 * (p1 * p1 + p2 * p2 + q1 * q1 + q2 * q2) + q1 * q1 * q2 - q2**3 / 3.0

    def grad(x):
        q1, q2, p1, p2 = x
        return np.array([q1 + 2 * q1 * q2, q2 + q1 * q1 - q2 * q2, p1, p2])

    def hess(x):
        q1, q2, _, _ = x
        out = np.zeros((4, 4))
        out[0, 0] = 1 + 2 * q2
        out[0, 1] = out[1, 0] = 2 * q1
        out[1, 1] = 1 - 2 * q2
        out[2, 2] = out[3, 3] = 1.0
        return out

    system = SymplecticSystem(
        name="henon-heiles", structure=SymplecticStructure(4), hamiltonian=H,
        gradient=grad, hessian=hess, symmetry=complex_rotation(4, 3, [1, 1], qp_planes()),
        energy_window=(0.0, 1.0 / 6.0), default_energy=0.125,
        box=np.array([[-0.6, 0.6]] * 2 + [[-0.6, 0.6]] * 2), escape_radius=4.0,
        params={})
    if validate:
        validate_system(system)
    facts = [("convex-component", "0 < k < 1/6: strictly convex sphere-like component"),
             ("symmetric-orbits", "at least two Z_3-symmetric periodic orbits")]
    return CatalogEntry(system, (0.0, 1.0 / 6.0), facts, name="henon-heiles")


def make_hill_lunar_regularized(energy: float = 0.01, validate=True) -> CatalogEntry:
    """Levi-Civita regularized Hill lunar Hamiltonian with the Z_4 rotation.

    The admissible window "k > 0 sufficiently small" is not quantified; the
    default level ``k = 0.01`` is a configurable default, not a verified bound.
    """
    if energy <= 0:
        raise ParameterError("energy must be positive")

    def H(x):
        q1, q2, p1, p2 = x
        r2 = q1 * q1 + q2 * q2
        return (0.5 * (p1 * p1 + p2 * p2 + r2) + 2 * r2 * (q2 * p1 - q1 * p2)
                - 4 * (q1**6 - 3 * q1**4 * q2**2 - 3 * q1**2 * q2**4 + q2**6))

    def grad(x):
        q1, q2, p1, p2 = x
        r2 = q1 * q1 + q2 * q2
        L = q2 * p1 - q1 * p2
        return np.array([
            q1 + 4 * q1 * L - 2 * r2 * p2 - 4 * (6 * q1**5 - 12 * q1**3 * q2**2 - 6 * q1 * q2**4),
            q2 + 4 * q2 * L + 2 * r2 * p1 - 4 * (-6 * q1**4 * q2 - 12 * q1**2 * q2**3 + 6 * q2**5),
            p1 + 2 * r2 * q2,
            p2 - 2 * r2 * q1,
        ])

    def hess(x):
        q1, q2, p1, p2 = x
        r2 = q1 * q1 + q2 * q2
        L = q2 * p1 - q1 * p2
        h = np.zeros((4, 4))
        h[0, 0] = 1 + 4 * L - 4 * q1 * p2 - 4 * q1 * p2 - 4 * (30 * q1**4 - 36 * q1**2 * q2**2 - 6 * q2**4)
        h[0, 1] = 4 * q1 * p1 - 4 * q2 * p2 - 4 * (-24 * q1**3 * q2 - 24 * q1 * q2**3)
        h[1, 1] = 1 + 4 * L + 4 * q2 * p1 + 4 * q2 * p1 - 4 * (-6 * q1**4 - 36 * q1**2 * q2**2 + 30 * q2**4)
        h[1, 0] = h[0, 1]
        h[0, 2] = 4 * q1 * q2
        h[0, 3] = -4 * q1 * q1 - 2 * r2
        h[1, 2] = 4 * q2 * q2 + 2 * r2
        h[1, 3] = -4 * q1 * q2
        h[2, 0], h[3, 0], h[2, 1], h[3, 1] = h[0, 2], h[0, 3], h[1, 2], h[1, 3]
        h[2, 2] = h[3, 3] = 1.0
        return h

    system = SymplecticSystem(
        name="hill-lunar", structure=SymplecticStructure(4), hamiltonian=H, gradient=grad,
        hessian=hess, symmetry=complex_rotation(4, 4, [1, 1], qp_planes()),
        energy_window=(0.0, energy * 5), default_energy=energy,
        box=np.array([[-0.3, 0.3]] * 4), escape_radius=2.0, params=dict(energy=energy))
    if validate:
        validate_system(system, box=np.array([[-0.5, 0.5]] * 4))
    facts = [("two-orbits", "small k: at least two periodic orbits"),
             ("convex-component", "small k: strictly convex sphere-like component")]
    return CatalogEntry(system, (0.0, energy * 5), facts, name="hill-lunar")


def make_stark_zeeman_stub() -> CatalogEntry:
    """Named placeholder; no Hamiltonian is provided for Stark-Zeeman systems."""
    return CatalogEntry(None, (np.nan, np.nan),
                        [("regularized-level", "below the first critical value: S*S^n; n=2 gives RP^3")],
                        name="stark-zeeman", stub=True)


def _catalog_rows():
    rows = []
    entries = [
        ("henon-heiles", make_henon_heiles(validate=False)),
        ("hill-lunar", make_hill_lunar_regularized(validate=False)),
        ("magnetic-torus", make_magnetic_torus(2, [[0, -1], [1, 0]], validate=False)),
        ("star-shaped", make_sphere(2, 1.0, 2, [1, 1], validate=False)),
        ("stark-zeeman", make_stark_zeeman_stub()),
    ]
    for name, e in entries:
        rows.append(dict(name=name, dimension=e.dimension, symmetry_order=e.symmetry_order,
                         energy_window=tuple(e.energy_window), stub=e.stub,
                         facts=[tag for tag, _ in e.facts]))
    return rows


def list_systems(filter: str = "") -> list:
    """Catalog rows (name, dimension, symmetry order, energy window, fact tags)."""
    return [r for r in _catalog_rows() if filter.lower() in r["name"]]


_SYSTEM_PARAMS = {
    "henon-heiles": set(),
    "hill-lunar": {"energy"},
    "magnetic-torus": {"n", "J_mag", "isometry", "shift", "energy"},
    "star-shaped": {"shape", "m", "exponents", "n", "radius", "axes", "epsilon"},
    "stark-zeeman": set(),
}


def build_system(name: str, **params) -> SymplecticSystem:
    """Construct a catalog system from a name and plain parameters (config/records).

    Unknown parameter names raise :class:`ParameterError`.
    """
    allowed = _SYSTEM_PARAMS.get(name)
    if allowed is not None:
        extra = sorted(set(params) - allowed)
        if extra:
            raise ParameterError(f"unknown parameter {extra[0]!r} for system {name!r}")
    if name == "henon-heiles":
        return make_henon_heiles(validate=False).system
    if name == "hill-lunar":
        return make_hill_lunar_regularized(params.get("energy", 0.01), validate=False).system
    if name == "magnetic-torus":
        return make_magnetic_torus(params.get("n", 2), params.get("J_mag", [[0, -1], [1, 0]]),
                                   params.get("isometry"), params.get("shift"),
                                   params.get("energy", 0.5), validate=False).system
    if name == "star-shaped":
        shape = params.get("shape", "sphere")
        m = params.get("m", 1)
        exps = params.get("exponents")
        if shape == "sphere":
            return make_sphere(params.get("n", 2), params.get("radius", 1.0), m, exps,
                               validate=False).system
        if shape == "ellipsoid":
            return make_ellipsoid(params["axes"], m, exps, validate=False).system
        if shape == "bumpy":
            return make_bumpy_sphere(params.get("n", 2), params.get("radius", 1.0),
                                     params.get("epsilon", 0.05), m, exps, validate=False).system
        raise ParameterError(f"unknown star-shaped shape {shape!r}")
    if name == "stark-zeeman":
        raise ParameterError("stark-zeeman is a catalog stub without a Hamiltonian")
    raise ParameterError(f"unknown system {name!r}")
