"""Symplectic structures, Hamiltonian vector fields and finite-order symmetries.

Points and tangent vectors are flat real arrays of length ``2n``.  On
``R^{2n} = C^n`` the storage order is ``(x_1..x_n, y_1..y_n)`` with
``z_j = x_j + i y_j``; on ``T*T^n`` it is ``(q_1..q_n, p_1..p_n)``.

Conventions (shared by every module):

* primitive ``lambda = 1/2 sum(y dx - x dy)``, ``omega = d lambda = dy ^ dx``,
  so ``omega(u, v) = u^T Omega v`` with ``Omega = [[0, -I], [I, 0]]``;
* ``i_{X_H} omega = -dH``, giving ``xdot = dH/dy``, ``ydot = -dH/dx``.

With these choices the flow of ``H = |z|^2 / r^2`` is ``z -> exp(-2it/r^2) z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, ParameterError, UnsupportedStructureError

EXACT_STANDARD = "exact-standard"
MAGNETIC_COTANGENT = "magnetic-cotangent"


def _check_dim(vec, dim, what="vector"):
    arr = np.asarray(vec, dtype=float)
    if arr.shape[-1:] != (dim,):
        raise InputError(f"{what} has shape {arr.shape}, expected trailing dimension {dim}")
    return arr


class SymplecticStructure:
    """Constant-coefficient exact symplectic form on ``R^{2n}`` or ``T*T^n``.

    Parameters
    ----------
    dim : int
        Phase-space dimension ``2n``.
    kind : {"exact-standard", "magnetic-cotangent"}
    J_mag : (n, n) array, optional
        Antisymmetric magnetic matrix; required for the magnetic kind.
        ``J_mag = 0`` gives the canonical cotangent structure.
    """

    def __init__(self, dim: int, kind: str = EXACT_STANDARD, J_mag=None):
        if dim <= 0 or dim % 2:
            raise InputError(f"phase-space dimension must be even and positive, got {dim}")
        n = dim // 2
        self.dim = dim
        self.n = n
        self.kind = kind
        I = np.eye(n)
        Z = np.zeros((n, n))
        if kind == EXACT_STANDARD:
            self.J_mag = None
            omega = np.block([[Z, -I], [I, Z]])
            # lambda_x(v) = x^T K v
            K = 0.5 * omega
        elif kind == MAGNETIC_COTANGENT:
            if J_mag is None:
                raise InputError("magnetic-cotangent structure needs J_mag")
            J_mag = np.array(J_mag, dtype=float)
            if J_mag.shape != (n, n):
                raise InputError(f"J_mag has shape {J_mag.shape}, expected {(n, n)}")
            if np.max(np.abs(J_mag + J_mag.T), initial=0.0) > 1e-14:
                raise ParameterError("J_mag must be antisymmetric")
            J_mag.setflags(write=False)
            self.J_mag = J_mag
            omega = np.block([[J_mag, -I], [I, Z]])
            K = np.block([[0.5 * J_mag, Z], [I, Z]])
        else:
            raise InputError(f"unknown structure kind {kind!r}")
        self.omega = omega
        self.omega_inv = np.linalg.inv(omega)
        self.primitive_matrix = K
        # omega-compatible complex structure: omega(J u, v) = u^T g v, g > 0.
        # J = Omega (Omega^T Omega)^{-1/2}; reduces to Omega in the standard case.
        w, V = np.linalg.eigh(omega.T @ omega)
        inv_sqrt = (V / np.sqrt(w)) @ V.T
        self.complex_structure = omega @ inv_sqrt
        self.metric = (V * np.sqrt(w)) @ V.T
        for arr in (self.omega, self.omega_inv, self.primitive_matrix,
                    self.complex_structure, self.metric):
            arr.setflags(write=False)

    @property
    def is_torus(self) -> bool:
        return self.kind == MAGNETIC_COTANGENT

    def difference(self, a, b):
        """``a - b`` with torus coordinates compared through the nearest integer lift."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.is_torus:
            d = d.copy()
            d[..., : self.n] -= np.round(d[..., : self.n])
        return d

    def __repr__(self):
        return f"SymplecticStructure(dim={self.dim}, kind={self.kind!r})"


def omega_eval(structure: SymplecticStructure, x, u, v) -> float:
    """Evaluate ``omega_x(u, v)``; the forms used here have constant coefficients."""
    _check_dim(x, structure.dim, "point")
    u = _check_dim(u, structure.dim, "u")
    v = _check_dim(v, structure.dim, "v")
    return float(u @ structure.omega @ v)


def primitive_eval(structure: SymplecticStructure, x, v) -> float:
    """Evaluate the primitive one-form ``lambda_x(v)`` with ``d lambda = omega``."""
    x = _check_dim(x, structure.dim, "point")
    v = _check_dim(v, structure.dim, "v")
    return float(x @ structure.primitive_matrix @ v)


def liouville_field_eval(x, structure: Optional[SymplecticStructure] = None):
    """Radial Liouville field ``X = x / 2`` on ``R^{2n}``; ``i_X omega = lambda``."""
    if structure is not None and structure.kind != EXACT_STANDARD:
        raise UnsupportedStructureError("the radial Liouville field lives on R^{2n} only")
    x = np.asarray(x, dtype=float)
    if structure is not None:
        _check_dim(x, structure.dim, "point")
    return 0.5 * x


class SymmetryAction:
    """Finite-order affine symplectic map ``x -> L x + c``.

    Built through :func:`complex_rotation`, :func:`cotangent_lift` or
    :func:`identity_action`.  For cotangent lifts the shift acts on the torus
    coordinates and ``m``-fold application is the identity modulo ``Z^n``.
    """

    def __init__(self, kind: str, order: int, matrix, shift=None, *, exponents=None,
                 planes=None, base_matrix=None, base_shift=None, torus: bool = False):
        matrix = np.array(matrix, dtype=float)
        self.dim = matrix.shape[0]
        self.kind = kind
        self.order = int(order)
        self.matrix = matrix
        self.shift = np.zeros(self.dim) if shift is None else np.array(shift, dtype=float)
        self.exponents = None if exponents is None else tuple(int(k) for k in exponents)
        self.planes = None if planes is None else tuple(tuple(p) for p in planes)
        self.base_matrix = None if base_matrix is None else np.array(base_matrix, dtype=float)
        self.base_shift = None if base_shift is None else np.array(base_shift, dtype=float)
        self.torus = torus
        self.matrix_inv = np.linalg.inv(matrix)

    def power(self, j: int):
        """Return ``(L^j, c_j)`` with ``phi^j(x) = L^j x + c_j``; ``j`` may be negative."""
        L = np.eye(self.dim)
        c = np.zeros(self.dim)
        if j >= 0:
            for _ in range(j):
                L, c = self.matrix @ L, self.matrix @ c + self.shift
        else:
            for _ in range(-j):
                L, c = self.matrix_inv @ L, self.matrix_inv @ (c - self.shift)
        return L, c

    def apply(self, x, j: int = 1):
        L, c = self.power(j)
        return np.asarray(x, dtype=float) @ L.T + c

    def differential(self, x=None, j: int = 1):
        return self.power(j)[0]

    def __repr__(self):
        return f"SymmetryAction(kind={self.kind!r}, order={self.order}, exponents={self.exponents})"


def symmetry_apply(action: SymmetryAction, x, j: int = 1):
    """Apply ``phi^j`` to a point (or a stack of points)."""
    _check_dim(x, action.dim, "point")
    return action.apply(x, j)


def symmetry_differential(action: SymmetryAction, x, j: int = 1):
    """Differential ``D(phi^j)(x)``; constant for the actions supported here."""
    _check_dim(x, action.dim, "point")
    return action.differential(x, j)


def xy_planes(n: int):
    """Coordinate planes ``(x_j, y_j)`` for ``z_j = x_j + i y_j``."""
    return [(j, n + j) for j in range(n)]


def qp_planes():
    """Planes for ``z = q1 + i q2``, ``w = p1 + i p2`` on ``R^4 = (q1, q2, p1, p2)``."""
    return [(0, 1), (2, 3)]


def complex_rotation(dim: int, m: int, exponents: Sequence[int], planes=None) -> SymmetryAction:
    """Rotation ``z_j -> exp(2 pi i k_j / m) z_j`` on the given coordinate planes."""
    n = dim // 2
    planes = xy_planes(n) if planes is None else list(planes)
    exponents = list(exponents)
    if m < 1:
        raise ParameterError("rotation order must be positive")
    if len(exponents) != len(planes):
        raise ParameterError("need one exponent per complex coordinate")
    for k in exponents:
        if gcd(int(k), m) != 1:
            raise ParameterError(f"exponent {k} is not coprime to m={m}")
    L = np.eye(dim)
    for k, (a, b) in zip(exponents, planes):
        th = 2.0 * np.pi * k / m
        c, s = np.cos(th), np.sin(th)
        L[a, a], L[a, b], L[b, a], L[b, b] = c, -s, s, c
    return SymmetryAction("complex-rotation", m, L, exponents=exponents, planes=planes)


def identity_action(dim: int, torus: bool = False) -> SymmetryAction:
    return SymmetryAction("identity", 1, np.eye(dim), torus=torus)


def cotangent_lift(base_matrix, base_shift=None, order: Optional[int] = None,
                   J_mag=None) -> SymmetryAction:
    """Lift of the torus isometry ``q -> A q + s`` to ``(q, p) -> (A q + s, A^{-T} p)``.

    ``A`` must be an integer-compatible orthogonal matrix of finite order
    commuting with ``J_mag`` (the twist condition ``D phi J = J D phi``).
    """
    A = np.array(base_matrix, dtype=float)
    n = A.shape[0]
    s = np.zeros(n) if base_shift is None else np.array(base_shift, dtype=float)
    if np.max(np.abs(A @ A.T - np.eye(n))) > 1e-12:
        raise ParameterError("torus isometry must be orthogonal")
    if J_mag is not None and np.max(np.abs(A @ J_mag - J_mag @ A)) > 1e-12:
        raise ParameterError("isometry violates the twist condition D phi J = J D phi")
    if order is None:
        order = _affine_torus_order(A, s)
    L = np.zeros((2 * n, 2 * n))
    L[:n, :n] = A
    L[n:, n:] = np.linalg.inv(A).T
    c = np.concatenate([s, np.zeros(n)])
    kind = "identity" if order == 1 else "cotangent-lift"
    return SymmetryAction(kind, order, L, c, base_matrix=A, base_shift=s, torus=True)


def _affine_torus_order(A, s, max_order=64):
    n = A.shape[0]
    M, c = np.eye(n), np.zeros(n)
    for k in range(1, max_order + 1):
        M, c = A @ M, A @ c + s
        if np.allclose(M, np.eye(n), atol=1e-12) and np.allclose(c, np.round(c), atol=1e-12):
            return k
    raise ParameterError("torus isometry is not of finite order")


@dataclass(eq=False)
class SymplecticSystem:
    """Hamiltonian system with symmetry on one of the supported structures.

    ``hamiltonian``, ``gradient`` and ``hessian`` act on single points.
    ``stabilizing_form(x, v)`` defaults to the primitive of the structure.
    """

    name: str
    structure: SymplecticStructure
    hamiltonian: Callable
    gradient: Callable
    hessian: Callable
    symmetry: SymmetryAction
    energy_window: tuple = (-np.inf, np.inf)
    default_energy: float = 0.0
    stabilizing_form: Optional[Callable] = None
    potential: Optional[Callable] = None
    potential_gradient: Optional[Callable] = None
    box: Optional[np.ndarray] = None
    escape_radius: float = np.inf
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.structure.dim

    def H(self, x):
        return self.hamiltonian(np.asarray(x, dtype=float))

    def vector_field(self, x):
        return self.structure.omega_inv @ self.gradient(np.asarray(x, dtype=float))

    def vector_field_jacobian(self, x):
        return self.structure.omega_inv @ self.hessian(np.asarray(x, dtype=float))

    def stabilizing(self, x, v) -> float:
        if self.stabilizing_form is None:
            return primitive_eval(self.structure, x, v)
        return float(self.stabilizing_form(np.asarray(x, float), np.asarray(v, float)))

    def difference(self, a, b):
        return self.structure.difference(a, b)

    def __repr__(self):
        return f"SymplecticSystem({self.name!r}, dim={self.dim}, m={self.symmetry.order})"


def ham_vector_field(system: SymplecticSystem, x):
    """Hamiltonian vector field with ``i_{X_H} omega = -dH``."""
    x = _check_dim(x, system.dim, "point")
    return system.vector_field(x)


def finite_difference_gradient(f, x, h=1e-6):
    """Central differences of a scalar function; used as a test oracle."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def validate_system(system: SymplecticSystem, rng=None, samples: int = 20, box=None):
    """Check gradient, Hessian and symmetry invariance at random points.

    Raises :class:`ParameterError` on failure.  Catalog constructors call this
    unless ``validate=False``.
    """
    rng = np.random.default_rng(12345) if rng is None else rng
    if box is None:
        box = system.box if system.box is not None else np.tile([-1.0, 1.0], (system.dim, 1))
    box = np.asarray(box, dtype=float)
    pts = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((samples, system.dim))
    for x in pts:
        h0 = system.H(x)
        g = system.gradient(x)
        g_fd = finite_difference_gradient(system.H, x)
        scale = max(1.0, np.linalg.norm(g))
        if np.linalg.norm(g - g_fd) > 1e-6 * scale:
            raise ParameterError(f"{system.name}: gradient disagrees with finite differences")
        Hs = system.hessian(x)
        cols = [finite_difference_gradient(lambda y, i=i: system.gradient(y)[i], x)
                for i in range(system.dim)]
        if np.linalg.norm(Hs - np.array(cols)) > 1e-5 * max(1.0, np.linalg.norm(Hs)):
            raise ParameterError(f"{system.name}: Hessian disagrees with finite differences")
        if abs(system.H(system.symmetry.apply(x)) - h0) > 1e-10 * max(1.0, abs(h0)):
            raise ParameterError(f"{system.name}: Hamiltonian is not invariant under the symmetry")
    L = system.symmetry.matrix
    if np.max(np.abs(L.T @ system.structure.omega @ L - system.structure.omega)) > 1e-10:
        raise ParameterError(f"{system.name}: symmetry is not symplectic")
    return True
