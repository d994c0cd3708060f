"""Compactly supported time-dependent Hamiltonians, Hofer norms and
numerical displacement certificates.

Every profile has the form ``F(t, x) = chi(t) S(t, x)`` with ``F_t = 0`` on
``[0, 1/2]``.  Profiles are vectorized: ``F(t, X)`` accepts stacks of points
``X[..., d]`` and a time (scalar or broadcastable array).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import minimize
from scipy.stats import qmc

from .bumps import TimeBump, plateau, smooth_step
from .errors import ParameterError, UnsupportedStructureError
from .geometry import SymplecticStructure
from .orbits import _tree, _wrap, project_to_level

CHI = TimeBump(0.5, 1.0)


class PerturbationProfile:
    """Time-dependent Hamiltonian ``F`` with gradient and declared support.

    Parameters
    ----------
    F, grad : callables ``(t, X) -> (...)`` and ``(t, X) -> (..., d)``
    support : (d, 2) array
        Box outside which ``F`` vanishes.
    r : float
        Cutoff radius used by the perturbed action functional.
    structure : SymplecticStructure
        Determines the Hamiltonian vector field of ``F``.
    """

    def __init__(self, F: Callable, grad: Callable, support, structure: SymplecticStructure,
                 r: float = 2.0, name: str = "", params: Optional[dict] = None):
        self.F = F
        self.grad = grad
        self.support = np.asarray(support, float)
        self.structure = structure
        self.r = float(r)
        self.name = name
        self.params = dict(params or {})
        self.norms = None

    @property
    def dim(self):
        return self.structure.dim

    def __call__(self, t, X):
        return self.F(t, np.asarray(X, float))

    def vector_field(self, t, X):
        """``X_F = Omega^{-1} grad F`` for a stack of points."""
        return np.asarray(self.grad(t, np.asarray(X, float))) @ self.structure.omega_inv.T

    def with_radius(self, r: float) -> "PerturbationProfile":
        p = PerturbationProfile(self.F, self.grad, self.support, self.structure, r, self.name, self.params)
        p.norms = self.norms
        return p

    def __repr__(self):
        return f"PerturbationProfile({self.name!r}, r={self.r})"


def validate_profile(profile: PerturbationProfile, samples: int = 512, seed: int = 0, tol: float = 1e-12):
    """Sampled checks: ``F_t = 0`` for ``t <= 1/2`` and ``F = 0`` outside the support box.

    Raises :class:`ParameterError` naming the violated property.
    """
    rng = np.random.default_rng(seed)
    box = profile.support
    lo, hi = box[:, 0], box[:, 1]
    inside = lo + (hi - lo) * rng.random((samples, profile.dim))
    for t in rng.random(8) * 0.5:
        if np.max(np.abs(profile(t, inside))) > tol:
            raise ParameterError(f"profile {profile.name!r} is nonzero at t = {t:.3f} <= 1/2")
    periodic = np.zeros(profile.dim, bool)
    if profile.structure.is_torus:
        periodic[: profile.dim // 2] = True
    width = np.where(periodic, 0.0, hi - lo)
    outside = inside.copy()
    k = rng.integers(0, profile.dim, samples)
    sign = rng.choice([-1.0, 1.0], samples)
    for i in range(samples):
        if periodic[k[i]]:
            k[i] = profile.dim - 1 - rng.integers(0, profile.dim // 2)
        outside[i, k[i]] = (hi[k[i]] if sign[i] > 0 else lo[k[i]]) + sign[i] * (1e-9 + width[k[i]] * rng.random())
    for t in 0.5 + 0.5 * rng.random(8):
        if np.max(np.abs(profile(t, outside))) > tol:
            raise ParameterError(f"profile {profile.name!r} is nonzero outside its support box")
    return True


def zero_profile(structure: SymplecticStructure, r: float = 2.0) -> PerturbationProfile:
    d = structure.dim
    return PerturbationProfile(lambda t, X: np.zeros(np.shape(X)[:-1]),
                               lambda t, X: np.zeros(np.shape(X)), np.tile([-1.0, 1.0], (d, 1)),
                               structure, r, "zero")


def translation_profile(structure: SymplecticStructure, a, r_in: float, r_out: float,
                        r: float = 2.0) -> PerturbationProfile:
    """``F = chi(t) <Omega a, x> b(|x|)``: translation by ``a`` on the ball ``|x| <= r_in``."""
    a = np.asarray(a, float)
    w = structure.omega @ a

    def F(t, X):
        rad = np.linalg.norm(X, axis=-1)
        b, _ = plateau(rad, r_in, r_out)
        return CHI(t) * (X @ w) * b

    def grad(t, X):
        rad = np.linalg.norm(X, axis=-1)
        b, db = plateau(rad, r_in, r_out)
        lin = X @ w
        safe = np.where(rad > 0, rad, 1.0)
        g = w * b[..., None] + (lin * db / safe)[..., None] * X
        return np.asarray(CHI(t))[..., None] * g

    d = structure.dim
    return PerturbationProfile(F, grad, np.tile([-r_out, r_out], (d, 1)), structure, r,
                               "translation", dict(a=a.tolist(), r_in=r_in, r_out=r_out))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def shear_profile(n: int = 2, radius: float = 1.0, pad: float = 0.02, r: float = 2.0) -> PerturbationProfile:
    """Area-efficient displacement of the sphere ``|z| = radius`` in ``C^n``.

    ``F = chi(t) g(x_1) c(x_1, y_1, rest)`` with ``g' = -s psi``: the time-1
    map shifts ``y_1`` by ``s(x_1) = 2 sqrt(R^2 - x_1^2)``, ``R^2 = (1 + pad)
    radius^2``, which is longer than every chord of the disc ``|z_1| <= radius``.
    ``psi`` switches ``s`` off smoothly between ``radius`` and the midpoint to
    ``R``.  The oscillation of ``F`` is ``int s psi < pi R^2``.
    """
    if pad <= 0:
        raise ParameterError("pad must be positive")
    d = 2 * n
    R2 = (1.0 + pad) * radius**2
    R = np.sqrt(R2)
    rc = 0.5 * (radius + R)

    def speed(u):
        u = np.asarray(u, float)
        psi, _ = plateau(np.abs(u), radius, rc)
        return 2.0 * np.sqrt(np.clip(R2 - u * u, 0.0, None)) * psi

    def G(u):
        return u * np.sqrt(R2 - u * u) + R2 * np.arcsin(u / R)

    def edge(a, b):
        # Gauss-Legendre over [a, b] elementwise (b >= a)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[..., None] + half[..., None] * _GL_X
        return half * np.sum(_GL_W * speed(nodes), axis=-1)

    full_edge = float(edge(np.array(radius), np.array(rc)))

    def g(x):
        x = np.asarray(x, float)
        core = G(np.clip(x, -radius, radius)) - G(-radius)
        # the transition layers are mirror images; quadrature only where needed
        left = np.where(x >= -radius, full_edge, 0.0)
        right = np.where(x >= rc, full_edge, 0.0)
        lmask = (x > -rc) & (x < -radius)
        rmask = (x > radius) & (x < rc)
        if np.any(lmask):
            xl = x[lmask]
            left[lmask] = edge(np.full_like(xl, -rc), xl)
        if np.any(rmask):
            xr = x[rmask]
            right[rmask] = edge(np.full_like(xr, radius), xr)
        return -(left + core + right)

    rest_idx = [i for i in range(d) if i not in (0, n)]

    def parts(X):
        x1, y1 = X[..., 0], X[..., n]
        rest = np.linalg.norm(X[..., rest_idx], axis=-1) if rest_idx else np.zeros_like(x1)
        cx, dcx = plateau(np.abs(x1), 3 * radius, 4 * radius)
        cy, dcy = plateau(np.abs(y1), 4 * radius, 5 * radius)
        cr, dcr = plateau(rest, 1.2 * radius, 1.6 * radius)
        return x1, y1, rest, (cx, dcx), (cy, dcy), (cr, dcr)

    def F(t, X):
        X = np.asarray(X, float)
        x1, y1, rest, (cx, _), (cy, _), (cr, _) = parts(X)
        return CHI(t) * g(x1) * cx * cy * cr

    def grad(t, X):
        X = np.asarray(X, float)
        x1, y1, rest, (cx, dcx), (cy, dcy), (cr, dcr) = parts(X)
        gx = g(x1)
        out = np.zeros(X.shape)
        out[..., 0] = (-speed(x1) * cx + gx * dcx * np.sign(x1)) * cy * cr
        out[..., n] = gx * cx * dcy * np.sign(y1) * cr
        if rest_idx:
            safe = np.where(rest > 0, rest, 1.0)
            out[..., rest_idx] = (gx * cx * cy * dcr / safe)[..., None] * X[..., rest_idx]
        return np.asarray(CHI(t))[..., None] * out

    support = np.tile([-1.6 * radius, 1.6 * radius], (d, 1))
    support[0] = [-4 * radius, 4 * radius]
    support[n] = [-5 * radius, 5 * radius]
    prof = PerturbationProfile(F, grad, support, SymplecticStructure(d), r, "shear",
                               dict(n=n, radius=radius, pad=pad))
    prof.oscillation = -float(g(np.array([rc]))[0])
    return prof


def fiber_translation_profile(system, shift, r_in: float, r_out: float, r: float = 2.0) -> PerturbationProfile:
    """``F = chi(t) <b, p> c(|p|)`` on the magnetic torus; moves ``p`` by ``J b = shift``.

    ``shift`` must lie in ``im J``; ``q`` is periodic so only ``p`` is cut off.
    """
    st = system.structure
    if not st.is_torus:
        raise UnsupportedStructureError("fiber translation needs a cotangent structure")
    n = st.n
    J = np.asarray(st.J_mag, float)
    shift = np.asarray(shift, float)
    b = np.linalg.pinv(J) @ shift
    if np.linalg.norm(J @ b - shift) > 1e-12 * max(1.0, np.linalg.norm(shift)):
        raise ParameterError("shift must lie in the image of J")

    def F(t, X):
        P = X[..., n:]
        c, _ = plateau(np.linalg.norm(P, axis=-1), r_in, r_out)
        return CHI(t) * (P @ b) * c

    def grad(t, X):
        P = X[..., n:]
        rad = np.linalg.norm(P, axis=-1)
        c, dc = plateau(rad, r_in, r_out)
        safe = np.where(rad > 0, rad, 1.0)
        out = np.zeros(np.shape(X))
        out[..., n:] = b * c[..., None] + ((P @ b) * dc / safe)[..., None] * P
        return np.asarray(CHI(t))[..., None] * out

    support = np.array([[0.0, 1.0]] * n + [[-r_out, r_out]] * n)
    return PerturbationProfile(F, grad, support, st, r, "fiber-translation",
                               dict(shift=shift.tolist(), r_in=r_in, r_out=r_out))


# ----------------------------------------------------------------- Hofer norm

@dataclass
class HoferNorm:
    plus: float
    minus: float
    total: float
    change: float
    confident: bool
    n_time: int

    def __iter__(self):
        return iter((self.plus, self.minus, self.total))


def _spatial_points(box, grid, seed=0):
    d = box.shape[0]
    if grid**d <= 20000:
        axes = [np.linspace(lo, hi, grid) for lo, hi in box]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    u = qmc.Sobol(d, scramble=True, seed=seed).random_base2(13)
    return box[:, 0] + (box[:, 1] - box[:, 0]) * u


def _slice_extrema(profile, t, pts, starts):
    vals = profile(t, pts)
    box = profile.support
    bounds = list(map(tuple, box))
    out = []
    for sign in (1.0, -1.0):
        best = float(np.max(sign * vals))
        if np.all(vals == 0):
            out.append(0.0)
            continue
        for i in np.argsort(-sign * vals)[:starts]:
            res = minimize(lambda x: -sign * float(profile(t, x[None])[0]), pts[i],
                           jac=lambda x: -sign * profile.grad(t, x[None])[0],
                           method="L-BFGS-B", bounds=bounds, options=dict(maxiter=200))
            best = max(best, -float(res.fun))
        out.append(sign * best)
    return out[0], out[1]


def hofer_norm(profile: PerturbationProfile, n_time: int = 17, grid: int = 9, starts: int = 4,
               tol: float = 1e-4, max_levels: int = 4) -> HoferNorm:
    """``(|F|_+, |F|_-, |F|)`` with per-slice multistart optimization.

    Slices are refined by halving the time step until successive totals
    differ by at most ``tol``; otherwise the result is marked not confident.
    The trapezoidal rule is used in time.
    """
    pts = _spatial_points(profile.support, grid)
    cache = {}

    def ext(t):
        key = round(float(t), 15)
        if key not in cache:
            cache[key] = _slice_extrema(profile, t, pts, starts)
        return cache[key]

    prev = None
    change = np.inf
    n = n_time
    for level in range(max_levels):
        ts = np.linspace(0.0, 1.0, n)
        mx, mn = np.array([ext(t) for t in ts]).T
        plus = float(trapezoid(mx, ts))
        minus = -float(trapezoid(mn, ts))
        total = plus + minus
        if prev is not None:
            change = abs(total - prev)
            if change <= tol:
                res = HoferNorm(plus, minus, total, change, True, n)
                profile.norms = res
                return res
        prev = total
        n = 2 * n - 1
    res = HoferNorm(plus, minus, total, change, False, (n + 1) // 2)
    profile.norms = res
    return res


# ------------------------------------------------------------ certificates

@dataclass
class DisplacementCertificate:
    profile: PerturbationProfile = field(repr=False)
    hofer: HoferNorm
    e_upper: float
    evidence: float
    nearest_sample: float
    n_samples: int
    margin: float
    valid: bool
    energy: float
    lipschitz: float

    def to_dict(self):
        return dict(profile=self.profile.name, profile_params=self.profile.params,
                    hofer=dict(plus=self.hofer.plus, minus=self.hofer.minus, total=self.hofer.total,
                               change=self.hofer.change, confident=self.hofer.confident),
                    e_upper=self.e_upper, evidence=self.evidence, nearest_sample=self.nearest_sample,
                    n_samples=self.n_samples, margin=self.margin, valid=self.valid,
                    energy=self.energy, lipschitz=self.lipschitz)


def level_set_sample(system, energy: float, n: int, seed: int = 0, box=None, accept=None):
    """``n`` points of ``H = energy`` from scrambled Sobol points projected along ``grad H``."""
    box = np.asarray(system.box if box is None else box, float)
    d = system.dim
    eng = qmc.Sobol(d, scramble=True, seed=seed)
    out = []
    for _ in range(8):
        u = eng.random_base2(int(np.ceil(np.log2(max(n, 256)))))
        for p in box[:, 0] + (box[:, 1] - box[:, 0]) * u:
            q = project_to_level(system, p, energy)
            if q is not None and (accept is None or accept(q)):
                out.append(q)
                if len(out) == n:
                    return np.array(out)
    raise ParameterError(f"could only sample {len(out)} of {n} points on the level set")


def flow_profile(profile: PerturbationProfile, X0, rtol: float = 1e-10, atol: float = 1e-12):
    """Time-1 map of ``X_F`` applied to a stack of points."""
    X0 = np.atleast_2d(np.asarray(X0, float))
    shape = X0.shape

    def fun(t, y):
        return profile.vector_field(t, y.reshape(shape)).ravel()

    sol = solve_ivp(fun, (0.0, 1.0), X0.ravel(), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise ParameterError(f"profile flow failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


def displacement_certificate(system, profile: PerturbationProfile, sampler=None, *, n_samples: int = 10000,
                             energy: Optional[float] = None, margin: float = 1e-3, seed: int = 0,
                             hofer: Optional[HoferNorm] = None) -> DisplacementCertificate:
    """Numerical evidence that the time-1 map of ``profile`` displaces ``Sigma``.

    Each flowed sample gets the lower bound ``|H(y) - k| / Lip`` on its
    distance to ``Sigma`` (``Lip``: largest sampled ``|grad H|`` over samples
    and images); the certificate is valid iff the minimum exceeds ``margin``.
    The distance to the nearest original sample is reported alongside.
    """
    k = system.default_energy if energy is None else energy
    X = sampler(n_samples) if sampler is not None else level_set_sample(system, k, n_samples, seed)
    Y = flow_profile(profile, X)
    lip = max(np.max([np.linalg.norm(system.gradient(x)) for x in X]),
              np.max([np.linalg.norm(system.gradient(y)) for y in Y]))
    gaps = np.array([abs(system.H(y) - k) for y in Y]) / lip
    tree, box = _tree(system, X)
    near, _ = tree.query(_wrap(system, Y, box))
    hofer = hofer if hofer is not None else (profile.norms or hofer_norm(profile))
    evidence = float(np.min(gaps))
    return DisplacementCertificate(profile, hofer, float(hofer.total), evidence, float(np.min(near)),
                                   len(X), margin, bool(evidence > margin), float(k), float(lip))
