import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twistreeb import make_henon_heiles, make_sphere
from twistreeb.displacement import hofer_norm, shear_profile
from twistreeb.errors import ContractibilityError
from twistreeb.loopflow import (DiscreteLoop, Schedule, cutoff_beta, cutoff_beta_deriv, descend,
                                energy_balance, flow_energy, gradient_norm, inner, loop_from_orbit,
                                perturbed_action, perturbed_gradient, rabinowitz_action,
                                rabinowitz_gradient, refine_critical, seam_defect)
from twistreeb.orbits import TwistedOrbit, torus_closed_form

X0 = np.array([1.0, 0.0, 0.0, 0.0])


def _sphere_orbit(j=0, tau=np.pi):
    return TwistedOrbit("star-shaped", j, X0, tau, 0.0, 0.0)


@pytest.fixture(scope="module")
def shear():
    p = shear_profile(2, 1.0, r=1.0)
    hofer_norm(p)
    return p


# ------------------------------------------------------------------- cutoff

def test_cutoff_plateaus():
    assert cutoff_beta(2.0, 0.0) == 1.0
    assert cutoff_beta(2.0, 0.9) == 1.0
    assert cutoff_beta(2.0, -1.0 + 0.04) == 1.0
    assert cutoff_beta(2.0, 2.0) == 0.0
    assert cutoff_beta(2.0, -2.5) == 0.0
    assert np.all(cutoff_beta(0.0, np.linspace(-1, 1, 11)) == 0.0)


@given(st.floats(0.0, 4.0), st.floats(-5.0, 5.0))
def test_cutoff_monotone_in_abs_s(r, s):
    b = float(cutoff_beta(r, s))
    assert 0.0 <= b <= 1.0
    assert s * float(cutoff_beta_deriv(r, s)) <= 0.0


def test_cutoff_derivative_matches_fd():
    s = np.linspace(-2.5, 2.5, 101)
    h = 1e-6
    fd = (cutoff_beta(2.0, s + h) - cutoff_beta(2.0, s - h)) / (2 * h)
    assert np.allclose(cutoff_beta_deriv(2.0, s), fd, atol=1e-6)


# ------------------------------------------------------------------- action

def test_constant_loop_on_level_has_zero_action(sphere):
    loop = DiscreteLoop(np.tile(X0, (32, 1)), 1.7)
    assert rabinowitz_action(loop, sphere) == 0.0


def test_sampled_sphere_loop(sphere):
    loop = loop_from_orbit(sphere, _sphere_orbit(), N=256)
    # central differences shrink the enclosed area by sin(2 pi/N) / (2 pi/N)
    expect = np.pi * np.sin(2 * np.pi / 256) / (2 * np.pi / 256)
    assert rabinowitz_action(loop, sphere) == pytest.approx(expect, abs=1e-9)
    assert seam_defect(sphere, loop) < 1e-10


def test_twisted_loop_action(sphere_m2):
    loop = loop_from_orbit(sphere_m2, _sphere_orbit(1, np.pi / 2), N=256)
    assert loop.order == 2
    assert seam_defect(sphere_m2, loop) < 1e-10
    assert rabinowitz_action(loop, sphere_m2) == pytest.approx(np.pi / 2, abs=1e-3)


def test_torus_loop_action(torus):
    k = 0.5
    o = [o for o in torus_closed_form(torus, k, tau_bracket=(0.1, 7.0)) if abs(o.tau - 2 * np.pi) < 1e-8][0]
    loop = loop_from_orbit(torus, o, N=256)
    assert rabinowitz_action(loop, torus) == pytest.approx(k * o.tau, rel=1e-3)


def test_winding_loop_rejected(torus):
    N = 32
    pts = np.zeros((N, 4))
    pts[:, 0] = np.arange(N) / N
    with pytest.raises(ContractibilityError):
        rabinowitz_action(DiscreteLoop(pts, 1.0), torus)


# ----------------------------------------------------------------- gradient

def test_gradient_second_order(sphere):
    norms = []
    for N in (64, 128, 256):
        loop = loop_from_orbit(sphere, _sphere_orbit(), N=N)
        norms.append(gradient_norm(sphere, *rabinowitz_gradient(loop, sphere)))
    assert norms[0] / norms[1] == pytest.approx(4.0, rel=0.02)
    assert norms[1] / norms[2] == pytest.approx(4.0, rel=0.02)


def test_tau_component_is_minus_mean_H(sphere):
    rng = np.random.default_rng(0)
    loop = DiscreteLoop(rng.normal(size=(16, 4)), 0.4)
    _, gt = rabinowitz_gradient(loop, sphere)
    assert gt == pytest.approx(-np.mean([sphere.H(x) for x in loop.points]))
    shifted = DiscreteLoop(loop.points, 0.4, energy=0.3)
    assert rabinowitz_gradient(shifted, sphere)[1] == pytest.approx(gt + 0.3)


_SYSTEMS = dict(sphere=make_sphere(2, 1.0, validate=False).system,
                hh=make_henon_heiles(validate=False).system)


def _fd_check(system, loop, d_pts, d_tau, f, grad, h=1e-6):
    a = DiscreteLoop(loop.points + h * d_pts, loop.tau + h * d_tau)
    b = DiscreteLoop(loop.points - h * d_pts, loop.tau - h * d_tau)
    fd = (f(a) - f(b)) / (2 * h)
    gv, gt = grad(loop)
    an = inner(system, gv, d_pts, gt, d_tau)
    return abs(fd - an) / max(1.0, abs(an))


@given(st.integers(0, 2 ** 31 - 1), st.sampled_from(["sphere", "hh"]))
def test_gradient_fd_consistency(seed, which):
    system = _SYSTEMS[which]
    rng = np.random.default_rng(seed)
    loop = DiscreteLoop(0.5 * rng.normal(size=(16, 4)), rng.uniform(0.5, 3))
    d_pts, d_tau = rng.normal(size=(16, 4)), rng.normal()
    err = _fd_check(system, loop, d_pts, d_tau, lambda l: rabinowitz_action(l, system),
                    lambda l: rabinowitz_gradient(l, system))
    assert err <= 1e-5


def test_gradient_fd_torus(torus):
    rng = np.random.default_rng(3)
    for _ in range(20):
        pts = np.column_stack([0.05 * rng.normal(size=(16, 2)), rng.normal(size=(16, 2))])
        loop = DiscreteLoop(pts, rng.uniform(0.5, 3))
        err = _fd_check(torus, loop, rng.normal(size=(16, 4)), rng.normal(),
                        lambda l: rabinowitz_action(l, torus), lambda l: rabinowitz_gradient(l, torus))
        assert err <= 1e-5


def test_perturbed_gradient_fd(sphere, shear):
    rng = np.random.default_rng(5)
    for s in (0.0, 0.3, -0.5):
        loop = DiscreteLoop(X0 + 0.3 * rng.normal(size=(16, 4)), 2.0)
        err = _fd_check(sphere, loop, rng.normal(size=(16, 4)), rng.normal(),
                        lambda l: perturbed_action(l, sphere, shear, s),
                        lambda l: perturbed_gradient(l, sphere, shear, s))
        assert err <= 1e-5


def test_perturbed_action_limits(sphere, shear):
    loop = loop_from_orbit(sphere, _sphere_orbit(), N=64)
    a = rabinowitz_action(loop, sphere)
    assert perturbed_action(loop, sphere, shear, 1.5) == a
    assert perturbed_action(loop, sphere, None, 0.0) == a
    t = np.arange(64) / 64
    # F_t vanishes for t <= 1/2 but not on the second half of this loop
    Fm = float(np.mean(shear(t, loop.points)))
    assert Fm != 0.0
    assert perturbed_action(loop, sphere, shear, 0.0) == pytest.approx(a - Fm)


# ------------------------------------------------------------ critical loops

def test_refine_critical(sphere):
    loop = refine_critical(loop_from_orbit(sphere, _sphere_orbit(), N=64), sphere)
    assert gradient_norm(sphere, *rabinowitz_gradient(loop, sphere)) < 1e-12
    assert loop.tau == pytest.approx(32 * np.sin(2 * np.pi / 64), abs=1e-10)


def test_critical_point_characterization(sphere):
    # sampled orbit at N = 512 is within 1e-4 of an exact discrete critical loop
    sampled = loop_from_orbit(sphere, _sphere_orbit(), N=512)
    crit = refine_critical(sampled, sphere)
    assert gradient_norm(sphere, *rabinowitz_gradient(crit, sphere)) < 1e-10
    change = np.sqrt(inner(sphere, crit.points - sampled.points, crit.points - sampled.points)
                     + (crit.tau - sampled.tau) ** 2)
    assert change <= 1e-4
    assert abs(crit.tau - np.pi) <= 1e-4


# ------------------------------------------------------------------ descent

def test_descent_from_critical_loop_stops(sphere):
    crit = refine_critical(loop_from_orbit(sphere, _sphere_orbit(), N=64), sphere)
    traj = descend(crit, sphere)
    assert traj.converged and len(traj.s) == 1
    assert flow_energy(traj, sphere) == 0.0


def test_descent_is_monotone(sphere):
    rng = np.random.default_rng(1)
    loop = loop_from_orbit(sphere, _sphere_orbit(), N=64)
    loop.points += 1e-3 * rng.normal(size=loop.points.shape)
    traj = descend(loop, sphere, schedule=Schedule(max_steps=100))
    assert np.all(np.diff(traj.actions) <= 1e-12)
    assert traj.actions[-1] < traj.actions[0]


def test_unperturbed_energy_identity(sphere):
    rng = np.random.default_rng(2)
    loop = loop_from_orbit(sphere, _sphere_orbit(), N=64)
    loop.points += 1e-3 * rng.normal(size=loop.points.shape)
    traj = descend(loop, sphere, schedule=Schedule(h=1e-4, h_max=1e-4, max_steps=300))
    bal = energy_balance(traj, sphere)
    assert bal["forcing"] == 0.0
    assert bal["energy"] == pytest.approx(bal["action_drop"], rel=1e-2)


def test_perturbed_energy_balance(sphere, shear):
    crit = refine_critical(loop_from_orbit(sphere, _sphere_orbit(), N=32), sphere)
    sc = Schedule(h=1e-4, h_max=1e-3, s0=-1.1, s1=-0.6, local_tol=1e-6, max_steps=400)
    traj = descend(crit, sphere, shear, sc)
    assert traj.perturbed and traj.F_norm == pytest.approx(shear.norms.total)
    bal = energy_balance(traj, sphere, shear)
    assert bal["forcing"] != 0.0
    assert bal["energy"] == pytest.approx(bal["predicted"], rel=2e-2)
