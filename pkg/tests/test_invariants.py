import numpy as np
import pytest

from twistreeb import make_ellipsoid, make_sphere
from twistreeb.catalog import make_mechanical_torus
from twistreeb.displacement import displacement_certificate, shear_profile, zero_profile
from twistreeb.errors import ContractibilityError
from twistreeb.invariants import (contractibility_class, e0_threshold, floquet_analysis,
                                  forcing_check, iterate_orbit, orbit_action, reeb_time)
from twistreeb.orbits import TwistedOrbit, torus_closed_form

X0 = np.array([1.0, 0.0, 0.0, 0.0])


def _orb(name, j, x0, tau, energy=0.0):
    return TwistedOrbit(name, j, np.asarray(x0, float), tau, energy, 0.0)


@pytest.fixture(scope="module")
def shear_cert(sphere_m2):
    return displacement_certificate(sphere_m2, shear_profile(2, 1.0), n_samples=2000)


# ------------------------------------------------------------------ action

def test_sphere_action_and_reeb_time(sphere):
    o = _orb("star-shaped", 0, X0, np.pi)
    assert orbit_action(o, sphere) == pytest.approx(np.pi, abs=1e-9)
    assert reeb_time(o, sphere) == pytest.approx(np.pi, abs=1e-9)


@pytest.mark.parametrize("r", [0.7, 1.5])
def test_action_is_disc_area(r):
    # a Hopf circle of radius r bounds a disc of area pi r^2
    s = make_sphere(2, r).system
    o = _orb("star-shaped", 0, [r, 0, 0, 0], np.pi * r ** 2)
    assert orbit_action(o, s) == pytest.approx(np.pi * r ** 2, rel=1e-9)


def test_twisted_action_per_segment(sphere_m2):
    # the half-turn closes after two segments; per segment the action is tau
    o = _orb("star-shaped", 1, X0, np.pi / 2)
    assert orbit_action(o, sphere_m2) == pytest.approx(np.pi / 2, abs=1e-9)


def test_constant_orbit_action(sphere_m2):
    o = _orb("star-shaped", 1, np.zeros(4), 0.7, energy=-1.0)
    assert orbit_action(o, sphere_m2) == 0.0
    assert reeb_time(o, sphere_m2) == 0.0


def test_torus_action_is_k_tau(torus):
    k = 0.5
    orbs = torus_closed_form(torus, k, j=0, tau_bracket=(0.1, 7.0))
    closed = [o for o in orbs if abs(o.tau - 2 * np.pi) < 1e-8]
    assert closed
    for o in closed:
        assert orbit_action(o, torus) == pytest.approx(k * o.tau, rel=1e-8)


def test_torus_winding_loop_rejected(torus):
    # a half magnetic circle of radius 8 ends a diameter away: not contractible
    big = _orb("magnetic-torus", 0, [0, 0, 8.0, 0.0], np.pi, energy=32.0)
    with pytest.raises(ContractibilityError):
        orbit_action(big, torus)


# ----------------------------------------------------------------- floquet

def test_floquet_sphere_degenerate(sphere):
    res = floquet_analysis(_orb("star-shaped", 0, X0, np.pi), sphere)
    assert res.kernel_dim == 2
    assert not res.nondegenerate
    assert res.defect <= 1e-6
    assert np.allclose(res.multipliers, 1.0, atol=1e-8)


def test_floquet_ellipsoid_nondegenerate():
    s = make_ellipsoid([1.0, 1.3]).system
    res = floquet_analysis(_orb("star-shaped", 0, X0, np.pi), s)
    assert res.nondegenerate and res.kernel_dim == 0
    # transverse rotation by 2 pi (1/1.3^2)
    ang = 2 * np.pi / 1.3 ** 2
    assert np.allclose(sorted(np.angle(res.multipliers)), sorted([ang - 2 * np.pi, 2 * np.pi - ang]), atol=1e-7)
    assert res.eigenvalue_one_multiplicity() >= 2
    assert res.defect <= 1e-6


def test_floquet_records_on_orbit(sphere):
    o = _orb("star-shaped", 0, X0, np.pi)
    floquet_analysis(o, sphere)
    assert o.floquet["kernel_dim"] == 2


# ----------------------------------------------------------- contractibility

def test_contractibility_class(sphere_m2):
    assert contractibility_class(_orb("star-shaped", 0, X0, np.pi), sphere_m2) == 0
    half = _orb("star-shaped", 1, X0, np.pi / 2)
    assert contractibility_class(half, sphere_m2) == 1
    assert contractibility_class(iterate_orbit(half, 2, sphere_m2), sphere_m2) == 0
    assert contractibility_class(half, m=5) == 1


def test_iterate_orbit(sphere_m2):
    it = iterate_orbit(_orb("star-shaped", 1, X0, np.pi / 2), 3, sphere_m2)
    assert it.j == 1 and it.tau == pytest.approx(1.5 * np.pi)


# -------------------------------------------------------------------- e0

def _mech(V, dV):
    return make_mechanical_torus(2, V, dV, validate=False).system


def test_e0_constant_potential():
    s = _mech(lambda q: 0.4, lambda q: np.zeros(2))
    assert e0_threshold(s) == pytest.approx(0.4)


def test_e0_sine_squared():
    s = _mech(lambda q: np.sin(2 * np.pi * q[0]) ** 2,
              lambda q: np.array([2 * np.pi * np.sin(4 * np.pi * q[0]), 0.0]))
    assert e0_threshold(s) == pytest.approx(1.0, abs=1e-10)


def test_e0_magnetic_torus(torus):
    assert e0_threshold(torus) == 0.0


# ----------------------------------------------------------------- forcing

def test_forcing_distinct_orbit(sphere_m2, shear_cert):
    base = _orb("star-shaped", 1, X0, np.pi / 2)
    other = _orb("star-shaped", 1, [0, 1.0, 0, 0], 1.5 * np.pi)
    rep = forcing_check([base, other], base, shear_cert, sphere_m2)
    assert rep.verdict == "distinct-orbits"
    assert rep.gap == pytest.approx(np.pi, abs=1e-9)
    assert rep.gap <= rep.e_upper and rep.case == 1


def test_forcing_excludes_base_and_other_classes(sphere_m2, shear_cert):
    base = _orb("star-shaped", 1, X0, np.pi / 2)
    same_level = _orb("star-shaped", 1, [0, 1.0, 0, 0], np.pi / 2)
    wrong_class = _orb("star-shaped", 0, X0, np.pi)
    rep = forcing_check([base, same_level, wrong_class], base, shear_cert, sphere_m2)
    assert rep.verdict == "inconclusive"


def test_forcing_iterate_case(sphere_m2, shear_cert):
    base = _orb("star-shaped", 1, X0, np.pi / 2)
    rep = forcing_check([iterate_orbit(base, 3, sphere_m2)], base, shear_cert, sphere_m2)
    assert rep.case == 2 and rep.p == 3
    assert rep.verdict == "iterate"


def test_forcing_invalid_certificate(sphere_m2):
    cert = displacement_certificate(sphere_m2, zero_profile(sphere_m2.structure), n_samples=200)
    base = _orb("star-shaped", 1, X0, np.pi / 2)
    rep = forcing_check([_orb("star-shaped", 1, X0, 1.5 * np.pi)], base, cert, sphere_m2)
    assert rep.verdict == "inconclusive"
    assert "certificate" in rep.message
