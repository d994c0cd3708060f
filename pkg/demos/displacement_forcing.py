"""
Displacement and forcing on S^3 / Z_2
=====================================

A Hamiltonian whose time-one map moves the unit sphere off itself bounds
how far apart neighbouring orbit actions can be.  The shear profile below
has Hofer norm just above pi; starting from the half Hopf circle
(tau = pi/2) the next orbit in the same twisted class sits at 3 pi / 2,
well inside the bound ``ord(phi) * ||F||``.
"""
import numpy as np

from twistreeb import make_sphere
from twistreeb.displacement import displacement_certificate, hofer_norm, shear_profile, translation_profile
from twistreeb.invariants import forcing_check
from twistreeb.orbits import ShootingConfig, newton_refine, seed_sweep

lens = make_sphere(2, 1.0, 2, [1, 1]).system

shear = shear_profile(2, 1.0)
h = hofer_norm(shear)
print(f"shear: ||F||+ = {h.plus:.5f}, ||F||- = {h.minus:.5f}, total {h.total:.5f} (pi = {np.pi:.5f})")

# a translation also displaces the sphere, but costs far more
trans = translation_profile(lens.structure, [2.5, 0, 0, 0], 3.6, 4.5)
print(f"translation by 2.5: total {hofer_norm(trans).total:.3f}")

cert = displacement_certificate(lens, shear, n_samples=10000)
print(f"certificate valid {cert.valid}, evidence {cert.evidence:.2e} (margin {cert.margin:.0e})")

base = newton_refine(lens, ShootingConfig(energy=0.0, j=1), (np.array([1.0, 0, 0, 0]), np.pi / 2))
orbits = seed_sweep(lens, ShootingConfig(energy=0.0, j=1, tau_min=0.5, tau_max=5.0, n_seeds=8))
rep = forcing_check(list(orbits), base, cert, lens)
print(f"verdict {rep.verdict}: gap {rep.gap:.10f} <= {rep.order} x {rep.e_upper:.5f}")
