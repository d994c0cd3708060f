"""
Reeb orbits on the round sphere and its lens-space quotient
===========================================================

Every point of the unit sphere in C^2 lies on a closed Reeb orbit of
period pi (the Hopf circles).  Quotienting by the half-turn
``z -> -z`` (m = 2) adds twisted orbits: paths that close up to the
symmetry after half a turn.
"""
import numpy as np

from twistreeb import make_sphere
from twistreeb.invariants import contractibility_class, floquet_analysis, iterate_orbit, orbit_action
from twistreeb.orbits import ShootingConfig, seed_sweep

sphere = make_sphere(2, 1.0).system

# untwisted search: every orbit found has tau = pi
orbits = seed_sweep(sphere, ShootingConfig(energy=0.0, tau_min=1.0, tau_max=4.0, n_seeds=8))
print(f"{len(orbits)} orbits, periods {sorted({float(round(o.tau, 10)) for o in orbits})}")

o = orbits[0]
print(f"action {orbit_action(o, sphere):.12f} (disc area pi = {np.pi:.12f})")

# the Hopf family is degenerate: the return map is the identity on xi
fl = floquet_analysis(o, sphere)
print(f"kernel dimension {fl.kernel_dim}, nondegenerate {fl.nondegenerate}, defect {fl.defect:.1e}")

# radius 1.3: periods scale with the area
big = make_sphere(2, 1.3).system
tau = min(x.tau for x in seed_sweep(big, ShootingConfig(energy=0.0, tau_min=1.0, tau_max=7.0, n_seeds=4)))
print(f"r = 1.3: tau = {tau:.10f}, pi r^2 = {np.pi * 1.69:.10f}")

# %% twisted orbits on S^3 / Z_2
lens = make_sphere(2, 1.0, 2, [1, 1]).system
tw = seed_sweep(lens, ShootingConfig(energy=0.0, j=1, tau_min=0.5, tau_max=5.0, n_seeds=8))
print("twisted periods:", sorted({float(round(x.tau / np.pi, 8)) for x in tw}), "x pi")
half = min(tw, key=lambda x: x.tau)
print(f"class of the half orbit {contractibility_class(half, lens)}, "
      f"of its double {contractibility_class(iterate_orbit(half, 2, lens), lens)}")
