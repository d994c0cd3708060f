"""
Magnetic circles on the torus
=============================

On ``T*T^2`` with a constant magnetic field the energy level ``|p|^2/2 = k``
carries closed orbits whose momentum rotates once: ``e^{tau J} = I`` gives
``tau = 2 pi``.  The algebraic solution and the shooting search should
agree, and the action of each orbit is ``k tau``.
"""
import numpy as np

from twistreeb import make_magnetic_torus
from twistreeb.invariants import orbit_action
from twistreeb.orbits import (ShootingConfig, continuation_in_energy, seed_sweep, torus_closed_form,
                              trace_distance)

J = [[0.0, -1.0], [1.0, 0.0]]
torus = make_magnetic_torus(2, J).system
k = 0.5

sweep = seed_sweep(torus, ShootingConfig(energy=k, tau_min=1.0, tau_max=7.0, n_seeds=4))
closed = torus_closed_form(torus, k, 0, (1.0, 7.0), anchors=[o.x0 for o in sweep])
for o in sweep:
    c = min(closed, key=lambda c: trace_distance(torus, o, c))
    print(f"sweep tau {o.tau:.12f}  closed form {c.tau:.12f}  trace distance {trace_distance(torus, o, c):.1e}")

c = closed[0]
print(f"action {orbit_action(c, torus):.10f} vs k tau = {k * c.tau:.10f}")

# the period does not depend on the energy; the radius of the circle does
res = continuation_in_energy(torus, c, 1.0, 5)
for o in res:
    print(f"k = {o.energy:.2f}  tau = {o.tau:.10f}  action = {orbit_action(o, torus):.6f}")

# twisting by a shift of the base: J is invertible, so a magnetic circle
# returns to its starting point and can never close up to (1/2, 0)
shifted = make_magnetic_torus(2, J, shift=[0.5, 0.0]).system
print(f"twisted solutions with shift (1/2, 0): {len(torus_closed_form(shifted, k, 1, (0.1, 20.0)))}")

# in T^3 the field has a kernel direction, and drifting along it closes the twist
J3 = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
t3 = make_magnetic_torus(3, J3, shift=[0.0, 0.0, 0.5]).system
tw = torus_closed_form(t3, k, 1, (0.1, 3.0))
print(f"T^3 with shift (0, 0, 1/2): {len(tw)} solutions, shortest tau {min(o.tau for o in tw):.10f} "
      f"= 0.5 / sqrt(2k)")
