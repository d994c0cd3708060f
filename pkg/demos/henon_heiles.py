"""
Henon-Heiles below the escape energy
====================================

For ``0 < k < 1/6`` the bounded component of the energy surface is
star-shaped and invariant under the rotation by ``2 pi / 3``, so at least
two symmetric periodic orbits are expected.  A Sobol sweep with Newton
refinement finds them at ``k = 1/8``.
"""
import numpy as np

from twistreeb import make_henon_heiles
from twistreeb.flow import integrate_flow
from twistreeb.invariants import floquet_analysis
from twistreeb.orbits import ShootingConfig, deduplicate_orbits, seed_sweep

hh = make_henon_heiles().system
found = seed_sweep(hh, ShootingConfig(energy=0.125, tau_min=1.0, tau_max=9.0, n_seeds=16))
reps = deduplicate_orbits(found, hh)
print(f"{len(found)} Newton solutions, {len(reps)} geometrically distinct")

for o in reps:
    end = integrate_flow(hh, o.x0, o.tau, dense=False).final
    fl = floquet_analysis(o, hh)
    mult = np.abs(fl.multipliers)
    kind = "elliptic" if np.allclose(mult, 1, atol=1e-6) else "hyperbolic"
    print(f"tau {o.tau:.6f}  residual {o.residual:.1e}  energy drift {abs(hh.H(end) - hh.H(o.x0)):.1e}  "
          f"{kind} (|mu| = {mult.max():.4f})")
