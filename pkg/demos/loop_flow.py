"""
The Rabinowitz action on discrete loops
=======================================

A loop sampled at N points and a multiplier tau define the action
``int v*lambda - tau mean H``.  Reeb orbits are its critical points.  The
gradient is exact for the discrete functional, but its flow behaves badly
as an initial value problem: the Hessian has eigenvalues of both signs up
to about N, so noise is amplified instead of damped.
"""
import numpy as np

from twistreeb import make_sphere
from twistreeb.displacement import hofer_norm, shear_profile
from twistreeb.loopflow import (Schedule, descend, energy_balance, gradient_norm, loop_from_orbit,
                                rabinowitz_action, rabinowitz_gradient, refine_critical)
from twistreeb.orbits import TwistedOrbit

sphere = make_sphere(2, 1.0).system
hopf = TwistedOrbit(sphere.name, 0, np.array([1.0, 0, 0, 0]), np.pi, 0.0, 0.0)

# sampled orbits are critical up to O(N^-2)
for N in (64, 128, 256, 512):
    loop = loop_from_orbit(sphere, hopf, N)
    print(f"N = {N:4d}  action {rabinowitz_action(loop, sphere):.8f}  "
          f"|grad| {gradient_norm(sphere, *rabinowitz_gradient(loop, sphere)):.2e}")

crit = refine_critical(loop_from_orbit(sphere, hopf, 64), sphere)
print(f"refined: |grad| {gradient_norm(sphere, *rabinowitz_gradient(crit, sphere)):.1e}, "
      f"tau {crit.tau:.10f} = 32 sin(pi/32) = {32 * np.sin(np.pi / 32):.10f}")

# %% descent from a slightly perturbed loop: the action falls, the loop leaves
loop = loop_from_orbit(sphere, hopf, 64)
loop.points += 1e-3 * np.random.default_rng(0).standard_normal(loop.points.shape)
traj = descend(loop, sphere, schedule=Schedule(h=1e-4, h_max=1e-4, max_steps=300))
bal = energy_balance(traj, sphere)
print(f"300 steps: |grad| {traj.grad_norms[0]:.2e} -> {traj.grad_norms[-1]:.2e}, "
      f"energy {bal['energy']:.6f} vs action drop {bal['action_drop']:.6f}")

# %% perturbed flow with the displacing shear, cut off for |s| >= 1
prof = shear_profile(2, 1.0, r=1.0)
F = hofer_norm(prof).total
crit32 = refine_critical(loop_from_orbit(sphere, hopf, 32), sphere)
traj = descend(crit32, sphere, prof,
               Schedule(h=1e-3, s0=-1.1, s1=1.1, max_steps=300))
bal = energy_balance(traj, sphere, prof)
print(f"perturbed run to s = {traj.s[-1]:.3f}: energy {bal['energy']:.3f} "
      f"(balance {bal['predicted']:.3f}), ||F|| = {F:.4f}")
