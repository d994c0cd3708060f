"""Numerical toolkit for twisted periodic orbits on energy hypersurfaces with
finite-order symmetries: model systems, flows, shooting and closed-form
solvers, a discrete Rabinowitz action functional, displacement certificates
and forcing checks.
"""
from .catalog import (CatalogEntry, build_system, list_systems, make_bumpy_sphere, make_ellipsoid,
                      make_henon_heiles, make_hill_lunar_regularized, make_magnetic_torus,
                      make_mechanical_torus, make_sphere, make_star_shaped, make_stark_zeeman_stub)
from .displacement import (DisplacementCertificate, HoferNorm, PerturbationProfile,
                           displacement_certificate, fiber_translation_profile, hofer_norm,
                           level_set_sample, shear_profile, translation_profile, zero_profile)
from .errors import *  # noqa: F401,F403
from .flow import (FlowResult, MonodromyResult, hyperplane, integrate_batch, integrate_flow,
                   integrate_variational, section_crossing)
from .geometry import (SymmetryAction, SymplecticStructure, SymplecticSystem, complex_rotation,
                       cotangent_lift, ham_vector_field, identity_action, liouville_field_eval,
                       omega_eval, primitive_eval)
from .invariants import (FloquetResult, ForcingReport, contractibility_class, e0_threshold,
                         floquet_analysis, forcing_check, iterate_orbit, orbit_action, reeb_time)
from .loopflow import (DiscreteLoop, Schedule, Trajectory, cutoff_beta, descend, flow_energy,
                       loop_from_orbit, perturbed_action, perturbed_gradient, rabinowitz_action,
                       rabinowitz_gradient, refine_critical)
from .orbits import (ContinuationResult, ShootingConfig, TwistedOrbit, continuation_in_energy,
                     deduplicate_orbits, loop_order, newton_refine, seed_sweep, torus_closed_form,
                     trace_distance, twisted_residual, verify_orbit)

__version__ = "0.1.0"
