"""Experiment orchestration, result records and plot-data export.

Records are JSON objects, one per line, appended to
``<output_dir>/<experiment_id>.jsonl``::

    {"schema_version": 1, "experiment_id": ..., "timestamp": ...,
     "config_hash": ..., "payload": {"kind": ..., ...}}

Payloads depend only on the configuration (seed and parallelism included),
so reruns reproduce them byte for byte.
"""
from __future__ import annotations

import csv
import json
import os
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import loopflow as lf
from .catalog import build_system
from .config import ExperimentConfig, config_hash, load_config
from .displacement import (displacement_certificate, fiber_translation_profile, hofer_norm,
                           shear_profile, translation_profile, zero_profile)
from .errors import ConfigError, FormatError, NotFoundError, ParameterError, TwistReebError
from .invariants import floquet_analysis, forcing_check, orbit_action
from .orbits import (ShootingConfig, TwistedOrbit, _plain, continuation_in_energy,
                     deduplicate_orbits, loop_order, newton_refine, orbit_trace, seed_sweep,
                     torus_closed_form)

SCHEMA_VERSION = 1
OUTPUT_ENV = "TWISTREEB_OUTPUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_TASK, EXIT_INCONCLUSIVE = 0, 2, 3, 4


class ResultSink:
    """Single append-only writer for one record file."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, cfg: ExperimentConfig, payload: dict):
        rec = dict(schema_version=SCHEMA_VERSION, experiment_id=cfg.experiment_id,
                   timestamp=datetime.now(timezone.utc).isoformat(), config_hash=config_hash(cfg),
                   payload=_plain(payload))
        with open(self.path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec


def read_records(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def payload_bytes(record) -> bytes:
    """Canonical bytes of a record payload (for determinism checks)."""
    return json.dumps(record["payload"], sort_keys=True).encode()


# ------------------------------------------------------------------ helpers

def _energy(system, value):
    return system.default_energy if value is None else float(value)


def _shooting(system, opts, seed, jobs, j=None):
    box = None if opts.box is None else np.asarray(opts.box, float)
    return ShootingConfig(energy=_energy(system, opts.energy), j=opts.j if j is None else j,
                          tau_min=opts.tau_min, tau_max=opts.tau_max, n_seeds=opts.n_seeds,
                          near_return=opts.near_return, newton_tol=opts.newton_tol,
                          accept_tol=opts.accept_tol, max_iter=opts.max_iter, box=box, seed=seed,
                          n_jobs=jobs)


def _search(system, opts, seed, jobs, j=None):
    orbits = list(seed_sweep(system, _shooting(system, opts, seed, jobs, j)))
    if opts.dedupe and orbits:
        orbits = deduplicate_orbits(orbits, system, opts.dedupe_threshold)
    return orbits


def _start_orbit(system, start, seed, jobs) -> TwistedOrbit:
    if start.x0 is not None:
        if start.tau is None:
            raise ConfigError("start: tau is required with x0")
        sc = ShootingConfig(energy=_energy(system, start.energy), j=start.j)
        return newton_refine(system, sc, (start.x0, start.tau))
    if start.search is None:
        raise ConfigError("start: give x0 and tau or a search table")
    orbits = _search(system, start.search, seed, jobs)
    if not orbits:
        raise NotFoundError("start search found no orbit")
    return min(orbits, key=lambda o: o.tau)


def _trace_payload(system, orbit, samples):
    fl = orbit_trace(system, orbit)
    ts = np.linspace(0.0, fl.t[-1], samples)
    return dict(t=ts, x=fl(ts))


def _orbit_payload(system, orbit, samples):
    return dict(kind="orbit", orbit=orbit.to_dict(), trace=_trace_payload(system, orbit, samples))


def build_profile(system, spec):
    if spec.kind == "shear":
        return shear_profile(system.dim // 2, spec.radius, spec.pad, spec.r)
    if spec.kind == "translation":
        if spec.a is None:
            raise ConfigError("options.profile.a is required for a translation profile")
        return translation_profile(system.structure, spec.a, spec.r_in, spec.r_out, spec.r)
    if spec.kind == "fiber-translation":
        if spec.shift is None:
            raise ConfigError("options.profile.shift is required for a fiber translation")
        return fiber_translation_profile(system, spec.shift, spec.r_in, spec.r_out, spec.r)
    return zero_profile(system.structure, spec.r)


# -------------------------------------------------------------------- tasks

def _task_orbit_search(system, cfg, opts, sink):
    orbits = _search(system, opts, cfg.seed, cfg.jobs)
    for o in orbits:
        o.action = orbit_action(o, system)
        if opts.floquet:
            floquet_analysis(o, system)
        sink.write(cfg, _orbit_payload(system, o, opts.trace_samples))
    return EXIT_OK if orbits else EXIT_INCONCLUSIVE


def _task_closed_form(system, cfg, opts, sink):
    k = _energy(system, opts.energy)
    orbits = torus_closed_form(system, k, opts.j, (opts.tau_min, opts.tau_max), opts.winding)
    for o in orbits:
        sink.write(cfg, _orbit_payload(system, o, opts.trace_samples))
    return EXIT_OK if orbits else EXIT_INCONCLUSIVE


def _task_continuation(system, cfg, opts, sink):
    orbit = _start_orbit(system, opts.start, cfg.seed, cfg.jobs)
    res = continuation_in_energy(system, orbit, opts.k_target, opts.steps)
    sink.write(cfg, dict(kind="continuation", k=[o.energy for o in res], tau=[o.tau for o in res],
                         action=[orbit_action(o, system) for o in res], status=res.status,
                         message=res.message, location=res.location,
                         orbits=[o.to_dict() for o in res]))
    return EXIT_OK if res.status == "complete" else EXIT_INCONCLUSIVE


def _task_loop_flow(system, cfg, opts, sink):
    orbit = _start_orbit(system, opts.start, cfg.seed, cfg.jobs)
    loop = lf.loop_from_orbit(system, orbit, opts.N)
    if opts.refine:
        loop = lf.refine_critical(loop, system)
    if opts.noise > 0:
        rng = np.random.default_rng(cfg.seed)
        loop.points = loop.points + opts.noise * rng.standard_normal(loop.points.shape)
    profile = None
    if opts.profile is not None:
        profile = build_profile(system, opts.profile)
        hofer_norm(profile)
    r = profile.r if profile is not None else 0.0
    sched = lf.Schedule(h=opts.h, h_max=opts.h_max, tol=opts.tol, max_steps=opts.max_steps,
                        s0=-(r + 0.1) if opts.s0 is None else opts.s0,
                        s1=(r + 0.1) if opts.s1 is None else opts.s1,
                        local_tol=opts.local_tol, blowup=opts.blowup)
    traj = lf.descend(loop, system, profile, sched)
    payload = dict(kind="loopflow", orbit=orbit.to_dict(), N=opts.N, **traj.to_dict())
    payload["flow_energy"] = lf.flow_energy(traj, system)
    sink.write(cfg, payload)
    return EXIT_OK if traj.converged else EXIT_INCONCLUSIVE


def _task_forcing(system, cfg, opts, sink):
    m = system.symmetry.order
    exps = range(m) if opts.exponents is None else opts.exponents
    orbits = []
    for j in exps:
        # iterates are candidates here, so no deduplication
        orbits += list(seed_sweep(system, _shooting(system, opts.search, cfg.seed, cfg.jobs, j)))
    base = _start_orbit(system, opts.base, cfg.seed, cfg.jobs)
    profile = build_profile(system, opts.profile)
    cert = displacement_certificate(system, profile, n_samples=opts.n_samples,
                                    energy=_energy(system, opts.search.energy), margin=opts.margin,
                                    seed=cfg.seed)
    rep = forcing_check(orbits, base, cert, system, action_tol=opts.action_tol)
    sink.write(cfg, dict(kind="forcing", report=rep.to_dict(), certificate=cert.to_dict(),
                         base=base.to_dict(), n_orbits=len(orbits)))
    return EXIT_INCONCLUSIVE if rep.verdict == "inconclusive" else EXIT_OK


def _task_hofer(system, cfg, opts, sink):
    profile = build_profile(system, opts.profile)
    h = hofer_norm(profile, opts.n_time, opts.grid, opts.starts, opts.tol)
    sink.write(cfg, dict(kind="hofer", profile=profile.name, plus=h.plus, minus=h.minus,
                         total=h.total, change=h.change, confident=h.confident, n_time=h.n_time))
    return EXIT_OK


def _task_floquet(system, cfg, opts, sink):
    orbit = _start_orbit(system, opts.start, cfg.seed, cfg.jobs)
    res = floquet_analysis(orbit, system, opts.kernel_tol)
    sink.write(cfg, dict(kind="spectrum", orbit=orbit.to_dict(), **res.to_dict()))
    return EXIT_OK


TASKS = {
    "orbit-search": _task_orbit_search,
    "closed-form": _task_closed_form,
    "continuation": _task_continuation,
    "loop-flow": _task_loop_flow,
    "forcing": _task_forcing,
    "hofer-norm": _task_hofer,
    "floquet": _task_floquet,
}


def output_path(cfg: ExperimentConfig) -> Path:
    out = cfg.output_dir or os.environ.get(OUTPUT_ENV) or "results"
    return Path(out) / f"{cfg.experiment_id}.jsonl"


def run_config(path, seed=None, jobs=None, stderr=None):
    """Run one configuration file; returns ``(exit_status, record_path)``."""
    stderr = sys.stderr if stderr is None else stderr
    try:
        cfg, opts = load_config(path)
        if seed is not None:
            cfg.seed = int(seed)
        if jobs is not None:
            cfg.jobs = int(jobs)
        system = build_system(cfg.system.name, **cfg.system.params)
    except (ConfigError, ParameterError) as e:
        print(f"config error: {e}", file=stderr)
        return EXIT_CONFIG, None
    sink = ResultSink(output_path(cfg))
    try:
        status = TASKS[cfg.task](system, cfg, opts, sink)
    except ConfigError as e:
        print(f"config error: {e}", file=stderr)
        return EXIT_CONFIG, sink.path
    except (TwistReebError, ArithmeticError, ValueError, RuntimeError) as e:
        sink.write(cfg, dict(kind="error", error=type(e).__name__, message=str(e),
                             traceback=traceback.format_exc(limit=5)))
        print(f"task failed: {type(e).__name__}: {e}", file=stderr)
        return EXIT_TASK, sink.path
    return status, sink.path


# ------------------------------------------------------------------- export

_KIND_PAYLOAD = {"trace": ("orbit",), "continuation": ("continuation",), "loopflow": ("loopflow",),
                 "spectrum": ("spectrum", "orbit")}


def _rows(kind, payload):
    if kind == "trace":
        x = np.asarray(payload["trace"]["x"])
        n = x.shape[1] // 2
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
        return header, [[t, *row] for t, row in zip(payload["trace"]["t"], x)]
    if kind == "continuation":
        return ["k", "tau", "action"], list(zip(payload["k"], payload["tau"], payload["action"]))
    if kind == "loopflow":
        return (["step", "s", "action", "grad_norm", "tau"],
                [[i, s, a, g, t] for i, (s, a, g, t) in
                 enumerate(zip(payload["s"], payload["action"], payload["grad_norm"], payload["tau"]))])
    fl = payload if payload["kind"] == "spectrum" else payload["orbit"].get("floquet")
    if not fl:
        return None
    return ["re", "im"], [list(z) for z in fl["multipliers"]]


def export_plot_data(result_path, kind: str, out_dir=None):
    """Write one CSV per matching record; returns the list of written paths."""
    if kind not in _KIND_PAYLOAD:
        raise FormatError(f"unknown export kind {kind!r}")
    result_path = Path(result_path)
    records = read_records(result_path)
    out = Path(out_dir) if out_dir is not None else result_path.parent
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, rec in enumerate(records):
        p = rec["payload"]
        if p.get("kind") not in _KIND_PAYLOAD[kind]:
            continue
        rows = _rows(kind, p)
        if rows is None:
            continue
        header, data = rows
        path = out / f"{result_path.stem}_{kind}_{i}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows([[repr(float(v)) if not isinstance(v, int) else v for v in row] for row in data])
        written.append(path)
    if not written:
        kinds = sorted({r["payload"].get("kind") for r in records})
        raise FormatError(f"no {kind!r} payloads in {result_path} (found {kinds})")
    return written
