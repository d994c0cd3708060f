"""Experiment configuration: TOML files validated against a strict schema.

Example::

    task = "orbit-search"
    seed = 0
    jobs = 1

    [system]
    name = "star-shaped"
    params = { shape = "sphere", radius = 1.0 }

    [options]
    energy = 0.0
    tau_min = 1.0
    tau_max = 6.0
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError

TASKS = ("orbit-search", "closed-form", "continuation", "loop-flow", "forcing", "hofer-norm", "floquet")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSpec(_Strict):
    name: str
    params: Dict[str, object] = Field(default_factory=dict)


class SearchOptions(_Strict):
    energy: Optional[float] = None
    j: int = 0
    tau_min: float = 0.1
    tau_max: float = 10.0
    n_seeds: int = 16
    near_return: float = 0.3
    newton_tol: float = 1e-11
    accept_tol: float = 1e-8
    max_iter: int = 25
    dedupe: bool = True
    dedupe_threshold: float = 1e-6
    box: Optional[List[List[float]]] = None


class OrbitStart(_Strict):
    """Initial orbit: explicit ``(x0, tau, j)`` or the first orbit of a search."""

    x0: Optional[List[float]] = None
    tau: Optional[float] = None
    j: int = 0
    energy: Optional[float] = None
    search: Optional[SearchOptions] = None


class ProfileSpec(_Strict):
    kind: Literal["shear", "translation", "fiber-translation", "zero"] = "shear"
    radius: float = 1.0
    pad: float = 0.02
    a: Optional[List[float]] = None
    shift: Optional[List[float]] = None
    r_in: float = 1.1
    r_out: float = 2.0
    r: float = 2.0


class OrbitSearchOptions(SearchOptions):
    floquet: bool = False
    trace_samples: int = 200


class ClosedFormOptions(_Strict):
    energy: Optional[float] = None
    j: int = 0
    tau_min: float = 0.1
    tau_max: float = 20.0
    winding: int = 1
    trace_samples: int = 200


class ContinuationOptions(_Strict):
    start: OrbitStart = Field(default_factory=OrbitStart)
    k_target: float
    steps: int = 10


class LoopFlowOptions(_Strict):
    start: OrbitStart = Field(default_factory=OrbitStart)
    N: int = 64
    noise: float = 0.0
    refine: bool = False
    profile: Optional[ProfileSpec] = None
    h: float = 1e-3
    h_max: float = 1e-2
    tol: float = 1e-6
    max_steps: int = 2000
    s0: Optional[float] = None
    s1: Optional[float] = None
    local_tol: float = 1e-6
    blowup: float = 1e6


class ForcingOptions(_Strict):
    base: OrbitStart = Field(default_factory=OrbitStart)
    search: SearchOptions = Field(default_factory=SearchOptions)
    exponents: Optional[List[int]] = None
    profile: ProfileSpec = Field(default_factory=ProfileSpec)
    n_samples: int = 10000
    margin: float = 1e-3
    action_tol: float = 1e-6


class HoferOptions(_Strict):
    profile: ProfileSpec = Field(default_factory=ProfileSpec)
    n_time: int = 17
    grid: int = 9
    starts: int = 4
    tol: float = 1e-4


class FloquetOptions(_Strict):
    start: OrbitStart = Field(default_factory=OrbitStart)
    kernel_tol: float = 1e-6


OPTION_MODELS = {
    "orbit-search": OrbitSearchOptions,
    "closed-form": ClosedFormOptions,
    "continuation": ContinuationOptions,
    "loop-flow": LoopFlowOptions,
    "forcing": ForcingOptions,
    "hofer-norm": HoferOptions,
    "floquet": FloquetOptions,
}


class ExperimentConfig(_Strict):
    task: Literal["orbit-search", "closed-form", "continuation", "loop-flow", "forcing",
                  "hofer-norm", "floquet"]
    system: SystemSpec
    options: Dict[str, object] = Field(default_factory=dict)
    experiment_id: Optional[str] = None
    output_dir: Optional[str] = None
    seed: int = 0
    jobs: int = Field(default=1, ge=1)


def _key_path(err, prefix=()):
    first = err.errors()[0]
    loc = ".".join(str(p) for p in (*prefix, *first["loc"]))
    return loc, first["msg"]


def parse_config(data: dict):
    """Validate a raw mapping; returns ``(ExperimentConfig, options model)``."""
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        loc, msg = _key_path(e)
        raise ConfigError(f"{loc}: {msg}") from None
    try:
        opts = OPTION_MODELS[cfg.task].model_validate(cfg.options)
    except ValidationError as e:
        loc, msg = _key_path(e, ("options",))
        raise ConfigError(f"{loc}: {msg}") from None
    return cfg, opts


def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    cfg, opts = parse_config(data)
    if cfg.experiment_id is None:
        cfg.experiment_id = path.stem
    return cfg, opts


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form (id and output location excluded)."""
    d = cfg.model_dump(exclude={"experiment_id", "output_dir"})
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
