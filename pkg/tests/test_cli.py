import csv
import json
from pathlib import Path

import numpy as np
import pytest

from twistreeb.catalog import build_system
from twistreeb.cli import main
from twistreeb.config import config_hash, load_config, parse_config
from twistreeb.errors import ConfigError
from twistreeb.orbits import TwistedOrbit, verify_orbit
from twistreeb.runner import payload_bytes, read_records

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SPHERE = '''
task = "orbit-search"
[system]
name = "star-shaped"
params = { shape = "sphere", radius = 1.0 }
[options]
tau_min = 1.0
tau_max = 4.0
n_seeds = 4
floquet = true
'''


@pytest.fixture(autouse=True)
def _outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("TWISTREEB_OUTPUT_DIR", str(tmp_path / "results"))


def _write(tmp_path, name, text):
    p = tmp_path / f"{name}.toml"
    p.write_text(text)
    return p


def _run(path, *extra):
    return main(["run", str(path), *extra])


# ------------------------------------------------------------------- config

@pytest.mark.parametrize("name", sorted(p.stem for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_parse(name):
    cfg, _ = load_config(CONFIGS / f"{name}.toml")
    assert cfg.experiment_id == name
    build_system(cfg.system.name, **cfg.system.params)


def test_unknown_option_key_path():
    with pytest.raises(ConfigError, match=r"options\.perido"):
        parse_config(dict(task="floquet", system=dict(name="henon-heiles"), options=dict(perido=1)))


def test_nested_key_path():
    with pytest.raises(ConfigError, match=r"options\.start\.tua"):
        parse_config(dict(task="floquet", system=dict(name="henon-heiles"),
                          options=dict(start=dict(tua=1.0))))


def test_bad_task_and_jobs():
    with pytest.raises(ConfigError, match="task"):
        parse_config(dict(task="fly", system=dict(name="henon-heiles")))
    with pytest.raises(ConfigError, match="jobs"):
        parse_config(dict(task="floquet", system=dict(name="henon-heiles"), jobs=0))


def test_config_hash_ignores_id_and_location():
    a, _ = parse_config(dict(task="hofer-norm", system=dict(name="henon-heiles"), experiment_id="a"))
    b, _ = parse_config(dict(task="hofer-norm", system=dict(name="henon-heiles"), experiment_id="b",
                             output_dir="/x"))
    c, _ = parse_config(dict(task="hofer-norm", system=dict(name="henon-heiles"), seed=3))
    assert config_hash(a) == config_hash(b) != config_hash(c)


# ---------------------------------------------------------------- exit codes

def test_config_error_exit(tmp_path, capsys):
    p = _write(tmp_path, "bad", SPHERE.replace("n_seeds", "n_sedes"))
    assert _run(p) == 2
    assert "options.n_sedes" in capsys.readouterr().err


def test_missing_file_and_unknown_param(tmp_path, capsys):
    assert _run(tmp_path / "nope.toml") == 2
    p = _write(tmp_path, "par", SPHERE.replace("radius = 1.0", "radius = 1.0, colour = 2"))
    assert _run(p) == 2
    assert "colour" in capsys.readouterr().err


def test_task_error_exit(tmp_path):
    p = _write(tmp_path, "fail", '''
task = "floquet"
[system]
name = "star-shaped"
params = { shape = "sphere" }
[options]
start = { x0 = [0.0, 0.0, 0.0, 0.0], tau = 1.0 }
''')
    assert _run(p) == 3
    rec = read_records(tmp_path / "results" / "fail.jsonl")[-1]
    assert rec["payload"]["kind"] == "error"
    assert rec["payload"]["error"] == "ConvergenceError"


def test_inconclusive_exit(tmp_path):
    p = _write(tmp_path, "noisy", '''
task = "loop-flow"
seed = 1
[system]
name = "star-shaped"
params = { shape = "sphere" }
[options]
N = 32
noise = 0.01
max_steps = 50
start = { x0 = [1.0, 0.0, 0.0, 0.0], tau = 3.141592653589793 }
''')
    assert _run(p) == 4
    pay = read_records(tmp_path / "results" / "noisy.jsonl")[-1]["payload"]
    assert pay["converged"] is False


# --------------------------------------------------------------------- runs

def test_systems_list(capsys):
    assert main(["systems", "list"]) == 0
    out = capsys.readouterr().out
    for name in ("star-shaped", "magnetic-torus", "henon-heiles", "hill-lunar", "stark-zeeman"):
        assert name in out
    assert main(["systems", "list", "hill"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert len(rows) == 2 and "hill-lunar" in rows[1]


@pytest.fixture(scope="module")
def sphere_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("sphere")
    p = d / "sphere.toml"
    p.write_text(f'output_dir = "{d / "out"}"\n' + SPHERE)
    assert _run(p) == 0
    return d / "out" / "sphere.jsonl"


def test_run_records(sphere_run):
    recs = read_records(sphere_run)
    assert recs
    for r in recs:
        assert r["schema_version"] == 1 and r["experiment_id"] == "sphere"
        assert set(r) == {"schema_version", "experiment_id", "timestamp", "config_hash", "payload"}
        o = r["payload"]["orbit"]
        assert o["tau"] == pytest.approx(np.pi, abs=1e-8)
        assert o["action"] == pytest.approx(np.pi, abs=1e-8)
        assert o["floquet"]["kernel_dim"] == 2


def test_record_round_trip(sphere_run):
    system = build_system("star-shaped", shape="sphere", radius=1.0)
    for r in read_records(sphere_run):
        o = TwistedOrbit.from_dict(r["payload"]["orbit"])
        v = verify_orbit(system, o)
        assert all(v[k] for k in ("residual_ok", "energy_ok", "closure_ok", "equivariance_ok"))


def test_determinism(tmp_path):
    p = _write(tmp_path, "det", SPHERE)
    assert _run(p, "--seed", "7") == 0
    first = read_records(tmp_path / "results" / "det.jsonl")
    assert _run(p, "--seed", "7") == 0
    second = read_records(tmp_path / "results" / "det.jsonl")[len(first):]
    assert [payload_bytes(r) for r in first] == [payload_bytes(r) for r in second]
    assert {r["config_hash"] for r in first + second} == {first[0]["config_hash"]}


def test_forcing_record(tmp_path):
    assert _run(CONFIGS / "sphere_forcing.toml") == 0
    pay = read_records(tmp_path / "results" / "sphere_forcing.jsonl")[-1]["payload"]
    rep = pay["report"]
    assert rep["verdict"] == "distinct-orbits"
    assert rep["gap"] == pytest.approx(np.pi, abs=1e-8)
    assert rep["gap"] <= rep["e_upper"] <= np.pi + 0.1
    assert pay["certificate"]["valid"]


# ------------------------------------------------------------------- export

def _csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], float)


def test_export_trace_and_spectrum(sphere_run, tmp_path, capsys):
    assert main(["export", str(sphere_run), "--kind", "trace", "--out", str(tmp_path)]) == 0
    paths = capsys.readouterr().out.split()
    header, data = _csv(paths[0])
    assert header == ["t", "x1", "x2", "y1", "y2"]
    assert np.allclose(np.sum(data[:, 1:] ** 2, axis=1), 1.0, atol=1e-8)
    assert main(["export", str(sphere_run), "--kind", "spectrum", "--out", str(tmp_path)]) == 0
    header, data = _csv(capsys.readouterr().out.split()[0])
    assert header == ["re", "im"]
    assert np.allclose(data, [1.0, 0.0], atol=1e-8)


def test_export_continuation(tmp_path, capsys):
    assert _run(CONFIGS / "sphere_continuation.toml") == 0
    res = tmp_path / "results" / "sphere_continuation.jsonl"
    capsys.readouterr()
    assert main(["export", str(res), "--kind", "continuation"]) == 0
    header, data = _csv(capsys.readouterr().out.split()[0])
    assert header == ["k", "tau", "action"]
    assert np.all(np.diff(data[:, 0]) > 0)
    assert data[-1, 0] == pytest.approx(0.5)
    assert np.allclose(data[:, 2], np.pi * (1 + data[:, 0]), atol=1e-6)


def test_export_loopflow(tmp_path, capsys):
    p = _write(tmp_path, "lf", '''
task = "loop-flow"
seed = 2
[system]
name = "star-shaped"
params = { shape = "sphere" }
[options]
N = 32
noise = 0.001
max_steps = 40
start = { x0 = [1.0, 0.0, 0.0, 0.0], tau = 3.141592653589793 }
''')
    _run(p)
    capsys.readouterr()
    assert main(["export", str(tmp_path / "results" / "lf.jsonl"), "--kind", "loopflow"]) == 0
    header, data = _csv(capsys.readouterr().out.split()[0])
    assert header == ["step", "s", "action", "grad_norm", "tau"]
    assert np.all(np.diff(data[:, 2]) <= 1e-12)


def test_export_format_error(sphere_run, capsys):
    assert main(["export", str(sphere_run), "--kind", "loopflow"]) == 2
    assert "format error" in capsys.readouterr().err
