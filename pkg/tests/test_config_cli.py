import json
import math
import subprocess
import sys

import numpy as np
import pytest

from bseelab.cli import main
from bseelab.config import BUILTINS, ConfigError, closed_form, load_config, parse_config
from bseelab.experiments import convergence_study, observed_order

BASE = """
[space]
dim = 1
[time]
horizon = 1.0
steps = 4
[model]
kind = tree
[generator]
kind = diag
values = 1.0
[driver]
kind = zero
[terminal]
kind = constant
vector = 2.0
[solver]
method = linear
"""


def _edit(old, new):
    assert old in BASE
    return BASE.replace(old, new)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_parse_and_hash_stably(name):
    a, b = load_config(name), load_config(name)
    assert a.hash() == b.hash() and len(a.hash()) == 64
    assert parse_config(a.canonical_text()).hash() == a.hash()


@pytest.mark.parametrize("text, field", [
    (_edit("[solver]", "[solver]\nspeed = 3"), "solver.speed"),
    (BASE + "[extras]\nx = 1\n", "extras"),
    (_edit("dim = 1", "dim = 0"), "space.dim"),
    (_edit("dim = 1", "dim = 1\nnorm_exponent = 1"), "space.norm_exponent"),
    (_edit("horizon = 1.0", "horizon = -1"), "time.horizon"),
    (_edit("steps = 4", "steps = four"), "time.steps"),
    (_edit("steps = 4", "steps = 30"), "time.steps"),
    (_edit("kind = tree", "kind = forest"), "model.kind"),
    (_edit("kind = diag", "kind = spiral"), "generator.kind"),
    (_edit("values = 1.0", "values = 1.0, 2.0"), "generator.values"),
    (_edit("vector = 2.0", "vector = 2.0, 1.0"), "terminal.vector"),
    (_edit("method = linear", "method = magic"), "solver.method"),
    (_edit("[driver]\nkind = zero", "[driver]\nkind = nonlinear\nname = sin_u\nscale = 0.5"), "solver.method"),
    (_edit("method = linear", "method = a0"), "solver.method"),
    (_edit("method = linear", "method = picard\ndelta = 0.01"), "solver.delta"),
    (_edit("[time]\nhorizon = 1.0\nsteps = 4\n", ""), "time"),
    (_edit("horizon = 1.0\n", ""), "time.horizon"),
    (_edit("vector = 2.0", "vector = nan"), "terminal.vector"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field


def test_unknown_reference():
    with pytest.raises(ConfigError):
        load_config("no_such_scenario")


def test_closed_form_coverage():
    assert closed_form(load_config("picard_sin_square")) is None
    cf = closed_form(load_config("a0_constant_drift"))
    U = cf.U(0.25, np.zeros(3))
    np.testing.assert_allclose(U, np.tile([-0.75, 0.75], (3, 1)))


def test_observed_order():
    assert observed_order(0.4, 0.2, 8, 16) == pytest.approx(1.0)
    assert observed_order(1e-15, 1e-16, 8, 16) == math.inf
    assert observed_order(0.1, 0.1, 8, 16) == 0.0


def test_solve_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--config", "linear_flow_rotation", "--out", str(out), "--dump-nodes"]) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0] == "t,E_norm_U,E_norm_V,residual_t"
    assert len(lines) == 1 + 9
    last = lines[-1].split(",")
    assert float(last[0]) == 1.0 and last[2] == "nan"
    man = json.loads((out / "manifest.json").read_text())
    assert man["converged"] and man["residual"] <= man["tol"]
    assert man["config_hash"] == load_config("linear_flow_rotation").hash()
    assert "solve_s" in json.loads((out / "timings.json").read_text())
    nodes = np.load(out / "nodes.npz")
    assert nodes["U_8"].shape == (256, 2)
    assert "residual=" in capsys.readouterr().out


def test_solve_is_byte_identical(tmp_path):
    for k in (1, 2):
        assert main(["solve", "--config", "picard_sin_square", "--out", str(tmp_path / str(k))]) == 0
    for fname in ("summary.csv", "manifest.json"):
        assert (tmp_path / "1" / fname).read_bytes() == (tmp_path / "2" / fname).read_bytes()


def test_seed_override_changes_paths(tmp_path):
    main(["solve", "--config", "paths_demo", "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["solve", "--config", "paths_demo", "--out", str(tmp_path / "b"), "--seed", "2"])
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["seed"] == 1 and b["seed"] == 2 and a["config_hash"] != b["config_hash"]


def test_env_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("BSEELAB_OUT", str(tmp_path))
    assert main(["solve", "--config", "zero"]) == 0
    assert (tmp_path / "solve" / "summary.csv").is_file()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(_edit("dim = 1", "dim = 1\nnorm_exponent = 1"))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "space.norm_exponent" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_nonconvergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "strong.ini"
    cfg.write_text(_edit("[driver]\nkind = zero", "[driver]\nkind = nonlinear\nname = sin_u\nscale = 4.0")
                   .replace("method = linear", "method = picard\ndelta = 0.5"))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "theta=" in capsys.readouterr().err


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["convergence", "--config", "zero", "--steps", "8,x"])
    assert exc.value.code == 2


def test_verify_cli(tmp_path, capsys):
    assert main(["verify", "--suite", "nonsense"]) == 2
    capsys.readouterr()
    assert main(["verify", "--suite", "representation", "--out", str(tmp_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and all(p["passed"] for p in report["properties"])
    assert (tmp_path / "verify.json").is_file()


def test_convergence_cli(tmp_path, capsys):
    assert main(["convergence", "--config", "linear_drift_scalar", "--steps", "8,16",
                 "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "convergence.csv").read_text().splitlines()
    assert rows[0] == "N,max_error,residual,observed_order"
    assert float(rows[2].split(",")[3]) >= 0.4
    assert main(["convergence", "--config", "zero", "--steps", "8", "--out", str(tmp_path / "one")]) == 0
    assert (tmp_path / "one" / "convergence.csv").read_text().splitlines()[0] == "N,max_error,residual"
    assert main(["convergence", "--config", "picard_sin_square"]) == 2


def test_convergence_study_lattice_override():
    rows = convergence_study(load_config("a0_wiener_linear"), [8, 32], "lattice")
    assert all(r.error <= 1e-12 for r in rows) and rows[1].order == math.inf


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bseelab", "solve", "--config", "zero", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
