import csv
import json
import math

import numpy as np
import pytest

from nrhc_consensus import cli
from nrhc_consensus.dynamics import LinearModel, register_model
from nrhc_consensus.graph import EXAMPLE3_ADJACENCY, has_spanning_tree, is_jointly_connected


def test_example1_preset_constants():
    c = cli.load_config("example1")
    assert c.m == 4 and c.model == "lorenz"
    assert np.array_equal(c.x0.T, [[-1, 2, -10, 9], [10, -1, 20, -10], [2, 5, 8, -2]])
    for w in c.weights:
        assert np.array_equal(w.Q, np.eye(3)) and np.array_equal(w.QN, np.eye(3)) and np.array_equal(w.R, np.eye(3))
    assert np.array_equal(c.integrator.As, -50 * np.eye(3))
    assert (c.horizon.Tf, c.horizon.alpha) == (1.0, 0.01)
    assert (c.integrator.ts, c.integrator.tau_step) == (0.01, 0.005)
    assert c.t_end == 20.0 and c.delay == 0.0 and not c.schedule.is_auto
    topos = c.schedule.topologies
    assert not any(has_spanning_tree(t) for t in topos) and is_jointly_connected(topos)


def test_example2_and_example3_presets():
    assert cli.load_config("example2").schedule.is_auto
    c = cli.load_config("example3")
    assert c.delay == 0.2 and c.delay_steps == 20 and c.t_end == 30.0
    assert np.array_equal(c.schedule.topologies[0].adjacency, EXAMPLE3_ADJACENCY)
    assert cli.load_config("example3", delay=1.0).delay_steps == 100
    with pytest.raises(cli.ConfigError, match="delay"):
        cli.load_config("example3", delay=0.0)


@pytest.mark.parametrize("name", cli.PRESETS)
def test_round_trip(name, tmp_path):
    c = cli.load_config(name)
    assert cli.load_config(json.loads(cli.emit_config(c))) == c
    path = tmp_path / "cfg.json"
    cli.emit_config(c, path)
    again = cli.load_config(str(path))
    assert again == c and again.name == name


def _doc(**changes):
    doc = json.loads(cli.emit_config(cli.load_config("example1")))
    doc.update(changes)
    return doc


@pytest.mark.parametrize("changes, field", [
    ({"weights": {"Q": [1, -1, 1], "QN": [1, 1, 1], "R": [1, 1, 1]}}, "weights"),
    ({"delay": 0.015}, "delay"),
    ({"integrator": {"As": [1.0, -1.0, -1.0]}}, "integrator"),
    ({"x0": [[1, 2, 3], [1, 2]]}, "x0"),
    ({"t_end": "long"}, "t_end"),
    ({"bogus": 1}, "bogus"),
    ({"switching": {"mode": "fixed"}}, "switches"),
    ({"switching": {"mode": "fixed", "switches": [[0.0, 9]]}}, "switching"),
    ({"topologies": [[[1, 0], [0, 0]]]}, "topologies"),
])
def test_validation_errors_name_the_field(changes, field):
    with pytest.raises(cli.ConfigError, match=field):
        cli.load_config(_doc(**changes))


def test_minimal_config_uses_defaults():
    c = cli.load_config({"x0": [[0, 0, 1], [1, 0, 0]], "topologies": [[0, 1, 1, 0]],
                         "switching": {"mode": "auto"}})
    assert c.t_end == 20.0 and np.array_equal(c.weights[0].Q, np.eye(3))
    assert np.array_equal(c.integrator.As, -50 * np.eye(3))


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_and_emit_outputs(tmp_path):
    c = cli.load_config("example1", t_end=1.2)
    assert cli.run_and_emit(c, tmp_path) == cli.EXIT_OK
    rows = _rows(tmp_path / "trajectory.csv")
    assert ",".join(rows[0]) == "t,agent,x1,x2,x3,u1,u2,u3,sigma,J,P_norm,consensus_err"
    assert len(rows) - 1 == c.m * (math.floor(c.t_end / c.ts) + 1)
    assert float(rows[1][-1]) == pytest.approx(22.715633383201094)
    sw = _rows(tmp_path / "switching.csv")
    m = json.loads((tmp_path / "metrics.json").read_text())
    events = [(e["t"], e["from"], e["to"]) for e in m["switch_events"]]
    assert events == [(float(t), int(a), int(b)) for t, a, b in sw[1:]]
    assert [e[0] for e in events] == sorted(e[0] for e in events) == [0.5, 1.0]
    assert m["samples"] == 121 and m["diverged"] is None


def test_t_end_zero_writes_one_row_per_agent(tmp_path):
    assert cli.run_and_emit(cli.load_config("example2", t_end=0.0), tmp_path) == 0
    assert len(_rows(tmp_path / "trajectory.csv")) == 1 + 4


def test_rerun_is_byte_identical(tmp_path):
    c = cli.load_config("example3", t_end=0.5)
    cli.run_and_emit(c, tmp_path / "a")
    cli.run_and_emit(c, tmp_path / "b")
    for name in ("trajectory.csv", "switching.csv", "metrics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.json"
    cli.emit_config(cli.load_config("example1", t_end=0.05), good)
    assert cli.main(["check", "--config", str(good)]) == cli.EXIT_OK
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(_doc(delay=0.013)))
    assert cli.main(["check", "--config", str(bad)]) == cli.EXIT_VALIDATION
    (tmp_path / "junk.json").write_text("{not json")
    assert cli.main(["check", "--config", str(tmp_path / "junk.json")]) == cli.EXIT_VALIDATION
    assert cli.main(["check", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--config", str(good), "--out", str(blocker / "out")]) == cli.EXIT_IO
    assert cli.main(["run", "--preset", "example3", "--delay", "0", "--out", str(tmp_path)]) == cli.EXIT_VALIDATION
    assert cli.main(["run", "--preset", "example1", "--t-end", "0.02", "--out", str(tmp_path / "o")]) == 0
    assert "consensus error" in capsys.readouterr().out


def test_divergence_exit_code_flushes_partial_output(tmp_path):
    doc = _doc(model="runaway_cli_test", t_end=2.0)
    register_model("runaway_cli_test", lambda gauss_newton=False: LinearModel(3000.0 * np.eye(3), gauss_newton))
    with np.errstate(all="ignore"):
        status = cli.run_and_emit(cli.load_config(doc), tmp_path)
    assert status == cli.EXIT_DIVERGENCE
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["diverged"] and 0 < m["samples"] < 200
    assert len(_rows(tmp_path / "trajectory.csv")) == 1 + 4 * m["samples"]


def test_oracle_subcommands(capsys):
    assert cli.main(["oracle", "riccati-scalar"]) == 0
    assert "tanh(1)" in capsys.readouterr().out
    assert cli.main(["oracle", "fd-check", "--preset", "example1", "--points", "50"]) == 0
    assert "PASS" in capsys.readouterr().out
