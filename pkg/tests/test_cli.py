import json
import math

import jsonschema
import numpy as np
import pytest

from gapnls import cli, fileio
from gapnls.fileio import ConfigError, load_config, load_graph, parse_number, parse_yaml
from gapnls.graphs import DIRICHLET, KIRCHHOFF, Delta
from gapnls.problem import build_problem
from gapnls.spectral import action

INTERVAL = """\
vertices: 2
edges:
  - [0, 1, pi]
conditions:
  0: dirichlet
  1: dirichlet
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "interval.yaml").write_text(INTERVAL)
    (tmp_path / "int.yaml").write_text(
        "backend: graph\ngraph: interval.yaml\nnonlinearity: {p: 4}\ntruncation: 24\n"
        "nodes_per_edge: 257\nsweep: {samples: 9}\n")
    (tmp_path / "torus.yaml").write_text("backend: torus\nl_max: 3\nnonlinearity: {p: 4}\n")
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_parse_number():
    assert parse_number("2*pi") == pytest.approx(2 * math.pi)
    assert parse_number("pi/2") == pytest.approx(math.pi / 2)
    assert parse_number(3) == 3.0
    with pytest.raises(ValueError):
        parse_number("__import__('os')")


def test_graph_file_conditions(tmp_path):
    p = tmp_path / "g.yaml"
    p.write_text("vertices: 3\nedges:\n  - [0, 1, 1.0]\n  - [1, 2, 2*pi]\n"
                 "conditions:\n  0: dirichlet\n  1: delta(2.5)\n  2: Kirchhoff\n")
    g = load_graph(str(p))
    assert g.condition(0) == DIRICHLET and g.condition(1) == Delta(2.5) and g.condition(2) == KIRCHHOFF
    assert g.edges[1][2] == pytest.approx(2 * math.pi)


@pytest.mark.parametrize("text,line,col", [
    ("vertices: 2\nedges:\n  - [0, 1, pi]\nconditions:\n  1: robin\n", 5, 6),
    ("vertices: 2\nedges:\n  - [0, 1, -1]\n", 3, 12),
    ("vertices: 2\nedges:\n  - [0, 5, 1]\n", 3, 9),
    ("vertices: 2\nedges: [[0, 1, 1]\n", 3, 1),
])
def test_graph_errors_carry_position(tmp_path, text, line, col):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError) as exc:
        load_graph(str(p))
    assert (exc.value.line, exc.value.column) == (line, col)
    assert f"bad.yaml:{line}:{col}:" in str(exc.value)


def test_config_invariants(workdir):
    (workdir / "p2.yaml").write_text("backend: graph\ngraph: interval.yaml\nnonlinearity: {p: 2}\n")
    with pytest.raises(ConfigError, match="p > 2"):
        load_config(str(workdir / "p2.yaml"))
    (workdir / "missing.yaml").write_text("backend: graph\ngraph: nowhere.yaml\n")
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(str(workdir / "missing.yaml"))
    (workdir / "n1.yaml").write_text("backend: torus\nl_max: 3\ntruncation: 1\n")
    with pytest.raises(ConfigError, match="at least 2"):
        load_config(str(workdir / "n1.yaml"))


def test_spectrum_interval(workdir):
    out = workdir / "s.csv"
    assert run("spectrum", workdir / "int.yaml", "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "index,eigenvalue,multiplicity_cluster,gap_to_next"
    vals = [float(l.split(",")[1]) for l in lines[1:6]]
    assert np.allclose(vals, [1, 4, 9, 16, 25], atol=1e-9)
    assert (workdir / "s.csv.meta.json").exists()


def test_spectrum_torus_flags_gap(workdir):
    out = workdir / "t.csv"
    assert run("spectrum", workdir / "torus.yaml", "-o", out) == 0
    rows = [l.split(",") for l in out.read_text().splitlines()[1:]]
    assert [float(r[1]) for r in rows[:6]] == [0, 1, 1, 1, 1, 4]
    gap_rows = [r for r in rows if float(r[3]) > 0]
    assert ["9", "4.0", "4", "12.0"] in gap_rows


def test_malformed_graph_exit_2(workdir, capsys):
    (workdir / "interval.yaml").write_text("vertices: 2\nedges: [[0, 1, pi]\n")
    assert run("spectrum", workdir / "int.yaml", "-o", workdir / "x.csv") == 2
    err = capsys.readouterr().err
    assert "interval.yaml:3:1:" in err


def test_solve_and_schema(workdir):
    out = workdir / "st.json"
    assert run("solve", workdir / "int.yaml", "--lambda", 2.5, "--gap", 1, "-o", out) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, fileio.schema("ground_state"))
    assert doc["lambda"] == 2.5 and doc["n"] == 1 and doc["sign_changing"]


def test_solve_exit_codes(workdir):
    assert run("solve", workdir / "int.yaml", "--lambda", 5.0, "--gap", 1, "-o", workdir / "a.json") == 2
    (workdir / "p2.yaml").write_text("backend: graph\ngraph: interval.yaml\nnonlinearity: {p: 2}\n")
    assert run("solve", workdir / "p2.yaml", "--lambda", 2.5, "--gap", 1, "-o", workdir / "b.json") == 2


def test_solve_is_byte_deterministic(workdir):
    a, b = workdir / "a.json", workdir / "b.json"
    run("solve", workdir / "int.yaml", "--lambda", 3.0, "--gap", 1, "--seed", 3, "-o", a)
    run("solve", workdir / "int.yaml", "--lambda", 3.0, "--gap", 1, "--seed", 3, "-o", b)
    assert a.read_bytes() == b.read_bytes()


def test_state_round_trip(workdir):
    out = workdir / "st.json"
    run("solve", workdir / "int.yaml", "--lambda", 2.5, "--gap", 1, "-o", out)
    doc = fileio.load_state_dict(str(out))
    basis, nl = build_problem(load_config(str(workdir / "int.yaml")))
    c = np.array(doc["coefficients"])
    assert action(basis, c, doc["lambda"], nl) == pytest.approx(doc["action"], rel=1e-12)
    assert 0.5 * np.sum(c * c) == pytest.approx(doc["mass"], rel=1e-12)
    assert np.array_equal(basis.synthesize(c), np.array(doc["grid_samples"]))


def test_sweep_csv(workdir):
    out = workdir / "c.csv"
    assert run("sweep", workdir / "int.yaml", "--gap", 1, "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "lambda,action,mass,residual,sign_changing"
    assert len(lines) == 10
    assert all(l.endswith(",true") for l in lines[1:])


def test_normalize(workdir, capsys):
    out = workdir / "n.json"
    assert run("normalize", workdir / "int.yaml", "--gap", 1, "--mu", 3.0, "-o", out) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, fileio.schema("normalized"))
    assert abs(doc["state"]["mass"] - 1.5) <= 1e-6 * 1.5
    assert run("normalize", workdir / "int.yaml", "--gap", 1, "--mu", 1e9, "-o", workdir / "m.json") == 5
    assert "outside the achieved interval" in capsys.readouterr().err


def test_normalize_l2_convention(workdir):
    out = workdir / "n.json"
    mu = math.sqrt(3.0)
    assert run("normalize", workdir / "int.yaml", "--gap", 1, "--mu", mu, "--mass-convention", "l2",
               "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["state"]["mass_in_convention"] == pytest.approx(mu, rel=1e-6)


def test_oracle_report(workdir):
    out = workdir / "o.json"
    assert run("oracle", workdir / "int.yaml", "all", "--lambda", 0, "--M", 1, "-o", out) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, fileio.schema("oracle_report"))
    assert doc["tau"] == pytest.approx(7.416298709205489, abs=1e-12)
    assert set(doc["checks"].values()) == {"pass"}


def test_oracle_rejects_inadmissible(workdir):
    (workdir / "bad_ode.yaml").write_text(
        "backend: graph\ngraph: interval.yaml\node: {f: two-sided, p: 2.0}\n")
    assert run("oracle", workdir / "bad_ode.yaml", "period", "-o", workdir / "o.json") in (2,)


def test_validate_torus_all_pass(workdir):
    out = workdir / "m.json"
    (workdir / "torus.yaml").write_text("backend: torus\nl_max: 3\nnonlinearity: {p: 4}\nsweep: {samples: 33}\n")
    assert run("validate", workdir / "torus.yaml", "-o", out) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, fileio.schema("validation_manifest"))
    assert doc["all_pass"] and "fail" not in doc["checks"].values()


def test_yaml_positions():
    doc = parse_yaml("a:\n  b: [1, 2]\n")
    assert doc.children["a"].children["b"].mark.line == 1
