"""Configuration parsing and deterministic serialization.

Config and graph files are YAML.  Parse and validation errors carry the
line and column of the offending node.  JSON output uses shortest
round-trip float repr with sorted keys; run metadata (time, argv) goes to a
``.meta.json`` sidecar so the main outputs are byte-reproducible.
"""
from __future__ import annotations

import ast
import csv
import io
import json
import math
import operator
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

import numpy as np
import yaml

from .graphs import DIRICHLET, KIRCHHOFF, Delta, MetricGraph
from .masscurve import MASS_CONVENTIONS
from .solver import SolverConfig

SCHEMA_VERSION = 1
BACKENDS = ("graph", "torus", "square-navier")


class ConfigError(ValueError):
    def __init__(self, message, source: str = "<config>", mark=None):
        self.line = mark.line + 1 if mark is not None else None
        self.column = mark.column + 1 if mark is not None else None
        where = f"{source}:{self.line}:{self.column}: " if mark is not None else f"{source}: "
        super().__init__(where + message)


# -- YAML with node positions --------------------------------------------------

class _Located:
    """Plain value plus the YAML mark of its node (and of child nodes)."""

    def __init__(self, value, mark, children=None):
        self.value, self.mark, self.children = value, mark, children or {}


def _convert(node) -> _Located:
    if isinstance(node, yaml.MappingNode):
        out, kids = {}, {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else _scalar(k)
            child = _convert(v)
            out[key] = child.value
            kids[key] = child
        return _Located(out, node.start_mark, kids)
    if isinstance(node, yaml.SequenceNode):
        kids = [_convert(v) for v in node.value]
        return _Located([k.value for k in kids], node.start_mark, dict(enumerate(kids)))
    return _Located(_scalar(node), node.start_mark)


def _scalar(node):
    return yaml.safe_load(yaml.serialize(node))


def load_yaml(path: str) -> _Located:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", path) from exc
    return parse_yaml(text, path)


def parse_yaml(text: str, source: str = "<string>") -> _Located:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        raise ConfigError(exc.problem or str(exc), source, exc.problem_mark) from exc
    if node is None:
        raise ConfigError("empty document", source)
    return _convert(node)


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow}


def parse_number(value) -> float:
    """A float, or an arithmetic expression in numbers and ``pi`` (``"2*pi"``)."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a number")
    if isinstance(value, (int, float)):
        return float(value)

    def ev(n):
        if isinstance(n, ast.Expression):
            return ev(n.body)
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)):
            return float(n.value)
        if isinstance(n, ast.Name) and n.id == "pi":
            return math.pi
        if isinstance(n, ast.BinOp) and type(n.op) in _OPS:
            return _OPS[type(n.op)](ev(n.left), ev(n.right))
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, (ast.USub, ast.UAdd)):
            return -ev(n.operand) if isinstance(n.op, ast.USub) else ev(n.operand)
        raise ValueError(f"unsupported expression {value!r}")

    return ev(ast.parse(str(value), mode="eval"))


def _parse_condition(text, source, mark):
    if isinstance(text, str):
        t = text.strip().lower()
        if t in (KIRCHHOFF, DIRICHLET):
            return t
        if t.startswith("delta(") and t.endswith(")"):
            try:
                alpha = parse_number(t[6:-1])
            except (ValueError, SyntaxError) as exc:
                raise ConfigError(f"bad delta strength in {text!r}", source, mark) from exc
            if alpha < 0:
                raise ConfigError("delta strength must be nonnegative", source, mark)
            return Delta(alpha)
    raise ConfigError(f"unknown vertex condition {text!r} (kirchhoff | dirichlet | delta(alpha))", source, mark)


def graph_from_located(doc: _Located, source: str) -> MetricGraph:
    if not isinstance(doc.value, dict):
        raise ConfigError("graph description must be a mapping", source, doc.mark)
    for key in ("vertices", "edges"):
        if key not in doc.value:
            raise ConfigError(f"missing key '{key}'", source, doc.mark)
    vnode = doc.children["vertices"]
    if not isinstance(vnode.value, int) or isinstance(vnode.value, bool) or vnode.value < 1:
        raise ConfigError("'vertices' must be a positive integer", source, vnode.mark)
    edges = []
    enode = doc.children["edges"]
    if not isinstance(enode.value, list) or not enode.value:
        raise ConfigError("'edges' must be a nonempty list of [tail, head, length]", source, enode.mark)
    for item in enode.children.values():
        if not isinstance(item.value, list) or len(item.value) != 3:
            raise ConfigError("edge must be [tail, head, length]", source, item.mark)
        a, b, l = item.value
        try:
            length = parse_number(l)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"bad edge length {l!r}", source, item.children[2].mark) from exc
        if not length > 0:
            raise ConfigError(f"edge length must be positive, got {length}", source, item.children[2].mark)
        for k, v in ((0, a), (1, b)):
            if not isinstance(v, int) or not 0 <= v < vnode.value:
                raise ConfigError(f"vertex index {v!r} out of range", source, item.children[k].mark)
        edges.append((a, b, length))
    conds = {}
    cnode = doc.children.get("conditions")
    if cnode is not None:
        if not isinstance(cnode.value, dict):
            raise ConfigError("'conditions' must map vertex -> condition", source, cnode.mark)
        for v, child in cnode.children.items():
            if not isinstance(v, int) or not 0 <= v < vnode.value:
                raise ConfigError(f"condition for unknown vertex {v!r}", source, child.mark)
            conds[v] = _parse_condition(child.value, source, child.mark)
    try:
        return MetricGraph(vnode.value, tuple(edges), conds)
    except ValueError as exc:
        raise ConfigError(str(exc), source, doc.mark) from exc


def load_graph(path: str) -> MetricGraph:
    return graph_from_located(load_yaml(path), path)


@dataclass
class ProblemConfig:
    backend: str
    graph: Optional[MetricGraph] = None
    l_max: Optional[int] = None
    p: float = 4.0
    weight: Any = 1.0  # constant or path to a sampled weight file
    truncation: Optional[int] = None
    nodes_per_edge: int = 257
    degree: int = 8
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: dict = field(default_factory=lambda: {"samples": 33, "spacing": "geometric", "span": 0.05})
    mass_convention: str = "l2-squared"
    seed: int = 0
    ode: dict = field(default_factory=lambda: {"f": "power", "p": 4.0})
    source: str = "<config>"


_SOLVER_KEYS = {"inner_tol", "outer_tol", "max_inner", "max_outer", "restarts", "tr_radius", "polish"}


def load_config(path: str) -> ProblemConfig:
    doc = load_yaml(path)
    return config_from_located(doc, path)


def config_from_located(doc: _Located, source: str) -> ProblemConfig:
    if not isinstance(doc.value, dict):
        raise ConfigError("config must be a mapping", source, doc.mark)
    v, kids = doc.value, doc.children
    backend = v.get("backend")
    if backend not in BACKENDS:
        raise ConfigError(f"'backend' must be one of {BACKENDS}", source, kids.get("backend", doc).mark)
    cfg = ProblemConfig(backend=backend, source=source)
    base = os.path.dirname(os.path.abspath(source)) if os.path.exists(source) else os.getcwd()

    if backend == "graph":
        if "graph" not in v:
            raise ConfigError("graph backend needs a 'graph' entry (file path or mapping)", source, doc.mark)
        g = kids["graph"]
        if isinstance(g.value, str):
            gpath = g.value if os.path.isabs(g.value) else os.path.join(base, g.value)
            if not os.path.exists(gpath):
                raise ConfigError(f"graph file {g.value!r} does not exist", source, g.mark)
            cfg.graph = load_graph(gpath)
        else:
            cfg.graph = graph_from_located(g, source)
    else:
        lm = v.get("l_max")
        if not isinstance(lm, int) or lm < 2:
            raise ConfigError("'l_max' must be an integer >= 2", source, kids.get("l_max", doc).mark)
        cfg.l_max = lm

    nl = v.get("nonlinearity", {})
    nl_node = kids.get("nonlinearity", doc)
    if not isinstance(nl, dict):
        raise ConfigError("'nonlinearity' must be a mapping", source, nl_node.mark)
    try:
        cfg.p = parse_number(nl.get("p", 4.0))
    except (ValueError, SyntaxError) as exc:
        raise ConfigError("bad exponent p", source, nl_node.mark) from exc
    if not cfg.p > 2:
        mark = nl_node.children["p"].mark if "p" in nl_node.children else nl_node.mark
        raise ConfigError(f"exponent must satisfy p > 2, got {cfg.p:g}", source, mark)
    w = nl.get("weight", 1.0)
    if isinstance(w, dict) and "file" in w:
        wpath = w["file"] if os.path.isabs(w["file"]) else os.path.join(base, w["file"])
        if not os.path.exists(wpath):
            raise ConfigError(f"weight file {w['file']!r} does not exist", source, nl_node.children["weight"].mark)
        cfg.weight = wpath
    else:
        try:
            cfg.weight = parse_number(w)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError("weight must be a number or {file: path}", source, nl_node.mark) from exc
        if not cfg.weight > 0:
            raise ConfigError("weight must be positive", source, nl_node.mark)

    for key in ("truncation", "nodes_per_edge", "degree", "seed"):
        if key in v:
            val = v[key]
            if not isinstance(val, int) or isinstance(val, bool) or val < (0 if key == "seed" else 1):
                raise ConfigError(f"'{key}' must be a positive integer", source, kids[key].mark)
            setattr(cfg, key, val)
    if cfg.truncation is not None and cfg.truncation < 2:
        raise ConfigError("'truncation' must be at least 2", source, kids["truncation"].mark)

    sv = v.get("solver", {})
    if not isinstance(sv, dict) or set(sv) - _SOLVER_KEYS:
        raise ConfigError(f"'solver' accepts keys {sorted(_SOLVER_KEYS)}", source, kids.get("solver", doc).mark)
    try:
        cfg.solver = SolverConfig(seed=cfg.seed, **sv)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), source, kids["solver"].mark) from exc

    if "sweep" in v:
        sw = v["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError("'sweep' must be a mapping", source, kids["sweep"].mark)
        cfg.sweep = {**cfg.sweep, **sw}
    mc = v.get("mass_convention", cfg.mass_convention)
    if mc not in MASS_CONVENTIONS:
        raise ConfigError(f"'mass_convention' must be one of {MASS_CONVENTIONS}", source,
                          kids.get("mass_convention", doc).mark)
    cfg.mass_convention = mc
    if "ode" in v:
        if not isinstance(v["ode"], dict):
            raise ConfigError("'ode' must be a mapping", source, kids["ode"].mark)
        cfg.ode = {**cfg.ode, **v["ode"]}
    return cfg


# -- writers -------------------------------------------------------------------

def _plain(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str, obj) -> None:
    _write_text(path, dumps_json(obj))


def _write_text(path, text):
    if path == "-":
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_meta(path: str, **info) -> None:
    if path == "-":
        return
    meta = {"created_unix": time.time(), "argv": sys.argv, **info}
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        fh.write(dumps_json(meta))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: str, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    _write_text(path, buf.getvalue())


def curve_rows(curve):
    return [(s.lam, s.action, s.mass, s.residual, s.sign_changing) for s in curve.samples]


CURVE_HEADER = ("lambda", "action", "mass", "residual", "sign_changing")
SPECTRUM_HEADER = ("index", "eigenvalue", "multiplicity_cluster", "gap_to_next")


def spectrum_rows(eigenvalues):
    from .spectral import eigenvalue_clusters

    lam = np.asarray(eigenvalues)
    rows = []
    for a, b in eigenvalue_clusters(lam):
        for k in range(a, b):
            gap = float(lam[b] - lam[b - 1]) if (k == b - 1 and b < lam.size) else 0.0
            rows.append((k + 1, float(lam[k]), b - a, gap))
    return rows


def state_to_dict(state, convention: Optional[str] = None) -> dict:
    from .masscurve import from_internal_mass

    d = {
        "schema_version": SCHEMA_VERSION,
        "lambda": state.lam,
        "n": state.n,
        "action": state.action,
        "mass": state.mass,
        "residual": state.residual,
        "sign_changing": state.sign_changing,
        "converged": state.converged,
        "backend": state.basis.backend,
        "coefficients": list(map(float, state.coeffs)),
        "grid_samples": list(map(float, state.samples())),
    }
    if convention is not None:
        d["mass_convention"] = convention
        d["mass_in_convention"] = from_internal_mass(state.mass, convention)
    return d


def load_state_dict(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def schema(name: str) -> dict:
    text = resources.files("gapnls").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)
