"""Flat key = value configuration with dotted sections, plus builders.

The format is diffable plain text: one ``section.key = value`` per line,
``#`` comments, values parsed by declared type.  Unknown keys are
rejected by name.  A JSON manifest from a previous run can be supplied
in place of a config file; its embedded config snapshot is used, which
is what makes runs replayable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import (GraphSpace, build_path, build_regular_tree,
                       load_edge_list, _bfs_children)

# key -> (type tag, default). Types: int, float, bool, str, choice:...
SCHEMA: dict[str, tuple[str, object]] = {
    "graph.kind": ("choice:regular_tree,path,custom", "regular_tree"),
    "graph.q": ("int", 2),
    "graph.radius": ("int", 3),
    "graph.n": ("int", 5),
    "graph.edges_file": ("str", ""),
    "graph.boundary": ("str", ""),
    "graph.max_vertices": ("int", 50_000),
    "graph.base_point": ("int", -1),

    "noise.kind": ("choice:white,distance_decay,explicit", "white"),
    "noise.alpha": ("float", 2.0),
    "noise.c": ("float", 1.0),
    "noise.matrix_file": ("str", ""),

    "dynamics.beta": ("float", 0.4),
    "dynamics.nonlinearity": ("choice:linear,sine,clip", "linear"),
    "dynamics.param": ("float", 1.0),
    "dynamics.dt": ("float", 0.01),
    "dynamics.horizon": ("float", 5.0),
    "dynamics.horizon_units": ("choice:gap,absolute", "gap"),
    "dynamics.boundary": ("choice:constant,zero,indicator,ramp", "constant"),
    "dynamics.boundary_value": ("float", 1.0),
    "dynamics.boundary_arc": ("int", 0),
    "dynamics.initial": ("choice:harmonic,perturbed,zero", "harmonic"),
    "dynamics.perturbation": ("float", 1.0),
    "dynamics.observe": ("str", "all_interior"),
    "dynamics.mode": ("choice:pinned,bulk", "pinned"),
    "dynamics.override_margin": ("bool", False),

    "mc.replicas": ("int", 10_000),
    "mc.seed": ("int", 1),
    "mc.stream": ("int", 0),
    "mc.chunk": ("int", 256),
    "mc.workers": ("int", 1),
    "mc.retain": ("int", 21),

    "lambda.horizon": ("float", -1.0),
    "lambda.dt": ("float", -1.0),

    "pullback.k_ladder": ("str", "2,4,8,16"),
    "pullback.k_units": ("choice:gap,absolute", "gap"),
    "pullback.tolerance": ("float", 1e-3),

    "fluct.betas": ("str", "0.4,0.2,0.1"),
    "fluct.k_max": ("float", -1.0),

    "attract.fraction": ("float", 0.05),
    "attract.t_end": ("float", -1.0),

    "equivariance.steps": ("int", 1000),
    "equivariance.swap": ("str", "0,1"),
    "equivariance.replicas": ("int", 3),

    "invariant.k_max": ("float", -1.0),
    "invariant.tolerance": ("float", 1e-3),

    "output.dir": ("str", "out"),
    "output.figures": ("bool", True),
}


def _coerce(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key: {key}")
    tag, _ = SCHEMA[key]
    raw = raw.strip().strip('"').strip("'")
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if tag.startswith("choice:"):
            choices = tag.split(":", 1)[1].split(",")
            if raw not in choices:
                raise ValueError(f"{raw!r} not in {choices}")
            return raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def default_config() -> dict:
    return {key: default for key, (_, default) in SCHEMA.items()}


def parse_config_text(text: str) -> dict:
    cfg = default_config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "#" in stripped:
            stripped = stripped.split("#", 1)[0].strip()
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        cfg[key.strip()] = _coerce(key.strip(), raw)
    return cfg


def load_config(path) -> dict:
    """Load a flat config file, or the config snapshot inside a manifest."""
    text = Path(path).read_text()
    head = text.lstrip()
    if head.startswith("{"):
        payload = json.loads(text)
        if "config" not in payload:
            raise ConfigError(f"{path}: JSON input has no 'config' snapshot")
        cfg = default_config()
        for key, value in payload["config"].items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            cfg[key] = value
        return cfg
    return parse_config_text(text)


def apply_overrides(cfg: dict, pairs: list[str]) -> dict:
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        cfg[key.strip()] = _coerce(key.strip(), raw)
    return cfg


# -- builders ----------------------------------------------------------------

def build_graph(cfg: dict) -> GraphSpace:
    kind = cfg["graph.kind"]
    if kind == "regular_tree":
        return build_regular_tree(cfg["graph.q"], cfg["graph.radius"],
                                  max_vertices=cfg["graph.max_vertices"])
    if kind == "path":
        return build_path(cfg["graph.n"])
    if not cfg["graph.edges_file"]:
        raise ConfigError("graph.kind = custom needs graph.edges_file")
    boundary = [int(x) for x in cfg["graph.boundary"].split(",") if x.strip()]
    if not boundary:
        raise ConfigError("graph.kind = custom needs graph.boundary")
    return load_edge_list(cfg["graph.edges_file"], boundary)


def _subtree_boundary(g: GraphSpace, arc: int) -> np.ndarray:
    """Boundary vertices lying under the arc-th child of the root."""
    children = _bfs_children(g, 0)
    top = children[0]
    if not 0 <= arc < len(top):
        raise ConfigError(f"boundary arc {arc} out of range (root has {len(top)} children)")
    stack = [top[arc]]
    members = set()
    while stack:
        v = stack.pop()
        members.add(v)
        stack.extend(children.get(v, []))
    return np.array(sorted(members & set(int(b) for b in g.boundary)))


def boundary_data_from_config(g: GraphSpace, cfg: dict) -> np.ndarray:
    kind = cfg["dynamics.boundary"]
    boundary = g.boundary
    if kind == "constant":
        return np.full(len(boundary), cfg["dynamics.boundary_value"])
    if kind == "zero":
        return np.zeros(len(boundary))
    if kind == "indicator":
        if g.kind in ("regular_tree", "path"):
            arc = _subtree_boundary(g, cfg["dynamics.boundary_arc"])
        else:
            arc = np.array([boundary[cfg["dynamics.boundary_arc"]]])
        return np.isin(boundary, arc).astype(float) * cfg["dynamics.boundary_value"]
    # ramp: 0 .. value over the boundary list in vertex order
    m = len(boundary)
    if m == 1:
        return np.array([cfg["dynamics.boundary_value"]])
    return np.arange(m) / (m - 1) * cfg["dynamics.boundary_value"]


def initial_from_config(g: GraphSpace, h_star_values: np.ndarray,
                        boundary_data: np.ndarray, cfg: dict) -> np.ndarray:
    kind = cfg["dynamics.initial"]
    u0 = np.array(h_star_values, dtype=float)
    if kind == "harmonic":
        return u0
    if kind == "perturbed":
        u0[g.interior] += cfg["dynamics.perturbation"]
        return u0
    u0[g.interior] = 0.0
    u0[g.boundary] = boundary_data
    return u0


def observe_from_config(g: GraphSpace, cfg: dict):
    spec = cfg["dynamics.observe"]
    if spec == "all_interior":
        return None
    ids = [int(x) for x in spec.split(",") if x.strip()]
    if not ids:
        raise ConfigError("dynamics.observe must be 'all_interior' or vertex ids")
    return np.array(ids)


def float_list(raw: str, key: str) -> list[float]:
    try:
        values = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list for {key}: {exc}") from exc
    if not values:
        raise ConfigError(f"{key} must be a nonempty comma list")
    return values
