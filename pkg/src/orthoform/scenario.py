"""Scenario and framework files (JSON).

A scenario looks like::

    {
      "mode": "3d",
      "formation": {
        "agents": 4,
        "insertions": [[4, 1, 2, 3]],
        "distances": [[2, 1, 1.0], [3, 1, 1.0], ...],
        "volume_signs": [[1, 2, 3, 4, 1]]
      },
      "gains": {"mu": 1.0, "nu": 1.0, "lam": 1.0},
      "sim": {"dt": 0.005, "t_max": 60, "initial": {"kind": "random-cube", "seed": 7}}
    }

Planar scenarios use ``"mode": "2d"``, ``(l, i, j)`` insertions and
``"area_signs"``.  ``"desired_positions"`` may replace distances and signs.
Gains are a number or a map from agent to number.
"""

import json
import re
from dataclasses import dataclass, replace

import numpy as np

from .control import Gains
from .errors import FormationError, ValidationError
from .framework import (
    SEED_EDGES,
    DesiredFormation,
    Framework,
    build_henneberg,
    build_planar,
)
from .sim import InitialCondition, SimConfig

SIM_FIELDS = ("dt", "t_max", "convergence_tol", "degeneracy_eps", "record_every", "n2_plus")


class ScenarioError(ValidationError):
    """A scenario or framework file that does not parse or validate."""

    def __init__(self, message, source="<scenario>", line=None):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Scenario:
    desired: DesiredFormation
    gains: Gains
    sim: SimConfig
    mode: str = "3d"
    doc: dict = None

    def with_sim(self, **changes):
        return replace(self, sim=replace(self.sim, **changes))


def _line_of(text, *needles):
    """1-based line of the first needle (a key name or regex) found in ``text``."""
    for needle in needles:
        if needle is None:
            continue
        m = re.search(needle, text)
        if m:
            return text.count("\n", 0, m.start()) + 1
    return None


def _key(name):
    return rf'"{re.escape(name)}"\s*:'


def _entry(*ints):
    return r"\[\s*" + r"\s*,\s*".join(str(i) for i in ints) + r"\s*[,\]]"


def _graph(block, mode):
    n = int(block["agents"])
    ins = [tuple(int(x) for x in row) for row in block.get("insertions", [])]
    if mode == "2d":
        return build_planar(n, ins)
    g = build_henneberg(SEED_EDGES, ins)
    if g.n_agents != n:
        raise ValidationError(f"insertions build {g.n_agents} agents, expected {n}")
    return g


def _gain_map(value, agents, name):
    if isinstance(value, dict):
        out = {int(k): float(v) for k, v in value.items()}
        missing = [a for a in agents if a not in out]
        if missing:
            raise ValidationError(f"gain {name} missing for agents {missing}")
        return {a: out[a] for a in agents}
    return {a: float(value) for a in agents}


def _gains(block, graph):
    n = graph.n_agents
    lam_agents = range(4, n + 1) if graph.dim == 3 else ()
    return Gains(
        _gain_map(block.get("mu", 1.0), range(2, n + 1), "mu"),
        _gain_map(block.get("nu", 1.0), range(3, n + 1), "nu"),
        _gain_map(block.get("lam", 1.0), lam_agents, "lam"),
    )


def _initial(block):
    if block is None:
        return InitialCondition()
    kind = block.get("kind", "random-cube")
    pos = block.get("positions")
    return InitialCondition(
        kind=kind,
        seed=int(block.get("seed", 0)),
        half_width=block.get("half_width"),
        positions=None if pos is None else tuple(tuple(float(x) for x in row) for row in pos),
    )


def _sim(block):
    kwargs = {k: block[k] for k in SIM_FIELDS if k in block}
    if "n2_plus" in kwargs:
        kwargs["n2_plus"] = tuple(float(x) for x in kwargs["n2_plus"])
    if "record_every" in kwargs:
        kwargs["record_every"] = int(kwargs["record_every"])
    for k in ("dt", "t_max", "convergence_tol", "degeneracy_eps"):
        if k in kwargs:
            kwargs[k] = float(kwargs[k])
    return SimConfig(initial=_initial(block.get("initial")), **kwargs)


def _anchor_for(message, text):
    m = re.search(r"edge \((\d+), (\d+)\)", message)
    if m:
        s, t = m.groups()
        return _line_of(text, _entry(s, t), _entry(t, s), _key("distances"))
    m = re.search(r"(?:cell|tetrahedron|triangle) \(([\d, ]+)\)", message)
    if m:
        return _line_of(text, _entry(*m.group(1).split(", ")), _key("volume_signs"), _key("area_signs"))
    m = re.search(r"gain (\w+)", message)
    if m:
        return _line_of(text, _key(m.group(1)), _key("gains"))
    for name in ("insertion", "seed triangle", "out of order"):
        if name in message:
            return _line_of(text, _key("insertions"), _key("formation"))
    for name in SIM_FIELDS + ("initial", "half_width", "positions", "kind"):
        if name in message:
            return _line_of(text, _key(name), _key("sim"))
    if "realizable" in message or "triangle inequality" in message:
        return _line_of(text, _key("distances"))
    return None


def parse_scenario(text, source="<scenario>"):
    """Parse scenario JSON text into a validated :class:`Scenario`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", source, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be an object", source, 1)
    try:
        mode = doc.get("mode", "3d")
        if mode not in ("3d", "2d"):
            raise ValidationError(f"mode must be '3d' or '2d', got {mode!r}")
        for name in ("formation",):
            if name not in doc:
                raise ValidationError(f"missing block {name!r}")
        form = doc["formation"]
        graph = _graph(form, mode)
        distances = None
        if "distances" in form:
            distances = {(int(s), int(t)): d for s, t, d in form["distances"]}
        sign_key = "area_signs" if mode == "2d" else "volume_signs"
        signs = None
        if sign_key in form:
            signs = {tuple(int(x) for x in row[:-1]): int(row[-1]) for row in form[sign_key]}
        desired = DesiredFormation.create(
            graph, distances=distances, signs=signs, desired_positions=form.get("desired_positions")
        )
        gains = _gains(doc.get("gains", {}), graph)
        sim = _sim(doc.get("sim", {}))
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc.args[0]!r}", source, _line_of(text, _key("formation"))) from None
    except (FormationError, ValueError, TypeError) as exc:
        msg = str(exc)
        raise ScenarioError(msg, source, _anchor_for(msg, text)) from None
    return Scenario(desired, gains, sim, mode, doc)


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text, str(path))


def scenario_dict(desired, gains=None, sim=None, mode=None):
    """JSON-ready scenario for a desired formation (inverse of :func:`parse_scenario`)."""
    g = desired.graph
    mode = mode or ("2d" if g.dim == 2 else "3d")
    ins = [[c[-1], *c[:-1]] for c in g.cells if c != (1, 2, 3)]
    doc = {
        "mode": mode,
        "formation": {
            "agents": g.n_agents,
            "insertions": ins,
            "distances": [[s, t, d] for (s, t), d in sorted(desired.distances.items())],
            ("area_signs" if g.dim == 2 else "volume_signs"): [
                [*c, s] for c, s in desired.signs.items()
            ],
        },
    }
    if gains is not None:
        doc["gains"] = {
            "mu": {str(a): v for a, v in gains.mu.items()},
            "nu": {str(a): v for a, v in gains.nu.items()},
        }
        if g.dim == 3:
            doc["gains"]["lam"] = {str(a): v for a, v in gains.lam.items()}
    if sim is not None:
        doc["sim"] = {k: getattr(sim, k) for k in SIM_FIELDS}
        doc["sim"]["n2_plus"] = list(sim.n2_plus)
        ic = sim.initial
        doc["sim"]["initial"] = {"kind": ic.kind, "seed": ic.seed, "half_width": ic.half_width}
        if ic.positions is not None:
            doc["sim"]["initial"]["positions"] = [list(r) for r in ic.positions]
    return doc


def framework_dict(fw):
    """Framework file: the graph (agents plus insertions) and positions."""
    g = fw.graph
    return {
        "mode": "2d" if g.dim == 2 else "3d",
        "agents": g.n_agents,
        "insertions": [[c[-1], *c[:-1]] for c in g.cells if c != (1, 2, 3)],
        "positions": np.asarray(fw.positions).tolist(),
    }


def parse_framework(text, source="<framework>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", source, exc.lineno) from None
    try:
        mode = doc.get("mode", "3d")
        graph = _graph(doc, mode)
        return Framework(graph, np.array(doc["positions"], float))
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc.args[0]!r}", source) from None
    except (FormationError, ValueError, TypeError) as exc:
        raise ScenarioError(str(exc), source, _line_of(text, _key("positions"))) from None


def load_framework(path):
    with open(path, encoding="utf-8") as fh:
        return parse_framework(fh.read(), str(path))
