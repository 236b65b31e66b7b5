"""Leader-first-follower graphs, frameworks and desired formations.

Agents are identified by 1-based ids throughout the public API, matching
how formations are written down; row ``a - 1`` of a positions array holds
agent ``a``.

A graph is either spatial (``dim=3``: every agent after the third keeps
three outgoing edges and closes a tetrahedron) or planar (``dim=2``: every
agent after the second keeps two and closes a triangle).  The "cells" of a
graph are those tetrahedra or triangles, listed with sorted vertex ids and
the owning (largest-id) agent last.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import geometry as geo
from .errors import (
    ConstructionError,
    GraphMismatchError,
    UnrealizableError,
    ValidationError,
)

SEED_EDGES = frozenset({(2, 1), (3, 1), (3, 2)})
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class DirectedFormationGraph:
    n_agents: int
    edges: tuple
    cells: tuple
    dim: int = 3

    def __post_init__(self):
        n, d = self.n_agents, self.dim
        if d not in (2, 3):
            raise ConstructionError("dim must be 2 or 3")
        min_n = 4 if d == 3 else 3
        if n < min_n:
            raise ConstructionError(f"a {d}D formation needs at least {min_n} agents")
        edges = tuple(tuple(e) for e in self.edges)
        if len(set(edges)) != len(edges):
            raise ConstructionError("duplicate edges")
        if list(edges) != sorted(edges):
            raise ConstructionError("edges must be sorted lexicographically")
        for s, t in edges:
            if not (1 <= t < s <= n):
                raise ConstructionError(f"edge ({s},{t}) must point from a higher to a lower id")
        for a in range(1, n + 1):
            want = min(a - 1, d)
            if self.out_degree(a) != want:
                raise ConstructionError(f"agent {a} has out-degree {self.out_degree(a)}, expected {want}")
        expected = d * n - d * (d + 1) // 2
        if len(edges) != expected:
            raise ConstructionError(f"{len(edges)} edges, expected {expected}")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "cells", tuple(tuple(c) for c in self.cells))

    def out_degree(self, agent):
        return sum(1 for s, _ in self.edges if s == agent)

    def neighbors(self, agent):
        """Out-neighbors of ``agent`` in ascending order."""
        return tuple(sorted(t for s, t in self.edges if s == agent))

    @property
    def first_follower_agent(self):
        """Smallest id whose projections use the generic per-cell formulas."""
        return 4 if self.dim == 3 else 3

    @property
    def lambda_dim(self):
        return len(self.edges)

    def has_edge(self, a, b):
        return (max(a, b), min(a, b)) in self._edge_set

    @cached_property
    def _edge_set(self):
        return frozenset(self.edges)

    def cell_of(self, agent):
        for c in self.cells:
            if c[-1] == agent:
                return c
        raise KeyError(agent)


def build_henneberg(seed_triangle_edges, insertions):
    """Grow a spatial leader-first-follower graph by type-I insertions.

    ``insertions`` lists ``(l, i, j, k)``: agent ``l`` joins with edges to
    the existing agents ``i, j, k``.
    """
    seed = {tuple(e) for e in seed_triangle_edges}
    if seed != SEED_EDGES:
        raise ConstructionError(f"seed triangle must be {sorted(SEED_EDGES)}, got {sorted(seed)}")
    edges = set(seed)
    cells = []
    n = 3
    for ins in insertions:
        if len(ins) != 4:
            raise ConstructionError(f"insertion {ins} must be (l, i, j, k)")
        l, *nbrs = (int(x) for x in ins)
        if l != n + 1:
            raise ConstructionError(f"insertion for agent {l} out of order; expected agent {n + 1}")
        if len(set(nbrs)) != 3:
            raise ConstructionError(f"insertion {ins} repeats a neighbor")
        for m in nbrs:
            if not (1 <= m < l):
                raise ConstructionError(f"insertion {ins} references nonexistent agent {m}")
            edges.add((l, m))
        cells.append(tuple(sorted(nbrs)) + (l,))
        n = l
    return DirectedFormationGraph(n, tuple(sorted(edges)), tuple(cells), dim=3)


def build_planar(n_agents, insertions=()):
    """Planar (triangulated) graph: agent 3 joins 1-2, then ``(l, i, j)`` insertions."""
    edges = set(SEED_EDGES)
    cells = [(1, 2, 3)]
    n = 3
    for ins in insertions:
        if len(ins) != 3:
            raise ConstructionError(f"planar insertion {ins} must be (l, i, j)")
        l, i, j = (int(x) for x in ins)
        if l != n + 1:
            raise ConstructionError(f"insertion for agent {l} out of order; expected agent {n + 1}")
        if i == j:
            raise ConstructionError(f"insertion {ins} repeats a neighbor")
        for m in (i, j):
            if not (1 <= m < l):
                raise ConstructionError(f"insertion {ins} references nonexistent agent {m}")
            edges.add((l, m))
        cells.append(tuple(sorted((i, j))) + (l,))
        n = l
    if n != n_agents:
        raise ConstructionError(f"insertions build {n} agents, expected {n_agents}")
    return DirectedFormationGraph(n, tuple(sorted(edges)), tuple(cells), dim=2)


def _as_positions(positions, n_agents):
    p = np.array(positions, dtype=float)
    if p.shape == (n_agents, 2):
        p = np.column_stack([p, np.zeros(n_agents)])
    if p.shape != (n_agents, 3):
        raise ValidationError(f"positions must have shape ({n_agents}, 3), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("positions must be finite")
    return p


@dataclass(frozen=True, eq=False)
class Framework:
    graph: DirectedFormationGraph
    positions: np.ndarray

    def __post_init__(self):
        p = _as_positions(self.positions, self.graph.n_agents)
        p.flags.writeable = False
        object.__setattr__(self, "positions", p)

    def p(self, agent):
        return self.positions[agent - 1]

    def transformed(self, rotation=None, translation=None):
        p = self.positions
        if rotation is not None:
            p = p @ np.asarray(rotation, float).T
        if translation is not None:
            p = p + np.asarray(translation, float)
        return Framework(self.graph, p)


def edge_function(fw):
    """Edge lengths in the graph's fixed edge order."""
    p = fw.positions
    return np.array([geo.norm(p[s - 1] - p[t - 1]) for s, t in fw.graph.edges])


def cell_orientation(p, cell):
    """Signed volume of a tetrahedral cell, or signed area of a planar one."""
    if len(cell) == 4:
        i, j, k, l = cell
        return geo.signed_volume(p[..., i - 1, :], p[..., j - 1, :], p[..., k - 1, :], p[..., l - 1, :])
    i, j, l = cell
    a = p[..., j - 1, :] - p[..., i - 1, :]
    b = p[..., l - 1, :] - p[..., i - 1, :]
    return 0.5 * (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])


def volume_vector(fw):
    """Signed volume of every tetrahedron (signed area of every triangle in 2D)."""
    return np.array([cell_orientation(fw.positions, c) for c in fw.graph.cells], dtype=float)


def _check_same_graph(a, b):
    if a.graph != b.graph:
        raise GraphMismatchError("frameworks are defined on different graphs")


def are_equivalent(fw_a, fw_b, tol=DEFAULT_TOL):
    _check_same_graph(fw_a, fw_b)
    return bool(np.all(np.abs(edge_function(fw_a) - edge_function(fw_b)) <= tol))


def is_strongly_congruent(fw_a, fw_b, tol=DEFAULT_TOL):
    """Equivalent frameworks with equal signed-volume vectors."""
    if not are_equivalent(fw_a, fw_b, tol):
        return False
    return bool(np.all(np.abs(volume_vector(fw_a) - volume_vector(fw_b)) <= tol))


def pairwise_distances(positions):
    p = np.asarray(positions, float)
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _trilaterate(pa, pb, pc, ra, rb, rc, sign, scale):
    """Point at distances ra, rb, rc from pa, pb, pc on the side giving volume ``sign``."""
    ab = pb - pa
    d = geo.norm(ab)
    ex = ab / d
    ac = pc - pa
    i = geo.dot(ex, ac)
    ey = ac - i * ex
    jn = geo.norm(ey)
    if jn <= geo.ZERO_TOL * scale:
        raise UnrealizableError("base triangle is degenerate")
    ey = ey / jn
    ez = geo.cross(ex, ey)
    x = (ra * ra - rb * rb + d * d) / (2 * d)
    y = (ra * ra - rc * rc + i * i + jn * jn) / (2 * jn) - i * x / jn
    z2 = ra * ra - x * x - y * y
    if z2 <= (geo.ZERO_TOL * scale) ** 2:
        raise UnrealizableError(
            "distances do not close a non-degenerate tetrahedron" if z2 > -geo.ZERO_TOL * scale * scale
            else "distances are not realizable in 3D"
        )
    z = np.sqrt(z2)
    base = pa + x * ex + y * ey
    cand = base + z * ez
    if np.sign(geo.signed_volume(pa, pb, pc, cand)) != sign:
        cand = base - z * ez
    return cand


def _place_planar(pa, pb, ra, rb, sign, scale):
    ab = pb - pa
    d = geo.norm(ab)
    ex = ab / d
    ey = np.array([-ex[1], ex[0], 0.0])
    x = (ra * ra - rb * rb + d * d) / (2 * d)
    y2 = ra * ra - x * x
    if y2 <= (geo.ZERO_TOL * scale) ** 2:
        raise UnrealizableError("distances do not close a non-degenerate triangle")
    return pa + x * ex + sign * np.sqrt(y2) * ey


def realize(graph, distances, signs):
    """Coordinates realizing edge ``distances`` with the given cell orientations.

    Agent 1 sits at the origin and agent 2 on the positive x-axis.  In 3D,
    agent 3 is placed with positive y; in 2D its side comes from the sign
    of triangle (1, 2, 3).
    """
    n = graph.n_agents
    scale = max(distances.values())
    p = np.zeros((n, 3))

    def dist(a, b):
        return distances[(max(a, b), min(a, b))]

    p[1] = (dist(2, 1), 0.0, 0.0)
    if graph.dim == 3:
        d21, d31, d32 = dist(2, 1), dist(3, 1), dist(3, 2)
        geo.heron_area(d21, d31, d32)
        x = (d31 * d31 + d21 * d21 - d32 * d32) / (2 * d21)
        y2 = d31 * d31 - x * x
        if y2 <= (geo.ZERO_TOL * scale) ** 2:
            raise UnrealizableError("agents 1, 2, 3 cannot form a non-degenerate triangle")
        p[2] = (x, np.sqrt(y2), 0.0)
        for cell in graph.cells:
            i, j, k, l = cell
            p[l - 1] = _trilaterate(
                p[i - 1], p[j - 1], p[k - 1], dist(l, i), dist(l, j), dist(l, k), signs[cell], scale
            )
    else:
        for cell in graph.cells:
            i, j, l = cell
            geo.heron_area(dist(i, j), dist(l, i), dist(l, j))
            p[l - 1] = _place_planar(p[i - 1], p[j - 1], dist(l, i), dist(l, j), signs[cell], scale)
    return p


@dataclass(frozen=True, eq=False)
class DesiredFormation:
    """Target shape: edge lengths plus one orientation sign per cell.

    Build through :meth:`create`, which validates everything and derives
    whichever of ``signs`` / ``desired_positions`` was not supplied.
    """

    graph: DirectedFormationGraph
    distances: dict
    signs: dict
    desired_positions: np.ndarray = field(default=None)

    @classmethod
    def create(cls, graph, distances=None, signs=None, desired_positions=None):
        if desired_positions is not None:
            p = _as_positions(desired_positions, graph.n_agents)
            if graph.dim == 2 and np.any(p[:, 2] != 0):
                raise ValidationError("planar formation positions must have zero z")
            derived = {}
            for c in graph.cells:
                o = cell_orientation(p, c)
                scale = max(geo.norm(p[a - 1] - p[c[0] - 1]) for a in c)
                if abs(o) <= geo.ZERO_TOL * scale ** (len(c) - 1):
                    raise ValidationError(f"cell {c} is degenerate in the desired positions")
                derived[c] = 1 if o > 0 else -1
            if signs is not None:
                for c, s in _normalize_signs(graph, signs).items():
                    if s != derived[c]:
                        raise ValidationError(f"sign of cell {c} contradicts the desired positions")
            signs = derived
            from_pos = {e: float(geo.norm(p[e[0] - 1] - p[e[1] - 1])) for e in graph.edges}
            if distances is None:
                distances = from_pos
            else:
                distances = _normalize_distances(graph, distances)
                for e, d in distances.items():
                    if abs(d - from_pos[e]) > 1e-9 * max(1.0, d):
                        raise ValidationError(f"distance of edge {e} contradicts the desired positions")
        else:
            if distances is None:
                raise ValidationError("a desired formation needs distances or positions")
            distances = _normalize_distances(graph, distances)
            if signs is None:
                raise ValidationError("orientation signs are required when positions are not given")
            signs = _normalize_signs(graph, signs)
            p = realize(graph, distances, signs)
        self = cls(graph, distances, signs, p)
        self._check_cells()
        return self

    def _check_cells(self):
        if self.graph.dim == 2:
            for cell in self.graph.cells:
                i, j, l = cell
                area = geo.heron_area(self.distance(i, j), self.distance(l, i), self.distance(l, j))
                scale = max(self.distance(i, j), self.distance(l, i), self.distance(l, j))
                if area <= geo.ZERO_TOL * scale * scale:
                    raise ValidationError(f"triangle {cell} is degenerate")
            return
        for cell in self.graph.cells:
            i, j, k, l = cell
            d = [self.distance(a, b) for a, b in ((j, i), (k, i), (l, i), (k, j), (l, j), (l, k))]
            vol = geo.cayley_menger_volume(*d)
            if vol <= geo.ZERO_TOL * max(d) ** 3:
                raise ValidationError(f"tetrahedron {cell} is degenerate")

    def distance(self, a, b):
        """Desired distance between any two agents (edge or implied by the shape)."""
        key = (max(a, b), min(a, b))
        if key in self.distances:
            return self.distances[key]
        return float(geo.norm(self.desired_positions[a - 1] - self.desired_positions[b - 1]))

    @property
    def max_distance(self):
        return max(self.distances.values())

    def framework(self):
        return Framework(self.graph, self.desired_positions)


def _normalize_distances(graph, distances):
    out = {}
    for key, d in dict(distances).items():
        s, t = int(key[0]), int(key[1])
        e = (max(s, t), min(s, t))
        if e not in graph._edge_set:
            raise ValidationError(f"distance given for non-edge {e}")
        d = float(d)
        if not np.isfinite(d) or d <= 0:
            raise ValidationError(f"distance must be positive: edge {e} has {d}")
        out[e] = d
    missing = [e for e in graph.edges if e not in out]
    if missing:
        raise ValidationError(f"missing distances for edges {missing}")
    return out


def _normalize_signs(graph, signs):
    out = {}
    cells = set(graph.cells)
    for key, s in dict(signs).items():
        c = tuple(sorted(int(x) for x in key[:-1])) + (int(key[-1]),)
        if c not in cells:
            raise ValidationError(f"sign given for unknown cell {tuple(key)}")
        if s not in (1, -1):
            raise ValidationError(f"sign of cell {c} must be +1 or -1")
        out[c] = int(s)
    missing = [c for c in graph.cells if c not in out]
    if missing:
        raise ValidationError(f"missing orientation signs for cells {missing}")
    return out


def regular_tetrahedron_formation(edge=1.0):
    """Four agents on a regular tetrahedron of side ``edge`` with positive volume."""
    g = build_henneberg(SEED_EDGES, [(4, 1, 2, 3)])
    return DesiredFormation.create(g, {e: edge for e in g.edges}, {(1, 2, 3, 4): 1})
