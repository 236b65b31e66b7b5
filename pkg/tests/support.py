"""Shared builders for the test suite."""

import numpy as np
from scipy.spatial.transform import Rotation

from orthoform import geometry as geo
from orthoform.framework import (
    SEED_EDGES,
    DesiredFormation,
    Framework,
    build_henneberg,
    volume_vector,
)

# verdict lines from the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES = []

# regular unit tetrahedron, 1-2-3 counterclockwise in z = 0, agent 4 above
REGULAR_TET = np.array(
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, np.sqrt(3) / 2, 0.0],
        [0.5, np.sqrt(3) / 6, np.sqrt(2.0 / 3.0)],
    ]
)
REGULAR_LAMBDA = np.array([1.0, 0.5, np.sqrt(3) / 2, 0.5, np.sqrt(3) / 6, -np.sqrt(2.0 / 3.0)])

# six agents, every follower on the base triangle 1-2-3, irregular distances
SIX_AGENT_POSITIONS = np.array(
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.45, 0.9, 0.0],
        [0.5, 0.35, 0.85],
        [0.3, 0.45, -0.8],
        [0.85, 0.75, 0.55],
    ]
)


def six_agent_target():
    g = build_henneberg(SEED_EDGES, [(4, 1, 2, 3), (5, 1, 2, 3), (6, 1, 2, 3)])
    return DesiredFormation.create(g, desired_positions=SIX_AGENT_POSITIONS)


def chain_target():
    """Five agents where agent 5 sits on the non-base triangle 1-3-4."""
    g = build_henneberg(SEED_EDGES, [(4, 1, 2, 3), (5, 1, 3, 4)])
    p = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.4, 0.9, 0.0], [0.5, 0.3, 0.8], [0.1, 0.9, 0.9]]
    )
    return DesiredFormation.create(g, desired_positions=p)


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def random_reflection(rng):
    """Reflection through a random plane through the origin."""
    m = rng.normal(size=3)
    m /= np.linalg.norm(m)
    return np.eye(3) - 2.0 * np.outer(m, m)


def random_graph(rng, n):
    ins = [(l, *sorted(rng.choice(np.arange(1, l), size=3, replace=False).tolist())) for l in range(4, n + 1)]
    return build_henneberg(SEED_EDGES, ins)


def well_shaped(graph, p, min_volume=0.02, min_area=0.05):
    """True when every cell and every base triangle is comfortably non-degenerate."""
    if np.any(np.abs(volume_vector(Framework(graph, p))) < min_volume):
        return False
    for cell in graph.cells:
        i, j, k = cell[:3]
        if 0.5 * geo.norm(geo.cross(p[i - 1] - p[k - 1], p[j - 1] - p[k - 1])) < min_area:
            return False
    return 0.5 * geo.norm(geo.cross(p[0] - p[2], p[1] - p[2])) >= min_area


def random_framework(rng, n=None, graph=None):
    graph = graph or random_graph(rng, n)
    while True:
        p = rng.uniform(-1.0, 1.0, size=(graph.n_agents, 3))
        if well_shaped(graph, p):
            return Framework(graph, p)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))
