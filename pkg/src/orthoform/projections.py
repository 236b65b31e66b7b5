"""Orthogonal-basis projection variables and their desired values.

For a follower ``l`` with out-neighbors ``i < j < k`` the basis is
``{p_ji, n_ijk x p_ji, n_ijk}`` and the projections of ``p_li`` on it are
``zeta_l``, ``varphi_l`` and ``vartheta_l``.  Here ``p_ab = p_b - p_a``,
i.e. the position of ``b`` as measured by ``a``.

The per-agent kernels below take only the agent's own relative
measurements ``{m: p_lm}`` plus the shared :class:`NormalCache`; the
framework-level functions just gather those measurements.  Everything
broadcasts over leading batch axes.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import DegenerateFaceError
from .framework import Framework

DEFAULT_EPS = 1e-3
DEFAULT_N2_PLUS = (1.0, 0.0, 0.0)
Z_AXIS = np.array([0.0, 0.0, 1.0])
BASE_123 = (1, 2, 3)


def select_n123_plus(p31, p32, eps=DEFAULT_EPS):
    """Unit normal for agents 1, 2, 3 when they start collinear or collocated.

    Follows the fixed branch order: the first input that is not negligibly
    short decides, and within it the first of z, y, x that is not
    negligible is solved for.
    """
    for v in (np.asarray(p31, float), np.asarray(p32, float)):
        if geo.norm(v) > eps:
            x, y, z = v
            if abs(z) > eps:
                nt = np.array([1.0, 1.0, -(x + y) / z])
            elif abs(y) > eps:
                nt = np.array([1.0, -(x + z) / y, 1.0])
            elif abs(x) > eps:
                nt = np.array([-(y + z) / x, 1.0, 1.0])
            else:
                # norm above eps with every component below it: solve for the
                # dominant component instead of leaving the normal undefined
                a = int(np.argmax(np.abs(v)))
                nt = np.ones(3)
                nt[a] = -(v.sum() - v[a]) / v[a]
            break
    else:
        nt = Z_AXIS.copy()
    return nt / geo.norm(nt)


def n123_plus_with_collocated_12(p31, p32, n2, eps=DEFAULT_EPS):
    """Fallback normal of 1-2-3 when agents 1 and 2 also coincide at t = 0.

    Then ``p31 == p32`` pins only one direction, while agent 2 is about to
    leave along ``n2``; the normal must be orthogonal to that too, or the
    triangle settles with the right projections but the wrong shape.
    """
    p31 = np.asarray(p31, float)
    n2 = np.asarray(n2, float)
    c = geo.cross(n2, p31)
    if geo.norm(c) > eps:
        return c / geo.norm(c)
    # p31 is negligible or parallel to n2: any direction orthogonal to n2 works
    n = select_n123_plus(p31, p32, eps)
    n = n - geo.dot(n, n2) * n2
    if geo.norm(n) <= eps:
        n = geo.cross(n2, np.eye(3)[int(np.argmin(np.abs(n2)))])
    return n / geo.norm(n)


@dataclass(frozen=True, eq=False)
class NormalCache:
    """Normals frozen at t = 0.

    ``n2_fallback`` / ``n123_fallback`` exist only where the matching
    degeneracy flag is set (batched caches store NaN rows where absent).
    ``n2_t0`` / ``n123_t0`` are the normals in force at t = 0 and stand in
    for mid-run degeneracies, which cannot occur along exact trajectories
    since both normals are constant under the control law.
    """

    n2_fallback: np.ndarray
    n123_fallback: np.ndarray
    degenerate_12_at_t0: np.ndarray
    degenerate_123_at_t0: np.ndarray
    n2_t0: np.ndarray
    n123_t0: np.ndarray
    eps: float = DEFAULT_EPS
    planar: bool = False

    def subset(self, rows):
        """The cache restricted to some runs of a batched cache."""
        return NormalCache(
            self.n2_fallback[rows],
            self.n123_fallback[rows],
            self.degenerate_12_at_t0[rows],
            self.degenerate_123_at_t0[rows],
            self.n2_t0[rows],
            self.n123_t0[rows],
            eps=self.eps,
            planar=self.planar,
        )


def make_normal_cache(p0, eps=DEFAULT_EPS, n2_plus=DEFAULT_N2_PLUS, planar=False):
    """Flag t = 0 degeneracies of agents 1-2 and 1-2-3 and pick fallbacks.

    ``p0`` has shape ``(N, 3)`` or ``(R, N, 3)``.
    """
    p0 = np.asarray(p0, float)
    batch = p0.shape[:-2]
    flat = p0.reshape((-1,) + p0.shape[-2:])
    n2_plus = np.asarray(n2_plus, float)
    n2_plus = n2_plus / geo.norm(n2_plus)
    nan3 = np.full(3, np.nan)

    fb2, fb123, deg2, deg123, n2s, n123s = [], [], [], [], [], []
    for p in flat:
        p21 = p[0] - p[1]
        p31, p32 = p[0] - p[2], p[1] - p[2]
        d2 = bool(geo.norm(p21) <= eps)
        n2 = n2_plus if d2 else p21 / geo.norm(p21)
        if planar:
            d123 = False
            n123 = Z_AXIS
        else:
            c = geo.cross(p31, p32)
            d123 = bool(geo.norm(c) <= eps)
            if not d123:
                n123 = c / geo.norm(c)
            elif d2:
                n123 = n123_plus_with_collocated_12(p31, p32, n2, eps)
            else:
                n123 = select_n123_plus(p31, p32, eps)
        deg2.append(d2)
        deg123.append(d123)
        fb2.append(n2 if d2 else nan3)
        fb123.append(n123 if d123 else nan3)
        n2s.append(n2)
        n123s.append(n123)

    def shaped(rows, tail):
        return np.array(rows).reshape(batch + tail)

    fb2, fb123 = shaped(fb2, (3,)), shaped(fb123, (3,))
    deg2, deg123 = shaped(deg2, ()), shaped(deg123, ())
    if not batch:
        fb2 = fb2 if deg2 else None
        fb123 = fb123 if deg123 else None
    return NormalCache(
        fb2, fb123, deg2, deg123, shaped(n2s, (3,)), shaped(n123s, (3,)), eps=eps, planar=planar
    )


def _unit_or_fallback(v, length, flagged, fallback, t0, eps):
    """``v / length``; the frozen fallback where flagged at t=0; ``t0`` where short now."""
    short = length <= eps
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = v / length[..., None]
    out = np.where(short[..., None], t0, unit)
    if fallback is not None:
        out = np.where(np.asarray(flagged)[..., None], fallback, out)
    midrun = short & ~np.asarray(flagged)
    return out, midrun


def agent2_terms(p21, cache):
    """``(zeta_2,), (n_2,), midrun`` from agent 2's measurement of agent 1."""
    n2, midrun = _unit_or_fallback(
        p21, geo.norm(p21), cache.degenerate_12_at_t0, cache.n2_fallback, cache.n2_t0, cache.eps
    )
    return (geo.dot(p21, n2),), (n2,), midrun


def n123_from(p_ki, p_kj, cache):
    """Unit normal of the base triangle 1-2-3 seen from any agent measuring it."""
    if cache.planar:
        shape = np.broadcast_shapes(p_ki.shape, p_kj.shape)
        return np.broadcast_to(Z_AXIS, shape), np.zeros(shape[:-1], bool)
    c = geo.cross(p_ki, p_kj)
    return _unit_or_fallback(
        c, geo.norm(c), cache.degenerate_123_at_t0, cache.n123_fallback, cache.n123_t0, cache.eps
    )


def agent3_terms(p31, p32, cache):
    """``(zeta_3, varphi_3), (e1, e2), midrun`` for the secondary follower."""
    n, midrun = n123_from(p31, p32, cache)
    e1 = p31 - p32
    e2 = geo.cross(n, e1)
    return (geo.dot(p31, e1), geo.dot(p31, e2)), (e1, e2), midrun


def follower_terms(base, p_li, p_lj, p_lk, cache):
    """Projections of an ordinary follower on the basis built from its neighbors.

    ``base`` is the sorted neighbor triple; returns
    ``(zeta, varphi, vartheta), (e1, e2, n), midrun``.
    """
    p_ki = p_li - p_lk
    p_kj = p_lj - p_lk
    if tuple(base) == BASE_123:
        n, midrun = n123_from(p_ki, p_kj, cache)
    else:
        n = geo.cross(p_ki, p_kj)
        midrun = np.zeros(n.shape[:-1], bool)
    e1 = p_li - p_lj
    e2 = geo.cross(n, e1)
    return (geo.dot(p_li, e1), geo.dot(p_li, e2), geo.dot(p_li, n)), (e1, e2, n), midrun


def planar_follower_terms(p_li, p_lj):
    """Projections of a planar follower on ``{p_ji, z x p_ji}``."""
    e1 = p_li - p_lj
    e2 = np.stack((-e1[..., 1], e1[..., 0], np.zeros_like(e1[..., 0])), axis=-1)
    return (geo.dot(p_li, e1), geo.dot(p_li, e2)), (e1, e2), np.zeros(e1.shape[:-1], bool)


def agent_terms(graph, agent, p, cache):
    """Dispatch to the right kernel for ``agent`` given full positions ``p``."""
    pl = p[..., agent - 1, :]
    rel = {m: p[..., m - 1, :] - pl for m in graph.neighbors(agent)}
    if agent == 2:
        return agent2_terms(rel[1], cache)
    if graph.dim == 2:
        i, j = graph.neighbors(agent)
        return planar_follower_terms(rel[i], rel[j])
    if agent == 3:
        return agent3_terms(rel[1], rel[2], cache)
    base = graph.neighbors(agent)
    return follower_terms(base, *(rel[m] for m in base), cache)


def lambda_layout(graph):
    """``(agent, name)`` for every component of the stacked projection vector."""
    names = ("zeta", "varphi", "vartheta")
    out = []
    for a in range(2, graph.n_agents + 1):
        out.extend((a, names[c]) for c in range(graph.out_degree(a)))
    return out


def _positions_of(fw_or_p):
    return fw_or_p.positions if isinstance(fw_or_p, Framework) else np.asarray(fw_or_p, float)


def projection_state(graph, p, cache):
    """Stacked projections plus per-agent bases and the mid-run degeneracy mask."""
    values, bases = [], {}
    midrun = np.zeros(p.shape[:-2], bool)
    for a in range(2, graph.n_agents + 1):
        vals, basis, mr = agent_terms(graph, a, p, cache)
        values.extend(vals)
        bases[a] = basis
        midrun = midrun | mr
    return np.stack(values, axis=-1), bases, midrun


def projection_vector(fw, cache=None):
    """Stacked ``[zeta_2, zeta_3, varphi_3, zeta_4, varphi_4, vartheta_4, ...]``.

    Without a cache, one is built from the framework's own positions, i.e.
    the framework is treated as a t = 0 configuration.
    """
    if cache is None:
        cache = make_normal_cache(fw.positions, planar=fw.graph.dim == 2)
    lam, _, _ = projection_state(fw.graph, fw.positions, cache)
    return lam


def normal_ijk(positions, i, j, k, cache):
    p = _positions_of(positions)
    p_ki = p[..., i - 1, :] - p[..., k - 1, :]
    p_kj = p[..., j - 1, :] - p[..., k - 1, :]
    if (i, j, k) == BASE_123:
        n, midrun = n123_from(p_ki, p_kj, cache)
        if np.any(midrun):
            raise DegenerateFaceError(
                "agents 1, 2, 3 became collinear after t = 0; use the simulator's held normal"
            )
        return n
    return geo.cross(p_ki, p_kj)


def projections_l(positions, i, j, k, l, cache):
    p = _positions_of(positions)
    pl = p[..., l - 1, :]
    rel = [p[..., m - 1, :] - pl for m in (i, j, k)]
    vals, _, _ = follower_terms((i, j, k), *rel, cache)
    return vals


def zeta2(positions, cache):
    p = _positions_of(positions)
    (z,), _, _ = agent2_terms(p[..., 0, :] - p[..., 1, :], cache)
    return z


def zeta3_varphi3(positions, cache):
    p = _positions_of(positions)
    vals, _, _ = agent3_terms(p[..., 0, :] - p[..., 2, :], p[..., 1, :] - p[..., 2, :], cache)
    return vals


def zeta_star(d_li, d_ji, d_lj):
    return (d_li * d_li + d_ji * d_ji - d_lj * d_lj) / 2.0


def _cross_dot_from_distances(d_ji, d_ki, d_kj, d_li, d_lj, d_lk):
    """``(p_ki x p_kj) . (p_ji x p_li)`` written purely in distances."""
    kj_lj = (d_kj ** 2 + d_lj ** 2 - d_lk ** 2) / 2.0
    kj_ij = (d_kj ** 2 + d_ji ** 2 - d_ki ** 2) / 2.0
    ij_lj = (d_ji ** 2 + d_lj ** 2 - d_li ** 2) / 2.0
    return kj_lj * d_ji ** 2 - kj_ij * ij_lj


def desired_projection_vector(desired):
    """Desired projections computed from the desired distances and cell signs."""
    g = desired.graph
    d = desired.distance
    d21 = d(2, 1)
    out = [d21]
    if g.dim == 2:
        for cell in g.cells:
            i, j, l = cell
            area = geo.heron_area(d(j, i), d(l, i), d(l, j))
            out += [zeta_star(d(l, i), d(j, i), d(l, j)), 2.0 * desired.signs[cell] * area]
        return np.array(out)

    s123 = geo.heron_area(d21, d(3, 1), d(3, 2))
    out += [zeta_star(d(3, 1), d21, d(3, 2)), 2.0 * s123]
    for cell in g.cells:
        i, j, k, l = cell
        dji, dki, dkj, dli, dlj, dlk = d(j, i), d(k, i), d(k, j), d(l, i), d(l, j), d(l, k)
        vol = geo.cayley_menger_volume(dji, dki, dli, dkj, dlj, dlk, desired.signs[cell])
        scale = 1.0 / (2.0 * s123) if (i, j, k) == BASE_123 else 1.0
        out += [
            zeta_star(dli, dji, dlj),
            scale * _cross_dot_from_distances(dji, dki, dkj, dli, dlj, dlk),
            -6.0 * vol * scale,
        ]
    return np.array(out)


def desired_normal_norm(desired, base):
    """``|n*_ijk|``: 1 for the base triangle 1-2-3, twice the triangle area otherwise."""
    if tuple(base) == BASE_123 or desired.graph.dim == 2:
        return 1.0
    i, j, k = base
    d = desired.distance
    return 2.0 * geo.heron_area(d(j, i), d(k, i), d(k, j))
