"""Projection errors, the decentralized control law and Lyapunov diagnostics."""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import ValidationError
from .framework import Framework
from .projections import (
    BASE_123,
    desired_normal_norm,
    lambda_layout,
    projection_state,
)


@dataclass(frozen=True)
class Gains:
    """Per-agent positive gains: ``mu`` (agents >= 2), ``nu`` (>= 3), ``lam`` (>= 4)."""

    mu: dict
    nu: dict
    lam: dict

    def __post_init__(self):
        for name in ("mu", "nu", "lam"):
            for agent, g in getattr(self, name).items():
                if not (np.isfinite(g) and g > 0):
                    raise ValidationError(f"gain {name}[{agent}] must be positive, got {g}")

    @classmethod
    def uniform(cls, graph, mu=1.0, nu=1.0, lam=1.0):
        n = graph.n_agents
        return cls(
            {a: float(mu) for a in range(2, n + 1)},
            {a: float(nu) for a in range(3, n + 1)},
            {a: float(lam) for a in range(4, n + 1)} if graph.dim == 3 else {},
        )

    def scaled(self, factor):
        f = float(factor)
        return Gains(
            {a: f * g for a, g in self.mu.items()},
            {a: f * g for a, g in self.nu.items()},
            {a: f * g for a, g in self.lam.items()},
        )

    def vector(self, graph):
        """Gains laid out like the stacked projection vector."""
        table = {"zeta": self.mu, "varphi": self.nu, "vartheta": self.lam}
        try:
            return np.array([table[name][a] for a, name in lambda_layout(graph)])
        except KeyError as exc:
            raise ValidationError(f"missing gain for agent {exc.args[0]}") from None


def projection_errors(lam, lam_star):
    lam, lam_star = np.asarray(lam, float), np.asarray(lam_star, float)
    if lam.shape[-1] != lam_star.shape[-1]:
        raise ValueError(f"dimension mismatch: {lam.shape[-1]} vs {lam_star.shape[-1]}")
    return lam - lam_star


def assemble_controls(graph, bases, scaled_err, n_batch_shape):
    """``u_a = sum_c scaled_err[c] * basis_a[c]``; agent 1 never moves."""
    u = np.zeros(n_batch_shape + (graph.n_agents, 3))
    idx = 0
    for a in range(2, graph.n_agents + 1):
        acc = 0.0
        for vec in bases[a]:
            acc = acc + scaled_err[..., idx, None] * vec
            idx += 1
        u[..., a - 1, :] = acc
    if graph.dim == 2:
        u[..., 2] = 0.0
    return u


def control_inputs(fw, errors, gains, cache):
    """Velocity command of every agent for the current projection errors."""
    p = fw.positions if isinstance(fw, Framework) else np.asarray(fw, float)
    graph = fw.graph
    _, bases, _ = projection_state(graph, p, cache)
    return assemble_controls(graph, bases, gains.vector(graph) * errors, p.shape[:-2])


def closed_loop(graph, p, lam_star, gain_vec, cache):
    """One evaluation of the closed loop: ``(u, errors, midrun_mask)``."""
    lam, bases, midrun = projection_state(graph, p, cache)
    err = lam - lam_star
    return assemble_controls(graph, bases, gain_vec * err, p.shape[:-2]), err, midrun


def lyapunov_values(errors, graph):
    """``W_a`` for agents 3..N (half the squared error of each agent's block)."""
    errors = np.asarray(errors, float)
    out, idx = [], 1
    for a in range(3, graph.n_agents + 1):
        w = graph.out_degree(a)
        out.append(0.5 * np.sum(errors[..., idx:idx + w] ** 2, axis=-1))
        idx += w
    return np.stack(out, axis=-1)


def _row(arr, agent):
    return arr[..., agent - 1, :]


def _unit_normal_rate(c, c_dot):
    nc = geo.norm(c)
    return c_dot / nc[..., None] - c * (geo.dot(c, c_dot) / nc ** 3)[..., None]


def lyapunov_rates(graph, p, velocities, errors, cache):
    """Analytic ``dW_a/dt`` for agents 3..N under arbitrary agent velocities.

    Uses the exact time derivative of every normal (zero for a frozen
    fallback), so it holds whether or not the velocities come from the
    control law.
    """
    p = np.asarray(p, float)
    v = np.asarray(velocities, float)
    _, bases, _ = projection_state(graph, p, cache)
    out = []
    idx = 1
    for a in range(3, graph.n_agents + 1):
        nbrs = graph.neighbors(a)
        i, j = nbrs[0], nbrs[1]
        k = nbrs[2] if len(nbrs) == 3 else None
        p_li, p_ji = _row(p, i) - _row(p, a), _row(p, i) - _row(p, j)
        du_il, du_ij = _row(v, i) - _row(v, a), _row(v, i) - _row(v, j)
        if graph.dim == 2:
            n = np.broadcast_to(np.array([0.0, 0.0, 1.0]), p_ji.shape)
            n_dot = np.zeros_like(p_ji)
        else:
            base = (1, 2, 3) if a == 3 else nbrs
            kk = 3 if a == 3 else k
            p_ki, p_kj = _row(p, base[0]) - _row(p, kk), _row(p, base[1]) - _row(p, kk)
            c = geo.cross(p_ki, p_kj)
            c_dot = geo.cross(_row(v, base[0]) - _row(v, kk), p_kj) + geo.cross(p_ki, _row(v, base[1]) - _row(v, kk))
            if tuple(base) == BASE_123:
                n = bases[a][2] if a > 3 else _n123_in_use(bases)
                frozen = np.asarray(cache.degenerate_123_at_t0)
                n_dot = np.where(frozen[..., None], 0.0, _unit_normal_rate(c, c_dot))
            else:
                n, n_dot = c, c_dot
        m = geo.cross(n, p_ji)
        zeta_dot = geo.dot(p_ji, du_il) + geo.dot(p_li, du_ij)
        phi_dot = geo.dot(du_il, m) + geo.dot(p_li, geo.cross(n_dot, p_ji)) + geo.dot(p_li, geo.cross(n, du_ij))
        e = errors[..., idx:idx + graph.out_degree(a)]
        rate = e[..., 0] * zeta_dot + e[..., 1] * phi_dot
        if graph.out_degree(a) == 3:
            rate = rate + e[..., 2] * (geo.dot(n, du_il) + geo.dot(p_li, n_dot))
        out.append(rate)
        idx += graph.out_degree(a)
    return np.stack(out, axis=-1)


def _n123_in_use(bases):
    """The unit normal of triangle 1-2-3 the controller is currently using."""
    e1, e2 = bases[3]
    # e2 = n x e1 with n orthogonal to e1, so n = e1 x e2 / |e1|^2
    return geo.cross(e1, e2) / geo.dot(e1, e1)[..., None]


def w3_rate_closed_form(d21, mu3, nu3, zeta3_err, varphi3_err):
    return -d21 ** 2 * (mu3 * zeta3_err ** 2 + nu3 * varphi3_err ** 2)


def wl_rate_closed_form(d_ji, n_norm_sq, mu, nu, lam, zeta_err, varphi_err, vartheta_err):
    return -mu * d_ji ** 2 * zeta_err ** 2 - nu * d_ji ** 2 * n_norm_sq * varphi_err ** 2 - lam * n_norm_sq * vartheta_err ** 2


def linearization_diagonal(desired, gains):
    """Diagonal of the lower-triangular error-dynamics matrix at the equilibrium."""
    g = desired.graph
    d = desired.distance
    d21 = d(2, 1)
    out = [gains.mu[2]]
    if g.dim == 2:
        for cell in g.cells:
            i, j, l = cell
            out += [gains.mu[l] * d(j, i) ** 2, gains.nu[l] * d(j, i) ** 2]
        return np.array(out)
    out += [gains.mu[3] * d21 ** 2, gains.nu[3] * d21 ** 2]
    for cell in g.cells:
        i, j, k, l = cell
        nn = desired_normal_norm(desired, (i, j, k)) ** 2
        dji2 = d(j, i) ** 2
        out += [gains.mu[l] * dji2, gains.nu[l] * dji2 * nn, gains.lam[l] * nn]
    return np.array(out)
