"""Single-integrator dynamics under the formation controller.

The integrator is classical fixed-step RK4 and always runs on a batch of
independent systems with shape ``(R, N, 3)``; a single run is a batch of
one.  All kernels are elementwise along the batch axis, so a run's
trajectory is bitwise identical whether it is integrated alone or inside
a sweep.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import geometry as geo
from .control import closed_loop
from .errors import DivergenceError, ValidationError
from .projections import (
    DEFAULT_EPS,
    DEFAULT_N2_PLUS,
    desired_projection_vector,
    lambda_layout,
    make_normal_cache,
)

log = logging.getLogger(__name__)

IC_KINDS = (
    "explicit",
    "random-cube",
    "collocated-12",
    "collinear-123",
    "coplanar-all",
    "reflected-desired",
)
SWEEP_CLASSES_3D = ("random-cube", "collocated-12", "collinear-123", "coplanar-all", "reflected-desired")
SWEEP_CLASSES_2D = ("random-cube", "collocated-12", "collinear-123", "reflected-desired")


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "random-cube"
    seed: int = 0
    half_width: float = None  # None: 5x the largest desired distance
    positions: tuple = None

    def __post_init__(self):
        if self.kind not in IC_KINDS:
            raise ValidationError(f"unknown initial-condition kind {self.kind!r}")
        if self.kind == "explicit" and self.positions is None:
            raise ValidationError("explicit initial condition needs positions")
        if self.half_width is not None and not self.half_width > 0:
            raise ValidationError("half_width must be positive")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.005
    t_max: float = 60.0
    convergence_tol: float = 1e-6
    initial: InitialCondition = field(default_factory=InitialCondition)
    degeneracy_eps: float = DEFAULT_EPS
    record_every: int = 1
    n2_plus: tuple = DEFAULT_N2_PLUS
    sustain: int = 10
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not self.t_max >= 0:
            raise ValidationError("t_max must be non-negative")
        if not self.convergence_tol > 0:
            raise ValidationError("convergence_tol must be positive")
        if int(self.record_every) < 1:
            raise ValidationError("record_every must be >= 1")
        if not self.degeneracy_eps > 0:
            raise ValidationError("degeneracy_eps must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # (S, N, 3)
    errors: np.ndarray  # (S, 3N-6)
    error_inf: np.ndarray  # (S,)
    n2: np.ndarray  # (S, 3) geometric n2, NaN while agents 1, 2 are within eps
    n123: np.ndarray  # (S, 3) geometric n123, NaN while 1, 2, 3 are within eps of collinear
    reason: str
    steps: int
    time_to_tol: float = None
    normal_drift: float = 0.0
    midrun_degenerate_steps: int = 0
    wall_time: float = 0.0
    layout: list = None

    @property
    def final_positions(self):
        return self.positions[-1]

    @property
    def converged(self):
        return self.reason == "converged"


def _random_rotation(rng, planar):
    if planar:
        a = rng.uniform(0, 2 * np.pi)
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Rotation.random(random_state=rng).as_matrix()


def reflect_through_base(p):
    """Mirror positions through the plane of agents 1-2-3 (the line 1-2 if planar)."""
    p = np.array(p, float)
    planar = np.all(p[:, 2] == 0)
    if planar:
        d = p[1] - p[0]
        m = np.array([-d[1], d[0], 0.0])
    else:
        m = geo.cross(p[0] - p[2], p[1] - p[2])
    m = m / geo.norm(m)
    return p - 2.0 * np.outer((p - p[0]) @ m, m)


def initial_positions(desired, kind, rng, half_width=None):
    """Draw an initial configuration of class ``kind``.

    Planar formations get planar draws (z = 0); there ``coplanar-all`` is
    the same as ``random-cube``.
    """
    n = desired.graph.n_agents
    planar = desired.graph.dim == 2
    L = 5.0 * desired.max_distance if half_width is None else float(half_width)
    dims = 2 if planar else 3

    def cube(m):
        out = np.zeros((m, 3))
        out[:, :dims] = rng.uniform(-L, L, size=(m, dims))
        return out

    p = cube(n)
    if kind == "random-cube":
        return p
    if kind == "collocated-12":
        p[1] = p[0]
        return p
    if kind == "collinear-123":
        u = np.zeros(3)
        u[:dims] = rng.normal(size=dims)
        u /= geo.norm(u)
        a, b = rng.uniform(-L, L, size=2)
        p[1] = p[0] + a * u
        p[2] = p[0] + b * u
        return p
    if kind == "coplanar-all":
        if planar:
            return p
        e1, e2 = Rotation.random(random_state=rng).as_matrix()[:2]
        coeff = rng.uniform(-L, L, size=(n, 2))
        return p[0] + coeff[:, :1] * e1 + coeff[:, 1:] * e2
    if kind == "reflected-desired":
        q = reflect_through_base(desired.desired_positions)
        rot = _random_rotation(rng, planar)
        shift = cube(1)[0]
        return q @ rot.T + shift
    raise ValidationError(f"cannot draw initial condition of kind {kind!r}")


def initial_positions_for(desired, ic):
    if ic.kind == "explicit":
        p = np.array(ic.positions, float)
        if p.shape != (desired.graph.n_agents, 3):
            raise ValidationError(f"explicit positions must have shape ({desired.graph.n_agents}, 3)")
        return p
    return initial_positions(desired, ic.kind, np.random.default_rng(ic.seed), ic.half_width)


def rk4_step(f, p, dt):
    """Classical RK4; ``f`` returns ``(velocity, errors, midrun)``.

    Returns the new state together with the first-stage output, which is
    the closed loop evaluated at ``p``.
    """
    k1, err, mr = f(p)
    k2, _, mr2 = f(p + (0.5 * dt) * k1)
    k3, _, mr3 = f(p + (0.5 * dt) * k2)
    k4, _, mr4 = f(p + dt * k3)
    return p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), err, mr | mr2 | mr3 | mr4


@dataclass
class BatchResult:
    times: np.ndarray  # (S,)
    error_inf: np.ndarray  # (S, R), NaN after a run stops
    final_positions: np.ndarray  # (R, N, 3)
    reasons: list
    steps: np.ndarray
    time_to_tol: np.ndarray
    normal_drift: np.ndarray
    midrun_steps: np.ndarray
    initial_positions: np.ndarray
    positions: np.ndarray = None  # (S, R, N, 3) when recorded
    errors: np.ndarray = None  # (S, R, D) when recorded
    n2: np.ndarray = None
    n123: np.ndarray = None


def _geometric_normals(p, eps, planar):
    p21 = p[..., 0, :] - p[..., 1, :]
    l21 = geo.norm(p21)
    c = geo.cross(p[..., 0, :] - p[..., 2, :], p[..., 1, :] - p[..., 2, :])
    lc = geo.norm(c)
    with np.errstate(divide="ignore", invalid="ignore"):
        n2 = np.where((l21 > eps)[..., None], p21 / l21[..., None], np.nan)
        if planar:
            n123 = np.broadcast_to(np.array([0.0, 0.0, 1.0]), c.shape).copy()
        else:
            n123 = np.where((lc > eps)[..., None], c / lc[..., None], np.nan)
    return n2, n123


def integrate(desired, gains, config, p0, record=False, lam_star=None):
    """Integrate a batch of initial configurations ``p0`` of shape ``(R, N, 3)``.

    Each run stops on sustained convergence (``sustain`` consecutive
    samples with ``|errors|_inf < convergence_tol``), at the horizon, or
    on divergence; stopped runs are frozen while the rest continue.
    """
    graph = desired.graph
    planar = graph.dim == 2
    p0 = np.array(p0, float)
    if p0.ndim == 2:
        p0 = p0[None]
    R = p0.shape[0]
    if planar and np.any(p0[..., 2] != 0):
        raise ValidationError("planar runs need initial positions with z = 0")
    if lam_star is None:
        lam_star = desired_projection_vector(desired)
    gain_vec = gains.vector(graph)
    cache = make_normal_cache(p0, eps=config.degeneracy_eps, n2_plus=config.n2_plus, planar=planar)
    dt = float(config.dt)
    every = int(config.record_every)
    n_steps = int(round(config.t_max / dt))
    limit = config.divergence_factor * np.maximum(
        np.max(geo.norm(p0), axis=-1), desired.max_distance
    )

    p = p0.copy()
    active = np.ones(R, bool)
    rows = np.arange(R)
    sub_cache = cache

    def f(q):
        return closed_loop(graph, q, lam_star, gain_vec, sub_cache)

    reasons = [None] * R
    steps = np.zeros(R, int)
    streak = np.zeros(R, int)
    streak_start = np.full(R, np.nan)
    time_to_tol = np.full(R, np.nan)
    drift = np.zeros(R)
    midrun_steps = np.zeros(R, int)
    n2_ref, n123_ref = cache.n2_t0, cache.n123_t0

    times, err_hist, pos_hist, full_err_hist, n2_hist, n123_hist = [], [], [], [], [], []
    _, err, _ = f(p)
    step = 0
    while True:
        if step % every == 0:
            t = step * dt
            e_inf = np.max(np.abs(err), axis=-1)
            times.append(t)
            err_hist.append(np.where(active, e_inf, np.nan))
            g2, g123 = _geometric_normals(p, config.degeneracy_eps, planar)
            with np.errstate(invalid="ignore"):
                d2 = np.nan_to_num(geo.norm(g2 - n2_ref), nan=0.0)
                d123 = np.nan_to_num(geo.norm(g123 - n123_ref), nan=0.0)
            drift = np.where(active, np.maximum(drift, np.maximum(d2, d123)), drift)
            if record:
                pos_hist.append(p.copy())
                full_err_hist.append(err.copy())
                n2_hist.append(g2)
                n123_hist.append(g123)
            below = e_inf < config.convergence_tol
            streak_start = np.where(active & below & (streak == 0), t, streak_start)
            streak = np.where(below, streak + 1, 0)
            done = active & (streak >= config.sustain)
            for r in np.flatnonzero(done):
                reasons[r] = "converged"
                time_to_tol[r] = streak_start[r]
            active &= ~done
        if step >= n_steps:
            for r in np.flatnonzero(active):
                reasons[r] = "horizon"
            active[:] = False
        if not active.any():
            break
        if len(rows) != np.count_nonzero(active):
            # integrate only the runs still going; kernels are per-row, so
            # this does not change any run's arithmetic
            rows = np.flatnonzero(active)
            sub_cache = cache.subset(rows)
        q, _, mr = rk4_step(f, p[rows], dt)
        p[rows] = q
        midrun_steps[rows] += mr
        steps[rows] += 1
        step += 1
        ok = np.all(np.isfinite(q), axis=(1, 2)) & (np.max(geo.norm(q), axis=-1) <= limit[rows])
        for r in rows[~ok]:
            reasons[r] = "diverged"
            active[r] = False
        with np.errstate(invalid="ignore", over="ignore"):
            _, e_rows, _ = f(q)
        err[rows] = e_rows

    if midrun_steps.any():
        log.warning(
            "%d run(s) hit a mid-run degeneracy of agents 1-2(-3); held the t=0 normal",
            int(np.count_nonzero(midrun_steps)),
        )

    result = BatchResult(
        times=np.array(times),
        error_inf=np.array(err_hist),
        final_positions=p,
        reasons=reasons,
        steps=steps,
        time_to_tol=time_to_tol,
        normal_drift=drift,
        midrun_steps=midrun_steps,
        initial_positions=p0,
    )
    if record:
        result.positions = np.array(pos_hist)
        result.errors = np.array(full_err_hist)
        result.n2 = np.array(n2_hist)
        result.n123 = np.array(n123_hist)
    return result


def _trajectory_from_batch(res, r, graph, wall):
    keep = ~np.isnan(res.error_inf[:, r])
    return Trajectory(
        times=res.times[keep],
        positions=res.positions[keep, r],
        errors=res.errors[keep, r],
        error_inf=res.error_inf[keep, r],
        n2=res.n2[keep, r],
        n123=res.n123[keep, r],
        reason=res.reasons[r],
        steps=int(res.steps[r]),
        time_to_tol=None if np.isnan(res.time_to_tol[r]) else float(res.time_to_tol[r]),
        normal_drift=float(res.normal_drift[r]),
        midrun_degenerate_steps=int(res.midrun_steps[r]),
        wall_time=wall,
        layout=lambda_layout(graph),
    )


def simulate(desired, gains, config, p0=None):
    """Integrate one system and return its full :class:`Trajectory`.

    Raises :class:`DivergenceError` if the run blows up.
    """
    if p0 is None:
        p0 = initial_positions_for(desired, config.initial)
    start = time.perf_counter()
    res = integrate(desired, gains, config, np.asarray(p0, float)[None], record=True)
    traj = _trajectory_from_batch(res, 0, desired.graph, time.perf_counter() - start)
    if traj.reason == "diverged":
        raise DivergenceError(
            f"run diverged after {traj.steps} steps (t = {traj.steps * config.dt:g})",
            {"steps": traj.steps, "last_error_inf": float(traj.error_inf[-1]), "trajectory": traj},
        )
    return traj


def run(scenario):
    """Run a scenario (3D or planar) from its configured initial condition."""
    if scenario.mode == "2d":
        return run_2d(scenario)
    if scenario.desired.graph.dim != 3:
        raise ValidationError("3d mode needs a spatial formation")
    return simulate(scenario.desired, scenario.gains, scenario.sim)


def run_2d(scenario):
    """Planar mode: positions and controls keep a zero z-component throughout."""
    desired = scenario.desired
    if desired.graph.dim != 2:
        raise ValidationError("2d mode needs a planar (triangulated) formation")
    if np.any(desired.desired_positions[:, 2] != 0):
        raise ValidationError("planar formation must lie in z = 0")
    p0 = initial_positions_for(desired, scenario.sim.initial)
    if np.any(p0[:, 2] != 0):
        raise ValidationError("planar runs need initial positions with z = 0")
    return simulate(desired, scenario.gains, scenario.sim, p0)


def trajectory_header(traj):
    n = traj.positions.shape[1]
    cols = ["t"]
    for a in range(1, n + 1):
        cols += [f"x_{a}", f"y_{a}", f"z_{a}"]
    cols += [f"err_{name}_{a}" for a, name in traj.layout]
    return cols + ["err_inf"]


def write_trajectory_csv(traj, path):
    """One row per sample: time, positions, error components, infinity norm."""
    s = len(traj.times)
    table = np.column_stack(
        [traj.times, traj.positions.reshape(s, -1), traj.errors, traj.error_inf]
    )
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header=",".join(trajectory_header(traj)), comments="")


def summary_dict(traj):
    return {
        "reason": traj.reason,
        "converged": traj.converged,
        "final_error_inf": float(traj.error_inf[-1]),
        "time_to_tol": traj.time_to_tol,
        "steps": traj.steps,
        "final_time": float(traj.times[-1]),
        "samples": len(traj.times),
        "normal_drift_max": traj.normal_drift,
        "midrun_degenerate_steps": traj.midrun_degenerate_steps,
        "wall_time": traj.wall_time,
        "final_positions": traj.final_positions.tolist(),
    }
