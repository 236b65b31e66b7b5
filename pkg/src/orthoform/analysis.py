"""Convergence verdicts, decay-rate fits and Monte-Carlo sweeps."""

import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .control import linearization_diagonal
from .errors import InsufficientDataError, ValidationError
from .framework import Framework, is_strongly_congruent
from .sim import SWEEP_CLASSES_2D, SWEEP_CLASSES_3D, initial_positions, integrate

log = logging.getLogger(__name__)

RATE_WINDOW = (1e-2, 1e-5)
RATE_THRESHOLD = 0.9
CONGRUENCE_TOL = 1e-4
MIN_WINDOW_SAMPLES = 10


@dataclass
class ConvergenceReport:
    converged: bool
    reason: str
    time_to_tol: float
    final_error_inf: float
    fitted_rate: float
    predicted_min_rate: float
    rate_ratio: float
    strong_congruency: bool
    normal_drift_max: float
    ic_kind: str = None

    def to_dict(self):
        return asdict(self)


def fit_exponential_rate(traj, error_inf=None, window=RATE_WINDOW):
    """Decay rate of ``|errors|_inf`` from a least-squares line through its log.

    ``traj`` is a trajectory (anything with ``times`` and ``error_inf``)
    or an array of sample times paired with ``error_inf``.  Only samples
    with ``err_lo <= error <= err_hi`` are used.
    """
    if error_inf is None:
        times, error_inf = traj.times, traj.error_inf
    else:
        times = traj
    times = np.asarray(times, float)
    e = np.asarray(error_inf, float)
    hi, lo = window
    inside = np.isfinite(e) & (e <= hi) & (e >= lo)
    if np.count_nonzero(inside) < MIN_WINDOW_SAMPLES:
        raise InsufficientDataError(
            f"only {np.count_nonzero(inside)} samples between {lo:g} and {hi:g}; "
            f"need {MIN_WINDOW_SAMPLES}"
        )
    slope = np.polyfit(times[inside], np.log(e[inside]), 1)[0]
    return float(-slope)


def predicted_min_rate(desired, gains):
    return float(np.min(linearization_diagonal(desired, gains)))


def check_local_rate(report, desired, gains, threshold=RATE_THRESHOLD):
    """True iff the fitted rate reaches ``threshold`` times the slowest predicted mode."""
    predicted = predicted_min_rate(desired, gains)
    fitted = report.fitted_rate
    ok = fitted is not None and fitted >= threshold * predicted
    if not ok:
        log.info(
            "local rate check failed: fitted %s vs %.3g x predicted %.17g",
            fitted, threshold, predicted,
        )
    return bool(ok)


def _report(times, error_inf, reason, time_to_tol, final_positions, drift, desired, predicted, kind):
    converged = reason == "converged"
    keep = ~np.isnan(error_inf)
    t, e = times[keep], error_inf[keep]
    fitted = None
    congruent = False
    if converged:
        try:
            fitted = fit_exponential_rate(t, e)
        except InsufficientDataError:
            fitted = None
        congruent = is_strongly_congruent(
            Framework(desired.graph, final_positions), desired.framework(), CONGRUENCE_TOL
        )
    return ConvergenceReport(
        converged=converged,
        reason=reason,
        time_to_tol=None if np.isnan(time_to_tol) else float(time_to_tol),
        final_error_inf=float(e[-1]),
        fitted_rate=fitted,
        predicted_min_rate=predicted,
        rate_ratio=None if fitted is None else fitted / predicted,
        strong_congruency=bool(congruent),
        normal_drift_max=float(drift),
        ic_kind=kind,
    )


def report_trajectory(traj, desired, gains, ic_kind=None):
    """:class:`ConvergenceReport` for one simulated trajectory."""
    return _report(
        traj.times,
        traj.error_inf,
        traj.reason,
        np.nan if traj.time_to_tol is None else traj.time_to_tol,
        traj.final_positions,
        traj.normal_drift,
        desired,
        predicted_min_rate(desired, gains),
        ic_kind,
    )


def sweep_initial_positions(desired, n_runs, seed, half_width=None, classes=None):
    """Initial configurations for a sweep, cycling through the IC classes.

    Run ``r`` draws from its own child of ``SeedSequence(seed)``, so any
    run can be reproduced alone.
    """
    if classes is None:
        classes = SWEEP_CLASSES_2D if desired.graph.dim == 2 else SWEEP_CLASSES_3D
    kinds = [classes[r % len(classes)] for r in range(n_runs)]
    children = np.random.SeedSequence(seed).spawn(n_runs)
    p0 = np.array(
        [
            initial_positions(desired, kind, np.random.default_rng(child), half_width)
            for kind, child in zip(kinds, children)
        ]
    )
    return p0, kinds


def monte_carlo(scenario, n_runs, seed, classes=None):
    """Sweep ``n_runs`` initial conditions and aggregate the verdicts.

    Returns a JSON-ready dict; a diverged run is a failed entry, never an
    exception.  The dict holds no timing, so a fixed seed reproduces it
    exactly.
    """
    n_runs = int(n_runs)
    if n_runs < 1:
        raise ValidationError("n_runs must be >= 1")
    desired, gains, cfg = scenario.desired, scenario.gains, scenario.sim
    p0, kinds = sweep_initial_positions(desired, n_runs, seed, cfg.initial.half_width, classes)
    start = time.perf_counter()
    res = integrate(desired, gains, cfg, p0)
    elapsed = time.perf_counter() - start
    predicted = predicted_min_rate(desired, gains)
    reports = [
        _report(
            res.times, res.error_inf[:, r], res.reasons[r], res.time_to_tol[r],
            res.final_positions[r], res.normal_drift[r], desired, predicted, kinds[r],
        )
        for r in range(n_runs)
    ]
    return aggregate(reports, seed), elapsed


def aggregate(reports, seed=None):
    n = len(reports)
    converged = [r for r in reports if r.converged]
    congruent = [r for r in reports if r.strong_congruency]
    rates = [r.rate_ratio for r in converged if r.rate_ratio is not None]
    by_class = {}
    for kind, count in Counter(r.ic_kind for r in reports).items():
        mine = [r for r in reports if r.ic_kind == kind]
        by_class[kind] = {
            "runs": count,
            "converged": sum(r.converged for r in mine),
            "strongly_congruent": sum(r.strong_congruency for r in mine),
        }
    return {
        "n_runs": n,
        "seed": seed,
        "fraction_converged": len(converged) / n,
        "fraction_strongly_congruent": len(congruent) / n,
        "all_strongly_congruent": len(congruent) == n,
        "worst_time_to_tol": max((r.time_to_tol for r in converged), default=None),
        "max_normal_drift": max((r.normal_drift_max for r in converged), default=None),
        "min_rate_ratio": min(rates, default=None),
        "fraction_rate_ok": (
            sum(x >= RATE_THRESHOLD for x in rates) / len(converged) if converged else None
        ),
        "reasons": dict(Counter(r.reason for r in reports)),
        "by_class": by_class,
        "runs": [r.to_dict() for r in reports],
    }
