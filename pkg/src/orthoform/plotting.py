"""PNG figures of a run: error decay and agent paths."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_error_decay(traj, path, tol=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(traj.times, traj.error_inf, lw=1.5)
    if tol is not None:
        ax.axhline(tol, color="gray", ls="--", lw=1, label=f"tolerance {tol:g}")
        ax.legend()
    ax.set_xlabel("t")
    ax.set_ylabel("max |projection error|")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_paths(traj, path, desired=None):
    """Agent paths, with the final formation's edges drawn in black."""
    p = traj.positions
    planar = not p[..., 2].any()
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(111) if planar else fig.add_subplot(111, projection="3d")
    coords = (lambda q: (q[..., 0], q[..., 1])) if planar else (lambda q: (q[..., 0], q[..., 1], q[..., 2]))
    for a in range(p.shape[1]):
        ax.plot(*coords(p[:, a]), lw=1, label=f"agent {a + 1}")
        ax.scatter(*coords(p[-1, a]), s=20)
    if desired is not None:
        for s, t in desired.graph.edges:
            ax.plot(*coords(p[-1, [s - 1, t - 1]]), color="black", lw=1.5)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
