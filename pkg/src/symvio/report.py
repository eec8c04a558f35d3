"""Figure rendering for evaluation reports."""

from __future__ import annotations

from pathlib import Path as FilePath

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .simulate import Trajectory, align_gauge


def render_evaluation_figures(out_dir, estimate: Trajectory, truth: Trajectory,
                              report) -> list[FilePath]:
    """Write trajectory, error-over-time and error-histogram figures."""
    out_dir = FilePath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    result = align_gauge(estimate, truth)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(truth.positions[:, 0], truth.positions[:, 1], "k-", label="truth")
    ax.plot(result.aligned[:, 0], result.aligned[:, 1], "r--", label="estimate (aligned)")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best")
    ax.set_title("Trajectory, top view")
    fig.tight_layout()
    path = out_dir / "trajectory_xy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(report.times, report.errors, "b-")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("position error [m]")
    ax.set_title(f"Aligned position error (RMSE {report.rmse:.3f} m)")
    fig.tight_layout()
    path = out_dir / "error_over_time.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.hist(report.errors, bins=40, color="steelblue")
    ax.set_xlabel("position error [m]")
    ax.set_ylabel("count")
    ax.set_title("Error distribution")
    fig.tight_layout()
    path = out_dir / "error_histogram.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths
