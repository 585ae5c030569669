"""Evaluation reports: per-episode CSV with an aggregate block, optional plots."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

from ..world import World
from .metrics import (
    Metrics,
    OUTCOME_ALPHA,
    OUTCOME_BETA,
    OUTCOME_GAMMA,
    OUTCOME_SUCCESS,
    OUTCOME_TIMEOUT,
)

EPISODE_FIELDS = (
    "episode",
    "outcome",
    "incidents",
    "time_s",
    "path_length_m",
    "ticks",
    "reward_sum",
)
AGGREGATE_FIELDS = (
    "method",
    "episodes",
    "success",
    "alpha",
    "beta",
    "gamma",
    "timeout",
    "mean_time_s",
    "mean_path_m",
)


class EmptyReportError(ValueError):
    pass


def apportioned_rates(metrics: Metrics, scale: int = 10_000) -> dict[str, float]:
    """Outcome rates rounded to 1/scale, forced to sum to exactly 1.

    Largest-remainder apportionment: independent rounding can lose or gain a
    unit (three episodes -> 0.3333 * 3), which would break the sum invariant
    every report must satisfy.
    """
    n = len(metrics.episodes)
    if n == 0:
        raise EmptyReportError("no episodes recorded")
    order = (OUTCOME_SUCCESS, OUTCOME_ALPHA, OUTCOME_BETA, OUTCOME_GAMMA, OUTCOME_TIMEOUT)
    counts = {k: sum(1 for e in metrics.episodes if e.outcome == k) for k in order}
    base = {k: (counts[k] * scale) // n for k in order}
    remainder = {k: (counts[k] * scale) % n for k in order}
    short = scale - sum(base.values())
    # ties broken by the fixed outcome order so output is deterministic
    for k in sorted(order, key=lambda k: (-remainder[k], order.index(k)))[:short]:
        base[k] += 1
    return {k: base[k] / scale for k in order}


def write_csv(metrics: Metrics, out_path: str | Path, method: str = "policy") -> Path:
    """Per-episode rows, a blank line, then one aggregate row."""
    if not metrics.episodes:
        raise EmptyReportError("no episodes recorded")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rates = apportioned_rates(metrics)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_FIELDS)
        for i, e in enumerate(metrics.episodes, start=1):
            w.writerow(
                [i, e.outcome, "|".join(e.incidents), e.time_s, e.path_length, e.ticks, e.reward_sum]
            )
        w.writerow([])
        w.writerow(AGGREGATE_FIELDS)
        w.writerow(
            [
                method,
                len(metrics.episodes),
                f"{rates[OUTCOME_SUCCESS]:.4f}",
                f"{rates[OUTCOME_ALPHA]:.4f}",
                f"{rates[OUTCOME_BETA]:.4f}",
                f"{rates[OUTCOME_GAMMA]:.4f}",
                f"{rates[OUTCOME_TIMEOUT]:.4f}",
                round(metrics.mean_time(), 3),
                round(metrics.mean_path_length(), 3),
            ]
        )
    return out_path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def plot_rates(metrics: Metrics, out_path: str | Path, method: str = "policy") -> Path:
    if not metrics.episodes:
        raise EmptyReportError("no episodes recorded")
    plt = _pyplot()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rates = metrics.rates()
    labels = [OUTCOME_SUCCESS, OUTCOME_ALPHA, OUTCOME_BETA, OUTCOME_GAMMA, OUTCOME_TIMEOUT]
    values = [rates[k] for k in labels]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(labels, values, color=["#2a9d8f", "#e76f51", "#f4a261", "#e9c46a", "#8d99ae"])
    for b, v in zip(bars, values):
        ax.text(b.get_x() + b.get_width() / 2, v, f"{v:.0%}", ha="center", va="bottom")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("rate")
    ax.set_title(f"outcomes: {method} (n={len(metrics.episodes)})")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def plot_trajectories(
    trajectories: Sequence[Sequence[tuple[float, float]]],
    out_path: str | Path,
    world: Optional[World] = None,
) -> Path:
    """Overlay of episode paths; SVG carries one identifiable polyline each."""
    if not trajectories:
        raise EmptyReportError("no trajectories recorded")
    plt = _pyplot()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 6))
    if world is not None:
        w, h = world.bounds
        ax.plot([0, w, w, 0, 0], [0, 0, h, h, 0], color="black", lw=1.2)
        for ob in world.obstacles:
            xs = [p[0] for p in ob.vertices] + [ob.vertices[0][0]]
            ys = [p[1] for p in ob.vertices] + [ob.vertices[0][1]]
            ax.fill(xs, ys, color="0.8", edgecolor="0.4", lw=0.8)
        for x1, y1, x2, y2 in world.segments:
            ax.plot([x1, x2], [y1, y2], color="0.3", lw=2.0)
    for i, traj in enumerate(trajectories):
        xs = [p[0] for p in traj]
        ys = [p[1] for p in traj]
        (line,) = ax.plot(xs, ys, lw=1.0, alpha=0.8)
        line.set_gid(f"episode-{i}")
        ax.plot(xs[0], ys[0], marker="o", ms=3, color=line.get_color())
    ax.set_aspect("equal")
    ax.set_title(f"trajectories (n={len(trajectories)})")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def write_report(
    in_path: str | Path,
    out_path: str | Path,
    plots_dir: Optional[str | Path] = None,
) -> list[Path]:
    """CLI entry: eval-output JSON in, CSV (plus optional plot files) out."""
    try:
        data = json.loads(Path(in_path).read_text())
    except FileNotFoundError:
        raise EmptyReportError(f"input not found: {in_path}") from None
    except ValueError as exc:
        raise EmptyReportError(f"bad input JSON: {exc}") from exc
    metrics = Metrics.from_json(data["metrics"])
    method = str(data.get("method", "policy"))
    written = [write_csv(metrics, out_path, method=method)]
    if plots_dir is not None:
        plots_dir = Path(plots_dir)
        written.append(plot_rates(metrics, plots_dir / "rates.svg", method=method))
        trajectories = data.get("trajectories") or []
        if trajectories:
            world = World.from_json(data["world"]) if data.get("world") else None
            written.append(
                plot_trajectories(trajectories, plots_dir / "trajectories.svg", world=world)
            )
    return written
