"""SVG figures rendered straight from run logs, no display server needed.

Figures are built on bare ``matplotlib.figure.Figure`` objects so nothing
touches a GUI backend, and the SVG output is pinned (fixed hash salt, no
embedded date) so identical logs render identical bytes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from .logs import StepRecord, read_log

matplotlib.rcParams["svg.hashsalt"] = "poolgov"

PLOT_KINDS = ("prices", "pools", "training", "netpos")
_TOKEN_LABELS = ("WETH", "USDC", "TKN")
_COLORS = ("#1f77b4", "#2ca02c", "#d62728")


def _episode_rows(records: list[StepRecord], episode: int | None) -> list[StepRecord]:
    if episode is None:
        episode = records[0].episode
    rows = [r for r in records if r.episode == episode]
    if not rows:
        present = sorted({r.episode for r in records})
        raise ValueError(f"episode {episode} not in log (has {present[:10]}...)")
    return rows


def _mark_attacks(ax, rows: list[StepRecord]) -> None:
    for row in rows:
        if row.attack:
            ax.axvline(row.step, color="#999999", linestyle=":", linewidth=0.8)


def _plot_prices(fig: Figure, rows: list[StepRecord]) -> None:
    top, bottom = fig.subplots(2, 1, sharex=True)
    steps = [r.step for r in rows]
    for i, (label, color) in enumerate(zip(_TOKEN_LABELS, _COLORS)):
        first = rows[0].prices[i]
        top.plot(steps, [r.prices[i] / first for r in rows], color=color, label=label)
        bottom.step(
            steps,
            [r.collateral_factors[i] for r in rows],
            where="post",
            color=color,
            label=label,
        )
    _mark_attacks(top, rows)
    top.set_ylabel("price / initial")
    top.legend(loc="best", fontsize="small")
    bottom.set_ylabel("collateral factor")
    bottom.set_xlabel("step")
    fig.suptitle(f"prices and factor adjustments, episode {rows[0].episode}")


def _plot_pools(fig: Figure, rows: list[StepRecord]) -> None:
    top, bottom = fig.subplots(2, 1, sharex=True)
    steps = [r.step for r in rows]
    for i, (label, color) in enumerate(zip(_TOKEN_LABELS, _COLORS)):
        top.plot(steps, [r.utilizations[i] for r in rows], color=color, label=label)
        bottom.plot(steps, [r.net_positions[i] for r in rows], color=color, label=label)
    _mark_attacks(top, rows)
    top.set_ylabel("utilization")
    top.set_ylim(-0.05, 1.05)
    top.legend(loc="best", fontsize="small")
    bottom.set_ylabel("pool net position")
    bottom.set_xlabel("step")
    fig.suptitle(f"pool state, episode {rows[0].episode}")


def _plot_training(fig: Figure, records: list[StepRecord]) -> None:
    episodes = sorted({r.episode for r in records})
    by_episode = {ep: [] for ep in episodes}
    for row in records:
        by_episode[row.episode].append(row)
    scores = [sum(r.reward for r in by_episode[ep]) for ep in episodes]
    epsilons = [by_episode[ep][0].epsilon for ep in episodes]
    losses = []
    for ep in episodes:
        vals = [r.loss for r in by_episode[ep] if r.loss is not None]
        losses.append(sum(vals) / len(vals) if vals else float("nan"))

    score_ax, eps_ax, loss_ax = fig.subplots(3, 1, sharex=True)
    score_ax.plot(episodes, scores, color=_COLORS[0], linewidth=0.9)
    score_ax.axhline(0.0, color="#999999", linewidth=0.6)
    score_ax.set_ylabel("episode score")
    eps_ax.plot(episodes, epsilons, color=_COLORS[1])
    eps_ax.set_ylabel("epsilon")
    loss_ax.plot(episodes, losses, color=_COLORS[2], linewidth=0.9)
    loss_ax.set_yscale("log")
    loss_ax.set_ylabel("mean loss")
    loss_ax.set_xlabel("episode")
    fig.suptitle("training progress")


def _plot_netpos(
    fig: Figure, rows: list[StepRecord], bench_rows: list[StepRecord] | None
) -> None:
    ax = fig.subplots()
    ax.plot(
        [r.step for r in rows],
        [sum(r.net_positions) for r in rows],
        color=_COLORS[0],
        label="agent",
    )
    if bench_rows is not None:
        ax.plot(
            [r.step for r in bench_rows],
            [sum(r.net_positions) for r in bench_rows],
            color=_COLORS[2],
            linestyle="--",
            label="benchmark",
        )
    _mark_attacks(ax, rows)
    ax.axhline(0.0, color="#999999", linewidth=0.6)
    ax.set_xlabel("step")
    ax.set_ylabel("total net position")
    ax.legend(loc="best", fontsize="small")
    fig.suptitle(f"net position, episode {rows[0].episode}")


def render_plot(
    kind: str,
    log_path: str | Path,
    out_path: str | Path,
    *,
    episode: int | None = None,
    benchmark_log: str | Path | None = None,
) -> Path:
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}, valid kinds: {', '.join(PLOT_KINDS)}")
    records = read_log(log_path)
    if not records:
        raise ValueError(f"{log_path}: log holds no rows")

    fig = Figure(figsize=(8.0, 6.0), dpi=100)
    if kind == "prices":
        _plot_prices(fig, _episode_rows(records, episode))
    elif kind == "pools":
        _plot_pools(fig, _episode_rows(records, episode))
    elif kind == "training":
        _plot_training(fig, records)
    else:
        rows = _episode_rows(records, episode)
        bench_rows = None
        if benchmark_log is not None:
            bench_rows = _episode_rows(read_log(benchmark_log), rows[0].episode)
        _plot_netpos(fig, rows, bench_rows)

    out = Path(out_path)
    fig.savefig(out, format="svg", metadata={"Date": None})
    return out
