"""Command-line front end: train, eval, bench, replay, plot.

Exit codes: 0 on success, 1 when a replay fails verification, 2 for usage,
config, or checkpoint problems, 3 when training aborts on a numerical
failure.
"""
from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, restore_agent
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .env import TOKENS, GovernanceEnv
from .harness import keep_all_policy, make_agent, run_benchmark_pair, run_episode, train
from .logs import RunLogWriter, StepRecord, read_log, write_summary
from .market import EVAL_DOMAIN, TRAIN_DOMAIN, EpisodeRandomness
from .plots import PLOT_KINDS, render_plot

OK = 0
REPLAY_MISMATCH = 1
USAGE_ERROR = 2
NUMERICAL_ABORT = 3


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument(
        "--attacks", choices=("on", "off"), default=None, help="toggle oracle attacks"
    )


def _build_config(args: argparse.Namespace, **extra) -> RunConfig:
    cfg = load_config(args.config)
    attacks = None if args.attacks is None else args.attacks == "on"
    return apply_overrides(cfg, seed=args.seed, attacks=attacks, **extra)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _build_config(args, episodes=args.episodes)
    try:
        result = train(cfg, args.out)
    except FloatingPointError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return NUMERICAL_ABORT
    print(
        f"trained {len(result.episodes)} episodes,"
        f" {result.bankruptcies} bankruptcies,"
        f" checkpoint {result.final_checkpoint}"
    )
    return OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    seeds = args.seeds if args.seeds is not None else cfg.training.eval_seeds
    snap = load_checkpoint(args.checkpoint, expected_config_hash=cfg.hash_bytes())
    agent = make_agent(cfg)
    restore_agent(agent, snap)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agent_finals: list[float] = []
    bench_finals: list[float] = []
    with RunLogWriter(out / "eval_agent.csv") as agent_log, RunLogWriter(
        out / "eval_benchmark.csv"
    ) as bench_log:
        for index in range(seeds):
            agent_result, bench_result = run_benchmark_pair(cfg, agent, index)
            for record in agent_result.records:
                agent_log.write(record)
            for record in bench_result.records:
                bench_log.write(record)
            agent_finals.append(agent_result.final_net)
            bench_finals.append(bench_result.final_net)
    wins = sum(1 for a, b in zip(agent_finals, bench_finals) if a > b)
    win_rate = wins / seeds if seeds else 0.0
    write_summary(
        out / "eval_summary.json",
        {
            "seeds": seeds,
            "win_rate": win_rate,
            "agent_final_net": agent_finals,
            "benchmark_final_net": bench_finals,
        },
    )
    print(f"win rate {wins}/{seeds} = {win_rate:.2f}")
    return OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    seeds = args.seeds if args.seeds is not None else cfg.training.eval_seeds
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    finals: list[float] = []
    bankruptcies = 0
    with RunLogWriter(out / "bench.csv") as log:
        for index in range(seeds):
            env = GovernanceEnv(
                cfg, EpisodeRandomness(cfg.training.seed, EVAL_DOMAIN, index)
            )
            result = run_episode(env, keep_all_policy, episode_index=index)
            for record in result.records:
                log.write(record)
            finals.append(result.final_net)
            bankruptcies += int(result.bankrupt)
    write_summary(
        out / "bench_summary.json",
        {"seeds": seeds, "final_net": finals, "bankruptcies": bankruptcies},
    )
    print(f"benchmark over {seeds} seeds, {bankruptcies} bankruptcies")
    return OK


def _replay_mismatch(step: int, field: str, logged, rebuilt) -> int:
    print(
        f"replay mismatch at step {step}: {field} logged {logged!r}, rebuilt {rebuilt!r}",
        file=sys.stderr,
    )
    return REPLAY_MISMATCH


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    rows = [r for r in read_log(args.log) if r.episode == args.episode]
    if not rows:
        print(f"episode {args.episode} not present in {args.log}", file=sys.stderr)
        return USAGE_ERROR
    domain = TRAIN_DOMAIN if args.domain == "train" else EVAL_DOMAIN
    env = GovernanceEnv(
        cfg, EpisodeRandomness(cfg.training.seed, domain, args.episode)
    )
    for row in rows:
        if env.done:
            return _replay_mismatch(row.step, "termination", "more rows", "episode done")
        result = env.step(row.action)
        prices = dict(env.paths.path)
        rebuilt = StepRecord(
            episode=args.episode,
            step=result.step,
            prices=tuple(prices[tok] for tok in TOKENS),
            collateral_factors=tuple(
                env.protocol.pools[tok].collateral_factor for tok in TOKENS
            ),
            utilizations=tuple(env.protocol.utilization(tok) for tok in TOKENS),
            net_positions=tuple(
                env.protocol.net_position(tok) * prices[tok] for tok in TOKENS
            ),
            action=row.action,
            reward=result.reward,
            epsilon=row.epsilon,
            loss=row.loss,
            attack=result.attack,
            restricted=result.restricted,
            liquidated=result.liquidated,
            defaulted=result.defaulted,
            bankrupt=result.bankrupt,
        )
        for field in (
            "step",
            "prices",
            "collateral_factors",
            "utilizations",
            "net_positions",
            "reward",
            "attack",
            "restricted",
            "liquidated",
            "defaulted",
            "bankrupt",
        ):
            logged, built = getattr(row, field), getattr(rebuilt, field)
            if logged != built:
                return _replay_mismatch(row.step, field, logged, built)
    if not env.done:
        return _replay_mismatch(rows[-1].step, "termination", "episode done", "more rows")
    print(f"episode {args.episode} verified over {len(rows)} steps")
    return OK


def cmd_plot(args: argparse.Namespace) -> int:
    out = render_plot(
        args.kind,
        args.log,
        args.out,
        episode=args.episode,
        benchmark_log=args.bench,
    )
    print(f"wrote {out}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolgov",
        description="lending-pool governance: simulate, train, evaluate, plot",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the governance agent")
    _add_config_options(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--episodes", type=int, default=None, help="episode count override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="paired evaluation against the fixed benchmark")
    _add_config_options(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--seeds", type=int, default=None, help="held-out seed count")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run the fixed-factor benchmark alone")
    _add_config_options(p)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="re-run a logged episode and verify it")
    _add_config_options(p)
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--episode", type=int, default=0)
    p.add_argument(
        "--domain",
        choices=("train", "eval"),
        default="train",
        help="randomness domain the log came from",
    )
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("plot", help="render an SVG figure from a log")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--episode", type=int, default=None)
    p.add_argument("--bench", type=Path, default=None, help="benchmark log overlay")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
