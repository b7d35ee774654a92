"""Training, evaluation, and the paired fixed-policy benchmark.

The benchmark never touches collateral factors, so running it against the
learned policy on the same randomness isolates the governance decisions as
the only difference between the two trajectories.
"""
from __future__ import annotations

import gc
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent import DQNAgent
from .checkpoint import save_checkpoint, snapshot_agent
from .config import RunConfig
from .env import FEATURES_PER_POOL, KEEP_ALL_ACTION, TOKENS, GovernanceEnv, StepResult
from .logs import RunLogWriter, StepRecord, write_summary
from .market import AGENT_DOMAIN, EVAL_DOMAIN, TRAIN_DOMAIN, EpisodeRandomness

Policy = Callable[[np.ndarray], int]
ACTION_COUNT = 3 ** len(TOKENS)


def keep_all_policy(features: np.ndarray) -> int:
    return KEEP_ALL_ACTION


def greedy_policy(agent: DQNAgent) -> Policy:
    return lambda features: agent.select_action(features, explore=False)


def make_agent(cfg: RunConfig, rng: np.random.Generator | None = None) -> DQNAgent:
    if rng is None:
        seq = np.random.SeedSequence([cfg.training.seed, AGENT_DOMAIN, 0])
        rng = np.random.default_rng(seq)
    return DQNAgent(
        cfg.agent,
        feature_dim=len(TOKENS) * FEATURES_PER_POOL,
        action_count=ACTION_COUNT,
        rng=rng,
        total_anneal_steps=cfg.training.episodes * cfg.training.steps_per_episode,
    )


@dataclass(slots=True)
class EpisodeResult:
    records: list[StepRecord]
    rewards: list[float]
    final_net: float
    score: float
    bankrupt: bool
    steps: int
    wall_clock: float


def run_episode(
    env: GovernanceEnv,
    policy: Policy,
    *,
    episode_index: int = 0,
    epsilon_fn: Callable[[], float] | None = None,
    on_transition: Callable[[np.ndarray, int, StepResult], float | None] | None = None,
) -> EpisodeResult:
    """Drive one episode to termination, collecting full log rows.

    ``epsilon_fn`` is sampled before each action so the logged value is the
    one the policy actually used; ``on_transition`` is the learning hook and
    its return value lands in the loss column.
    """
    records: list[StepRecord] = []
    rewards: list[float] = []
    state = env.features()
    initial_net = env.prev_net
    result: StepResult | None = None
    start = time.perf_counter()
    while not env.done:
        epsilon = epsilon_fn() if epsilon_fn is not None else 0.0
        action = policy(state)
        result = env.step(action)
        loss = on_transition(state, action, result) if on_transition else None
        rewards.append(result.reward)
        prices = dict(env.paths.path)
        records.append(
            StepRecord(
                episode=episode_index,
                step=result.step,
                prices=tuple(prices[tok] for tok in TOKENS),
                collateral_factors=tuple(
                    env.protocol.pools[tok].collateral_factor for tok in TOKENS
                ),
                utilizations=tuple(env.protocol.utilization(tok) for tok in TOKENS),
                net_positions=tuple(
                    env.protocol.net_position(tok) * prices[tok] for tok in TOKENS
                ),
                action=action,
                reward=result.reward,
                epsilon=epsilon,
                loss=loss,
                attack=result.attack,
                restricted=result.restricted,
                liquidated=result.liquidated,
                defaulted=result.defaulted,
                bankrupt=result.bankrupt,
            )
        )
        state = result.features
    wall_clock = time.perf_counter() - start
    assert result is not None
    return EpisodeResult(
        records=records,
        rewards=rewards,
        final_net=result.net_total,
        score=result.net_total - initial_net,
        bankrupt=result.bankrupt,
        steps=len(records),
        wall_clock=wall_clock,
    )


# --- score aggregation -----------------------------------------------------


def normalize_scores(scores: Sequence[float]) -> list[float]:
    """Squash final scores into (0, 1) around the run's own spread.

    A z-score scaled by 0.01 feeds tanh, so ordering survives while outliers
    stop dominating; a run with no spread maps everything to 0.5.
    """
    values = np.asarray(scores, dtype=float)
    mean = float(values.mean())
    std = float(values.std())
    if std == 0.0:
        return [0.5] * len(values)
    squashed = 0.5 * (np.tanh(0.01 * (values - mean) / std) + 1.0)
    return [float(v) for v in squashed]


@dataclass(slots=True)
class ShowcasePick:
    early: int | None
    well_trained: int | None


def select_showcase_episodes(
    scores: Sequence[float], switch_episode: int | None
) -> ShowcasePick:
    """Pick one representative episode from each learning phase.

    Early phase: the first pre-switch episode scoring exactly the (lower)
    median of that phase.  Well-trained phase: the first post-switch episode
    whose positive score reaches the phase's 75th percentile.  A phase with
    no qualifying episode yields None.
    """
    cut = len(scores) if switch_episode is None else switch_episode
    early = None
    pre = list(scores[:cut])
    if pre:
        median = sorted(pre)[(len(pre) - 1) // 2]
        early = next(ep for ep in range(cut) if scores[ep] == median)

    well = None
    positive = [s for s in scores[cut:] if s > 0.0]
    if positive:
        threshold = float(np.percentile(positive, 75))
        well = next(
            ep for ep in range(cut, len(scores)) if scores[ep] >= threshold
        )
    return ShowcasePick(early=early, well_trained=well)


# --- paired evaluation -----------------------------------------------------


@dataclass(slots=True)
class PairedOutcome:
    seed_index: int
    agent_net: float
    benchmark_net: float
    agent_bankrupt: bool
    benchmark_bankrupt: bool


@dataclass(slots=True)
class EvalReport:
    outcomes: list[PairedOutcome]
    win_rate: float


def run_benchmark_pair(
    cfg: RunConfig, agent: DQNAgent, seed_index: int
) -> tuple[EpisodeResult, EpisodeResult]:
    """Greedy agent and fixed-factor benchmark on the identical world."""
    seed = cfg.training.seed
    agent_env = GovernanceEnv(cfg, EpisodeRandomness(seed, EVAL_DOMAIN, seed_index))
    agent_result = run_episode(agent_env, greedy_policy(agent), episode_index=seed_index)
    bench_env = GovernanceEnv(cfg, EpisodeRandomness(seed, EVAL_DOMAIN, seed_index))
    bench_result = run_episode(bench_env, keep_all_policy, episode_index=seed_index)
    return agent_result, bench_result


def evaluate_agent(cfg: RunConfig, agent: DQNAgent, seed_count: int) -> EvalReport:
    outcomes = []
    for index in range(seed_count):
        agent_result, bench_result = run_benchmark_pair(cfg, agent, index)
        outcomes.append(
            PairedOutcome(
                seed_index=index,
                agent_net=agent_result.final_net,
                benchmark_net=bench_result.final_net,
                agent_bankrupt=agent_result.bankrupt,
                benchmark_bankrupt=bench_result.bankrupt,
            )
        )
    wins = sum(1 for o in outcomes if o.agent_net > o.benchmark_net)
    win_rate = wins / len(outcomes) if outcomes else 0.0
    return EvalReport(outcomes=outcomes, win_rate=win_rate)


# --- training --------------------------------------------------------------


@dataclass(slots=True)
class TrainResult:
    episodes: list[EpisodeResult]
    scores: list[float]
    normalized: list[float]
    bankruptcies: int
    switch_episode: int | None
    showcase: ShowcasePick
    checkpoint_paths: list[Path]
    final_checkpoint: Path


def train(cfg: RunConfig, out_dir: str | Path, *, keep_records: bool = False) -> TrainResult:
    """Full training run: per-step log, periodic checkpoints, summary JSON.

    A non-finite loss aborts the run after writing ``abort.json`` with the
    failure context; the partial CSV log is left behind for inspection.
    ``keep_records`` retains every step row in memory, which a long run does
    not want.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    agent = make_agent(cfg)
    config_hash = cfg.hash_bytes()
    episodes: list[EpisodeResult] = []
    checkpoint_paths: list[Path] = []
    switch_episode: int | None = None
    current = {"episode": 0, "step": 0}

    def on_transition(state: np.ndarray, action: int, result: StepResult) -> float | None:
        current["step"] = result.step
        agent.store(state, action, result.reward, result.features, result.done)
        loss = agent.learn()
        if loss is not None and not math.isfinite(loss):
            exc = FloatingPointError(
                f"non-finite loss {loss!r} at episode {current['episode']}"
                f" step {result.step}"
            )
            exc.context = {"loss": repr(float(loss))}
            raise exc
        return loss

    writer = RunLogWriter(out / "run.csv")
    # collector pauses otherwise land inside timed episodes; sweep between them
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for episode in range(cfg.training.episodes):
            current["episode"] = episode
            env = GovernanceEnv(
                cfg, EpisodeRandomness(cfg.training.seed, TRAIN_DOMAIN, episode)
            )
            was_switched = agent.epsilon.switched
            result = run_episode(
                env,
                lambda s: agent.select_action(s, explore=True),
                episode_index=episode,
                epsilon_fn=agent.epsilon.value,
                on_transition=on_transition,
            )
            if not was_switched and agent.epsilon.switched:
                switch_episode = episode
            for record in result.records:
                writer.write(record)
            if not keep_records:
                result.records = []
            episodes.append(result)
            if (episode + 1) % cfg.training.checkpoint_interval == 0:
                path = ckpt_dir / f"ep{episode + 1:04d}.bin"
                save_checkpoint(path, snapshot_agent(agent, episode + 1, config_hash))
                checkpoint_paths.append(path)
            gc.collect()
    except FloatingPointError as exc:
        dump = {
            "error": str(exc),
            "episode": current["episode"],
            "step": current["step"],
            "epsilon_ticks": agent.epsilon.ticks,
            "adam_t": agent.optimizer.t,
            "replay_size": len(agent.replay),
        }
        dump.update(getattr(exc, "context", {}))
        write_summary(out / "abort.json", dump)
        raise
    finally:
        writer.close()
        if gc_was_enabled:
            gc.enable()

    final_path = ckpt_dir / "final.bin"
    save_checkpoint(
        final_path, snapshot_agent(agent, cfg.training.episodes, config_hash)
    )

    scores = [r.final_net for r in episodes]
    normalized = normalize_scores(scores)
    showcase = select_showcase_episodes(scores, switch_episode)
    write_summary(
        out / "summary.json",
        {
            "episodes": len(episodes),
            "final_scores": scores,
            "normalized_scores": normalized,
            "bankruptcies": sum(1 for r in episodes if r.bankrupt),
            "switch_episode": switch_episode,
            "showcase": {"early": showcase.early, "well_trained": showcase.well_trained},
            "wall_clock_seconds": [r.wall_clock for r in episodes],
        },
    )
    return TrainResult(
        episodes=episodes,
        scores=scores,
        normalized=normalized,
        bankruptcies=sum(1 for r in episodes if r.bankrupt),
        switch_episode=switch_episode,
        showcase=showcase,
        checkpoint_paths=checkpoint_paths,
        final_checkpoint=final_path,
    )
