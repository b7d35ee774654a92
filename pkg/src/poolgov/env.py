"""One-episode environment: phase ordering, reward, termination, features.

Each step runs governance, then either the scripted attack or the ordinary
user phase, then default recognition, interest accrual, and the market
update.  The reward is the change in total net position valued at the
end-of-step prices, so per-step rewards telescope to the final net
position over an episode.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import decode_action
from .config import RunConfig
from .market import TOKENS, EpisodeRandomness, PricePaths, schedule_attacks
from .protocol import LendingProtocol
from .user import StepEvents, UserState, execute_attack, ordinary_step

KEEP_ALL_ACTION = 13  # base-3 (1,1,1): keep every collateral factor

FEATURES_PER_POOL = 10


def encode_state(
    proto: LendingProtocol, paths: PricePaths, deposit_scale: float
) -> np.ndarray:
    """Fixed-order feature vector, ten entries per pool."""
    out = np.empty(FEATURES_PER_POOL * len(proto.tokens))
    pos = 0
    for tok in proto.tokens:
        pool = proto.pools[tok]
        out[pos : pos + FEATURES_PER_POOL] = (
            np.log(paths.path[tok]),
            paths.vol_estimate(tok),
            pool.collateral_factor,
            proto.utilization(tok),
            proto.supply_rate(tok),
            proto.borrow_rate(tok),
            pool.available_funds / deposit_scale,
            pool.supply_tokens / deposit_scale,
            pool.borrow_tokens / deposit_scale,
            pool.bad_debt / deposit_scale,
        )
        pos += FEATURES_PER_POOL
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite value in encoded state")
    return out


@dataclass(slots=True)
class StepResult:
    step: int
    action: int
    reward: float
    done: bool
    bankrupt: bool
    attack: bool
    cf_changed: bool
    defaulted: bool
    restricted: bool
    liquidated: bool
    user_prices: dict[str, float]
    features: np.ndarray
    net_total: float


class GovernanceEnv:
    """Three-pool protocol plus its user, driven one governance step at a time."""

    def __init__(self, cfg: RunConfig, randomness: EpisodeRandomness):
        self.cfg = cfg
        self.protocol = LendingProtocol(cfg.protocol, TOKENS)
        wallet = {tok: float(cfg.protocol.initial_wallet) for tok in TOKENS}
        self.user = UserState(
            wallet=wallet,
            supply_buffer=cfg.user.initial_buffer,
            borrow_buffer=cfg.user.initial_buffer,
        )
        for tok in TOKENS:
            self.protocol.deposit(wallet, tok, cfg.protocol.initial_deposit)
        self.paths = PricePaths(
            randomness,
            volatility_scale=cfg.market.volatility_scale,
            window=cfg.market.vol_window,
        )
        self.attack_steps = schedule_attacks(
            randomness.attack_rng,
            cfg.training.steps_per_episode,
            cfg.training.attack_count_min,
            cfg.training.attack_count_max,
            enabled=cfg.training.attacks_enabled,
        )
        self.step_index = 0
        self.prev_net = self.protocol.total_net_position(dict(self.paths.path))
        self.done = False

    def features(self) -> np.ndarray:
        return encode_state(self.protocol, self.paths, self.cfg.protocol.initial_deposit)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("episode already finished")

        directions = decode_action(action, TOKENS)
        cf_changed = False
        for tok in TOKENS:
            before = self.protocol.pools[tok].collateral_factor
            after = self.protocol.set_collateral_factor(tok, directions[tok])
            cf_changed = cf_changed or after != before

        user_prices = dict(self.paths.path)
        attack = self.step_index in self.attack_steps
        if attack:
            # the exploit takes over the whole user phase; its outcomes never
            # feed the confidence buffers
            outcomes = execute_attack(
                self.user,
                self.protocol,
                user_prices,
                self.cfg.market,
                self.cfg.protocol.initial_wallet,
            )
            events = StepEvents(outcomes=outcomes)
        else:
            events = ordinary_step(
                self.user,
                self.protocol,
                user_prices,
                self.cfg.market,
                self.cfg.user,
                cf_changed,
            )

        default_value = self.protocol.recognize_default(user_prices)
        self.protocol.accrue_interest()
        self.paths.advance()

        end_prices = dict(self.paths.path)
        net = self.protocol.total_net_position(end_prices)
        reward = net - self.prev_net
        self.prev_net = net
        self.step_index += 1
        bankrupt = net < 0.0
        self.done = bankrupt or self.step_index >= self.cfg.training.steps_per_episode
        return StepResult(
            step=self.step_index - 1,
            action=action,
            reward=reward,
            done=self.done,
            bankrupt=bankrupt,
            attack=attack,
            cf_changed=cf_changed,
            defaulted=default_value > 0.0,
            restricted=events.supply_restricted or events.borrow_restricted,
            liquidated=events.liquidated,
            user_prices=user_prices,
            features=self.features(),
            net_total=net,
        )
