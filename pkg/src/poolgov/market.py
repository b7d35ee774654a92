"""Per-token price dynamics, seeded randomness streams, and attack scheduling.

Prices follow per-step geometric Brownian motion with piecewise-constant
parameters evaluated at the current step index.  WETH is the numeraire and
stays pinned at 1.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

TOKENS = ("WETH", "USDC", "TKN")

TRAIN_DOMAIN = 0
EVAL_DOMAIN = 1
AGENT_DOMAIN = 2

_DRIFT = {"WETH": 0.0, "USDC": 1e-4, "TKN": 1e-5}


def drift(token: str, t: int) -> float:
    return _DRIFT[token]


def volatility(token: str, t: int) -> float:
    if token == "TKN":
        return 0.05 + (t - 200) ** 2 / 5.0e5
    if token == "USDC":
        return 0.05
    return 0.0


def step_price(price: float, mu: float, sigma: float, z: float) -> float:
    return price * math.exp((mu - 0.5 * sigma * sigma) + sigma * z)


class EpisodeRandomness:
    """Independent generator streams for one episode.

    One stream per token plus one for attack scheduling, all derived from
    (master_seed, domain, index), so consuming any stream never perturbs the
    others and paired runs can replay identical worlds.
    """

    def __init__(self, master_seed: int, domain: int, index: int):
        self.seed_info = (int(master_seed), int(domain), int(index))
        root = np.random.SeedSequence(list(self.seed_info))
        children = root.spawn(len(TOKENS) + 1)
        self.price_rngs = {
            tok: np.random.default_rng(child)
            for tok, child in zip(TOKENS, children)
        }
        self.attack_rng = np.random.default_rng(children[-1])


def schedule_attacks(
    rng: np.random.Generator,
    horizon: int,
    count_min: int,
    count_max: int,
    enabled: bool = True,
) -> tuple[int, ...]:
    """Draw a uniform attack count, then that many distinct steps."""
    if not enabled:
        return ()
    count = int(rng.integers(count_min, count_max + 1))
    steps = rng.choice(horizon, size=count, replace=False)
    return tuple(sorted(int(s) for s in steps))


class PricePaths:
    """True (unmanipulated) price paths plus rolling volatility estimates."""

    def __init__(
        self,
        randomness: EpisodeRandomness,
        volatility_scale: float = 1.0,
        window: int = 30,
    ):
        self.randomness = randomness
        self.volatility_scale = volatility_scale
        self.window = window
        self.t = 0
        self.path: dict[str, float] = {tok: 1.0 for tok in TOKENS}
        self.returns: dict[str, deque[float]] = {
            tok: deque(maxlen=window) for tok in TOKENS
        }

    def advance(self) -> dict[str, float]:
        for tok in TOKENS:
            mu = drift(tok, self.t)
            sigma = volatility(tok, self.t) * self.volatility_scale
            z = float(self.randomness.price_rngs[tok].standard_normal())
            old = self.path[tok]
            new = step_price(old, mu, sigma, z)
            self.returns[tok].append(math.log(new / old))
            self.path[tok] = new
        self.t += 1
        return self.path

    def vol_estimate(self, token: str) -> float:
        """Population std of recent log returns; schedule value until two exist."""
        history = self.returns[token]
        if len(history) < 2:
            return volatility(token, self.t) * self.volatility_scale
        return float(np.std(np.fromiter(history, dtype=float)))
