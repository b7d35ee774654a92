"""Seeded lending-pool simulator with a learned collateral-factor governor."""

from .config import ConfigError, RunConfig, apply_overrides, load_config
from .env import KEEP_ALL_ACTION, TOKENS, GovernanceEnv
from .harness import (
    evaluate_agent,
    keep_all_policy,
    make_agent,
    run_benchmark_pair,
    run_episode,
    train,
)
from .protocol import LendingProtocol

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GovernanceEnv",
    "KEEP_ALL_ACTION",
    "LendingProtocol",
    "RunConfig",
    "TOKENS",
    "apply_overrides",
    "evaluate_agent",
    "keep_all_policy",
    "load_config",
    "make_agent",
    "run_benchmark_pair",
    "run_episode",
    "train",
    "__version__",
]
