"""Run configuration: dataclasses per module, INI-style loading, stable hashing."""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any


class ConfigError(Exception):
    """Unknown key, bad value, or unreadable config file."""


@dataclass
class ProtocolConfig:
    rate_scale: float = 25.0          # b in borrow_rate = 1 / (b * (1 - U))
    reserve_spread: float = 0.3       # share of borrow interest the pool keeps
    step_years: float = 1.0 / 365.0   # accrual horizon of one simulation step
    cf_step: float = 0.05             # collateral factor move per governance action
    cf_max: float = 0.99
    utilization_cap: float = 0.99     # rate formulas clamp U here
    initial_collateral_factor: float = 0.8
    initial_deposit: float = 15_000.0   # per-pool user deposit at episode start
    initial_wallet: float = 20_000.0    # per-token starting wallet balance


@dataclass
class MarketConfig:
    competing_supply_rate: float = 0.05
    competing_borrow_rate: float = 0.15
    competing_cf_weth: float = 0.7
    competing_cf_usdc: float = 0.65
    competing_cf_tkn: float = 0.0
    vol_window: int = 30              # log returns kept for the volatility estimate
    volatility_scale: float = 1.0     # 0 turns every price path deterministic
    attack_multiplier: float = 200.0  # oracle manipulation factor on TKN

    def competing_cf(self) -> dict[str, float]:
        return {
            "WETH": self.competing_cf_weth,
            "USDC": self.competing_cf_usdc,
            "TKN": self.competing_cf_tkn,
        }


@dataclass
class UserConfig:
    cf_weight: float = 0.1            # weight of the collateral factor differential
    supply_fraction: float = 0.25     # wallet share deposited per attractive step
    withdraw_fraction: float = 0.25   # holdings share withdrawn per unattractive step
    borrow_fraction: float = 0.5      # remaining-capacity share borrowed per step
    repay_fraction: float = 0.25      # debt share repaid per unattractive step
    buffer_up: float = 0.1
    buffer_down: float = 0.05
    buffer_min: float = 0.1
    buffer_max: float = 0.9
    initial_buffer: float = 0.5
    smooth_threshold: int = 20        # smooth steps before buffers relax
    liquidation_margin: float = 0.95  # debt target as a capacity share after distress


@dataclass
class AgentConfig:
    hidden_sizes: tuple[int, ...] = (256, 256)
    learning_rate: float = 0.001
    gamma: float = 0.95
    batch_size: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.002
    epsilon_decay_primary: float = 5e-6
    epsilon_decay_target: float = 1.25e-6
    target_switch_epsilon: float = 0.3   # target net turns on below this epsilon
    target_sync_interval: int = 450      # action steps between target syncs
    replay_capacity: int = 100_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_epsilon: float = 1e-3            # priority floor added to |td error|
    reward_scale: float = 1000.0         # divisor applied to stored rewards


@dataclass
class TrainingConfig:
    episodes: int = 850
    steps_per_episode: int = 450
    attacks_enabled: bool = True
    attack_count_min: int = 1
    attack_count_max: int = 3
    seed: int = 17
    checkpoint_interval: int = 50     # episodes between checkpoints
    eval_seeds: int = 20              # held-out paired evaluation episodes


@dataclass
class RunConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    market: MarketConfig = field(default_factory=MarketConfig)
    user: UserConfig = field(default_factory=UserConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def canonical_lines(self) -> list[str]:
        lines = []
        for section, sub in sorted(self.sections().items()):
            for f in fields(sub):
                lines.append(f"{section}.{f.name}={getattr(sub, f.name)!r}")
        return sorted(lines)

    def hash_bytes(self) -> bytes:
        digest = hashlib.sha256("\n".join(self.canonical_lines()).encode())
        return digest.digest()

    def hash_hex(self) -> str:
        return self.hash_bytes().hex()

    def sections(self) -> dict[str, Any]:
        return {
            "protocol": self.protocol,
            "market": self.market,
            "user": self.user,
            "agent": self.agent,
            "training": self.training,
        }


def _coerce(raw: str, target: Any, key: str) -> Any:
    raw = raw.strip()
    try:
        if target is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
        if target is str:
            return raw
        # tuple[int, ...] fields, e.g. hidden_sizes = 256,256
        origin = getattr(target, "__origin__", None)
        if origin is tuple or target is tuple:
            parts = [p for p in raw.replace(",", " ").split() if p]
            return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    raise ConfigError(f"unsupported config field type for {key!r}")


def load_config(path: str | Path | None) -> RunConfig:
    """Parse an INI file into a RunConfig; unknown sections or keys are errors."""
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    sections = cfg.sections()
    for section in parser.sections():
        if section not in sections:
            raise ConfigError(f"unknown config section [{section}]")
        sub = sections[section]
        known = {f.name: f for f in fields(sub)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            ftype = known[key].type
            if isinstance(ftype, str):
                # from __future__ annotations stores types as strings
                ftype = {"float": float, "int": int, "bool": bool, "str": str}.get(
                    ftype, tuple
                )
            setattr(sub, key, _coerce(raw, ftype, f"{section}.{key}"))
    return cfg


def apply_overrides(
    cfg: RunConfig,
    seed: int | None = None,
    attacks: bool | None = None,
    episodes: int | None = None,
    eval_seeds: int | None = None,
) -> RunConfig:
    tr = cfg.training
    if seed is not None:
        tr = replace(tr, seed=seed)
    if attacks is not None:
        tr = replace(tr, attacks_enabled=attacks)
    if episodes is not None:
        tr = replace(tr, episodes=episodes)
    if eval_seeds is not None:
        tr = replace(tr, eval_seeds=eval_seeds)
    return replace(cfg, training=tr)
