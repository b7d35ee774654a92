"""Aggregate user behavior: routine flows, distress handling, and the exploit.

All depositors and borrowers are folded into one representative actor whose
per-step decisions compare pool rates and collateral terms against an outside
venue.  Confidence buffers scale the acted-on fractions and react to friction:
refused withdrawals, refused borrows, liquidations, and governance moves all
make the actor more cautious, while long quiet stretches relax it again.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .config import MarketConfig, UserConfig
from .protocol import ActionOutcome, LendingProtocol

ATTACK_ORDER = ("TKN", "WETH", "USDC")


@dataclass(slots=True)
class UserState:
    wallet: dict[str, float]
    supply_buffer: float
    borrow_buffer: float
    smooth_steps: int = 0


@dataclass(slots=True)
class StepEvents:
    """What happened during one user phase, for buffers and logging."""

    outcomes: list[ActionOutcome] = field(default_factory=list)
    supply_restricted: bool = False
    borrow_restricted: bool = False
    liquidated: bool = False


def attractiveness_supply(
    supply_rate: float,
    competing_rate: float,
    collateral_factor: float,
    competing_cf: float,
    cf_weight: float,
) -> float:
    """Positive when supplying here beats the outside option."""
    return (supply_rate - competing_rate) + cf_weight * (
        collateral_factor - competing_cf
    )


def attractiveness_borrow(
    borrow_rate: float,
    competing_rate: float,
    collateral_factor: float,
    competing_cf: float,
    cf_weight: float,
) -> float:
    """Positive when borrowing here is cheaper, adjusted for collateral terms."""
    return (competing_rate - borrow_rate) + cf_weight * (
        collateral_factor - competing_cf
    )


def undercollateralized_value(
    proto: LendingProtocol, prices: dict[str, float]
) -> float:
    """Value by which debt exceeds the collateral backing it; 0 when covered."""
    return max(0.0, proto.borrow_value(prices) - proto.supply_value(prices))


def ordinary_step(
    user: UserState,
    proto: LendingProtocol,
    prices: dict[str, float],
    market: MarketConfig,
    behavior: UserConfig,
    cf_changed: bool,
) -> StepEvents:
    """Run one routine user phase and update the confidence buffers."""
    events = StepEvents()
    if undercollateralized_value(proto, prices) > 0.0:
        # debt exceeds collateral: the position is abandoned outright, so
        # none of the ordinary flows run; the write-off follows this phase
        _update_buffers(user, behavior, events, cf_changed)
        return events
    competing_cf = market.competing_cf()
    # all attractiveness calls score the state observed at the start of the
    # step; scoring each leg on the state the previous leg just mutated lets
    # the legs chase their own side effects into a withdraw/repay loop that
    # drains a pool geometrically
    supply_scores = {
        tok: attractiveness_supply(
            proto.supply_rate(tok),
            market.competing_supply_rate,
            proto.pools[tok].collateral_factor,
            competing_cf[tok],
            behavior.cf_weight,
        )
        for tok in proto.tokens
    }
    borrow_scores = {
        tok: attractiveness_borrow(
            proto.borrow_rate(tok),
            market.competing_borrow_rate,
            proto.pools[tok].collateral_factor,
            competing_cf[tok],
            behavior.cf_weight,
        )
        for tok in proto.tokens
    }

    for tok in proto.tokens:
        pool = proto.pools[tok]
        if supply_scores[tok] > 0.0:
            amount = behavior.supply_fraction * (1.0 - user.supply_buffer)
            amount *= user.wallet[tok]
            if amount > 0.0:
                events.outcomes.append(proto.deposit(user.wallet, tok, amount))
        else:
            amount = behavior.withdraw_fraction * pool.supply_tokens
            if amount > 0.0:
                outcome = proto.withdraw(user.wallet, tok, amount, prices)
                events.outcomes.append(outcome)
                if outcome.restricted:
                    events.supply_restricted = True

    if proto.is_healthy(prices):
        for tok in proto.tokens:
            pool = proto.pools[tok]
            if borrow_scores[tok] > 0.0:
                room = proto.borrowing_capacity(prices) - proto.borrow_value(prices)
                amount = behavior.borrow_fraction * (1.0 - user.borrow_buffer)
                amount *= max(room, 0.0) / prices[tok]
                if amount > 0.0:
                    outcome = proto.borrow(user.wallet, tok, amount, prices)
                    events.outcomes.append(outcome)
                    if outcome.restricted:
                        events.borrow_restricted = True
            else:
                amount = behavior.repay_fraction * pool.borrow_tokens
                if amount > 0.0:
                    events.outcomes.append(proto.repay(user.wallet, tok, amount))
    else:
        _restore_health(user, proto, prices, events, behavior)

    _update_buffers(user, behavior, events, cf_changed)
    return events


def _restore_health(
    user: UserState,
    proto: LendingProtocol,
    prices: dict[str, float],
    events: StepEvents,
    behavior: UserConfig,
) -> None:
    """Repay out of the wallet first, then draw on liquidation liquidity.

    Repayment overshoots the bare health bound, targeting debt at a margin
    below capacity; repaying to the exact boundary would leave the next
    accrual re-tripping distress every step.  Largest debts go first, the
    way a liquidator would pick positions.
    """
    by_debt = sorted(
        proto.tokens,
        key=lambda tok: proto.pools[tok].borrow_tokens * prices[tok],
        reverse=True,
    )

    def excess() -> float:
        target = behavior.liquidation_margin * proto.borrowing_capacity(prices)
        return proto.borrow_value(prices) - target

    for tok in by_debt:
        amount = min(excess() / prices[tok], user.wallet[tok])
        if amount > 0.0:
            events.outcomes.append(proto.repay(user.wallet, tok, amount))
    if proto.is_healthy(prices):
        return
    events.liquidated = True
    for tok in by_debt:
        amount = min(excess(), proto.pools[tok].borrow_tokens * prices[tok])
        amount /= prices[tok]
        if amount > 0.0:
            events.outcomes.append(
                proto.inject_liquidation_repay(user.wallet, tok, amount)
            )


def _update_buffers(
    user: UserState, behavior: UserConfig, events: StepEvents, cf_changed: bool
) -> None:
    bump_supply = cf_changed or events.supply_restricted
    bump_borrow = cf_changed or events.borrow_restricted or events.liquidated
    if bump_supply:
        user.supply_buffer = min(
            user.supply_buffer + behavior.buffer_up, behavior.buffer_max
        )
    if bump_borrow:
        user.borrow_buffer = min(
            user.borrow_buffer + behavior.buffer_up, behavior.buffer_max
        )
    if bump_supply or bump_borrow:
        user.smooth_steps = 0
        return
    user.smooth_steps += 1
    if user.smooth_steps > behavior.smooth_threshold:
        user.supply_buffer = max(
            user.supply_buffer - behavior.buffer_down, behavior.buffer_min
        )
        user.borrow_buffer = max(
            user.borrow_buffer - behavior.buffer_down, behavior.buffer_min
        )
        user.smooth_steps = 0


def execute_attack(
    user: UserState,
    proto: LendingProtocol,
    prices: dict[str, float],
    market: MarketConfig,
    initial_wallet: float,
) -> list[ActionOutcome]:
    """Run the scripted oracle-manipulation sequence, mutating ``prices``.

    The TKN quote is inflated in place and stays inflated for the rest of the
    step; the caller restores it when the next market update writes the true
    path value back.
    """
    outcomes: list[ActionOutcome] = []
    prices["TKN"] *= market.attack_multiplier

    amount = user.wallet["TKN"]
    if amount > 0.0:
        outcomes.append(proto.deposit(user.wallet, "TKN", amount))
    for tok in ATTACK_ORDER:
        pool = proto.pools[tok]
        amount = min(pool.borrow_tokens, pool.supply_tokens)
        if amount > 0.0:
            outcomes.append(proto.offset_debt(tok, amount))
    for tok in ("WETH", "USDC"):
        amount = proto.pools[tok].available_funds
        if amount > 0.0:
            outcomes.append(proto.borrow(user.wallet, tok, amount, prices))
    target = initial_wallet - user.wallet["TKN"]
    if target > 0.0:
        outcomes.append(proto.withdraw(user.wallet, "TKN", target, prices))
    return outcomes


def check_flashloan_feasibility(
    reserve_a: float,
    reserve_b: float,
    small_out: float,
    large_out: float,
    added_reserve: float,
) -> bool:
    """Compare the spot quote after two ways of extracting token B from an AMM.

    Returns True when taking ``large_out`` directly leaves a lower quote than
    taking only ``small_out`` from a pool padded with ``added_reserve`` of
    token A, i.e. when borrowed padding fails to hide the bigger extraction.
    """
    if reserve_a <= 0.0 or reserve_b <= 0.0:
        raise ValueError("reserves must be positive")
    if small_out <= 0.0 or large_out <= small_out:
        raise ValueError("need large_out > small_out > 0")
    if added_reserve <= 0.0:
        raise ValueError("added_reserve must be positive")
    direct = (reserve_b - large_out) / reserve_a
    padded = (reserve_b - small_out) / (reserve_a + added_reserve)
    return direct < padded
