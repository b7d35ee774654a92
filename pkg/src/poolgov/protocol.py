"""Pool accounting for a multi-pool lending protocol with one aggregate user.

Amounts are token units unless a name says value; values are quoted in the
numeraire token at the prices passed in.  The aggregate user owns every supply
and borrow token, so pool totals double as the user's holdings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .config import ProtocolConfig

LOWER, KEEP, RAISE = -1, 0, 1


@dataclass(slots=True)
class PoolState:
    asset: str
    available_funds: float = 0.0
    supply_tokens: float = 0.0
    borrow_tokens: float = 0.0
    bad_debt: float = 0.0
    collateral_factor: float = 0.0


@dataclass(slots=True)
class ActionOutcome:
    requested: float
    executed: float
    restricted: bool = False
    liquidation_triggered: bool = False


def _check_amount(amount: float) -> float:
    if not math.isfinite(amount) or amount < 0.0:
        raise ValueError(f"amount must be finite and non-negative, got {amount!r}")
    return float(amount)


class LendingProtocol:
    """Mutable pool set plus the lending operations of the single-user world.

    Operations cap instead of raising: short liquidity, exhausted borrowing
    capacity, and the loan-health rule shrink the executed amount and mark the
    outcome restricted.  Only malformed arguments raise.
    """

    def __init__(
        self,
        params: ProtocolConfig,
        tokens: tuple[str, ...],
        collateral_factors: dict[str, float] | None = None,
    ):
        self.params = params
        self.tokens = tuple(tokens)
        self.pools: dict[str, PoolState] = {}
        for tok in self.tokens:
            cf = params.initial_collateral_factor
            if collateral_factors is not None:
                cf = collateral_factors[tok]
            self.pools[tok] = PoolState(tok, collateral_factor=cf)
        # cumulative external liquidation repayments, per token
        self.injected_funds: dict[str, float] = {tok: 0.0 for tok in self.tokens}

    # ---- rates and valuations ----

    def utilization(self, asset: str) -> float:
        pool = self.pools[asset]
        if pool.supply_tokens <= 0.0:
            return 0.0
        return pool.borrow_tokens / pool.supply_tokens

    def borrow_rate(self, asset: str) -> float:
        u = min(self.utilization(asset), self.params.utilization_cap)
        return 1.0 / (self.params.rate_scale * (1.0 - u))

    def supply_rate(self, asset: str) -> float:
        u = self.utilization(asset)
        return self.borrow_rate(asset) * u * (1.0 - self.params.reserve_spread)

    def net_position(self, asset: str) -> float:
        pool = self.pools[asset]
        return (
            pool.available_funds
            + pool.borrow_tokens
            - pool.supply_tokens
            - pool.bad_debt
        )

    def total_net_position(self, prices: dict[str, float]) -> float:
        return sum(self.net_position(tok) * prices[tok] for tok in self.tokens)

    def supply_value(self, prices: dict[str, float]) -> float:
        return sum(p.supply_tokens * prices[p.asset] for p in self.pools.values())

    def borrow_value(self, prices: dict[str, float]) -> float:
        return sum(p.borrow_tokens * prices[p.asset] for p in self.pools.values())

    def borrowing_capacity(self, prices: dict[str, float]) -> float:
        return sum(
            p.supply_tokens * prices[p.asset] * p.collateral_factor
            for p in self.pools.values()
        )

    def is_healthy(self, prices: dict[str, float]) -> bool:
        return self.borrow_value(prices) <= self.borrowing_capacity(prices)

    # ---- user operations ----

    def deposit(self, wallet: dict[str, float], asset: str, amount: float) -> ActionOutcome:
        amount = _check_amount(amount)
        pool = self.pools[asset]
        executed = min(amount, wallet[asset])
        wallet[asset] -= executed
        pool.available_funds += executed
        pool.supply_tokens += executed
        return ActionOutcome(amount, executed, restricted=executed < amount)

    def withdraw(
        self,
        wallet: dict[str, float],
        asset: str,
        amount: float,
        prices: dict[str, float],
    ) -> ActionOutcome:
        amount = _check_amount(amount)
        pool = self.pools[asset]
        executed = min(amount, pool.available_funds, pool.supply_tokens)
        cf = pool.collateral_factor
        price = prices[asset]
        if cf > 0.0 and price > 0.0:
            # withdrawing collateral must keep the loan inside capacity
            room = self.borrowing_capacity(prices) - self.borrow_value(prices)
            executed = min(executed, max(0.0, room) / (price * cf))
        wallet[asset] += executed
        pool.available_funds -= executed
        pool.supply_tokens -= executed
        return ActionOutcome(amount, executed, restricted=executed < amount)

    def borrow(
        self,
        wallet: dict[str, float],
        asset: str,
        amount: float,
        prices: dict[str, float],
    ) -> ActionOutcome:
        amount = _check_amount(amount)
        pool = self.pools[asset]
        room = self.borrowing_capacity(prices) - self.borrow_value(prices)
        executed = min(
            amount, pool.available_funds, max(0.0, room) / prices[asset]
        )
        executed = max(0.0, executed)
        wallet[asset] += executed
        pool.available_funds -= executed
        pool.borrow_tokens += executed
        return ActionOutcome(amount, executed, restricted=executed < amount)

    def repay(self, wallet: dict[str, float], asset: str, amount: float) -> ActionOutcome:
        amount = _check_amount(amount)
        pool = self.pools[asset]
        executed = min(amount, pool.borrow_tokens, wallet[asset])
        wallet[asset] -= executed
        pool.available_funds += executed
        pool.borrow_tokens -= executed
        return ActionOutcome(amount, executed, restricted=executed < amount)

    def offset_debt(self, asset: str, amount: float) -> ActionOutcome:
        """Burn supply tokens to cancel borrow tokens one for one in the pool."""
        amount = _check_amount(amount)
        pool = self.pools[asset]
        executed = min(amount, pool.borrow_tokens, pool.supply_tokens)
        pool.supply_tokens -= executed
        pool.borrow_tokens -= executed
        return ActionOutcome(amount, executed, restricted=executed < amount)

    def inject_liquidation_repay(
        self, wallet: dict[str, float], asset: str, shortfall: float
    ) -> ActionOutcome:
        """External funds pass through the wallet and repay debt immediately."""
        shortfall = _check_amount(shortfall)
        pool = self.pools[asset]
        executed = min(shortfall, pool.borrow_tokens)
        pool.available_funds += executed
        pool.borrow_tokens -= executed
        self.injected_funds[asset] += executed
        return ActionOutcome(
            shortfall,
            executed,
            restricted=executed < shortfall,
            liquidation_triggered=True,
        )

    def recognize_default(self, prices: dict[str, float]) -> float:
        """Write off the position once debt value exceeds collateral value.

        All borrow tokens and the supply-token collateral backing them are
        wiped; the uncovered value is booked as bad debt pro rata to each
        pool's borrow value.  Returns the newly recognized bad-debt value.
        """
        borrow_val = self.borrow_value(prices)
        supply_val = self.supply_value(prices)
        if borrow_val <= supply_val:
            return 0.0
        shortfall = borrow_val - supply_val
        for pool in self.pools.values():
            share = pool.borrow_tokens * prices[pool.asset] / borrow_val
            if share > 0.0:
                pool.bad_debt += shortfall * share / prices[pool.asset]
            pool.borrow_tokens = 0.0
            pool.supply_tokens = 0.0
        return shortfall

    # ---- protocol bookkeeping ----

    def accrue_interest(self) -> None:
        dt = self.params.step_years
        for tok in self.tokens:
            pool = self.pools[tok]
            rs = self.supply_rate(tok)
            rb = self.borrow_rate(tok)
            pool.supply_tokens *= 1.0 + rs * dt
            pool.borrow_tokens *= 1.0 + rb * dt

    def set_collateral_factor(self, asset: str, direction: int) -> float:
        if direction not in (LOWER, KEEP, RAISE):
            raise ValueError(f"direction must be -1, 0 or 1, got {direction!r}")
        pool = self.pools[asset]
        if direction == KEEP:
            return pool.collateral_factor
        moved = pool.collateral_factor + direction * self.params.cf_step
        pool.collateral_factor = min(max(moved, 0.0), self.params.cf_max)
        return pool.collateral_factor
