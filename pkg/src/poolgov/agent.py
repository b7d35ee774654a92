"""Q-learning governor: epsilon policy, TD targets, replay, target network."""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .config import AgentConfig
from .network import Adam, QNetwork
from .replay import PrioritizedReplay

Transition = tuple[np.ndarray, int, float, np.ndarray, bool]


def decode_action(index: int, tokens: Sequence[str]) -> dict[str, int]:
    """Map a joint-action index to a per-token direction, base 3, MSB first.

    Digit values 0/1/2 mean lower/keep/raise; the all-keep action for three
    tokens is index 13.
    """
    count = 3 ** len(tokens)
    if not 0 <= index < count:
        raise ValueError(f"action index {index} outside [0, {count})")
    directions = {}
    for pos, tok in enumerate(reversed(tokens)):
        directions[tok] = index // (3**pos) % 3 - 1
    return {tok: directions[tok] for tok in tokens}


class EpsilonSchedule:
    """Two-phase linear decay with a latched switch below a threshold.

    The first phase decays fast; the moment the value dips under
    ``switch_threshold`` the schedule latches (the caller turns its target
    network on) and continues from that value at the slower rate.  Values
    never drop below ``end``.  Closed-form in the tick count, so replaying
    the same number of ticks always lands on the identical float.
    """

    def __init__(
        self,
        start: float,
        end: float,
        decay_primary: float,
        decay_target: float,
        switch_threshold: float,
    ):
        self.start = start
        self.end = end
        self.decay_primary = decay_primary
        self.decay_target = decay_target
        self.switch_threshold = switch_threshold
        self.ticks = 0
        self.switched = False
        self.switch_tick = 0
        self.switch_value = start

    @property
    def target_enabled(self) -> bool:
        return self.switched

    def value(self) -> float:
        if not self.switched:
            return max(self.end, self.start - self.decay_primary * self.ticks)
        slow = self.switch_value - self.decay_target * (self.ticks - self.switch_tick)
        return max(self.end, slow)

    def tick(self) -> None:
        self.ticks += 1
        if not self.switched:
            value = self.value()
            if value < self.switch_threshold:
                self.switched = True
                self.switch_tick = self.ticks
                self.switch_value = value


class DQNAgent:
    """Online/target network pair with prioritized replay.

    One generator drives weight init, exploration, and replay sampling, so
    the whole learning trajectory is a function of that stream plus the
    environment transitions fed in.
    """

    def __init__(
        self,
        cfg: AgentConfig,
        feature_dim: int,
        action_count: int,
        rng: np.random.Generator,
        total_anneal_steps: int,
    ):
        self.cfg = cfg
        self.action_count = action_count
        self.rng = rng
        self.total_anneal_steps = max(1, total_anneal_steps)
        sizes = (feature_dim, *cfg.hidden_sizes, action_count)
        self.online = QNetwork(sizes, rng)
        self.target = QNetwork(sizes, rng)
        self.target.copy_from(self.online)
        self.optimizer = Adam(self.online.parameters(), cfg.learning_rate)
        self.replay = PrioritizedReplay(cfg.replay_capacity, cfg.per_alpha, rng)
        # columnar transition store; row slot == replay ring position == tree
        # leaf id, so sampled leaf indices gather whole batches in one shot
        cap = cfg.replay_capacity
        self._states = np.empty((cap, feature_dim))
        self._actions = np.empty(cap, dtype=np.int64)
        self._rewards = np.empty(cap)
        self._next_states = np.empty((cap, feature_dim))
        self._dones = np.empty(cap, dtype=bool)
        self.epsilon = EpsilonSchedule(
            cfg.epsilon_start,
            cfg.epsilon_end,
            cfg.epsilon_decay_primary,
            cfg.epsilon_decay_target,
            cfg.target_switch_epsilon,
        )

    def beta(self) -> float:
        """Importance-sampling exponent annealed linearly over the run."""
        span = self.cfg.per_beta_end - self.cfg.per_beta_start
        progress = min(1.0, self.epsilon.ticks / self.total_anneal_steps)
        return self.cfg.per_beta_start + span * progress

    def select_action(self, features: np.ndarray, explore: bool) -> int:
        """Epsilon-greedy pick; exploring also advances the schedule."""
        if explore and self.rng.random() < self.epsilon.value():
            action = int(self.rng.integers(self.action_count))
        else:
            action = int(np.argmax(self.online.forward(features)))
        if explore:
            was_enabled = self.epsilon.target_enabled
            self.epsilon.tick()
            if self.epsilon.target_enabled and (
                not was_enabled
                or (self.epsilon.ticks - self.epsilon.switch_tick)
                % self.cfg.target_sync_interval
                == 0
            ):
                self.target.copy_from(self.online)
        return action

    def store(
        self,
        state: np.ndarray,
        action: int,
        reward: float,
        next_state: np.ndarray,
        done: bool,
    ) -> None:
        scaled = reward / self.cfg.reward_scale
        slot = self.replay.position
        self._states[slot] = state
        self._actions[slot] = int(action)
        self._rewards[slot] = scaled
        self._next_states[slot] = next_state
        self._dones[slot] = done
        self.replay.add(slot)

    def td_targets(
        self, rewards: np.ndarray, next_states: np.ndarray, dones: np.ndarray
    ) -> np.ndarray:
        """Bellman targets, always bootstrapped from the target network.

        Before the epsilon switch the target net is never synced, so it stays
        frozen at its initial copy; bootstrap values are then small and fixed,
        which keeps early Q estimates anchored instead of chasing themselves.
        """
        best_next = np.max(self.target.forward_batch(next_states), axis=1)
        return np.where(dones, rewards, rewards + self.cfg.gamma * best_next)

    def learn(self) -> float | None:
        """One prioritized gradient step; None until a batch has accumulated."""
        if len(self.replay) < self.cfg.batch_size:
            return None
        _, weights, indices = self.replay.sample(self.cfg.batch_size, self.beta())
        states = self._states[indices]
        actions = self._actions[indices]
        rewards = self._rewards[indices]
        next_states = self._next_states[indices]
        dones = self._dones[indices]

        targets = self.td_targets(rewards, next_states, dones)
        loss, td_errors, grads = self.online.gradients(
            states, actions, targets, weights
        )
        flat: list[np.ndarray] = []
        for dw, db in grads:
            flat.append(dw)
            flat.append(db)
        self.optimizer.step(self.online.parameters(), flat)
        self.replay.update_priorities(
            indices, np.abs(td_errors) + self.cfg.per_epsilon
        )
        return loss
