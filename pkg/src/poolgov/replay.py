"""Prioritized replay memory over an array-backed sum tree."""
from __future__ import annotations

from typing import Any

import numpy as np


class SumTree:
    """Binary sum tree in a flat array; leaf ``i`` lives at ``capacity-1+i``.

    Works for any capacity: every node index below ``capacity-1`` is
    internal, everything at or above it is a leaf, so descents just run
    until each cursor reaches the leaf band.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1)

    def total(self) -> float:
        return float(self.nodes[0])

    def leaf_values(self, leaves: np.ndarray) -> np.ndarray:
        return self.nodes[leaves + self.capacity - 1]

    def update(self, leaf: int, value: float) -> None:
        idx = leaf + self.capacity - 1
        delta = value - self.nodes[idx]
        self.nodes[idx] = value
        while idx > 0:
            idx = (idx - 1) // 2
            self.nodes[idx] += delta

    def update_leaves(self, leaves: np.ndarray, values: np.ndarray) -> None:
        """Batch form of ``update`` with identical arithmetic.

        Deltas are taken sequentially at the leaf band so repeated leaves see
        each other's writes, then propagated level by level with ``np.add.at``,
        which accumulates in input order.  The leaf band spans two depths when
        capacity is not a power of two, so the deeper cursors first climb one
        level alone; the nodes they touch there are below every shallower
        cursor's ancestor set, hence order-safe.  From then on all cursors
        move in lockstep and every tree node receives the same additions in
        the same order as one ``update`` call per leaf.
        """
        idx = np.asarray(leaves, dtype=np.int64) + self.capacity - 1
        deltas = np.empty(len(idx))
        for k, (i, value) in enumerate(zip(idx, values)):
            deltas[k] = value - self.nodes[i]
            self.nodes[i] = value
        depth = np.frexp((idx + 1).astype(float))[1] - 1
        deep = depth == depth.max()
        if not deep.all():
            idx = np.where(deep, (idx - 1) // 2, idx)
            np.add.at(self.nodes, idx[deep], deltas[deep])
        while idx.size:
            live = idx > 0
            if not live.all():
                idx = idx[live]
                deltas = deltas[live]
                if not idx.size:
                    break
            idx = (idx - 1) // 2
            np.add.at(self.nodes, idx, deltas)

    def find(self, prefixes: np.ndarray) -> np.ndarray:
        """Leaf index whose cumulative-sum interval contains each prefix."""
        idx = np.zeros(len(prefixes), dtype=np.int64)
        remaining = np.asarray(prefixes, dtype=float).copy()
        first_leaf = self.capacity - 1
        internal = idx < first_leaf
        while np.any(internal):
            left = 2 * idx + 1
            left_sums = self.nodes[np.minimum(left, len(self.nodes) - 1)]
            go_right = internal & (remaining >= left_sums)
            go_left = internal & ~go_right
            remaining[go_right] -= left_sums[go_right]
            idx[go_right] = left[go_right] + 1
            idx[go_left] = left[go_left]
            internal = idx < first_leaf
        return idx - first_leaf


class PrioritizedReplay:
    """Ring buffer sampled proportionally to ``priority ** alpha``.

    New entries inherit the largest raw priority seen so far (1 before any
    feedback) so they are visited at least once.  Importance weights are
    ``(size * P(i)) ** -beta`` scaled by the batch maximum.
    """

    def __init__(self, capacity: int, alpha: float, rng: np.random.Generator):
        self.capacity = capacity
        self.alpha = alpha
        self.rng = rng
        self.tree = SumTree(capacity)
        self.data: list[Any] = []
        self.position = 0
        self.max_priority = 1.0

    def __len__(self) -> int:
        return len(self.data)

    def add(self, item: Any) -> None:
        if len(self.data) < self.capacity:
            self.data.append(item)
        else:
            self.data[self.position] = item
        self.tree.update(self.position, self.max_priority**self.alpha)
        self.position = (self.position + 1) % self.capacity

    def update_priorities(self, indices: np.ndarray, priorities: np.ndarray) -> None:
        values = np.asarray(priorities, dtype=float) ** self.alpha
        self.tree.update_leaves(np.asarray(indices), values)
        self.max_priority = max(self.max_priority, float(np.max(priorities)))

    def sample(
        self, batch_size: int, beta: float
    ) -> tuple[list[Any], np.ndarray, np.ndarray]:
        prefixes = self.rng.random(batch_size) * self.tree.total()
        indices = np.minimum(self.tree.find(prefixes), len(self.data) - 1)
        probs = self.tree.leaf_values(indices) / self.tree.total()
        weights = (len(self.data) * probs) ** -beta
        weights /= weights.max()
        items = [self.data[i] for i in indices]
        return items, weights, indices
