"""Binary agent checkpoints with an integrity trailer.

Layout, all integers little-endian:

    magic (8)  version u32  config-hash (32)
    episode u64  adam-t u64
    epsilon ticks u64  switched u8  switch-tick u64  switch-value f64
    layer-count u32  layer sizes u32 each
    four parameter blocks (online, target, adam-m, adam-v), each the
    network's weight and bias arrays interleaved, C-order f64
    sha256 of everything above (32)

Replay memory is deliberately not stored; a resumed run warms a fresh
buffer, while evaluation only needs the online parameters.
"""
from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .agent import DQNAgent

MAGIC = b"POOLGOVQ"
CHECKPOINT_VERSION = 1
_HASH_SIZE = 32


class CheckpointError(Exception):
    pass


@dataclass(slots=True)
class AgentSnapshot:
    config_hash: bytes
    episode: int
    adam_t: int
    epsilon_ticks: int
    switched: bool
    switch_tick: int
    switch_value: float
    layer_sizes: tuple[int, ...]
    online: list[np.ndarray]
    target: list[np.ndarray]
    adam_m: list[np.ndarray]
    adam_v: list[np.ndarray]


def _param_shapes(layer_sizes: tuple[int, ...]) -> list[tuple[int, ...]]:
    shapes: list[tuple[int, ...]] = []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        shapes.append((fan_in, fan_out))
        shapes.append((fan_out,))
    return shapes


def snapshot_agent(agent: "DQNAgent", episode: int, config_hash: bytes) -> AgentSnapshot:
    def copies(arrays: list[np.ndarray]) -> list[np.ndarray]:
        return [np.array(a, dtype=np.float64) for a in arrays]

    sched = agent.epsilon
    return AgentSnapshot(
        config_hash=bytes(config_hash),
        episode=episode,
        adam_t=agent.optimizer.t,
        epsilon_ticks=sched.ticks,
        switched=sched.switched,
        switch_tick=sched.switch_tick,
        switch_value=sched.switch_value,
        layer_sizes=agent.online.layer_sizes,
        online=copies(agent.online.parameters()),
        target=copies(agent.target.parameters()),
        adam_m=copies(agent.optimizer.m),
        adam_v=copies(agent.optimizer.v),
    )


def restore_agent(agent: "DQNAgent", snap: AgentSnapshot) -> None:
    if snap.layer_sizes != agent.online.layer_sizes:
        raise CheckpointError(
            f"layer sizes {snap.layer_sizes} do not match agent {agent.online.layer_sizes}"
        )
    for dst, src in zip(agent.online.parameters(), snap.online):
        dst[...] = src
    for dst, src in zip(agent.target.parameters(), snap.target):
        dst[...] = src
    for dst, src in zip(agent.optimizer.m, snap.adam_m):
        dst[...] = src
    for dst, src in zip(agent.optimizer.v, snap.adam_v):
        dst[...] = src
    agent.optimizer.t = snap.adam_t
    sched = agent.epsilon
    sched.ticks = snap.epsilon_ticks
    sched.switched = snap.switched
    sched.switch_tick = snap.switch_tick
    sched.switch_value = snap.switch_value


def save_checkpoint(path: str | Path, snap: AgentSnapshot) -> None:
    if len(snap.config_hash) != _HASH_SIZE:
        raise CheckpointError(f"config hash must be {_HASH_SIZE} bytes")
    parts = [
        MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        snap.config_hash,
        struct.pack("<QQ", snap.episode, snap.adam_t),
        struct.pack(
            "<QBQd",
            snap.epsilon_ticks,
            1 if snap.switched else 0,
            snap.switch_tick,
            snap.switch_value,
        ),
        struct.pack("<I", len(snap.layer_sizes)),
        struct.pack(f"<{len(snap.layer_sizes)}I", *snap.layer_sizes),
    ]
    shapes = _param_shapes(snap.layer_sizes)
    for block in (snap.online, snap.target, snap.adam_m, snap.adam_v):
        if len(block) != len(shapes):
            raise CheckpointError("parameter block does not match layer sizes")
        for arr, shape in zip(block, shapes):
            if arr.shape != shape:
                raise CheckpointError(f"parameter shape {arr.shape}, expected {shape}")
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_checkpoint(
    path: str | Path, expected_config_hash: bytes | None = None
) -> AgentSnapshot:
    blob = Path(path).read_bytes()
    if len(blob) < 8 + 4 + _HASH_SIZE:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    version = struct.unpack_from("<I", blob, 8)[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )

    pos = 12
    config_hash = blob[pos : pos + _HASH_SIZE]
    pos += _HASH_SIZE
    try:
        episode, adam_t = struct.unpack_from("<QQ", blob, pos)
        pos += 16
        ticks, switched, switch_tick, switch_value = struct.unpack_from("<QBQd", blob, pos)
        pos += 25
        (layer_count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        layer_sizes = struct.unpack_from(f"<{layer_count}I", blob, pos)
        pos += 4 * layer_count
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc

    shapes = _param_shapes(layer_sizes)
    per_block = sum(int(np.prod(shape)) for shape in shapes)
    expected = pos + 4 * per_block * 8 + _HASH_SIZE
    if len(blob) != expected:
        raise CheckpointError(
            f"{path}: truncated checkpoint ({len(blob)} bytes, expected {expected})"
        )
    if hashlib.sha256(blob[:-_HASH_SIZE]).digest() != blob[-_HASH_SIZE:]:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")

    blocks: list[list[np.ndarray]] = []
    for _ in range(4):
        block = []
        for shape in shapes:
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
            block.append(arr.reshape(shape).astype(np.float64))
            pos += count * 8
        blocks.append(block)

    if expected_config_hash is not None and config_hash != bytes(expected_config_hash):
        warnings.warn(
            f"{path}: checkpoint was written under a different config", stacklevel=2
        )
    return AgentSnapshot(
        config_hash=config_hash,
        episode=episode,
        adam_t=adam_t,
        epsilon_ticks=ticks,
        switched=bool(switched),
        switch_tick=switch_tick,
        switch_value=switch_value,
        layer_sizes=tuple(int(n) for n in layer_sizes),
        online=blocks[0],
        target=blocks[1],
        adam_m=blocks[2],
        adam_v=blocks[3],
    )
