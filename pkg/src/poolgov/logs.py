"""Run artifacts: the per-step CSV log and the end-of-run JSON summary.

Every float is rendered with ``repr``, whose shortest-round-trip form makes
the files a pure function of the recorded values: identical runs produce
byte-identical logs, and parsing a file recovers the exact floats.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO

COLUMNS = (
    "episode",
    "step",
    "price_weth",
    "price_usdc",
    "price_tkn",
    "cf_weth",
    "cf_usdc",
    "cf_tkn",
    "util_weth",
    "util_usdc",
    "util_tkn",
    "net_weth",
    "net_usdc",
    "net_tkn",
    "action",
    "reward",
    "epsilon",
    "loss",
    "attack",
    "restricted",
    "liquidated",
    "defaulted",
    "bankrupt",
)
CSV_HEADER = ",".join(COLUMNS)


@dataclass(slots=True)
class StepRecord:
    """One governance step as it lands in the log.

    ``prices`` are the end-of-step prices, the same ones that value
    ``net_positions`` and the reward, so the net columns telescope with the
    reward column.  ``loss`` is None on steps without a gradient update.
    """

    episode: int
    step: int
    prices: tuple[float, float, float]
    collateral_factors: tuple[float, float, float]
    utilizations: tuple[float, float, float]
    net_positions: tuple[float, float, float]
    action: int
    reward: float
    epsilon: float
    loss: float | None
    attack: bool
    restricted: bool
    liquidated: bool
    defaulted: bool
    bankrupt: bool

    def render(self) -> str:
        fields = [
            str(self.episode),
            str(self.step),
            *(repr(float(p)) for p in self.prices),
            *(repr(float(c)) for c in self.collateral_factors),
            *(repr(float(u)) for u in self.utilizations),
            *(repr(float(n)) for n in self.net_positions),
            str(self.action),
            repr(float(self.reward)),
            repr(float(self.epsilon)),
            "nan" if self.loss is None else repr(float(self.loss)),
            *(
                "1" if flag else "0"
                for flag in (
                    self.attack,
                    self.restricted,
                    self.liquidated,
                    self.defaulted,
                    self.bankrupt,
                )
            ),
        ]
        return ",".join(fields)


class RunLogWriter:
    """Streams records to one CSV file, header first."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._handle: IO[str] = open(self.path, "w", newline="\n")
        self._handle.write(CSV_HEADER + "\n")

    def write(self, record: StepRecord) -> None:
        self._handle.write(record.render() + "\n")

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> "RunLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _parse_loss(text: str) -> float | None:
    return None if text == "nan" else float(text)


def read_log(path: str | Path) -> list[StepRecord]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing or unexpected CSV header")
    records = []
    for line in lines[1:]:
        f = line.split(",")
        if len(f) != len(COLUMNS):
            raise ValueError(f"{path}: row with {len(f)} fields, expected {len(COLUMNS)}")
        records.append(
            StepRecord(
                episode=int(f[0]),
                step=int(f[1]),
                prices=(float(f[2]), float(f[3]), float(f[4])),
                collateral_factors=(float(f[5]), float(f[6]), float(f[7])),
                utilizations=(float(f[8]), float(f[9]), float(f[10])),
                net_positions=(float(f[11]), float(f[12]), float(f[13])),
                action=int(f[14]),
                reward=float(f[15]),
                epsilon=float(f[16]),
                loss=_parse_loss(f[17]),
                attack=f[18] == "1",
                restricted=f[19] == "1",
                liquidated=f[20] == "1",
                defaulted=f[21] == "1",
                bankrupt=f[22] == "1",
            )
        )
    return records


def write_summary(path: str | Path, payload: dict) -> None:
    """Key-sorted, indented JSON; stable bytes for stable payloads."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_summary(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
