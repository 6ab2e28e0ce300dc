"""Conway's Game of Life as a state-based workload.

One execution cycle is one synchronous generation of the whole grid
(birth on 3 neighbours, survival on 2 or 3, dead border).  The state
blob carries a generation counter so every positive cycle budget
produces a new state byte-wise, even on still lifes and oscillators.

Cells serialize one byte per cell by default (a 50x50 grid is ~2.5 kB);
a bit-packed layout is available as a config option.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from ..exec_model import MState, OutBuffer, StateDiff, StepResult, gen_diff
from ..wire import Reader, pack_u8, pack_u32, pack_u64

LIFE_TAG = "life"


class DimensionMismatch(Exception):
    """Grids of different sizes cannot be diffed."""


def life_step_rules(cells: np.ndarray) -> np.ndarray:
    """One synchronous generation; cells outside the grid are dead."""
    padded = np.pad(cells, 1)
    neighbours = (
        padded[:-2, :-2] + padded[:-2, 1:-1] + padded[:-2, 2:]
        + padded[1:-1, :-2] + padded[1:-1, 2:]
        + padded[2:, :-2] + padded[2:, 1:-1] + padded[2:, 2:]
    )
    return ((neighbours == 3) | ((cells == 1) & (neighbours == 2))).astype(np.uint8)


@dataclass(eq=False)
class LifeState:
    width: int
    height: int
    generation: int
    cells: np.ndarray
    packed: bool = False

    def to_mstate(self) -> MState:
        if self.packed:
            body = np.packbits(self.cells.reshape(-1)).tobytes()
        else:
            body = self.cells.astype(np.uint8).tobytes()
        blob = (
            pack_u32(self.width) + pack_u32(self.height)
            + pack_u64(self.generation) + pack_u8(1 if self.packed else 0)
            + body
        )
        return MState(blob=blob, schema_tag=LIFE_TAG)

    @classmethod
    def from_mstate(cls, state: MState) -> "LifeState":
        reader = Reader(state.blob)
        width, height = reader.u32(), reader.u32()
        generation = reader.u64()
        packed = bool(reader.u8())
        n = width * height
        if packed:
            raw = np.frombuffer(reader.raw((n + 7) // 8), dtype=np.uint8)
            cells = np.unpackbits(raw)[:n].reshape(height, width)
        else:
            cells = np.frombuffer(reader.raw(n), dtype=np.uint8).reshape(height, width).copy()
        reader.expect_end()
        return cls(width=width, height=height, generation=generation,
                   cells=cells, packed=packed)


class LifeWorkload:
    """Workload implementation; the engine only sees MState blobs."""

    schema_tag = LIFE_TAG
    code_identity = "life-engine-v1"

    def run(self, state: MState, cycles: int) -> StepResult:
        if cycles == 0:
            return StepResult(new_state=state, out=OutBuffer(), cycles_done=0, terminal=False)
        parsed = LifeState.from_mstate(state)
        cells = parsed.cells
        for _ in range(cycles):
            cells = life_step_rules(cells)
        parsed.cells = cells
        parsed.generation += cycles
        return StepResult(new_state=parsed.to_mstate(), out=OutBuffer(),
                          cycles_done=cycles, terminal=False)

    def working_set(self, state: MState) -> int:
        return len(state.blob)


def life_diff(s: MState, s2: MState) -> StateDiff:
    """Grid-aware diff: same dimensions required, then plain byte diff."""
    a, b = LifeState.from_mstate(s), LifeState.from_mstate(s2)
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"{a.width}x{a.height} grid diffed against {b.width}x{b.height}")
    return gen_diff(s, s2)


def random_state(rng: random.Random, width: int, height: int,
                 density: float = 0.35, packed: bool = False) -> MState:
    np_rng = np.random.default_rng(rng.getrandbits(64))
    cells = (np_rng.random((height, width)) < density).astype(np.uint8)
    return LifeState(width=width, height=height, generation=0,
                     cells=cells, packed=packed).to_mstate()


def parse_pattern(text: str, packed: bool = False) -> MState:
    """Load a grid from plaintext: '.' dead, '#' alive, one row per line."""
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty pattern")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged pattern rows")
    cells = np.array([[1 if ch == "#" else 0 for ch in row] for row in rows],
                     dtype=np.uint8)
    return LifeState(width=width, height=len(rows), generation=0,
                     cells=cells, packed=packed).to_mstate()


def format_pattern(state: MState) -> str:
    parsed = LifeState.from_mstate(state)
    return "\n".join(
        "".join("#" if cell else "." for cell in row) for row in parsed.cells)
