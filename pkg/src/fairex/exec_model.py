"""Cycle-partitioned execution model.

A workload is a deterministic function taking a serialized state and a
cycle budget and returning a new state, output messages, and the number
of cycles actually performed.  Splitting a budget across several calls
must compose: same final state, same concatenated output, same total
cycle count.  State transitions can be shipped as byte-level diffs that
reconstruct the new state exactly when applied to the right base.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .crypto import Digest, hash_bytes
from .wire import Reader, pack_bytes, pack_tag, pack_u8, pack_u32

SCHEMA_TAG_WIDTH = 16


class SchemaMismatch(Exception):
    """State schema tag does not match the workload."""


class BaseMismatch(Exception):
    """Diff applied to a state other than the one it was generated from."""


@dataclass(frozen=True)
class MState:
    """Serialized workload state; `blob` round-trips exactly."""

    blob: bytes
    schema_tag: str

    def size(self) -> int:
        return len(self.blob)

    def digest(self) -> Digest:
        return hash_bytes(self.blob)

    def to_bytes(self) -> bytes:
        return pack_tag(self.schema_tag, SCHEMA_TAG_WIDTH) + pack_bytes(self.blob)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MState":
        reader = Reader(data)
        tag = reader.tag(SCHEMA_TAG_WIDTH)
        blob = reader.bytes()
        reader.expect_end()
        return cls(blob=blob, schema_tag=tag)


@dataclass(frozen=True)
class OutBuffer:
    """Ordered output messages; concatenation across rounds is associative."""

    messages: tuple[bytes, ...] = ()

    def concat(self, other: "OutBuffer") -> "OutBuffer":
        return OutBuffer(self.messages + other.messages)

    def total_bytes(self) -> int:
        return sum(len(m) for m in self.messages)

    def encode(self) -> bytes:
        parts = [pack_u32(len(self.messages))]
        parts.extend(pack_bytes(m) for m in self.messages)
        return b"".join(parts)

    @classmethod
    def decode(cls, data: bytes) -> "OutBuffer":
        reader = Reader(data)
        count = reader.u32()
        messages = tuple(reader.bytes() for _ in range(count))
        reader.expect_end()
        return cls(messages)


@dataclass(frozen=True)
class StepResult:
    new_state: MState
    out: OutBuffer
    cycles_done: int
    terminal: bool


class Workload(Protocol):
    """A pluggable deterministic function implementation."""

    schema_tag: str
    code_identity: str

    def run(self, state: MState, cycles: int) -> StepResult: ...

    def working_set(self, state: MState) -> int: ...


def step(p: Workload, s: MState, c: int) -> StepResult:
    """Run `p` on `s` for `c` cycles, enforcing the accounting laws."""
    if c < 0:
        raise ValueError("cycle count must be non-negative")
    if s.schema_tag != p.schema_tag:
        raise SchemaMismatch(f"state tagged {s.schema_tag!r}, workload wants {p.schema_tag!r}")
    result = p.run(s, c)
    if not 0 <= result.cycles_done <= c:
        raise AssertionError(f"workload reported {result.cycles_done} cycles for budget {c}")
    if result.cycles_done < c and not result.terminal:
        raise AssertionError("workload stopped early without reaching a terminal state")
    if result.cycles_done == 0 and result.new_state.blob != s.blob:
        raise AssertionError("zero cycles performed but state changed")
    if result.cycles_done > 0 and result.new_state.blob == s.blob:
        raise AssertionError("cycles performed but state did not change")
    return result


def compose_check(p: Workload, s0: MState, a: int, b: int) -> bool:
    """True iff running a then b cycles equals running a+b in one call."""
    first = step(p, s0, a)
    second = step(p, first.new_state, b)
    whole = step(p, s0, a + b)
    return (
        second.new_state.blob == whole.new_state.blob
        and first.out.concat(second.out) == whole.out
        and first.cycles_done + second.cycles_done == whole.cycles_done
        and second.terminal == whole.terminal
    )


# ---------------------------------------------------------------------------
# State diffs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffOp:
    """Replace bytes at `offset` (data set) or remove `length` bytes (data None)."""

    offset: int
    length: int
    data: Optional[bytes]

    def __post_init__(self):
        if self.data is not None and len(self.data) != self.length:
            raise ValueError("replace op length must match payload size")


@dataclass(frozen=True)
class StateDiff:
    ops: tuple[DiffOp, ...]
    base_digest: Digest

    def encode(self) -> bytes:
        parts = [self.base_digest.data, pack_u32(len(self.ops))]
        for op in self.ops:
            parts.append(pack_u32(op.offset))
            parts.append(pack_u32(op.length))
            if op.data is None:
                parts.append(pack_u8(1))
            else:
                parts.append(pack_u8(0))
                parts.append(op.data)
        return b"".join(parts)

    @classmethod
    def decode(cls, data: bytes) -> "StateDiff":
        reader = Reader(data)
        base = Digest(reader.raw(32))
        count = reader.u32()
        ops = []
        for _ in range(count):
            offset = reader.u32()
            length = reader.u32()
            removal = reader.u8()
            payload = None if removal else reader.raw(length)
            ops.append(DiffOp(offset=offset, length=length, data=payload))
        reader.expect_end()
        return cls(ops=tuple(ops), base_digest=base)

    def size(self) -> int:
        return len(self.encode())

    def removal_only(self) -> bool:
        return all(op.data is None for op in self.ops)


def _changed_runs(a: bytes, b: bytes) -> list[tuple[int, int]]:
    """Contiguous [start, end) runs where the common prefix of a and b differ."""
    n = min(len(a), len(b))
    if n == 0:
        return []
    av = np.frombuffer(a, dtype=np.uint8, count=n)
    bv = np.frombuffer(b, dtype=np.uint8, count=n)
    neq = av != bv
    if not neq.any():
        return []
    idx = np.flatnonzero(neq)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks], [idx[-1]])) + 1
    return [(int(s), int(e)) for s, e in zip(starts, ends)]


def gen_diff(s: MState, s2: MState) -> StateDiff:
    """Diff such that apply_diff(s, diff) reconstructs s2 byte-exactly."""
    if s.schema_tag != s2.schema_tag:
        raise SchemaMismatch(f"cannot diff {s.schema_tag!r} against {s2.schema_tag!r}")
    a, b = s.blob, s2.blob
    ops = [DiffOp(offset=start, length=end - start, data=b[start:end])
           for start, end in _changed_runs(a, b)]
    if len(b) > len(a):
        ops.append(DiffOp(offset=len(a), length=len(b) - len(a), data=b[len(a):]))
    elif len(b) < len(a):
        ops.append(DiffOp(offset=len(b), length=len(a) - len(b), data=None))
    return StateDiff(ops=tuple(ops), base_digest=hash_bytes(a))


def apply_diff(s: MState, sd: StateDiff) -> MState:
    """Reconstruct the target state; the base digest must match `s`."""
    if hash_bytes(s.blob) != sd.base_digest:
        raise BaseMismatch("diff was generated against a different base state")
    buf = bytearray(s.blob)
    for op in sd.ops:
        if op.data is None:
            if op.offset + op.length > len(buf):
                raise ValueError("removal op out of range")
            del buf[op.offset:op.offset + op.length]
        else:
            if op.offset > len(buf):
                raise ValueError("replace op leaves a gap")
            buf[op.offset:op.offset + op.length] = op.data
    return MState(blob=bytes(buf), schema_tag=s.schema_tag)
