"""Deterministic discrete-event transport between actors and the ledger.

A single heap of (tick, insertion-order) events drives everything:
message deliveries, actor timers, and ledger transaction execution.
Identical inputs replay to byte-identical traces.  Message faults
(drop, tamper, replay, partition) are applied at send time from a
scripted fault list, so adversarial network behaviour is reviewable
and replayable.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .ledger import Ledger, Receipt


class TickLimitExceeded(Exception):
    """The simulation did not quiesce; a scenario is livelocked."""


@dataclass(frozen=True)
class LinkModel:
    latency_per_message: int = 300
    bytes_per_tick: int = 2500
    per_message_overhead: int = 32

    def delivery_delay(self, size: int) -> int:
        return self.latency_per_message + math.ceil(size / self.bytes_per_tick)


# ---------------------------------------------------------------------------
# Fault scripts
# ---------------------------------------------------------------------------


@dataclass
class Match:
    """Selects messages by sender name, variant name, and occurrence index."""

    sender: Optional[str] = None
    variant: Optional[str] = None
    nth: Optional[int] = None  # 0-based occurrence among matches; None = all
    _seen: int = field(default=0, repr=False)

    def hits(self, sender: str, variant: str) -> bool:
        if self.sender is not None and sender != self.sender:
            return False
        if self.variant is not None and variant != self.variant:
            return False
        index = self._seen
        self._seen += 1
        return self.nth is None or index == self.nth


@dataclass
class Drop:
    match: Match


@dataclass
class Tamper:
    match: Match
    mutate: Callable
    label: str = "tamper"


@dataclass
class Replay:
    match: Match
    delay: int = 50


@dataclass
class Partition:
    start_tick: int
    end_tick: int


FaultScript = list  # of Drop | Tamper | Replay | Partition


class Actor(Protocol):
    name: str
    address: bytes

    def handle_message(self, envelope) -> None: ...

    def handle_timer(self, tag: object) -> None: ...

    def handle_receipt(self, receipt: Receipt) -> None: ...


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    kind: str
    actor: str
    data: dict


class Trace:
    def __init__(self):
        self.events: list[TraceEvent] = []

    def append(self, tick: int, kind: str, actor: str, **data) -> None:
        self.events.append(TraceEvent(tick=tick, kind=kind, actor=actor, data=data))

    def of_kind(self, *kinds: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind in kinds]

    def message_log(self) -> str:
        """One line per send/receive: tick, actor, direction, variant, bytes."""
        lines = []
        for event in self.events:
            if event.kind == "msg_sent":
                lines.append("\t".join([str(event.tick), event.actor, "send",
                                        event.data["variant"], str(event.data["size"])]))
            elif event.kind == "msg_delivered":
                lines.append("\t".join([str(event.tick), event.actor, "recv",
                                        event.data["variant"], str(event.data["size"])]))
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(order=True)
class _Event:
    fire_tick: int
    seq: int
    kind: str = field(compare=False)
    target: str = field(compare=False)
    payload: object = field(compare=False)


class World:
    """Owns the clock, the actors, the ledger, and the event heap."""

    def __init__(self, ledger: Ledger, link: LinkModel | None = None,
                 faults: FaultScript | None = None, tick_limit: int = 10_000_000):
        self.ledger = ledger
        self.link = link or LinkModel()
        self.faults = list(faults or [])
        self.tick_limit = tick_limit
        self.now = 0
        self.trace = Trace()
        self.actors: dict[str, Actor] = {}
        self._by_address: dict[bytes, str] = {}
        self._heap: list[_Event] = []
        self._seq = 0
        self._dispatched = 0

    def register(self, actor: Actor) -> None:
        if actor.name in self.actors:
            raise ValueError(f"actor {actor.name!r} already registered")
        self.actors[actor.name] = actor
        self._by_address[actor.address] = actor.name

    def name_of(self, address: bytes) -> Optional[str]:
        return self._by_address.get(address)

    def _push(self, fire_tick: int, kind: str, target: str, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, _Event(fire_tick=fire_tick, seq=self._seq,
                                          kind=kind, target=target, payload=payload))

    # -- messaging ----------------------------------------------------------

    def send(self, sender: str, to: str, envelope) -> None:
        raw = envelope.encode()
        variant = type(envelope.body).__name__
        size = len(raw) + self.link.per_message_overhead
        self.trace.append(self.now, "msg_sent", sender,
                          to=to, variant=variant, size=size)

        envelope, verdicts = self._apply_faults(sender, variant, envelope)
        if "drop" in verdicts:
            self.trace.append(self.now, "msg_dropped", sender,
                              to=to, variant=variant, size=size)
            return
        deliver_at = self.now + self.link.delivery_delay(size)
        self._push(deliver_at, "msg", to, (sender, envelope, variant, size))
        for delay in verdicts.get("replays", ()):
            self.trace.append(self.now, "msg_sent", sender, to=to,
                              variant=variant, size=size, replayed=True)
            self._push(deliver_at + delay, "msg", to, (sender, envelope, variant, size))

    def _apply_faults(self, sender: str, variant: str, envelope):
        verdicts: dict = {}
        for fault in self.faults:
            if isinstance(fault, Partition):
                if fault.start_tick <= self.now < fault.end_tick:
                    verdicts["drop"] = True
            elif isinstance(fault, Drop):
                if fault.match.hits(sender, variant):
                    verdicts["drop"] = True
            elif isinstance(fault, Tamper):
                if fault.match.hits(sender, variant):
                    envelope = fault.mutate(envelope)
                    self.trace.append(self.now, "msg_tampered", sender,
                                      variant=variant, label=fault.label)
            elif isinstance(fault, Replay):
                if fault.match.hits(sender, variant):
                    verdicts.setdefault("replays", []).append(fault.delay)
        return envelope, verdicts

    # -- timers and ledger ----------------------------------------------------

    def schedule_timer(self, actor: str, fire_tick: int, tag) -> None:
        self._push(max(fire_tick, self.now), "timer", actor, tag)

    def submit_tx(self, actor: str, method: str, args: dict) -> int:
        """Queue a ledger transaction; the receipt comes back as an event."""
        self._sync_ledger()
        due = self.ledger.submit(method, self.actors[actor].address, args)
        self.trace.append(self.now, "tx_submitted", actor, method=method, due=due)
        self._push(due, "ledger", "", None)
        return due

    def _sync_ledger(self) -> None:
        for receipt in self.ledger.advance_to(self.now):
            target = self._by_address.get(receipt.submitter)
            self.trace.append(receipt.executed_tick, "tx_executed",
                              target or receipt.submitter.hex()[:8],
                              method=receipt.method, result=receipt.result,
                              fee=receipt.fee, details=dict(receipt.details))
            if target is not None:
                self._push(self.now, "receipt", target, receipt)

    # -- main loop ------------------------------------------------------------

    def run_until_quiescent(self) -> Trace:
        while self._heap:
            event = heapq.heappop(self._heap)
            if event.fire_tick > self.tick_limit:
                raise TickLimitExceeded(
                    f"event at tick {event.fire_tick} beyond limit {self.tick_limit}")
            self._dispatched += 1
            if self._dispatched > 1_000_000:
                raise TickLimitExceeded("event count limit reached; livelock?")
            self.now = max(self.now, event.fire_tick)
            self._sync_ledger()
            if event.kind == "msg":
                sender, envelope, variant, size = event.payload
                actor = self.actors[event.target]
                self.trace.append(self.now, "msg_delivered", event.target,
                                  frm=sender, variant=variant, size=size)
                actor.handle_message(envelope)
            elif event.kind == "timer":
                self.actors[event.target].handle_timer(event.payload)
            elif event.kind == "receipt":
                self.actors[event.target].handle_receipt(event.payload)
            elif event.kind == "ledger":
                pass  # _sync_ledger above already drained due transactions
        self._sync_ledger()
        return self.trace


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class RunMetrics:
    total_latency_ticks: int
    requester_latency_ticks: int
    bytes_sent: dict          # (sender, receiver) -> bytes, delivered + dropped
    bytes_r_to_e: int
    bytes_e_to_r: int
    rounds: int
    enclave_calls: int
    enclave_time_ticks: int
    fees: dict                # actor name -> coins
    outcome: str = "unknown"


def metrics(trace: Trace, requester: str, executors: list[str]) -> RunMetrics:
    bytes_sent: dict = {}
    for event in trace.of_kind("msg_sent"):
        key = (event.actor, event.data["to"])
        bytes_sent[key] = bytes_sent.get(key, 0) + event.data["size"]

    r_to_e = sum(v for (frm, to), v in bytes_sent.items()
                 if frm == requester and to in executors)
    e_to_r = sum(v for (frm, to), v in bytes_sent.items()
                 if frm in executors and to == requester)

    rounds = trace.of_kind("round_executed")
    enclave_time = sum(e.data.get("time_ticks", 0) for e in rounds)

    fees: dict = {}
    for event in trace.of_kind("tx_executed"):
        fees[event.actor] = fees.get(event.actor, 0) + event.data["fee"]

    done = [e for e in trace.of_kind("phase")
            if e.actor == requester and e.data.get("phase") == "done"]
    last_tick = trace.events[-1].tick if trace.events else 0
    requester_latency = done[0].tick if done else last_tick

    return RunMetrics(
        total_latency_ticks=last_tick,
        requester_latency_ticks=requester_latency,
        bytes_sent=bytes_sent,
        bytes_r_to_e=r_to_e,
        bytes_e_to_r=e_to_r,
        rounds=len(rounds),
        enclave_calls=len(rounds),
        enclave_time_ticks=enclave_time,
        fees=fees,
    )
