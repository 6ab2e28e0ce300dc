"""Requester and executor state machines for the fair-exchange protocol.

Session flow: the requester sends the function, the initial state, the
total cycle budget, and a per-cycle rate.  If the executor accepts, the
requester opens a payment channel with a deposit covering the budget.
Each round the requester asks for some cycles, the executor runs them in
its enclave and returns the attested encrypted result, the requester
signs a cumulative channel update binding the round's key hash, and the
executor releases the decryption key.  Settlement: the executor closes
the channel with the final signed update plus the key preimage (which
publishes the key on the ledger), or the requester reclaims its deposit
after the channel timeout.

Both actors accept a behaviour policy so scripted misbehaviour (drop,
tamper, replay, withhold, underpay, crash) can be injected at any step;
the default policy is honest.  All state transitions are appended to the
world trace, which is what the protocol-level properties are checked on.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from . import crypto, tee
from .crypto import AuthFailure, Digest, Signature, SigningIdentity, SymmetricKey
from .exec_model import BaseMismatch, MState, OutBuffer, StateDiff, apply_diff
from .ledger import ChannelUpdate, state_hash
from .netsim import World
from .tee import AttestationRecord, WrappedResult
from .wire import Reader, pack_bytes, pack_short_bytes, pack_tag, pack_u8, pack_u32, pack_u64

SESSION_NONE = bytes(32)


# ---------------------------------------------------------------------------
# Wire messages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    workload_tag: str
    state: MState
    total_cycles: int
    rate: int

    def encode_body(self) -> bytes:
        return (pack_tag(self.workload_tag) + pack_bytes(self.state.to_bytes())
                + pack_u64(self.total_cycles) + pack_u64(self.rate))

    @classmethod
    def decode_body(cls, reader: Reader) -> "Request":
        return cls(workload_tag=reader.tag(), state=MState.from_bytes(reader.bytes()),
                   total_cycles=reader.u64(), rate=reader.u64())


@dataclass(frozen=True)
class Accept:
    def encode_body(self) -> bytes:
        return b""

    @classmethod
    def decode_body(cls, reader: Reader) -> "Accept":
        return cls()


@dataclass(frozen=True)
class Reject:
    reason: str

    def encode_body(self) -> bytes:
        return pack_short_bytes(self.reason.encode())

    @classmethod
    def decode_body(cls, reader: Reader) -> "Reject":
        return cls(reason=reader.short_bytes().decode())


def encode_wrapped_result(result: WrappedResult) -> bytes:
    return (pack_bytes(result.enc_diff.payload) + pack_u64(result.enc_diff.length_hint)
            + pack_bytes(result.enc_out.payload) + pack_u64(result.enc_out.length_hint)
            + pack_u64(result.cycles_done) + result.key_hash.data
            + pack_u8(1 if result.terminal else 0)
            + pack_short_bytes(result.attestation.data))


def decode_wrapped_result(reader: Reader) -> WrappedResult:
    enc_diff = crypto.Ciphertext(payload=reader.bytes(), length_hint=reader.u64())
    enc_out = crypto.Ciphertext(payload=reader.bytes(), length_hint=reader.u64())
    cycles_done = reader.u64()
    key_hash = Digest(reader.raw(32))
    terminal = bool(reader.u8())
    attestation = Signature(reader.short_bytes())
    return WrappedResult(enc_diff=enc_diff, enc_out=enc_out, cycles_done=cycles_done,
                         key_hash=key_hash, terminal=terminal, attestation=attestation)


@dataclass(frozen=True)
class RoundResult:
    result: WrappedResult

    def encode_body(self) -> bytes:
        return encode_wrapped_result(self.result)

    @classmethod
    def decode_body(cls, reader: Reader) -> "RoundResult":
        return cls(result=decode_wrapped_result(reader))


@dataclass(frozen=True)
class Update:
    update: ChannelUpdate

    def encode_body(self) -> bytes:
        u = self.update
        return (u.id_contract + pack_u64(u.amount) + u.key_hash.data
                + pack_short_bytes(u.sig.data))

    @classmethod
    def decode_body(cls, reader: Reader) -> "Update":
        return cls(update=ChannelUpdate(id_contract=reader.raw(32), amount=reader.u64(),
                                        key_hash=Digest(reader.raw(32)),
                                        sig=Signature(reader.short_bytes())))


@dataclass(frozen=True)
class KeyReveal:
    key_hash: Digest
    key: SymmetricKey

    def encode_body(self) -> bytes:
        return self.key_hash.data + self.key.data

    @classmethod
    def decode_body(cls, reader: Reader) -> "KeyReveal":
        return cls(key_hash=Digest(reader.raw(32)), key=SymmetricKey(reader.raw(32)))


@dataclass(frozen=True)
class Continue:
    cycles: int

    def encode_body(self) -> bytes:
        return pack_u64(self.cycles)

    @classmethod
    def decode_body(cls, reader: Reader) -> "Continue":
        return cls(cycles=reader.u64())


@dataclass(frozen=True)
class Terminate:
    def encode_body(self) -> bytes:
        return b""

    @classmethod
    def decode_body(cls, reader: Reader) -> "Terminate":
        return cls()


_VARIANTS = [Request, Accept, Reject, RoundResult, Update, KeyReveal, Continue, Terminate]
_VARIANT_ID = {cls: i + 1 for i, cls in enumerate(_VARIANTS)}
_VARIANT_CLS = {i + 1: cls for i, cls in enumerate(_VARIANTS)}


@dataclass(frozen=True)
class Envelope:
    """Protocol message header: sender address, sequence number, session id."""

    sender: bytes
    seq: int
    session: bytes
    body: object

    def encode(self) -> bytes:
        return (pack_u8(_VARIANT_ID[type(self.body)]) + self.sender
                + pack_u32(self.seq) + self.session + self.body.encode_body())


def decode_envelope(raw: bytes) -> Envelope:
    reader = Reader(raw)
    variant = reader.u8()
    sender = reader.raw(20)
    seq = reader.u32()
    session = reader.raw(32)
    body = _VARIANT_CLS[variant].decode_body(reader)
    reader.expect_end()
    return Envelope(sender=sender, seq=seq, session=session, body=body)


# ---------------------------------------------------------------------------
# Behaviour policies (honest defaults; adversaries override)
# ---------------------------------------------------------------------------


class RequesterPolicy:
    def channel_args(self, args: dict) -> dict:
        return args

    def skip_channel(self) -> bool:
        return False

    def suppress_update(self, round_index: int) -> bool:
        return False

    def replay_update(self, round_index: int) -> bool:
        return False

    def update_amount(self, round_index: int, amount: int) -> int:
        return amount

    def update_key_hash(self, round_index: int, key_hash: Digest) -> Digest:
        return key_hash

    def corrupt_update_signature(self, round_index: int) -> bool:
        return False

    def suppress_continue(self, round_index: int) -> bool:
        return False

    def duplicate_continue(self, round_index: int) -> bool:
        return False

    def premature_timeout(self, round_index: int) -> bool:
        return False

    def crash_at(self, point: str, round_index: int) -> bool:
        return False


class ExecutorPolicy:
    def respond_to_request(self) -> str:
        return "accept"  # or "reject" / "silent"

    def reject_reason(self) -> str:
        return "declined"

    def suppress_round_result(self, round_index: int) -> bool:
        return False

    def tamper_result(self, round_index: int, result: WrappedResult) -> WrappedResult:
        return result

    def replay_previous_result(self, round_index: int) -> bool:
        return False

    def withhold_key(self, round_index: int) -> bool:
        return False

    def wrong_key(self, round_index: int) -> bool:
        return False

    def suppress_settle(self) -> bool:
        return False

    def settle_with_stale_update(self) -> bool:
        return False

    def overclaim_extra(self) -> int:
        return 0

    def settle_immediately_after_round(self, round_index: int) -> bool:
        return False

    def crash_at(self, point: str, round_index: int) -> bool:
        return False


# ---------------------------------------------------------------------------
# Actor base
# ---------------------------------------------------------------------------


class ProtocolActor:
    def __init__(self, name: str, identity: SigningIdentity, world: World):
        self.name = name
        self.identity = identity
        self.world = world
        self.dead = False
        self._phase = "init"
        self._seq = 0
        self._last_seq: dict[bytes, int] = {}

    @property
    def address(self) -> bytes:
        return self.identity.address

    @property
    def phase(self) -> str:
        return self._phase

    def set_phase(self, phase: str) -> None:
        if phase != self._phase:
            self._phase = phase
            self.trace("phase", phase=phase)

    def trace(self, kind: str, **data) -> None:
        self.world.trace.append(self.world.now, kind, self.name, **data)

    def die(self, reason: str) -> None:
        self.dead = True
        self.trace("crashed", reason=reason)

    def _send(self, to: str, session: bytes, body) -> None:
        if self.dead:
            return
        self._seq += 1
        self.world.send(self.name, to, Envelope(sender=self.address, seq=self._seq,
                                                session=session, body=body))

    def handle_message(self, envelope: Envelope) -> None:
        if self.dead:
            return
        last = self._last_seq.get(envelope.sender, 0)
        if envelope.seq <= last:
            self.trace("stale_message", variant=type(envelope.body).__name__,
                       seq=envelope.seq)
            return
        self._last_seq[envelope.sender] = envelope.seq
        handler = getattr(self, f"on_{type(envelope.body).__name__}", None)
        if handler is not None:
            handler(envelope)

    def handle_timer(self, tag) -> None:
        if self.dead:
            return
        self.on_timer(tag)

    def on_timer(self, tag) -> None:
        pass

    def handle_receipt(self, receipt) -> None:
        if self.dead:
            return
        self.on_receipt(receipt)

    def on_receipt(self, receipt) -> None:
        pass


# ---------------------------------------------------------------------------
# Requester
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExecutorContact:
    name: str
    address: bytes
    attestation: AttestationRecord


@dataclass
class RequesterConfig:
    workload_tag: str
    initial_state: MState
    total_cycles: int
    cycles_per_round: int
    rate: int
    executors: list[ExecutorContact]
    deposit: Optional[int] = None      # default: rate * remaining cycles
    timeout_ticks: int = 200_000      # channel lifetime from session start
    patience: int = 25_000            # silence window before recovery
    mode: str = tee.MODE_DIFF
    allow_transfer: bool = True


@dataclass
class _PendingRound:
    cycles_requested: int
    result: Optional[WrappedResult] = None


class RequesterActor(ProtocolActor):
    def __init__(self, name: str, identity: SigningIdentity, world: World,
                 cfg: RequesterConfig, policy: RequesterPolicy | None = None):
        super().__init__(name, identity, world)
        self.cfg = cfg
        self.policy = policy or RequesterPolicy()
        self.current_state = cfg.initial_state
        self.confirmed_cycles = 0
        self.paid_balance = 0
        self.terminal_seen = False
        self.executor_idx = 0
        self.session = SESSION_NONE
        self.channel_timeout_tick: Optional[int] = None
        self.pending: Optional[_PendingRound] = None
        self.round_index = 0
        self.keys: dict[bytes, SymmetricKey] = {}
        self.seen_key_hashes: set[bytes] = set()
        self.received_results: dict[bytes, int] = {}  # key hash -> cycles_done
        self.out_messages: list[bytes] = []
        self.last_update: Optional[ChannelUpdate] = None
        self._patience_epoch = 0
        self._session_epoch = 0

    # -- helpers -------------------------------------------------------------

    @property
    def contact(self) -> ExecutorContact:
        return self.cfg.executors[self.executor_idx]

    @property
    def remaining_cycles(self) -> int:
        return self.cfg.total_cycles - self.confirmed_cycles

    def _arm_patience(self) -> None:
        self._patience_epoch += 1
        self.world.schedule_timer(self.name, self.world.now + self.cfg.patience,
                                  ("patience", self._patience_epoch))

    # -- session lifecycle -----------------------------------------------------

    def start(self) -> None:
        self._session_epoch += 1
        self.set_phase("requested")
        self._send(self.contact.name, SESSION_NONE,
                   Request(workload_tag=self.cfg.workload_tag, state=self.current_state,
                           total_cycles=self.remaining_cycles, rate=self.cfg.rate))
        self._arm_patience()
        if self.policy.crash_at("after_request", self.round_index):
            self.die("scripted crash after request")

    def on_Accept(self, envelope: Envelope) -> None:
        if self.phase != "requested" or envelope.sender != self.contact.address:
            return
        if self.policy.skip_channel():
            self.trace("channel_skipped")
            return
        deposit = self.cfg.deposit
        if deposit is None:
            deposit = self.cfg.rate * self.remaining_cycles
        timeout_tick = self.world.now + self.cfg.timeout_ticks
        args = self.policy.channel_args({
            "addr_r": self.address, "addr_e": self.contact.address,
            "timeout": timeout_tick, "deposit": deposit,
        })
        self.channel_timeout_tick = args["timeout"]
        self.set_phase("await_channel")
        self.world.submit_tx(self.name, "init_channel", args)

    def on_Reject(self, envelope: Envelope) -> None:
        if self.phase != "requested" or envelope.sender != self.contact.address:
            return
        self.trace("request_rejected", reason=envelope.body.reason)
        self.set_phase("aborted")

    def on_receipt(self, receipt) -> None:
        if receipt.method == "init_channel":
            if self.phase != "await_channel":
                return
            if receipt.ok:
                self.session = receipt.details["contract_id"]
                self.world.schedule_timer(self.name, self.channel_timeout_tick,
                                          ("reclaim", self._session_epoch))
                self.set_phase("executing")
                self._send_continue()
            else:
                self.trace("channel_init_failed", result=receipt.result)
                self.set_phase("aborted")
        elif receipt.method == "channel_timeout":
            if receipt.result == "TooEarly":
                self.trace("premature_timeout_rejected")
                return
            if receipt.ok:
                self.trace("refunded", amount=receipt.details.get("refund", 0))
            else:
                # Executor's close executed first; the key is now public.
                self._absorb_published_key()
            if self.phase in ("recovering", "await_refund"):
                self._finalize_session()

    # -- execution loop --------------------------------------------------------

    def _send_continue(self) -> None:
        cycles = min(self.cfg.cycles_per_round, self.remaining_cycles)
        if self.policy.premature_timeout(self.round_index):
            self.world.submit_tx(self.name, "channel_timeout",
                                 {"contract_id": self.session})
        if self.policy.suppress_continue(self.round_index):
            self.trace("continue_suppressed", round=self.round_index)
            self._arm_patience()
            return
        self.pending = _PendingRound(cycles_requested=cycles)
        self._send(self.contact.name, self.session, Continue(cycles=cycles))
        if self.policy.duplicate_continue(self.round_index):
            self._send(self.contact.name, self.session, Continue(cycles=cycles))
        self.set_phase("executing")
        self._arm_patience()

    def on_RoundResult(self, envelope: Envelope) -> None:
        if (self.phase != "executing" or self.pending is None
                or envelope.sender != self.contact.address
                or envelope.session != self.session):
            return
        result = envelope.body.result
        if result.key_hash.data in self.seen_key_hashes:
            self.trace("result_replayed", round=self.round_index)
            return
        record = self.contact.attestation
        if not tee.verify_attested(result, record.expected_measurement,
                                   record.attestation_address):
            self.trace("attestation_failed", round=self.round_index)
            self._enter_recovery("attestation_failed")
            return
        requested = self.pending.cycles_requested
        plausible = (0 <= result.cycles_done <= requested
                     and (result.cycles_done == requested or result.terminal))
        owed = self.paid_balance + result.cycles_done * self.cfg.rate
        deposit_cap = self.cfg.deposit or self.cfg.rate * self.cfg.total_cycles
        if not plausible or owed > deposit_cap:
            self.trace("implausible_result", round=self.round_index,
                       cycles=result.cycles_done)
            self._enter_recovery("implausible_result")
            return

        self.pending.result = result
        self.seen_key_hashes.add(result.key_hash.data)
        self.received_results[result.key_hash.data] = result.cycles_done

        if self.policy.suppress_update(self.round_index):
            self.trace("update_suppressed", round=self.round_index)
            return  # stays silent; recovery via patience
        if self.policy.replay_update(self.round_index) and self.last_update is not None:
            # Resend the previous round's signed update verbatim.
            self._send(self.contact.name, self.session, Update(update=self.last_update))
            self.trace("update_replayed", round=self.round_index)
            self.set_phase("await_key")
            self._arm_patience()
            return
        amount = self.policy.update_amount(self.round_index, owed)
        key_hash = self.policy.update_key_hash(self.round_index, result.key_hash)
        sig = crypto.sign(self.identity, state_hash(self.session, amount, key_hash))
        if self.policy.corrupt_update_signature(self.round_index):
            sig = Signature(sig.data[:-1] + bytes([sig.data[-1] ^ 1]))
        update = ChannelUpdate(id_contract=self.session, amount=amount,
                               key_hash=key_hash, sig=sig)
        self._send(self.contact.name, self.session, Update(update=update))
        self.trace("update_signed", round=self.round_index, amount=amount,
                   key_hash=key_hash.hex())
        self.last_update = update
        self.paid_balance = owed
        self.set_phase("await_key")
        self._arm_patience()
        if self.policy.crash_at("after_update", self.round_index):
            self.die("scripted crash after update")

    def on_KeyReveal(self, envelope: Envelope) -> None:
        if (self.phase != "await_key" or self.pending is None
                or self.pending.result is None
                or envelope.sender != self.contact.address):
            return
        reveal: KeyReveal = envelope.body
        if reveal.key_hash != self.pending.result.key_hash:
            self.trace("unexpected_round_key")
            return
        if crypto.hash_bytes(reveal.key.data) != reveal.key_hash:
            self.trace("bogus_key", round=self.round_index)
            return
        if not self._absorb_key(reveal.key):
            self._enter_recovery("decrypt_failed")
            return
        if self.policy.crash_at("after_key", self.round_index):
            self.die("scripted crash after key")
            return
        if self.terminal_seen or self.remaining_cycles <= 0:
            self._complete()
        else:
            self._send_continue()

    def _absorb_key(self, key: SymmetricKey) -> bool:
        """Decrypt and apply the pending round; True on success."""
        result = self.pending.result
        try:
            transition = crypto.decrypt(key, result.enc_diff)
            out_raw = crypto.decrypt(key, result.enc_out)
            if self.cfg.mode == tee.MODE_DIFF:
                new_state = apply_diff(self.current_state, StateDiff.decode(transition))
            else:
                new_state = MState.from_bytes(transition)
            out = OutBuffer.decode(out_raw)
        except (AuthFailure, BaseMismatch, ValueError) as exc:
            self.trace("decrypt_failed", error=type(exc).__name__)
            return False
        self.keys[result.key_hash.data] = key
        self.current_state = new_state
        self.confirmed_cycles += result.cycles_done
        self.terminal_seen = result.terminal
        self.out_messages.extend(out.messages)
        self.trace("round_confirmed", round=self.round_index,
                   cycles=result.cycles_done, balance=self.paid_balance)
        self.round_index += 1
        self.pending = None
        return True

    def _complete(self) -> None:
        self._send(self.contact.name, self.session, Terminate())
        self.trace("session_complete", cycles=self.confirmed_cycles,
                   paid=self.paid_balance)
        self.set_phase("done")

    # -- recovery ---------------------------------------------------------------

    def on_timer(self, tag) -> None:
        kind, epoch = tag
        if kind == "reclaim":
            if epoch == self._session_epoch:
                self._on_reclaim_due()
            return
        if kind != "patience" or epoch != self._patience_epoch:
            return
        if self.phase == "requested":
            self.trace("setup_silent")
            self._finalize_session()  # nothing spent; try next executor or abort
        elif self.phase in ("executing", "await_key"):
            self._enter_recovery("patience")

    def _enter_recovery(self, reason: str) -> None:
        self.trace("recovery", reason=reason)
        if self.session == SESSION_NONE:
            self.set_phase("recovering")
            self._finalize_session()
            return
        channel = self.world.ledger.channel(self.session)
        if channel is not None and channel.status == "open":
            if self.world.now >= self.channel_timeout_tick:
                self.set_phase("await_refund")
                self.world.submit_tx(self.name, "channel_timeout",
                                     {"contract_id": self.session})
            else:
                self.set_phase("recovering")  # reclaim timer will fire at timeout
        else:
            self._absorb_published_key()
            self.set_phase("recovering")
            self._finalize_session()

    def _on_reclaim_due(self) -> None:
        if self.session == SESSION_NONE:
            return
        channel = self.world.ledger.channel(self.session)
        if channel is not None and channel.status == "open":
            if self.phase in ("recovering", "executing", "await_key", "done"):
                if self.phase != "done":
                    self.set_phase("await_refund")
                self.world.submit_tx(self.name, "channel_timeout",
                                     {"contract_id": self.session})
        elif self.phase == "recovering":
            self._absorb_published_key()
            self._finalize_session()

    def _absorb_published_key(self) -> None:
        """Fair-exchange backstop: read the settle preimage from the ledger."""
        if self.pending is None or self.pending.result is None:
            return
        key = self.world.ledger.published_key(self.session)
        if key is None:
            return
        if crypto.hash_bytes(key.data) == self.pending.result.key_hash:
            if self._absorb_key(key):
                self.trace("key_from_ledger")

    def _finalize_session(self) -> None:
        if self.terminal_seen or self.remaining_cycles <= 0:
            self.set_phase("done")
            return
        if self.cfg.allow_transfer and self.executor_idx + 1 < len(self.cfg.executors):
            self.executor_idx += 1
            self.session = SESSION_NONE
            self.paid_balance = 0
            self.pending = None
            self.last_update = None
            self.channel_timeout_tick = None
            self.trace("transfer", executor=self.contact.name,
                       resumed_cycles=self.confirmed_cycles)
            self.start()
        else:
            self.set_phase("aborted")


# ---------------------------------------------------------------------------
# Executor
# ---------------------------------------------------------------------------


@dataclass
class ExecutorConfig:
    workload: object                  # a Workload implementation
    mode: str = tee.MODE_DIFF
    memory_limit: int = tee.DEFAULT_MEMORY_LIMIT
    enter_exit_cost: int = 400
    per_cycle_cost: int = 9
    min_margin_ticks: int = 50        # required distance to channel timeout
    settle_margin: int = 20           # close this many ticks before timeout


@dataclass
class _ExecRound:
    result: WrappedResult
    amount_expected: int
    index: int


class ExecutorActor(ProtocolActor):
    def __init__(self, name: str, identity: SigningIdentity, world: World,
                 cfg: ExecutorConfig, rng: random.Random,
                 policy: ExecutorPolicy | None = None):
        super().__init__(name, identity, world)
        self.cfg = cfg
        self.policy = policy or ExecutorPolicy()
        self.enclave = tee.enclave_load(cfg.workload, rng,
                                        memory_limit=cfg.memory_limit,
                                        enter_exit_cost=cfg.enter_exit_cost,
                                        per_cycle_cost=cfg.per_cycle_cost)
        self.plain_state: Optional[MState] = None
        self.total_cycles = 0
        self.rate = 0
        self.requester_addr: Optional[bytes] = None
        self.requester_name: Optional[str] = None
        self.session: Optional[bytes] = None
        self.paid_balance = 0
        self.pending: Optional[_ExecRound] = None
        self.last_result: Optional[WrappedResult] = None
        self.last_valid_update: Optional[ChannelUpdate] = None
        self.update_history: list[ChannelUpdate] = []
        self.round_index = 0
        self.settle_submitted = False
        self.set_phase("idle")

    def contact_card(self) -> ExecutorContact:
        """What a requester learns out of band before the protocol starts."""
        return ExecutorContact(name=self.name, address=self.address,
                               attestation=self.enclave.attestation_record())

    # -- setup -------------------------------------------------------------------

    def on_Request(self, envelope: Envelope) -> None:
        if self.phase != "idle":
            return
        response = self.policy.respond_to_request()
        if response == "silent":
            self.trace("request_ignored")
            return
        request: Request = envelope.body
        sender_name = self.world.name_of(envelope.sender)
        if response == "reject" or request.workload_tag != self.cfg.workload.schema_tag:
            reason = (self.policy.reject_reason() if response == "reject"
                      else "unknown function")
            self._send(sender_name, SESSION_NONE, Reject(reason=reason))
            self.trace("request_rejected", reason=reason)
            return
        self.plain_state = request.state
        self.total_cycles = request.total_cycles
        self.rate = request.rate
        self.requester_addr = envelope.sender
        self.requester_name = sender_name
        self.set_phase("accepted")
        self._send(sender_name, SESSION_NONE, Accept())
        if self.policy.crash_at("after_accept", 0):
            self.die("scripted crash after accept")

    def _check_channel(self, session: bytes) -> Optional[str]:
        channel = self.world.ledger.channel(session)
        if channel is None or channel.status != "open":
            return "no open channel"
        if channel.addr_e != self.address:
            return "channel names a different executor"
        if channel.addr_r != self.requester_addr:
            return "channel opened by a different requester"
        if channel.deposit < self.rate * self.total_cycles:
            return "deposit below rate * cycles"
        if channel.timeout - self.world.now < self.cfg.min_margin_ticks:
            return "timeout too close to settle safely"
        return None

    # -- execution ----------------------------------------------------------------

    def on_Continue(self, envelope: Envelope) -> None:
        if envelope.sender != self.requester_addr:
            return
        if self.phase == "accepted":
            problem = self._check_channel(envelope.session)
            if problem is not None:
                # Mis-parameterized channel: do not participate.
                self.trace("channel_rejected", reason=problem)
                return
            self.session = envelope.session
            channel = self.world.ledger.channel(self.session)
            settle_at = channel.timeout - self.world.ledger.liveness_bound \
                - self.cfg.settle_margin
            self.world.schedule_timer(self.name, settle_at, ("settle",))
            self.trace("channel_verified", deposit=channel.deposit)
            self.set_phase("ready")
        if self.phase == "await_update" or self.pending is not None:
            # One unpaid round is the most this executor will ever carry.
            self.trace("refused_unpaid", round=self.round_index)
            return
        if self.phase != "ready" or envelope.session != self.session:
            return
        cycles = envelope.body.cycles
        channel = self.world.ledger.channel(self.session)
        if channel.status != "open":
            self.trace("channel_gone")
            return
        if cycles < 1 or self.paid_balance + cycles * self.rate > channel.deposit:
            self.trace("refused_underfunded", cycles=cycles)
            return

        if self.policy.replay_previous_result(self.round_index) and self.last_result:
            stale = self.last_result
            self.pending = _ExecRound(result=stale, amount_expected=self.paid_balance
                                      + stale.cycles_done * self.rate,
                                      index=self.round_index)
            self._send(self.requester_name, self.session, RoundResult(result=stale))
            self.trace("result_replayed_by_executor", round=self.round_index)
            self.set_phase("await_update")
            return

        try:
            result = tee.wrapper_execute(self.enclave, self.plain_state, cycles,
                                         mode=self.cfg.mode)
        except tee.MemoryLimitExceeded as exc:
            self._send(self.requester_name, self.session, Reject(reason=str(exc)))
            self.trace("memory_limit", reason=str(exc))
            return
        cost = (self.cfg.enter_exit_cost
                + result.cycles_done * self.cfg.per_cycle_cost)
        self.trace("round_executed", round=self.round_index,
                   cycles=result.cycles_done, time_ticks=cost,
                   terminal=result.terminal)
        self.pending = _ExecRound(result=result,
                                  amount_expected=self.paid_balance
                                  + result.cycles_done * self.rate,
                                  index=self.round_index)
        self.last_result = result
        self.set_phase("await_update")
        # The response leaves only after the enclave time has elapsed.
        self.world.schedule_timer(self.name, self.world.now + cost,
                                  ("round_ready", self.round_index))
        if self.policy.crash_at("after_round", self.round_index):
            self.die("scripted crash after round")

    def _emit_round_result(self, round_index: int) -> None:
        if self.pending is None or self.pending.index != round_index:
            return
        result = self.pending.result
        outgoing = self.policy.tamper_result(round_index, result)
        if self.policy.suppress_round_result(round_index):
            self.trace("result_suppressed", round=round_index)
        else:
            self._send(self.requester_name, self.session, RoundResult(result=outgoing))

    def on_Update(self, envelope: Envelope) -> None:
        if envelope.sender != self.requester_addr:
            return
        if self.phase != "await_update" or self.pending is None:
            self.trace("unexpected_update")
            return
        update: ChannelUpdate = envelope.body.update
        if update.id_contract != self.session:
            self.trace("rejected_update", reason="WrongChannel")
            return
        if update.amount != self.pending.amount_expected:
            self.trace("rejected_update", reason="WrongAmount",
                       got=update.amount, expected=self.pending.amount_expected)
            return
        if update.key_hash != self.pending.result.key_hash:
            self.trace("rejected_update", reason="KeyHashMismatch")
            return
        expected_digest = state_hash(self.session, self.pending.amount_expected,
                                     self.pending.result.key_hash)
        if not crypto.check_sig(expected_digest, update.sig, self.requester_addr):
            self.trace("rejected_update", reason="BadUpdateSignature")
            return

        self.paid_balance = self.pending.amount_expected
        self.last_valid_update = update
        self.update_history.append(update)
        self.trace("update_accepted", round=self.pending.index,
                   amount=self.paid_balance)

        key = tee.reveal_key(self.enclave, self.pending.result.key_hash)
        self._advance_own_state(key)
        round_index = self.pending.index
        if self.policy.withhold_key(round_index):
            self.trace("key_withheld", round=round_index)
        else:
            out_key = key
            if self.policy.wrong_key(round_index):
                out_key = SymmetricKey(crypto.hash_bytes(key.data).data)
            self._send(self.requester_name, self.session,
                       KeyReveal(key_hash=self.pending.result.key_hash, key=out_key))
            self.trace("key_revealed", round=round_index)
        self.pending = None
        self.round_index += 1
        self.set_phase("ready")
        if self.policy.crash_at("after_reveal", round_index):
            self.die("scripted crash after reveal")
            return
        if self.policy.settle_immediately_after_round(round_index):
            self._settle()

    def _advance_own_state(self, key: SymmetricKey) -> None:
        result = self.pending.result
        transition = crypto.decrypt(key, result.enc_diff)
        if self.cfg.mode == tee.MODE_DIFF:
            self.plain_state = apply_diff(self.plain_state, StateDiff.decode(transition))
        else:
            self.plain_state = MState.from_bytes(transition)

    # -- settlement -----------------------------------------------------------------

    def on_Terminate(self, envelope: Envelope) -> None:
        if envelope.sender != self.requester_addr:
            return
        self.trace("terminate_received")
        self._settle()
        if self.phase not in ("done", "settling"):
            self.set_phase("done")

    def on_timer(self, tag) -> None:
        if tag == ("settle",):
            self._settle()
        elif tag[0] == "round_ready":
            self._emit_round_result(tag[1])

    def _settle(self) -> None:
        if self.settle_submitted or self.policy.suppress_settle():
            return
        if self.session is None or self.last_valid_update is None:
            return
        channel = self.world.ledger.channel(self.session)
        if channel is None or channel.status != "open" or self.paid_balance <= 0:
            return
        update = self.last_valid_update
        if self.policy.settle_with_stale_update() and len(self.update_history) > 1:
            update = self.update_history[0]
        amount = update.amount + self.policy.overclaim_extra()
        preimage = tee.reveal_key(self.enclave, update.key_hash)
        own_sig = crypto.sign(self.identity,
                              state_hash(self.session, amount, update.key_hash))
        self.world.submit_tx(self.name, "close_channel", {
            "contract_id": self.session, "sig_r": update.sig, "sig_e": own_sig,
            "amount": amount, "key_hash": update.key_hash, "preimage": preimage,
        })
        self.settle_submitted = True
        self.set_phase("settling")
        self.trace("settle_submitted", amount=amount)

    def on_receipt(self, receipt) -> None:
        if receipt.method != "close_channel":
            return
        if receipt.ok:
            self.trace("settled", paid=receipt.details.get("paid", 0))
        else:
            self.trace("settle_failed", result=receipt.result)
        self.set_phase("done")
