"""Simulated trusted execution environment.

An enclave handle wraps a workload behind a boundary that enforces a
memory limit, counts entries, and attests every result with a signing
key private to the enclave.  Each round encrypts the state transition
and the output buffer under a fresh ephemeral key; the plaintext key
stays inside the handle until the protocol layer authorizes its release
via `reveal_key`.

The verifier holds (measurement, attestation address) obtained out of
band; that pair stands in for a full remote-attestation handshake.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import crypto
from .crypto import Ciphertext, Digest, Signature, SigningIdentity, SymmetricKey
from .exec_model import MState, Workload, gen_diff, step
from .wire import pack_bytes, pack_u8, pack_u64

DEFAULT_MEMORY_LIMIT = 128 * 1024 * 1024  # matches common enclave EPC budgets

MODE_DIFF = "diff"
MODE_FULL_STATE = "full-state"


class MemoryLimitExceeded(Exception):
    """Input plus working set does not fit in the enclave; shard the input."""


class UnknownRound(Exception):
    """No executed round matches the given key hash."""


@dataclass(frozen=True)
class WrappedResult:
    """Attested, encrypted outputs of one execution round."""

    enc_diff: Ciphertext
    enc_out: Ciphertext
    cycles_done: int
    key_hash: Digest
    terminal: bool
    attestation: Signature


@dataclass(frozen=True)
class AttestationRecord:
    """Requester-side verification data, obtained before the protocol starts."""

    expected_measurement: Digest
    attestation_address: bytes


@dataclass(eq=False)
class EnclaveHandle:
    measurement: Digest
    memory_limit: int
    enter_exit_cost: int
    per_cycle_cost: int
    call_counter: int = 0
    cycles_total: int = 0
    _workload: Workload = field(repr=False, default=None)
    _attestation: SigningIdentity = field(repr=False, default=None)
    _rng: random.Random = field(repr=False, default=None)
    # Ephemeral round keys stay inside the enclave session; the host only
    # sees results through the encrypted attested outputs until release.
    _keys: dict[bytes, SymmetricKey] = field(repr=False, default_factory=dict)

    @property
    def attestation_address(self) -> bytes:
        return self._attestation.address

    def attestation_record(self) -> AttestationRecord:
        return AttestationRecord(expected_measurement=self.measurement,
                                 attestation_address=self._attestation.address)


def enclave_load(p: Workload, rng: random.Random,
                 memory_limit: int = DEFAULT_MEMORY_LIMIT,
                 enter_exit_cost: int = 0, per_cycle_cost: int = 0) -> EnclaveHandle:
    """Load a workload; the measurement identifies exactly its code identity."""
    return EnclaveHandle(
        measurement=crypto.hash_bytes(p.code_identity.encode()),
        memory_limit=memory_limit,
        enter_exit_cost=enter_exit_cost,
        per_cycle_cost=per_cycle_cost,
        _workload=p,
        _attestation=SigningIdentity.from_rng(rng),
        _rng=rng,
    )


def attested_digest(measurement: Digest, enc_diff: Ciphertext, enc_out: Ciphertext,
                    cycles_done: int, key_hash: Digest, terminal: bool) -> Digest:
    """Canonical fixed-order encoding of the attested fields, then hashed."""
    encoded = (
        measurement.data
        + pack_bytes(enc_diff.payload) + pack_u64(enc_diff.length_hint)
        + pack_bytes(enc_out.payload) + pack_u64(enc_out.length_hint)
        + pack_u64(cycles_done)
        + key_hash.data
        + pack_u8(1 if terminal else 0)
    )
    return crypto.hash_bytes(encoded)


def wrapper_execute(h: EnclaveHandle, s: MState, c: int,
                    mode: str = MODE_DIFF) -> WrappedResult:
    """Run one round inside the boundary and attest the encrypted outputs."""
    if mode not in (MODE_DIFF, MODE_FULL_STATE):
        raise ValueError(f"unknown execution mode {mode!r}")
    required = len(s.blob) + h._workload.working_set(s)
    if required > h.memory_limit:
        raise MemoryLimitExceeded(
            f"round needs {required} bytes, enclave limit is {h.memory_limit}")

    result = step(h._workload, s, c)
    key = crypto.generate_key(h._rng)
    key_hash = crypto.hash_bytes(key.data)

    if mode == MODE_DIFF:
        transition = gen_diff(s, result.new_state).encode()
    else:
        transition = result.new_state.to_bytes()
    enc_diff = crypto.encrypt(key, transition)
    enc_out = crypto.encrypt(key, result.out.encode())

    statement = attested_digest(h.measurement, enc_diff, enc_out,
                                result.cycles_done, key_hash, result.terminal)
    h.call_counter += 1
    h.cycles_total += result.cycles_done
    h._keys[key_hash.data] = key
    return WrappedResult(enc_diff=enc_diff, enc_out=enc_out,
                         cycles_done=result.cycles_done, key_hash=key_hash,
                         terminal=result.terminal,
                         attestation=crypto.sign(h._attestation, statement))


def reveal_key(h: EnclaveHandle, key_hash: Digest) -> SymmetricKey:
    """Release the ephemeral key of an executed round, identified by its hash."""
    try:
        return h._keys[key_hash.data]
    except KeyError:
        raise UnknownRound(f"no round with key hash {key_hash.hex()[:16]}...") from None


def verify_attested(r: WrappedResult, expected_measurement: Digest,
                    attestation_address: bytes) -> bool:
    """True iff the result was attested by the enclave with that measurement."""
    statement = attested_digest(expected_measurement, r.enc_diff, r.enc_out,
                                r.cycles_done, r.key_hash, r.terminal)
    return crypto.check_sig(statement, r.attestation, attestation_address)


@dataclass(frozen=True)
class EnclaveOverhead:
    enter_exit_cost: int
    per_cycle_cost: int

    def total(self, calls: int, cycles: int) -> int:
        return calls * self.enter_exit_cost + cycles * self.per_cycle_cost


def overhead_model(h: EnclaveHandle) -> EnclaveOverhead:
    return EnclaveOverhead(enter_exit_cost=h.enter_exit_cost,
                           per_cycle_cost=h.per_cycle_cost)


def total_enclave_time(h: EnclaveHandle) -> int:
    """Simulated time spent in the enclave so far."""
    return overhead_model(h).total(h.call_counter, h.cycles_total)
