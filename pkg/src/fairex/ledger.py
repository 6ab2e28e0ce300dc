"""Simulated blockchain: logical time, balances, liveness, channel contract.

The ledger is a single serialized state machine.  Submitted transactions
execute in submission order, each exactly `liveness_bound` ticks after
submission, and every executed transaction charges the submitter a
method fee routed to a fee sink so coin conservation stays checkable.

The payment channel is unidirectional: the requester deposits coins at
creation, off-chain signed updates raise the amount owed to the
executor, and `close_channel` settles only against the preimage of the
key hash bound into the final update.  A successful close publishes the
preimage on the ledger, where any party can read it: this is the
fair-exchange release path.  After the timeout, `channel_timeout`
refunds the whole deposit to the requester and destroys the contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import crypto
from .crypto import Digest, Signature, SymmetricKey
from .wire import pack_u64

STATUS_OPEN = "open"
STATUS_CLOSED = "closed"       # settled via close_channel
STATUS_DESTROYED = "destroyed"  # reclaimed via channel_timeout


class LedgerError(Exception):
    """Base for contract-level failures; leaves contract state unchanged."""


class InsufficientFunds(LedgerError):
    pass


class InvalidTimeout(LedgerError):
    pass


class SenderMismatch(LedgerError):
    pass


class BadSignatureR(LedgerError):
    pass


class BadSignatureE(LedgerError):
    pass


class PreimageMismatch(LedgerError):
    pass


class Overdraw(LedgerError):
    pass


class ChannelNotOpen(LedgerError):
    pass


class TooEarly(LedgerError):
    pass


@dataclass(frozen=True)
class FeeSchedule:
    """Per-method gas costs and reporting constants.

    One coin is one Gwei; `usd_per_coin` pegs reports to the April 2018
    currency price so the documented USD figures reproduce exactly.
    """

    creation_gas: int = 358_600
    init_gas: int = 81_053
    close_gas: int = 114_757
    timeout_gas: int = 21_732
    gas_price: int = 2
    usd_per_coin: float = 6.4138e-7

    def gas_for(self, method: str) -> int:
        return {
            "create_contract": self.creation_gas,
            "init_channel": self.init_gas,
            "close_channel": self.close_gas,
            "channel_timeout": self.timeout_gas,
        }[method]

    def fee_for(self, method: str) -> int:
        return self.gas_for(method) * self.gas_price

    def usd_for_gas(self, gas: int) -> float:
        return round(gas * self.gas_price * self.usd_per_coin, 2)


@dataclass(eq=False)
class PaymentChannel:
    id_contract: bytes
    addr_r: bytes
    addr_e: bytes
    timeout: int
    deposit: int
    status: str = STATUS_OPEN


@dataclass(frozen=True)
class ChannelUpdate:
    """Off-chain signed balance message: (contract, owed amount, key hash)."""

    id_contract: bytes
    amount: int
    key_hash: Digest
    sig: Signature


def state_hash(id_contract: bytes, amount: int, key_hash: Digest) -> Digest:
    """Digest both parties sign to authorize a channel balance."""
    if len(id_contract) != 32:
        raise ValueError("contract id must be 32 bytes")
    return crypto.hash_bytes(id_contract + pack_u64(amount) + key_hash.data)


@dataclass(frozen=True)
class Receipt:
    submitted_tick: int
    executed_tick: int
    method: str
    contract_id: Optional[bytes]
    submitter: bytes
    fee: int
    result: str                      # "ok" or the error class name
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.result == "ok"


@dataclass(eq=False)
class _PendingTx:
    seq: int
    submitted_tick: int
    method: str
    submitter: bytes
    args: dict


class Ledger:
    def __init__(self, fee_schedule: FeeSchedule | None = None, liveness_bound: int = 3):
        self.fees = fee_schedule or FeeSchedule()
        self.liveness_bound = liveness_bound
        self.now = 0
        self.balances: dict[bytes, int] = {}
        self.fee_sink = 0
        self.contracts: dict[bytes, PaymentChannel] = {}
        self.published: dict[bytes, SymmetricKey] = {}
        self.receipts: list[Receipt] = []
        self.tx_log: list[str] = []
        self._pending: list[_PendingTx] = []
        self._seq = 0
        self._minted = 0

    # -- funds ------------------------------------------------------------

    def mint(self, addr: bytes, coins: int) -> None:
        """Test/scenario setup only; tracked so conservation stays checkable."""
        self.balances[addr] = self.balances.get(addr, 0) + coins
        self._minted += coins

    def balance(self, addr: bytes) -> int:
        return self.balances.get(addr, 0)

    def total_supply(self) -> int:
        held = sum(ch.deposit for ch in self.contracts.values()
                   if ch.status == STATUS_OPEN)
        return sum(self.balances.values()) + held + self.fee_sink

    def minted_total(self) -> int:
        return self._minted

    # -- transaction queue -------------------------------------------------

    def submit(self, method: str, submitter: bytes, args: dict | None = None) -> int:
        """Queue a transaction; returns the tick it will execute at."""
        self._seq += 1
        self._pending.append(_PendingTx(seq=self._seq, submitted_tick=self.now,
                                        method=method, submitter=submitter,
                                        args=args or {}))
        return self.now + self.liveness_bound

    def advance_to(self, tick: int) -> list[Receipt]:
        """Move the clock forward, executing every transaction that is due."""
        if tick < self.now:
            raise ValueError("ledger clock cannot move backwards")
        self.now = tick
        return self._drain()

    def advance_time(self, ticks: int) -> list[Receipt]:
        return self.advance_to(self.now + ticks)

    def _drain(self) -> list[Receipt]:
        executed = []
        while self._pending:
            tx = self._pending[0]
            due = tx.submitted_tick + self.liveness_bound
            if due > self.now:
                break
            self._pending.pop(0)
            executed.append(self._execute(tx.method, tx.submitter, tx.args,
                                          submitted_tick=tx.submitted_tick,
                                          exec_tick=due))
        return executed

    def execute_now(self, method: str, submitter: bytes,
                    args: dict | None = None) -> Receipt:
        """Bypass the queue; used by unit tests driving the contract directly."""
        return self._execute(method, submitter, args or {},
                             submitted_tick=self.now, exec_tick=self.now)

    # -- execution ---------------------------------------------------------

    def _execute(self, method: str, submitter: bytes, args: dict,
                 submitted_tick: int, exec_tick: int) -> Receipt:
        fee = self.fees.fee_for(method)
        details: dict = {}
        if self.balance(submitter) < fee:
            result = "InsufficientFunds"
            fee = 0
        else:
            # Gas is consumed whether or not the method's asserts pass.
            self.balances[submitter] -= fee
            self.fee_sink += fee
            try:
                details = self._dispatch(method, submitter, args, exec_tick)
                result = "ok"
            except LedgerError as exc:
                result = type(exc).__name__
                details = {"reason": str(exc)}
        receipt = Receipt(submitted_tick=submitted_tick, executed_tick=exec_tick,
                          method=method, contract_id=args.get("contract_id"),
                          submitter=submitter, fee=fee, result=result,
                          details=details)
        self.receipts.append(receipt)
        self.tx_log.append(self._log_line(receipt, args))
        return receipt

    def _dispatch(self, method: str, submitter: bytes, args: dict,
                  exec_tick: int) -> dict:
        if method == "create_contract":
            return {}
        if method == "init_channel":
            return self._init_channel(submitter, exec_tick, **args)
        if method == "close_channel":
            return self._close_channel(exec_tick, **args)
        if method == "channel_timeout":
            return self._channel_timeout(exec_tick, **args)
        raise LedgerError(f"unknown method {method!r}")

    def _init_channel(self, submitter: bytes, exec_tick: int, *, addr_r: bytes,
                      addr_e: bytes, timeout: int, deposit: int,
                      contract_id: bytes | None = None) -> dict:
        if submitter != addr_r:
            raise SenderMismatch("only the requester address may open its channel")
        if timeout <= exec_tick:
            raise InvalidTimeout(f"timeout {timeout} not after tick {exec_tick}")
        if deposit < 0 or self.balance(addr_r) < deposit:
            raise InsufficientFunds(f"deposit {deposit} exceeds balance")
        cid = contract_id or crypto.hash_bytes(
            addr_r + addr_e + pack_u64(exec_tick) + pack_u64(self._seq)).data
        if cid in self.contracts:
            raise LedgerError("contract id already in use")
        self.balances[addr_r] -= deposit
        self.contracts[cid] = PaymentChannel(id_contract=cid, addr_r=addr_r,
                                             addr_e=addr_e, timeout=timeout,
                                             deposit=deposit)
        return {"contract_id": cid}

    def _close_channel(self, exec_tick: int, *, contract_id: bytes,
                       sig_r: Signature, sig_e: Signature, amount: int,
                       key_hash: Digest, preimage: SymmetricKey) -> dict:
        channel = self.contracts.get(contract_id)
        if channel is None or channel.status != STATUS_OPEN:
            raise ChannelNotOpen("no open channel at this contract id")
        digest = state_hash(contract_id, amount, crypto.hash_bytes(preimage.data))
        if not crypto.check_sig(digest, sig_r, channel.addr_r):
            raise BadSignatureR("requester signature does not verify")
        if not crypto.check_sig(digest, sig_e, channel.addr_e):
            raise BadSignatureE("executor signature does not verify")
        if key_hash != crypto.hash_bytes(preimage.data):
            raise PreimageMismatch("preimage does not hash to the key hash")
        if amount > channel.deposit:
            raise Overdraw(f"amount {amount} exceeds deposit {channel.deposit}")
        self.balances[channel.addr_e] = self.balances.get(channel.addr_e, 0) + amount
        refund = channel.deposit - amount
        self.balances[channel.addr_r] = self.balances.get(channel.addr_r, 0) + refund
        channel.status = STATUS_CLOSED
        self.published[contract_id] = preimage
        return {"paid": amount, "refund": refund}

    def _channel_timeout(self, exec_tick: int, *, contract_id: bytes) -> dict:
        channel = self.contracts.get(contract_id)
        if channel is None or channel.status != STATUS_OPEN:
            raise ChannelNotOpen("no open channel at this contract id")
        if exec_tick < channel.timeout:
            raise TooEarly(f"tick {exec_tick} before timeout {channel.timeout}")
        self.balances[channel.addr_r] = (
            self.balances.get(channel.addr_r, 0) + channel.deposit)
        channel.status = STATUS_DESTROYED
        return {"refund": channel.deposit}

    # -- queries -----------------------------------------------------------

    def channel(self, contract_id: bytes) -> Optional[PaymentChannel]:
        return self.contracts.get(contract_id)

    def published_key(self, contract_id: bytes) -> Optional[SymmetricKey]:
        """Preimage revealed by a successful close; readable by any party."""
        return self.published.get(contract_id)

    # -- logging -----------------------------------------------------------

    @staticmethod
    def _args_digest(args: dict) -> str:
        canon = "|".join(f"{k}={args[k]!r}" for k in sorted(args))
        return crypto.hash_bytes(canon.encode()).hex()[:16]

    def _log_line(self, receipt: Receipt, args: dict) -> str:
        cid = receipt.contract_id.hex()[:16] if receipt.contract_id else "-"
        return "\t".join([
            str(receipt.executed_tick), receipt.method, cid,
            self._args_digest(args), str(receipt.fee), receipt.result,
        ])

    def format_tx_log(self) -> str:
        return "\n".join(self.tx_log) + ("\n" if self.tx_log else "")


def cost_table(fees: FeeSchedule) -> list[tuple[str, int, float]]:
    """Static per-method gas and USD rows."""
    return [
        ("create_contract", fees.creation_gas, fees.usd_for_gas(fees.creation_gas)),
        ("init_channel", fees.init_gas, fees.usd_for_gas(fees.init_gas)),
        ("close_channel", fees.close_gas, fees.usd_for_gas(fees.close_gas)),
        ("channel_timeout", fees.timeout_gas, fees.usd_for_gas(fees.timeout_gas)),
    ]


def report_costs(receipts: list[Receipt], fees: FeeSchedule) -> dict:
    """Cost report for a completed run: schedule rows plus observed totals."""
    observed: dict[str, dict] = {}
    for receipt in receipts:
        row = observed.setdefault(receipt.method, {"count": 0, "fee_coins": 0})
        row["count"] += 1
        row["fee_coins"] += receipt.fee
    total_coins = sum(row["fee_coins"] for row in observed.values())
    full_exchange_usd = round(
        (fees.init_gas + fees.close_gas) * fees.gas_price * fees.usd_per_coin, 2)
    return {
        "table": cost_table(fees),
        "observed": observed,
        "total_fee_coins": total_coins,
        "total_fee_usd": round(total_coins * fees.usd_per_coin, 2),
        "full_exchange_usd": full_exchange_usd,
    }
