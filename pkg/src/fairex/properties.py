"""Trace-level security properties checked over completed scenario runs.

Three headline guarantees, each phrased as a function returning a list of
violation strings (empty means the property held):

  * payment implies delivery: every coin settled to an executor is
    matched by results the requester decrypted, or can decrypt from the
    key preimage published on-chain by that very settlement;
  * delivery implies payability: the requester never decrypts a round
    without having first signed a channel update covering it, and the
    executor either received that update directly or consumed it in a
    successful close;
  * bounded counterparty risk: at no point has any executor run more
    than one round beyond what has been paid for.

Plus ledger-level safety that must hold regardless of behaviour:
conservation, payout capped by deposit, timeout refunds the whole
deposit, and successful closes always publish the key preimage.
"""

from __future__ import annotations

from . import crypto
from .scenario import ScenarioRun


def check_payment_implies_delivery(run: ScenarioRun) -> list[str]:
    violations = []
    ledger = run.world.ledger
    requester = run.requester

    closes = [r for r in ledger.receipts if r.method == "close_channel" and r.ok]
    total_paid = sum(r.details["paid"] for r in closes)
    if total_paid == 0:
        return violations

    signed_pairs = {(e.data["amount"], e.data["key_hash"])
                    for e in run.trace.of_kind("update_signed")}
    for receipt in closes:
        paid = receipt.details["paid"]
        preimage = ledger.published_key(receipt.contract_id)
        if preimage is None:
            violations.append("successful close without a published key preimage")
            continue
        key_hash = crypto.hash_bytes(preimage.data)
        if (paid, key_hash.hex()) not in signed_pairs:
            violations.append(
                f"settled {paid} coins on a (amount, key hash) pair the "
                f"requester never signed")
        if key_hash.data not in requester.received_results:
            violations.append(
                f"settled {paid} coins for a result the requester never "
                f"received; the published key decrypts nothing it holds")

    executed_value = requester.cfg.rate * sum(
        e.data["cycles"] for e in run.trace.of_kind("round_executed"))
    if total_paid > executed_value:
        violations.append(
            f"settled {total_paid} coins exceeds {executed_value} coins of "
            f"cycles actually executed")
    return violations


def check_delivery_implies_payability(run: ScenarioRun) -> list[str]:
    violations = []
    ledger = run.world.ledger
    signed = [(e.tick, e.data["amount"]) for e in run.trace.of_kind("update_signed")]
    accepted = {e.data["amount"] for e in run.trace.of_kind("update_accepted")}
    paid_on_chain = {r.details["paid"] for r in ledger.receipts
                     if r.method == "close_channel" and r.ok}

    for event in run.trace.of_kind("round_confirmed"):
        balance = event.data["balance"]
        signed_before = [amount for tick, amount in signed
                         if tick <= event.tick and amount == balance]
        if not signed_before:
            violations.append(
                f"requester decrypted a round at balance {balance} without "
                f"having signed an update for it")
        if balance not in accepted and balance not in paid_on_chain:
            violations.append(
                f"requester decrypted a round at balance {balance} that the "
                f"executor neither received nor settled")
    return violations


def check_unpaid_round_bound(run: ScenarioRun) -> list[str]:
    violations = []
    per_executor: dict[str, int] = {}
    worst: dict[str, int] = {}
    for event in run.trace.events:
        if event.kind == "round_executed":
            per_executor[event.actor] = per_executor.get(event.actor, 0) + 1
        elif event.kind == "update_accepted":
            per_executor[event.actor] = per_executor.get(event.actor, 0) - 1
        else:
            continue
        worst[event.actor] = max(worst.get(event.actor, 0), per_executor[event.actor])
    for actor, bound in worst.items():
        if bound > 1:
            violations.append(
                f"{actor} ran {bound} rounds beyond the last paid update")
    return violations


def check_ledger_safety(run: ScenarioRun) -> list[str]:
    violations = []
    ledger = run.world.ledger
    if ledger.total_supply() != ledger.minted_total():
        violations.append(
            f"coin conservation broken: supply {ledger.total_supply()} vs "
            f"minted {ledger.minted_total()}")
    for receipt in ledger.receipts:
        channel = ledger.channel(receipt.contract_id) if receipt.contract_id else None
        if receipt.method == "close_channel" and receipt.ok:
            if channel is not None and receipt.details["paid"] > channel.deposit:
                violations.append("close paid out more than the deposit")
        if receipt.method == "channel_timeout" and receipt.ok:
            if channel is not None and receipt.details["refund"] != channel.deposit:
                violations.append("timeout refunded less than the full deposit")
    return violations


def check_all(run: ScenarioRun) -> dict[str, list[str]]:
    return {
        "payment_implies_delivery": check_payment_implies_delivery(run),
        "delivery_implies_payability": check_delivery_implies_payability(run),
        "unpaid_round_bound": check_unpaid_round_bound(run),
        "ledger_safety": check_ledger_safety(run),
    }


def violations_of(run: ScenarioRun) -> list[str]:
    flat = []
    for name, items in check_all(run).items():
        flat.extend(f"{name}: {item}" for item in items)
    return flat
