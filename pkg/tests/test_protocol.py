"""Protocol sessions: message wire format, happy path, recovery paths."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairex import crypto
from fairex.crypto import SigningIdentity, SymmetricKey, hash_bytes
from fairex.exec_model import step
from fairex.ledger import ChannelUpdate
from fairex.protocol import (
    Accept,
    Continue,
    Envelope,
    ExecutorPolicy,
    KeyReveal,
    Reject,
    Request,
    RequesterPolicy,
    RoundResult,
    Terminate,
    Update,
    decode_envelope,
)
from fairex.scenario import ScenarioConfig, run_scenario
from fairex.workloads import create_workload
from fairex.workloads.life import LifeWorkload, random_state
from fairex.tee import enclave_load, wrapper_execute


def small_cfg(**overrides):
    base = dict(workload="life", workload_params={"grid": 8}, total_cycles=60,
                cycles_per_round=20, rate=1, timeout_ticks=30_000,
                patience=3_000, seed=5)
    base.update(overrides)
    return ScenarioConfig(**base)


def oracle_state(cfg):
    p, s0 = create_workload(cfg.workload, cfg.workload_params,
                            crypto.derive_rng(cfg.seed, "workload-state"))
    return step(p, s0, cfg.total_cycles)


class TestWireFormat:
    def example_envelopes(self):
        rng = random.Random(0)
        identity = SigningIdentity.from_rng(rng)
        state = random_state(rng, 6, 6)
        handle = enclave_load(LifeWorkload(), rng)
        result = wrapper_execute(handle, state, 3)
        update = ChannelUpdate(id_contract=bytes(32), amount=7,
                               key_hash=hash_bytes(b"k"),
                               sig=crypto.sign(identity, hash_bytes(b"m")))
        bodies = [
            Request(workload_tag="life", state=state, total_cycles=9, rate=2),
            Accept(),
            Reject(reason="busy"),
            RoundResult(result=result),
            Update(update=update),
            KeyReveal(key_hash=hash_bytes(b"k"), key=SymmetricKey(bytes(32))),
            Continue(cycles=20),
            Terminate(),
        ]
        return [Envelope(sender=identity.address, seq=i + 1,
                         session=bytes(32), body=body)
                for i, body in enumerate(bodies)]

    def test_every_variant_round_trips(self):
        for envelope in self.example_envelopes():
            assert decode_envelope(envelope.encode()) == envelope

    def test_trailing_garbage_rejected(self):
        raw = self.example_envelopes()[1].encode() + b"\x00"
        with pytest.raises(ValueError):
            decode_envelope(raw)

    @given(cycles=st.integers(min_value=0, max_value=2**64 - 1),
           reason=st.text(max_size=300),
           seq=st.integers(min_value=0, max_value=2**32 - 1),
           session=st.binary(min_size=32, max_size=32))
    @settings(max_examples=100, deadline=None)
    def test_fuzzed_fields_round_trip(self, cycles, reason, seq, session):
        sender = b"\x07" * 20
        for body in (Continue(cycles=cycles), Reject(reason=reason)):
            envelope = Envelope(sender=sender, seq=seq, session=session, body=body)
            assert decode_envelope(envelope.encode()) == envelope


class TestHappyPath:
    def test_three_rounds_settle(self):
        run = run_scenario(small_cfg())
        assert run.outcome == "settled"
        assert run.metrics.rounds == 3
        amounts = [e.data["amount"] for e in run.trace.of_kind("update_signed")]
        assert amounts == [20, 40, 60]  # cumulative totals, not deltas

    def test_final_state_matches_single_run_oracle(self):
        cfg = small_cfg()
        run = run_scenario(cfg)
        oracle = oracle_state(cfg)
        assert run.requester.current_state == oracle.new_state
        assert tuple(run.requester.out_messages) == oracle.out.messages

    def test_both_parties_agree_on_balance_each_round(self):
        run = run_scenario(small_cfg())
        confirmed = [e.data["balance"] for e in run.trace.of_kind("round_confirmed")]
        accepted = [e.data["amount"] for e in run.trace.of_kind("update_accepted")]
        assert confirmed == accepted == [20, 40, 60]

    def test_executor_paid_and_channel_closed(self):
        run = run_scenario(small_cfg())
        ledger = run.world.ledger
        closes = [r for r in ledger.receipts if r.method == "close_channel" and r.ok]
        assert len(closes) == 1
        assert closes[0].details == {"paid": 60, "refund": 0}
        assert ledger.channel(closes[0].contract_id).status == "closed"

    def test_default_deposit_covers_rate_times_cycles(self):
        run = run_scenario(small_cfg(rate=3))
        channel = next(iter(run.world.ledger.contracts.values()))
        assert channel.deposit == 3 * 60

    def test_three_rounds_of_200_settle_600_and_refund_rest(self):
        run = run_scenario(small_cfg(total_cycles=600, cycles_per_round=200,
                                     deposit=1000))
        amounts = [e.data["amount"] for e in run.trace.of_kind("update_signed")]
        assert amounts == [200, 400, 600]
        close = next(r for r in run.world.ledger.receipts
                     if r.method == "close_channel" and r.ok)
        assert close.details == {"paid": 600, "refund": 400}

    def test_ocr_session_collects_letters_in_order(self):
        cfg = small_cfg(workload="ocr", workload_params={"images": 12},
                        total_cycles=12, cycles_per_round=5)
        run = run_scenario(cfg)
        assert run.outcome == "settled"
        oracle = oracle_state(cfg)
        assert tuple(run.requester.out_messages) == oracle.out.messages
        assert len(run.requester.out_messages) == 12

    def test_terminal_workload_ends_session_early(self):
        # 10 images but a 60-cycle budget: terminal flag stops the session.
        cfg = small_cfg(workload="ocr", workload_params={"images": 10},
                        total_cycles=60, cycles_per_round=25)
        run = run_scenario(cfg)
        assert run.outcome == "settled"
        assert run.requester.confirmed_cycles == 10
        assert run.requester.terminal_seen


class TestCounterpartyRiskBound:
    def test_second_request_refused_while_unpaid(self):
        class DoubleContinue(RequesterPolicy):
            def duplicate_continue(self, round_index):
                return round_index == 0

        run = run_scenario(small_cfg(), requester_policy=DoubleContinue())
        assert len(run.trace.of_kind("refused_unpaid")) == 1
        assert run.outcome == "settled"  # duplicate ignored, session completes

    def test_unpaid_executor_stops_after_one_round(self):
        class NeverPays(RequesterPolicy):
            def suppress_update(self, round_index):
                return True

        run = run_scenario(small_cfg(), requester_policy=NeverPays())
        assert run.metrics.rounds == 1
        assert run.outcome == "refunded"


class TestUpdateValidation:
    def test_wrong_amount_rejected_without_reveal(self):
        class Underpay(RequesterPolicy):
            def update_amount(self, round_index, amount):
                return amount - 1

        run = run_scenario(small_cfg(), requester_policy=Underpay())
        reasons = [e.data["reason"] for e in run.trace.of_kind("rejected_update")]
        assert reasons == ["WrongAmount"]
        assert run.trace.of_kind("key_revealed") == []

    def test_correct_amount_but_old_key_hash_rejected(self):
        class ReplayPreviousKeyHash(RequesterPolicy):
            def __init__(self):
                self.previous = None

            def update_key_hash(self, round_index, key_hash):
                stale, self.previous = self.previous, key_hash
                return stale if round_index > 0 else key_hash

        run = run_scenario(small_cfg(), requester_policy=ReplayPreviousKeyHash())
        reasons = [e.data["reason"] for e in run.trace.of_kind("rejected_update")]
        assert "KeyHashMismatch" in reasons

    def test_bad_signature_rejected(self):
        class BadSig(RequesterPolicy):
            def corrupt_update_signature(self, round_index):
                return True

        run = run_scenario(small_cfg(), requester_policy=BadSig())
        reasons = [e.data["reason"] for e in run.trace.of_kind("rejected_update")]
        assert reasons == ["BadUpdateSignature"]


class TestAttestationGuard:
    def test_tampered_result_never_gets_an_update(self):
        import dataclasses

        class Inflate(ExecutorPolicy):
            def tamper_result(self, round_index, result):
                return dataclasses.replace(result, cycles_done=result.cycles_done + 5)

        run = run_scenario(small_cfg(), executor_policies={0: Inflate()})
        assert run.trace.of_kind("attestation_failed")
        assert run.trace.of_kind("update_signed") == []
        assert run.outcome == "refunded"


class TestRecoveryPaths:
    def test_executor_withholds_key_requester_reads_ledger(self):
        class Withhold(ExecutorPolicy):
            def withhold_key(self, round_index):
                return True

        run = run_scenario(small_cfg(), executor_policies={0: Withhold()})
        assert run.trace.of_kind("key_from_ledger")
        assert run.requester.confirmed_cycles == 20
        closes = [r for r in run.world.ledger.receipts
                  if r.method == "close_channel" and r.ok]
        assert closes[0].details["paid"] == 20

    def test_silent_executor_full_refund_at_timeout(self):
        class DeadAfterAccept(ExecutorPolicy):
            def crash_at(self, point, round_index):
                return point == "after_accept"

        run = run_scenario(small_cfg(), executor_policies={0: DeadAfterAccept()})
        assert run.outcome == "refunded"
        refunds = run.trace.of_kind("refunded")
        assert refunds[0].data["amount"] == 60  # the full deposit

    def test_transfer_resumes_byte_exact(self):
        class DiesMidSession(ExecutorPolicy):
            def crash_at(self, point, round_index):
                return point == "after_reveal" and round_index == 0

        cfg = small_cfg(n_executors=2)
        run = run_scenario(cfg, executor_policies={0: DiesMidSession()})
        assert run.outcome == "settled"
        assert len(run.trace.of_kind("transfer")) == 1
        oracle = oracle_state(cfg)
        assert run.requester.current_state == oracle.new_state
        assert tuple(run.requester.out_messages) == oracle.out.messages

    def test_premature_timeout_attempt_is_harmless(self):
        class Premature(RequesterPolicy):
            def premature_timeout(self, round_index):
                return round_index == 1

        run = run_scenario(small_cfg(), requester_policy=Premature())
        assert run.trace.of_kind("premature_timeout_rejected")
        assert run.outcome == "settled"

    def test_network_duplicate_is_dropped_by_sequence_guard(self):
        from fairex.netsim import Match, Replay
        run = run_scenario(small_cfg(), faults=[
            Replay(Match(sender="executor-1", variant="KeyReveal", nth=0), delay=10)])
        assert run.trace.of_kind("stale_message")
        assert run.outcome == "settled"
