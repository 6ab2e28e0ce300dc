"""Scripted misbehaviour matrix for the fair-exchange properties.

Each entry is one deterministic scenario: either a behaviour policy on
one party (drop, tamper, replay, withhold, underpay, crash at a given
protocol step) or a network fault script.  The suite runs every entry,
checks the trace properties on each, and additionally pins the expected
settlement outcome so a silent behaviour regression is caught even when
no property is violated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import crypto
from .crypto import Signature
from .netsim import Drop, Match, Partition, Replay, Tamper
from .properties import violations_of
from .protocol import ExecutorPolicy, RequesterPolicy, RoundResult
from .scenario import ScenarioConfig, ScenarioRun, run_scenario
from .tee import WrappedResult


def _base_config(seed: int = 100, n_executors: int = 1) -> ScenarioConfig:
    return ScenarioConfig(workload="life", workload_params={"grid": 8},
                          total_cycles=60, cycles_per_round=20, rate=1,
                          timeout_ticks=30_000, patience=3_000, seed=seed,
                          n_executors=n_executors)


# -- requester behaviours ------------------------------------------------------


class _SilentAfterRequest(RequesterPolicy):
    def crash_at(self, point, round_index):
        return point == "after_request"


class _NeverFundsChannel(RequesterPolicy):
    def skip_channel(self):
        return True


class _UnderfundsDeposit(RequesterPolicy):
    def channel_args(self, args):
        return {**args, "deposit": args["deposit"] // 2}


class _WrongExecutorAddress(RequesterPolicy):
    def channel_args(self, args):
        return {**args, "addr_e": crypto.hash_bytes(b"nobody").data[-20:]}


class _PastTimeout(RequesterPolicy):
    def channel_args(self, args):
        return {**args, "timeout": 20}  # before the init executes: rejected


class _TightTimeout(RequesterPolicy):
    # Leaves ~350 ticks of channel lifetime (base config opens with 30k):
    # valid for the ledger but too close for the executor to settle safely.
    def channel_args(self, args):
        return {**args, "timeout": args["timeout"] - 29_650}


class _RefusesToSignUpdates(RequesterPolicy):
    def suppress_update(self, round_index):
        return True


class _Underpays(RequesterPolicy):
    def update_amount(self, round_index, amount):
        return amount - 1


class _Overpays(RequesterPolicy):
    def update_amount(self, round_index, amount):
        return amount + 1


class _CorruptsUpdateSignature(RequesterPolicy):
    def corrupt_update_signature(self, round_index):
        return True


class _SignsWrongKeyHash(RequesterPolicy):
    def update_key_hash(self, round_index, key_hash):
        return crypto.hash_bytes(b"not the round key")


class _ReplaysOldUpdate(RequesterPolicy):
    def replay_update(self, round_index):
        return round_index == 1


class _CrashesAfterUpdate(RequesterPolicy):
    def crash_at(self, point, round_index):
        return point == "after_update" and round_index == 0


class _CrashesAfterKey(RequesterPolicy):
    def crash_at(self, point, round_index):
        return point == "after_key" and round_index == 1


class _DoubleContinue(RequesterPolicy):
    def duplicate_continue(self, round_index):
        return round_index == 0


class _PrematureTimeout(RequesterPolicy):
    def premature_timeout(self, round_index):
        return round_index == 1


class _StallsMidRun(RequesterPolicy):
    def suppress_continue(self, round_index):
        return round_index == 1


# -- executor behaviours -------------------------------------------------------


class _RejectsRequest(ExecutorPolicy):
    def respond_to_request(self):
        return "reject"


class _IgnoresRequest(ExecutorPolicy):
    def respond_to_request(self):
        return "silent"


class _DiesAfterAccept(ExecutorPolicy):
    def crash_at(self, point, round_index):
        return point == "after_accept"


class _NeverSendsResult(ExecutorPolicy):
    def suppress_round_result(self, round_index):
        return True


class _InflatesCyclesDone(ExecutorPolicy):
    def tamper_result(self, round_index, result):
        return dataclasses.replace(result, cycles_done=result.cycles_done + 1)


class _TampersPayload(ExecutorPolicy):
    def tamper_result(self, round_index, result):
        payload = bytearray(result.enc_out.payload)
        payload[0] ^= 1
        return dataclasses.replace(
            result, enc_out=crypto.Ciphertext(bytes(payload),
                                              result.enc_out.length_hint))


class _ForgesAttestation(ExecutorPolicy):
    def tamper_result(self, round_index, result):
        fake = crypto.sign(crypto.SigningIdentity.from_seed(bytes(range(32))),
                           result.key_hash)
        return dataclasses.replace(result, attestation=fake)


class _ReplaysOldResult(ExecutorPolicy):
    def replay_previous_result(self, round_index):
        return round_index == 1


class _WithholdsKeyButSettles(ExecutorPolicy):
    def withhold_key(self, round_index):
        return True


class _WithholdsKeyAndVanishes(ExecutorPolicy):
    def withhold_key(self, round_index):
        return True

    def suppress_settle(self):
        return True


class _RevealsWrongKey(ExecutorPolicy):
    def wrong_key(self, round_index):
        return True


class _SettlesEarly(ExecutorPolicy):
    def settle_immediately_after_round(self, round_index):
        return round_index == 0


class _SettlesWithStaleUpdate(ExecutorPolicy):
    def settle_with_stale_update(self):
        return True


class _OverclaimsAtClose(ExecutorPolicy):
    def overclaim_extra(self):
        return 10


class _DiesMidSession(ExecutorPolicy):
    def crash_at(self, point, round_index):
        return point == "after_reveal" and round_index == 0


# -- network faults -------------------------------------------------------------


def _tamper_round_result(envelope):
    body: RoundResult = envelope.body
    payload = bytearray(body.result.enc_diff.payload)
    payload[-1] ^= 0x40
    forged: WrappedResult = dataclasses.replace(
        body.result, enc_diff=crypto.Ciphertext(bytes(payload),
                                                body.result.enc_diff.length_hint))
    return dataclasses.replace(envelope, body=RoundResult(result=forged))


def _zero_update_signature(envelope):
    update = envelope.body.update
    broken = dataclasses.replace(update, sig=Signature(bytes(96)))
    return dataclasses.replace(envelope, body=type(envelope.body)(update=broken))


@dataclass
class Behaviour:
    name: str
    side: str                      # "requester" | "executor" | "network"
    step: str                      # protocol step the misbehaviour targets
    description: str
    expected_outcomes: tuple
    requester_policy: Optional[RequesterPolicy] = None
    executor_policy: Optional[ExecutorPolicy] = None
    faults: list = field(default_factory=list)
    n_executors: int = 1
    configure: Optional[Callable[[ScenarioConfig], None]] = None


def behaviour_matrix() -> list[Behaviour]:
    return [
        Behaviour("requester-silent-after-request", "requester", "setup",
                  "goes offline right after sending the request",
                  ("stuck-requested",), requester_policy=_SilentAfterRequest()),
        Behaviour("requester-never-funds-channel", "requester", "setup",
                  "accepts the deal but never opens the channel",
                  ("aborted",), requester_policy=_NeverFundsChannel()),
        Behaviour("requester-underfunds-deposit", "requester", "setup",
                  "opens the channel with half the required deposit",
                  ("refunded",), requester_policy=_UnderfundsDeposit()),
        Behaviour("requester-wrong-executor-address", "requester", "setup",
                  "opens the channel naming a different executor",
                  ("refunded",), requester_policy=_WrongExecutorAddress()),
        Behaviour("requester-past-timeout", "requester", "setup",
                  "opens the channel with an already-expired timeout",
                  ("aborted",), requester_policy=_PastTimeout()),
        Behaviour("requester-tight-timeout", "requester", "setup",
                  "opens the channel with a timeout too close to settle",
                  ("refunded",), requester_policy=_TightTimeout()),
        Behaviour("requester-refuses-updates", "requester", "payment",
                  "never signs any channel update",
                  ("refunded",), requester_policy=_RefusesToSignUpdates()),
        Behaviour("requester-underpays", "requester", "payment",
                  "signs one coin less than owed",
                  ("refunded",), requester_policy=_Underpays()),
        Behaviour("requester-overpays", "requester", "payment",
                  "signs one coin more than owed",
                  ("refunded",), requester_policy=_Overpays()),
        Behaviour("requester-bad-update-signature", "requester", "payment",
                  "sends updates with corrupted signatures",
                  ("refunded",), requester_policy=_CorruptsUpdateSignature()),
        Behaviour("requester-wrong-key-hash", "requester", "payment",
                  "signs updates binding the wrong key hash",
                  ("refunded",), requester_policy=_SignsWrongKeyHash()),
        Behaviour("requester-replays-old-update", "requester", "payment",
                  "replays the previous round's signed update",
                  ("aborted",), requester_policy=_ReplaysOldUpdate()),
        Behaviour("requester-crashes-after-update", "requester", "payment",
                  "signs an update then goes offline before the key arrives",
                  ("stuck-await_key",), requester_policy=_CrashesAfterUpdate()),
        Behaviour("requester-crashes-after-key", "requester", "execution",
                  "absorbs one paid round then goes offline",
                  ("stuck-executing", "stuck-await_key"),
                  requester_policy=_CrashesAfterKey()),
        Behaviour("requester-double-continue", "requester", "execution",
                  "asks for a second round while the first is unpaid",
                  ("settled",), requester_policy=_DoubleContinue()),
        Behaviour("requester-premature-timeout", "requester", "settlement",
                  "calls the timeout refund long before expiry",
                  ("settled",), requester_policy=_PrematureTimeout()),
        Behaviour("requester-stalls-mid-run", "requester", "execution",
                  "goes silent between rounds",
                  ("aborted",), requester_policy=_StallsMidRun()),
        Behaviour("executor-rejects-request", "executor", "setup",
                  "declines the request",
                  ("rejected",), executor_policy=_RejectsRequest()),
        Behaviour("executor-ignores-request", "executor", "setup",
                  "never answers the request",
                  ("aborted",), executor_policy=_IgnoresRequest()),
        Behaviour("executor-dies-after-accept", "executor", "setup",
                  "accepts then goes offline before any round",
                  ("refunded",), executor_policy=_DiesAfterAccept()),
        Behaviour("executor-never-sends-result", "executor", "execution",
                  "executes rounds but never returns results",
                  ("refunded",), executor_policy=_NeverSendsResult()),
        Behaviour("executor-inflates-cycles", "executor", "execution",
                  "reports more cycles than attested",
                  ("refunded",), executor_policy=_InflatesCyclesDone()),
        Behaviour("executor-tampers-payload", "executor", "execution",
                  "flips a bit in the encrypted output",
                  ("refunded",), executor_policy=_TampersPayload()),
        Behaviour("executor-forges-attestation", "executor", "execution",
                  "re-signs the result with a non-enclave key",
                  ("refunded",), executor_policy=_ForgesAttestation()),
        Behaviour("executor-replays-old-result", "executor", "execution",
                  "resends the first round's result instead of executing",
                  ("aborted",), executor_policy=_ReplaysOldResult()),
        Behaviour("executor-withholds-key-settles", "executor", "key-release",
                  "never reveals keys off-chain but settles on-chain",
                  ("aborted",), executor_policy=_WithholdsKeyButSettles()),
        Behaviour("executor-withholds-key-vanishes", "executor", "key-release",
                  "never reveals keys and never settles",
                  ("refunded",), executor_policy=_WithholdsKeyAndVanishes()),
        Behaviour("executor-reveals-wrong-key", "executor", "key-release",
                  "sends a key that does not match the hash",
                  ("aborted",), executor_policy=_RevealsWrongKey()),
        Behaviour("executor-settles-early", "executor", "settlement",
                  "closes the channel after the first paid round",
                  ("settled",), executor_policy=_SettlesEarly(), n_executors=2),
        Behaviour("executor-settles-stale-update", "executor", "settlement",
                  "closes with the oldest signed update",
                  ("settled", "completed"),
                  executor_policy=_SettlesWithStaleUpdate()),
        Behaviour("executor-overclaims-at-close", "executor", "settlement",
                  "closes with an inflated amount",
                  ("refunded", "completed"),
                  executor_policy=_OverclaimsAtClose()),
        Behaviour("executor-dies-mid-session", "executor", "execution",
                  "goes offline after the first paid round",
                  ("refunded", "aborted"), executor_policy=_DiesMidSession()),
        Behaviour("network-drops-update", "network", "payment",
                  "the signed update is lost in transit",
                  ("refunded",),
                  faults=[Drop(Match(sender="requester", variant="Update", nth=0))]),
        Behaviour("network-drops-key-reveal", "network", "key-release",
                  "the revealed key is lost in transit",
                  ("aborted",),
                  faults=[Drop(Match(sender="executor-1", variant="KeyReveal", nth=0))]),
        Behaviour("network-tampers-round-result", "network", "execution",
                  "a bit flip in the result in transit",
                  ("refunded",),
                  faults=[Tamper(Match(sender="executor-1", variant="RoundResult",
                                       nth=0), _tamper_round_result,
                                 label="flip-enc-diff-bit")]),
        Behaviour("network-zeroes-update-signature", "network", "payment",
                  "the update signature is zeroed in transit",
                  ("refunded",),
                  faults=[Tamper(Match(sender="requester", variant="Update", nth=0),
                                 _zero_update_signature, label="zero-signature")]),
        Behaviour("network-replays-key-reveal", "network", "key-release",
                  "the key reveal is delivered twice",
                  ("settled",),
                  faults=[Replay(Match(sender="executor-1", variant="KeyReveal",
                                       nth=0), delay=40)]),
        Behaviour("network-partition-at-setup", "network", "setup",
                  "all traffic dropped during the setup window",
                  ("aborted",), faults=[Partition(start_tick=0, end_tick=400)]),
    ]


@dataclass
class BehaviourResult:
    behaviour: Behaviour
    outcome: str
    violations: list[str]
    unexpected_outcome: bool

    @property
    def ok(self) -> bool:
        return not self.violations and not self.unexpected_outcome


def run_behaviour(behaviour: Behaviour, seed: int = 100) -> tuple[BehaviourResult, ScenarioRun]:
    cfg = _base_config(seed=seed, n_executors=behaviour.n_executors)
    if behaviour.configure:
        behaviour.configure(cfg)
    run = run_scenario(cfg, requester_policy=behaviour.requester_policy,
                       executor_policies={0: behaviour.executor_policy}
                       if behaviour.executor_policy else None,
                       faults=list(behaviour.faults))
    result = BehaviourResult(
        behaviour=behaviour, outcome=run.outcome,
        violations=violations_of(run),
        unexpected_outcome=run.outcome not in behaviour.expected_outcomes)
    return result, run


def adversary_suite(seed: int = 100) -> list[BehaviourResult]:
    """Run the whole matrix; every entry must hold every property."""
    results = []
    for behaviour in behaviour_matrix():
        result, _ = run_behaviour(behaviour, seed=seed)
        results.append(result)
    return results


def format_suite_report(results: list[BehaviourResult]) -> str:
    lines = ["behaviour\tside\tstep\toutcome\tproperties"]
    for r in results:
        status = "ok" if r.ok else ("violated: " + "; ".join(r.violations)
                                    if r.violations else f"unexpected outcome {r.outcome}")
        lines.append("\t".join([r.behaviour.name, r.behaviour.side,
                                r.behaviour.step, r.outcome, status]))
    return "\n".join(lines) + "\n"
