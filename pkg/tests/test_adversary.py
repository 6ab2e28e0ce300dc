"""The misbehaviour matrix and the property checkers themselves."""

from fairex.adversary import adversary_suite, behaviour_matrix, run_behaviour
from fairex.properties import (
    check_payment_implies_delivery,
    check_unpaid_round_bound,
    violations_of,
)
from fairex.netsim import TraceEvent
from fairex.scenario import ScenarioConfig, run_scenario


class TestMatrixShape:
    def test_at_least_twenty_behaviours(self):
        assert len(behaviour_matrix()) >= 20

    def test_both_parties_and_the_network_are_covered(self):
        sides = {b.side for b in behaviour_matrix()}
        assert sides == {"requester", "executor", "network"}

    def test_every_protocol_step_is_covered(self):
        steps = {b.step for b in behaviour_matrix()}
        assert steps == {"setup", "execution", "payment", "key-release", "settlement"}

    def test_names_are_unique(self):
        names = [b.name for b in behaviour_matrix()]
        assert len(names) == len(set(names))


class TestSuite:
    def test_no_property_violations_anywhere(self):
        results = adversary_suite()
        failed = [(r.behaviour.name, r.violations) for r in results if r.violations]
        assert failed == []

    def test_outcomes_match_expectations(self):
        results = adversary_suite()
        surprises = [(r.behaviour.name, r.outcome) for r in results
                     if r.unexpected_outcome]
        assert surprises == []

    def test_suite_is_deterministic(self):
        first = [(r.behaviour.name, r.outcome) for r in adversary_suite(seed=4)]
        second = [(r.behaviour.name, r.outcome) for r in adversary_suite(seed=4)]
        assert first == second


class TestCheckersAreNotVacuous:
    """Doctor real traces to prove each checker can actually fire."""

    def happy_run(self):
        return run_scenario(ScenarioConfig(
            workload="life", workload_params={"grid": 8}, total_cycles=40,
            cycles_per_round=20, timeout_ticks=30_000, seed=6))

    def test_clean_run_has_no_violations(self):
        assert violations_of(self.happy_run()) == []

    def test_payment_checker_fires_on_unsigned_settlement(self):
        run = self.happy_run()
        run.trace.events = [e for e in run.trace.events
                            if e.kind != "update_signed"]
        problems = check_payment_implies_delivery(run)
        assert any("never signed" in p for p in problems)

    def test_payment_checker_fires_on_undelivered_result(self):
        run = self.happy_run()
        run.requester.received_results.clear()
        problems = check_payment_implies_delivery(run)
        assert any("never received" in p for p in problems)

    def test_bound_checker_fires_on_extra_unpaid_rounds(self):
        run = self.happy_run()
        for _ in range(2):
            run.trace.events.append(TraceEvent(
                tick=99_999, kind="round_executed", actor="executor-1",
                data={"round": 9, "cycles": 20, "time_ticks": 0, "terminal": False}))
        problems = check_unpaid_round_bound(run)
        assert any("beyond the last paid update" in p for p in problems)


class TestIndividualBehaviours:
    def test_withholding_executor_cannot_earn_without_publishing(self):
        matrix = {b.name: b for b in behaviour_matrix()}
        result, run = run_behaviour(matrix["executor-withholds-key-settles"])
        assert result.ok
        ledger = run.world.ledger
        closes = [r for r in ledger.receipts if r.method == "close_channel" and r.ok]
        assert closes and ledger.published_key(closes[0].contract_id) is not None

    def test_rejecting_executor_costs_nothing(self):
        matrix = {b.name: b for b in behaviour_matrix()}
        _, run = run_behaviour(matrix["executor-rejects-request"])
        assert run.world.ledger.receipts == []

    def test_overclaiming_close_fails_signature_check(self):
        matrix = {b.name: b for b in behaviour_matrix()}
        _, run = run_behaviour(matrix["executor-overclaims-at-close"])
        failures = [r for r in run.world.ledger.receipts
                    if r.method == "close_channel"]
        assert failures and failures[0].result == "BadSignatureR"
