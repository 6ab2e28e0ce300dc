"""Config parsing, sweeps, CSV contract, report math, CLI exit codes."""

import pytest

from fairex.cli import main
from fairex.harness import CSV_COLUMNS, expand_sweep, format_csv, parse_csv, run_sweep
from fairex.report import bandwidth_flatness, build_report, enclave_time_ratio, latency_ratio
from fairex.scenario import ConfigError, ScenarioConfig, load_config

GOOD_CONFIG = """
[workload]
name = life
grid = 8

[protocol]
total_cycles = 40
cycles_per_round = 20
rate = 2
timeout_ticks = 30000

[run]
seed = 3
"""


def write_config(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestConfigParsing:
    def test_values_land_in_the_right_fields(self, tmp_path):
        cfg, sweep = load_config(write_config(tmp_path, GOOD_CONFIG))
        assert cfg.workload == "life"
        assert cfg.workload_params == {"grid": 8}
        assert cfg.total_cycles == 40 and cfg.rate == 2 and cfg.seed == 3
        assert sweep == {}

    def test_sweep_lists_parse(self, tmp_path):
        text = GOOD_CONFIG + "\n[sweep]\ncycles_per_round = 10, 20\nseeds = 1, 2, 3\n"
        _, sweep = load_config(write_config(tmp_path, text))
        assert sweep == {"cycles_per_round": [10, 20], "seeds": [1, 2, 3]}

    def test_unknown_field_is_a_config_error(self, tmp_path):
        text = GOOD_CONFIG.replace("rate = 2", "rate = 2\nbogus_field = 1")
        with pytest.raises(ConfigError, match="bogus_field"):
            load_config(write_config(tmp_path, text))

    def test_unknown_section_is_a_config_error(self, tmp_path):
        text = GOOD_CONFIG + "\n[mystery]\nx = 1\n"
        with pytest.raises(ConfigError, match="mystery"):
            load_config(write_config(tmp_path, text))

    def test_missing_file_is_a_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")

    def test_config_hash_tracks_content(self):
        a = ScenarioConfig(seed=1)
        b = ScenarioConfig(seed=2)
        assert a.config_hash() != b.config_hash()
        assert a.config_hash() == ScenarioConfig(seed=1).config_hash()

    def test_every_section_parses(self, tmp_path):
        text = """
[workload]
name = life
grid = 16
packed = true

[protocol]
total_cycles = 100
cycles_per_round = 25
rate = 2
deposit = 500
timeout_ticks = 40000
patience = 5000
mode = full-state
allow_transfer = false

[link]
latency_per_message = 10
bytes_per_tick = 1000
per_message_overhead = 8

[enclave]
enter_exit_cost = 7
per_cycle_cost = 1
memory_limit = 4096

[ledger]
liveness_bound = 5

[fees]
gas_price = 3

[run]
seed = 11
tick_limit = 500000
n_executors = 2
"""
        cfg, _ = load_config(write_config(tmp_path, text))
        assert cfg.workload_params == {"grid": 16, "packed": True}
        assert cfg.deposit == 500 and cfg.mode == "full-state"
        assert cfg.allow_transfer is False
        assert cfg.latency_per_message == 10 and cfg.memory_limit == 4096
        assert cfg.liveness_bound == 5 and cfg.n_executors == 2
        assert cfg.fee_schedule.gas_price == 3
        assert cfg.fee_schedule.init_gas == 81_053  # untouched defaults survive


class TestSweep:
    def test_expand_is_a_cross_product(self):
        cfg = ScenarioConfig(workload="life")
        points = expand_sweep(cfg, {"cycles_per_round": [10, 20],
                                    "grids": [8, 16], "seeds": [0, 1]})
        assert len(points) == 8
        assert {p.cycles_per_round for p in points} == {10, 20}
        assert {p.workload_params["grid"] for p in points} == {8, 16}

    def test_rows_are_deterministic_under_a_seed(self):
        cfg = ScenarioConfig(workload="life", workload_params={"grid": 8},
                             total_cycles=40, cycles_per_round=20,
                             timeout_ticks=30_000, seed=9)
        rows_a, _ = run_sweep(cfg, {})
        rows_b, _ = run_sweep(cfg, {})
        assert rows_a == rows_b

    def test_csv_round_trip(self):
        cfg = ScenarioConfig(workload="life", workload_params={"grid": 8},
                             total_cycles=40, cycles_per_round=20,
                             timeout_ticks=30_000, seed=9)
        rows, configs = run_sweep(cfg, {})
        parsed_rows, parsed_configs = parse_csv(format_csv(rows, configs))
        assert parsed_rows == rows
        assert parsed_configs == configs

    def test_csv_columns_are_the_stable_contract(self):
        assert CSV_COLUMNS == [
            "config_hash", "sweep_value", "seed", "rounds", "bytes_r_to_e",
            "bytes_e_to_r", "latency_ticks", "enclave_calls",
            "enclave_time_ticks", "fees_r", "fees_e", "outcome",
        ]

    def test_effective_config_embedded_in_header(self):
        cfg = ScenarioConfig(workload="life", workload_params={"grid": 8},
                             total_cycles=40, cycles_per_round=20,
                             timeout_ticks=30_000, seed=9)
        rows, configs = run_sweep(cfg, {})
        text = format_csv(rows, configs)
        assert cfg.config_hash() in text
        assert '"total_cycles": 40' in text


class TestReportMath:
    ROWS = [
        {"config_hash": "x", "sweep_value": 10, "seed": 0, "latency_ticks": 1000,
         "enclave_calls": 100, "enclave_time_ticks": 49000,
         "bytes_r_to_e": 500, "bytes_e_to_r": 500, "rounds": 100,
         "fees_r": 0, "fees_e": 0, "outcome": "settled"},
        {"config_hash": "x", "sweep_value": 200, "seed": 0, "latency_ticks": 100,
         "enclave_calls": 5, "enclave_time_ticks": 11000,
         "bytes_r_to_e": 100, "bytes_e_to_r": 100, "rounds": 5,
         "fees_r": 0, "fees_e": 0, "outcome": "settled"},
        {"config_hash": "x", "sweep_value": 500, "seed": 0, "latency_ticks": 60,
         "enclave_calls": 2, "enclave_time_ticks": 9800,
         "bytes_r_to_e": 52, "bytes_e_to_r": 50, "rounds": 2,
         "fees_r": 0, "fees_e": 0, "outcome": "settled"},
        {"config_hash": "x", "sweep_value": 990, "seed": 0, "latency_ticks": 60,
         "enclave_calls": 2, "enclave_time_ticks": 9800,
         "bytes_r_to_e": 50, "bytes_e_to_r": 50, "rounds": 2,
         "fees_r": 0, "fees_e": 0, "outcome": "settled"},
    ]

    def test_latency_ratio(self):
        assert latency_ratio(self.ROWS) == pytest.approx(10.0)

    def test_enclave_time_ratio(self):
        assert enclave_time_ratio(self.ROWS) == pytest.approx(5.0)

    def test_bandwidth_flatness_over_threshold(self):
        assert bandwidth_flatness(self.ROWS) == pytest.approx(2 / 102)

    def test_report_contains_fee_table(self):
        text = build_report(self.ROWS, {})
        assert "358,600 gas   $0.46" in text
        assert "init + close): $0.25" in text


class TestCli:
    def test_run_exits_zero_when_settled(self, tmp_path):
        config = write_config(tmp_path, GOOD_CONFIG)
        assert main(["run", "--config", str(config), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "metrics.csv").exists()

    def test_run_writes_trace_files(self, tmp_path):
        config = write_config(tmp_path, GOOD_CONFIG)
        main(["run", "--config", str(config), "--out", str(tmp_path / "out")])
        assert list((tmp_path / "out").glob("*.msgs.tsv"))
        assert list((tmp_path / "out").glob("*.txlog.tsv"))

    def test_bad_config_exits_two(self, tmp_path):
        config = write_config(tmp_path, GOOD_CONFIG + "\n[mystery]\nx = 1\n")
        assert main(["run", "--config", str(config), "--out", str(tmp_path / "out")]) == 2

    def test_unexpected_abort_exits_three(self, tmp_path):
        # A channel lifetime too short for the executor's settle margin:
        # the executor never participates and the run ends refunded.
        broken = GOOD_CONFIG.replace("timeout_ticks = 30000", "timeout_ticks = 700")
        config = write_config(tmp_path, broken)
        assert main(["run", "--config", str(config), "--out", str(tmp_path / "out")]) == 3

    def test_livelock_exits_four(self, tmp_path):
        stuck = GOOD_CONFIG.replace("seed = 3", "seed = 3\ntick_limit = 100")
        config = write_config(tmp_path, stuck)
        assert main(["run", "--config", str(config), "--out", str(tmp_path / "out")]) == 4

    def test_report_command(self, tmp_path, capsys):
        config = write_config(tmp_path, GOOD_CONFIG)
        main(["run", "--config", str(config), "--out", str(tmp_path / "out")])
        capsys.readouterr()
        assert main(["report", "--csv", str(tmp_path / "out" / "metrics.csv")]) == 0
        output = capsys.readouterr().out
        assert "fee table" in output

    def test_seed_env_var_overrides_config(self, tmp_path, monkeypatch, capsys):
        config = write_config(tmp_path, GOOD_CONFIG)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(config), "--out", str(out_a)])
        monkeypatch.setenv("FAIREX_SEED", "77")
        main(["run", "--config", str(config), "--out", str(out_b)])
        rows_a, _ = parse_csv((out_a / "metrics.csv").read_text())
        rows_b, _ = parse_csv((out_b / "metrics.csv").read_text())
        assert rows_a[0]["seed"] == 3
        assert rows_b[0]["seed"] == 77

    def test_adversary_suite_command(self, tmp_path, capsys):
        assert main(["adversary-suite", "--out", str(tmp_path)]) == 0
        assert "behaviours ok" in capsys.readouterr().out
        assert (tmp_path / "adversary_suite.tsv").exists()
