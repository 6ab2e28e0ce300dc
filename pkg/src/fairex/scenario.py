"""Scenario configuration and single-run orchestration.

A scenario pins every constant a run depends on: workload and its
parameters, protocol budgets and pricing, link and enclave calibration,
ledger liveness and fees, and the master seed.  Identical configs replay
to identical traces.  Config files are INI-style key/value sections; the
full effective config is embedded in every output for reproducibility.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import tee
from .crypto import SigningIdentity, derive_rng
from .ledger import FeeSchedule, Ledger
from .netsim import LinkModel, RunMetrics, TickLimitExceeded, World, metrics
from .protocol import (
    ExecutorActor,
    ExecutorConfig,
    ExecutorPolicy,
    RequesterActor,
    RequesterConfig,
    RequesterPolicy,
)
from .workloads import create_workload


class ConfigError(Exception):
    """Bad scenario configuration; message names the section and field."""


@dataclass
class ScenarioConfig:
    # workload
    workload: str = "life"
    workload_params: dict = field(default_factory=dict)
    # protocol
    total_cycles: int = 1000
    cycles_per_round: int = 200
    rate: int = 1
    deposit: int | None = None          # default rate * total_cycles
    timeout_ticks: int = 200_000
    patience: int = 25_000
    mode: str = tee.MODE_DIFF
    allow_transfer: bool = True
    # link
    latency_per_message: int = 300
    bytes_per_tick: int = 2500
    per_message_overhead: int = 32
    # enclave
    enter_exit_cost: int = 400
    per_cycle_cost: int = 9
    memory_limit: int = tee.DEFAULT_MEMORY_LIMIT
    # ledger
    liveness_bound: int = 3
    fee_schedule: FeeSchedule = field(default_factory=FeeSchedule)
    # run
    seed: int = 0
    tick_limit: int = 10_000_000
    n_executors: int = 1

    def to_dict(self) -> dict:
        data = asdict(self)
        data["fee_schedule"] = asdict(self.fee_schedule)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def effective_deposit(self) -> int:
        return self.deposit if self.deposit is not None else self.rate * self.total_cycles


# -- INI parsing -------------------------------------------------------------

_SECTION_FIELDS = {
    "protocol": ["total_cycles", "cycles_per_round", "rate", "deposit",
                 "timeout_ticks", "patience", "mode", "allow_transfer"],
    "link": ["latency_per_message", "bytes_per_tick", "per_message_overhead"],
    "enclave": ["enter_exit_cost", "per_cycle_cost", "memory_limit"],
    "ledger": ["liveness_bound"],
    "run": ["seed", "tick_limit", "n_executors"],
}

_FEE_FIELDS = ["creation_gas", "init_gas", "close_gas", "timeout_gas",
               "gas_price", "usd_per_coin"]


def _parse_value(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_value_list(text: str) -> list:
    return [_parse_value(part) for part in text.split(",") if part.strip()]


def load_config(path: str | Path) -> tuple[ScenarioConfig, dict]:
    """Parse a scenario INI file; returns (config, sweep lists)."""
    parser = configparser.ConfigParser()
    try:
        read = parser.read(str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"{path}: file not found or unreadable")

    cfg = ScenarioConfig()
    for section in parser.sections():
        if section == "workload":
            for key, raw in parser.items(section):
                if key == "name":
                    cfg.workload = raw.strip()
                else:
                    cfg.workload_params[key] = _parse_value(raw)
        elif section == "fees":
            overrides = {}
            for key, raw in parser.items(section):
                if key not in _FEE_FIELDS:
                    raise ConfigError(f"[fees] unknown field {key!r}")
                overrides[key] = _parse_value(raw)
            cfg.fee_schedule = FeeSchedule(**{**asdict(FeeSchedule()), **overrides})
        elif section == "sweep":
            continue
        elif section in _SECTION_FIELDS:
            allowed = _SECTION_FIELDS[section]
            for key, raw in parser.items(section):
                if key not in allowed:
                    raise ConfigError(f"[{section}] unknown field {key!r}")
                setattr(cfg, key, _parse_value(raw))
        else:
            raise ConfigError(f"unknown section [{section}]")

    sweep = {}
    if parser.has_section("sweep"):
        for key, raw in parser.items("sweep"):
            sweep[key] = parse_value_list(raw)
    return cfg, sweep


# -- world construction --------------------------------------------------------


@dataclass
class ScenarioRun:
    cfg: ScenarioConfig
    world: World
    requester: RequesterActor
    executors: list[ExecutorActor]
    metrics: RunMetrics | None = None
    outcome: str = "unknown"

    @property
    def trace(self):
        return self.world.trace


def build_scenario(cfg: ScenarioConfig,
                   requester_policy: RequesterPolicy | None = None,
                   executor_policies: dict[int, ExecutorPolicy] | None = None,
                   faults: list | None = None) -> ScenarioRun:
    ledger = Ledger(fee_schedule=cfg.fee_schedule, liveness_bound=cfg.liveness_bound)
    link = LinkModel(latency_per_message=cfg.latency_per_message,
                     bytes_per_tick=cfg.bytes_per_tick,
                     per_message_overhead=cfg.per_message_overhead)
    world = World(ledger, link, faults=faults, tick_limit=cfg.tick_limit)

    workload, initial_state = create_workload(
        cfg.workload, cfg.workload_params, derive_rng(cfg.seed, "workload-state"))

    executors = []
    for i in range(cfg.n_executors):
        identity = SigningIdentity.from_rng(derive_rng(cfg.seed, f"executor-{i}"))
        policy = (executor_policies or {}).get(i)
        actor = ExecutorActor(
            name=f"executor-{i + 1}", identity=identity, world=world,
            cfg=ExecutorConfig(workload=workload, mode=cfg.mode,
                               memory_limit=cfg.memory_limit,
                               enter_exit_cost=cfg.enter_exit_cost,
                               per_cycle_cost=cfg.per_cycle_cost),
            rng=derive_rng(cfg.seed, f"enclave-{i}"),
            policy=policy)
        world.register(actor)
        executors.append(actor)

    requester_identity = SigningIdentity.from_rng(derive_rng(cfg.seed, "requester"))
    requester = RequesterActor(
        name="requester", identity=requester_identity, world=world,
        cfg=RequesterConfig(workload_tag=workload.schema_tag,
                            initial_state=initial_state,
                            total_cycles=cfg.total_cycles,
                            cycles_per_round=cfg.cycles_per_round,
                            rate=cfg.rate, deposit=cfg.deposit,
                            timeout_ticks=cfg.timeout_ticks,
                            patience=cfg.patience, mode=cfg.mode,
                            allow_transfer=cfg.allow_transfer,
                            executors=[e.contact_card() for e in executors]),
        policy=requester_policy)
    world.register(requester)

    # Fund both sides: one deposit per possible session plus fee headroom.
    fees = cfg.fee_schedule
    session_cost = (cfg.effective_deposit() + fees.fee_for("init_channel")
                    + fees.fee_for("channel_timeout") * 2)
    ledger.mint(requester.address, session_cost * max(1, cfg.n_executors) + 1_000_000)
    for executor in executors:
        ledger.mint(executor.address, fees.fee_for("close_channel") * 4 + 1_000_000)

    return ScenarioRun(cfg=cfg, world=world, requester=requester, executors=executors)


def classify_outcome(run: ScenarioRun) -> str:
    requester = run.requester
    settled = bool(run.trace.of_kind("settled"))
    refunded = bool(run.trace.of_kind("refunded"))
    if requester.phase == "done":
        return "settled" if settled else "completed"
    if requester.phase == "aborted":
        if refunded:
            return "refunded"
        if run.trace.of_kind("request_rejected"):
            return "rejected"
        return "aborted"
    return f"stuck-{requester.phase}"


def run_scenario(cfg: ScenarioConfig,
                 requester_policy: RequesterPolicy | None = None,
                 executor_policies: dict[int, ExecutorPolicy] | None = None,
                 faults: list | None = None) -> ScenarioRun:
    run = build_scenario(cfg, requester_policy=requester_policy,
                         executor_policies=executor_policies, faults=faults)
    run.requester.start()
    try:
        run.world.run_until_quiescent()
        run.outcome = classify_outcome(run)
    except TickLimitExceeded:
        run.outcome = "livelock"
    run.metrics = metrics(run.trace, requester="requester",
                          executors=[e.name for e in run.executors])
    run.metrics.outcome = run.outcome
    return run
