"""Experiment sweeps: run scenario grids and emit metrics CSV plus traces.

The CSV column order is a stable contract.  Every distinct effective
config appearing in the file is embedded in the header as JSON, keyed by
its hash, so any row can be reproduced exactly.  All reported times are
simulated ticks under the documented calibration; the header says so.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .scenario import ScenarioConfig, ScenarioRun, run_scenario

CSV_COLUMNS = [
    "config_hash", "sweep_value", "seed", "rounds", "bytes_r_to_e",
    "bytes_e_to_r", "latency_ticks", "enclave_calls", "enclave_time_ticks",
    "fees_r", "fees_e", "outcome",
]

TREND_NOTE = (
    "trend reproduction under a calibrated simulation model: latency, "
    "enclave time and fees are logical-tick and simulated-coin quantities, "
    "not wall-clock or real-gas measurements"
)


def expand_sweep(cfg: ScenarioConfig, sweep: dict) -> list[ScenarioConfig]:
    """One config per (grid?, images?, cycles_per_round, seed) combination."""
    cprs = sweep.get("cycles_per_round") or [cfg.cycles_per_round]
    seeds = sweep.get("seeds") or [cfg.seed]
    grids = sweep.get("grids")
    images = sweep.get("images")

    variants: list[dict] = [{}]
    if grids:
        variants = [{"grid": g} for g in grids]
    elif images:
        variants = [{"images": n} for n in images]

    configs = []
    for params in variants:
        for cpr in cprs:
            for seed in seeds:
                configs.append(dataclasses.replace(
                    cfg, workload_params={**cfg.workload_params, **params},
                    cycles_per_round=cpr, seed=seed))
    return configs


def row_for(run: ScenarioRun) -> dict:
    m = run.metrics
    return {
        "config_hash": run.cfg.config_hash(),
        "sweep_value": run.cfg.cycles_per_round,
        "seed": run.cfg.seed,
        "rounds": m.rounds,
        "bytes_r_to_e": m.bytes_r_to_e,
        "bytes_e_to_r": m.bytes_e_to_r,
        "latency_ticks": m.requester_latency_ticks,
        "enclave_calls": m.enclave_calls,
        "enclave_time_ticks": m.enclave_time_ticks,
        "fees_r": m.fees.get("requester", 0),
        "fees_e": sum(v for k, v in m.fees.items() if k.startswith("executor")),
        "outcome": m.outcome,
    }


def run_sweep(cfg: ScenarioConfig, sweep: dict,
              trace_dir: Path | None = None) -> tuple[list[dict], dict[str, str]]:
    """Run every sweep point; returns (rows, config-hash -> config-json)."""
    rows = []
    configs_seen: dict[str, str] = {}
    for point in expand_sweep(cfg, sweep):
        run = run_scenario(point)
        configs_seen[point.config_hash()] = point.to_json()
        rows.append(row_for(run))
        if trace_dir is not None:
            stem = f"{point.config_hash()}_cpr{point.cycles_per_round}_s{point.seed}"
            (trace_dir / f"{stem}.msgs.tsv").write_text(run.trace.message_log())
            (trace_dir / f"{stem}.txlog.tsv").write_text(
                run.world.ledger.format_tx_log())
    return rows, configs_seen


def format_csv(rows: list[dict], configs: dict[str, str]) -> str:
    lines = [f"# {TREND_NOTE}"]
    for config_hash in sorted(configs):
        lines.append(f"# config {config_hash} = {configs[config_hash]}")
    lines.append(",".join(CSV_COLUMNS))
    for row in rows:
        lines.append(",".join(str(row[col]) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> tuple[list[dict], dict[str, str]]:
    configs: dict[str, str] = {}
    rows = []
    header: list[str] | None = None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("config "):
                config_hash, _, payload = body[len("config "):].partition(" = ")
                configs[config_hash.strip()] = payload
            continue
        if header is None:
            header = line.split(",")
            if header != CSV_COLUMNS:
                raise ValueError(f"unexpected CSV columns: {header}")
            continue
        values = line.split(",")
        row = dict(zip(header, values))
        for key in ("sweep_value", "seed", "rounds", "bytes_r_to_e", "bytes_e_to_r",
                    "latency_ticks", "enclave_calls", "enclave_time_ticks",
                    "fees_r", "fees_e"):
            row[key] = int(row[key])
        rows.append(row)
    if header is None:
        raise ValueError("no CSV header found")
    return rows, configs
