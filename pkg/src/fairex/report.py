"""Derived tables from sweep CSVs: trade-off ratios and the fee table."""

from __future__ import annotations

import json

from .harness import TREND_NOTE
from .ledger import FeeSchedule, cost_table


def _label(config_json: str | None) -> str:
    if not config_json:
        return "?"
    cfg = json.loads(config_json)
    params = cfg.get("workload_params", {})
    bits = [cfg.get("workload", "?")]
    bits.extend(f"{k}={v}" for k, v in sorted(params.items()))
    return " ".join(bits)


def group_by_family(rows: list[dict],
                    configs: dict[str, str]) -> list[tuple[str, list[dict]]]:
    """Group sweep rows by config identity modulo the swept axes.

    Rows differing only in cycles_per_round or seed belong to the same
    family (e.g. one grid size); ratios are computed within a family.
    """
    families: dict[str, list[dict]] = {}
    labels: dict[str, str] = {}
    for row in rows:
        payload = configs.get(row["config_hash"])
        if payload:
            data = json.loads(payload)
            data.pop("cycles_per_round", None)
            data.pop("seed", None)
            key = json.dumps(data, sort_keys=True)
            labels[key] = _label(payload)
        else:
            key = row["config_hash"]
            labels[key] = row["config_hash"]
        families.setdefault(key, []).append(row)
    out = []
    for key in sorted(families, key=lambda k: labels[k]):
        group = sorted(families[key], key=lambda r: (r["sweep_value"], r["seed"]))
        out.append((labels[key], group))
    return out


def latency_ratio(rows: list[dict], low_cpr: int = 10, high_cpr: int = 200) -> float | None:
    low = [r["latency_ticks"] for r in rows if r["sweep_value"] == low_cpr]
    high = [r["latency_ticks"] for r in rows if r["sweep_value"] == high_cpr]
    if not low or not high or high[0] == 0:
        return None
    return low[0] / high[0]


def enclave_time_ratio(rows: list[dict], many_calls: int = 100,
                       few_calls: int = 2) -> float | None:
    many = [r["enclave_time_ticks"] for r in rows if r["enclave_calls"] == many_calls]
    few = [r["enclave_time_ticks"] for r in rows if r["enclave_calls"] == few_calls]
    if not many or not few or few[0] == 0:
        return None
    return many[0] / few[0]


def bandwidth_flatness(rows: list[dict], threshold_cpr: int = 500) -> float | None:
    """Relative spread of total bandwidth across sweep points >= threshold."""
    totals = [r["bytes_r_to_e"] + r["bytes_e_to_r"] for r in rows
              if r["sweep_value"] >= threshold_cpr]
    if len(totals) < 2 or max(totals) == 0:
        return None
    return (max(totals) - min(totals)) / max(totals)


def fee_schedule_from_configs(configs: dict[str, str]) -> FeeSchedule:
    for payload in configs.values():
        data = json.loads(payload).get("fee_schedule")
        if data:
            return FeeSchedule(**data)
    return FeeSchedule()


def build_report(rows: list[dict], configs: dict[str, str]) -> str:
    lines = [f"# {TREND_NOTE}", ""]
    for label, group in group_by_family(rows, configs):
        lines.append(f"[{label}]  {len(group)} runs")
        ratio = latency_ratio(group)
        if ratio is not None:
            lines.append(f"  latency(cpr=10) / latency(cpr=200) = {ratio:.2f}")
        enclave = enclave_time_ratio(group)
        if enclave is not None:
            lines.append(f"  enclave_time(100 calls) / enclave_time(2 calls) = {enclave:.2f}")
        flatness = bandwidth_flatness(group)
        if flatness is not None:
            lines.append(f"  bandwidth spread for cpr >= 500 = {flatness * 100:.1f}%")
        outcomes = sorted({r["outcome"] for r in group})
        lines.append(f"  outcomes: {', '.join(outcomes)}")
        lines.append("")

    fees = fee_schedule_from_configs(configs)
    lines.append("fee table (gas, USD at documented constants):")
    for method, gas, usd in cost_table(fees):
        lines.append(f"  {method:<16} {gas:>8,} gas   ${usd:.2f}")
    full = fees.usd_for_gas(fees.init_gas + fees.close_gas)
    lines.append(f"  one full exchange (init + close): ${full:.2f}")
    return "\n".join(lines) + "\n"
