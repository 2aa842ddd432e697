"""Metric accumulation, deterministic serialization and scheme comparison."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from statistics import NormalDist
from typing import TYPE_CHECKING, Iterable

from ecsim.core import RadioMode, fraction_remaining

if TYPE_CHECKING:
    from ecsim.engine import Simulation

# Metrics carried into scheme comparison tables, in output order.
COMPARE_METRICS = (
    "mean_per_device_consumption_j",
    "delivery_ratio",
    "throughput_bps",
    "mean_end_to_end_delay_s",
    "mean_network_power_uw",
    "first_death_s",
    "sleeping_dst_delivery_ratio",
)

_Z95 = NormalDist().inv_cdf(0.975)


@dataclass
class MetricsReport:
    """Per-node and network-wide results of one simulation run."""

    meta: dict
    per_node: dict
    network: dict
    timeseries: list

    def to_dict(self) -> dict:
        return {"meta": self.meta, "per_node": self.per_node, "network": self.network}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def metric(self, name: str):
        if name in self.network:
            return self.network[name]
        raise KeyError(name)

    def timeseries_csv(self) -> str:
        lines = ["time,alive_fraction,total_residual_j"]
        for t, frac, residual in self.timeseries:
            lines.append(f"{t:.6f},{frac!r},{residual!r}")
        return "\n".join(lines) + "\n"


def scenario_fingerprint(config_dict: dict) -> str:
    """Stable digest of a scenario, excluding the scheme under test."""
    trimmed = {k: v for k, v in config_dict.items() if k != "scheme"}
    blob = json.dumps(trimmed, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def finalize(sim: "Simulation") -> MetricsReport:
    """Derive the full report from a finished simulation."""
    config_dict = sim.config.to_dict()
    per_node: dict[str, dict] = {}
    total_consumed = 0.0
    for nid in sorted(sim.nodes):
        node = sim.nodes[nid]
        consumed = node.initial_energy - node.account.e_residual
        total_consumed += consumed
        lifetime = node.death_time if node.death_time is not None else sim.horizon
        per_node[str(nid)] = {
            "consumed_j": consumed,
            "residual_j": node.account.e_residual,
            "fraction_remaining": (
                fraction_remaining(node.account) if node.initial_energy > 0 else 0.0
            ),
            "lifetime_s": lifetime,
            "time_in_mode_s": {
                "tx": node.time_in_mode[RadioMode.ACTIVE_TX],
                "rx": node.time_in_mode[RadioMode.ACTIVE_RX],
                "idle": node.time_in_mode[RadioMode.IDLE],
                "sleep": node.time_in_mode[RadioMode.SLEEP],
            },
            "sp_rounds": node.sp_rounds,
            "ch_rounds": node.ch_rounds,
        }

    node_count = max(1, len(sim.nodes))
    delivered = sim.counts["delivered"]
    ratio = delivered / sim.generated if sim.generated else 0.0
    sleeping_ratio = (
        sim.delivered_sleeping_dst / sim.generated_sleeping_dst
        if sim.generated_sleeping_dst
        else None
    )
    in_flight_at_end = sim.generated - len(sim.terminal)
    alive = sum(1 for n in sim.nodes.values() if n.alive)
    network = {
        "generated_packets": sim.generated,
        "delivered_packets": delivered,
        "delivered_late_packets": sim.counts["delivered-late"],
        "delivery_ratio": ratio,
        "throughput_bps": sim.delivered_bits_ok / sim.horizon if sim.horizon > 0 else 0.0,
        "mean_end_to_end_delay_s": (
            sim.delay_sum / sim.delay_count if sim.delay_count else None
        ),
        "total_consumed_j": total_consumed,
        "mean_per_device_consumption_j": total_consumed / node_count,
        "mean_network_power_uw": (
            total_consumed / sim.horizon * 1e6 if sim.horizon > 0 else 0.0
        ),
        "first_death_s": sim.first_death,
        "alive_fraction_end": alive / node_count,
        "lost": {
            "deadline": sim.counts["lost-deadline"],
            "dead": sim.counts["lost-dead"],
            "no_cache": sim.counts["lost-no-cache"],
        },
        "in_flight_at_end": in_flight_at_end,
        "sleeping_dst": {
            "generated": sim.generated_sleeping_dst,
            "delivered": sim.delivered_sleeping_dst,
        },
        "sleeping_dst_delivery_ratio": sleeping_ratio,
        "sleep_assignments": len(sim.sleep_audit),
    }
    meta = {
        "seed": sim.seed,
        "scheme": sim.scheme.name,
        "horizon_s": sim.horizon,
        "node_count": len(sim.nodes),
        "scenario_fingerprint": scenario_fingerprint(config_dict),
        "config": config_dict,
    }
    return MetricsReport(
        meta=meta, per_node=per_node, network=network, timeseries=list(sim.timeseries)
    )


def compare(reports: list[tuple[str, MetricsReport]], baseline: str | None = None) -> list[dict]:
    """Long-format comparison rows: one per (metric, scheme) with % delta vs
    the baseline scheme (first entry by default)."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    fingerprints = {r.meta["scenario_fingerprint"] for _, r in reports}
    seeds = {r.meta["seed"] for _, r in reports}
    if len(fingerprints) != 1 or len(seeds) != 1:
        raise ValueError("compared reports must share scenario and seed")
    baseline_name = baseline if baseline is not None else reports[0][0]
    by_name = dict(reports)
    if baseline_name not in by_name:
        raise ValueError(f"baseline scheme {baseline_name!r} not among reports")
    base = by_name[baseline_name]
    rows = []
    for metric in COMPARE_METRICS:
        base_value = base.network.get(metric)
        for name, rep in reports:
            value = rep.network.get(metric)
            delta = None
            if (
                isinstance(base_value, (int, float))
                and isinstance(value, (int, float))
                and base_value != 0
            ):
                delta = (value - base_value) / base_value * 100.0
            rows.append(
                {
                    "metric": metric,
                    "scheme": name,
                    "value": value,
                    "delta_vs_baseline_pct": delta,
                }
            )
    return rows


def compare_csv(rows: list[dict]) -> str:
    lines = ["metric,scheme,value,delta_vs_baseline_pct"]
    for row in rows:
        value = "" if row["value"] is None else repr(row["value"])
        delta = "" if row["delta_vs_baseline_pct"] is None else repr(row["delta_vs_baseline_pct"])
        lines.append(f"{row['metric']},{row['scheme']},{value},{delta}")
    return "\n".join(lines) + "\n"


def summarize_batch(values: Iterable[float]) -> dict:
    """Mean with the half-width of a 95% normal-approximation CI."""
    data = list(values)
    if not data:
        return {"mean": None, "ci95_half_width": None, "n": 0}
    mean = sum(data) / len(data)
    if len(data) < 2:
        return {"mean": mean, "ci95_half_width": None, "n": len(data)}
    var = sum((x - mean) ** 2 for x in data) / (len(data) - 1)
    half = _Z95 * (var**0.5) / (len(data) ** 0.5)
    return {"mean": mean, "ci95_half_width": half, "n": len(data)}


def trace_csv(rows: list[tuple[float, int, str, str]]) -> str:
    lines = ["time,node,kind,detail"]
    for t, node, kind, detail in rows:
        lines.append(f"{t:.6f},{node},{kind},{detail}")
    return "\n".join(lines) + "\n"
