"""Per-vehicle metric accounting and descriptive-statistics aggregation.

Four per-vehicle metrics are tracked: waiting time (seconds below the halting
threshold), time loss (accumulated shortfall against the allowed speed),
emergency-stop count, and depart delay.  Reports aggregate them as
mean / sample SD / min / max per metric for each controller.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

#: Speed below which a vehicle counts as halted (SUMO convention), m/s.
HALT_SPEED = 0.1

#: Metric order used everywhere a report is laid out.
METRIC_KEYS = ("wt", "tl", "es", "dd")


@dataclass
class VehicleMetrics:
    vehicle_id: int
    waiting_time: float
    time_loss: float
    emergency_stops: int
    depart_delay: float
    never_departed: bool = False


@dataclass(frozen=True)
class StatSummary:
    """mean / sample SD (n-1) / min / max over one metric's population."""

    mean: float
    sd: float
    vmin: float
    vmax: float
    n: int

    def as_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "min": self.vmin, "max": self.vmax, "n": self.n}


EMPTY_SUMMARY = StatSummary(0.0, 0.0, 0.0, 0.0, 0)


@dataclass
class EpisodeTotals:
    """Whole-run totals for one evaluation episode (one seed)."""

    seed: int
    episode: int
    spawned: int
    departed: int
    arrived: int
    never_departed: int
    emergency_stops: int


@dataclass
class RunReport:
    """Table-shaped evaluation result for one controller on one scenario."""

    controller: str
    scenario_id: str
    seeds: list[int]
    summaries: dict[str, StatSummary]  # per METRIC_KEYS, per-vehicle population
    es_per_episode: StatSummary  # emergency-stop totals, one value per episode
    episodes: list[EpisodeTotals]
    vehicles: list[VehicleMetrics]


def record_step(tracker, speed: float, allowed_speed: float, dt: float) -> None:
    """Accumulate one on-network simulation step into a vehicle's counters.

    ``tracker`` needs mutable ``waiting_time`` and ``time_loss`` attributes.
    """
    if speed < HALT_SPEED:
        tracker.waiting_time += dt
    tracker.time_loss += (1.0 - speed / allowed_speed) * dt


def finalize(vehicle, duration: float) -> VehicleMetrics:
    """Close out a vehicle's metrics at arrival or simulation end.

    Vehicles that never got inserted are flagged and charged the delay they
    accrued up to the end of the run.
    """
    if vehicle.actual_depart is None:
        return VehicleMetrics(
            vehicle_id=vehicle.vid,
            waiting_time=0.0,
            time_loss=0.0,
            emergency_stops=0,
            depart_delay=duration - vehicle.scheduled_depart,
            never_departed=True,
        )
    return VehicleMetrics(
        vehicle_id=vehicle.vid,
        waiting_time=vehicle.waiting_time,
        time_loss=vehicle.time_loss,
        emergency_stops=vehicle.emergency_stops,
        depart_delay=vehicle.actual_depart - vehicle.scheduled_depart,
    )


def aggregate(values) -> StatSummary:
    """Exact mean / sample SD / min / max; errors on an empty population."""
    values = list(values)
    n = len(values)
    if n == 0:
        raise ValueError("cannot aggregate an empty list of values")
    lo, hi = min(values), max(values)
    # fsum/n can land one ulp outside [lo, hi]; the true mean never does
    mean = min(max(math.fsum(values) / n, lo), hi)
    if n < 2:
        sd = 0.0
    else:
        sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
    return StatSummary(mean=mean, sd=sd, vmin=lo, vmax=hi, n=n)


def percent_change(before: float, after: float) -> float:
    """Percent decrease from ``before`` to ``after`` (positive = decreased)."""
    if before == 0:
        raise ValueError("percent change is undefined for a zero baseline")
    return 100.0 * (before - after) / before


# --- report assembly and CSV views -----------------------------------------


def build_report(
    controller: str,
    scenario_id: str,
    seeds: list[int],
    episodes: list[EpisodeTotals],
    vehicles: list[VehicleMetrics],
) -> RunReport:
    """Pool per-vehicle metrics across episodes into Table-1-shaped summaries.

    Summaries cover vehicles that actually departed; vehicles that never got
    inserted stay visible through their flagged rows and the episode totals.
    """
    departed = [v for v in vehicles if not v.never_departed]
    per_metric = {
        "wt": [v.waiting_time for v in departed],
        "tl": [v.time_loss for v in departed],
        "es": [float(v.emergency_stops) for v in departed],
        "dd": [v.depart_delay for v in departed],
    }
    summaries = {k: aggregate(vals) if vals else EMPTY_SUMMARY for k, vals in per_metric.items()}
    es_totals = [float(ep.emergency_stops) for ep in episodes]
    return RunReport(
        controller=controller,
        scenario_id=scenario_id,
        seeds=list(seeds),
        summaries=summaries,
        es_per_episode=aggregate(es_totals) if es_totals else EMPTY_SUMMARY,
        episodes=episodes,
        vehicles=vehicles,
    )


def report_to_json(report: RunReport) -> str:
    doc = {
        "controller": report.controller,
        "scenario_id": report.scenario_id,
        "seeds": report.seeds,
        "summaries": {k: report.summaries[k].as_dict() for k in METRIC_KEYS},
        "es_per_episode": report.es_per_episode.as_dict(),
        "episodes": [
            {
                "seed": ep.seed,
                "episode": ep.episode,
                "spawned": ep.spawned,
                "departed": ep.departed,
                "arrived": ep.arrived,
                "never_departed": ep.never_departed,
                "emergency_stops": ep.emergency_stops,
            }
            for ep in report.episodes
        ],
        "vehicles": [
            {
                "id": v.vehicle_id,
                "wt": v.waiting_time,
                "tl": v.time_loss,
                "es": v.emergency_stops,
                "dd": v.depart_delay,
                "never_departed": v.never_departed,
                "seed": seed,
                "episode": episode,
            }
            for (v, seed, episode) in _vehicle_rows(report)
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def report_from_json(text: str) -> RunReport:
    doc = json.loads(text)
    episodes = [
        EpisodeTotals(
            seed=ep["seed"],
            episode=ep["episode"],
            spawned=ep["spawned"],
            departed=ep["departed"],
            arrived=ep["arrived"],
            never_departed=ep["never_departed"],
            emergency_stops=ep["emergency_stops"],
        )
        for ep in doc["episodes"]
    ]
    vehicles = [
        VehicleMetrics(
            vehicle_id=v["id"],
            waiting_time=v["wt"],
            time_loss=v["tl"],
            emergency_stops=v["es"],
            depart_delay=v["dd"],
            never_departed=v["never_departed"],
        )
        for v in doc["vehicles"]
    ]
    summaries = {
        k: StatSummary(
            mean=doc["summaries"][k]["mean"],
            sd=doc["summaries"][k]["sd"],
            vmin=doc["summaries"][k]["min"],
            vmax=doc["summaries"][k]["max"],
            n=doc["summaries"][k]["n"],
        )
        for k in METRIC_KEYS
    }
    es = doc["es_per_episode"]
    return RunReport(
        controller=doc["controller"],
        scenario_id=doc["scenario_id"],
        seeds=list(doc["seeds"]),
        summaries=summaries,
        es_per_episode=StatSummary(es["mean"], es["sd"], es["min"], es["max"], es["n"]),
        episodes=episodes,
        vehicles=vehicles,
    )


def _vehicle_rows(report: RunReport):
    """Vehicles paired with their (seed, episode); order follows the episodes."""
    rows = []
    idx = 0
    for ep in report.episodes:
        for _ in range(ep.spawned):
            rows.append((report.vehicles[idx], ep.seed, ep.episode))
            idx += 1
    # vehicles not covered by episode bookkeeping (hand-built reports)
    for v in report.vehicles[idx:]:
        rows.append((v, report.seeds[0] if report.seeds else 0, 0))
    return rows


def report_csv(report: RunReport) -> str:
    """One row per vehicle: id, wt, tl, es, dd, seed, episode."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["vehicle_id", "waiting_time", "time_loss", "emergency_stops", "depart_delay", "seed", "episode"])
    for v, seed, episode in _vehicle_rows(report):
        writer.writerow([v.vehicle_id, v.waiting_time, v.time_loss, v.emergency_stops, v.depart_delay, seed, episode])
    return out.getvalue()


def summary_csv(reports: list[RunReport]) -> str:
    """Statistic-by-metric table, one column group per controller.

    Rows are mean/sd/min/max; columns are <controller>_<metric> for the four
    metrics wt, tl, es, dd.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = ["statistic"]
    for r in reports:
        header.extend(f"{r.controller}_{k}" for k in METRIC_KEYS)
    writer.writerow(header)
    for stat in ("mean", "sd", "min", "max"):
        row: list = [stat]
        for r in reports:
            for k in METRIC_KEYS:
                s = r.summaries[k]
                row.append({"mean": s.mean, "sd": s.sd, "min": s.vmin, "max": s.vmax}[stat])
        writer.writerow(row)
    return out.getvalue()
