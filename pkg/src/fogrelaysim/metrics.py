"""Evaluation metrics, last-k aggregation and the CSV interchange formats.

Two documented schemas (UTF-8, LF, header row mandatory, '.' decimal point):

episodes CSV, one row per episode:
    mode,relay_count,run,episode,termination,steps,delivery_pct,energy_pct,reward_sum,time_ms

summary CSV, one row per (mode, relay count):
    mode,relay_count,delivery_mean,delivery_sd,energy_mean,energy_sd,time_mean_ms,time_sd_ms,per_agent_time_ms,episodes,runs

The time_ms column is the deterministic modeled compute time (a fixed
nominal cost per agent-step), which keeps episode CSVs byte-reproducible;
measured wall-clock lives in the separate timings sidecar.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

from .engine import BatchResult, EpisodeRecord, RunResult
from .errors import ConfigurationError, CsvFormatError

EPISODE_HEADER = ["mode", "relay_count", "run", "episode", "termination", "steps",
                  "delivery_pct", "energy_pct", "reward_sum", "time_ms"]
SUMMARY_HEADER = ["mode", "relay_count", "delivery_mean", "delivery_sd",
                  "energy_mean", "energy_sd", "time_mean_ms", "time_sd_ms",
                  "per_agent_time_ms", "episodes", "runs"]
TIMINGS_HEADER = ["mode", "relay_count", "run", "wall_ms"]


@dataclass(frozen=True)
class EpisodeRow:
    mode: str
    relay_count: int
    run: int                 # run seed
    episode: int
    termination: str
    steps: int
    delivery_pct: float
    energy_pct: float
    reward_sum: float
    time_ms: float


@dataclass(frozen=True)
class SummaryRow:
    mode: str
    relay_count: int
    delivery_mean: float
    delivery_sd: float
    energy_mean: float
    energy_sd: float
    time_mean_ms: float
    time_sd_ms: float
    per_agent_time_ms: float
    episodes: int            # episodes aggregated
    runs: int                # runs aggregated


def delivery_pct(record: EpisodeRecord) -> float:
    """Percentage of packets received at the destination in the final phase."""
    if not record.per_source_delivered:
        return 0.0
    vals = record.per_source_delivered.values()
    return 100.0 * sum(vals) / len(vals)


def energy_pct(record: EpisodeRecord) -> float:
    """Percentage of battery capacity consumed, averaged over active relays.

    A relay counts as active if it transmitted at least once during the
    episode; with no active relay the metric is defined as 0.
    """
    active = [rid for rid, n in record.per_relay_transmits.items() if n > 0]
    if not active:
        return 0.0
    return 100.0 * sum(record.per_relay_consumed[rid] for rid in active) / len(active)


def run_to_rows(run: RunResult) -> list[EpisodeRow]:
    return [
        EpisodeRow(mode=run.mode, relay_count=run.relay_count, run=run.seed,
                   episode=rec.episode, termination=rec.termination,
                   steps=rec.steps, delivery_pct=delivery_pct(rec),
                   energy_pct=energy_pct(rec), reward_sum=rec.reward_sum,
                   time_ms=rec.time_ms)
        for rec in run.records
    ]


def batch_to_rows(batch: BatchResult) -> list[EpisodeRow]:
    rows: list[EpisodeRow] = []
    for run in batch.runs:
        rows.extend(run_to_rows(run))
    return rows


def _mean_sd(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def aggregate(batch: BatchResult | list[EpisodeRow], last_k: int = 40) -> list[SummaryRow]:
    """Pool the last `last_k` episodes of every run per (mode, relay count)."""
    rows = batch_to_rows(batch) if isinstance(batch, BatchResult) else list(batch)
    by_run: dict[tuple[str, int, int], list[EpisodeRow]] = {}
    for row in rows:
        by_run.setdefault((row.mode, row.relay_count, row.run), []).append(row)
    groups: dict[tuple[str, int], dict] = {}
    for (mode, k, run_seed), run_rows in sorted(by_run.items()):
        run_rows.sort(key=lambda r: r.episode)
        if last_k > len(run_rows):
            raise ConfigurationError(
                f"last_k={last_k} exceeds the {len(run_rows)} episodes of run "
                f"(mode={mode}, relays={k}, run={run_seed})")
        tail = run_rows[-last_k:]
        g = groups.setdefault((mode, k), {"delivery": [], "energy": [],
                                          "time": [], "runs": 0})
        g["delivery"].extend(r.delivery_pct for r in tail)
        g["energy"].extend(r.energy_pct for r in tail)
        g["time"].append(sum(r.time_ms for r in run_rows))   # whole-run total
        g["runs"] += 1
    out = []
    for (mode, k), g in sorted(groups.items()):
        d_mean, d_sd = _mean_sd(g["delivery"])
        e_mean, e_sd = _mean_sd(g["energy"])
        t_mean, t_sd = _mean_sd(g["time"])
        out.append(SummaryRow(
            mode=mode, relay_count=k, delivery_mean=d_mean, delivery_sd=d_sd,
            energy_mean=e_mean, energy_sd=e_sd, time_mean_ms=t_mean,
            time_sd_ms=t_sd, per_agent_time_ms=t_mean / k,
            episodes=len(g["delivery"]), runs=g["runs"]))
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_episodes_csv(rows_or_batch, path) -> None:
    rows = (batch_to_rows(rows_or_batch) if isinstance(rows_or_batch, BatchResult)
            else rows_or_batch)
    _write_csv(path, EPISODE_HEADER,
               [[getattr(r, f) for f in EPISODE_HEADER] for r in rows])


def write_summary_csv(rows, path) -> None:
    _write_csv(path, SUMMARY_HEADER,
               [[getattr(r, f) for f in SUMMARY_HEADER] for r in rows])


def write_timings_csv(batch: BatchResult, path) -> None:
    _write_csv(path, TIMINGS_HEADER,
               [[run.mode, run.relay_count, run.seed, run.wall_ms]
                for run in batch.runs])


def _read_rows(path, header, types, cls):
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected header "
                                 f"{','.join(header)}") from None
        if got != header:
            missing = [c for c in header if c not in got]
            extra = [c for c in got if c not in header]
            detail = []
            if missing:
                detail.append(f"missing column(s) {missing}")
            if extra:
                detail.append(f"unexpected column(s) {extra}")
            if not detail:
                detail.append(f"column order {got} != {header}")
            raise CsvFormatError(f"{path}: header mismatch: {'; '.join(detail)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                out.append(cls(**{name: typ(raw) for (name, typ), raw
                                  in zip(types, row)}))
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def read_episodes_csv(path) -> list[EpisodeRow]:
    types = [(f.name, {"mode": str, "termination": str}.get(
        f.name, int if f.type == "int" else float)) for f in fields(EpisodeRow)]
    return _read_rows(path, EPISODE_HEADER, types, EpisodeRow)


def read_summary_csv(path) -> list[SummaryRow]:
    types = [(f.name, str if f.name == "mode" else
              (int if f.type == "int" else float)) for f in fields(SummaryRow)]
    return _read_rows(path, SUMMARY_HEADER, types, SummaryRow)
