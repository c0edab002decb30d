"""Campaign execution, aggregation and table output.

A campaign runs every (parameter point, seed) pair of a config. Runs are
independent, so they may execute in worker processes; results are always
folded in (point, seed index) order, which makes serial and parallel
campaigns produce byte-identical tables.

Floats are written with ``repr`` so a table read back with
:func:`read_table` reproduces the aggregates exactly.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import multiprocessing
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..simnet import RoundResult, Scenario, run_round
from .config import ScenarioConfig

log = logging.getLogger(__name__)

TOTAL = "Total"
PARTIAL_MARKER = "PARTIAL"

# per-run scalars aggregated alongside the phase metrics
RUN_METRICS = ("decisions_reached", "non_juror_bft_messages", "election_messages_per_node")
PHASE_METRICS = ("completion_s", "messages_per_node", "bytes_per_node")

POINT_COLUMNS = (
    "point",
    "n",
    "j",
    "q",
    "blame_kind",
    "byzantine_behavior",
    "adversary_fraction",
    "t_min_ms",
    "t_max_ms",
    "t_ele_ms",
)
LEDGER_COLUMNS = ("runs", "completed_runs", "master_seed", "seeds")

PHASE_COLUMNS = (
    POINT_COLUMNS
    + ("phase",)
    + tuple(f"{m}_{s}" for m in PHASE_METRICS + RUN_METRICS for s in ("mean", "std"))
    + LEDGER_COLUMNS
)

WAIT_COLUMNS = (
    POINT_COLUMNS
    + tuple(f"{m}_{s}" for m in ("round_time_s",) + RUN_METRICS for s in ("mean", "std"))
    + ("all_decided_runs",)
    + LEDGER_COLUMNS
)

_INT_COLUMNS = {"point", "n", "j", "q", "runs", "completed_runs", "all_decided_runs"}
_STR_COLUMNS = {"blame_kind", "byzantine_behavior", "phase", "seeds"}


class CampaignError(RuntimeError):
    """A run failed; ``partial`` holds the points finished before it."""

    def __init__(self, message: str, partial: "Campaign"):
        super().__init__(message)
        self.partial = partial


@dataclass
class RunRecord:
    seed: int
    phases: Dict[str, Dict[str, float]]
    decisions_reached: int
    non_juror_bft_messages: int
    election_messages_per_node: float
    completed: bool

    @classmethod
    def of(cls, seed: int, result: RoundResult) -> "RunRecord":
        phases = {}
        for name, p in result.phases.items():
            phases[name] = {
                "completion_s": p.completion_seconds,
                "messages_per_node": p.messages_per_node,
                "bytes_per_node": p.bytes_per_node,
            }
        n = result.scenario.n
        phases[TOTAL] = {
            "completion_s": result.total_time / 1e6,
            "messages_per_node": result.total_messages / n,
            "bytes_per_node": result.total_bytes / n,
        }
        return cls(
            seed,
            phases,
            result.decisions_reached,
            result.non_juror_bft_messages,
            result.election_messages_per_node,
            result.completed,
        )


@dataclass
class PointResult:
    index: int
    values: Dict[str, Any]
    scenario: Scenario
    records: List[RunRecord]

    @property
    def phase_names(self) -> List[str]:
        return [p.value for p in self.scenario.phases] + [TOTAL]

    def column(self, metric: str, phase: Optional[str] = None) -> np.ndarray:
        if phase is None:
            return np.array([getattr(r, metric) for r in self.records], dtype=float)
        return np.array([r.phases[phase][metric] for r in self.records], dtype=float)


@dataclass
class Campaign:
    config: ScenarioConfig
    seeds: List[int]
    points: List[PointResult] = field(default_factory=list)


def mean_std(values: np.ndarray):
    """Mean and sample standard deviation over the defined (non-NaN) values."""
    values = values[~np.isnan(values)]
    if values.size == 0:
        return math.nan, math.nan
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return mean, std


def _run_one(task):
    scenario, seed = task
    return RunRecord.of(seed, run_round(scenario.with_seed(seed)))


def run_campaign(
    config: ScenarioConfig,
    parallel: int = 1,
    on_point: Optional[Callable[[Campaign], None]] = None,
) -> Campaign:
    """Run every point of ``config``; ``on_point`` sees the campaign after each point."""
    seeds = config.seed_list()
    campaign = Campaign(config, seeds)
    pool = multiprocessing.get_context("fork").Pool(parallel) if parallel > 1 else None
    try:
        for index, values in enumerate(config.points()):
            scenario = config.scenario(values, seed=0)
            tasks = [(scenario, s) for s in seeds]
            log.info("point %d %s: %d runs", index, values or "(base)", len(tasks))
            try:
                records = pool.map(_run_one, tasks) if pool else [_run_one(t) for t in tasks]
            except Exception as exc:
                raise CampaignError(f"point {index} {values}: {type(exc).__name__}: {exc}", campaign) from exc
            campaign.points.append(PointResult(index, values, scenario, records))
            if on_point is not None:
                on_point(campaign)
    finally:
        if pool is not None:
            pool.terminate()
    return campaign


# -- tables ----------------------------------------------------------------


def _point_cells(campaign: Campaign, point: PointResult) -> Dict[str, Any]:
    sc = point.scenario
    t_min, t_max, t_ele = sc.time_params
    return {
        "point": point.index,
        "n": sc.n,
        "j": sc.j,
        "q": sc.quorum,
        "blame_kind": sc.blame_kind.value,
        "byzantine_behavior": sc.byzantine_behavior.value,
        "adversary_fraction": float(sc.adversary_fraction),
        "t_min_ms": t_min / 1000,
        "t_max_ms": t_max / 1000,
        "t_ele_ms": t_ele / 1000,
    }


def _ledger_cells(campaign: Campaign, point: PointResult) -> Dict[str, Any]:
    master = campaign.config.master_seed
    return {
        "runs": len(point.records),
        "completed_runs": sum(r.completed for r in point.records),
        "master_seed": master,
        "seeds": ";".join(str(r.seed) for r in point.records),
    }


def phase_rows(campaign: Campaign) -> List[Dict[str, Any]]:
    """One row per parameter point per phase, plus a ``Total`` row."""
    rows = []
    for point in campaign.points:
        shared = {}
        for m in RUN_METRICS:
            shared[f"{m}_mean"], shared[f"{m}_std"] = mean_std(point.column(m))
        for phase in point.phase_names:
            row = _point_cells(campaign, point)
            row["phase"] = phase
            for m in PHASE_METRICS:
                row[f"{m}_mean"], row[f"{m}_std"] = mean_std(point.column(m, phase))
            row.update(shared)
            row.update(_ledger_cells(campaign, point))
            rows.append(row)
    return rows


def wait_rows(campaign: Campaign) -> List[Dict[str, Any]]:
    """One row per (t_max, t_ele) point: round time and the election metrics."""
    rows = []
    for point in campaign.points:
        row = _point_cells(campaign, point)
        row["round_time_s_mean"], row["round_time_s_std"] = mean_std(point.column("completion_s", TOTAL))
        for m in RUN_METRICS:
            row[f"{m}_mean"], row[f"{m}_std"] = mean_std(point.column(m))
        row["all_decided_runs"] = int((point.column("decisions_reached") == point.scenario.j).sum())
        row.update(_ledger_cells(campaign, point))
        rows.append(row)
    return rows


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def to_json(rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> str:
    def clean(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    body = {"columns": list(columns), "rows": [{c: clean(row[c]) for c in columns} for row in rows]}
    return json.dumps(body, indent=1) + "\n"


def _parse_cell(column: str, text: str) -> Any:
    if column in _STR_COLUMNS:
        return text
    if column == "master_seed":
        return None if text == "" else int(text)
    if column in _INT_COLUMNS:
        return int(text)
    return float(text)


def read_table(path: Path) -> List[Dict[str, Any]]:
    """Parse a table written by :func:`write_table` (CSV or JSON)."""
    path = Path(path)
    if path.suffix == ".json":
        body = json.loads(path.read_text())
        return [
            {c: math.nan if v is None and c != "master_seed" else v for c, v in row.items()}
            for row in body["rows"]
        ]
    with path.open(newline="") as fh:
        return [{c: _parse_cell(c, v) for c, v in row.items()} for row in csv.DictReader(fh)]


def write_table(rows: List[Dict[str, Any]], columns: Sequence[str], out_dir: Path, stem: str, fmt: str) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        path = out_dir / f"{stem}.csv"
        path.write_text(to_csv(rows, columns))
        written.append(path)
    if fmt in ("json", "both"):
        path = out_dir / f"{stem}.json"
        path.write_text(to_json(rows, columns))
        written.append(path)
    return written


def default_parallel() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1
