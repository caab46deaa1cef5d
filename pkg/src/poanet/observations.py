"""Speed-record ingestion and flow-observation files.

Observed spatial average speeds convert to flows through the parabolic
speed-flow relation q = 4 q_max (v/v_f)(1 - v/v_f), which peaks at q_max when
the speed is half the free-flow speed. Records aggregate into one flow vector
per (window, day); windows are named daily time ranges, optionally restricted
to weekdays or weekends.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import BadRow, EmptyWindow, NonPositiveFreeFlowSpeed
from .inverse_vi import ObservationSet
from .network import FlowVector, Network

__all__ = [
    "SpeedRecord",
    "Window",
    "greenshield_flow",
    "parse_window_spec",
    "read_speed_csv",
    "aggregate_observations",
    "read_flow_file",
    "write_flow_file",
]


@dataclass(frozen=True)
class SpeedRecord:
    link_id: int
    timestamp: datetime
    average_speed: float       # mph
    free_flow_speed: float     # mph

    def __post_init__(self):
        if self.average_speed < 0:
            raise ValueError(f"negative speed {self.average_speed}")
        if self.free_flow_speed <= 0:
            raise NonPositiveFreeFlowSpeed(f"free-flow speed {self.free_flow_speed}")


def greenshield_flow(speed: float, free_flow_speed: float, capacity: float) -> float:
    """Flow implied by a spatial average speed under the parabolic model.

    Speeds above the free-flow speed clamp to it (zero flow) with a warning.
    Note the same flow arises at speeds v and v_f - v; speeds below half the
    free-flow speed sit on the congested branch.
    """
    if free_flow_speed <= 0:
        raise NonPositiveFreeFlowSpeed(f"free-flow speed {free_flow_speed}")
    if speed < 0:
        raise ValueError(f"negative speed {speed}")
    if speed > free_flow_speed:
        warnings.warn(f"speed {speed} above free-flow {free_flow_speed}; clamped")
        speed = free_flow_speed
    ratio = speed / free_flow_speed
    return 4.0 * capacity * ratio * (1.0 - ratio)


@dataclass(frozen=True)
class Window:
    """Daily time range [start, end) in minutes, wrapping past midnight."""

    name: str
    start_minute: int
    end_minute: int
    days: str = "any"  # any | weekday | weekend

    def contains(self, ts: datetime) -> bool:
        if self.days == "weekday" and ts.weekday() >= 5:
            return False
        if self.days == "weekend" and ts.weekday() < 5:
            return False
        minute = ts.hour * 60 + ts.minute
        if self.start_minute < self.end_minute:
            return self.start_minute <= minute < self.end_minute
        return minute >= self.start_minute or minute < self.end_minute


def _parse_minute(text: str) -> int:
    hh, _, mm = text.partition(":")
    minute = int(hh) * 60 + int(mm or 0)
    if not (0 <= minute <= 24 * 60):
        raise ValueError(f"time of day out of range: {text!r}")
    return minute


def parse_window_spec(spec: str) -> list[Window]:
    """Parse e.g. ``"AM=06:30-09:00@weekday,WD=06:00-20:00@weekend"``."""
    windows = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, rest = part.partition("=")
        if not sep:
            raise ValueError(f"window {part!r} missing '='")
        rest, _, days = rest.partition("@")
        days = days or "any"
        if days not in ("any", "weekday", "weekend"):
            raise ValueError(f"window {name!r}: unknown day filter {days!r}")
        start_str, sep, end_str = rest.partition("-")
        if not sep:
            raise ValueError(f"window {name!r} missing a time range")
        start = _parse_minute(start_str.strip())
        end = _parse_minute(end_str.strip())
        windows.append(Window(name.strip(), start % (24 * 60),
                              end if end == 24 * 60 else end % (24 * 60), days))
    if not windows:
        raise ValueError("empty window specification")
    return windows


def read_speed_csv(path) -> list[SpeedRecord]:
    """Read ``link_id,timestamp,speed,free_flow_speed`` rows."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise BadRow(1, "empty speed file")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 4:
                raise BadRow(lineno, f"expected 4 columns, got {len(row)}")
            try:
                records.append(SpeedRecord(int(row[0]),
                                           datetime.fromisoformat(row[1].strip()),
                                           float(row[2]), float(row[3])))
            except NonPositiveFreeFlowSpeed:
                raise
            except ValueError as exc:
                raise BadRow(lineno, str(exc)) from None
    return records


def aggregate_observations(records, windows, network: Network,
                           demand=None) -> ObservationSet:
    """One flow vector per (window, day) from per-link mean converted flows.

    Links without records in a group get zero flow; their counts land in the
    metadata. Raises EmptyWindow when a window matches no record at all.
    Flows convert through :func:`greenshield_flow` using each record's
    free-flow speed and the link's capacity.
    """
    if isinstance(windows, str):
        windows = parse_window_spec(windows)
    groups: dict = {}
    for rec in records:
        if not (0 <= rec.link_id < network.n_links):
            raise ValueError(f"record references unknown link {rec.link_id}")
        for w in windows:
            if w.contains(rec.timestamp):
                groups.setdefault((w.name, rec.timestamp.date()), []).append(rec)

    matched = {name for (name, _) in groups}
    for w in windows:
        if w.name not in matched:
            raise EmptyWindow(f"window {w.name!r} matched no speed records")

    order = {w.name: i for i, w in enumerate(windows)}
    keys = sorted(groups, key=lambda k: (order[k[0]], k[1]))

    flows = []
    labels = []
    missing_links = []
    congested_fraction = []
    for key in keys:
        per_link: dict[int, list[float]] = {}
        congested = 0
        for rec in groups[key]:
            q = greenshield_flow(rec.average_speed, rec.free_flow_speed,
                                 network.capacities[rec.link_id])
            per_link.setdefault(rec.link_id, []).append(q)
            if rec.average_speed < 0.5 * rec.free_flow_speed:
                congested += 1
        vec = np.zeros(network.n_links)
        for lid, vals in per_link.items():
            vec[lid] = float(np.mean(vals))
        flows.append(FlowVector(vec))
        labels.append(f"{key[0]}@{key[1].isoformat()}")
        missing_links.append(network.n_links - len(per_link))
        congested_fraction.append(congested / len(groups[key]))

    demands = None
    if demand is not None:
        demands = tuple(demand for _ in flows)
    meta = {
        "missing_links": missing_links,
        "congested_fraction": [float(c) for c in congested_fraction],
    }
    return ObservationSet((network,), tuple(flows), demands, tuple(labels), meta)


def read_flow_file(path, n_links: int | None = None):
    """Read a flow CSV: either ``link_id,flow`` or ``link_id,obs_1..obs_K``.

    Returns (labels, list of arrays). Rows may be in any link order; ids must
    form exactly 0..n-1.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "link_id":
            raise BadRow(1, "expected a header starting with link_id")
        labels = [h.strip() for h in header[1:]]
        if not labels:
            raise BadRow(1, "no flow columns in header")
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                lid = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise BadRow(lineno, str(exc)) from None
            if len(vals) != len(labels):
                raise BadRow(lineno, f"expected {len(labels)} values, got {len(vals)}")
            if lid in rows:
                raise BadRow(lineno, f"duplicate link id {lid}")
            rows[lid] = vals
    ids = sorted(rows)
    if ids != list(range(len(ids))):
        raise BadRow(1, "link ids must form a contiguous 0-based range")
    if n_links is not None and len(ids) != n_links:
        raise BadRow(1, f"expected {n_links} links, file has {len(ids)}")
    matrix = np.array([rows[i] for i in ids], dtype=float)
    return labels, [matrix[:, k].copy() for k in range(matrix.shape[1])]


def write_flow_file(path, flows, labels=None) -> None:
    """Write flow vectors as ``link_id,obs_1..obs_K`` (or a named header)."""
    arrays = [f.values if isinstance(f, FlowVector) else np.asarray(f, dtype=float)
              for f in flows]
    if labels is None:
        labels = (["flow"] if len(arrays) == 1
                  else [f"obs_{k + 1}" for k in range(len(arrays))])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("link_id," + ",".join(labels) + "\n")
        for lid in range(len(arrays[0])):
            vals = ",".join(f"{a[lid]:.12g}" for a in arrays)
            fh.write(f"{lid},{vals}\n")
