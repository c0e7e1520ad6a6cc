"""Post-run metric extraction from event logs.

Three metric kinds: counters (record count or details-field sum over a
filtered event type), durations (start/end pairs keyed by subject), and
time-weighted averages of a resource count at one location.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

from .model import MetricDecl


def percentile(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile on an already-sorted sequence."""
    if not sorted_values:
        return math.nan
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def duration_stats(durations: Iterable[float], unpaired: int = 0) -> dict:
    values = sorted(durations)
    if not values:
        return {"count": 0, "unpaired": unpaired, "mean": math.nan,
                "median": math.nan, "p90": math.nan, "max": math.nan}
    n = len(values)
    mid = n // 2
    median = values[mid] if n % 2 else (values[mid - 1] + values[mid]) / 2.0
    return {
        "count": n,
        "unpaired": unpaired,
        "mean": sum(values) / n,
        "median": median,
        "p90": percentile(values, 0.9),
        "max": values[-1],
    }


def _matches(details: Mapping, where: Mapping | None) -> bool:
    if not where:
        return True
    return all(details.get(k) == v for k, v in where.items())


def count_events(log, event_type: str, where: Mapping | None = None,
                 sum_field: str | None = None) -> float:
    total = 0.0
    for record in log:
        if record.event_type != event_type or not _matches(record.details, where):
            continue
        total += record.details.get(sum_field, 0) if sum_field else 1
    return total


def collect_durations(log, start_type: str, end_types: Sequence[str],
                      where: Mapping | None = None) -> tuple[list[float], int]:
    """Pair each subject's start with its earliest following end."""
    ends = set(end_types)
    open_starts: dict[str, float] = {}
    durations: list[float] = []
    unpaired = 0
    for record in log:
        if record.event_type == start_type and _matches(record.details, where):
            if record.subject in open_starts:
                unpaired += 1
            open_starts[record.subject] = record.time
        elif record.event_type in ends and record.subject in open_starts:
            durations.append(record.time - open_starts.pop(record.subject))
    unpaired += len(open_starts)
    return durations, unpaired


def time_weighted_count(log, initial_counts: Mapping, resource_kind: str,
                        location: str, horizon: float) -> float:
    """Average number of `resource_kind` atoms at `location` over the run.

    Reconstructed from the `op` bookkeeping each engine record carries.
    Integration runs to max(horizon, last event time); a zero-length window
    returns the initial count.
    """
    count = initial_counts.get((location, resource_kind), 0)
    t_prev = 0.0
    area = 0.0
    t_end = horizon
    for record in log:
        t_end = max(t_end, record.time)
    for record in log:
        delta = 0
        op = record.details.get("op")
        kinds = record.details.get("kinds", {})
        if op == "move":
            if record.details.get("to") == location:
                delta += kinds.get(resource_kind, 0)
            if record.details.get("from") == location:
                delta -= kinds.get(resource_kind, 0)
        elif op == "claim" and record.details.get("at") == location:
            delta -= kinds.get(resource_kind, 0)
        elif op in ("release", "place") and record.details.get("at", record.location) == location:
            delta += kinds.get(resource_kind, 0)
        elif op == "action" and record.location == location:
            delta += record.details.get("created_kinds", {}).get(resource_kind, 0)
            delta -= record.details.get("destroyed_kinds", {}).get(resource_kind, 0)
        if delta:
            area += count * (record.time - t_prev)
            t_prev = record.time
            count += delta
    if t_end <= 0.0:
        return float(count)
    area += count * (t_end - t_prev)
    return area / t_end


def summarize_run(result, decls: Sequence[MetricDecl], horizon: float | None = None) -> dict:
    """Evaluate declared metrics over one run's log."""
    if horizon is None:
        horizon = result.config.get("horizon", 0.0)
    out: dict = {}
    for decl in decls:
        p = decl.params
        if decl.kind == "counter":
            out[decl.name] = count_events(
                result.log, p["event_type"], p.get("where"), p.get("sum_field"))
        elif decl.kind == "duration":
            durations, unpaired = collect_durations(
                result.log, p["start_type"], p["end_types"], p.get("where"))
            scale = p.get("scale", 1.0)
            stats = duration_stats([d / scale for d in durations], unpaired)
            out[decl.name] = stats
        elif decl.kind == "time_weighted":
            out[decl.name] = time_weighted_count(
                result.log, result.initial_counts, p["resource_kind"],
                p["location"], horizon)
    return out


def flatten_metrics(metrics: Mapping) -> dict:
    """Flatten nested duration stats into dotted scalar columns for CSV."""
    flat: dict = {}
    for name, value in metrics.items():
        if isinstance(value, Mapping):
            for stat, v in value.items():
                flat[f"{name}.{stat}"] = v
        else:
            flat[name] = value
    return flat
