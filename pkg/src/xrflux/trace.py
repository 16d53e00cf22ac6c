"""Request-trace derivation from visibility logs, IRM synthesis, and trace I/O.

Three request strategies map enter events to cache accesses:

  standard  - demand on immediate-FoV entry
  extended  - demand on predicted-FoV entry
  prefetch  - cache-side prefetch on predicted entry plus demand on
              immediate entry

The IRM baseline keeps every (user, object) record but redraws timestamps
i.i.d. uniform over the trace span, which is a Poisson process conditioned on
the per-object counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import FOV_IMMEDIATE, FOV_PREDICTED
from .scenario import TRANSITION_ENTER, VisibilityLog, event_sort_key

KIND_DEMAND = "demand"
KIND_PREFETCH = "prefetch"

STRATEGY_STANDARD = "standard"
STRATEGY_EXTENDED = "extended"
STRATEGY_PREFETCH = "prefetch"
STRATEGIES = (STRATEGY_STANDARD, STRATEGY_EXTENDED, STRATEGY_PREFETCH)

TRACE_HEADER_PREFIX = "#xrflux-trace v1"

_KIND_CODE = {KIND_DEMAND: "D", KIND_PREFETCH: "P"}
_CODE_KIND = {"D": KIND_DEMAND, "P": KIND_PREFETCH}
# Prefetch sorts ahead of demand at an equal (time, user, object) so a
# same-instant prefetch can never hurt its own demand.
_KIND_RANK = {KIND_PREFETCH: 0, KIND_DEMAND: 1}


@dataclass(frozen=True, slots=True)
class RequestRecord:
    time: float
    user_id: int
    object_id: int
    kind: str
    distance: float


@dataclass
class RequestTrace:
    seed: int
    config_hash: str
    records: list[RequestRecord]


def record_sort_key(rec: RequestRecord) -> tuple:
    return (rec.time, rec.user_id, rec.object_id, _KIND_RANK[rec.kind])


def validate_sorted(trace: RequestTrace) -> None:
    prev = None
    for i, rec in enumerate(trace.records):
        key = record_sort_key(rec)
        if prev is not None and key < prev:
            raise ValueError(f"trace is not sorted at record {i}")
        prev = key


def derive_requests(log: VisibilityLog, strategy: str) -> RequestTrace:
    """Map a visibility log to a request trace under one strategy."""
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    prev_key = None
    records: list[RequestRecord] = []
    for i, ev in enumerate(log.events):
        key = event_sort_key(ev)
        if prev_key is not None and key < prev_key:
            raise ValueError(f"visibility log is not sorted at event {i}")
        prev_key = key
        if ev.transition != TRANSITION_ENTER:
            continue
        if strategy == STRATEGY_STANDARD:
            if ev.fov == FOV_IMMEDIATE:
                records.append(
                    RequestRecord(ev.time, ev.user_id, ev.object_id, KIND_DEMAND, ev.distance)
                )
        elif strategy == STRATEGY_EXTENDED:
            if ev.fov == FOV_PREDICTED:
                records.append(
                    RequestRecord(ev.time, ev.user_id, ev.object_id, KIND_DEMAND, ev.distance)
                )
        else:  # prefetch
            if ev.fov == FOV_PREDICTED:
                records.append(
                    RequestRecord(ev.time, ev.user_id, ev.object_id, KIND_PREFETCH, ev.distance)
                )
            else:
                records.append(
                    RequestRecord(ev.time, ev.user_id, ev.object_id, KIND_DEMAND, ev.distance)
                )
    records.sort(key=record_sort_key)
    return RequestTrace(seed=log.seed, config_hash=log.config_hash, records=records)


def generate_irm(trace: RequestTrace, seed: int) -> RequestTrace:
    """Redraw record timestamps i.i.d. Uniform(0, T); counts are preserved."""
    for i, rec in enumerate(trace.records):
        if rec.kind != KIND_DEMAND:
            raise ValueError(f"IRM input must contain only demand records (record {i})")
    if not trace.records:
        return RequestTrace(seed=seed, config_hash=trace.config_hash, records=[])
    horizon = max(rec.time for rec in trace.records)
    rng = np.random.default_rng(seed)
    times = rng.uniform(0.0, horizon, len(trace.records))
    records = [
        RequestRecord(round(float(t), 6), rec.user_id, rec.object_id, rec.kind, rec.distance)
        for rec, t in zip(trace.records, times)
    ]
    records.sort(key=record_sort_key)
    return RequestTrace(seed=seed, config_hash=trace.config_hash, records=records)


def write_trace(trace: RequestTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{TRACE_HEADER_PREFIX} seed={trace.seed} config={trace.config_hash}\n")
        for rec in trace.records:
            fh.write(
                f"{rec.time:.6f},{rec.user_id},{rec.object_id},"
                f"{_KIND_CODE[rec.kind]},{rec.distance!r}\n"
            )


def read_trace(path) -> RequestTrace:
    """Parse a trace file, validating format and sort order.

    Timestamps carry six decimal places on disk, and are quantized to six
    decimals at generation time, so write/read round-trips are bit-exact.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        seed, config_hash = _parse_trace_header(header, path)
        records: list[RequestRecord] = []
        prev_key = None
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(f"{path}: line {lineno}: expected 5 fields, got {len(parts)}")
            try:
                t = float(parts[0])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad time_s field") from None
            try:
                uid = int(parts[1])
                oid = int(parts[2])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad user_id/object_id field") from None
            kind = _CODE_KIND.get(parts[3])
            if kind is None:
                raise ValueError(f"{path}: line {lineno}: bad kind field {parts[3]!r}")
            try:
                dist = float(parts[4])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad distance field") from None
            rec = RequestRecord(t, uid, oid, kind, dist)
            key = record_sort_key(rec)
            if prev_key is not None and key < prev_key:
                raise ValueError(f"{path}: unsorted at line {lineno}")
            prev_key = key
            records.append(rec)
    return RequestTrace(seed=seed, config_hash=config_hash, records=records)


def _parse_trace_header(header: str, path) -> tuple[int, str]:
    parts = header.split(" ")
    if (
        len(parts) != 4
        or " ".join(parts[:2]) != TRACE_HEADER_PREFIX
        or not parts[2].startswith("seed=")
        or not parts[3].startswith("config=")
    ):
        raise ValueError(f"{path}: line 1: malformed header")
    try:
        seed = int(parts[2][len("seed="):])
    except ValueError:
        raise ValueError(f"{path}: line 1: malformed seed in header") from None
    return seed, parts[3][len("config="):]
