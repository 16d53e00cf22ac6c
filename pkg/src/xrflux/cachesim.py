"""Trace replay through pluggable cache policies with delay modeling.

Replay processes records in trace order. A demand hit costs one wireless
sample; a demand miss costs wireless plus a cloud round-trip and admits the
object (the controller fetch path). Prefetch accesses warm the cache but
never charge user-visible delay; their remote fetches are tallied separately.

The delay model keeps independent seeded substreams for the wireless hop and
the cloud RTT, so sampled sequences depend only on per-stream draw counts.
This makes in-process replay and the HTTP service produce identical delays
for the same request order.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .trace import KIND_DEMAND, RequestTrace, validate_sorted


class CachePolicy(Protocol):
    """Behavioral contract every replaceable cache policy satisfies."""

    capacity: int

    def lookup(self, key: int) -> bool: ...

    def admit(self, key: int) -> None: ...

    def resident_count(self) -> int: ...


class LruCache:
    """Least-recently-used cache over unit-size objects."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: OrderedDict[int, None] = OrderedDict()

    def lookup(self, key: int) -> bool:
        entries = self._entries
        if key in entries:
            entries.move_to_end(key)
            return True
        return False

    def admit(self, key: int) -> None:
        entries = self._entries
        if key in entries:
            entries.move_to_end(key)
            return
        entries[key] = None
        if len(entries) > self.capacity:
            entries.popitem(last=False)

    def access(self, key: int) -> bool:
        """Combined lookup with admit-on-miss; returns whether it was a hit."""
        entries = self._entries
        if key in entries:
            entries.move_to_end(key)
            return True
        entries[key] = None
        if len(entries) > self.capacity:
            entries.popitem(last=False)
        return False

    def resident_count(self) -> int:
        return len(self._entries)

    def resident(self) -> list[int]:
        """Resident keys in LRU-to-MRU order."""
        return list(self._entries)

    def clear(self) -> None:
        self._entries.clear()

    def __contains__(self, key: int) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)


# --- delay model -----------------------------------------------------------


@dataclass(frozen=True)
class ConstantDelay:
    value_ms: float

    def validate(self) -> None:
        if self.value_ms < 0.0:
            raise ValueError("constant delay must be >= 0")


@dataclass(frozen=True)
class EmpiricalDelay:
    values_ms: tuple[float, ...]
    weights: tuple[float, ...]

    def validate(self) -> None:
        if not self.values_ms:
            raise ValueError("empirical delay needs at least one value")
        if len(self.values_ms) != len(self.weights):
            raise ValueError("empirical delay values and weights must have equal length")
        if any(v < 0.0 for v in self.values_ms):
            raise ValueError("empirical delay values must be >= 0")
        if any(w < 0.0 for w in self.weights) or sum(self.weights) <= 0.0:
            raise ValueError("empirical delay weights must be >= 0 with positive sum")


@dataclass(frozen=True)
class LognormalDelay:
    mu: float
    sigma: float

    def validate(self) -> None:
        if self.sigma < 0.0:
            raise ValueError("lognormal sigma must be >= 0")


SamplerSpec = ConstantDelay | EmpiricalDelay | LognormalDelay


def sampler_spec_from_dict(data: dict) -> SamplerSpec:
    kind = data.get("kind")
    if kind == "constant":
        spec: SamplerSpec = ConstantDelay(float(data["value_ms"]))
    elif kind == "empirical":
        spec = EmpiricalDelay(
            tuple(float(v) for v in data["values_ms"]),
            tuple(float(w) for w in data["weights"]),
        )
    elif kind == "lognormal":
        spec = LognormalDelay(float(data["mu"]), float(data["sigma"]))
    else:
        raise ValueError(f"unknown delay sampler kind {kind!r}")
    spec.validate()
    return spec


def sampler_spec_to_dict(spec: SamplerSpec) -> dict:
    if isinstance(spec, ConstantDelay):
        return {"kind": "constant", "value_ms": spec.value_ms}
    if isinstance(spec, EmpiricalDelay):
        return {"kind": "empirical", "values_ms": list(spec.values_ms), "weights": list(spec.weights)}
    return {"kind": "lognormal", "mu": spec.mu, "sigma": spec.sigma}


@dataclass(frozen=True)
class DelayModelConfig:
    """Wireless-hop and cloud-RTT samplers plus the stream seed.

    The shipped defaults are placeholders chosen to look like a nearby
    wireless hop and a regional cloud round-trip; they are configuration, not
    measurements, and every experiment can override them.
    """

    wireless_ms: SamplerSpec = field(default_factory=lambda: LognormalDelay(math.log(10.0), 0.5))
    cloud_rtt_ms: SamplerSpec = field(
        default_factory=lambda: EmpiricalDelay((30.0, 40.0, 60.0), (0.5, 0.3, 0.2))
    )
    seed: int = 0

    def validate(self) -> None:
        self.wireless_ms.validate()
        self.cloud_rtt_ms.validate()
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError("delay seed must be an integer in [0, 2**64)")


class _Stream:
    """Buffered sampler; the value sequence depends only on (spec, rng seed)."""

    _CHUNK = 4096

    def __init__(self, spec: SamplerSpec, rng: np.random.Generator):
        self._rng = rng
        if isinstance(spec, ConstantDelay):
            self._draw: Callable[[int], np.ndarray] = lambda n: np.full(n, spec.value_ms)
        elif isinstance(spec, EmpiricalDelay):
            values = np.asarray(spec.values_ms, dtype=np.float64)
            weights = np.asarray(spec.weights, dtype=np.float64)
            p = weights / weights.sum()
            self._draw = lambda n: self._rng.choice(values, size=n, p=p)
        else:
            self._draw = lambda n: self._rng.lognormal(spec.mu, spec.sigma, n)
        self._buf = self._draw(self._CHUNK)
        self._pos = 0

    def next(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._draw(self._CHUNK)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return float(v)

    def take(self, n: int) -> np.ndarray:
        """Next n values as an array; numpy streams are chunk-size invariant,
        so this equals n successive next() calls."""
        out = np.empty(n, dtype=np.float64)
        avail = len(self._buf) - self._pos
        k = min(avail, n)
        if k:
            out[:k] = self._buf[self._pos : self._pos + k]
            self._pos += k
        if k < n:
            out[k:] = self._draw(n - k)
        return out


class DelayModel:
    def __init__(self, cfg: DelayModelConfig):
        cfg.validate()
        self._wireless = _Stream(cfg.wireless_ms, np.random.default_rng([cfg.seed, 0]))
        self._rtt = _Stream(cfg.cloud_rtt_ms, np.random.default_rng([cfg.seed, 1]))

    def wireless(self) -> float:
        return self._wireless.next()

    def cloud_rtt(self) -> float:
        return self._rtt.next()


# --- replay ----------------------------------------------------------------


@dataclass
class UserReport:
    user_id: int
    requests: int
    hits: int
    hit_rate: float
    mean_delay_ms: float


@dataclass
class ReplayReport:
    demand_requests: int
    demand_hits: int
    hit_rate: float
    prefetch_fetches: int
    deadline_ms: float
    deadline_miss_fraction: float
    delay_mean_ms: float
    delay_p50_ms: float
    delay_p95_ms: float
    delay_p99_ms: float
    per_user: dict[int, UserReport]
    no_requests: bool


def replay(
    trace: RequestTrace,
    policy: CachePolicy,
    delays: DelayModelConfig,
    deadline_ms: float = 100.0,
    _validate: bool = True,
) -> ReplayReport:
    """Replay a sorted trace through a policy and tally hit/delay metrics.

    Cache decisions run record by record; delays are then assigned in bulk
    from the two substreams (wireless per demand in order, RTT per miss in
    order), which matches the per-request draws the HTTP service makes.
    """
    if _validate:
        validate_sorted(trace)
    access: Callable[[int], bool] | None = getattr(policy, "access", None)
    if access is None:
        lookup, admit = policy.lookup, policy.admit

        def access(key: int) -> bool:
            if lookup(key):
                return True
            admit(key)
            return False

    demand = KIND_DEMAND
    demand_uids: list[int] = []
    hit_flags: list[bool] = []
    push_uid = demand_uids.append
    push_hit = hit_flags.append
    prefetch_fetches = 0
    for rec in trace.records:
        if rec.kind == demand:
            push_uid(rec.user_id)
            push_hit(access(rec.object_id))
        elif not access(rec.object_id):
            prefetch_fetches += 1

    n = len(demand_uids)
    if n == 0:
        return ReplayReport(
            demand_requests=0,
            demand_hits=0,
            hit_rate=0.0,
            prefetch_fetches=prefetch_fetches,
            deadline_ms=deadline_ms,
            deadline_miss_fraction=0.0,
            delay_mean_ms=0.0,
            delay_p50_ms=0.0,
            delay_p95_ms=0.0,
            delay_p99_ms=0.0,
            per_user={},
            no_requests=True,
        )

    model = DelayModel(delays)
    hits = np.asarray(hit_flags, dtype=bool)
    uids = np.asarray(demand_uids, dtype=np.int64)
    demand_hits = int(hits.sum())
    delay = model._wireless.take(n)
    n_miss = n - demand_hits
    if n_miss:
        delay[~hits] += model._rtt.take(n_miss)
    deadline_misses = int((delay > deadline_ms).sum())

    minlen = int(uids.max()) + 1
    req_by_user = np.bincount(uids, minlength=minlen)
    hits_by_user = np.bincount(uids[hits], minlength=minlen)
    delay_by_user = np.bincount(uids, weights=delay, minlength=minlen)
    users = {}
    for uid in np.flatnonzero(req_by_user):
        uid = int(uid)
        req = int(req_by_user[uid])
        h = int(hits_by_user[uid])
        users[uid] = UserReport(
            user_id=uid,
            requests=req,
            hits=h,
            hit_rate=h / req,
            mean_delay_ms=float(delay_by_user[uid]) / req,
        )
    p50, p95, p99 = (float(v) for v in np.percentile(delay, [50.0, 95.0, 99.0]))
    return ReplayReport(
        demand_requests=n,
        demand_hits=demand_hits,
        hit_rate=demand_hits / n,
        prefetch_fetches=prefetch_fetches,
        deadline_ms=deadline_ms,
        deadline_miss_fraction=deadline_misses / n,
        delay_mean_ms=float(delay.mean()),
        delay_p50_ms=p50,
        delay_p95_ms=p95,
        delay_p99_ms=p99,
        per_user=users,
        no_requests=False,
    )


# --- sweeps and report tables ----------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    capacity: int
    strategy: str
    requests: int
    hits: int
    hit_rate: float


@dataclass(frozen=True)
class UserRow:
    user_id: int
    strategy: str
    requests: int
    hits: int
    hit_rate: float
    mean_delay_ms: float


@dataclass(frozen=True)
class DepthRow:
    depth: float
    capacity: int
    hit_rate: float


def sweep(
    labeled_traces: Sequence[tuple[str, RequestTrace]],
    capacities: Sequence[int],
    delays: DelayModelConfig,
    deadline_ms: float = 100.0,
    policy_factory: Callable[[int], CachePolicy] = LruCache,
) -> tuple[list[SweepRow], dict[tuple[int, str], ReplayReport]]:
    """Replay every trace at every capacity with fresh policy and delay streams."""
    if not capacities:
        raise ValueError("capacity list must be non-empty")
    for _, tr in labeled_traces:
        validate_sorted(tr)
    rows: list[SweepRow] = []
    reports: dict[tuple[int, str], ReplayReport] = {}
    for cap in capacities:
        for label, tr in labeled_traces:
            rep = replay(tr, policy_factory(cap), delays, deadline_ms, _validate=False)
            rows.append(SweepRow(cap, label, rep.demand_requests, rep.demand_hits, rep.hit_rate))
            reports[(cap, label)] = rep
    return rows, reports


def user_rows(
    labeled_traces: Sequence[tuple[str, RequestTrace]],
    capacity: int,
    delays: DelayModelConfig,
    deadline_ms: float = 100.0,
    policy_factory: Callable[[int], CachePolicy] = LruCache,
    reports: dict[tuple[int, str], ReplayReport] | None = None,
) -> list[UserRow]:
    """Per-user hit/delay table at one capacity, one row per (user, strategy).

    Every user seen under any strategy gets a row for all strategies so bar
    charts stay aligned.
    """
    per_strategy: dict[str, ReplayReport] = {}
    for label, tr in labeled_traces:
        rep = None if reports is None else reports.get((capacity, label))
        if rep is None:
            rep = replay(tr, policy_factory(capacity), delays, deadline_ms)
        per_strategy[label] = rep
    all_users = sorted({uid for rep in per_strategy.values() for uid in rep.per_user})
    rows: list[UserRow] = []
    for uid in all_users:
        for label, _ in labeled_traces:
            u = per_strategy[label].per_user.get(uid)
            if u is None:
                rows.append(UserRow(uid, label, 0, 0, 0.0, 0.0))
            else:
                rows.append(UserRow(uid, label, u.requests, u.hits, u.hit_rate, u.mean_delay_ms))
    return rows


def write_sweep_csv(rows: Iterable[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["capacity", "strategy", "requests", "hits", "hit_rate"])
        for r in rows:
            writer.writerow([r.capacity, r.strategy, r.requests, r.hits, f"{r.hit_rate:.6f}"])


def write_users_csv(rows: Iterable[UserRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "strategy", "requests", "hits", "hit_rate", "mean_delay_ms"])
        for r in rows:
            writer.writerow(
                [r.user_id, r.strategy, r.requests, r.hits, f"{r.hit_rate:.6f}", f"{r.mean_delay_ms:.6f}"]
            )


def write_depth_csv(rows: Iterable[DepthRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["S", "capacity", "hit_rate"])
        for r in rows:
            writer.writerow([f"{r.depth:g}", r.capacity, f"{r.hit_rate:.6f}"])
