"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The default scenario
(2 principals, 8 groupies, 200 objects, 600 s, seed 42) is simulated once per
session and reused across the trend criteria.
"""

import math
import threading
import time
from collections import Counter
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from xrflux.cachesim import DelayModelConfig, LruCache, replay, sweep, user_rows
from xrflux.cli import main as cli_main
from xrflux.geometry import FOV_IMMEDIATE, FOV_PREDICTED, FovSpec, Vec3
from xrflux.motion import (
    ROLE_GROUPIE,
    ROLE_PRINCIPAL,
    MotionConfig,
    UserState,
    step_groupie,
    step_principal,
)
from xrflux.geometry import OrientationYPR
from xrflux.scenario import ScenarioConfig, run_simulation
from xrflux.service import ServiceConfig, EdgeClient, make_server, replay_trace_http
from xrflux.trace import (
    KIND_DEMAND,
    KIND_PREFETCH,
    RequestRecord,
    RequestTrace,
    STRATEGY_EXTENDED,
    STRATEGY_PREFETCH,
    STRATEGY_STANDARD,
    derive_requests,
    generate_irm,
)

DELAYS = DelayModelConfig(seed=1)
SWEEP_CAPACITIES = [2, 4, 6, 8, 12, 16]
USER_CAPACITY = 5


def report_line(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[ACCEPTANCE] {name}: {status}{suffix}")


@pytest.fixture(scope="module")
def default_run():
    cfg = ScenarioConfig()
    assert (cfg.n_principals, cfg.n_groupies, cfg.n_objects) == (2, 8, 200)
    assert cfg.duration_s == 600.0 and cfg.seed == 42
    t0 = time.perf_counter()
    log = run_simulation(cfg)
    sim_seconds = time.perf_counter() - t0
    std = derive_requests(log, STRATEGY_STANDARD)
    ext = derive_requests(log, STRATEGY_EXTENDED)
    pre = derive_requests(log, STRATEGY_PREFETCH)
    irm = generate_irm(std, seed=777)
    return SimpleNamespace(
        cfg=cfg, log=log, std=std, ext=ext, pre=pre, irm=irm, sim_seconds=sim_seconds
    )


@pytest.fixture(scope="module")
def lru_battery():
    """100 random traces x capacities 1..16: fast-vs-oracle decisions and hits."""
    rng = np.random.default_rng(2024)
    capacities = list(range(1, 17))
    mismatches = 0
    hits_by_capacity: list[list[int]] = []  # one row of per-capacity hits per trace
    t0 = time.perf_counter()
    for _ in range(100):
        keys = rng.integers(0, 50, 10_000).tolist()
        row = []
        for capacity in capacities:
            fast = LruCache(capacity)
            access = fast.access
            oracle: list[int] = []  # independent list-scan LRU
            hits = 0
            for k in keys:
                got = access(k)
                if k in oracle:
                    oracle.remove(k)
                    oracle.append(k)
                    want = True
                else:
                    if len(oracle) == capacity:
                        del oracle[0]
                    oracle.append(k)
                    want = False
                if got is not want:
                    mismatches += 1
                hits += got
            row.append(hits)
        hits_by_capacity.append(row)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(
        elapsed=elapsed, mismatches=mismatches, hits_by_capacity=hits_by_capacity
    )


def test_c01_lru_oracle_equivalence(lru_battery):
    ok = lru_battery.mismatches == 0 and lru_battery.elapsed < 30.0
    report_line(
        "LRU oracle equivalence",
        ok,
        f"mismatches={lru_battery.mismatches}, elapsed={lru_battery.elapsed:.1f}s",
    )
    assert lru_battery.mismatches == 0
    assert lru_battery.elapsed < 30.0


def test_c02_lru_inclusion_property(lru_battery):
    violations = sum(
        1
        for row in lru_battery.hits_by_capacity
        for a, b in zip(row, row[1:])
        if b < a
    )
    report_line("LRU inclusion property", violations == 0, f"violations={violations}")
    assert violations == 0


def test_c03_irm_conservation_and_exponentiality():
    rng = np.random.default_rng(6)
    n = 10_000
    records = [
        RequestRecord(
            round(float(t), 6), int(u), int(o), KIND_DEMAND, float(d)
        )
        for t, u, o, d in zip(
            np.sort(rng.uniform(0.0, 600.0, n)),
            rng.integers(0, 10, n),
            rng.integers(0, 200, n),
            rng.uniform(0.0, 20.0, n),
        )
    ]
    source = RequestTrace(seed=42, config_hash="0" * 16, records=records)
    out = generate_irm(source, seed=99)
    same_objects = Counter(r.object_id for r in out.records) == Counter(
        r.object_id for r in records
    )
    same_users = Counter(r.user_id for r in out.records) == Counter(
        r.user_id for r in records
    )
    gaps = np.diff(np.sort([r.time for r in out.records]))
    p_value = stats.kstest(gaps, stats.expon(scale=gaps.mean()).cdf).pvalue
    ok = same_objects and same_users and p_value > 0.01
    report_line(
        "IRM conservation + exponential inter-arrivals",
        ok,
        f"counts_ok={same_objects and same_users}, ks_p={p_value:.3f}",
    )
    assert same_objects and same_users
    assert p_value > 0.01


def test_c04_depth_sweep_trend(default_run):
    depths = [5.0, 10.0, 20.0, 40.0]
    hit_rates = []
    for depth in depths:
        if depth == default_run.cfg.immediate_fov.depth:
            std = default_run.std
        else:
            cfg = ScenarioConfig(
                immediate_fov=FovSpec(FOV_IMMEDIATE, math.radians(110.0), depth),
                predicted_fov=FovSpec(
                    FOV_PREDICTED,
                    math.radians(140.0),
                    max(depth, ScenarioConfig().predicted_fov.depth),
                ),
            )
            std = derive_requests(run_simulation(cfg), STRATEGY_STANDARD)
        rep = replay(std, LruCache(USER_CAPACITY), DELAYS)
        hit_rates.append(rep.hit_rate)
    inversions = [
        b - a for a, b in zip(hit_rates, hit_rates[1:]) if b > a
    ]
    ok = len(inversions) <= 1 and all(v <= 0.02 for v in inversions)
    report_line(
        "depth sweep hit-rate trend",
        ok,
        "hit_rates=" + ", ".join(f"S={s:g}:{h:.4f}" for s, h in zip(depths, hit_rates)),
    )
    assert ok, f"hit rates not non-increasing within tolerance: {hit_rates}"


def test_c05_strategy_sweep_trends(default_run):
    labeled = [
        ("standard", default_run.std),
        ("prefetch", default_run.pre),
        ("irm", default_run.irm),
    ]
    rows, _ = sweep(labeled, SWEEP_CAPACITIES, DELAYS)
    rates = {(r.capacity, r.strategy): r.hit_rate for r in rows}
    prefetch_ok = all(
        rates[(c, "prefetch")] >= rates[(c, "standard")] - 0.005 for c in SWEEP_CAPACITIES
    )
    gap_count = sum(
        1 for c in SWEEP_CAPACITIES if abs(rates[(c, "irm")] - rates[(c, "standard")]) >= 0.02
    )
    irm_ok = gap_count >= len(SWEEP_CAPACITIES) / 2
    report_line(
        "strategy sweep trends",
        prefetch_ok and irm_ok,
        f"prefetch>=standard at all caps: {prefetch_ok}; irm gap at {gap_count}/{len(SWEEP_CAPACITIES)} caps",
    )
    assert prefetch_ok, {c: (rates[(c, 'standard')], rates[(c, 'prefetch')]) for c in SWEEP_CAPACITIES}
    assert irm_ok


def test_c06_per_user_report_structure(default_run):
    labeled = [
        ("standard", default_run.std),
        ("extended", default_run.ext),
        ("prefetch", default_run.pre),
    ]
    rows = user_rows(labeled, USER_CAPACITY, DELAYS)
    seen = {(r.user_id, r.strategy) for r in rows}
    want = {
        (uid, strategy)
        for uid in range(default_run.cfg.n_users())
        for strategy in ("standard", "extended", "prefetch")
    }
    structure_ok = want <= seen
    rates = {(r.user_id, r.strategy): r.hit_rate for r in rows}
    principals_ok = all(
        rates[(uid, "standard")] <= rates[(uid, "prefetch")] for uid in (0, 1)
    )
    report_line(
        "per-user report structure",
        structure_ok and principals_ok,
        f"rows={len(rows)}, principal std<=prefetch: {principals_ok}",
    )
    assert structure_ok, sorted(want - seen)
    assert principals_ok, {uid: (rates[(uid, 'standard')], rates[(uid, 'prefetch')]) for uid in (0, 1)}


def test_c07_motion_invariants_million_steps():
    total_steps = 0
    worst_speed_err = 0.0
    ok = True
    for seed in (1, 12345, 987654321):
        cfg = MotionConfig(
            universe_half_extent=1.0,
            timestep_s=0.05,
            principal_speed=2.0,
            max_attraction=5.0,
            diffusion_bound=1.0,
            groupie_max_speed=8.0,
        )
        u = cfg.universe_half_extent
        rng = np.random.default_rng([seed, 0])
        s = UserState(0, ROLE_PRINCIPAL, Vec3(0, 0, 0), Vec3(2, 0, 0), OrientationYPR(0, 0, 0))
        for _ in range(170_000):
            s = step_principal(s, cfg, rng)
            total_steps += 1
            p = s.position
            if max(abs(p.x), abs(p.y), abs(p.z)) > u:
                ok = False
            err = abs(s.velocity.norm() - cfg.principal_speed)
            worst_speed_err = max(worst_speed_err, err)
        rng = np.random.default_rng([seed, 1])
        principal_pos = Vec3(0.9, -0.9, 0.9)
        g = UserState(1, ROLE_GROUPIE, Vec3(0, 0, 0), Vec3(0, 0, 0), OrientationYPR(0, 0, 0))
        for _ in range(170_000):
            g = step_groupie(g, principal_pos, cfg, rng)
            total_steps += 1
            p = g.position
            if max(abs(p.x), abs(p.y), abs(p.z)) > u:
                ok = False
            if g.velocity.norm() > cfg.groupie_max_speed + 1e-9:
                ok = False
    speed_ok = worst_speed_err <= 1e-9
    report_line(
        "motion invariants over 1e6 steps",
        ok and speed_ok and total_steps >= 1_000_000,
        f"steps={total_steps}, worst principal speed error={worst_speed_err:.2e}",
    )
    assert total_steps >= 1_000_000
    assert ok
    assert speed_ok


def _pipeline(tmp_path, name):
    import json

    out = tmp_path / name
    config = tmp_path / "config.json"
    if not config.exists():
        config.write_text(
            json.dumps(
                {
                    "seed": 42,
                    "duration_s": 60.0,
                    "n_principals": 2,
                    "n_groupies": 4,
                    "n_objects": 100,
                }
            )
        )
    assert cli_main(["simulate", "--config", str(config), "--out", str(out)]) == 0
    log = out / "visibility.log"
    for strategy in ("standard", "extended", "prefetch"):
        assert cli_main(["derive", "--log", str(log), "--strategy", strategy, "--out", str(out)]) == 0
    assert cli_main(
        ["irm", "--trace", str(out / "trace_standard.trace"), "--seed", "31", "--out", str(out)]
    ) == 0
    assert cli_main(
        [
            "replay",
            "--trace", f"standard={out / 'trace_standard.trace'}",
            "--trace", f"extended={out / 'trace_extended.trace'}",
            "--trace", f"prefetch={out / 'trace_prefetch.trace'}",
            "--trace", f"irm={out / 'trace_irm.trace'}",
            "--capacities", "2,4,6,8,12,16",
            "--seed", "7",
            "--out", str(out),
        ]
    ) == 0
    assert cli_main(["report", "--runs", str(out), "--out", str(out / "merged")]) == 0
    names = [
        "visibility.log",
        "trace_standard.trace",
        "trace_extended.trace",
        "trace_prefetch.trace",
        "trace_irm.trace",
        "sweep.csv",
        "users.csv",
        "merged/sweep.csv",
        "merged/users.csv",
    ]
    return {n: (out / n).read_bytes() for n in names}


def test_c08_pipeline_determinism(tmp_path):
    first = _pipeline(tmp_path, "run1")
    second = _pipeline(tmp_path, "run2")
    diffs = [n for n in first if first[n] != second[n]]
    report_line("end-to-end determinism", not diffs, f"files={len(first)}, diffs={diffs}")
    assert not diffs


def test_c09_service_equivalence(default_run):
    records = default_run.pre.records[:10_000]
    assert len(records) == 10_000
    trace = RequestTrace(seed=0, config_hash="0" * 16, records=records)
    delays = DelayModelConfig(seed=17)
    capacity = 8

    server = make_server(ServiceConfig(port=0, capacity=capacity, delays=delays))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        host, port = server.server_address[:2]
        url = f"http://{host}:{port}"
        client = EdgeClient(url)
        http_hits, _, _ = replay_trace_http(client, trace)
        client.close()

        # In-process reference: prefetches mutate the cache but only demand
        # decisions are compared, mirroring what the client observes.
        cache = LruCache(capacity)
        expect_hits = []
        for rec in records:
            hit = cache.access(rec.object_id)
            if rec.kind == KIND_DEMAND:
                expect_hits.append(hit)
        sequence_ok = http_hits == expect_hits

        # Concurrent-load counter consistency.
        consistency_ok = True
        errors = []

        def hammer(worker):
            try:
                c = EdgeClient(url)
                rng = np.random.default_rng(worker)
                for _ in range(500):
                    c.get_object(int(rng.integers(0, 50)), worker)
                c.close()
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        probe = EdgeClient(url)
        probe.reset()
        threads = [threading.Thread(target=hammer, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        snapshots = []
        while any(t.is_alive() for t in threads):
            snapshots.append(probe.stats())
        for t in threads:
            t.join()
        snapshots.append(probe.stats())
        probe.close()
        for snap in snapshots:
            if snap["hits"] + snap["misses"] != snap["demand_requests"]:
                consistency_ok = False
        total_ok = snapshots[-1]["demand_requests"] == 8 * 500 and not errors
    finally:
        server.shutdown()
        server.server_close()

    ok = sequence_ok and consistency_ok and total_ok
    report_line(
        "service equivalence + stats consistency",
        ok,
        f"sequence_ok={sequence_ok}, snapshots={len(snapshots)}, consistent={consistency_ok}",
    )
    assert sequence_ok
    assert consistency_ok
    assert total_ok


def test_c10_performance_budget(default_run):
    sim_ok = default_run.sim_seconds < 60.0

    rng = np.random.default_rng(0)
    n = 1_000_000
    records = [
        RequestRecord(float(i), int(u), int(k), KIND_DEMAND, 1.0)
        for i, (u, k) in enumerate(zip(rng.integers(0, 10, n), rng.integers(0, 1000, n)))
    ]
    trace = RequestTrace(seed=0, config_hash="0" * 16, records=records)
    t0 = time.perf_counter()
    sweep([("standard", trace)], list(range(1, 17)), DELAYS)
    sweep_seconds = time.perf_counter() - t0
    sweep_ok = sweep_seconds < 30.0
    report_line(
        "performance budget",
        sim_ok and sweep_ok,
        f"default sim {default_run.sim_seconds:.1f}s < 60s; 1e6x16 sweep {sweep_seconds:.1f}s < 30s",
    )
    assert sim_ok
    assert sweep_ok
