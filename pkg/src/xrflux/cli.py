"""Command-line pipeline: simulate -> derive -> irm -> replay -> report.

Stages communicate only through files, so externally produced logs and
traces can be dropped in at any point. Every stage writes through a
temp-file rename and records output hashes in the out-directory manifest.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import cachesim, scenario, service, trace as trace_mod

MANIFEST_NAME = "manifest.json"


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_produce(path: Path, writer) -> None:
    """Run writer(tmp_path) then rename the result into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return f"sha256:{digest.hexdigest()}"


def _update_manifest(out_dir: Path, stage: str, info: dict, files: list[Path]) -> None:
    manifest_path = out_dir / MANIFEST_NAME
    manifest = {"stages": []}
    if manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            manifest = {"stages": []}
    entry = {
        "stage": stage,
        "completed_at": datetime.now(timezone.utc).isoformat(),
        **info,
        "files": {p.name: _sha256(p) for p in files},
    }
    manifest.setdefault("stages", []).append(entry)
    _atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")


def _parse_capacities(text: str) -> list[int]:
    try:
        caps = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"capacities must be a comma-separated list of integers: {text!r}")
    if not caps or any(c < 1 for c in caps):
        raise ValueError("capacities must be positive integers")
    return caps


def _parse_labeled_traces(items: list[str]) -> list[tuple[str, trace_mod.RequestTrace]]:
    labeled = []
    for item in items:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise ValueError(f"--trace expects LABEL=PATH, got {item!r}")
        labeled.append((label, trace_mod.read_trace(path)))
    return labeled


def _load_delay_config(path: str | None, seed: int) -> cachesim.DelayModelConfig:
    if path is None:
        return cachesim.DelayModelConfig(seed=seed)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"delay config {path}: top level must be an object")
    unknown = set(data) - {"wireless_ms", "cloud_rtt_ms", "seed"}
    if unknown:
        raise ValueError(f"delay config {path}: unknown field {sorted(unknown)[0]!r}")
    base = cachesim.DelayModelConfig()
    cfg = cachesim.DelayModelConfig(
        wireless_ms=(
            cachesim.sampler_spec_from_dict(data["wireless_ms"])
            if "wireless_ms" in data
            else base.wireless_ms
        ),
        cloud_rtt_ms=(
            cachesim.sampler_spec_from_dict(data["cloud_rtt_ms"])
            if "cloud_rtt_ms" in data
            else base.cloud_rtt_ms
        ),
        seed=int(data.get("seed", seed)),
    )
    cfg.validate()
    return cfg


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.config:
        cfg = scenario.load_config(args.config)
    else:
        cfg = scenario.ScenarioConfig()
    if args.seed is not None:
        cfg = scenario.config_from_dict({**cfg.to_dict(), "seed": args.seed})
    cfg.validate()
    out_dir = Path(args.out)
    log = scenario.run_simulation(cfg)
    log_path = out_dir / args.name
    _atomic_produce(log_path, lambda tmp: scenario.write_log(log, tmp))
    _update_manifest(
        out_dir,
        "simulate",
        {"config": args.config or "defaults", "seed": cfg.seed, "config_hash": cfg.config_hash()},
        [log_path],
    )
    print(f"wrote {log_path} ({len(log.events)} events)")
    return 0


def cmd_derive(args) -> int:
    log = scenario.read_log(args.log)
    derived = trace_mod.derive_requests(log, args.strategy)
    out_dir = Path(args.out)
    name = args.name or f"trace_{args.strategy}.trace"
    trace_path = out_dir / name
    _atomic_produce(trace_path, lambda tmp: trace_mod.write_trace(derived, tmp))
    _update_manifest(
        out_dir,
        "derive",
        {"log": str(args.log), "strategy": args.strategy, "seed": derived.seed},
        [trace_path],
    )
    print(f"wrote {trace_path} ({len(derived.records)} records)")
    return 0


def cmd_irm(args) -> int:
    source = trace_mod.read_trace(args.trace)
    synthesized = trace_mod.generate_irm(source, seed=args.seed)
    out_dir = Path(args.out)
    trace_path = out_dir / args.name
    _atomic_produce(trace_path, lambda tmp: trace_mod.write_trace(synthesized, tmp))
    _update_manifest(
        out_dir, "irm", {"trace": str(args.trace), "seed": args.seed}, [trace_path]
    )
    print(f"wrote {trace_path} ({len(synthesized.records)} records)")
    return 0


def cmd_replay(args) -> int:
    labeled = _parse_labeled_traces(args.trace)
    capacities = _parse_capacities(args.capacities)
    delays = _load_delay_config(args.delay_config, args.seed)
    rows, reports = cachesim.sweep(labeled, capacities, delays, deadline_ms=args.deadline_ms)
    urows = cachesim.user_rows(
        labeled, args.user_capacity, delays, deadline_ms=args.deadline_ms, reports=reports
    )
    out_dir = Path(args.out)
    sweep_path = out_dir / "sweep.csv"
    users_path = out_dir / "users.csv"
    _atomic_produce(sweep_path, lambda tmp: cachesim.write_sweep_csv(rows, tmp))
    _atomic_produce(users_path, lambda tmp: cachesim.write_users_csv(urows, tmp))
    _update_manifest(
        out_dir,
        "replay",
        {
            "traces": dict(item.split("=", 1) for item in args.trace),
            "capacities": capacities,
            "user_capacity": args.user_capacity,
            "seed": args.seed,
        },
        [sweep_path, users_path],
    )
    print(f"wrote {sweep_path} and {users_path}")
    return 0


def cmd_serve(args) -> int:
    host, _, port_text = args.listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"--listen expects HOST:PORT, got {args.listen!r}")
    cfg = service.ServiceConfig(
        host=host,
        port=int(port_text),
        capacity=args.capacity,
        delays=_load_delay_config(args.delay_config, args.seed),
        payload_bytes=args.payload_bytes,
        mode=args.mode,
        catalog_size=args.objects,
    )
    server = service.make_server(cfg)
    bound_host, bound_port = server.server_address[:2]
    print(f"edge cache listening on http://{bound_host}:{bound_port} (capacity {cfg.capacity})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_replay_http(args) -> int:
    labeled = _parse_labeled_traces(args.trace)
    capacities = _parse_capacities(args.capacities)
    rows = service.sweep_http(args.endpoint, labeled, capacities)
    urows = service.user_rows_http(args.endpoint, labeled, args.user_capacity)
    out_dir = Path(args.out)
    sweep_path = out_dir / "sweep.csv"
    users_path = out_dir / "users.csv"
    _atomic_produce(sweep_path, lambda tmp: cachesim.write_sweep_csv(rows, tmp))
    _atomic_produce(users_path, lambda tmp: cachesim.write_users_csv(urows, tmp))
    _update_manifest(
        out_dir,
        "replay-http",
        {
            "endpoint": args.endpoint,
            "traces": dict(item.split("=", 1) for item in args.trace),
            "capacities": capacities,
            "user_capacity": args.user_capacity,
        },
        [sweep_path, users_path],
    )
    print(f"wrote {sweep_path} and {users_path}")
    return 0


def _read_csv_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise ValueError(f"{path}: expected header {expected_header}, got {header}")
        return list(reader)


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    produced: list[Path] = []
    if args.depth:
        depth_rows: list[cachesim.DepthRow] = []
        for item in args.depth:
            label, sep, run_dir = item.partition("=")
            if not sep or not label or not run_dir:
                raise ValueError(f"--depth expects DEPTH=RUN_DIR, got {item!r}")
            depth = float(label)
            rows = _read_csv_rows(
                Path(run_dir) / "sweep.csv", ["capacity", "strategy", "requests", "hits", "hit_rate"]
            )
            strategies = {row[1] for row in rows}
            if len(strategies) != 1:
                raise ValueError(
                    f"{run_dir}/sweep.csv holds {len(strategies)} strategies; "
                    "a depth merge needs single-strategy runs"
                )
            for row in rows:
                depth_rows.append(cachesim.DepthRow(depth, int(row[0]), float(row[4])))
        depth_path = out_dir / "depth_sweep.csv"
        _atomic_produce(depth_path, lambda tmp: cachesim.write_depth_csv(depth_rows, tmp))
        produced.append(depth_path)
    if args.runs:
        merged_sweep: list[list[str]] = []
        merged_users: list[list[str]] = []
        for run_dir in args.runs:
            run = Path(run_dir)
            sweep_file = run / "sweep.csv"
            if sweep_file.exists():
                merged_sweep.extend(
                    _read_csv_rows(sweep_file, ["capacity", "strategy", "requests", "hits", "hit_rate"])
                )
            users_file = run / "users.csv"
            if users_file.exists():
                merged_users.extend(
                    _read_csv_rows(
                        users_file,
                        ["user_id", "strategy", "requests", "hits", "hit_rate", "mean_delay_ms"],
                    )
                )
        if merged_sweep:
            path = out_dir / "sweep.csv"

            def write_sweep(tmp):
                with open(tmp, "w", encoding="utf-8", newline="") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["capacity", "strategy", "requests", "hits", "hit_rate"])
                    writer.writerows(merged_sweep)

            _atomic_produce(path, write_sweep)
            produced.append(path)
        if merged_users:
            path = out_dir / "users.csv"

            def write_users(tmp):
                with open(tmp, "w", encoding="utf-8", newline="") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(
                        ["user_id", "strategy", "requests", "hits", "hit_rate", "mean_delay_ms"]
                    )
                    writer.writerows(merged_users)

            _atomic_produce(path, write_users)
            produced.append(path)
    if not produced:
        raise ValueError("report produced no files; pass --runs and/or --depth inputs")
    _update_manifest(
        out_dir,
        "report",
        {"runs": args.runs or [], "depth": args.depth or []},
        produced,
    )
    for p in produced:
        print(f"wrote {p}")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xrflux",
        description="Simulate VR FoV workloads and replay them through an edge cache.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the world simulation and write a visibility log")
    p.add_argument("--config", help="JSON scenario config (defaults used when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--name", default="visibility.log", help="log file name")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("derive", help="derive a request trace from a visibility log")
    p.add_argument("--log", required=True, help="visibility log path")
    p.add_argument("--strategy", required=True, choices=trace_mod.STRATEGIES)
    p.add_argument("--out", required=True)
    p.add_argument("--name", help="trace file name (default trace_<strategy>.trace)")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("irm", help="rewrite a demand trace with IRM (uniform) timestamps")
    p.add_argument("--trace", required=True, help="input demand trace path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="trace_irm.trace")
    p.set_defaults(func=cmd_irm)

    p = sub.add_parser("replay", help="replay traces through the in-process cache")
    p.add_argument(
        "--trace", action="append", required=True, metavar="LABEL=PATH",
        help="labeled trace, repeatable",
    )
    p.add_argument("--capacities", required=True, help="comma-separated cache sizes")
    p.add_argument("--user-capacity", type=int, default=5, help="capacity for users.csv")
    p.add_argument("--seed", type=int, default=0, help="delay stream seed")
    p.add_argument("--deadline-ms", type=float, default=100.0)
    p.add_argument("--delay-config", help="JSON delay model config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the edge cache HTTP service")
    p.add_argument("--listen", default="127.0.0.1:8080", metavar="HOST:PORT")
    p.add_argument("--capacity", type=int, default=64)
    p.add_argument("--seed", type=int, default=0, help="delay stream seed")
    p.add_argument("--mode", choices=service.MODES, default=service.MODE_LOGICAL)
    p.add_argument("--payload-bytes", type=int, default=1024)
    p.add_argument("--objects", type=int, help="catalog size (any id accepted when omitted)")
    p.add_argument("--delay-config", help="JSON delay model config")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay-http", help="replay traces against a live edge service")
    p.add_argument("--endpoint", required=True, help="service base URL, e.g. http://127.0.0.1:8080")
    p.add_argument("--trace", action="append", required=True, metavar="LABEL=PATH")
    p.add_argument("--capacities", required=True)
    p.add_argument("--user-capacity", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay_http)

    p = sub.add_parser("report", help="merge replay outputs into figure-ready tables")
    p.add_argument("--runs", nargs="*", help="run directories whose CSVs are concatenated")
    p.add_argument(
        "--depth", nargs="*", metavar="DEPTH=RUN_DIR",
        help="single-strategy run directories keyed by immediate-FoV depth",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
