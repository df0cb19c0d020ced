"""Operator entry point: validate, run, render, replay, serve, diff.

Exit codes: 0 ok, 1 internal failure, 2 invalid config/input, 3 traces
diverge (diff only).  TSH_LOG sets the log level and never influences
simulation output.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from .config import load_config, parse_config, validate_config
from .env import Env, serve_stdio, serve_tcp
from .errors import ConfigInvalid, MalformedFile, SkygroundError, UnknownCamera
from .events import structural_diff
from .render import export_frame
from .world import trace_hash

log = logging.getLogger("skyground")


def _load_validated(path, seed=None):
    return load_config(path, seed)


def cmd_validate(args) -> int:
    try:
        doc = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
        cfg = parse_config(doc, Path(args.scenario).parent)
    except (OSError, json.JSONDecodeError, SkygroundError, ValueError) as e:
        print(f"error: {e}")
        return 2
    rep = validate_config(cfg)
    for e in rep.errors:
        print(f"error: {e}")
    for w in rep.warnings:
        print(f"warning: {w}")
    print(f"{len(rep.errors)} error(s), {len(rep.warnings)} warning(s)")
    return 0 if rep.ok else 2


def cmd_run(args) -> int:
    try:
        cfg = _load_validated(args.scenario, args.seed)
    except (ConfigInvalid, MalformedFile) as e:
        print(f"error: {e}")
        return 2
    t0 = time.perf_counter()
    env = Env(cfg)
    env.reset()
    done = False
    while not done and env.world.tick < cfg.horizon:
        done = env.step({})["done"]
    wall = time.perf_counter() - t0
    data = env.trace_bytes()
    if args.out:
        Path(args.out).write_bytes(data)
    h = trace_hash(data)
    print(f"trace_hash {h}")
    print(f"ticks {env.world.tick} entities {len(env.world.entities)} "
          f"spawned {env.world.spawned_total} despawned {env.world.despawned_total} "
          f"wall_s {wall:.2f}")
    return 0


def cmd_render(args) -> int:
    try:
        cfg = _load_validated(args.scenario, args.seed)
    except (ConfigInvalid, MalformedFile) as e:
        print(f"error: {e}")
        return 2
    if args.tick > cfg.horizon:
        print(f"error: tick {args.tick} beyond horizon {cfg.horizon}")
        return 2
    env = Env(cfg)
    env.reset()
    for _ in range(args.tick):
        env.step({})
    cameras = args.camera or [c.id for c in cfg.cameras]
    outdir = Path(args.out or "frames")
    count = 0
    for cid in cameras:
        try:
            frame = env.render_camera(cid, args.modality or None)
        except UnknownCamera:
            print(f"error: unknown camera {cid}")
            return 2
        for path in export_frame(frame, outdir):
            print(path)
            count += 1
    log.info("exported %d files", count)
    return 0


def _read_trace(path):
    records = []
    with open(path, "rb") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def cmd_replay(args) -> int:
    try:
        data = Path(args.trace).read_bytes()
        records = _read_trace(args.trace)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}")
        return 2
    if not records:
        print("error: empty trace")
        return 2
    counts = [len(r.get("entities", {})) for r in records]
    delivered = sum(r.get("delivered", 0) for r in records)
    print(f"trace_hash {trace_hash(data)}")
    print(f"ticks {records[0]['tick']}..{records[-1]['tick']} records {len(records)}")
    print(f"entities min {min(counts)} max {max(counts)} final {counts[-1]}")
    print(f"delivered_messages {delivered}")
    return 0


def cmd_diff(args) -> int:
    ignore = set(filter(None, (args.ignore_fields or "").split(",")))
    try:
        a, b = _read_trace(args.trace_a), _read_trace(args.trace_b)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}")
        return 2

    def strip(rec):
        return {k: v for k, v in rec.items() if k not in ignore}

    n = min(len(a), len(b))
    for i in range(n):
        ra, rb = strip(a[i]), strip(b[i])
        if ra != rb:
            paths = structural_diff(ra, rb)
            print(f"first divergent tick {a[i].get('tick', i)}")
            for p in paths[:20]:
                print(f"  differs: {p}")
            if len(paths) > 20:
                print(f"  ... {len(paths) - 20} more")
            return 3
    if len(a) != len(b):
        print(f"first divergent tick {min(len(a), len(b))} (length mismatch)")
        return 3
    print("identical")
    return 0


def cmd_serve(args) -> int:
    if args.stdio:
        serve_stdio()
    else:
        serve_tcp(args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skyground")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="run a scenario headless")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="trace output path (JSON Lines)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("render", help="simulate to a tick and export frames")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tick", type=int, default=0)
    p.add_argument("--camera", action="append", default=None)
    p.add_argument("--modality", action="append", default=None,
                   choices=["RGB", "SEMANTIC", "DEPTH"])
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("replay", help="statistics from a recorded trace")
    p.add_argument("trace")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("diff", help="compare two traces")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--ignore-fields", default="",
                   help="comma-separated top-level record fields to ignore")
    p.set_defaults(fn=cmd_diff)

    p = sub.add_parser("serve", help="run the wire-protocol server")
    p.add_argument("--port", type=int, default=7781)
    p.add_argument("--stdio", action="store_true")
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TSH_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SkygroundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # internal failure
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
