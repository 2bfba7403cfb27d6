"""Command-line entry point: validate-config, run, sweep and render."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, ScenarioConfig, load_mapping, parse_override, resolve_mapping
from .fire_world import generate_survey_points
from .render import FrameFormatError, render_file
from .sim_engine import build_masks, resolve_launch, run

logger = logging.getLogger("swarmsar")

EXIT_OK, EXIT_ERROR, EXIT_INCOMPLETE = 0, 1, 2


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def load_scenario(path, overrides=(), seed=None, planner=None) -> ScenarioConfig:
    """Read a TOML scenario or a run manifest and apply command-line overrides."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            flat = dict(_flatten_manifest(json.loads(path.read_text())))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError([f"{path}: not a run manifest ({exc})"]) from None
    else:
        flat = load_mapping(path)
    for item in overrides:
        key, value = parse_override(item)
        flat[key] = value
    if seed is not None:
        flat["sim.seed"] = seed
    if planner is not None:
        flat["planner.kind"] = planner
    return resolve_mapping(flat)


def _flatten_manifest(manifest: dict):
    for section, values in manifest["config"].items():
        for leaf, value in values.items():
            if value is not None:
                yield f"{section}.{leaf}", value


def execute(config: ScenarioConfig, out_dir: Path) -> tuple[int, dict]:
    """Run one scenario into ``out_dir``; returns (exit status, summary record)."""
    if not out_dir.parent.exists():
        raise FileNotFoundError(f"parent directory of {out_dir} does not exist")
    out_dir.mkdir(exist_ok=True)
    masks = build_masks(config)
    if config.launch_position is None:
        launch = resolve_launch(config, generate_survey_points(masks[0], config.cell_size))
        config = config.replace(launch_x=launch[0], launch_y=launch[1])
    manifest = {
        "tool": "swarmsar",
        "version": __version__,
        "seed": config.seed,
        "started_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "config": config.to_nested(),
        "outputs": {"metrics": "metrics.jsonl", "frames": "frames.jsonl"},
    }
    _write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    result = run(config, masks)
    _write_atomic(out_dir / "metrics.jsonl", result.metrics.to_jsonl())
    _write_atomic(out_dir / "frames.jsonl", result.frames_jsonl())
    summary = result.metrics.summary
    complete = summary["all_complete"] and summary["mean_coverage"] == 1.0
    return (EXIT_OK if complete else EXIT_INCOMPLETE), summary


def cmd_validate(args) -> int:
    try:
        config = load_scenario(args.file, args.set)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(config.to_nested(), indent=2))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = load_scenario(args.scenario, args.set, args.seed, args.planner)
        status, summary = execute(config, Path(args.out))
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(
        f"coverage {summary['mean_coverage']:.3f}, "
        f"max completion {_minutes(summary['max_completion_time_s'])}, "
        f"{'complete' if status == EXIT_OK else 'INCOMPLETE'}"
    )
    return status


def _minutes(seconds):
    return "n/a" if seconds is None else f"{seconds / 60:.1f} min"


def parse_int_list(text: str) -> list[int]:
    """``8,12`` or ``1..5`` (inclusive) or a mix such as ``1..3,7``."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if ".." in part:
            lo, _, hi = part.partition("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _sweep_one(job):
    config, out_dir = job
    try:
        status, summary = execute(config, Path(out_dir))
        return {"ok": True, "status": status, "summary": summary}
    except Exception as exc:  # recorded, the sweep carries on
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def sweep(base: ScenarioConfig, fleets, seeds, out_dir: Path, jobs: int = 1) -> list[dict]:
    if not fleets or not seeds:
        raise ValueError("fleet and seed lists must not be empty")
    out_dir.mkdir(exist_ok=True)
    grid = [(n, s) for n in fleets for s in seeds]
    work = [(base.replace(uav_count=n, seed=s), str(out_dir / f"fleet_{n}_seed_{s}")) for n, s in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, work))
    else:
        results = [_sweep_one(w) for w in work]

    rows = []
    for n in fleets:
        runs = [r for (fn, _), r in zip(grid, results) if fn == n]
        good = [r["summary"] for r in runs if r["ok"]]
        completions = [g["mean_completion_time_s"] for g in good if g["mean_completion_time_s"] is not None]
        rows.append({
            "fleet": n,
            "runs": len(runs),
            "failed": len(runs) - len(good),
            "incomplete": sum(1 for r in runs if r["ok"] and r["status"] != EXIT_OK),
            "mean_coverage": sum(g["mean_coverage"] for g in good) / len(good) if good else None,
            "mean_completion_time_s": sum(completions) / len(completions) if completions else None,
        })
    for (n, s), r in zip(grid, results):
        if not r["ok"]:
            logger.error("run fleet=%d seed=%d failed: %s", n, s, r["error"])
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _write_atomic(out_dir / "summary.csv", buf.getvalue())
    return rows


def cmd_sweep(args, parser) -> int:
    try:
        fleets = parse_int_list(args.fleets)
        seeds = parse_int_list(args.seeds)
    except ValueError:
        parser.error("--fleets and --seeds take comma lists or a..b ranges of integers")
    if not fleets or not seeds:
        parser.error("--fleets and --seeds must not be empty")
    try:
        base = load_scenario(args.scenario, args.set, planner=args.planner)
        out = Path(args.out)
        if not out.parent.exists():
            raise FileNotFoundError(f"parent directory of {out} does not exist")
        rows = sweep(base, fleets, seeds, out, args.jobs)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{'fleet':>5} {'runs':>4} {'failed':>6} {'coverage':>8} {'completion':>11}")
    for r in rows:
        cov = "n/a" if r["mean_coverage"] is None else f"{r['mean_coverage']:.3f}"
        print(f"{r['fleet']:>5} {r['runs']:>4} {r['failed']:>6} {cov:>8} {_minutes(r['mean_completion_time_s']):>11}")
    return EXIT_ERROR if any(r["failed"] for r in rows) else EXIT_OK


def cmd_render(args) -> int:
    try:
        render_file(args.frames, args.svg, args.time, args.update_index)
    except (FrameFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmsar", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-config", help="resolve a scenario file and report every problem")
    p.add_argument("file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("--scenario", required=True, help="TOML scenario or manifest.json of an earlier run")
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--planner", choices=("greedy", "cluster", "remote"))

    p = sub.add_parser("sweep", help="run every (fleet size, seed) pair")
    p.add_argument("--scenario", required=True)
    p.add_argument("--fleets", required=True, help="e.g. 8,12")
    p.add_argument("--seeds", required=True, help="e.g. 1..5")
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--planner", choices=("greedy", "cluster", "remote"))
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("render", help="draw an SVG snapshot from a frame stream")
    p.add_argument("--frames", required=True)
    p.add_argument("--svg", required=True)
    p.add_argument("--time", type=float, default=0.0, help="simulated time of the snapshot in seconds")
    p.add_argument("--update-index", type=int, help="update index to draw (snapshot streams)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "validate-config":
        return cmd_validate(args)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "sweep":
        return cmd_sweep(args, parser)
    return cmd_render(args)


if __name__ == "__main__":
    sys.exit(main())
