"""Command-line entry point.

    lossfl run     --config F --out D [--seed S] [--jobs N] [--rounds T]
    lossfl matrix  --config F --out D [--seed S] [--jobs N] [--rounds T]
    lossfl trace   --input F --speed-threshold X --out D [--loss-threshold L]
    lossfl presets

``--config`` also accepts a shipped preset name (see ``lossfl presets``).
``LOSSFL_OUT`` supplies the output directory when ``--out`` is omitted.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

from . import trace
from .config import ConfigError, build_grid, cell_key, load_experiment, load_grid
from .orchestrator import run_experiment, run_matrix
from .report import emit_csv, emit_summary, summarize_final

log = logging.getLogger("lossfl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def preset_files() -> dict[str, Path]:
    root = resources.files("lossfl") / "presets"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml")}


def _resolve(config: str) -> Path:
    path = Path(config)
    if path.exists():
        return path
    presets = preset_files()
    if config in presets:
        return presets[config]
    return path


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("LOSSFL_OUT")
    if not out:
        raise ConfigError("no output directory: pass --out or set LOSSFL_OUT")
    return Path(out)


def _override(obj, **changes):
    changes = {k: v for k, v in changes.items() if v is not None}
    try:
        return dataclasses.replace(obj, **changes) if changes else obj
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args) -> int:
    cfg = _override(load_experiment(_resolve(args.config)), seed=args.seed, rounds=args.rounds)
    out = _out_dir(args)
    key = cell_key(cfg)
    log.info("running %s for %d rounds (seed %d)", key, cfg.rounds, cfg.seed)
    records = run_experiment(cfg, jobs=args.jobs)
    path = emit_csv(records, out / f"{key}.csv")
    if records:
        row = summarize_final(records, cfg.variant, cfg.dataset, cfg.eligible_ratio, cfg.loss_ratio)
    else:
        row = {"algorithm": cfg.variant, "dataset": cfg.dataset, "eligible_ratio": cfg.eligible_ratio,
               "loss_ratio": cfg.loss_ratio, "status": "ok"}
    emit_summary([row], out / "summary.csv")
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_matrix(args) -> int:
    grid = load_grid(_resolve(args.config))
    if args.rounds is not None:
        grid = build_grid({"name": grid.name, "seed": grid.seed, "grid": grid.grid,
                           "base": {**grid.base, "rounds": args.rounds}})
    grid = _override(grid, seed=args.seed)
    out = _out_dir(args)
    log.info("matrix %s: %d cells -> %s", grid.name, len(grid.cells()), out)
    run_matrix(grid, out, jobs=args.jobs)
    return EXIT_OK


def cmd_trace(args) -> int:
    records, skipped = trace.ingest(args.input)
    out = _out_dir(args)
    losses = [r.loss_ratio for r in records]
    speeds = [r.throughput_mbps for r in records]
    trace.write_cdf_csv(trace.cdf(losses), out / "loss_ratio_cdf.csv", "loss_ratio")
    trace.write_cdf_csv(trace.cdf(speeds), out / "upload_speed_cdf.csv", "upload_mbps")
    stats = {
        "users": len(records),
        "skipped_rows": skipped,
        "speed_threshold_mbps": args.speed_threshold,
        "eligible_ratio": trace.eligible_ratio_at(records, args.speed_threshold),
        "loss_threshold": args.loss_threshold,
        "fraction_loss_below": trace.cdf_at(losses, args.loss_threshold),
    }
    (out / "trace_summary.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_presets(args) -> int:
    for name, path in sorted(preset_files().items()):
        first = path.read_text().splitlines()[0].lstrip("# ").strip()
        print(f"{name:8s} {path}  {first}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lossfl", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn in (("run", cmd_run), ("matrix", cmd_matrix)):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML file or preset name")
        s.add_argument("--out", help="output directory (default: $LOSSFL_OUT)")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--rounds", type=int, help="override the number of rounds")
        s.add_argument("--jobs", type=int, default=1, help="parallel workers; output is identical for any N")
        s.set_defaults(func=fn)

    s = sub.add_parser("trace")
    s.add_argument("--input", required=True)
    s.add_argument("--speed-threshold", type=float, default=2.0)
    s.add_argument("--loss-threshold", type=float, default=0.1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("presets")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO - 10 * min(args.verbose, 1),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"lossfl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ArithmeticError, ValueError) as exc:
        print(f"lossfl: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
