"""Command-line entry point: ``iffsm run | preset-list | replay | summarize``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex

log = logging.getLogger("iffsm")


def _build_config(args):
    if args.config:
        cfg = ex.load_config(args.config)
    else:
        cfg = ex.preset(args.preset, full_scale=args.full_scale)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects section.key=value, got {item!r}")
        cfg.set(key.strip(), value.strip())
    if args.seeds:
        cfg.run.seeds = ex._parse_list(args.seeds)
    if args.workers:
        cfg.run.workers = args.workers
    if args.output:
        cfg.run.output_dir = args.output
    return cfg.validate()


def cmd_run(args):
    cfg = _build_config(args)
    out = cfg.output_path()
    log.info("running %s (%d point(s) x %d seed(s)) -> %s",
             cfg.name, len(cfg.points()), len(cfg.run.seeds), out)
    if args.dry_run:
        sys.stdout.write(ex.to_ini(cfg))
        return 0
    records = ex.run_experiment(cfg, write=False)
    ex.emit_results(records, cfg, out, svg=args.svg)
    print(out)
    return 0


def cmd_preset_list(args):
    for name in sorted(ex.PRESETS):
        cfg = ex.preset(name)
        sweep = f"{cfg.sweep} in {list(cfg.values)}" if cfg.sweep else "single scenario"
        print(f"{name:20s} {sweep}")
    return 0


def cmd_replay(args):
    seeds = ex._parse_list(args.seeds) if args.seeds else None
    ok, mismatches = ex.replay(args.run_dir, seeds)
    for key, old, new in mismatches:
        print(f"MISMATCH {key}: stored={old} replayed={new}")
    print("replay identical" if ok else f"replay differs in {len(mismatches)} row(s)")
    return 0 if ok else 1


def cmd_summarize(args):
    path = Path(args.run_dir) / "summary.json"
    data = json.loads(path.read_text())
    metric = args.metric
    print(f"{data['name']}  sweep={data['sweep']}  metric={metric}")
    print(f"{'method':12s} {'x':>12s} {'p25':>11s} {'median':>11s} {'p75':>11s} {'mean':>11s}")
    for method, groups in data["summary"].items():
        for x, stats in groups.items():
            s = stats[metric]
            print(f"{method:12s} {x:>12s} {s['p25']:11.4g} {s['median']:11.4g} "
                  f"{s['p75']:11.4g} {s['mean']:11.4g}")
    for note in data.get("notes", []):
        print(f"note: {note}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    p = argparse.ArgumentParser(prog="iffsm", description="Blind multiuser detection experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run a preset or config file")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(ex.PRESETS))
    src.add_argument("--config", type=Path, help="INI config file")
    run.add_argument("--full-scale", action="store_true",
                     help="use full-size seed and iteration counts for presets")
    run.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override one config entry (repeatable)")
    run.add_argument("--seeds", help="seed list, e.g. '0-9' or '1,4,7'")
    run.add_argument("--workers", type=int, help="parallel worker processes")
    run.add_argument("--output", help="output directory (default: $%s/<name>-<hash>)" % ex.OUTPUT_ENV)
    run.add_argument("--svg", action="store_true", help="also write SVG plots (needs matplotlib)")
    run.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    run.set_defaults(func=cmd_run)

    pl = sub.add_parser("preset-list", parents=[common], help="list built-in presets")
    pl.set_defaults(func=cmd_preset_list)

    rp = sub.add_parser("replay", parents=[common], help="re-run stored seeds and compare the records")
    rp.add_argument("run_dir", type=Path)
    rp.add_argument("--seeds", help="subset of seeds to replay")
    rp.set_defaults(func=cmd_replay)

    sm = sub.add_parser("summarize", parents=[common], help="print box statistics of a finished run")
    sm.add_argument("run_dir", type=Path)
    sm.add_argument("--metric", default="ser", choices=["ader", "ser", "mse", "m_plus", "recovered"])
    sm.set_defaults(func=cmd_summarize)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
