"""Command-line entry points: run, batch, aggregate, dump-qtable."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .config import MODES, SimConfig, load_config, write_example_config
from .engine import run_batch, run_experiment
from .errors import SimError
from .metrics import (aggregate, read_episodes_csv, run_to_rows, write_episodes_csv,
                      write_summary_csv, write_timings_csv)

SMOKE = {"runs": 2, "episodes": 10, "max_steps": 10_000}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--mode", choices=MODES, help="control mode")
    p.add_argument("--relays", type=int, dest="relay_count", help="number of fog relays")
    p.add_argument("--episodes", type=int, help="episodes per run")
    p.add_argument("--max-steps", type=int, dest="max_steps", help="step cap per episode")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def _resolve(args, extra: dict | None = None) -> SimConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "mode", "relay_count", "episodes", "max_steps", "runs")}
    overrides.update(extra or {})
    return load_config(getattr(args, "config", None), overrides)


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_fingerprint(config: SimConfig, out_dir: str) -> None:
    with open(os.path.join(out_dir, "config.resolved.ini"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(f"# fingerprint: sha256:{config.fingerprint()}\n")
        fh.write(config.resolved_text())


def cmd_run(args) -> int:
    config = _resolve(args)
    out = _ensure_out(args.out)
    if not args.quiet:
        print(f"run: mode={config.mode} relays={config.relay_count} "
              f"seed={config.seed} episodes={config.episodes}", file=sys.stderr)
    result = run_experiment(config, config.seed, config.mode)
    write_episodes_csv(run_to_rows(result), os.path.join(out, "episodes.csv"))
    _write_fingerprint(config, out)
    if not args.quiet:
        goals = sum(1 for r in result.records if r.termination == "Goal")
        print(f"run: {goals}/{len(result.records)} episodes reached the goal; "
              f"clamped outage events: {result.clamped_events}", file=sys.stderr)
    return 0


def cmd_batch(args) -> int:
    extra = dict(SMOKE) if args.smoke else {}
    config = _resolve(args, extra)
    out = _ensure_out(args.out)
    runs = config.runs
    relay_counts = tuple(args.relay_counts or (1, 2, 3, 4, 5))
    modes = tuple(MODES) if args.modes == "both" else (args.modes,)
    workers = args.workers or os.cpu_count() or 1

    def progress(i, n, res):
        if not args.quiet:
            print(f"batch [{i}/{n}] mode={res.mode} relays={res.relay_count} "
                  f"seed={res.seed} wall={res.wall_ms:.0f}ms", file=sys.stderr)

    batch = run_batch(config, config.seed, runs, modes=modes,
                      relay_counts=relay_counts, workers=workers, progress=progress)
    write_episodes_csv(batch, os.path.join(out, "episodes.csv"))
    write_summary_csv(aggregate(batch, last_k=min(config.last_k, config.episodes)),
                      os.path.join(out, "summary.csv"))
    write_timings_csv(batch, os.path.join(out, "timings.csv"))
    _write_fingerprint(config, out)
    return 0


def cmd_aggregate(args) -> int:
    rows = read_episodes_csv(args.episodes_csv)
    summary = aggregate(rows, last_k=args.last_k)
    if args.out:
        write_summary_csv(summary, args.out)
    else:
        write_summary_csv(summary, "/dev/stdout")
    return 0


def cmd_dump_qtable(args) -> int:
    config = _resolve(args, {"mode": "decentralized"})
    out = _ensure_out(args.out)
    result = run_experiment(config, config.seed, "decentralized")
    for rid, table in sorted(result.qtables.items()):
        path = os.path.join(out, f"qtable-{rid}.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table.dump())
        if not args.quiet:
            print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_example_config(args) -> int:
    sys.stdout.write(write_example_config())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogrelay",
        description="Seeded simulator of mobile fog relays learning to forward IoT traffic")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one experiment run, episodes CSV out")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="sweep modes x relay counts x seeds")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--runs", type=int, help="runs per (mode, relay count)")
    p.add_argument("--modes", default="both", choices=("both",) + MODES)
    p.add_argument("--relay-counts", type=int, nargs="+", dest="relay_counts",
                   help="relay counts to sweep (default 1..5)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--smoke", action="store_true",
                   help="CI preset: 2 runs, 10 episodes, max 10000 steps")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("aggregate", help="recompute summary from an episodes CSV")
    p.add_argument("episodes_csv")
    p.add_argument("--last-k", type=int, default=40, dest="last_k")
    p.add_argument("--out", help="summary CSV path (default stdout)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("dump-qtable", help="train one run and dump its Q-tables")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_dump_qtable)

    p = sub.add_parser("example-config", help="print a commented default config")
    p.set_defaults(func=cmd_example_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimError as exc:
        print(f"ERROR:{exc.code}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ERROR:IO: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
