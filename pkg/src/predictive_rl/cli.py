"""Command-line entry point: ``predictive-rl {run,validate,report}``.

Exit codes: 0 success, 1 I/O problem, 2 invalid configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, config_hash, dump_config, load_config
from .harness import BenchmarkReport, ExperimentConfig, build_report, config_echo, run_benchmark
from .io import default_out_root, read_episodes, write_episode, write_json, write_manifest, write_plot_data

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("predictive_rl.cli")


def _print_table(report: BenchmarkReport, out=sys.stdout) -> None:
    def f(v, spec=".3f"):
        return "-" if v is None else format(v, spec)

    print(f"{'N':>3} {'method':<6} {'start':>5} {'runs':>4} {'cost mean':>12} {'min':>12} {'max':>12} {'t_goal':>7} {'success':>7}", file=out)
    for c in report.cells:
        print(
            f"{c.horizon:>3} {c.method:<6} {c.start_index:>5} {c.episodes:>4} {f(c.cost_mean):>12} "
            f"{f(c.cost_min):>12} {f(c.cost_max):>12} {f(c.time_to_goal_mean, '.1f'):>7} {c.success_rate:>7.2f}",
            file=out,
        )


def _write_outputs(report: BenchmarkReport, cfg: ExperimentConfig, out: Path) -> None:
    from .plotting import render_horizon

    write_json(out / "report.json", report.to_dict())
    plots = out / "plots"
    write_plot_data(report.logs, plots, cfg.horizons)
    for h in cfg.horizons:
        render_horizon(report.logs, h, plots / f"N{h}")
    write_manifest(out, config_hash(cfg), __version__)


def _load(path: str, overrides: Sequence[str]) -> ExperimentConfig:
    return load_config(path, overrides)


def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    try:
        cfg = _load(args.config, overrides)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out) if args.out else default_out_root() / f"run-{config_hash(cfg)[:12]}"
    try:
        if out.exists() and any(out.iterdir()):
            if not (out / "manifest.json").exists():
                print(f"error: {out} is not empty and holds no earlier run", file=sys.stderr)
                return EXIT_IO
            # an earlier run of ours: clear its generated trees
            for sub in ("episodes", "plots"):
                shutil.rmtree(out / sub, ignore_errors=True)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot prepare {out}: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        report = run_benchmark(cfg, jobs=args.jobs)
    except Exception as exc:  # noqa: BLE001
        log.exception("benchmark failed")
        print(f"error: benchmark failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        for ep in report.logs:
            write_episode(ep, out / "episodes")
        _write_outputs(report, cfg, out)
    except OSError as exc:
        print(f"error: writing results failed: {exc}", file=sys.stderr)
        return EXIT_IO

    _print_table(report)
    failed = sum(ep.failed for ep in report.logs)
    if failed:
        print(f"warning: {failed} episode(s) failed", file=sys.stderr)
    print(f"results written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config, args.set or [])
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(dump_config(cfg), end="")
    print("\n# resolved cells (R, gamma, delta, N, M)")
    for name, c in config_echo(cfg)["cells"].items():
        r = ", ".join(repr(v) for v in c["R"])
        print(f"# {name}: R = ({r}), gamma = {c['gamma']!r}, delta = {c['delta']!r}, N = {c['N']}, M = {c['M']}")
    return EXIT_OK


def cmd_report(args) -> int:
    directory = Path(args.dir)
    if not directory.is_dir():
        print(f"error: {directory} is not a directory", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = load_config(str(directory / "config.ini"))
    except OSError as exc:
        print(f"error: cannot read run configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logs, problems = read_episodes(directory / "episodes")
    for p in problems:
        print(f"warning: skipping {p}", file=sys.stderr)
    if problems:
        print(f"warning: {len(problems)} corrupt episode log(s) skipped", file=sys.stderr)
    if not logs:
        print(f"error: no readable episode logs in {directory / 'episodes'}", file=sys.stderr)
        return EXIT_IO
    report = build_report(logs, cfg)
    try:
        _write_outputs(report, cfg, directory)
    except OSError as exc:
        print(f"error: writing report failed: {exc}", file=sys.stderr)
        return EXIT_IO
    _print_table(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predictive-rl", description="MPC / RQL / SQL benchmark for a differential-drive robot.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the benchmark and write logs, report and plots")
    r.add_argument("--config", required=True)
    r.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    r.add_argument("--out", default=None, help="output directory (default $PREDICTIVE_RL_OUT/run-<hash>)")
    r.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config entry")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config and print the effective settings")
    v.add_argument("--config", required=True)
    v.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    v.set_defaults(func=cmd_validate)

    rep = sub.add_parser("report", help="rebuild report and plots from a run directory")
    rep.add_argument("--dir", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
