"""Command-line entry point.

    occinf simulate --config PATH --seed N --out DIR
    occinf evaluate --config PATH --seeds N --out DIR
    occinf replay   --log PATH --config PATH [--out DIR]

Exit status is 0 only when every requested artifact was written.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, config_to_dict, load_config
from .evaluation import (
    EpisodeResult,
    ExperimentConfig,
    bin_report,
    evaluate_log,
    run_trials,
    scatter_data,
    summarize,
)
from .logs import LogFormatError, load_episode, save_episode, write_published
from .reports import RunManifest, write_bins_csv, write_scatter_csv, write_summary_json
from .sim import ScenarioTooDenseError, generate_scenario, run_episode

log = logging.getLogger("occlusion_inference")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _config(args) -> ExperimentConfig:
    return load_config(args.config, args.set)


def _write_reports(result_scored, cfg: ExperimentConfig, n_seeds: int, failures, out: Path) -> dict:
    bins = bin_report(result_scored, cfg.eval.bin_width, cfg.eval.max_range)
    scatter = scatter_data(result_scored)
    summary = summarize(result_scored, bins, n_seeds, failures)
    return {
        "bins": str(write_bins_csv(bins, out / "bins.csv")),
        "scatter": str(write_scatter_csv(scatter, out / "scatter.csv")),
        "summary": str(write_summary_json(summary, scatter, out / "summary.json")),
    }


def episode_summary(result: EpisodeResult, cfg: ExperimentConfig) -> dict:
    bins = bin_report(result.scored, cfg.eval.bin_width, cfg.eval.max_range)
    return summarize(result.scored, bins, 1, [])


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("simulate", config_to_dict(cfg), [args.seed])
    manifest.artifacts = {
        "episode": str(out / "episode.ndjson"),
        "published": str(out / "published.ndjson"),
        "bins": str(out / "bins.csv"),
        "scatter": str(out / "scatter.csv"),
        "summary": str(out / "summary.json"),
    }
    manifest.write(out / "manifest.json")

    t0 = time.perf_counter()
    episode = run_episode(generate_scenario(args.seed, cfg.sim), cfg.sim, cfg.horizon_ticks)
    t1 = time.perf_counter()
    save_episode(episode, out / "episode.ndjson")
    result = evaluate_log(episode, cfg.pipeline, cfg.eval)
    write_published(result.published, out / "published.ndjson")
    _write_reports(result.scored, cfg, 1, [], out)
    t2 = time.perf_counter()

    manifest.timings = {"simulate_s": t1 - t0, "pipeline_s": t2 - t1}
    manifest.write(out / "manifest.json")
    log.info("seed %d: %d ticks, %d scored predictions", args.seed, len(episode), len(result.scored))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.workers is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, workers=args.workers))
    if args.seeds < 1:
        raise ConfigError("--seeds", "must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.eval.seed_base + k for k in range(args.seeds)]
    manifest = RunManifest("evaluate", config_to_dict(cfg), seeds)
    manifest.artifacts = {name: str(out / f) for name, f in
                          (("bins", "bins.csv"), ("scatter", "scatter.csv"), ("summary", "summary.json"))}
    manifest.write(out / "manifest.json")

    t0 = time.perf_counter()
    report = run_trials(args.seeds, cfg, seeds)
    for seed, reason in report.failures:
        log.warning("seed %d failed: %s", seed, reason)
    write_bins_csv(report.bins, out / "bins.csv")
    write_scatter_csv(report.scatter, out / "scatter.csv")
    write_summary_json(report.summary, report.scatter, out / "summary.json")
    manifest.timings = {"evaluate_s": time.perf_counter() - t0}
    manifest.write(out / "manifest.json")
    log.info("%d seeds, %d scored predictions", len(seeds), report.summary["total_predictions"])
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _config(args)
    episode = load_episode(args.log)
    result = evaluate_log(episode, cfg.pipeline, cfg.eval)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_published(result.published, out / "published.ndjson")
        _write_reports(result.scored, cfg, 1, [], out)
    else:
        json.dump(episode_summary(result, cfg), sys.stdout, indent=2, sort_keys=True, default=str)
        sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occinf", description="Occlusion inference from human reactions.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="YAML config; omitted keys take defaults")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")

    p = sub.add_parser("simulate", help="run one episode and write its log")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="run seeded trials and write reports")
    common(p)
    p.add_argument("--seeds", type=int, required=True, help="number of seeds")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None, help="worker processes (0 = all cores)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="re-run the pipeline over a recorded episode")
    common(p)
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="write reports here instead of stdout")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LogFormatError, ScenarioTooDenseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
