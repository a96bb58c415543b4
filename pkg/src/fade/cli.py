"""Command-line entry point: ``fade simulate | run | eval | all``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import tempfile
from pathlib import Path

from .config import ConfigError, PipelineConfig
from .detector import FEATURE_COLUMNS
from .evaluation import dump_events, evaluate, load_events
from .frames import FrameFormatError, parse_frame_stream
from .pipeline import run_pipeline
from .simulator import InvalidScript, Scenario, load_truth, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("fade")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


def cmd_simulate(args) -> int:
    sc = Scenario.load(args.scenario)
    frames, truth = sc.generate()
    write_dataset(frames, truth.events, args.out_frames, args.out_truth, sc.t_frame, sc.pose)
    log.info("wrote %d frames, %d truth events", len(frames), len(truth.events))
    return EXIT_OK


def _write_features(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_COLUMNS)
        for r in rows:
            w.writerow([f"{r.t:.6f}", r.track_id, "" if r.z_meas is None else f"{r.z_meas:.6f}",
                        f"{r.z_hat:.6f}", f"{r.v_hat:.6f}", f"{r.a_hat:.6f}", f"{r.mu_ca:.6f}",
                        r.decision])


def _write_timing(path, timing):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("frame", "t", "n_points", "n_tracks", "ms"))
        for r in timing:
            w.writerow([r.frame, f"{r.t:.6f}", r.n_points, r.n_tracks, f"{r.ms:.6f}"])


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    stream = parse_frame_stream(Path(args.frames))
    result = run_pipeline(stream, cfg, record_features=bool(args.features))
    Path(args.out_events).write_text(dump_events(result.events), encoding="utf-8")
    if args.features:
        _write_features(args.features, result.features)
    if args.timing:
        _write_timing(args.timing, result.timing)
    log.info("%d frames, %d fall events", len(result.timing), len(result.events))
    return EXIT_OK


def cmd_eval(args) -> int:
    events = load_events(args.events)
    truth = load_truth(args.truth)
    rep = evaluate(events, truth, args.tol)
    print(json.dumps(rep.to_dict(), indent=2))
    return EXIT_OK


def cmd_all(args) -> int:
    cfg = _load_config(args.config)
    sc = Scenario.load(args.scenario)
    with tempfile.TemporaryDirectory() as tmp:
        frames_path = Path(tmp) / "frames.jsonl"
        truth_path = Path(tmp) / "truth.jsonl"
        frames, truth = sc.generate()
        write_dataset(frames, truth.events, frames_path, truth_path, sc.t_frame, sc.pose)
        result = run_pipeline(parse_frame_stream(frames_path), cfg)
        rep = evaluate(result.events, load_truth(truth_path), args.tol, result.frame_ms())
    print(json.dumps(rep.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fade", description="Radar point-cloud fall detection pipeline.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset from a scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out-frames", required=True)
    s.add_argument("--out-truth", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="detect falls in a frame stream")
    r.add_argument("--frames", required=True)
    r.add_argument("--config")
    r.add_argument("--out-events", required=True)
    r.add_argument("--features", help="feature trace CSV")
    r.add_argument("--timing", help="per-frame timing CSV")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score detected events against ground truth")
    e.add_argument("--events", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--tol", type=float, default=2.0)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("all", help="simulate, run and evaluate one scenario")
    a.add_argument("--scenario", required=True)
    a.add_argument("--config")
    a.add_argument("--tol", type=float, default=2.0)
    a.set_defaults(func=cmd_all)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fade: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FrameFormatError, InvalidScript, ValueError, KeyError) as exc:
        print(f"fade: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"fade: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
