"""Command-line interface.

Subcommands: spectrogram, detect, extract, train, evaluate, predict, serve.
Exit codes: 0 success, 1 input error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .forest import RandomForestModel
from .pipeline import (
    ConfigError,
    InputError,
    config_to_dict,
    load_config,
    run_detect,
    run_evaluate,
    run_extract,
    run_predict,
    run_spectrograms,
    run_train,
)
from .server import run_server


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--seed", type=int, help="override the pipeline seed")
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whistlekit",
                                     description="Whistle detection in spectrogram images")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrogram", help="export spectrogram PNGs for WAV files")
    p.add_argument("wavs", nargs="+")
    _common(p)

    p = sub.add_parser("detect", help="run the full detection pipeline")
    p.add_argument("wavs", nargs="*")
    p.add_argument("--model", help="trained model JSON; adds predictions to records")
    p.add_argument("--workers", type=int, help="parallel workers over input files")
    p.add_argument("--debug-maps", action="store_true",
                   help="also write vesselness and binary ridge-map PNGs")
    _common(p)

    p = sub.add_parser("extract", help="build the dataset CSV from detections")
    p.add_argument("detections", help="detections.jsonl produced by detect")
    p.add_argument("--csv", help="output CSV path (default <out>/dataset.csv)")
    p.add_argument("--labels", help="labels JSONL to merge (default alongside detections)")
    _common(p)

    p = sub.add_parser("train", help="grid-search and train the classifier")
    p.add_argument("dataset", help="dataset CSV with filled target column")
    p.add_argument("--model", help="output model path (default <out>/model.json)")
    p.add_argument("--report", help="output report path (default <out>/report.json)")
    p.add_argument("--split-ratio", type=float, default=0.7)
    p.add_argument("--grid", help="JSON like {\"n_estimators\":[10,100],\"criterion\":[\"gini\"]}")
    p.add_argument("--reduced", action="store_true",
                   help="drop avg_density, length and avg_y, keeping their binary flags")
    _common(p)

    p = sub.add_parser("evaluate", help="score a model against a labeled CSV")
    p.add_argument("model")
    p.add_argument("dataset")
    _common(p)

    p = sub.add_parser("predict", help="predict rows of a CSV or detections JSONL")
    p.add_argument("model")
    p.add_argument("dataset")
    _common(p)

    p = sub.add_parser("serve", help="serve the labeling UI and REST API")
    p.add_argument("state_dir", help="directory holding detect output")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static UI bundle directory")
    _common(p)

    p = sub.add_parser("config", help="print the effective config as JSON")
    _common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "config":
            print(json.dumps(config_to_dict(cfg), sort_keys=True, indent=2))
            return 0

        if args.command == "spectrogram":
            n = run_spectrograms(args.wavs, cfg)
            print(f"wrote {n} spectrograms to {Path(cfg.output_dir) / 'spectrograms'}")
            return 0

        if args.command == "detect":
            from dataclasses import replace
            if args.workers is not None:
                if args.workers < 1:
                    raise ConfigError("workers must be >= 1")
                cfg = replace(cfg, workers=args.workers)
            if args.debug_maps:
                cfg = replace(cfg, save_debug_maps=True)
            model = None
            if args.model:
                model = RandomForestModel.from_json(Path(args.model).read_text())
            summary = run_detect(args.wavs, cfg, model=model)
            print(json.dumps({
                "wavs": summary.n_wavs,
                "failed": summary.n_failed,
                "snippets": summary.n_snippets,
                "detections": summary.n_records,
                "detections_file": summary.detections_path,
            }, indent=2))
            for wav, err in summary.errors:
                print(f"skipped {wav}: {err}", file=sys.stderr)
            return 0

        if args.command == "extract":
            csv_path = args.csv or str(Path(cfg.output_dir) / "dataset.csv")
            summary = run_extract(args.detections, cfg, csv_path, labels_path=args.labels)
            print(f"wrote {summary.n_rows} rows to {summary.csv_path} "
                  f"(l = {summary.length_norm_l})")
            return 0

        if args.command == "train":
            model_path = args.model or str(Path(cfg.output_dir) / "model.json")
            report_path = args.report or str(Path(cfg.output_dir) / "report.json")
            grid = json.loads(args.grid) if args.grid else None
            result = run_train(args.dataset, model_path, report_path=report_path,
                               grid=grid, split_ratio=args.split_ratio,
                               seed=cfg.seed, reduced=args.reduced)
            print(json.dumps(result.report, sort_keys=True, indent=2))
            return 0

        if args.command == "evaluate":
            print(json.dumps(run_evaluate(args.model, args.dataset), sort_keys=True, indent=2))
            return 0

        if args.command == "predict":
            for row in run_predict(args.model, args.dataset):
                print(json.dumps(row, sort_keys=True))
            return 0

        if args.command == "serve":
            run_server(args.state_dir, cfg, port=args.port, ui_dir=args.ui)
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"input error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
