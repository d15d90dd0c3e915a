"""End-to-end orchestration: audio -> spectrogram -> ridge map -> Hough ->
snakes -> features -> classification, plus dataset extraction and training.

All stages are deterministic for a fixed (inputs, config, seed): per-snippet
RNG seeds are derived by hashing the pipeline seed with the snippet id, JSON
is written with sorted keys, and CSV floats use a fixed format.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import render
from .audio import load_audio, partition
from .features import (
    CSV_COLUMNS,
    CSV_HEADER,
    FeatureConfig,
    FeatureVector,
    build_feature_vector,
    csv_row,
)
from .forest import (
    DEFAULT_GRID,
    RandomForestModel,
    evaluate,
    fit_forest,
    grid_search,
)
from .hough import HoughConfig, probabilistic_hough
from .ridge import FrangiConfig, binarize, frangi
from .snakes import Snake, SnakeConfig, dedupe, evolve, init_snake
from .spectrogram import Spectrogram, StftConfig, compute_spectrogram

SCHEMA_VERSION = 1

# Artifact default for the low-frequency cutoff: about 5 kHz under the default
# STFT settings at 48 kHz (bin width 187.5 Hz). Site-dependent; tune per data.
DEFAULT_LOW_FREQ_CUTOFF_Y = 27.0


class ConfigError(ValueError):
    """Invalid pipeline configuration (CLI exit code 2)."""


class InputError(ValueError):
    """Unusable inputs: missing files, empty datasets, single-class labels (exit 1)."""


@dataclass(frozen=True)
class PipelineConfig:
    stft: StftConfig = StftConfig()
    frangi: FrangiConfig = FrangiConfig()
    hough: HoughConfig = HoughConfig()
    snake: SnakeConfig = SnakeConfig()
    feature: FeatureConfig = FeatureConfig(low_freq_cutoff_y=DEFAULT_LOW_FREQ_CUTOFF_Y)
    window_seconds: float = 3.0
    seed: int = 0
    output_dir: str = "out"
    dedupe_snakes: bool = True
    dedupe_min_distance: float = 5.0
    workers: int = 1
    save_debug_maps: bool = False  # also write vesselness/binary map PNGs

    def __post_init__(self) -> None:
        if self.window_seconds <= 0:
            raise ConfigError("window_seconds must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def config_to_dict(cfg: PipelineConfig) -> dict:
    doc = asdict(cfg)
    doc["schema_version"] = SCHEMA_VERSION
    doc["frangi"]["scales"] = list(cfg.frangi.scales)
    doc["hough"]["inclination_band"] = list(cfg.hough.inclination_band)
    return doc


def config_from_dict(doc: dict) -> PipelineConfig:
    """Build a config from a (possibly partial) JSON document."""
    try:
        base = default_config()
        stft = replace(base.stft, **doc.get("stft", {}))
        fr = dict(doc.get("frangi", {}))
        if "scales" in fr:
            fr["scales"] = tuple(float(s) for s in fr["scales"])
        frangi_cfg = replace(base.frangi, **fr)
        ho = dict(doc.get("hough", {}))
        if "inclination_band" in ho:
            ho["inclination_band"] = tuple(float(v) for v in ho["inclination_band"])
        hough_cfg = replace(base.hough, **ho)
        snake_cfg = replace(base.snake, **doc.get("snake", {}))
        feature_cfg = replace(base.feature, **doc.get("feature", {}))
        top = {
            k: doc[k]
            for k in ("window_seconds", "seed", "output_dir", "dedupe_snakes",
                      "dedupe_min_distance", "workers", "save_debug_maps")
            if k in doc
        }
        return PipelineConfig(stft=stft, frangi=frangi_cfg, hough=hough_cfg,
                              snake=snake_cfg, feature=feature_cfg, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def default_config(seed: int = 0) -> PipelineConfig:
    return PipelineConfig(seed=seed)


def load_config(path: str | None, seed: int | None = None, out: str | None = None) -> PipelineConfig:
    if path is None:
        cfg = default_config()
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        cfg = config_from_dict(doc)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out is not None:
        cfg = replace(cfg, output_dir=out)
    return cfg


def snippet_identifier(wav_path: str, index: int) -> str:
    return f"{Path(wav_path).stem}_{index:04d}"


def snippet_seed(seed: int, snippet_id: str) -> int:
    digest = hashlib.blake2s(f"{seed}:{snippet_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def features_dict(points: np.ndarray, image, cfg: FeatureConfig) -> dict:
    """Feature vector of a stored snake as a plain JSON-ready mapping."""
    fv = build_feature_vector(Snake(points=np.asarray(points, dtype=np.float64)), image, cfg)
    row = fv.as_row()
    return {
        k: (bool(v) if k in ("low_density", "long", "low") else float(v))
        for k, v in row.items()
        if k != "target"
    }


# ---------------------------------------------------------------------------
# detection


def _analyze_snippet(snippet, cfg: PipelineConfig, sid: str):
    """Spectrogram + ridge map + Hough + snakes for one snippet."""
    spec = compute_spectrogram(snippet, cfg.stft)
    vmap = frangi(spec, cfg.frangi)
    bmap = binarize(vmap, cfg.frangi.binarize_threshold)
    hough_cfg = replace(cfg.hough, rng_seed=snippet_seed(cfg.seed, sid))
    segments = probabilistic_hough(bmap, hough_cfg)
    snakes = [evolve(init_snake(seg, cfg.snake.n_points), spec, cfg.snake) for seg in segments]
    if cfg.dedupe_snakes:
        snakes = dedupe(snakes, cfg.dedupe_min_distance)
    return spec, snakes, vmap, bmap


def _detect_one_wav(args):
    """Worker: run detection on every snippet of one WAV file.

    Returns (wav_path, error_or_None, snippet_outputs); any failure is
    contained to this file so the run can continue."""
    wav_path = args[0]
    try:
        return wav_path, None, _detect_one_wav_inner(args)
    except Exception as exc:
        return wav_path, f"{type(exc).__name__}: {exc}", []


def _detect_one_wav_inner(args):
    wav_path, cfg, model, out_dir = args
    feature_cfg = cfg.feature
    if model is not None:
        # Predictions must see features exactly as the model was trained on.
        overrides = {
            k: float(model.metadata[k])
            for k in ("length_norm_l", "low_density_cutoff", "long_cutoff", "low_freq_cutoff_y")
            if k in model.metadata
        }
        feature_cfg = replace(feature_cfg, **overrides)
    clip = load_audio(wav_path)
    snippets = partition(clip, cfg.window_seconds)
    out_dir = Path(out_dir)
    outputs = []
    for snippet in snippets:
        sid = snippet_identifier(wav_path, snippet.snippet_index)
        spec, snakes, vmap, bmap = _analyze_snippet(snippet, cfg, sid)
        records = []
        verdicts: list[bool | None] = []
        for k, snake in enumerate(snakes):
            rec = {
                "snippet_id": sid,
                "source_wav": str(wav_path),
                "snippet_index": int(snippet.snippet_index),
                "offset_seconds": float(snippet.offset_seconds),
                "snake_id": f"{sid}:{k}",
                "points": [[float(x), float(y)] for x, y in snake.points],
                "converged": bool(snake.converged),
                "energy": float(snake.energy),
                "segment": snake.source_segment.to_json_dict() if snake.source_segment else None,
                "prediction": None,
                "vote_fraction": None,
                "label": None,
            }
            if model is not None:
                feats = features_dict(snake.points, spec, feature_cfg)
                klass, frac = model.predict_row(_prediction_row(feats))
                rec["features"] = feats
                rec["prediction"] = int(klass)
                rec["vote_fraction"] = float(frac)
                verdicts.append(bool(klass))
            else:
                rec["features"] = _partial_features(snake, spec, feature_cfg)
                verdicts.append(None)
            records.append(rec)
        (out_dir / "spectrograms").mkdir(parents=True, exist_ok=True)
        (out_dir / "overlays").mkdir(parents=True, exist_ok=True)
        (out_dir / "spectrograms" / f"{sid}.png").write_bytes(render.spectrogram_png(spec))
        (out_dir / "overlays" / f"{sid}.png").write_bytes(render.overlay_png(spec, snakes, verdicts))
        if cfg.save_debug_maps:
            # vesselness inverted so strong ridges render dark, like the input
            (out_dir / "ridge_maps").mkdir(parents=True, exist_ok=True)
            (out_dir / "binary_maps").mkdir(parents=True, exist_ok=True)
            (out_dir / "ridge_maps" / f"{sid}.png").write_bytes(
                render.spectrogram_png(1.0 - vmap))
            (out_dir / "binary_maps" / f"{sid}.png").write_bytes(
                render.spectrogram_png(1.0 - bmap.astype(np.float64)))
        outputs.append({"snippet_id": sid, "records": records})
    return outputs


def _partial_features(snake: Snake, spec: Spectrogram, cfg: FeatureConfig) -> dict:
    """All feature fields that do not need the dataset-level l; length and the
    `long` flag are filled in once l is known."""
    tmp = replace(cfg, length_norm_l=1.0)
    feats = features_dict(snake.points, spec, tmp)
    feats["length"] = None  # endpoint distance / l, pending
    feats["long"] = None
    return feats


def _prediction_row(feats: dict) -> dict:
    return {k: (int(v) if isinstance(v, bool) else v) for k, v in feats.items()}


def _endpoint_distance(points) -> float:
    (x0, y0), (x1, y1) = points[0], points[-1]
    return math.hypot(x1 - x0, y1 - y0)


@dataclass
class DetectSummary:
    n_wavs: int
    n_failed: int
    n_snippets: int
    n_records: int
    length_norm_l: float | None
    detections_path: str
    errors: list = field(default_factory=list)


def run_detect(wav_paths: list[str], cfg: PipelineConfig,
               model: RandomForestModel | None = None,
               out_dir: str | None = None) -> DetectSummary:
    """Detect snakes in every snippet of every WAV and persist all artifacts."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(str(p), cfg, model, str(out)) for p in wav_paths]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_detect_one_wav, tasks))
    else:
        results = [_detect_one_wav(t) for t in tasks]

    errors = [(wav, err) for wav, err, _ in results if err is not None]
    all_records: list[dict] = []
    n_snippets = 0
    for _, err, outputs in results:
        if err is not None:
            continue
        for snippet_out in outputs:
            n_snippets += 1
            all_records.extend(snippet_out["records"])

    if model is not None:
        l = float(model.metadata["length_norm_l"])
    else:
        distances = [_endpoint_distance(rec["points"]) for rec in all_records]
        l = min(distances) if distances else None
        for rec in all_records:
            if l is not None:
                length = _endpoint_distance(rec["points"]) / l
                rec["features"]["length"] = float(length)
                rec["features"]["long"] = bool(length >= cfg.feature.long_cutoff)

    with open(out / "detections.jsonl", "w") as fh:
        for rec in all_records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(cfg),
        "length_norm_l": l,
        "model_used": model is not None,
        "n_wavs": len(wav_paths),
        "n_failed": len(errors),
        "n_snippets": n_snippets,
        "n_records": len(all_records),
        "errors": [{"wav": w, "error": e} for w, e in errors],
    }
    (out / "run_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    if wav_paths and len(errors) == len(wav_paths):
        raise InputError("all input files failed: " + "; ".join(e for _, e in errors))
    return DetectSummary(
        n_wavs=len(wav_paths),
        n_failed=len(errors),
        n_snippets=n_snippets,
        n_records=len(all_records),
        length_norm_l=l,
        detections_path=str(out / "detections.jsonl"),
        errors=errors,
    )


def run_spectrograms(wav_paths: list[str], cfg: PipelineConfig, out_dir: str | None = None) -> int:
    """Export spectrogram PNGs only."""
    out = Path(out_dir or cfg.output_dir) / "spectrograms"
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    failures = []
    for wav in wav_paths:
        try:
            clip = load_audio(wav)
        except Exception as exc:
            failures.append(f"{wav}: {exc}")
            continue
        for snippet in partition(clip, cfg.window_seconds):
            sid = snippet_identifier(wav, snippet.snippet_index)
            spec = compute_spectrogram(snippet, cfg.stft)
            (out / f"{sid}.png").write_bytes(render.spectrogram_png(spec))
            n += 1
    if wav_paths and len(failures) == len(wav_paths):
        raise InputError("all input files failed: " + "; ".join(failures))
    return n


# ---------------------------------------------------------------------------
# dataset extraction


def read_detections(path: str) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def read_labels(path: Path) -> dict[str, dict]:
    """Label log -> latest entry per snake id."""
    labels: dict[str, dict] = {}
    if not path.exists():
        return labels
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                entry = json.loads(line)
                labels[entry["snake_id"]] = entry
    return labels


@dataclass
class ExtractSummary:
    n_rows: int
    length_norm_l: float | None
    csv_path: str


def extract_rows(records: list[dict], cfg: PipelineConfig,
                 labels: dict[str, dict] | None = None) -> tuple[list[FeatureVector], list[str], float | None]:
    """Recompute dataset rows from detection records with a set-level l."""
    labels = labels or {}
    distances = [_endpoint_distance(rec["points"]) for rec in records]
    l = min(distances) if distances else None
    vectors = []
    ids = []
    for rec, dist in zip(records, distances):
        feats = rec["features"]
        length = dist / l
        label_entry = labels.get(rec["snake_id"])
        target = None
        if label_entry is not None:
            target = bool(label_entry["target"])
        elif rec.get("label") is not None:
            target = bool(rec["label"])
        vectors.append(
            FeatureVector(
                avg_x=float(feats["avg_x"]),
                avg_y=float(feats["avg_y"]),
                avg_density=float(feats["avg_density"]),
                relative_density=float(feats["relative_density"]),
                inertia=float(feats["inertia"]),
                length=float(length),
                low_density=bool(feats["low_density"]),
                long=bool(length >= cfg.feature.long_cutoff),
                low=bool(feats["low"]),
                target=target,
            )
        )
        ids.append(rec["snake_id"])
    return vectors, ids, l


def run_extract(detections_path: str, cfg: PipelineConfig, csv_path: str,
                labels_path: str | None = None) -> ExtractSummary:
    records = read_detections(detections_path)
    labels = read_labels(Path(labels_path)) if labels_path else read_labels(
        Path(detections_path).parent / "labels.jsonl")
    vectors, _, l = extract_rows(records, cfg, labels)
    csv_file = Path(csv_path)
    csv_file.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for v in vectors:
        buf.write(csv_row(v) + "\n")
    csv_file.write_text(buf.getvalue())
    meta = {
        "schema_version": SCHEMA_VERSION,
        "length_norm_l": l,
        "low_density_cutoff": cfg.feature.low_density_cutoff,
        "long_cutoff": cfg.feature.long_cutoff,
        "low_freq_cutoff_y": cfg.feature.low_freq_cutoff_y,
        "n_rows": len(vectors),
        "source": str(detections_path),
    }
    csv_file.with_suffix(".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return ExtractSummary(n_rows=len(vectors), length_norm_l=l, csv_path=str(csv_file))


# ---------------------------------------------------------------------------
# training and evaluation on CSV datasets

REDUCED_DROPPED = ("avg_density", "length", "avg_y")
FEATURE_COLUMNS = tuple(c for c in CSV_COLUMNS if c != "target")


def read_dataset_csv(path: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Read the dataset CSV; returns (X over feature columns, target, names).

    Rows with an empty target are dropped."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise InputError(f"{path}: expected header {CSV_HEADER}")
        xs, ys = [], []
        for row in reader:
            if row["target"] == "":
                continue
            xs.append([float(row[c]) for c in FEATURE_COLUMNS])
            ys.append(int(float(row["target"])))
    if not xs:
        raise InputError(f"{path}: no labeled rows")
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.int64), list(FEATURE_COLUMNS)


def stratified_split(y: np.ndarray, train_ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic, class-stratified train/test index split."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 7101)))
    train_idx, test_idx = [], []
    for cls in np.unique(y):
        idx = rng.permutation(np.nonzero(y == cls)[0])
        cut = int(round(train_ratio * len(idx)))
        train_idx.extend(idx[:cut])
        test_idx.extend(idx[cut:])
    return np.sort(np.asarray(train_idx, int)), np.sort(np.asarray(test_idx, int))


def _final_seed(seed: int) -> int:
    return int(np.random.SeedSequence((seed, 4242)).generate_state(1, np.uint64)[0])


@dataclass
class TrainResult:
    model: RandomForestModel
    report: dict


def train_on_rows(X: np.ndarray, y: np.ndarray, names: list[str],
                  grid: dict | None = None, split_ratio: float = 0.7,
                  seed: int = 0, reduced: bool = False,
                  metadata: dict | None = None) -> TrainResult:
    """Stratified split, grid search on the training part, final fit, held-out report."""
    if len(np.unique(y)) < 2:
        raise InputError("dataset must contain both classes")
    excluded = ["avg_x"] + (list(REDUCED_DROPPED) if reduced else [])
    train_idx, test_idx = stratified_split(y, split_ratio, seed)
    if len(test_idx) == 0:
        raise InputError("split produced an empty test set")
    search = grid_search(X[train_idx], y[train_idx], grid=grid or DEFAULT_GRID,
                         k_folds=5, seed=seed, feature_names=names,
                         excluded_features=excluded)
    model = fit_forest(X[train_idx], y[train_idx], n_estimators=search.n_estimators,
                       criterion=search.criterion, seed=_final_seed(seed),
                       feature_names=names, excluded_features=excluded)
    model.metadata = dict(metadata or {})
    model.metadata.update({
        "feature_set": "reduced" if reduced else "full",
        "split_ratio": split_ratio,
        "grid_seed": seed,
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
    })
    used = [i for i, n in enumerate(names) if n in set(model.feature_names)]
    report_obj = evaluate(model, X[test_idx][:, used], y[test_idx])
    report = report_obj.to_dict()
    report.update({
        "chosen": {"n_estimators": search.n_estimators, "criterion": search.criterion},
        "cv_table": search.table,
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
        "feature_set": "reduced" if reduced else "full",
    })
    return TrainResult(model=model, report=report)


def run_train(csv_path: str, model_path: str, report_path: str | None = None,
              grid: dict | None = None, split_ratio: float = 0.7, seed: int = 0,
              reduced: bool = False) -> TrainResult:
    X, y, names = read_dataset_csv(csv_path)
    metadata = {}
    meta_file = Path(csv_path).with_suffix(".meta.json")
    if meta_file.exists():
        ds_meta = json.loads(meta_file.read_text())
        metadata = {
            k: ds_meta[k]
            for k in ("length_norm_l", "low_density_cutoff", "long_cutoff", "low_freq_cutoff_y")
            if k in ds_meta
        }
    metadata.setdefault("length_norm_l", 1.0)
    result = train_on_rows(X, y, names, grid=grid, split_ratio=split_ratio,
                           seed=seed, reduced=reduced, metadata=metadata)
    Path(model_path).parent.mkdir(parents=True, exist_ok=True)
    Path(model_path).write_text(result.model.to_json() + "\n")
    if report_path:
        Path(report_path).write_text(json.dumps(result.report, sort_keys=True, indent=2) + "\n")
    return result


def run_evaluate(model_path: str, csv_path: str) -> dict:
    model = RandomForestModel.from_json(Path(model_path).read_text())
    X, y, names = read_dataset_csv(csv_path)
    used = [names.index(n) for n in model.feature_names]
    return evaluate(model, X[:, used], y).to_dict()


def run_predict(model_path: str, dataset_path: str) -> list[dict]:
    """Predict rows of a dataset CSV or a detections JSONL file."""
    model = RandomForestModel.from_json(Path(model_path).read_text())
    out = []
    if dataset_path.endswith(".jsonl"):
        records = read_detections(dataset_path)
        meta = model.metadata
        l = float(meta.get("length_norm_l", 1.0))
        for rec in records:
            # binary flags rebuilt with the model's training-time cutoffs
            feats = dict(rec["features"])
            feats["length"] = _endpoint_distance(rec["points"]) / l
            feats["long"] = feats["length"] >= float(meta.get("long_cutoff", 3.0))
            if "low_density_cutoff" in meta:
                feats["low_density"] = feats["relative_density"] <= float(meta["low_density_cutoff"])
            if "low_freq_cutoff_y" in meta:
                feats["low"] = feats["avg_y"] <= float(meta["low_freq_cutoff_y"])
            klass, frac = model.predict_row(_prediction_row(feats))
            out.append({"snake_id": rec["snake_id"], "prediction": int(klass),
                        "vote_fraction": float(frac)})
        return out
    with open(dataset_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise InputError(f"{dataset_path}: expected header {CSV_HEADER}")
        for i, row in enumerate(reader):
            klass, frac = model.predict_row({k: float(row[k]) for k in FEATURE_COLUMNS})
            out.append({"row": i, "prediction": int(klass), "vote_fraction": float(frac)})
    return out
