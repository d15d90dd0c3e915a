"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Tolerances are pinned here and nowhere else."""
import io
import json
import math
import time
import urllib.error
import urllib.request
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from conftest import corpus_config, truth_labels, write_label_log
from PIL import Image
from synth import binary_line, build_corpus, dark_curve_image, dark_segment_image

from whistlekit.features import CSV_COLUMNS, CSV_HEADER
from whistlekit.forest import (
    entropy,
    evaluate,
    fit_forest,
    gain_ratio,
    gini,
    gini_gain,
    grid_search,
    report_from_confusion,
)
from whistlekit.hough import HoughConfig, LineSegment, probabilistic_hough
from whistlekit.pipeline import (
    FEATURE_COLUMNS,
    extract_rows,
    run_detect,
    run_extract,
    run_train,
)
from whistlekit.ridge import frangi
from whistlekit.server import run_server
from whistlekit.snakes import (
    Snake,
    SnakeConfig,
    evolve,
    init_snake,
    internal_energy,
    internal_gradient,
)


@contextmanager
def criterion(capsys, name):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: FAIL ({time.monotonic() - start:.1f}s)")
        raise
    with capsys.disabled():
        print(f"\nACCEPTANCE {name}: PASS ({time.monotonic() - start:.1f}s)")


def seg(p0, p1):
    dx, dy = abs(p1[0] - p0[0]), abs(p1[1] - p0[1])
    inc = 90.0 if dx == 0 else math.degrees(math.atan(dy / dx))
    return LineSegment(p0=p0, p1=p1, inclination=inc, votes=10)


def test_metric_math(capsys):
    with criterion(capsys, "metric math on the reference confusion matrix"):
        report = report_from_confusion([[367, 13], [9, 566]])
        assert round(report.accuracy, 3) == 0.977
        assert round(report.false_positive_rate, 3) == 0.034
        assert round(report.false_negative_rate, 3) == 0.016
        # exact rational arithmetic underneath
        assert report.accuracy == 933 / 955
        assert report.false_positive_rate == 13 / 380
        assert report.false_negative_rate == 9 / 575


def test_split_criteria_oracle(capsys):
    with criterion(capsys, "split criteria vs brute-force oracle"):
        start = time.monotonic()

        def entropy_oracle(counts):
            total = sum(counts)
            if total == 0:
                return 0.0
            return -sum((c / total) * math.log2(c / total) for c in counts if c > 0)

        def gini_oracle(counts):
            total = sum(counts)
            if total == 0:
                return 0.0
            return sum((c / total) * (1 - c / total) for c in counts)

        rng = np.random.default_rng(170)
        for _ in range(1000):
            k = int(rng.integers(2, 6))
            counts = rng.integers(0, 60, size=k).tolist()
            assert abs(entropy(counts) - entropy_oracle(counts)) < 1e-12
            assert abs(gini(counts) - gini_oracle(counts)) < 1e-12
        for _ in range(1000):
            parent = rng.integers(1, 50, size=2)
            left = np.array([int(rng.integers(0, parent[0] + 1)),
                             int(rng.integers(0, parent[1] + 1))])
            right = parent - left
            assert gini_gain(parent, left, right) >= -1e-12
            if left.sum() > 0 and right.sum() > 0:
                assert gain_ratio(parent, [left, right]) >= -1e-12
        assert entropy([2, 2]) == 1.0
        assert gini([2, 2]) == 0.5
        assert time.monotonic() - start < 5.0


def test_hough_recovery(capsys):
    with criterion(capsys, "Hough recovery on 50 synthetic lines"):
        start = time.monotonic()
        rng = np.random.default_rng(2024)
        # the criterion grants +-theta_step inclination error, so the band
        # filter is widened by exactly that tolerance
        cfg_template = HoughConfig(inclination_band=(14.0, 76.0))
        shape = (150, 140)
        for _ in range(50):
            angle = math.radians(rng.uniform(15, 75))
            length = rng.uniform(70, 110)
            x0 = rng.uniform(5, shape[0] - 5 - length * math.cos(angle))
            y0 = rng.uniform(5, shape[1] - 5 - length * math.sin(angle))
            p0 = (x0, y0)
            p1 = (x0 + length * math.cos(angle), y0 + length * math.sin(angle))
            grid = binary_line(shape, p0, p1)
            cfg = HoughConfig(inclination_band=cfg_template.inclination_band,
                              rng_seed=int(rng.integers(1 << 30)))
            segs = probabilistic_hough(grid, cfg)
            assert len(segs) == 1
            found = sorted([segs[0].p0, segs[0].p1])
            for f, t in zip(found, sorted([p0, p1])):
                assert math.hypot(f[0] - t[0], f[1] - t[1]) <= 2.0
            assert abs(segs[0].inclination - math.degrees(angle)) <= cfg.theta_step
        # control lines outside the band yield nothing
        horizontal = binary_line(shape, (10, 70), (140, 70))
        vertical = binary_line(shape, (75, 10), (75, 130))
        assert probabilistic_hough(horizontal, HoughConfig(rng_seed=1)) == []
        assert probabilistic_hough(vertical, HoughConfig(rng_seed=1)) == []
        assert time.monotonic() - start < 30.0


def test_frangi_correctness(capsys):
    with criterion(capsys, "Frangi filter correctness"):
        start = time.monotonic()
        assert np.all(frangi(np.full((80, 60), 0.42)) == 0.0)
        img = dark_segment_image((100, 80), (10, 40), (90, 40), width=2.0)
        v = frangi(img)
        centerline = v[25:75, 40].mean()
        background = v[:, :20].mean()
        assert centerline > 5 * max(background, 1e-12)
        tilted = dark_segment_image((90, 90), (12, 25), (80, 70), width=2.5)
        assert np.allclose(frangi(np.rot90(tilted)), np.rot90(frangi(tilted)), atol=1e-6)
        assert time.monotonic() - start < 10.0


def test_snake_optimization(capsys):
    with criterion(capsys, "snake energy descent and ridge tracking"):
        start = time.monotonic()
        # monotone energy over a synthetic suite: zero violations allowed
        suite = []
        for amp, period in ((8.0, 80.0), (5.0, 50.0), (0.0, 1.0)):
            ridge = lambda x, a=amp, p=period: 30.0 + a * math.sin(2 * math.pi * (x - 10) / p)
            img = dark_curve_image((100, 64), ridge, width=3.0)
            suite.append((img, ridge))
        rng = np.random.default_rng(55)
        noisy = dark_curve_image((100, 64), lambda x: 30.0, width=3.0)
        noisy = np.clip(noisy + rng.normal(0, 0.05, noisy.shape), 0, 1)
        suite.append((noisy, lambda x: 30.0))
        for img, ridge in suite:
            s0 = init_snake(seg((10, int(round(ridge(10)))), (90, int(round(ridge(90))))), 50)
            trace: list = []
            evolve(s0, img, SnakeConfig(w_line=2.0, alpha=0.002, beta_bend=0.0005,
                                        max_iterations=800, convergence_tol=0.01),
                   trace=trace)
            diffs = np.diff(trace)
            assert np.all(diffs <= 1e-12), "energy increased on an accepted iteration"

        # internal-energy-only runs converge to the straight chord
        chord_rng = np.random.default_rng(4)
        s0 = init_snake(seg((5, 5), (55, 45)), 20)
        bent = np.array(s0.points)
        bent[1:-1] += chord_rng.uniform(-3, 3, (18, 2))
        cfg = SnakeConfig(n_points=20, alpha=0.05, beta_bend=0.0, w_line=0.0, w_edge=0.0,
                          max_iterations=4000, convergence_tol=1e-4)
        out = evolve(Snake(points=bent), np.ones((70, 60)), cfg)
        assert np.hypot(*(out.points - s0.points).T).max() < 0.1

        # sinusoidal ridge tracking within 1.5 px mean distance
        amp = 8.0
        ridge = lambda x: 30.0 + amp * math.sin(2 * math.pi * (x - 10) / 80)
        img = dark_curve_image((100, 64), ridge, width=3.0)
        s0 = init_snake(seg((10, int(round(ridge(10)))), (90, int(round(ridge(90))))), 50)
        out = evolve(s0, img, SnakeConfig(w_line=2.0, alpha=0.002, beta_bend=0.0005,
                                          max_iterations=2000, convergence_tol=0.01))
        dist = np.abs(out.points[:, 1] - np.array([ridge(x) for x in out.points[:, 0]]))
        assert dist.mean() < 1.5

        # analytic internal gradient vs central differences, 100 random snakes
        grad_rng = np.random.default_rng(21)
        for _ in range(100):
            n = int(grad_rng.integers(4, 12))
            pts = grad_rng.uniform(0, 20, (n, 2))
            alpha = float(grad_rng.uniform(0.01, 2.0))
            beta = float(grad_rng.uniform(0.0, 1.0))
            grad = internal_gradient(pts, alpha, beta)
            eps = 1e-6
            fd = np.zeros_like(pts)
            for i in range(n):
                for c in range(2):
                    plus, minus = pts.copy(), pts.copy()
                    plus[i, c] += eps
                    minus[i, c] -= eps
                    fd[i, c] = (internal_energy(plus, alpha, beta)
                                - internal_energy(minus, alpha, beta)) / (2 * eps)
            scale = max(np.abs(fd).max(), 1e-9)
            assert np.abs(grad - fd).max() / scale < 1e-4
        assert time.monotonic() - start < 60.0


def test_feature_formulas(capsys, small_corpus, tmp_path):
    with criterion(capsys, "feature formulas and CSV format"):
        from whistlekit.features import (
            avg_mass,
            centroid,
            inertia,
            normalized_length,
            relative_mass,
        )

        def snake_of(points):
            return Snake(points=np.asarray(points, dtype=np.float64))

        # hand fixtures at the listed example values
        assert centroid(snake_of([(0, 0), (2, 0), (4, 6)])) == (2.0, 2.0)
        assert normalized_length(snake_of([(0, 0), (3, 4)]), 1.0) == 5.0
        assert normalized_length(snake_of([(1, 1), (4, 5)]), 2.5) == 2.0
        assert inertia(snake_of([(2, 0), (2, 1), (2, 2)]), np.ones((10, 10))) == 2.0
        img = np.zeros((4, 4))
        img[0, 0], img[1, 0], img[2, 0] = 0.2, 0.4, 0.6
        assert abs(avg_mass(snake_of([(0, 0), (1, 0), (2, 0)]), img) - 0.4) < 1e-12
        uniform = np.full((8, 8), 0.375)  # exactly representable, ratio is exact
        assert relative_mass(snake_of([(1, 1), (5, 6)]), uniform) == 1.0

        # binary features equal their defining inequalities on generated data
        directory, manifest = small_corpus
        out = tmp_path / "feat_out"
        cfg = corpus_config(seed=77, out=str(out))
        run_detect([m["path"] for m in manifest], cfg)
        csv_path = tmp_path / "feat.csv"
        run_extract(str(out / "detections.jsonl"), cfg, str(csv_path))
        lines = csv_path.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert CSV_HEADER == "avg_density,avg_x,avg_y,inertia,length,relative_density,low_density,long,low,target"
        cols = CSV_COLUMNS
        assert len(lines) > 1
        for line in lines[1:]:
            row = dict(zip(cols, line.split(",")))
            assert int(row["low_density"]) == (float(row["relative_density"]) <= cfg.feature.low_density_cutoff)
            assert int(row["long"]) == (float(row["length"]) >= cfg.feature.long_cutoff)
            assert int(row["low"]) == (float(row["avg_y"]) <= cfg.feature.low_freq_cutoff_y)


def test_classifier_power(capsys, tmp_path):
    with criterion(capsys, "grid-searched forest on separable data"):
        start = time.monotonic()
        rng = np.random.default_rng(37)
        a = rng.normal(0.0, 1.0, size=(250, 4))
        b = rng.normal(5.0, 1.0, size=(250, 4))
        X = np.vstack([a, b])
        y = np.concatenate([np.zeros(250, int), np.ones(250, int)])
        order = rng.permutation(500)
        X, y = X[order], y[order]
        search = grid_search(X[:350], y[:350], seed=3)  # full default grid
        model = fit_forest(X[:350], y[:350], n_estimators=search.n_estimators,
                           criterion=search.criterion, seed=9)
        assert evaluate(model, X[350:], y[350:]).accuracy >= 0.99
        # identical seeds give byte-identical model files
        for name in ("m1.json", "m2.json"):
            m = fit_forest(X[:350], y[:350], n_estimators=search.n_estimators,
                           criterion=search.criterion, seed=9)
            (tmp_path / name).write_text(m.to_json() + "\n")
        assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
        assert time.monotonic() - start < 60.0


def test_end_to_end_synthetic_corpus(capsys, tmp_path_factory):
    with criterion(capsys, "end-to-end corpus: snippet accuracy and runtime"):
        start = time.monotonic()
        corpus_dir = tmp_path_factory.mktemp("corpus200")
        manifest = build_corpus(corpus_dir, n_chirp=100, n_noise=100, seed=2025)
        out = tmp_path_factory.mktemp("corpus200_out")
        cfg = corpus_config(seed=33, out=str(out), workers=4)
        summary = run_detect([m["path"] for m in manifest], cfg)
        assert summary.n_snippets == 200

        records = [json.loads(line)
                   for line in Path(summary.detections_path).read_text().splitlines()]
        labels = truth_labels(records, manifest)
        vectors, ids, _ = extract_rows(records, cfg)

        # split snippets (not snakes) 70/30, stratified by ground truth
        split_rng = np.random.default_rng(123)
        train_stems, test_stems = set(), set()
        for kind in (True, False):
            stems = [Path(m["path"]).stem for m in manifest if m["has_whistle"] == kind]
            stems = list(split_rng.permutation(stems))
            cut = int(round(0.7 * len(stems)))
            train_stems.update(stems[:cut])
            test_stems.update(stems[cut:])

        def row_of(v):
            r = v.as_row()
            return [float(r[c]) for c in FEATURE_COLUMNS]

        stem_of = {rid: Path(rec["source_wav"]).stem for rid, rec in zip(ids, records)}
        X_train = np.array([row_of(v) for v, rid in zip(vectors, ids)
                            if stem_of[rid] in train_stems])
        y_train = np.array([int(labels[rid]) for rid in ids if stem_of[rid] in train_stems])
        assert len(np.unique(y_train)) == 2

        search = grid_search(X_train, y_train,
                             grid={"n_estimators": [50, 100], "criterion": ["gini", "entropy"]},
                             seed=33, feature_names=list(FEATURE_COLUMNS))
        model = fit_forest(X_train, y_train, n_estimators=search.n_estimators,
                           criterion=search.criterion, seed=33,
                           feature_names=list(FEATURE_COLUMNS))

        # snippet-level verdict: positive when any snake is classified true
        predicted_positive = {}
        used = [i for i, n in enumerate(FEATURE_COLUMNS) if n in set(model.feature_names)]
        for v, rid in zip(vectors, ids):
            stem = stem_of[rid]
            if stem not in test_stems:
                continue
            klass, _ = model.predict_matrix(np.array([row_of(v)])[:, used])
            predicted_positive[stem] = predicted_positive.get(stem, False) or bool(klass[0])

        correct = 0
        total = 0
        truth = {Path(m["path"]).stem: m["has_whistle"] for m in manifest}
        for stem in test_stems:
            total += 1
            if predicted_positive.get(stem, False) == truth[stem]:
                correct += 1
        accuracy = correct / total
        elapsed = time.monotonic() - start
        with capsys.disabled():
            print(f"\n  end-to-end: snippet accuracy {accuracy:.3f} "
                  f"({correct}/{total}), elapsed {elapsed:.0f}s")
        assert accuracy >= 0.95
        assert elapsed < 600.0


def test_end_to_end_determinism(capsys, small_corpus, tmp_path):
    with criterion(capsys, "byte-identical artifacts across reruns"):
        directory, manifest = small_corpus
        wavs = [m["path"] for m in manifest]
        artifacts = []
        for sub in ("run1", "run2"):
            out = tmp_path / sub
            cfg = corpus_config(seed=99, out=str(out))
            run_detect(wavs, cfg)
            records = [json.loads(line)
                       for line in (out / "detections.jsonl").read_text().splitlines()]
            write_label_log(out / "labels.jsonl", truth_labels(records, manifest))
            run_extract(str(out / "detections.jsonl"), cfg, str(out / "dataset.csv"))
            run_train(str(out / "dataset.csv"), str(out / "model.json"),
                      grid={"n_estimators": [10], "criterion": ["gini"]}, seed=99)
            artifacts.append((
                (out / "detections.jsonl").read_bytes(),
                (out / "dataset.csv").read_bytes(),
                (out / "model.json").read_bytes(),
            ))
        assert artifacts[0][0] == artifacts[1][0], "detections differ"
        assert artifacts[0][1] == artifacts[1][1], "dataset CSV differs"
        assert artifacts[0][2] == artifacts[1][2], "model JSON differs"


def test_secondary_label_roundtrip_and_ui_train(capsys, small_corpus, tmp_path):
    with criterion(capsys, "labeling service round-trip and UI-path training"):
        directory, manifest = small_corpus
        state_dir = tmp_path / "state"
        cfg = corpus_config(seed=5, out=str(state_dir))
        run_detect([m["path"] for m in manifest], cfg)
        httpd = run_server(str(state_dir), cfg, port=0, block=False)
        try:
            base = f"http://127.0.0.1:{httpd.server_port}"

            def get(path):
                with urllib.request.urlopen(base + path) as r:
                    return r.read()

            def post(path, payload):
                req = urllib.request.Request(base + path,
                                             data=json.dumps(payload).encode(),
                                             headers={"Content-Type": "application/json"})
                with urllib.request.urlopen(req) as r:
                    return json.loads(r.read())

            records = httpd.state.records
            labels = truth_labels(records, manifest)
            # POST then GET reflects the label
            first = records[0]["snake_id"]
            post("/api/labels", {"snake_id": first, "target": True})
            snakes = json.loads(get(f"/api/snippets/{records[0]['snippet_id']}/snakes"))
            mine = next(s for s in snakes if s["snake_id"] == first)
            assert mine["label"]["target"] is True
            for snake_id, target in labels.items():
                current = httpd.state.label_of(snake_id)
                post("/api/labels", {"snake_id": snake_id, "target": bool(target),
                                     "version": current["version"] if current else 0})

            # retrain through the UI's endpoint == CLI train on the same data/seed
            grid = {"n_estimators": [10], "criterion": ["gini"]}
            ui_report = post("/api/train", {"seed": 21, "grid": grid})
            cli_result = run_train(str(state_dir / "dataset.csv"),
                                   str(tmp_path / "cli_model.json"), grid=grid, seed=21)
            assert ui_report["accuracy"] == cli_result.report["accuracy"]
            assert ui_report["confusion"] == cli_result.report["confusion"]
            assert ui_report["false_positive_rate"] == cli_result.report["false_positive_rate"]
            assert ui_report["false_negative_rate"] == cli_result.report["false_negative_rate"]

            # overlay endpoint returns a PNG matching the spectrogram grid
            sid = records[0]["snippet_id"]
            overlay = Image.open(io.BytesIO(get(f"/api/snippets/{sid}/overlay.png")))
            spect = Image.open(io.BytesIO(get(f"/api/snippets/{sid}/image.png")))
            assert overlay.size == spect.size
            from whistlekit.audio import load_audio, partition
            from whistlekit.spectrogram import compute_spectrogram
            wav = records[0]["source_wav"]
            spec = compute_spectrogram(partition(load_audio(wav), 3.0)[0], cfg.stft)
            assert spect.size == (spec.n_frames, spec.n_bins)
        finally:
            httpd.shutdown()
            httpd.server_close()
