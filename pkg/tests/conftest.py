import json
from pathlib import Path

import pytest
from synth import build_corpus, snake_matches_line

from whistlekit.pipeline import PipelineConfig
from whistlekit.ridge import FrangiConfig


def corpus_config(seed: int = 0, out: str = "out", **kw) -> PipelineConfig:
    """Pipeline config tuned for the 16 kHz synthetic corpus: a lower
    binarize threshold so chance speckle alignments (the false-positive
    class) survive into the Hough stage."""
    return PipelineConfig(frangi=FrangiConfig(binarize_threshold=0.08),
                          seed=seed, output_dir=out, **kw)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A handful of chirp and noise WAVs with ground truth."""
    directory = tmp_path_factory.mktemp("corpus_small")
    manifest = build_corpus(directory, n_chirp=5, n_noise=4, seed=101)
    return directory, manifest


def truth_labels(records: list[dict], manifest: list[dict]) -> dict[str, bool]:
    """Ground-truth snake labels: on-chirp snakes true, everything else false."""
    lines = {Path(m["path"]).stem: m["line"] for m in manifest}
    labels = {}
    for rec in records:
        line = lines[Path(rec["source_wav"]).stem]
        labels[rec["snake_id"]] = bool(line and snake_matches_line(rec["points"], line))
    return labels


def write_label_log(path: Path, labels: dict[str, bool]) -> None:
    with open(path, "w") as fh:
        for snake_id in sorted(labels):
            fh.write(json.dumps({"snake_id": snake_id, "target": labels[snake_id],
                                 "version": 1}) + "\n")
