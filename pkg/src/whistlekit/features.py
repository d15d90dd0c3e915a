"""Per-snake geometric features and the classifier-facing dataset format.

Six continuous features per snake (centroid x/y, normalized endpoint length,
moment of inertia about the horizontal centroid axis, average and relative
gray-level mass) plus three binary pattern flags derived from cutoffs. The
CSV column order is fixed and shared with the training tools:

    avg_density,avg_x,avg_y,inertia,length,relative_density,low_density,long,low,target
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .snakes import Snake, bilinear_sample
from .spectrogram import as_grid

CSV_COLUMNS = (
    "avg_density",
    "avg_x",
    "avg_y",
    "inertia",
    "length",
    "relative_density",
    "low_density",
    "long",
    "low",
    "target",
)
CSV_HEADER = ",".join(CSV_COLUMNS)


@dataclass(frozen=True)
class FeatureConfig:
    # No default is claimed for the low-frequency cutoff: it lives in
    # frequency-bin coordinates and depends on the spectrogram settings.
    low_freq_cutoff_y: float
    low_density_cutoff: float = 0.8
    long_cutoff: float = 3.0
    length_norm_l: float | None = None  # set from the dataset via compute_l

    def __post_init__(self) -> None:
        if self.length_norm_l is not None and self.length_norm_l <= 0:
            raise ValueError("length_norm_l must be positive")
        for name in ("low_freq_cutoff_y", "low_density_cutoff", "long_cutoff"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class FeatureVector:
    avg_x: float
    avg_y: float
    avg_density: float
    relative_density: float
    inertia: float
    length: float
    low_density: bool
    long: bool
    low: bool
    target: bool | None = None

    def as_row(self) -> dict:
        return {
            "avg_density": self.avg_density,
            "avg_x": self.avg_x,
            "avg_y": self.avg_y,
            "inertia": self.inertia,
            "length": self.length,
            "relative_density": self.relative_density,
            "low_density": self.low_density,
            "long": self.long,
            "low": self.low,
            "target": self.target,
        }


def centroid(snake: Snake) -> tuple[float, float]:
    """Arithmetic mean of the snake's point coordinates."""
    pts = snake.points
    return float(pts[:, 0].mean()), float(pts[:, 1].mean())


def endpoint_distance(snake: Snake) -> float:
    pts = snake.points
    return float(math.hypot(pts[-1, 0] - pts[0, 0], pts[-1, 1] - pts[0, 1]))


def normalized_length(snake: Snake, l: float) -> float:
    """Euclidean endpoint distance divided by the normalization length l."""
    if l <= 0:
        raise ValueError("normalization length must be positive")
    return endpoint_distance(snake) / l


def inertia(snake: Snake, image) -> float:
    """Sum of I(v_i) * (y_i - y_bar)^2 about the horizontal centroid axis."""
    grid = as_grid(image)
    density = bilinear_sample(grid, snake.points)
    y = snake.points[:, 1]
    return float(np.sum(density * (y - y.mean()) ** 2))


def avg_mass(snake: Snake, image) -> float:
    """Mean gray level sampled along the snake."""
    grid = as_grid(image)
    return float(np.mean(bilinear_sample(grid, snake.points)))


def relative_mass(snake: Snake, image) -> float:
    """Snake's mean gray level divided by the whole image's mean gray level."""
    grid = as_grid(image)
    image_mean = float(grid.mean())
    if image_mean == 0.0:
        raise ValueError("all-black image: relative mass undefined")
    return avg_mass(snake, image) / image_mean


def compute_l(snakes: Iterable[Snake]) -> float:
    """Normalization length: the smallest endpoint distance in the set."""
    distances = [endpoint_distance(s) for s in snakes]
    if not distances:
        raise ValueError("compute_l needs at least one snake")
    if any(d <= 0 for d in distances):
        raise ValueError("snake with zero endpoint distance")
    return min(distances)


def build_feature_vector(snake: Snake, image, cfg: FeatureConfig) -> FeatureVector:
    if cfg.length_norm_l is None:
        raise ValueError("FeatureConfig.length_norm_l is unset; run compute_l first")
    x_bar, y_bar = centroid(snake)
    m = avg_mass(snake, image)
    rm = relative_mass(snake, image)
    j = inertia(snake, image)
    length = normalized_length(snake, cfg.length_norm_l)
    return FeatureVector(
        avg_x=x_bar,
        avg_y=y_bar,
        avg_density=m,
        relative_density=rm,
        inertia=j,
        length=length,
        low_density=rm <= cfg.low_density_cutoff,
        long=length >= cfg.long_cutoff,
        low=y_bar <= cfg.low_freq_cutoff_y,
    )


def correlation_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Pearson correlations over the 10 CSV columns, booleans encoded 0/1.

    Constant columns correlate 0 with everything and 1 with themselves."""
    if len(vectors) < 2:
        raise ValueError("need at least 2 rows")
    rows = []
    for v in vectors:
        if v.target is None:
            raise ValueError("correlation_matrix needs labeled vectors")
        r = v.as_row()
        rows.append([float(r[c]) for c in CSV_COLUMNS])
    data = np.asarray(rows, dtype=np.float64)
    centered = data - data.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    k = len(CSV_COLUMNS)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                out[i, j] = 1.0
            elif norms[i] == 0.0 or norms[j] == 0.0:
                out[i, j] = 0.0
            else:
                out[i, j] = np.dot(centered[:, i], centered[:, j]) / (norms[i] * norms[j])
    return out


def csv_value(column: str, value) -> str:
    if column == "target":
        return "" if value is None else str(int(value))
    if column in ("low_density", "long", "low"):
        return str(int(value))
    return f"{value:.6f}"


def csv_row(vector: FeatureVector) -> str:
    row = vector.as_row()
    return ",".join(csv_value(c, row[c]) for c in CSV_COLUMNS)


def write_csv(vectors: Sequence[FeatureVector], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for v in vectors:
        fh.write(csv_row(v) + "\n")
