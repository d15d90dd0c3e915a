"""Line-segment detection on binary ridge maps.

Progressive probabilistic Hough transform after Galambos et al.: foreground
pixels vote one at a time in random order; whenever an accumulator cell
reaches the vote threshold, the corresponding line is walked in both
directions (bridging small gaps) and emitted as a segment if long enough,
consuming its pixels and retracting their votes. Detection is deterministic
for a fixed seed. Segments are finally restricted to the whistle inclination
band (angle to the horizontal axis).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HoughConfig:
    theta_step: float = 1.0  # degrees
    vote_threshold: int = 10
    min_length: float = 25.0  # pixels, Euclidean
    max_gap: int = 3  # pixels bridged along a walked line
    inclination_band: tuple[float, float] = (15.0, 75.0)  # degrees, inclusive
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.theta_step <= 90:
            raise ValueError("theta_step must lie in (0, 90]")
        if self.min_length <= 0:
            raise ValueError("min_length must be positive")
        if self.max_gap < 0:
            raise ValueError("max_gap must be nonnegative")
        low, high = self.inclination_band
        if not 0 <= low < high <= 90:
            raise ValueError("inclination_band must satisfy 0 <= low < high <= 90")


@dataclass(frozen=True)
class LineSegment:
    p0: tuple[int, int]
    p1: tuple[int, int]
    inclination: float  # degrees in [0, 90], angle to the horizontal
    votes: int

    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    def to_json_dict(self) -> dict:
        return {
            "p0": [int(self.p0[0]), int(self.p0[1])],
            "p1": [int(self.p1[0]), int(self.p1[1])],
            "inclination": float(self.inclination),
            "votes": int(self.votes),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LineSegment":
        return cls(
            p0=(int(d["p0"][0]), int(d["p0"][1])),
            p1=(int(d["p1"][0]), int(d["p1"][1])),
            inclination=float(d["inclination"]),
            votes=int(d["votes"]),
        )


def hough_point_vote(x: float, y: float, theta: float) -> float:
    """Normal distance r = x cos(theta) + y sin(theta) for angle theta in radians."""
    return x * math.cos(theta) + y * math.sin(theta)


def segment_inclination(p0, p1) -> float:
    """Absolute angle to the horizontal axis, degrees in [0, 90]."""
    dx = abs(p1[0] - p0[0])
    dy = abs(p1[1] - p0[1])
    if dx == 0:
        return 90.0
    return math.degrees(math.atan(dy / dx))


def hough_accumulate(binary: np.ndarray, theta_step: float = 1.0):
    """Classic full Hough transform of a binary map.

    Returns (accumulator, thetas, r_offset): accumulator[r_index, theta_index]
    counts foreground pixels voting for (r, theta), with r quantized to 1 px
    and r = r_index - r_offset.
    """
    grid = np.asarray(binary, dtype=bool)
    thetas = np.deg2rad(np.arange(0.0, 180.0, theta_step))
    cos_t = np.cos(thetas)
    sin_t = np.sin(thetas)
    w, h = grid.shape
    r_offset = int(np.ceil(math.hypot(w - 1, h - 1)))
    accum = np.zeros((2 * r_offset + 1, len(thetas)), dtype=np.int64)
    xs, ys = np.nonzero(grid)
    cols = np.arange(len(thetas))
    for x, y in zip(xs, ys):
        r_idx = np.rint(x * cos_t + y * sin_t).astype(np.int64) + r_offset
        accum[r_idx, cols] += 1
    return accum, thetas, r_offset


def _unit_steps(dx: float, dy: float) -> tuple[float, float, bool]:
    """Normalize a direction to advance one pixel per step along the major
    axis. Returns (step_x, step_y, x_major)."""
    if abs(dx) >= abs(dy):
        return (1.0 if dx > 0 else -1.0), dy / abs(dx), True
    return dx / abs(dy), (1.0 if dy > 0 else -1.0), False


def _walk(mask: np.ndarray, x0: int, y0: int, step_x: float, step_y: float,
          x_major: bool, max_gap: int):
    """Follow a line direction from (x0, y0), bridging gaps of at most
    max_gap steps. At every step the trajectory pixel and its two neighbors
    across the minor axis count as hits, which absorbs the sub-degree drift
    of the quantized angle. Returns (last hit pixel, step count, hit pixels).
    """
    w, h = mask.shape
    end = (x0, y0)
    end_step = 0
    support = [(x0, y0)] if mask[x0, y0] else []
    fx, fy = float(x0), float(y0)
    gap = 0
    step = 0
    while True:
        fx += step_x
        fy += step_y
        step += 1
        xi = int(round(fx))
        yi = int(round(fy))
        if not (0 <= xi < w and 0 <= yi < h):
            break
        hit = None
        for off in (0, -1, 1):
            xc = xi if x_major else xi + off
            yc = yi + off if x_major else yi
            if 0 <= xc < w and 0 <= yc < h and mask[xc, yc]:
                hit = (xc, yc)
                break
        if hit is not None:
            end = hit
            end_step = step
            support.append(hit)
            gap = 0
        else:
            gap += 1
            if gap > max_gap:
                break
    return end, end_step, support


def _consume(mask, voted, accum, cos_t, sin_t, r_offset, x0, y0,
             step_x: float, step_y: float, x_major: bool, n_steps: int, retract: bool):
    """Clear foreground pixels within one pixel across the minor axis of the
    walked trajectory; when `retract`, also remove the votes they had cast."""
    cols = np.arange(len(cos_t))
    w, h = mask.shape

    def eat(xi: int, yi: int) -> None:
        if 0 <= xi < w and 0 <= yi < h and mask[xi, yi]:
            if retract and voted[xi, yi]:
                r_idx = np.rint(xi * cos_t + yi * sin_t).astype(np.int64) + r_offset
                accum[r_idx, cols] -= 1
                voted[xi, yi] = False
            mask[xi, yi] = False

    fx, fy = float(x0), float(y0)
    for step in range(n_steps + 1):
        xi = int(round(fx))
        yi = int(round(fy))
        for off in (0, -1, 1):
            if x_major:
                eat(xi, yi + off)
            else:
                eat(xi + off, yi)
        fx += step_x
        fy += step_y


def _principal_direction(points: list[tuple[int, int]]) -> tuple[float, float] | None:
    """Least-squares line direction through the support pixels."""
    if len(points) < 2:
        return None
    arr = np.asarray(points, dtype=np.float64)
    centered = arr - arr.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    vx, vy = vt[0]
    norm = math.hypot(vx, vy)
    if norm == 0:
        return None
    return vx / norm, vy / norm


def probabilistic_hough(binary: np.ndarray, cfg: HoughConfig = HoughConfig()) -> list[LineSegment]:
    """Detect line segments in a binary map; see module docstring."""
    grid = np.asarray(binary, dtype=bool)
    xs, ys = np.nonzero(grid)
    if len(xs) == 0:
        return []
    points = np.stack([xs, ys], axis=1)
    thetas = np.deg2rad(np.arange(0.0, 180.0, cfg.theta_step))
    cos_t = np.cos(thetas)
    sin_t = np.sin(thetas)
    cols = np.arange(len(thetas))
    w, h = grid.shape
    r_offset = int(np.ceil(math.hypot(w - 1, h - 1)))
    accum = np.zeros((2 * r_offset + 1, len(thetas)), dtype=np.int64)
    mask = grid.copy()
    voted = np.zeros_like(mask)
    rng = np.random.default_rng(cfg.rng_seed)

    segments: list[LineSegment] = []
    count = len(points)
    while count > 0:
        i = int(rng.integers(count))
        x0, y0 = int(points[i, 0]), int(points[i, 1])
        points[i] = points[count - 1]
        count -= 1
        if not mask[x0, y0]:
            continue  # consumed by an earlier segment
        r_idx = np.rint(x0 * cos_t + y0 * sin_t).astype(np.int64) + r_offset
        accum[r_idx, cols] += 1
        voted[x0, y0] = True
        votes_here = accum[r_idx, cols]
        j = int(np.argmax(votes_here))
        peak = int(votes_here[j])
        if peak < cfg.vote_threshold:
            continue
        # First pass at the quantized bin angle (line direction perpendicular
        # to the normal), gathering the support pixels.
        step_x, step_y, x_major = _unit_steps(-sin_t[j], cos_t[j])
        _, _, support_f = _walk(mask, x0, y0, step_x, step_y, x_major, cfg.max_gap)
        _, _, support_b = _walk(mask, x0, y0, -step_x, -step_y, x_major, cfg.max_gap)
        # Second pass along the least-squares direction of that support, which
        # removes the quantization drift before endpoints are fixed.
        refined = _principal_direction(support_b[::-1] + support_f)
        if refined is not None:
            step_x, step_y, x_major = _unit_steps(*refined)
        end_fwd, n_fwd, _ = _walk(mask, x0, y0, step_x, step_y, x_major, cfg.max_gap)
        end_bwd, n_bwd, _ = _walk(mask, x0, y0, -step_x, -step_y, x_major, cfg.max_gap)
        length = math.hypot(end_fwd[0] - end_bwd[0], end_fwd[1] - end_bwd[1])
        good = length >= cfg.min_length
        # Consume the walked support either way so the scan always progresses;
        # retract votes only for accepted segments.
        _consume(mask, voted, accum, cos_t, sin_t, r_offset, x0, y0,
                 step_x, step_y, x_major, n_fwd, good)
        _consume(mask, voted, accum, cos_t, sin_t, r_offset, x0, y0,
                 -step_x, -step_y, x_major, n_bwd, good)
        if good:
            p0, p1 = sorted([end_bwd, end_fwd])
            segments.append(
                LineSegment(
                    p0=p0,
                    p1=p1,
                    inclination=segment_inclination(p0, p1),
                    votes=peak,
                )
            )
    low, high = cfg.inclination_band
    return [s for s in segments if low <= s.inclination <= high]
