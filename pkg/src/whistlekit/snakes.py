"""Open active contours with fixed endpoints.

A snake is an N-point curve initialized on a Hough segment and relaxed onto
the dark whistle ridge by minimizing

    E = sum_i 1/2 (alpha |v_{i+1} - v_i|^2 + beta |v_{i+1} - 2 v_i + v_{i-1}|^2)
      + sum_i (w_line I(v_i) + w_edge |grad I(v_i)|^2)

with I sampled bilinearly. Minimization is gradient descent over the interior
points with backtracking line search, so the energy of accepted iterates never
increases; the first and last points stay fixed throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hough import LineSegment
from .spectrogram import as_grid


@dataclass(frozen=True)
class SnakeConfig:
    n_points: int = 50
    alpha: float = 0.01  # first-order stiffness
    beta_bend: float = 0.001  # second-order stiffness; low allows sharp turns
    w_line: float = 1.0  # weight on I(v): positive pulls toward dark pixels
    w_edge: float = 0.0  # weight on |grad I|^2
    max_iterations: int = 500
    step_size: float = 1.0  # pixels moved by the farthest point per trial step
    convergence_tol: float = 0.1  # max point displacement

    def __post_init__(self) -> None:
        if self.n_points < 3:
            raise ValueError("n_points must be at least 3")
        if self.alpha < 0 or self.beta_bend < 0:
            raise ValueError("stiffness weights must be nonnegative")


@dataclass(frozen=True)
class Snake:
    points: np.ndarray  # (N, 2) float, columns (x, y)
    endpoints_fixed: bool = True
    source_segment: LineSegment | None = None
    converged: bool | None = None
    energy: float | None = None

    @property
    def n_points(self) -> int:
        return len(self.points)

    def to_json_dict(self) -> dict:
        return {
            "points": [[float(x), float(y)] for x, y in self.points],
            "converged": self.converged,
            "energy": None if self.energy is None else float(self.energy),
        }


def init_snake(segment: LineSegment, n_points: int = 50) -> Snake:
    """N points equally spaced on the straight segment."""
    if segment.length() == 0:
        raise ValueError("degenerate zero-length segment")
    t = np.linspace(0.0, 1.0, n_points)[:, None]
    p0 = np.asarray(segment.p0, dtype=np.float64)
    p1 = np.asarray(segment.p1, dtype=np.float64)
    pts = p0 + t * (p1 - p0)
    pts.flags.writeable = False
    return Snake(points=pts, endpoints_fixed=True, source_segment=segment)


def bilinear_sample(grid: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Sample a 2-D grid at real-valued (x, y) points with bilinear weights.

    Points must lie within [0, W-1] x [0, H-1]."""
    pts = np.asarray(points, dtype=np.float64)
    w, h = grid.shape
    x = pts[:, 0]
    y = pts[:, 1]
    if np.any(x < 0) or np.any(x > w - 1) or np.any(y < 0) or np.any(y > h - 1):
        raise ValueError("point out of image bounds")
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2) if w > 1 else np.zeros(len(x), int)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2) if h > 1 else np.zeros(len(y), int)
    fx = x - x0
    fy = y - y0
    top = grid[x0, y0] * (1 - fx) + grid[np.minimum(x0 + 1, w - 1), y0] * fx
    bot = (
        grid[x0, np.minimum(y0 + 1, h - 1)] * (1 - fx)
        + grid[np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)] * fx
    )
    return top * (1 - fy) + bot * fy


def internal_energy(points: np.ndarray, alpha: float, beta_bend: float) -> float:
    pts = np.asarray(points, dtype=np.float64)
    d1 = np.diff(pts, axis=0)
    e = 0.5 * alpha * np.sum(d1 * d1)
    if len(pts) >= 3:
        d2 = pts[2:] - 2 * pts[1:-1] + pts[:-2]
        e += 0.5 * beta_bend * np.sum(d2 * d2)
    return float(e)


def internal_gradient(points: np.ndarray, alpha: float, beta_bend: float) -> np.ndarray:
    """Analytic gradient of internal_energy with respect to every point."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    grad = np.zeros_like(pts)
    d1 = np.diff(pts, axis=0)  # d1[i] = v[i+1] - v[i]
    grad[:-1] -= alpha * d1
    grad[1:] += alpha * d1
    if n >= 3:
        d2 = pts[2:] - 2 * pts[1:-1] + pts[:-2]  # second difference at i = 1..n-2
        grad[:-2] += beta_bend * d2
        grad[1:-1] -= 2 * beta_bend * d2
        grad[2:] += beta_bend * d2
    return grad


def _image_fields(grid: np.ndarray, cfg: SnakeConfig):
    """Gradient grids of I and of the external energy, for sampling."""
    gx, gy = np.gradient(grid)
    ext = cfg.w_line * grid + cfg.w_edge * (gx * gx + gy * gy)
    ext_gx, ext_gy = np.gradient(ext)
    return gx, gy, ext_gx, ext_gy


def snake_energy(snake: Snake | np.ndarray, image, cfg: SnakeConfig = SnakeConfig()) -> float:
    """Total discretized energy of the snake on the image."""
    pts = snake.points if isinstance(snake, Snake) else np.asarray(snake, dtype=np.float64)
    grid = as_grid(image)
    w, h = grid.shape
    if (np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > w - 1)
            or np.any(pts[:, 1] < 0) or np.any(pts[:, 1] > h - 1)):
        raise ValueError("point out of image bounds")
    e = internal_energy(pts, cfg.alpha, cfg.beta_bend)
    if cfg.w_line != 0.0:
        e += cfg.w_line * float(np.sum(bilinear_sample(grid, pts)))
    if cfg.w_edge != 0.0:
        gx, gy = np.gradient(grid)
        sx = bilinear_sample(gx, pts)
        sy = bilinear_sample(gy, pts)
        e += cfg.w_edge * float(np.sum(sx * sx + sy * sy))
    return e


def evolve(snake: Snake, image, cfg: SnakeConfig = SnakeConfig(),
           trace: list | None = None) -> Snake:
    """Descend the energy until the largest accepted displacement drops below
    convergence_tol or max_iterations is hit. Non-convergence returns the
    best-so-far points flagged converged=False. When given, `trace` collects
    the energy after every accepted iteration."""
    grid = as_grid(image)
    w, h = grid.shape
    pts = np.array(snake.points, dtype=np.float64)
    gx, gy, ext_gx, ext_gy = _image_fields(grid, cfg)

    def energy(p: np.ndarray) -> float:
        e = internal_energy(p, cfg.alpha, cfg.beta_bend)
        if cfg.w_line != 0.0 or cfg.w_edge != 0.0:
            # external field identical to _image_fields' `ext`
            e_line = bilinear_sample(grid, p) * cfg.w_line if cfg.w_line else 0.0
            if cfg.w_edge:
                sx = bilinear_sample(gx, p)
                sy = bilinear_sample(gy, p)
                e_edge = cfg.w_edge * (sx * sx + sy * sy)
            else:
                e_edge = 0.0
            e += float(np.sum(e_line + e_edge))
        return e

    current = energy(pts)
    if trace is not None:
        trace.append(current)
    converged = False
    min_step = cfg.step_size * 2.0**-30
    for _ in range(cfg.max_iterations):
        grad = internal_gradient(pts, cfg.alpha, cfg.beta_bend)
        if cfg.w_line != 0.0 or cfg.w_edge != 0.0:
            grad[:, 0] += bilinear_sample(ext_gx, pts)
            grad[:, 1] += bilinear_sample(ext_gy, pts)
        grad[0] = 0.0
        grad[-1] = 0.0
        gmax = np.max(np.abs(grad))
        if gmax == 0.0:
            converged = True
            break
        step = cfg.step_size
        accepted = None
        while step >= min_step:
            cand = pts - (step / gmax) * grad
            cand[:, 0] = np.clip(cand[:, 0], 0.0, w - 1)
            cand[:, 1] = np.clip(cand[:, 1], 0.0, h - 1)
            cand[0] = pts[0]
            cand[-1] = pts[-1]
            cand_energy = energy(cand)
            if cand_energy <= current:
                accepted = (cand, cand_energy)
                break
            step *= 0.5
        if accepted is None:
            converged = True  # no decreasing step exists at numeric resolution
            break
        cand, current = accepted
        if trace is not None:
            trace.append(current)
        displacement = np.max(np.hypot(cand[:, 0] - pts[:, 0], cand[:, 1] - pts[:, 1]))
        pts = cand
        if displacement < cfg.convergence_tol:
            converged = True
            break
    pts.flags.writeable = False
    return replace(snake, points=pts, converged=converged, energy=current)


def dedupe(snakes: list[Snake], min_mean_distance: float = 5.0) -> list[Snake]:
    """Drop near-duplicate snakes, keeping the lower-energy one.

    Two snakes are duplicates when the mean index-aligned point distance
    (orientation-insensitive) is below min_mean_distance."""
    order = sorted(range(len(snakes)), key=lambda i: (snakes[i].energy is None, snakes[i].energy, i))
    kept: list[int] = []
    for i in order:
        a = snakes[i].points
        duplicate = False
        for k in kept:
            b = snakes[k].points
            if len(a) != len(b):
                continue
            fwd = np.mean(np.hypot(*(a - b).T))
            rev = np.mean(np.hypot(*(a - b[::-1]).T))
            if min(fwd, rev) < min_mean_distance:
                duplicate = True
                break
        if not duplicate:
            kept.append(i)
    kept.sort()
    return [snakes[i] for i in kept]
