"""Landmark ingestion and geometric preprocessing.

Covers reading landmark files, per-axis z-score normalization, the mass
centroid of a binary mask, direct least-squares ellipse fitting and the
construction of closed contours for the contour descriptor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateGeometryError,
    EmptyMaskError,
    FileFormatError,
    NonFiniteError,
    NotAnEllipseError,
)
from .labels import class_index
from .regions import DEFAULT_SCHEME, RegionMap, default_region_map, region_points, scheme_point_count

CONTOUR_SOURCES = ("fitted_ellipse", "landmark_polygon")


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    points: np.ndarray
    sample_id: str = ""
    subject_id: str = ""
    label: str | None = None
    scheme: str = DEFAULT_SCHEME

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise FileFormatError(f"landmarks must be an (n, 2) array, got shape {pts.shape}")
        expected = scheme_point_count(self.scheme)
        if len(pts) != expected:
            raise FileFormatError(
                f"{self.scheme} expects {expected} landmarks, got {len(pts)}"
            )
        if not np.all(np.isfinite(pts)):
            raise NonFiniteError("landmark coordinates must be finite")
        if self.label is not None:
            class_index(self.label)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class Contour:
    """Closed polyline; the last vertex connects back to the first."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DegenerateGeometryError(f"contour vertices must be (K, 2), got {v.shape}")
        if len(v) < 3:
            raise DegenerateGeometryError(f"contour needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("contour vertices must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.perimeter == 0.0:
            raise DegenerateGeometryError("contour has zero perimeter")

    closed = True

    @property
    def perimeter(self) -> float:
        d = np.diff(self.vertices, axis=0, append=self.vertices[:1])
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True)
class EllipseParams:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    rotation: float
    residual: float = 0.0

    def __post_init__(self):
        major, minor = self.semi_axes
        if not (major >= minor > 0):
            raise NotAnEllipseError(f"invalid semi-axes {self.semi_axes}")
        if not 0.0 <= self.rotation < math.pi:
            raise ValueError(f"rotation {self.rotation} outside [0, pi)")

    def conic(self) -> tuple[float, float, float, float, float, float]:
        """Implicit coefficients (A, B, C, D, E, F) of A x^2 + B y^2 + C xy + D x + E y + F = 0."""
        (cx, cy), (a, b) = self.center, self.semi_axes
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        A = c * c / a**2 + s * s / b**2
        B = s * s / a**2 + c * c / b**2
        C = 2 * c * s * (1 / a**2 - 1 / b**2)
        D = -2 * A * cx - C * cy
        E = -2 * B * cy - C * cx
        F = A * cx * cx + B * cy * cy + C * cx * cy - 1
        return A, B, C, D, E, F

    def implicit_residuals(self, points) -> np.ndarray:
        """Value of the normalized implicit form at each point (0 on the ellipse)."""
        p = np.asarray(points, dtype=float) - self.center
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = (c * p[:, 0] + s * p[:, 1]) / self.semi_axes[0]
        v = (-s * p[:, 0] + c * p[:, 1]) / self.semi_axes[1]
        return u * u + v * v - 1.0

    def sample(self, k: int) -> np.ndarray:
        """``k`` points at uniform steps of the ellipse's angular parameter."""
        t = 2 * np.pi * np.arange(k) / k
        (cx, cy), (a, b) = self.center, self.semi_axes
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x = cx + a * np.cos(t) * c - b * np.sin(t) * s
        y = cy + a * np.cos(t) * s + b * np.sin(t) * c
        return np.column_stack([x, y])


def _parse_pair(line: str, path, lineno: int) -> tuple[float, float]:
    parts = line.split()
    if len(parts) != 2:
        raise FileFormatError(f"{path}:{lineno}: expected 'x y', got {line.strip()!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise FileFormatError(f"{path}:{lineno}: not a number pair: {line.strip()!r}") from None


def _read_pts(lines: list[str], path) -> list[tuple[float, float]]:
    declared = None
    i = 0
    while i < len(lines) and lines[i].strip() != "{":
        key, _, value = lines[i].partition(":")
        if key.strip() == "n_points":
            try:
                declared = int(value)
            except ValueError:
                raise FileFormatError(f"{path}:{i + 1}: bad n_points {value.strip()!r}") from None
        i += 1
    if i == len(lines):
        raise FileFormatError(f"{path}: pts file has no '{{' block")
    pairs = []
    for lineno in range(i + 1, len(lines)):
        line = lines[lineno]
        if line.strip() == "}":
            break
        if line.strip():
            pairs.append(_parse_pair(line, path, lineno + 1))
    else:
        raise FileFormatError(f"{path}: pts block not closed with '}}'")
    if declared is not None and declared != len(pairs):
        raise FileFormatError(f"{path}: header declares {declared} points, found {len(pairs)}")
    return pairs


def parse_landmark_file(path, scheme: str = DEFAULT_SCHEME, *, sample_id=None,
                        subject_id: str = "", label: str | None = None) -> LandmarkSet:
    """Read a plain ``x y`` per line file or an ibug ``.pts`` file.

    The format is detected from content: a line holding only ``{`` marks a
    pts file. Blank lines and ``#`` comments are ignored in plain files.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if any(line.strip() == "{" for line in lines):
        pairs = _read_pts(lines, path)
    else:
        pairs = [
            _parse_pair(line, path, n + 1)
            for n, line in enumerate(lines)
            if line.strip() and not line.lstrip().startswith("#")
        ]
    expected = scheme_point_count(scheme)
    if len(pairs) != expected:
        raise FileFormatError(f"{path}: {scheme} expects {expected} points, found {len(pairs)}")
    pts = np.array(pairs, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise NonFiniteError(f"{path}: non-finite landmark coordinate")
    return LandmarkSet(
        points=pts,
        sample_id=path.stem if sample_id is None else sample_id,
        subject_id=subject_id,
        label=label,
        scheme=scheme,
    )


def write_landmark_file(path, points, fmt: str = "plain") -> None:
    pts = np.asarray(points, dtype=float)
    body = "".join(f"{x!r} {y!r}\n" for x, y in pts.tolist())
    if fmt == "pts":
        body = f"version: 1\nn_points: {len(pts)}\n{{\n{body}}}\n"
    elif fmt != "plain":
        raise ValueError(f"unknown landmark format {fmt!r}")
    Path(path).write_text(body, encoding="utf-8")


def zscore_normalize(points) -> np.ndarray:
    """Per-axis (x - mean) / std with the sample (n - 1) standard deviation."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise DegenerateGeometryError("z-score normalization needs at least 2 points")
    mean = pts.mean(axis=0)
    centered = pts - mean
    std = centered.std(axis=0, ddof=1)
    scale = np.abs(pts).max(axis=0)
    if np.any(std <= 1e-12 * np.maximum(scale, np.finfo(float).tiny)):
        raise DegenerateGeometryError("zero variance along an axis")
    return centered / std


def centroid(mask) -> tuple[float, float]:
    """Mass centroid ``(x, y)`` of the foreground; x is the column, y the row."""
    grid = np.asarray(getattr(mask, "grid", mask))
    rows, cols = np.nonzero(grid)
    n = len(rows)
    if n == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return int(cols.sum()) / n, int(rows.sum()) / n


def _conic_to_params(coef: np.ndarray) -> tuple[tuple[float, float], tuple[float, float], float]:
    # coef ordering: x^2, xy, y^2, x, y, 1
    a, b, c, d, e, f = coef
    quad = np.array([[a, b / 2], [b / 2, c]])
    if b * b - 4 * a * c >= 0:
        raise NotAnEllipseError("conic is not an ellipse")
    x0, y0 = np.linalg.solve(2 * quad, [-d, -e])
    f0 = f + (d * x0 + e * y0) / 2
    lam, vec = np.linalg.eigh(quad)
    with np.errstate(invalid="ignore", divide="ignore"):
        axes = -f0 / lam
    if not np.all(axes > 0):
        raise NotAnEllipseError("conic describes an imaginary ellipse")
    axes = np.sqrt(axes)
    major = int(np.argmax(axes))
    vx, vy = vec[:, major]
    rotation = math.atan2(vy, vx) % math.pi
    if rotation >= math.pi:
        rotation = 0.0
    return (float(x0), float(y0)), (float(axes[major]), float(axes[1 - major])), rotation


def fit_ellipse(points) -> EllipseParams:
    """Direct least-squares ellipse fit with the ellipse-specific constraint.

    Uses the numerically stable split-scatter formulation of the
    Fitzgibbon-Pilu-Fisher method on centered, scale-conditioned points.
    The returned ``residual`` is the RMS algebraic distance of the
    conditioned points under the unit-norm conic.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
        raise DegenerateGeometryError("ellipse fitting needs at least 5 points")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteError("ellipse fit points must be finite")
    mean = pts.mean(axis=0)
    centered = pts - mean
    scale = math.sqrt(float((centered**2).sum(axis=1).mean()) / 2)
    if scale == 0.0:
        raise DegenerateGeometryError("all points coincide")
    q = centered / scale
    sv = np.linalg.svd(q, compute_uv=False)
    if sv[-1] <= 1e-9 * sv[0]:
        raise DegenerateGeometryError("points are collinear")

    x, y = q[:, 0], q[:, 1]
    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1, s2, s3 = d1.T @ d1, d1.T @ d2, d2.T @ d2
    t = -np.linalg.solve(s3, s2.T)
    m = s1 + s2 @ t
    # premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    m = np.array([m[2] / 2, -m[1], m[0] / 2])
    _, vecs = np.linalg.eig(m)
    vecs = np.real(vecs)
    design = np.column_stack([d1, d2])
    best = None
    for k in range(3):
        a1 = vecs[:, k]
        if 4 * a1[0] * a1[2] - a1[1] ** 2 <= 0:
            continue
        coef = np.concatenate([a1, t @ a1])
        coef /= np.linalg.norm(coef)
        rms = math.sqrt(float(np.mean((design @ coef) ** 2)))
        if best is None or rms < best[0]:
            best = (rms, coef)
    if best is None:
        raise NotAnEllipseError("no ellipse-constrained solution for these points")
    rms, coef = best
    (cx, cy), (major, minor), rotation = _conic_to_params(coef)
    return EllipseParams(
        center=(float(cx * scale + mean[0]), float(cy * scale + mean[1])),
        semi_axes=(float(major * scale), float(minor * scale)),
        rotation=rotation,
        residual=rms,
    )


def contour_from_points(points, source: str = "fitted_ellipse", n_points: int = 64) -> Contour:
    """Closed contour of a landmark group, either fitted-ellipse samples or the polygon itself."""
    if source == "fitted_ellipse":
        return Contour(fit_ellipse(points).sample(n_points))
    if source == "landmark_polygon":
        return Contour(np.asarray(points, dtype=float))
    raise ValueError(f"contour source must be one of {CONTOUR_SOURCES}, got {source!r}")


def region_contour(landmarks: LandmarkSet, region: str, source: str = "fitted_ellipse",
                   region_map: RegionMap | None = None, n_points: int = 64) -> Contour:
    """Contour of one facial region in z-score normalized landmark coordinates."""
    if region_map is None:
        region_map = default_region_map(landmarks.scheme)
    spec = region_map[region]
    normalized = zscore_normalize(landmarks.points)
    return contour_from_points(region_points(normalized, spec), source, n_points)
