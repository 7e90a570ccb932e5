"""Region descriptor: polygon masks, the modified polar Fourier transform and GFD.

Masks index pixels as ``grid[row, col]``; a pixel's coordinate is
``(x, y) = (col, row)`` and its fill test uses the pixel center
``(col + 0.5, row + 0.5)`` in raster space.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, EmptyMaskError, ZeroDCError
from .geometry import LandmarkSet, centroid
from .regions import RegionMap, default_region_map, region_points

# vertices are snapped to this raster sub-grid so that translated inputs
# produce bit-identical masks despite float rounding in the fit transform
_SNAP = 4096.0


@dataclass(frozen=True, eq=False)
class BinaryMask:
    grid: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=bool)
        if g.ndim != 2:
            raise ValueError(f"mask grid must be 2-D, got shape {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.grid))

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.grid, other.grid)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GfdFeature:
    values: np.ndarray
    radial_freqs: int
    angular_freqs: int

    def __post_init__(self):
        if len(self.values) != self.radial_freqs * self.angular_freqs:
            raise ValueError("GFD length must equal radial_freqs * angular_freqs")


def _as_grid(mask) -> np.ndarray:
    return mask.grid if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)


def fill_polygon(vertices, shape: tuple[int, int]) -> np.ndarray:
    """Even-odd scanline fill of a closed polygon given in raster coordinates.

    A pixel is set when its center lies inside. Edges use the half-open rule
    ``min(y0, y1) <= yc < max(y0, y1)`` so shared vertices count once.
    """
    v = np.asarray(vertices, dtype=float)
    rows, cols = shape
    grid = np.zeros(shape, dtype=bool)
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    lo, hi = np.minimum(y0, y1), np.maximum(y0, y1)
    r_start = max(int(np.floor(lo.min() - 0.5)), 0)
    r_stop = min(int(np.ceil(hi.max() - 0.5)) + 1, rows)
    for r in range(r_start, r_stop):
        yc = r + 0.5
        active = (lo <= yc) & (yc < hi)
        if not active.any():
            continue
        xa, ya, xb, yb = x0[active], y0[active], x1[active], y1[active]
        xs = np.sort(xa + (yc - ya) * (xb - xa) / (yb - ya))
        for left, right in zip(xs[0::2], xs[1::2]):
            c0 = max(int(np.ceil(left - 0.5)), 0)
            c1 = min(int(np.ceil(right - 0.5)), cols)
            if c1 > c0:
                grid[r, c0:c1] = True
    return grid


def fit_to_raster(points, resolution: int, margin: int = 2) -> np.ndarray:
    """Scale and center ``points`` into a square raster, preserving aspect ratio."""
    pts = np.asarray(points, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float((hi - lo).max())
    if extent == 0.0:
        raise DegenerateGeometryError("region polygon has zero extent")
    scale = (resolution - 2 * margin) / extent
    placed = (pts - (lo + hi) / 2) * scale + resolution / 2
    return np.round(placed * _SNAP) / _SNAP


def rasterize_points(points, resolution: int = 64, margin: int = 2) -> BinaryMask:
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    if len(points) < 3:
        raise DegenerateGeometryError("region polygon needs at least 3 vertices")
    grid = fill_polygon(fit_to_raster(points, resolution, margin), (resolution, resolution))
    if not grid.any():
        raise DegenerateGeometryError("region polygon covers no pixels")
    return BinaryMask(grid)


def rasterize_region(landmarks: LandmarkSet, region: str, resolution: int = 64,
                     region_map: RegionMap | None = None, margin: int = 2) -> BinaryMask:
    """Binary mask of one facial region, cropped to its bounding box and centered."""
    if region_map is None:
        region_map = default_region_map(landmarks.scheme)
    pts = region_points(landmarks.points, region_map[region])
    return rasterize_points(pts, resolution, margin)


def _polar_coords(grid: np.ndarray):
    if not grid.any():
        raise EmptyMaskError("mask has no foreground pixels")
    xc, yc = centroid(grid)
    rows, cols = np.nonzero(grid)
    dx, dy = cols - xc, rows - yc
    r = np.hypot(dx, dy)
    theta = np.mod(np.arctan2(dy, dx), 2 * np.pi)
    return r, theta


def max_radius(mask) -> float:
    """Largest centroid-to-pixel distance; 1.0 for a single-pixel shape."""
    r, _ = _polar_coords(_as_grid(mask))
    big = float(r.max())
    return big if big > 0 else 1.0


def polar_ft(mask, radial_freqs: int = 4, angular_freqs: int = 9,
             angular_bins: int | None = None) -> np.ndarray:
    """Modified polar Fourier transform ``pf[rho, phi]`` of a binary shape.

    Sums ``exp(-2j*pi*(r/R*rho + phi*theta/(2*pi)))`` over foreground pixels,
    with (r, theta) measured from the mass centroid and R the maximum radius.
    With ``angular_bins=T`` the angle is first quantized to bin index
    ``i = floor(theta*T/(2*pi))`` and the angular term is ``exp(-2j*pi*i*phi/T)``.
    """
    if radial_freqs < 1 or angular_freqs < 1:
        raise ValueError("frequency counts must be >= 1")
    grid = _as_grid(mask)
    r, theta = _polar_coords(grid)
    R = float(r.max()) or 1.0
    if angular_bins is not None:
        theta = 2 * np.pi * np.floor(theta * angular_bins / (2 * np.pi)) / angular_bins
    rho = np.arange(radial_freqs)
    phi = np.arange(angular_freqs)
    radial = np.exp(-2j * np.pi * np.outer(r / R, rho))
    angular = np.exp(-1j * np.outer(theta, phi))
    return radial.T @ angular


def gfd(mask, radial_freqs: int = 4, angular_freqs: int = 9,
        angular_bins: int | None = None) -> GfdFeature:
    """Generic Fourier descriptor, ``radial_freqs * angular_freqs`` values in rho-major order.

    The first value is ``|pf(0,0)| / (2*pi*R**2)``, the rest ``|pf| / |pf(0,0)|``.
    """
    grid = _as_grid(mask)
    pf = polar_ft(grid, radial_freqs, angular_freqs, angular_bins)
    dc = abs(pf[0, 0])
    if dc == 0:
        raise ZeroDCError("pf(0,0) is zero")
    R = max_radius(grid)
    values = (np.abs(pf) / dc).ravel()
    values[0] = dc / (2 * np.pi * R * R)
    return GfdFeature(values, radial_freqs, angular_freqs)


def write_pgm(mask, path) -> None:
    """Binary (P5) PGM with foreground at 255."""
    grid = _as_grid(mask)
    rows, cols = grid.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (grid.astype(np.uint8) * 255).tobytes())


def read_pgm(path) -> BinaryMask:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows = int(parts[1]), int(parts[2])
    pixels = np.frombuffer(data[-rows * cols:], dtype=np.uint8)
    return BinaryMask(pixels.reshape(rows, cols) > 0)
