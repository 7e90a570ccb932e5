"""Independent oracles and fixtures shared by the test modules."""

import cmath
import math

import numpy as np


def random_polygon(rng, k=20, center=(0.0, 0.0)):
    """Star-shaped simple polygon with ``k`` vertices in counter-clockwise order."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, k))
    radii = rng.uniform(0.5, 1.5, k)
    return np.column_stack([center[0] + radii * np.cos(angles), center[1] + radii * np.sin(angles)])


def rotate(points, angle, about=(0.0, 0.0)):
    c, s = math.cos(angle), math.sin(angle)
    p = np.asarray(points, float) - about
    return p @ np.array([[c, s], [-s, c]]) + about


def dense_efd_oracle(vertices, n_harmonics, samples=10_000):
    """Fourier series of the piecewise-linear closed curve by midpoint-rule integration.

    The curve is resampled at ``samples`` equally spaced arc-length positions and
    the trigonometric coefficients are taken as discrete averages.
    """
    v = np.asarray(vertices, float)
    closed = np.vstack([v, v[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    t = np.concatenate([[0.0], np.cumsum(seg)])
    T = t[-1]
    s = (np.arange(samples) + 0.5) * T / samples
    x = np.interp(s, t, closed[:, 0])
    y = np.interp(s, t, closed[:, 1])
    out = np.zeros((n_harmonics, 4))
    for n in range(1, n_harmonics + 1):
        c = np.cos(2 * np.pi * n * s / T)
        si = np.sin(2 * np.pi * n * s / T)
        out[n - 1] = [2 * np.mean(x * c), 2 * np.mean(x * si), 2 * np.mean(y * c), 2 * np.mean(y * si)]
    return out


def brute_centroid(grid):
    sx = sy = count = 0
    for r in range(grid.shape[0]):
        for c in range(grid.shape[1]):
            if grid[r, c]:
                sx += c
                sy += r
                count += 1
    return sx / count, sy / count


def brute_polar_ft(grid, radial_freqs, angular_freqs):
    """Direct double loop over pixels and frequencies using scalar math only."""
    xc, yc = brute_centroid(grid)
    pixels = [(c - xc, r - yc) for r in range(grid.shape[0]) for c in range(grid.shape[1]) if grid[r, c]]
    radius = max(math.hypot(dx, dy) for dx, dy in pixels) or 1.0
    out = np.zeros((radial_freqs, angular_freqs), complex)
    for rho in range(radial_freqs):
        for phi in range(angular_freqs):
            total = 0j
            for dx, dy in pixels:
                r = math.hypot(dx, dy)
                theta = math.atan2(dy, dx) % (2 * math.pi)
                total += cmath.exp(-2j * math.pi * (r / radius * rho + phi * theta / (2 * math.pi)))
            out[rho, phi] = total
    return out


def rel_l2(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
