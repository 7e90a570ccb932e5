"""Elliptic Fourier descriptors of closed contours.

Coefficients follow the Kuhl-Giardina closed form for a piecewise-linear
contour under chord-length parameterization:

    a_n = T / (2 n^2 pi^2) * sum_p dx_p/dt_p * (cos(2 pi n t_p / T) - cos(2 pi n t_{p-1} / T))
    b_n = T / (2 n^2 pi^2) * sum_p dx_p/dt_p * (sin(2 pi n t_p / T) - sin(2 pi n t_{p-1} / T))
    c_n, d_n: as a_n, b_n with dy_p in place of dx_p

so that x(t) = A0 + sum_n a_n cos(2 pi n t / T) + b_n sin(2 pi n t / T) and
y(t) = C0 + sum_n c_n cos(...) + d_n sin(...).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, NonFiniteError
from .geometry import Contour

SPECTRUM_MODES = ("spectrum_vector", "fs_scalar")


@dataclass(frozen=True, eq=False)
class EfdCoefficients:
    """Per-harmonic rows ``(a_n, b_n, c_n, d_n)`` for n = 1..N and the DC term ``(A0, C0)``."""

    harmonics: np.ndarray
    dc_term: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        h = np.array(self.harmonics, dtype=float)
        if h.ndim != 2 or h.shape[1] != 4 or len(h) < 1:
            raise ValueError(f"harmonics must be an (N, 4) array with N >= 1, got {h.shape}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(self.dc_term))):
            raise NonFiniteError("EFD coefficients must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "harmonics", h)
        object.__setattr__(self, "dc_term", (float(self.dc_term[0]), float(self.dc_term[1])))

    @property
    def n_harmonics(self) -> int:
        return len(self.harmonics)


@dataclass(frozen=True, eq=False)
class HarmonicSpectrum:
    power: np.ndarray
    fs: float


def _as_contour(contour) -> Contour:
    return contour if isinstance(contour, Contour) else Contour(contour)


def efd_coefficients(contour, n_harmonics: int = 10) -> EfdCoefficients:
    if n_harmonics < 1:
        raise ValueError("n_harmonics must be >= 1")
    v = _as_contour(contour).vertices
    d = np.diff(v, axis=0, append=v[:1])
    dt = np.hypot(d[:, 0], d[:, 1])
    T = dt.sum()
    if T == 0.0:
        raise DegenerateGeometryError("contour has zero perimeter")
    # repeated vertices contribute nothing and would divide by zero
    keep = dt > 0
    d, dt_k = d[keep], dt[keep]
    t = np.concatenate([[0.0], np.cumsum(dt)])
    t_start, t_end = t[:-1][keep], t[1:][keep]

    n = np.arange(1, n_harmonics + 1)[:, None]
    phi_end = 2 * np.pi * n * t_end / T
    phi_start = 2 * np.pi * n * t_start / T
    dcos = np.cos(phi_end) - np.cos(phi_start)
    dsin = np.sin(phi_end) - np.sin(phi_start)
    const = T / (2 * n[:, 0] ** 2 * np.pi**2)
    sx, sy = d[:, 0] / dt_k, d[:, 1] / dt_k
    harmonics = np.column_stack([
        const * (dcos @ sx),
        const * (dsin @ sx),
        const * (dcos @ sy),
        const * (dsin @ sy),
    ])

    # mean of x(t), y(t) over the piecewise-linear parameterization
    mids = (v + np.roll(v, -1, axis=0)) / 2
    dc = (mids * dt[:, None]).sum(axis=0) / T
    return EfdCoefficients(harmonics, (dc[0], dc[1]))


def harmonic_spectrum(coeffs: EfdCoefficients) -> HarmonicSpectrum:
    """Per-harmonic power (a^2 + b^2 + c^2 + d^2) / 2 and their sum ``fs``."""
    h = coeffs.harmonics
    power = (h**2).sum(axis=1) / 2
    fs = 0.0
    for p in power:
        fs += float(p)
    return HarmonicSpectrum(power=power, fs=fs)


def spectrum_feature(coeffs: EfdCoefficients, mode: str = "spectrum_vector") -> np.ndarray:
    spec = harmonic_spectrum(coeffs)
    if mode == "spectrum_vector":
        return spec.power.copy()
    if mode == "fs_scalar":
        return np.array([spec.fs])
    raise ValueError(f"spectrum mode must be one of {SPECTRUM_MODES}, got {mode!r}")


def efd_reconstruct(coeffs: EfdCoefficients, samples: int = 100) -> Contour:
    """Evaluate the truncated series at ``samples`` uniform parameter values.

    Zero coefficients give every vertex at the DC term, which is not a valid
    closed contour; in that case the raw ``(samples, 2)`` array is returned.
    """
    if samples < 3:
        raise ValueError("samples must be >= 3")
    s = np.arange(samples) / samples
    n = np.arange(1, coeffs.n_harmonics + 1)
    arg = 2 * np.pi * np.outer(s, n)
    cos, sin = np.cos(arg), np.sin(arg)
    a, b, c, d = coeffs.harmonics.T
    x = coeffs.dc_term[0] + cos @ a + sin @ b
    y = coeffs.dc_term[1] + cos @ c + sin @ d
    pts = np.column_stack([x, y])
    try:
        return Contour(pts)
    except DegenerateGeometryError:
        return pts
