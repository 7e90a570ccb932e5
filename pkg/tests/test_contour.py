import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import directed_hausdorff

from fershape.contour import (
    EfdCoefficients,
    efd_coefficients,
    efd_reconstruct,
    harmonic_spectrum,
    spectrum_feature,
)
from fershape.errors import DegenerateGeometryError

from helpers import dense_efd_oracle, random_polygon, rotate


def _circle(r=1.0, k=360):
    t = 2 * np.pi * np.arange(k) / k
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def _dense(vertices, samples):
    closed = np.vstack([vertices, vertices[:1]])
    t = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))])
    s = np.arange(samples) / samples * t[-1]
    return np.column_stack([np.interp(s, t, closed[:, 0]), np.interp(s, t, closed[:, 1])])


def test_unit_circle_first_harmonic():
    c = efd_coefficients(_circle(), 4)
    assert np.allclose(c.harmonics[0], (1, 0, 0, 1), atol=1e-3)
    assert np.all(harmonic_spectrum(c).power[1:] < 1e-5)


def test_square_harmonics():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    c = efd_coefficients(square, 8)
    np.testing.assert_allclose(c.harmonics, dense_efd_oracle(square, 8), atol=1e-6)
    power = harmonic_spectrum(c).power
    assert np.all(power[1::2] < 1e-10)
    odd = power[0::2] * np.arange(1, 9, 2) ** 4
    np.testing.assert_allclose(odd, odd[0], rtol=1e-9)


def test_two_vertices_degenerate():
    with pytest.raises(DegenerateGeometryError):
        efd_coefficients(np.array([[0, 0], [1, 1]], float), 4)


def test_repeated_vertex_ignored():
    p = random_polygon(np.random.default_rng(0), 12)
    doubled = np.insert(p, 5, p[5], axis=0)
    np.testing.assert_allclose(efd_coefficients(doubled, 6).harmonics,
                               efd_coefficients(p, 6).harmonics, atol=1e-14)


def test_dense_oracle_random_polygons():
    rng = np.random.default_rng(1)
    for _ in range(10):
        p = random_polygon(rng, 20)
        err = np.abs(efd_coefficients(p, 10).harmonics - dense_efd_oracle(p, 10)).max()
        assert err < 1e-5


# ---- spectrum ----

def test_zero_coefficients_spectrum():
    s = harmonic_spectrum(EfdCoefficients(np.zeros((3, 4))))
    assert s.power.tolist() == [0, 0, 0]
    assert s.fs == 0


def test_single_harmonic_power():
    s = harmonic_spectrum(EfdCoefficients([[3, 4, 0, 0]]))
    assert s.power.tolist() == [12.5]
    assert s.fs == 12.5


def test_circle_fs_is_radius_squared():
    for r in (0.5, 2.0, 7.0):
        fs = harmonic_spectrum(efd_coefficients(_circle(r), 10)).fs
        assert fs == pytest.approx(r * r, rel=1e-3)


def test_spectrum_modes():
    c = efd_coefficients(random_polygon(np.random.default_rng(2), 15), 10)
    vec = spectrum_feature(c, "spectrum_vector")
    assert vec.shape == (10,)
    assert spectrum_feature(c, "fs_scalar")[0] == harmonic_spectrum(c).fs
    with pytest.raises(ValueError):
        spectrum_feature(c, "average")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 30), st.floats(0, 2 * np.pi),
       st.floats(-100, 100), st.floats(-100, 100), st.integers(0, 29))
def test_power_invariances(seed, k, angle, tx, ty, shift):
    p = random_polygon(np.random.default_rng(seed), k)
    ref = harmonic_spectrum(efd_coefficients(p, 10)).power
    variants = [rotate(p, angle), p + (tx, ty), np.roll(p, shift % k, axis=0)]
    for q in variants:
        np.testing.assert_allclose(harmonic_spectrum(efd_coefficients(q, 10)).power, ref,
                                   rtol=1e-9, atol=1e-12 * ref.max())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_power_scales_quadratically(seed, s):
    p = random_polygon(np.random.default_rng(seed), 20)
    ref = harmonic_spectrum(efd_coefficients(p, 10)).power
    scaled = harmonic_spectrum(efd_coefficients(p * s, 10)).power
    np.testing.assert_allclose(scaled, ref * s * s, rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fs_is_sum_of_power(seed):
    c = efd_coefficients(random_polygon(np.random.default_rng(seed), 20), 10)
    s = harmonic_spectrum(c)
    assert np.all(s.power >= 0)
    total = 0.0
    for p in s.power:
        total += float(p)
    assert s.fs == total


# ---- reconstruction ----

def test_reconstruct_circle():
    c = efd_coefficients(_circle(3.0), 10)
    pts = efd_reconstruct(c, 100).vertices
    assert np.abs(np.hypot(pts[:, 0], pts[:, 1]) - 3.0).max() < 1e-2


def test_reconstruct_zero_coefficients():
    pts = efd_reconstruct(EfdCoefficients(np.zeros((4, 4)), (2.0, -1.0)), 10)
    np.testing.assert_array_equal(pts, np.tile([2.0, -1.0], (10, 1)))


def test_reconstruction_error_decreases_with_harmonics():
    # the truncated series is the least-squares fit of x(t), y(t), so the
    # parametric RMS error never grows with N; Hausdorff distance falls overall
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = random_polygon(rng, 20)
        dense = _dense(p, 2000)
        rms, haus = [], []
        for n in (1, 2, 4, 8, 16):
            r = efd_reconstruct(efd_coefficients(p, n), 2000).vertices
            rms.append(np.sqrt(np.mean(np.sum((r - dense) ** 2, axis=1))))
            haus.append(max(directed_hausdorff(r, dense)[0], directed_hausdorff(dense, r)[0]))
        assert np.all(np.diff(rms) <= 1e-12)
        assert haus[-1] < 0.5 * haus[0]
