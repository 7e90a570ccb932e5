"""Synthetic 68-point landmark datasets with expression-like deformations.

A fixed neutral face template is deformed by one displacement profile per
class and then jittered with isotropic Gaussian noise. Displacements are
given in units of ``UNIT`` pixels and range from about 0.5 to 4 units per
landmark; ``noise`` is the jitter standard deviation in the same unit, so
``noise=0.5`` jitters every coordinate by half a deformation unit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .labels import CLASSES
from .pipeline import ManifestEntry, write_manifest

UNIT = 6.0  # pixels per deformation unit on a ~200 px face


def _mirror(points: np.ndarray, axis_x: float = 100.0) -> np.ndarray:
    out = points.copy()
    out[:, 0] = 2 * axis_x - out[:, 0]
    return out


def neutral_template() -> np.ndarray:
    """Neutral face in ibug-68 order on a 200 x 200 pixel canvas."""
    t = np.linspace(0, np.pi, 17)
    jaw = np.column_stack([100 - 60 * np.cos(t), 95 + 95 * np.sin(t)])

    s = np.linspace(0, 1, 5)
    left_brow = np.column_stack([55 + 35 * s, 70 - 8 * np.sin(np.pi * s) - 2 * s])
    right_brow = _mirror(left_brow[::-1])

    bridge = np.column_stack([np.full(4, 100.0), [80.0, 92.0, 104.0, 116.0]])
    nostrils = np.array([[88, 125], [94, 128], [100, 130], [106, 128], [112, 125]], float)

    left_eye = np.array([[59, 88], [66, 82], [78, 82], [85, 88], [78, 93], [66, 93]], float)
    # inner corner first, then upper lid, outer corner, lower lid
    right_eye = _mirror(left_eye[[3, 2, 1, 0, 5, 4]])

    outer_mouth = np.array([
        [80, 155], [87, 150], [94, 148], [100, 149], [106, 148], [113, 150],
        [120, 155], [113, 161], [106, 164], [100, 165], [94, 164], [87, 161],
    ], float)
    inner_mouth = np.array([
        [84, 155], [93, 153], [100, 153], [107, 153],
        [116, 155], [107, 158], [100, 158.5], [93, 158],
    ], float)
    return np.vstack([jaw, left_brow, right_brow, bridge, nostrils,
                      left_eye, right_eye, outer_mouth, inner_mouth])


# index groups in the 68-point layout
_L_BROW, _R_BROW = list(range(17, 22)), list(range(22, 27))
_L_INNER_BROW, _R_INNER_BROW = [20, 21], [22, 23]
_L_OUTER_BROW, _R_OUTER_BROW = [17, 18], [25, 26]
_UPPER_LIDS = [37, 38, 43, 44]
_LOWER_LIDS = [40, 41, 46, 47]
_NOSTRILS = list(range(31, 36))
_UPPER_LIP = [49, 50, 51, 52, 53, 61, 62, 63]
_LOWER_LIP = [55, 56, 57, 58, 59, 65, 66, 67]
_L_CORNERS, _R_CORNERS = [48, 60], [54, 64]
_CHIN = [6, 7, 8, 9, 10]


def _profile(moves) -> np.ndarray:
    d = np.zeros((68, 2))
    for idx, (dx, dy) in moves:
        d[idx] += (dx, dy)
    return d


def deformation_profiles() -> dict[str, np.ndarray]:
    """Per-class landmark displacements in deformation units (image y points down)."""
    return {
        "AN": _profile([
            (_L_INNER_BROW, (1.5, 1.75)), (_R_INNER_BROW, (-1.5, 1.75)),
            (_L_BROW, (0.0, 1.0)), (_R_BROW, (0.0, 1.0)),
            (_UPPER_LIDS, (0.0, 1.0)),
            (_UPPER_LIP, (0.0, 0.75)), (_LOWER_LIP, (0.0, -1.0)),
            (_L_CORNERS, (0.5, 0.0)), (_R_CORNERS, (-0.5, 0.0)),
        ]),
        "NE": _profile([]),
        "DI": _profile([
            (_NOSTRILS, (0.0, -1.5)),
            (_UPPER_LIP, (0.0, -1.75)),
            (_L_BROW, (0.0, 0.75)), (_R_BROW, (0.0, 0.75)),
            (_LOWER_LIDS, (0.0, -1.0)),
            (_L_CORNERS, (0.5, 1.0)), (_R_CORNERS, (-0.5, 1.0)),
        ]),
        "FE": _profile([
            (_L_BROW, (0.0, -1.5)), (_R_BROW, (0.0, -1.5)),
            (_L_INNER_BROW, (1.25, -1.0)), (_R_INNER_BROW, (-1.25, -1.0)),
            (_UPPER_LIDS, (0.0, -1.5)),
            (_L_CORNERS, (-1.75, 0.5)), (_R_CORNERS, (1.75, 0.5)),
            (_LOWER_LIP, (0.0, 1.25)),
        ]),
        "HA": _profile([
            (_L_CORNERS, (-1.75, -2.25)), (_R_CORNERS, (1.75, -2.25)),
            ([49, 53, 59, 55], (0.0, -1.0)),
            (_LOWER_LIDS, (0.0, -1.25)),
            (_LOWER_LIP, (0.0, 0.75)),
        ]),
        "SA": _profile([
            (_L_INNER_BROW, (0.5, -1.75)), (_R_INNER_BROW, (-0.5, -1.75)),
            (_L_OUTER_BROW, (0.0, 1.25)), (_R_OUTER_BROW, (0.0, 1.25)),
            (_UPPER_LIDS, (0.0, 0.75)),
            (_L_CORNERS, (0.5, 2.25)), (_R_CORNERS, (-0.5, 2.25)),
            ([51, 62], (0.0, 0.5)),
        ]),
        "SU": _profile([
            (_L_BROW, (0.0, -2.75)), (_R_BROW, (0.0, -2.75)),
            (_UPPER_LIDS, (0.0, -1.75)),
            (_LOWER_LIP, (0.0, 3.75)), (_CHIN, (0.0, 2.25)),
            (_L_CORNERS, (0.75, 1.25)), (_R_CORNERS, (-0.75, 1.25)),
        ]),
    }


def synth_landmarks(n_classes: int = 7, per_class: int = 30, noise: float = 0.5,
                    seed: int = 42) -> list[tuple[str, str, str, np.ndarray]]:
    """``(sample_id, subject_id, label, points)`` tuples, classes in canonical order."""
    if not 2 <= n_classes <= len(CLASSES):
        raise ValueError(f"n_classes must be in [2, {len(CLASSES)}]")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    template = neutral_template()
    profiles = deformation_profiles()
    samples = []
    for label in CLASSES[:n_classes]:
        base = template + UNIT * profiles[label]
        for k in range(per_class):
            jitter = rng.normal(0.0, noise * UNIT, size=base.shape) if noise > 0 else 0.0
            samples.append((f"{label}_{k:03d}", f"s{k:03d}", label, base + jitter))
    return samples


def write_synthetic_dataset(out_dir, n_classes: int = 7, per_class: int = 30,
                            noise: float = 0.5, seed: int = 42) -> Path:
    """Write landmark files and ``manifest.csv`` under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    lm_dir = out / "landmarks"
    lm_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid, subject, label, pts in synth_landmarks(n_classes, per_class, noise, seed):
        path = lm_dir / f"{sid}.txt"
        path.write_text("".join(f"{x:.6f} {y:.6f}\n" for x, y in pts), encoding="utf-8")
        entries.append(ManifestEntry(sid, subject, label, path))
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest
