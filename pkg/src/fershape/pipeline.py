"""Per-sample feature fusion and dataset-level feature matrices.

A fused feature concatenates, in region-map order, the harmonic power
spectrum of every elliptic region and the GFD of every generic region.
Column names follow ``<region>.<efd|gfd>.<index>``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .contour import SPECTRUM_MODES, efd_coefficients, spectrum_feature
from .errors import (
    DimensionMismatchError,
    FershapeError,
    FileFormatError,
    LabelError,
    ManifestError,
)
from .geometry import CONTOUR_SOURCES, LandmarkSet, contour_from_points, parse_landmark_file, zscore_normalize
from .labels import class_index
from .region import gfd, rasterize_points, write_pgm
from .regions import SCHEMES, RegionMap, default_region_map, region_points

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("sample_id", "subject_id", "label", "landmark_path")
META_COLUMNS = ("sample_id", "subject_id", "label")


@dataclass(frozen=True)
class ExtractionConfig:
    contour_source: str = "fitted_ellipse"
    contour_points: int = 64
    n_harmonics: int = 10
    spectrum_mode: str = "spectrum_vector"
    radial_freqs: int = 4
    angular_freqs: int = 9
    resolution: int = 64
    margin: int = 2

    def __post_init__(self):
        if self.contour_source not in CONTOUR_SOURCES:
            raise ValueError(f"contour_source must be one of {CONTOUR_SOURCES}")
        if self.spectrum_mode not in SPECTRUM_MODES:
            raise ValueError(f"spectrum_mode must be one of {SPECTRUM_MODES}")
        if self.contour_points < 3:
            raise ValueError("contour_points must be >= 3")
        if self.n_harmonics < 1:
            raise ValueError("n_harmonics must be >= 1")
        if self.radial_freqs < 1 or self.angular_freqs < 1:
            raise ValueError("GFD frequency counts must be >= 1")
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")
        if not 0 <= self.margin < self.resolution // 4:
            raise ValueError("margin must be in [0, resolution / 4)")

    @property
    def efd_length(self) -> int:
        return self.n_harmonics if self.spectrum_mode == "spectrum_vector" else 1

    @property
    def gfd_length(self) -> int:
        return self.radial_freqs * self.angular_freqs

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExtractionConfig":
        return cls(**data)


@dataclass(frozen=True)
class Segment:
    region: str
    kind: str  # "efd" or "gfd"
    offset: int
    length: int

    def column_names(self) -> list[str]:
        return [f"{self.region}.{self.kind}.{k}" for k in range(self.length)]


def feature_layout(region_map: RegionMap, config: ExtractionConfig) -> tuple[Segment, ...]:
    segments = []
    offset = 0
    for region in region_map:
        if region.kind == "elliptic":
            kind, length = "efd", config.efd_length
        else:
            kind, length = "gfd", config.gfd_length
        segments.append(Segment(region.id, kind, offset, length))
        offset += length
    return tuple(segments)


def column_names(layout) -> list[str]:
    return [name for seg in layout for name in seg.column_names()]


def layout_fingerprint(layout) -> str:
    """SHA-256 over the ordered column names."""
    return hashlib.sha256(",".join(column_names(layout)).encode("utf-8")).hexdigest()


def layout_from_columns(names) -> tuple[Segment, ...]:
    segments: list[Segment] = []
    for pos, name in enumerate(names):
        try:
            region, kind, index = name.rsplit(".", 2)
            index = int(index)
        except ValueError:
            raise FileFormatError(f"bad feature column name {name!r}") from None
        if segments and segments[-1].region == region and segments[-1].kind == kind:
            last = segments[-1]
            if index != last.length:
                raise FileFormatError(f"feature column {name!r} out of order")
            segments[-1] = Segment(region, kind, last.offset, last.length + 1)
        else:
            if index != 0:
                raise FileFormatError(f"feature column {name!r} out of order")
            segments.append(Segment(region, kind, pos, 1))
    return tuple(segments)


@dataclass(frozen=True, eq=False)
class FusedFeature:
    values: np.ndarray
    layout: tuple[Segment, ...]
    sample_id: str = ""
    subject_id: str = ""
    label: str | None = None

    def segment(self, region: str) -> np.ndarray:
        for seg in self.layout:
            if seg.region == region:
                return self.values[seg.offset:seg.offset + seg.length]
        raise KeyError(region)


def _annotate(exc: FershapeError, region: str) -> FershapeError:
    new = type(exc)(f"region {region}: {exc}")
    new.__cause__ = exc
    return new


def extract_features(landmarks: LandmarkSet, region_map: RegionMap | None = None,
                     config: ExtractionConfig | None = None, dump_masks=None) -> FusedFeature:
    """Fused EFD + GFD vector for one landmark set.

    Elliptic regions are described in z-score normalized coordinates. Generic
    regions are rasterized from the raw coordinates; cropping to the region's
    bounding box already removes translation and scale, and leaves the
    region's true aspect ratio intact.
    """
    config = config or ExtractionConfig()
    region_map = region_map or default_region_map(landmarks.scheme)
    if region_map.scheme != landmarks.scheme:
        raise FileFormatError(
            f"region map is for {region_map.scheme} but landmarks use {landmarks.scheme}"
        )
    normalized = zscore_normalize(landmarks.points)
    parts = []
    for region in region_map:
        try:
            if region.kind == "elliptic":
                contour = contour_from_points(
                    region_points(normalized, region), config.contour_source, config.contour_points
                )
                coeffs = efd_coefficients(contour, config.n_harmonics)
                parts.append(spectrum_feature(coeffs, config.spectrum_mode))
            else:
                mask = rasterize_points(
                    region_points(landmarks.points, region), config.resolution, config.margin
                )
                if dump_masks is not None:
                    name = f"{landmarks.sample_id or 'sample'}_{region.id}.pgm"
                    write_pgm(mask, Path(dump_masks) / name)
                parts.append(gfd(mask, config.radial_freqs, config.angular_freqs).values)
        except FershapeError as exc:
            raise _annotate(exc, region.id) from exc
    values = np.concatenate(parts)
    if not np.all(np.isfinite(values)):
        raise FershapeError(f"{landmarks.sample_id}: non-finite feature values")
    return FusedFeature(values, feature_layout(region_map, config),
                        landmarks.sample_id, landmarks.subject_id, landmarks.label)


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    subject_id: str
    label: str
    landmark_path: Path
    scheme: str | None = None


def read_manifest(path) -> list[ManifestEntry]:
    """CSV manifest ``sample_id,subject_id,label,landmark_path[,scheme]``.

    Relative landmark paths resolve against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [f for f in MANIFEST_FIELDS if f not in header]
        if missing:
            raise ManifestError(f"{path}: manifest header lacks {missing}")
        entries = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            sid = (row["sample_id"] or "").strip()
            if not sid:
                raise ManifestError(f"{path}:{lineno}: empty sample_id")
            if sid in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate sample_id {sid!r}")
            seen.add(sid)
            label = (row["label"] or "").strip()
            try:
                class_index(label)
            except LabelError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            scheme = (row.get("scheme") or "").strip() or None
            if scheme is not None and scheme not in SCHEMES:
                raise ManifestError(f"{path}:{lineno}: unknown scheme {scheme!r}")
            lm = Path((row["landmark_path"] or "").strip())
            entries.append(ManifestEntry(sid, (row["subject_id"] or "").strip(), label,
                                         lm if lm.is_absolute() else base / lm, scheme))
    return entries


def write_manifest(path, entries) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        entries = list(entries)
        with_scheme = any(e.scheme for e in entries)
        writer.writerow(MANIFEST_FIELDS + ("scheme",) * with_scheme)
        for e in entries:
            lm = Path(e.landmark_path)
            try:
                lm = lm.relative_to(path.parent)
            except ValueError:
                pass
            row = [e.sample_id, e.subject_id, e.label, lm.as_posix()]
            writer.writerow(row + [e.scheme or ""] * with_scheme)


@dataclass(eq=False)
class FeatureMatrix:
    X: np.ndarray
    sample_ids: list[str]
    subject_ids: list[str]
    labels: list[str]
    layout: tuple[Segment, ...]
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def fingerprint(self) -> str:
        return layout_fingerprint(self.layout)

    def __len__(self):
        return len(self.X)

    def subset(self, rows) -> "FeatureMatrix":
        rows = list(rows)
        return FeatureMatrix(
            self.X[rows],
            [self.sample_ids[i] for i in rows],
            [self.subject_ids[i] for i in rows],
            [self.labels[i] for i in rows],
            self.layout,
        )


def _extract_entry(args):
    entry, region_map, config, dump_masks = args
    lm = parse_landmark_file(entry.landmark_path, entry.scheme or region_map.scheme,
                             sample_id=entry.sample_id, subject_id=entry.subject_id,
                             label=entry.label)
    return extract_features(lm, region_map, config, dump_masks).values


def _strict_extract(args):
    return _extract_entry(args), None


def _safe_extract(args):
    try:
        return _extract_entry(args), None
    except (OSError, FershapeError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def build_feature_matrix(manifest, region_map: RegionMap | None = None,
                         config: ExtractionConfig | None = None, *, strict: bool = False,
                         workers: int = 1, dump_masks=None) -> FeatureMatrix:
    """Extract one row per manifest entry, in manifest order.

    Failing samples are recorded in ``failures`` and skipped unless ``strict``,
    in which case the first failure is raised.
    """
    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    config = config or ExtractionConfig()
    region_map = region_map or default_region_map()
    layout = feature_layout(region_map, config)
    jobs = [(e, region_map, config, dump_masks) for e in entries]
    run = _strict_extract if strict else _safe_extract
    if workers <= 1:
        results = [run(job) for job in jobs]
    else:
        # map() yields in submission order, so row order follows the manifest
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(run, jobs))

    keep, failures, rows = [], [], []
    for entry, (row, err) in zip(entries, results):
        if err is not None:
            log.warning("skipping %s: %s", entry.sample_id, err)
            failures.append((entry.sample_id, err))
        else:
            keep.append(entry)
            rows.append(row)
    width = layout[-1].offset + layout[-1].length if layout else 0
    X = np.vstack(rows) if rows else np.zeros((0, width))
    return FeatureMatrix(
        X,
        [e.sample_id for e in keep],
        [e.subject_id for e in keep],
        [e.label for e in keep],
        layout,
        failures,
    )


def write_feature_csv(path, fm: FeatureMatrix) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*META_COLUMNS, *column_names(fm.layout)])
        for sid, subj, label, row in zip(fm.sample_ids, fm.subject_ids, fm.labels, fm.X.tolist()):
            writer.writerow([sid, subj, label, *map(repr, row)])


def read_feature_csv(path) -> FeatureMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty feature file") from None
        if tuple(header[:3]) != META_COLUMNS:
            raise FileFormatError(f"{path}: feature header must start with {','.join(META_COLUMNS)}")
        layout = layout_from_columns(header[3:])
        sids, subjects, labels, rows = [], [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise FileFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            sids.append(rec[0])
            subjects.append(rec[1])
            labels.append(rec[2])
            try:
                rows.append([float(v) for v in rec[3:]])
            except ValueError:
                raise FileFormatError(f"{path}:{lineno}: non-numeric feature value") from None
    X = np.array(rows, dtype=float).reshape(len(rows), len(header) - 3)
    return FeatureMatrix(X, sids, subjects, labels, layout)


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-dimension z-score learned from training rows (population std).

    Dimensions whose spread is zero up to rounding are only centered.
    """

    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or len(X) < 2:
            raise ValueError("standardizer needs a 2-D matrix with at least 2 rows")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        flat = std <= 1e-10 * np.abs(mean)
        flat |= std == 0
        std = np.where(flat, 1.0, std)
        return cls(mean, std, flat)

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise DimensionMismatchError(
                f"standardizer fitted on {self.n_features} features, got {X.shape[-1]}"
            )
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "zero_variance": self.zero_variance.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        return cls(
            np.array(data["mean"], dtype=float),
            np.array(data["std"], dtype=float),
            np.array(data["zero_variance"], dtype=bool),
        )


def fit_standardizer(X) -> Standardizer:
    return Standardizer.fit(X)


def apply_standardizer(standardizer: Standardizer, X) -> np.ndarray:
    return standardizer.transform(X)
