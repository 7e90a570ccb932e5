"""Landmark schemes and facial region maps.

A region map assigns landmark index lists to named facial regions. Each
region is either ``elliptic`` (fed to the elliptic Fourier descriptor) or
``generic`` (rasterized and fed to the generic Fourier descriptor). Region
maps are plain JSON so users can supply their own assignment::

    {
      "scheme": "ibug68",
      "regions": [
        {"id": "e_mouth", "kind": "elliptic", "indices": [48, 49, ...]},
        {"id": "f8", "kind": "generic", "indices": [...], "hull": true}
      ]
    }

Left and right follow the image (viewer) side, so ``left_eye`` in the 68
point scheme is indices 36-41.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateGeometryError, FileFormatError, UnknownRegionError

SCHEMES = {"ibug68": 68, "tracker49": 49}
DEFAULT_SCHEME = "ibug68"

REGION_KINDS = ("elliptic", "generic")

# The 49-point tracker layout is the 68-point layout without the jaw line
# (0-16) and the two inner mouth corners (60, 64).
IBUG68_TO_TRACKER49 = {
    **{i: i - 17 for i in range(17, 60)},
    61: 43, 62: 44, 63: 45, 65: 46, 66: 47, 67: 48,
}

_IBUG68_PARTS = {
    "jaw": range(0, 17),
    "left_brow": range(17, 22),
    "right_brow": range(22, 27),
    "nose_bridge": range(27, 31),
    "nostrils": range(31, 36),
    "left_eye": range(36, 42),
    "right_eye": range(42, 48),
    "outer_mouth": range(48, 60),
    "inner_mouth": range(60, 68),
}


def scheme_point_count(scheme: str) -> int:
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise FileFormatError(
            f"unknown landmark scheme {scheme!r}; expected one of {sorted(SCHEMES)}"
        ) from None


@dataclass(frozen=True)
class Region:
    id: str
    indices: tuple[int, ...]
    kind: str
    hull: bool = False

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind, "indices": list(self.indices)}
        if self.hull:
            d["hull"] = True
        return d


@dataclass(frozen=True)
class RegionMap:
    """Ordered mapping of region id to landmark indices and descriptor kind."""

    scheme: str
    regions: tuple[Region, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n_points = scheme_point_count(self.scheme)
        by_id = {}
        for region in self.regions:
            if region.id in by_id:
                raise FileFormatError(f"duplicate region id {region.id!r}")
            if region.kind not in REGION_KINDS:
                raise FileFormatError(
                    f"region {region.id!r}: kind must be one of {REGION_KINDS}, got {region.kind!r}"
                )
            if len(region.indices) < 3:
                raise FileFormatError(f"region {region.id!r}: needs at least 3 landmark indices")
            bad = [i for i in region.indices if not 0 <= i < n_points]
            if bad:
                raise FileFormatError(
                    f"region {region.id!r}: indices {bad} out of range for {self.scheme} ({n_points} points)"
                )
            by_id[region.id] = region
        object.__setattr__(self, "_by_id", by_id)

    def __getitem__(self, region_id: str) -> Region:
        try:
            return self._by_id[region_id]
        except KeyError:
            raise UnknownRegionError(f"unknown region {region_id!r}") from None

    def __iter__(self):
        return iter(self.regions)

    def __len__(self):
        return len(self.regions)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.regions]

    def of_kind(self, kind: str) -> list[Region]:
        return [r for r in self.regions if r.kind == kind]

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "regions": [r.to_dict() for r in self.regions]}

    @classmethod
    def from_dict(cls, data: dict) -> "RegionMap":
        try:
            scheme = data["scheme"]
            regions = tuple(
                Region(
                    id=str(r["id"]),
                    indices=tuple(int(i) for i in r["indices"]),
                    kind=str(r["kind"]),
                    hull=bool(r.get("hull", False)),
                )
                for r in data["regions"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"malformed region map: {exc}") from exc
        return cls(scheme=scheme, regions=regions)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RegionMap":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _ibug68_regions() -> list[tuple[str, list[int], str, bool]]:
    p = {k: list(v) for k, v in _IBUG68_PARTS.items()}
    return [
        ("e_left_eye", p["left_eye"], "elliptic", False),
        ("e_right_eye", p["right_eye"], "elliptic", False),
        ("e_mouth", p["outer_mouth"], "elliptic", False),
        ("f1", p["left_brow"], "generic", False),
        ("f2", p["right_brow"], "generic", False),
        ("f3", p["left_eye"], "generic", False),
        ("f4", p["right_eye"], "generic", False),
        # bridge top, then the nostril arc
        ("f5", [27] + p["nostrils"], "generic", False),
        ("f6", p["outer_mouth"], "generic", False),
        ("f7", p["inner_mouth"], "generic", False),
        ("f8", p["left_brow"] + p["left_eye"], "generic", True),
        ("f9", p["right_brow"] + p["right_eye"], "generic", True),
        ("f10", p["jaw"] + p["left_brow"] + p["right_brow"], "generic", True),
    ]


def default_region_map(scheme: str = DEFAULT_SCHEME) -> RegionMap:
    """Three elliptic regions followed by the ten generic regions f1..f10."""
    entries = _ibug68_regions()
    if scheme == "ibug68":
        regions = [Region(rid, tuple(idx), kind, hull) for rid, idx, kind, hull in entries]
    elif scheme == "tracker49":
        regions = []
        for rid, idx, kind, hull in entries:
            if rid == "f10":
                # no jaw line in this scheme: use the hull of every point
                mapped = list(range(49))
            else:
                mapped = [IBUG68_TO_TRACKER49[i] for i in idx if i in IBUG68_TO_TRACKER49]
            regions.append(Region(rid, tuple(mapped), kind, hull))
    else:
        scheme_point_count(scheme)
        raise AssertionError("unreachable")
    return RegionMap(scheme=scheme, regions=tuple(regions))


def convex_hull_vertices(points: np.ndarray) -> np.ndarray:
    """Hull vertices in counter-clockwise order."""
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise DegenerateGeometryError(f"convex hull is degenerate: {exc}".splitlines()[0]) from exc
    return points[hull.vertices]


def region_points(points: np.ndarray, region: Region) -> np.ndarray:
    """Polygon vertices of ``region`` taken from a full landmark array."""
    pts = np.asarray(points, dtype=float)[list(region.indices)]
    if region.hull:
        pts = convex_hull_vertices(pts)
    return pts
