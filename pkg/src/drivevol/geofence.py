"""Intersection territories and point-in-territory assignment.

Coordinates are projected into a flat local frame around each site center
(equirectangular). Within the ~50 m reach of a territory the error of that
projection is far below GPS noise, and it keeps the per-point cost to a
couple of multiplications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import GeometryError
from .ingest import BsmChunk, BsmRecord, IntersectionSite

METERS_PER_DEG = 111_320.0
FT_TO_M = 0.3048
DEFAULT_REACH_FT = 150.0
DEFAULT_ARM_WIDTH_M = 24.0
BOUNDARY_EPS_M = 1e-9

DUPLICATE = "duplicate"
NEAREST = "nearest"


@dataclass(frozen=True)
class LocalFrame:
    origin_lat: float
    origin_lon: float

    @property
    def k_lat(self) -> float:
        return METERS_PER_DEG

    @property
    def k_lon(self) -> float:
        return METERS_PER_DEG * math.cos(math.radians(self.origin_lat))

    def to_local(self, lat, lon):
        """Project (lat, lon) in degrees to (x east, y north) in meters. Works on arrays."""
        x = (np.asarray(lon, dtype=float) - self.origin_lon) * self.k_lon
        y = (np.asarray(lat, dtype=float) - self.origin_lat) * self.k_lat
        if np.ndim(x) == 0:
            return float(x), float(y)
        return x, y

    def to_geo(self, x, y):
        lat = np.asarray(y, dtype=float) / self.k_lat + self.origin_lat
        lon = np.asarray(x, dtype=float) / self.k_lon + self.origin_lon
        if np.ndim(lat) == 0:
            return float(lat), float(lon)
        return lat, lon


def to_local(frame: LocalFrame, lat: float, lon: float) -> tuple[float, float]:
    return frame.to_local(lat, lon)


@dataclass(frozen=True)
class Territory:
    site_id: str
    frame: LocalFrame
    polygon: np.ndarray  # (m+1, 2) closed ring, counterclockwise
    geo_bbox: tuple[float, float, float, float] = field(init=False)  # lat_min, lat_max, lon_min, lon_max

    def __post_init__(self):
        ring = np.asarray(self.polygon, dtype=float)
        ring.setflags(write=False)
        object.__setattr__(self, "polygon", ring)
        lat, lon = self.frame.to_geo(ring[:, 0], ring[:, 1])
        pad = 1e-7
        object.__setattr__(self, "geo_bbox", (lat.min() - pad, lat.max() + pad, lon.min() - pad, lon.max() + pad))

    @property
    def area(self) -> float:
        return _signed_area(self.polygon)

    def contains(self, x, y):
        return contains(self, x, y)


def _signed_area(ring: np.ndarray) -> float:
    x, y = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    return 0.5 * float(np.sum(x * y2 - x2 * y))


def _close_ccw(coords: Sequence[Sequence[float]]) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if len(ring) == 0 or not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    if len(ring) < 4:
        raise GeometryError("polygon needs at least 3 distinct vertices")
    if _signed_area(ring) < 0:
        ring = ring[::-1].copy()
    return ring


def _validate_ring(ring: np.ndarray, site_id: str) -> None:
    from shapely.geometry import LinearRing

    if abs(_signed_area(ring)) <= 1e-9:
        raise GeometryError(f"territory for {site_id!r} has zero area")
    if not LinearRing(ring).is_simple:
        raise GeometryError(f"territory for {site_id!r} self-intersects")


def arm_rectangle(heading_deg: float, reach_m: float, width_m: float) -> np.ndarray:
    """Rectangle from slightly behind the center out to ``reach_m`` along a compass heading.

    The arm starts ``width_m / 2`` behind the center so neighbouring arms
    overlap in a full center square.
    """
    h = math.radians(heading_deg)
    ux, uy = math.sin(h), math.cos(h)  # compass: 0 = north, 90 = east
    px, py = -uy, ux
    half = width_m / 2.0
    back = -half
    return np.array([
        (ux * back + px * half, uy * back + py * half),
        (ux * back - px * half, uy * back - py * half),
        (ux * reach_m - px * half, uy * reach_m - py * half),
        (ux * reach_m + px * half, uy * reach_m + py * half),
    ])


def build_territory(site: IntersectionSite, reach_ft: float = DEFAULT_REACH_FT,
                    arm_width_m: float = DEFAULT_ARM_WIDTH_M) -> Territory:
    frame = LocalFrame(site.center_lat, site.center_lon)
    if site.geofence is not None:
        lat = [p[0] for p in site.geofence]
        lon = [p[1] for p in site.geofence]
        x, y = frame.to_local(np.array(lat), np.array(lon))
        ring = _close_ccw(np.column_stack([x, y]))
        _validate_ring(ring, site.site_id)
        return Territory(site.site_id, frame, ring)

    if len(site.approach_headings) < 2:
        raise GeometryError(f"site {site.site_id!r}: need >= 2 approach headings or an explicit polygon")
    if reach_ft <= 0 or arm_width_m <= 0:
        raise GeometryError("reach and arm width must be positive")
    from shapely.geometry import Polygon
    from shapely.ops import unary_union

    reach_m = reach_ft * FT_TO_M
    arms = [Polygon(arm_rectangle(h, reach_m, arm_width_m)) for h in site.approach_headings]
    shape = unary_union(arms).simplify(0.0)
    if shape.geom_type != "Polygon":
        raise GeometryError(f"site {site.site_id!r}: arms do not form a single polygon")
    ring = _close_ccw(list(shape.exterior.coords))
    _validate_ring(ring, site.site_id)
    return Territory(site.site_id, frame, ring)


def contains(territory: Territory, x, y):
    """Even-odd ray cast; points on the boundary count as inside.

    Accepts scalars or equal-length arrays.
    """
    scalar = np.ndim(x) == 0
    px = np.atleast_1d(np.asarray(x, dtype=float))
    py = np.atleast_1d(np.asarray(y, dtype=float))
    ring = territory.polygon
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    for k in range(len(ring) - 1):
        x1, y1 = ring[k]
        x2, y2 = ring[k + 1]
        # boundary test
        dx, dy = x2 - x1, y2 - y1
        cross = dx * (py - y1) - dy * (px - x1)
        seg_len = math.hypot(dx, dy)
        within = ((px >= min(x1, x2) - BOUNDARY_EPS_M) & (px <= max(x1, x2) + BOUNDARY_EPS_M)
                  & (py >= min(y1, y2) - BOUNDARY_EPS_M) & (py <= max(y1, y2) + BOUNDARY_EPS_M))
        on_edge |= within & (np.abs(cross) <= BOUNDARY_EPS_M * max(seg_len, 1.0))
        # crossing test (half-open rule on y avoids double-counting vertices)
        straddle = (y1 > py) != (y2 > py)
        if np.any(straddle):
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = x1 + (py - y1) * dx / dy
            inside ^= straddle & (px < x_at)
    result = inside | on_edge
    return bool(result[0]) if scalar else result


@dataclass
class AssignmentStats:
    records_in: int = 0
    records_out: int = 0  # inside no territory
    emitted: int = 0
    per_site: dict[str, int] = field(default_factory=dict)

    def merge(self, other: "AssignmentStats") -> None:
        self.records_in += other.records_in
        self.records_out += other.records_out
        self.emitted += other.emitted
        for k, v in other.per_site.items():
            self.per_site[k] = self.per_site.get(k, 0) + v

    def to_dict(self) -> dict:
        return {
            "records_in": self.records_in,
            "records_outside": self.records_out,
            "pairs_emitted": self.emitted,
            "per_site": dict(sorted(self.per_site.items())),
        }


def assign_arrays(lat: np.ndarray, lon: np.ndarray, territories: Sequence[Territory],
                  policy: str = DUPLICATE) -> list[np.ndarray]:
    """Row indices inside each territory (one array per territory, ascending).

    Under the ``nearest`` policy a row inside several territories is kept
    only for the one whose center is closest (ties go to the earlier one).
    """
    if policy not in (DUPLICATE, NEAREST):
        raise ValueError(f"unknown overlap policy {policy!r}")
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    hits: list[np.ndarray] = []
    dists: list[np.ndarray] = []
    for terr in territories:
        la0, la1, lo0, lo1 = terr.geo_bbox
        cand = np.flatnonzero((lat >= la0) & (lat <= la1) & (lon >= lo0) & (lon <= lo1))
        if len(cand):
            x, y = terr.frame.to_local(lat[cand], lon[cand])
            keep = contains(terr, x, y)
            cand = cand[keep]
            dists.append(np.hypot(x[keep], y[keep]))
        else:
            dists.append(np.empty(0))
        hits.append(cand)
    if policy == NEAREST and len(territories) > 1:
        best = np.full(len(lat), np.inf)
        owner = np.full(len(lat), -1)
        for k, (idx, d) in enumerate(zip(hits, dists)):
            better = d < best[idx]
            best[idx[better]] = d[better]
            owner[idx[better]] = k
        hits = [idx[owner[idx] == k] for k, idx in enumerate(hits)]
    return hits


def assign_chunk(chunk: BsmChunk, territories: Sequence[Territory], policy: str = DUPLICATE,
                 stats: AssignmentStats | None = None) -> list[np.ndarray]:
    hits = assign_arrays(chunk.lat, chunk.lon, territories, policy)
    if stats is not None:
        n = len(chunk)
        covered = np.zeros(n, dtype=bool)
        for terr, idx in zip(territories, hits):
            covered[idx] = True
            stats.per_site[terr.site_id] = stats.per_site.get(terr.site_id, 0) + len(idx)
            stats.emitted += len(idx)
        stats.records_in += n
        stats.records_out += int(n - covered.sum())
    return hits


def assign_records(records: Iterable[BsmRecord], territories: Sequence[Territory],
                   policy: str = DUPLICATE, stats: AssignmentStats | None = None,
                   batch: int = 50_000) -> Iterator[tuple[str, BsmRecord]]:
    """Stream (site_id, record) pairs; records outside every territory are counted and dropped.

    Within a batch, output is grouped by territory order then input order.
    """
    stats = stats if stats is not None else AssignmentStats()
    buf: list[BsmRecord] = []

    def flush():
        lat = np.fromiter((r.lat for r in buf), float, len(buf))
        lon = np.fromiter((r.lon for r in buf), float, len(buf))
        hits = assign_arrays(lat, lon, territories, policy)
        covered = np.zeros(len(buf), dtype=bool)
        for terr, idx in zip(territories, hits):
            covered[idx] = True
            stats.per_site[terr.site_id] = stats.per_site.get(terr.site_id, 0) + len(idx)
            stats.emitted += len(idx)
            for i in idx:
                yield terr.site_id, buf[i]
        stats.records_in += len(buf)
        stats.records_out += int(len(buf) - covered.sum())

    for rec in records:
        buf.append(rec)
        if len(buf) >= batch:
            yield from flush()
            buf = []
    if buf:
        yield from flush()
