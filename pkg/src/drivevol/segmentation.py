"""Split one site's records into per-vehicle passings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DataError
from .ingest import BsmRecord

DEFAULT_GAP_S = 30.0
DEFAULT_MIN_POINTS = 10


@dataclass(frozen=True)
class Passing:
    site_id: str
    device_id: str
    t: np.ndarray  # int64 ms, strictly increasing
    speed: np.ndarray
    accel_long: np.ndarray
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None

    @property
    def start_t(self) -> int:
        return int(self.t[0])

    @property
    def end_t(self) -> int:
        return int(self.t[-1])

    @property
    def n_points(self) -> int:
        return len(self.t)

    def __len__(self):
        return len(self.t)

    @property
    def records(self) -> list[BsmRecord]:
        lat = self.lat if self.lat is not None else np.zeros(len(self.t))
        lon = self.lon if self.lon is not None else np.zeros(len(self.t))
        return [BsmRecord(self.device_id, int(t), float(a), float(o), float(s), float(c))
                for t, a, o, s, c in zip(self.t, lat, lon, self.speed, self.accel_long)]

    @classmethod
    def from_records(cls, site_id: str, records: list[BsmRecord]) -> "Passing":
        return cls(
            site_id=site_id,
            device_id=records[0].device_id,
            t=np.array([r.t for r in records], dtype=np.int64),
            speed=np.array([r.speed for r in records], dtype=float),
            accel_long=np.array([r.accel_long for r in records], dtype=float),
            lat=np.array([r.lat for r in records], dtype=float),
            lon=np.array([r.lon for r in records], dtype=float),
        )


@dataclass
class SegmentStats:
    records_in: int = 0
    records_in_passings: int = 0
    discarded_runs: int = 0
    discarded_records: int = 0
    per_site: dict[str, int] = field(default_factory=dict)  # passings per site

    def merge(self, other: "SegmentStats") -> None:
        self.records_in += other.records_in
        self.records_in_passings += other.records_in_passings
        self.discarded_runs += other.discarded_runs
        self.discarded_records += other.discarded_records
        for k, v in other.per_site.items():
            self.per_site[k] = self.per_site.get(k, 0) + v


def segment_arrays(site_id: str, device_id: np.ndarray, t: np.ndarray, speed: np.ndarray,
                   accel_long: np.ndarray, lat: np.ndarray | None = None, lon: np.ndarray | None = None,
                   gap_threshold: float = DEFAULT_GAP_S, min_points: int = DEFAULT_MIN_POINTS,
                   stats: SegmentStats | None = None) -> list[Passing]:
    """Columnar segmentation for a single site. Output is ordered by (device_id, start_t)."""
    if min_points < 1:
        raise ValueError("min_points must be >= 1")
    n = len(t)
    stats = stats if stats is not None else SegmentStats()
    stats.records_in += n
    if n == 0:
        return []
    devices, codes = np.unique(np.asarray(device_id, dtype=str), return_inverse=True)
    t = np.asarray(t, dtype=np.int64)
    order = np.lexsort((t, codes))
    codes_s, t_s = codes[order], t[order]
    same_dev = codes_s[1:] == codes_s[:-1]
    dt = np.diff(t_s)
    if np.any(same_dev & (dt == 0)):
        bad = int(np.flatnonzero(same_dev & (dt == 0))[0])
        raise DataError(f"site {site_id!r}: device {devices[codes_s[bad]]!r} has repeated timestamp {t_s[bad]}")
    gap_ms = gap_threshold * 1000.0
    breaks = np.flatnonzero(~same_dev | (dt > gap_ms)) + 1
    bounds = np.concatenate([[0], breaks, [n]])
    speed_s = np.asarray(speed, dtype=float)[order]
    accel_s = np.asarray(accel_long, dtype=float)[order]
    lat_s = np.asarray(lat, dtype=float)[order] if lat is not None else None
    lon_s = np.asarray(lon, dtype=float)[order] if lon is not None else None
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a < min_points:
            stats.discarded_runs += 1
            stats.discarded_records += int(b - a)
            continue
        out.append(Passing(
            site_id=site_id,
            device_id=str(devices[codes_s[a]]),
            t=t_s[a:b],
            speed=speed_s[a:b],
            accel_long=accel_s[a:b],
            lat=lat_s[a:b] if lat_s is not None else None,
            lon=lon_s[a:b] if lon_s is not None else None,
        ))
        stats.records_in_passings += int(b - a)
    stats.per_site[site_id] = stats.per_site.get(site_id, 0) + len(out)
    return out


def segment_passings(records: Iterable[tuple[str, BsmRecord]], gap_threshold: float = DEFAULT_GAP_S,
                     min_points: int = DEFAULT_MIN_POINTS, stats: SegmentStats | None = None) -> list[Passing]:
    """Group (site_id, record) pairs into passings; input order does not matter.

    Runs shorter than ``min_points`` are dropped and counted in ``stats``.
    Result is ordered by (site_id, device_id, start_t).
    """
    by_site: dict[str, list[BsmRecord]] = {}
    for site_id, rec in records:
        by_site.setdefault(site_id, []).append(rec)
    stats = stats if stats is not None else SegmentStats()
    out: list[Passing] = []
    for site_id in sorted(by_site):
        recs = by_site[site_id]
        out.extend(segment_arrays(
            site_id,
            np.array([r.device_id for r in recs], dtype=object),
            np.array([r.t for r in recs], dtype=np.int64),
            np.array([r.speed for r in recs], dtype=float),
            np.array([r.accel_long for r in recs], dtype=float),
            np.array([r.lat for r in recs], dtype=float),
            np.array([r.lon for r in recs], dtype=float),
            gap_threshold=gap_threshold, min_points=min_points, stats=stats,
        ))
    return out


def write_passing_summary(passings: Iterable[Passing], dest) -> None:
    dest.write("site_id,device_id,start_t,end_t,n_points\n")
    for p in passings:
        dest.write(f"{p.site_id},{p.device_id},{p.start_t},{p.end_t},{p.n_points}\n")
