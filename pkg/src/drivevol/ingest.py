"""Readers for BSM trajectory files and intersection inventory files.

Both readers work line by line so a file of any size can be streamed.
Lines that fail validation are never dropped silently: they end up in a
reject log with the 1-based physical line number and the raw text.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import warnings
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

MAX_ABS_ACCEL = 15.0

MALFORMED = "malformed_field"
RANGE = "range_violation"
DUPLICATE = "duplicate_timestamp"
REJECT_REASONS = (MALFORMED, RANGE, DUPLICATE)

BSM_FIELDS = ("device_id", "t", "lat", "lon", "speed", "accel_long")

# logical field -> default header name
DEFAULT_BSM_SCHEMA = {
    "device_id": "device_id",
    "t": "timestamp_ms",
    "lat": "latitude",
    "lon": "longitude",
    "speed": "speed_mps",
    "accel_long": "accel_long_mps2",
}

SITE_COLUMNS = (
    "site_id", "center_lat", "center_lon", "headings", "polygon_wkt",
    "crash_avg", "aadt_major", "aadt_minor", "spd_major_mph", "spd_minor_mph",
    "signalized", "four_legged", "lanes_through", "lanes_left", "lanes_right",
)
SITE_OPTIONAL = {"polygon_wkt", "headings"}


@dataclass(frozen=True, slots=True)
class BsmRecord:
    device_id: str
    t: int
    lat: float
    lon: float
    speed: float
    accel_long: float

    def __post_init__(self):
        reason = _check_ranges(self.lat, self.lon, self.speed, self.accel_long)
        if reason:
            raise ValueError(f"invalid BsmRecord: {reason}")


@dataclass(frozen=True)
class IntersectionSite:
    site_id: str
    center_lat: float
    center_lon: float
    approach_headings: tuple[float, ...] = ()
    geofence: tuple[tuple[float, float], ...] | None = None  # (lat, lon) vertices
    crash_avg: float = 0.0
    aadt_major: float = 1.0
    aadt_minor: float = 1.0
    speed_limit_major: float = 0.0
    speed_limit_minor: float = 0.0
    signalized: bool = False
    four_legged: bool = False
    lanes_through: int = 0
    lanes_left: int = 0
    lanes_right: int = 0

    def __post_init__(self):
        problem = _site_problem(self)
        if problem:
            raise ValueError(f"invalid IntersectionSite {self.site_id!r}: {problem}")

    def attributes(self) -> dict[str, float]:
        """Inventory attributes as numeric covariates, keyed by site CSV column."""
        return {
            "aadt_major": float(self.aadt_major),
            "aadt_minor": float(self.aadt_minor),
            "spd_major_mph": float(self.speed_limit_major),
            "spd_minor_mph": float(self.speed_limit_minor),
            "signalized": float(self.signalized),
            "four_legged": float(self.four_legged),
            "lanes_through": float(self.lanes_through),
            "lanes_left": float(self.lanes_left),
            "lanes_right": float(self.lanes_right),
        }


@dataclass(frozen=True)
class Reject:
    line_number: int
    reason: str
    raw: str


@dataclass
class BsmChunk:
    """Columnar block of accepted records, in file order."""

    line_number: np.ndarray
    device_id: np.ndarray  # object array of str
    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    speed: np.ndarray
    accel_long: np.ndarray
    raw: list[str] | None = None  # original line text, without line terminator

    def __len__(self):
        return len(self.t)

    def records(self) -> Iterator[BsmRecord]:
        for i in range(len(self.t)):
            yield BsmRecord(str(self.device_id[i]), int(self.t[i]), float(self.lat[i]),
                            float(self.lon[i]), float(self.speed[i]), float(self.accel_long[i]))


def _check_ranges(lat, lon, speed, accel):
    if not all(math.isfinite(v) for v in (lat, lon, speed, accel)):
        return "non-finite value"
    if speed < 0:
        return "speed < 0"
    if not -90.0 <= lat <= 90.0:
        return "latitude out of range"
    if not -180.0 <= lon <= 180.0:
        return "longitude out of range"
    if abs(accel) > MAX_ABS_ACCEL:
        return "acceleration beyond physical bound"
    return None


def _site_problem(site):
    if site.crash_avg < 0 or not math.isfinite(site.crash_avg):
        return "crash_avg must be >= 0"
    if not (site.aadt_major > 0 and site.aadt_minor > 0):
        return "aadt must be > 0"
    if not (-90 <= site.center_lat <= 90 and -180 <= site.center_lon <= 180):
        return "center out of range"
    if site.geofence is None and not 2 <= len(site.approach_headings) <= 6:
        return "need 2..6 approach headings when no polygon is given"
    if any(not 0 <= h <= 360 for h in site.approach_headings):
        return "heading outside [0, 360]"
    return None


def _open_text(source) -> tuple[IO[str], bool]:
    """Return a text handle for a path, bytes stream or text stream."""
    if isinstance(source, (str, os.PathLike)):
        try:
            return open(source, "r", newline="", encoding="utf-8"), True
        except OSError as exc:
            raise DataError(f"cannot read {source}: {exc}") from exc
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _split(line: str) -> list[str]:
    if '"' in line:
        return next(csv.reader([line]))
    return line.split(",")


def _parse_timestamp(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not math.isfinite(value):
            raise
        return math.floor(value)


class BsmReader:
    """Streaming parser for one BSM CSV file.

    Iterating yields :class:`BsmRecord` objects in file order; ``chunks``
    yields the same records as columnar :class:`BsmChunk` blocks. Rejected
    lines accumulate in ``rejects``; counters are final once iteration ends.

    Duplicate detection keeps one set of timestamps per device, so its
    memory grows with the number of distinct records of a single file.
    """

    def __init__(self, source, schema: dict[str, str] | None = None):
        self.source = source
        self.schema = dict(DEFAULT_BSM_SCHEMA)
        if schema:
            self.schema.update(schema)
        self.rejects: list[Reject] = []
        self.n_lines = 0
        self.n_accepted = 0
        self._seen: dict[str, set[int]] = {}
        self._consumed = False
        self._header: str | None = None

    @property
    def n_rejected(self) -> int:
        return len(self.rejects)

    def _header_index(self, header: list[str]) -> list[int]:
        names = [h.strip() for h in header]
        idx = []
        for logical in BSM_FIELDS:
            column = self.schema[logical]
            if column not in names:
                raise DataError(f"required column {column!r} ({logical}) missing from header")
            idx.append(names.index(column))
        return idx

    @property
    def header(self) -> str | None:
        return self._header

    def _rows(self) -> Iterator[tuple[int, str, tuple]]:
        """Yield (line_number, raw line, parsed tuple) for accepted lines."""
        if self._consumed:
            raise RuntimeError("BsmReader can only be consumed once")
        self._consumed = True
        handle, owned = _open_text(self.source)
        try:
            header_line = handle.readline()
            if not header_line:
                raise DataError("BSM source is empty (header required)")
            self._header = header_line.rstrip("\r\n")
            i_dev, i_t, i_lat, i_lon, i_spd, i_acc = self._header_index(_split(self._header))
            width = len(_split(header_line.rstrip("\r\n")))
            seen = self._seen
            rejects = self.rejects
            lineno = 1
            for raw in handle:
                lineno += 1
                line = raw.rstrip("\r\n")
                if not line.strip():
                    # blank lines are data lines too; account for them
                    self.n_lines += 1
                    rejects.append(Reject(lineno, MALFORMED, line))
                    continue
                self.n_lines += 1
                parts = _split(line)
                if len(parts) != width:
                    rejects.append(Reject(lineno, MALFORMED, line))
                    continue
                try:
                    dev = parts[i_dev].strip()
                    t = _parse_timestamp(parts[i_t])
                    lat = float(parts[i_lat])
                    lon = float(parts[i_lon])
                    spd = float(parts[i_spd])
                    acc = float(parts[i_acc])
                except ValueError:
                    rejects.append(Reject(lineno, MALFORMED, line))
                    continue
                if not dev:
                    rejects.append(Reject(lineno, MALFORMED, line))
                    continue
                if _check_ranges(lat, lon, spd, acc):
                    rejects.append(Reject(lineno, RANGE, line))
                    continue
                times = seen.get(dev)
                if times is None:
                    times = seen[dev] = set()
                if t in times:
                    rejects.append(Reject(lineno, DUPLICATE, line))
                    continue
                times.add(t)
                self.n_accepted += 1
                yield lineno, line, (dev, t, lat, lon, spd, acc)
        except UnicodeDecodeError as exc:
            raise DataError(f"BSM source is not valid UTF-8: {exc}") from exc
        finally:
            if owned:
                handle.close()

    def __iter__(self) -> Iterator[BsmRecord]:
        for _, _, row in self._rows():
            yield BsmRecord(*row)

    def chunks(self, size: int = 100_000) -> Iterator[BsmChunk]:
        buf: list[tuple] = []
        lines: list[int] = []
        raws: list[str] = []
        for lineno, raw, row in self._rows():
            buf.append(row)
            lines.append(lineno)
            raws.append(raw)
            if len(buf) >= size:
                yield _to_chunk(lines, buf, raws)
                buf, lines, raws = [], [], []
        if buf:
            yield _to_chunk(lines, buf, raws)


def _to_chunk(lines, rows, raws=None) -> BsmChunk:
    dev, t, lat, lon, spd, acc = zip(*rows)
    return BsmChunk(
        line_number=np.asarray(lines, dtype=np.int64),
        device_id=np.asarray(dev, dtype=object),
        t=np.asarray(t, dtype=np.int64),
        lat=np.asarray(lat, dtype=float),
        lon=np.asarray(lon, dtype=float),
        speed=np.asarray(spd, dtype=float),
        accel_long=np.asarray(acc, dtype=float),
        raw=raws,
    )


def parse_bsm_stream(source, schema: dict[str, str] | None = None) -> tuple[list[BsmRecord], list[Reject]]:
    """Parse a whole BSM source eagerly. Use :class:`BsmReader` to stream."""
    reader = BsmReader(source, schema)
    records = list(reader)
    return records, reader.rejects


def write_bsm_csv(records: Iterable[BsmRecord], dest: IO[str], schema: dict[str, str] | None = None) -> int:
    """Serialize records with full float precision (``repr``), so re-parsing is exact."""
    cols = dict(DEFAULT_BSM_SCHEMA)
    if schema:
        cols.update(schema)
    dest.write(",".join(cols[f] for f in BSM_FIELDS) + "\n")
    n = 0
    for r in records:
        dest.write(f"{r.device_id},{r.t},{r.lat!r},{r.lon!r},{r.speed!r},{r.accel_long!r}\n")
        n += 1
    return n


def write_reject_log(rejects: Iterable[Reject], dest: IO[str], source_name: str | None = None) -> None:
    writer = csv.writer(dest, lineterminator="\n")
    header = ["line_number", "reason", "raw"]
    if source_name is not None:
        header = ["source"] + header
    writer.writerow(header)
    for r in rejects:
        row = [r.line_number, r.reason, r.raw]
        writer.writerow([source_name] + row if source_name is not None else row)


# ---------------------------------------------------------------- sites

def parse_wkt_polygon(text: str) -> tuple[tuple[float, float], ...]:
    """Exterior ring of a WKT POLYGON as (lat, lon) vertices, without the closing repeat."""
    from shapely import wkt
    from shapely.errors import ShapelyError

    try:
        geom = wkt.loads(text)
    except (ShapelyError, ValueError) as exc:
        raise ValueError(f"bad WKT: {exc}") from exc
    if geom.geom_type != "Polygon" or geom.is_empty:
        raise ValueError(f"expected POLYGON, got {geom.geom_type}")
    coords = list(geom.exterior.coords)[:-1]
    # WKT is x y, i.e. lon lat
    return tuple((float(y), float(x)) for x, y in coords)


def _flag(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no"):
        return False
    raise ValueError(f"not a 0/1 flag: {text!r}")


def _count(text: str) -> int:
    value = float(text)
    if value < 0 or value != int(value):
        raise ValueError(f"not a non-negative count: {text!r}")
    return int(value)


def _site_from_row(row: dict[str, str]) -> IntersectionSite:
    headings_text = (row.get("headings") or "").strip()
    headings = tuple(float(h) for h in headings_text.split(";") if h.strip()) if headings_text else ()
    wkt_text = (row.get("polygon_wkt") or "").strip()
    polygon = parse_wkt_polygon(wkt_text) if wkt_text else None
    return IntersectionSite(
        site_id=row["site_id"].strip(),
        center_lat=float(row["center_lat"]),
        center_lon=float(row["center_lon"]),
        approach_headings=headings,
        geofence=polygon,
        crash_avg=float(row["crash_avg"]),
        aadt_major=float(row["aadt_major"]),
        aadt_minor=float(row["aadt_minor"]),
        speed_limit_major=float(row["spd_major_mph"]),
        speed_limit_minor=float(row["spd_minor_mph"]),
        signalized=_flag(row["signalized"]),
        four_legged=_flag(row["four_legged"]),
        lanes_through=_count(row["lanes_through"]),
        lanes_left=_count(row["lanes_left"]),
        lanes_right=_count(row["lanes_right"]),
    )


def parse_site_inventory(source) -> tuple[list[IntersectionSite], list[Reject]]:
    """Read the site CSV. Duplicate ``site_id`` is fatal; bad rows are rejected."""
    handle, owned = _open_text(source)
    try:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("site inventory is empty (header required)") from None
        missing = [c for c in SITE_COLUMNS if c not in header and c not in SITE_OPTIONAL]
        if missing:
            raise DataError(f"site inventory missing columns: {missing}")
        sites: list[IntersectionSite] = []
        rejects: list[Reject] = []
        ids: set[str] = set()
        for parts in reader:
            lineno = reader.line_num
            raw = ",".join(parts)
            if not any(p.strip() for p in parts):
                continue
            if len(parts) != len(header):
                rejects.append(Reject(lineno, MALFORMED, raw))
                continue
            row = dict(zip(header, parts))
            site_id = row["site_id"].strip()
            if site_id in ids:
                raise DataError(f"duplicate site_id {site_id!r} on line {lineno}")
            ids.add(site_id)
            try:
                sites.append(_site_from_row(row))
            except ValueError as exc:
                reason = RANGE if str(exc).startswith("invalid IntersectionSite") else MALFORMED
                log.warning("site line %d rejected: %s", lineno, exc)
                rejects.append(Reject(lineno, reason, raw))
    finally:
        if owned:
            handle.close()
    if not sites and not rejects:
        warnings.warn("site inventory contains no data rows", stacklevel=2)
    return sites, rejects


def write_site_inventory(sites: Iterable[IntersectionSite], dest: IO[str]) -> None:
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(SITE_COLUMNS)
    for s in sites:
        wkt_text = ""
        if s.geofence is not None:
            ring = list(s.geofence) + [s.geofence[0]]
            wkt_text = "POLYGON ((" + ", ".join(f"{lon!r} {lat!r}" for lat, lon in ring) + "))"
        writer.writerow([
            s.site_id, repr(s.center_lat), repr(s.center_lon),
            ";".join(repr(h) for h in s.approach_headings), wkt_text,
            repr(s.crash_avg), repr(s.aadt_major), repr(s.aadt_minor),
            repr(s.speed_limit_major), repr(s.speed_limit_minor),
            int(s.signalized), int(s.four_legged),
            s.lanes_through, s.lanes_left, s.lanes_right,
        ])
