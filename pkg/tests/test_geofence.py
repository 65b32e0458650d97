import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivevol.errors import GeometryError
from drivevol.geofence import (DUPLICATE, FT_TO_M, NEAREST, AssignmentStats, LocalFrame, Territory,
                               assign_arrays, assign_records, build_territory, contains, to_local)
from drivevol.ingest import BsmRecord, IntersectionSite

REACH_M = 150 * FT_TO_M


def winding_number(ring, x, y):
    """Brute-force winding number of a closed ring around (x, y)."""
    wn = 0
    for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
        is_left = (x2 - x1) * (y - y1) - (x - x1) * (y2 - y1)
        if y1 <= y < y2 and is_left > 0:
            wn += 1
        elif y2 <= y < y1 and is_left < 0:
            wn -= 1
    return wn


def on_boundary(ring, x, y, tol=1e-6):
    for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
        dx, dy = x2 - x1, y2 - y1
        t = max(0.0, min(1.0, ((x - x1) * dx + (y - y1) * dy) / (dx * dx + dy * dy)))
        if math.hypot(x - x1 - t * dx, y - y1 - t * dy) < tol:
            return True
    return False


def test_to_local_examples():
    f = LocalFrame(42.0, -83.0)
    assert to_local(f, 42.0, -83.0) == (0.0, 0.0)
    x, y = to_local(f, 42.001, -83.0)
    assert x == 0.0 and y == pytest.approx(111.32, abs=1e-9)
    x, y = to_local(LocalFrame(60.0, 10.0), 60.0, 10.001)
    assert x == pytest.approx(55.66, abs=1e-9) and y == 0.0


def test_frame_round_trip():
    f = LocalFrame(42.28, -83.74)
    lat, lon = f.to_geo(*f.to_local(np.array([42.2805]), np.array([-83.7391])))
    assert lat[0] == pytest.approx(42.2805, abs=1e-12) and lon[0] == pytest.approx(-83.7391, abs=1e-12)


def test_plus_shape(plus_site):
    terr = build_territory(plus_site)
    r = np.hypot(terr.polygon[:, 0], terr.polygon[:, 1])
    assert np.max(np.abs(terr.polygon)) == pytest.approx(REACH_M)
    assert r.max() <= REACH_M * 1.1
    assert terr.area > 0
    assert np.array_equal(terr.polygon[0], terr.polygon[-1])
    assert contains(terr, 0.0, 0.0)
    assert not contains(terr, 0.0, 200 * FT_TO_M)
    assert contains(terr, 0.0, REACH_M)  # end of the north arm is on the boundary
    assert contains(terr, 12.0, 30.0)  # arm edge
    assert not contains(terr, 30.0, 30.0)  # between arms


def test_explicit_polygon_verbatim():
    poly = ((42.2799, -83.7401), (42.2799, -83.7399), (42.2801, -83.7399), (42.2801, -83.7401))
    site = IntersectionSite("P", 42.28, -83.74, geofence=poly, aadt_major=1, aadt_minor=1)
    terr = build_territory(site)
    f = LocalFrame(42.28, -83.74)
    expected = {tuple(np.round(f.to_local(lat, lon), 9)) for lat, lon in poly}
    assert {tuple(np.round(p, 9)) for p in terr.polygon[:-1]} == expected


def test_degenerate_polygons():
    line = ((42.28, -83.74), (42.2801, -83.74), (42.2802, -83.74))
    with pytest.raises(GeometryError):
        build_territory(IntersectionSite("L", 42.28, -83.74, geofence=line, aadt_major=1, aadt_minor=1))
    bowtie = ((42.2799, -83.7401), (42.2801, -83.7399), (42.2799, -83.7399), (42.2801, -83.7401))
    with pytest.raises(GeometryError):
        build_territory(IntersectionSite("B", 42.28, -83.74, geofence=bowtie, aadt_major=1, aadt_minor=1))


def test_one_heading_rejected():
    with pytest.raises(ValueError):
        IntersectionSite("X", 42.28, -83.74, approach_headings=(0.0,))


@pytest.mark.parametrize("headings", [(0, 90, 180, 270), (10, 130, 250), (45, 225), (0, 60, 120, 180, 240, 300)])
def test_contains_matches_winding_oracle(headings, rng):
    site = IntersectionSite("W", 42.28, -83.74, approach_headings=tuple(map(float, headings)))
    terr = build_territory(site)
    pts = rng.uniform(-60, 60, size=(10_000, 2))
    got = contains(terr, pts[:, 0], pts[:, 1])
    ring = terr.polygon.tolist()
    for (x, y), g in zip(pts, got):
        if on_boundary(ring, x, y):
            continue
        assert g == (winding_number(ring, x, y) != 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.integers(0, 2**31))
def test_translation_invariance(dx, dy, seed):
    site = IntersectionSite("T", 42.28, -83.74, approach_headings=(20.0, 110.0, 200.0))
    terr = build_territory(site)
    moved = Territory("T", terr.frame, terr.polygon + np.array([dx, dy]))
    pts = np.random.default_rng(seed).uniform(-60, 60, size=(200, 2))
    keep = [not on_boundary(terr.polygon.tolist(), x, y, tol=1e-6) for x, y in pts]
    pts = pts[keep]
    np.testing.assert_array_equal(contains(terr, pts[:, 0], pts[:, 1]),
                                  contains(moved, pts[:, 0] + dx, pts[:, 1] + dy))


def _sites_near():
    a = IntersectionSite("A", 42.28, -83.74, approach_headings=(90.0, 270.0))
    f = LocalFrame(42.28, -83.74)
    b = IntersectionSite("B", 42.28, f.to_geo(70.0, 0.0)[1], approach_headings=(90.0, 270.0))
    return [build_territory(a), build_territory(b)]


def _lon(x):
    return LocalFrame(42.28, -83.74).to_geo(x, 0.0)[1]


def test_assign_policies():
    terrs = _sites_near()
    lat = np.array([42.28, 42.28, 42.28, 42.29])
    lon = np.array([_lon(30.0), _lon(40.0), _lon(0.0), _lon(0.0)])
    dup = assign_arrays(lat, lon, terrs, DUPLICATE)
    assert dup[0].tolist() == [0, 1, 2] and dup[1].tolist() == [0, 1]
    near = assign_arrays(lat, lon, terrs, NEAREST)
    assert near[0].tolist() == [0, 2] and near[1].tolist() == [1]


def test_assign_records_counts():
    terrs = _sites_near()
    recs = [BsmRecord("D", i, 42.28, lon, 1.0, 0.0) for i, lon in enumerate([_lon(30.0), _lon(0.0), -83.70])]
    stats = AssignmentStats()
    pairs = list(assign_records(recs, terrs, stats=stats, batch=2))
    assert len(pairs) == 3  # first record in both, second in A, third outside
    assert stats.records_in == 3 and stats.records_out == 1 and stats.emitted == 3
    assert len(pairs) <= len(recs) * 2
