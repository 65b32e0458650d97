import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivevol.errors import DataError
from drivevol.ingest import BsmRecord
from drivevol.segmentation import SegmentStats, segment_arrays, segment_passings


def recs(device, times_ms):
    return [("S", BsmRecord(device, t, 42.0, -83.0, 5.0, 0.0)) for t in times_ms]


def test_single_passing():
    out = segment_passings(recs("D1", range(0, 3000, 100)), gap_threshold=5, min_points=10)
    assert len(out) == 1 and out[0].n_points == 30


def test_gap_splits():
    times = list(range(0, 1500, 100)) + list(range(11400, 12900, 100))
    out = segment_passings(recs("D1", times), gap_threshold=5, min_points=10)
    assert [p.n_points for p in out] == [15, 15]


def test_short_run_discarded():
    stats = SegmentStats()
    out = segment_passings(recs("D1", [0, 100]), gap_threshold=5, min_points=5, stats=stats)
    assert out == [] and stats.discarded_runs == 1 and stats.discarded_records == 2


def test_devices_and_sites_separate():
    data = recs("D1", range(0, 1000, 100)) + recs("D2", range(0, 1000, 100))
    data += [("T", r) for _, r in recs("D1", range(0, 1000, 100))]
    out = segment_passings(data, gap_threshold=5, min_points=5)
    assert sorted((p.site_id, p.device_id) for p in out) == [("S", "D1"), ("S", "D2"), ("T", "D1")]


def test_tie_is_error():
    with pytest.raises(DataError):
        segment_arrays("S", np.array(["a", "a"], dtype=object), np.array([5, 5]), np.zeros(2), np.zeros(2))


def test_exact_gap_threshold_keeps_run():
    out = segment_passings(recs("D", [0, 30_000]), gap_threshold=30, min_points=2)
    assert len(out) == 1


runs = st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.integers(0, 200_000)),
                max_size=200, unique=True)


@settings(max_examples=80, deadline=None)
@given(runs, st.integers(1, 6), st.randoms(use_true_random=False))
def test_partition_permutation_idempotence(pairs, min_points, rnd):
    data = [("S", BsmRecord(d, t, 42.0, -83.0, 1.0, 0.0)) for d, t in pairs]
    stats = SegmentStats()
    out = segment_passings(data, gap_threshold=5, min_points=min_points, stats=stats)
    assert stats.records_in_passings + stats.discarded_records == len(data)
    assert sum(p.n_points for p in out) == stats.records_in_passings
    for p in out:
        assert np.all(np.diff(p.t) > 0) and np.all(np.diff(p.t) <= 5000) and p.n_points >= min_points
    shuffled = list(data)
    rnd.shuffle(shuffled)
    again = segment_passings(shuffled, gap_threshold=5, min_points=min_points)
    assert [(p.device_id, p.t.tolist()) for p in again] == [(p.device_id, p.t.tolist()) for p in out]
    flat = [("S", r) for p in out for r in p.records]
    redo = segment_passings(flat, gap_threshold=5, min_points=min_points)
    assert [(p.device_id, p.t.tolist()) for p in redo] == [(p.device_id, p.t.tolist()) for p in out]
