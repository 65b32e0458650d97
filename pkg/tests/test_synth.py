import json

import numpy as np
import pytest

from drivevol.ingest import parse_bsm_stream, parse_site_inventory
from drivevol.measures import derive_jerk, level1_vector, level2_vector
from drivevol.segmentation import Passing
from drivevol.synth import CorpusSpec, ProfileSpec, gen_counts, gen_passing, gen_trajectory, write_corpus


def test_constant_speed_profile(plus_site):
    prof = ProfileSpec(approach_speed=10.0, stop_probability=0.0)
    recs = gen_passing(prof, plus_site, "D1")
    speed = np.array([r.speed for r in recs])
    assert np.all(speed == 10.0) and all(r.accel_long == 0.0 for r in recs)
    assert level1_vector("S", speed, np.zeros(len(speed))).values["L1-Speed-Sdev"] == 0.0


def test_stop_profile_trapezoid(plus_site):
    prof = ProfileSpec(approach_speed=12.0, stop_probability=1.0, dwell_s=4.0)
    recs = gen_passing(prof, plus_site, "D1")
    speed = np.array([r.speed for r in recs])
    accel = np.array([r.accel_long for r in recs])
    assert speed.min() == 0.0 and speed.max() == pytest.approx(12.0)
    assert set(np.round(accel, 12)) <= {0.0, -2.0, 1.5}
    jerk = derive_jerk(t=[r.t for r in recs], accel=accel).values
    assert np.count_nonzero(jerk) <= 4


def test_positions_integrate_speed():
    prof = ProfileSpec(approach_speed=10.0, stop_probability=0.0)
    tr = gen_trajectory(prof, (0.0, 180.0), np.random.default_rng(0), legs=(0, 1))
    step = np.hypot(np.diff(tr.x), np.diff(tr.y))
    assert step == pytest.approx(np.full(len(step), 1.0), abs=1e-9)


def test_same_seed_bit_identical(plus_site):
    prof = ProfileSpec(noise_sigma_speed=0.4, noise_sigma_accel=0.4, rng_seed=9)
    assert gen_passing(prof, plus_site, "D") == gen_passing(prof, plus_site, "D")


def test_noise_keeps_speed_non_negative(plus_site):
    prof = ProfileSpec(noise_sigma_speed=3.0, noise_sigma_accel=3.0, stop_probability=1.0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert all(r.speed >= 0 for r in gen_passing(prof, plus_site, "D", rng=rng))


def test_gen_counts():
    y = gen_counts(np.ones((100_000, 1)), [np.log(3)], seed=1)
    assert 2.95 <= y.mean() <= 3.05
    X = np.column_stack([np.ones(50), np.linspace(0, 1, 50)])
    np.testing.assert_array_equal(gen_counts(X, [0.1, 0.2], seed=4), gen_counts(X, [0.1, 0.2], seed=4))
    np.testing.assert_array_equal(gen_counts(X, [0.1, 0.2], sigma_true=[0.0, 0.0], seed=4).shape, (50,))


def _passings(sigma, n=100):
    rng = np.random.default_rng(77)
    prof = ProfileSpec(noise_sigma_speed=sigma, noise_sigma_accel=sigma)
    out = []
    for i in range(n):
        tr = gen_trajectory(prof, (0.0, 90.0, 180.0, 270.0), rng)
        out.append(Passing("S", f"D{i}", tr.t_ms, tr.speed, tr.accel))
    return out


def test_sdev_family_monotone_in_noise():
    names = ["L2-Speed-Sdev", "L2-AccDec-Sdev", "L2-Jerk-Sdev"]
    prev = None
    for sigma in (0.0, 0.2, 0.5, 1.0):
        v = level2_vector("S", _passings(sigma)).values
        cur = [v[n] for n in names]
        if prev is not None:
            assert all(c >= p for c, p in zip(cur, prev)), (sigma, cur, prev)
        prev = cur


def test_write_corpus(tmp_path):
    spec = CorpusSpec(n_sites=3, passings_per_site=4, n_devices=2, seed=5)
    truth = write_corpus(spec, str(tmp_path))
    recs, rej = parse_bsm_stream(str(tmp_path / "bsm.csv"))
    sites, srej = parse_site_inventory(str(tmp_path / "sites.csv"))
    assert rej == [] and srej == [] and len(sites) == 3
    assert len(recs) == truth["n_records"]
    stored = json.loads((tmp_path / "ground_truth.json").read_text())
    assert stored["beta_true"] == list(spec.beta_true)
    again = tmp_path / "again"
    write_corpus(spec, str(again))
    assert (again / "bsm.csv").read_bytes() == (tmp_path / "bsm.csv").read_bytes()


def test_profile_validation():
    with pytest.raises(ValueError):
        ProfileSpec(stop_probability=1.5)
    with pytest.raises(ValueError):
        ProfileSpec(decel_rate=0.0)
