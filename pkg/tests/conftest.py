import numpy as np
import pytest

from drivevol.ingest import IntersectionSite
from drivevol.synth import CorpusSpec, ProfileSpec, write_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def plus_site():
    return IntersectionSite("A", 42.28, -83.74, approach_headings=(0.0, 90.0, 180.0, 270.0),
                            crash_avg=4.0, aadt_major=20805, aadt_minor=5000)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """8 sites x 40 passings; every site qualifies for modeling."""
    d = tmp_path_factory.mktemp("corpus")
    spec = CorpusSpec(n_sites=8, passings_per_site=40, n_devices=16, seed=3,
                      profile=ProfileSpec(stop_probability=0.5))
    truth = write_corpus(spec, str(d))
    return d, truth
