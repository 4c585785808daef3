"""Shared test configuration.

BLAS thread pools are pinned to one thread before numpy loads: the suite
is dominated by many small dense solves, where threaded dispatch overhead
swamps the arithmetic on small hosts.
"""

import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from slowbeam import default_scenario, small_scenario  # noqa: E402


@pytest.fixture(scope="session")
def reference_config():
    return default_scenario()


@pytest.fixture(scope="session")
def small_config():
    return small_scenario()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
