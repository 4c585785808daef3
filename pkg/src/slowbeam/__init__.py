"""Slow-time adaptive statistical analog beamforming simulator."""

import os

# The workload is many small dense solves; threaded BLAS loses badly to the
# dispatch overhead there.  Only takes effect if numpy is not loaded yet;
# the runner additionally pins threads at runtime via threadpoolctl.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from .scenario import (GroupSpec, MpcSpec, ScenarioConfig, ScenarioError,  # noqa: E402
                       default_scenario, load_scenario, save_scenario,
                       small_scenario)

__version__ = "0.1.0"

__all__ = [
    "GroupSpec", "MpcSpec", "ScenarioConfig", "ScenarioError",
    "default_scenario", "load_scenario", "save_scenario", "small_scenario",
    "__version__",
]
