import io

import numpy as np
import pytest

from hfhet.pipeline import synthetic_tick_csv
from hfhet.simulate import Heston, ModelSpec, SimGrid, simulate, simulate_heston


@pytest.fixture(scope="session", autouse=True)
def warm_numba():
    # first stochastic-variance call triggers the JIT compile; do it once
    simulate_heston(SimGrid(16), Heston(), np.random.default_rng(0))


@pytest.fixture(scope="session")
def tick_fixture_path(tmp_path_factory):
    """The bundled 10-day U-shaped tick fixture, generated once per session."""
    path = tmp_path_factory.mktemp("ticks") / "ticks.csv"
    with open(path, "w", newline="") as handle:
        synthetic_tick_csv(handle, n_days=10, seed=20110103)
    return path


def model1_path(n: int, rep: int, key: int = 0):
    from hfhet.simulate import ConstantVol

    return simulate(ModelSpec(ConstantVol()), n, np.random.SeedSequence(424242, spawn_key=(key, rep)))
