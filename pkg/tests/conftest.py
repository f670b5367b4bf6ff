import numpy as np
import pytest

from tactile_splitter import benchmark
from tactile_splitter.pfsnn import TrainConfig


@pytest.fixture(scope="session")
def bench_items():
    """The default benchmark rendered with seed 0."""
    return benchmark.generate_benchmark(seed=0)


@pytest.fixture(scope="session")
def nir_model(bench_items):
    model, state = benchmark.train_model(bench_items, use_nir=True, cfg=TrainConfig(seed=0))
    return model, state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
