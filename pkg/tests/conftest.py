"""
Shared fixtures and helpers for the test suite.
"""

import numpy as np
import pytest

from src.circuit.network import NetworkDims, NetworkState
from src.memristor.device import DeviceTable, ModelKind


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance test (enable with --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def bms_table(resistance, beta=0.9, v_threshold=0.075, r_min=50.0, r_max=5000.0, polarity=1) -> DeviceTable:
    """BMS table with the given resistances and uniform parameters."""
    state = np.array(resistance, dtype=float)
    shape = state.shape
    return DeviceTable(
        kind=ModelKind.BMS,
        params={
            "beta": np.full(shape, beta),
            "v_threshold": np.full(shape, v_threshold),
            "r_min": np.full(shape, r_min),
            "r_max": np.full(shape, r_max),
        },
        polarity=np.broadcast_to(np.array(polarity, dtype=np.int8), shape).copy(),
        state=state,
    )


def bms_network(r1, r2, **params) -> NetworkState:
    """Network built from explicit layer-1 (n_in x n_bulk) and layer-2 (n_bulk x n_out) resistances."""
    layer1 = bms_table(r1, **params)
    layer2 = bms_table(r2, **params)
    n_in, n_bulk = layer1.shape
    dims = NetworkDims(n_in=n_in, n_bulk=n_bulk, n_out=layer2.shape[1])
    return NetworkState(dims=dims, layer1=layer1, layer2=layer2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def series_net():
    """1x1x1 network with both resistances at 100."""
    return bms_network([[100.0]], [[100.0]])
