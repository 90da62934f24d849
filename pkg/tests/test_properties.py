"""
Property-based tests for the simulator invariants.

Each property runs 1000 generated cases.
"""

import io

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from src.circuit.network import NetworkDims, build_network, perturb, shuffle_devices
from src.circuit.solver import read_currents, solve
from src.experiments.results import ResultTable
from src.learning.toy import ToyNetwork, toy_step
from src.learning.trainer import TargetMap
from src.memristor.device import (
    BcmParams,
    BmsParams,
    DeviceRecord,
    ModelKind,
    apply_voltage_substep,
    bcm_rate,
)
from src.utils.export import table_to_csv

PROPERTY_SETTINGS = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def bms_devices(draw):
    beta = draw(st.floats(0.8, 1.0, **finite))
    v_threshold = draw(st.floats(0.05, 0.1, **finite))
    r_min = draw(st.floats(50.0, 100.0, **finite))
    params = BmsParams(beta=beta, v_threshold=v_threshold, r_min=r_min, r_max=5000.0)
    state = draw(st.floats(r_min, 5000.0, **finite))
    polarity = draw(st.sampled_from([1, -1]))
    return DeviceRecord(params=params, polarity=polarity, state=state)


@st.composite
def bcm_devices(draw):
    params = BcmParams(r_min=draw(st.floats(500.0, 1000.0, **finite)))
    state = draw(st.floats(0.0, 1.0, **finite))
    return DeviceRecord(params=params, polarity=draw(st.sampled_from([1, -1])), state=state)


@st.composite
def small_networks(draw):
    n_in = draw(st.integers(1, 3))
    n_bulk = draw(st.integers(1, 5))
    n_out = draw(st.integers(1, 3))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    kind = draw(st.sampled_from(list(ModelKind)))
    net = build_network(NetworkDims(n_in=n_in, n_bulk=n_bulk, n_out=n_out), kind, np.random.default_rng(seed))
    grow = np.random.default_rng(seed + 1)
    net.layer1.set_resistance(net.layer1.resistance() * grow.uniform(1, 40, size=net.layer1.shape))
    net.layer2.set_resistance(net.layer2.resistance() * grow.uniform(1, 40, size=net.layer2.shape))
    return net


@PROPERTY_SETTINGS
@given(dev=bms_devices(), fraction=st.floats(0.0, 0.999, **finite), dt=st.floats(0.01, 5.0, **finite))
def test_bms_dead_zone_is_identity(dev, fraction, dt):
    v = fraction * dev.params.v_threshold
    for sign in (1, -1):
        assert apply_voltage_substep(dev, sign * v, dt).state == dev.state


@PROPERTY_SETTINGS
@given(dev=bms_devices(), v=st.floats(-2.0, 2.0, **finite), dt=st.floats(0.01, 5.0, **finite))
def test_bms_monotone_sign_and_clamp(dev, v, dt):
    after = apply_voltage_substep(dev, v, dt)
    assert dev.params.r_min <= after.state <= dev.params.r_max
    v_dev = dev.polarity * v
    if v_dev > dev.params.v_threshold:
        assert after.state <= dev.state
    if v_dev < -dev.params.v_threshold:
        assert after.state >= dev.state


@PROPERTY_SETTINGS
@given(dev=bms_devices(), v=st.floats(-2.0, 2.0, **finite))
def test_polarity_antisymmetry(dev, v):
    flipped = dev.model_copy(update={"polarity": -dev.polarity})
    assert apply_voltage_substep(flipped, v, 1.0).state == apply_voltage_substep(dev, -v, 1.0).state


@PROPERTY_SETTINGS
@given(dev=bcm_devices(), v=st.floats(-10.0, 10.0, **finite), dt=st.floats(1e-5, 1e-3, **finite))
def test_bcm_state_stays_normalized(dev, v, dt):
    assert 0.0 <= apply_voltage_substep(dev, v, dt).state <= 1.0


@PROPERTY_SETTINGS
@given(r_min=st.floats(500.0, 1000.0, **finite), v=st.floats(-10.0, 10.0, **finite))
def test_bcm_boundary_absorption(r_min, v):
    params = BcmParams(r_min=r_min)
    if v >= -params.v_th1:
        assert bcm_rate(1.0, v, params) == 0.0
    if v <= params.v_th0:
        assert bcm_rate(0.0, v, params) == 0.0


@PROPERTY_SETTINGS
@given(net=small_networks(), data=st.data())
def test_solver_conservation_and_maximum_principle(net, data):
    i = data.draw(st.integers(0, net.dims.n_in - 1))
    k = data.draw(st.integers(0, net.dims.n_out - 1))
    v = data.draw(st.floats(-5.0, 5.0, **finite).filter(lambda x: abs(x) > 1e-6))
    solution = solve(net, i, k, v)
    assert solution.source_current == pytest.approx(solution.terminal_current, rel=1e-9)
    low, high = min(0.0, v), max(0.0, v)
    tolerance = 1e-12 * abs(v)
    assert np.all(solution.node_voltages >= low - tolerance)
    assert np.all(solution.node_voltages <= high + tolerance)


@PROPERTY_SETTINGS
@given(net=small_networks(), data=st.data())
def test_reads_are_pure(net, data):
    i = data.draw(st.integers(0, net.dims.n_in - 1))
    before = net.state_hash()
    read_currents(net, i, 1e-4)
    assert net.state_hash() == before


@PROPERTY_SETTINGS
@given(net=small_networks(), seed=st.integers(0, 2 ** 32 - 1))
def test_shuffle_conserves_resistance_multiset(net, seed):
    shuffled = shuffle_devices(net, np.random.default_rng(seed))
    np.testing.assert_array_equal(np.sort(shuffled.resistances()), np.sort(net.resistances()))


@PROPERTY_SETTINGS
@given(net=small_networks(), fraction=st.floats(0.0, 1.0, **finite), seed=st.integers(0, 2 ** 32 - 1))
def test_perturb_count_is_exact(net, fraction, seed):
    total = net.n_devices
    count = perturb(net, fraction, 1.05, np.random.default_rng(seed))
    assert count == int(np.floor(round(fraction * total, 9)))


@PROPERTY_SETTINGS
@given(
    n_mid=st.integers(1, 6),
    n_out=st.integers(2, 4),
    seed=st.integers(0, 2 ** 32 - 1),
    delta=st.floats(0.001, 1.0, **finite),
)
def test_toy_punishment_changes_exactly_two_weights(n_mid, n_out, seed, delta):
    rng = np.random.default_rng(seed)
    tn = ToyNetwork.random(2, n_mid, n_out, rng, delta=delta)
    target = TargetMap(assignment=tuple(int(k) for k in rng.integers(n_out, size=2)), n_out=n_out)
    w1, w2 = tn.w1.copy(), tn.w2.copy()
    step = toy_step(tn, target, rng)
    changed = np.count_nonzero(tn.w1 != w1) + np.count_nonzero(tn.w2 != w2)
    assert changed == (2 if step.punished else 0)
    assert np.all(tn.w1 <= w1) and np.all(tn.w2 <= w2)


@PROPERTY_SETTINGS
@given(rows=st.lists(st.tuples(st.integers(0, 1000), st.floats(**finite)), max_size=20))
def test_csv_is_deterministic(rows):
    table = ResultTable(name="t", header=("step", "value"), rows=rows)
    first = table_to_csv(table)
    assert first == table_to_csv(ResultTable(name="t", header=("step", "value"), rows=list(rows)))
    assert len(io.StringIO(first).readlines()) == len(rows) + 1
