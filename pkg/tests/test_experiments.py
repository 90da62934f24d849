"""
Tests for the scenario runners. Quick runs check bookkeeping; the acceptance runs behind
--runslow check the expected behaviour at full scale.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.circuit.network import NetworkDims
from src.experiments.results import SweepPoint, binomial_sem, steps_to_success
from src.experiments.scenarios import (
    SEQUENTIAL_REFERENCE_MAPS,
    TOY_REFERENCE_MAPS,
    SweepSpec,
    relearn_checkpoints,
    run_device_demo,
    run_perturbation,
    run_relearn_shuffle,
    run_sequential_maps,
    run_success_sweep,
    run_toy_scaling,
    run_toy_sequence,
    run_variants,
    sine_waveform,
    triangle_waveform,
)
from src.learning.trainer import TargetMap, TrainerConfig
from src.memristor.device import BmsParams, DeviceRecord, ModelKind
from src.utils.seeding import substream, substream_seed

DEMO_DEVICE = DeviceRecord(params=BmsParams(beta=0.9, v_threshold=0.075, r_min=75.0, r_max=5000.0), state=75.0)
SHORT = TrainerConfig(max_training_steps=200)


def test_substreams_are_stable_and_distinct():
    assert substream_seed(7, 3) == substream_seed(7, 3)
    assert len({substream_seed(7, r) for r in range(1000)}) == 1000
    assert substream(7, 3).random() == substream(7, 3).random()
    assert substream(7, 3).random() != substream(8, 3).random()


def test_sweep_spec_validation():
    with pytest.raises(ValidationError):
        SweepSpec(grid=((3, 3, 0),))
    with pytest.raises(ValidationError):
        SweepSpec(grid=((3, 3, 20),), realizations=0)
    with pytest.raises(ValidationError):
        SweepSpec(grid=((3, 3, 20),), variant="mirrored")


def test_sweep_curves_are_monotone_fractions():
    spec = SweepSpec(grid=((2, 2, 5), (2, 2, 30)), realizations=4, base_seed=1, step_cap=100)
    result = run_success_sweep(spec)
    assert [p.n_bulk for p in result.points] == [5, 30]
    for point in result.points:
        curve = point.curve
        assert curve.shape == (100,)
        assert np.all(np.diff(curve) >= 0)
        assert np.all((curve >= 0) & (curve <= 1))
        np.testing.assert_allclose(point.sem, np.sqrt(curve * (1 - curve) / 4))
        assert point.final_r_mean > 0


def test_single_realization_is_step_function():
    spec = SweepSpec(grid=((2, 2, 30),), realizations=1, base_seed=2, step_cap=100)
    point = run_success_sweep(spec).points[0]
    if point.learned_at[0] is None:
        assert np.all(point.curve == 0)
    else:
        step = point.learned_at[0]
        assert np.all(point.curve[: step - 1] == 0)
        assert np.all(point.curve[step - 1:] == 1)


def test_sweep_is_reproducible_and_order_independent():
    spec = SweepSpec(grid=((2, 2, 10),), realizations=4, base_seed=3, step_cap=60)
    serial = run_success_sweep(spec).tables()
    again = run_success_sweep(spec).tables()
    pooled = run_success_sweep(spec, threads=2).tables()
    assert [t.rows for t in serial] == [t.rows for t in again] == [t.rows for t in pooled]


def test_sweep_tables_schema():
    spec = SweepSpec(grid=((2, 2, 10),), realizations=2, base_seed=4, step_cap=20)
    curves, runs = run_success_sweep(spec).tables()
    assert curves.header == ("n_in", "n_out", "n_bulk", "step", "success", "sem")
    assert len(curves.rows) == 20
    assert runs.header == ("n_in", "n_out", "n_bulk", "realization", "learned_at", "corrections")
    assert len(runs.rows) == 2


def test_steps_to_success():
    point = SweepPoint(n_in=1, n_out=1, n_bulk=1, step_cap=10, learned_at=[2, 5, None, 9], corrections=[0] * 4)
    assert steps_to_success(point, 0.5) == 5
    assert steps_to_success(point, 1.0) is None
    assert point.success_at_cap == 0.75
    assert point.sem_at_cap == pytest.approx(float(binomial_sem(0.75, 4)))


def test_variants_require_a_variant():
    with pytest.raises(ValueError):
        run_variants(SweepSpec(grid=((2, 2, 5),), realizations=1))


def test_equal_r_variant_runs():
    spec = SweepSpec(grid=((2, 2, 20),), realizations=2, base_seed=5, step_cap=50, variant="equal-r-random-vwrite")
    result = run_variants(spec)
    assert result.name == "variants"
    assert result.points[0].final_r_mean >= 100.0


def test_sequential_maps_schedule():
    maps = [
        TargetMap(assignment=(0, 1), n_out=2, label="a"),
        TargetMap(assignment=(1, 0), n_out=2, label="b"),
    ]
    result = run_sequential_maps(NetworkDims(n_in=2, n_bulk=40, n_out=2), maps, TrainerConfig(), seed=6)
    assert [entry.label for entry in result.schedule] == ["a", "b"]
    assert result.schedule[1].start_step == result.schedule[0].start_step + result.schedule[0].learned_at
    steps = [row[0] for row in result.rows]
    assert steps == list(range(1, len(steps) + 1))
    trace, schedule = result.tables()
    assert trace.header == ("step", "map", "error", "corrections")
    assert len(schedule.rows) == 2
    assert schedule.header == ("map", "assignment", "start_step", "initial_error", "learned_at")
    assert result.schedule[1].initial_error == maps[0].hamming(maps[1]) == 2


def test_reference_map_lists():
    assert len(SEQUENTIAL_REFERENCE_MAPS) == 7 and all(m.n_in == 4 for m in SEQUENTIAL_REFERENCE_MAPS)
    assert len(TOY_REFERENCE_MAPS) == 6 and all(m.n_in == 6 for m in TOY_REFERENCE_MAPS)
    assert SEQUENTIAL_REFERENCE_MAPS[0].hamming(SEQUENTIAL_REFERENCE_MAPS[1]) == 4


def test_perturbation_without_change_stays_learned():
    result = run_perturbation(NetworkDims(n_in=2, n_bulk=40, n_out=2), TrainerConfig(), 10, 0.0, 1.05, seed=7, events=3)
    assert result.learned_at is not None
    assert [event.perturbed for event in result.events] == [0, 0, 0]
    assert all(event.error_after == 0 and event.steps_to_recover == 0 for event in result.events)
    assert result.recovery_fraction == 1.0
    learned = result.learned_at
    assert all(error == 0 for _, error in result.trace[learned:])


def test_perturbation_rejects_bad_period():
    with pytest.raises(ValueError):
        run_perturbation(NetworkDims(n_in=2, n_bulk=4, n_out=2), TrainerConfig(), 0, 0.1, 1.05, seed=0, events=1)


def test_relearn_checkpoints():
    assert relearn_checkpoints(27, 10) == [0, 27, 108, 270, 297]
    assert relearn_checkpoints(4, 0) == [0, 4]


def test_relearn_small():
    result = run_relearn_shuffle(NetworkDims(n_in=2, n_bulk=15, n_out=2), SHORT, cycles=1, seed=8, realizations=2)
    assert result.maps_learned == list(range(9))
    assert len(result.mean_r) == len(result.cv) == 9
    assert result.mean_r[-1] >= result.mean_r[0]
    assert sorted(result.histograms) == [0, 4, 8]
    for histogram in result.histograms.values():
        assert histogram.counts.sum() == 2 * 60
    names = [table.name for table in result.tables()]
    assert names[:2] == ["relearn", "relearn_hist_0"]
    assert "relearn_hist_norm_8" in names


def test_relearn_rejects_unknown_order():
    with pytest.raises(ValueError):
        run_relearn_shuffle(NetworkDims(n_in=1, n_bulk=2, n_out=1), SHORT, cycles=0, seed=0, map_order="random")


def test_device_demo_hysteresis():
    """Sub-threshold triangles leave R alone; the negative excursion raises it for good."""
    result = run_device_demo(DEMO_DEVICE, triangle_waveform())
    r = np.array(result.r)
    assert np.all(r[:136] == 75.0)
    assert r[-1] > 75.0
    assert np.all(r[200:] == r[-1])
    assert np.all(np.diff(r) >= 0)


def test_device_demo_zero_waveform():
    result = run_device_demo(DEMO_DEVICE, [0.0] * 50)
    assert set(result.r) == {75.0}
    assert set(result.i) == {0.0}


def test_device_demo_sine_loop_encloses_area():
    result = run_device_demo(DEMO_DEVICE, sine_waveform(amplitude=0.3, samples=200))
    v = np.array(result.v)
    i = np.array(result.i)
    area = 0.5 * abs(np.dot(v, np.roll(i, -1)) - np.dot(i, np.roll(v, -1)))
    assert area > 0
    assert result.tables()[0].header == ("t", "v", "i", "r")


def test_toy_sequence_trace():
    maps = [TargetMap(assignment=(0, 1, 2), n_out=3, label="a"), TargetMap(assignment=(2, 1, 0), n_out=3, label="b")]
    result = run_toy_sequence(3, 60, 3, maps, 50000, seed=9)
    assert all(t is not None for t in result.trace.learned_at)
    table = result.tables()[0]
    assert table.header == ("step", "map", "error")
    assert table.rows[-1][2] == 0


def test_toy_scaling_small():
    result = run_toy_scaling(3, 3, [10, 40], realizations=3, seed=10)
    assert sorted(result.learning_times) == [10, 40]
    runs, medians = result.tables()
    assert len(runs.rows) == 6
    assert [row[0] for row in medians.rows] == [10, 40]


# ---------------------------------------------------------------------------
# Acceptance runs
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_success_scaling_three_by_three():
    spec = SweepSpec(grid=((3, 3, 20), (3, 3, 100), (3, 3, 400)), realizations=100, base_seed=7)
    result = run_success_sweep(spec, threads=4)
    success = [p.success_at_cap for p in result.points]
    assert success[0] <= success[1] + 0.1 and success[1] <= success[2] + 0.1
    assert success[2] >= 0.95


@pytest.mark.slow
def test_success_scaling_four_by_four():
    spec = SweepSpec(grid=((4, 4, 70), (4, 4, 200), (4, 4, 600)), realizations=100, base_seed=11)
    success = [p.success_at_cap for p in run_success_sweep(spec, threads=4).points]
    assert success[0] <= success[1] + 0.1 and success[1] <= success[2] + 0.1
    assert success[2] >= 0.8


@pytest.mark.slow
@pytest.mark.parametrize("grid", [
    ((3, 3, 20), (3, 3, 100), (3, 3, 400)),
    ((4, 4, 70), (4, 4, 200), (4, 4, 600)),
])
def test_bcm_success_grows_with_bulk(grid):
    spec = SweepSpec(model=ModelKind.BCM, grid=grid, realizations=100, base_seed=13)
    success = [p.success_at_cap for p in run_success_sweep(spec, threads=4).points]
    assert success[0] <= success[1] + 0.1 and success[1] <= success[2] + 0.1


@pytest.mark.slow
def test_variants_against_baseline():
    grid = ((4, 4, 200),)
    baseline = run_success_sweep(SweepSpec(grid=grid, realizations=100, base_seed=17), threads=4).points[0]
    polarity = run_variants(SweepSpec(grid=grid, realizations=100, base_seed=17, variant="random-polarity"), threads=4).points[0]
    equal_r = run_variants(SweepSpec(grid=grid, realizations=100, base_seed=17, variant="equal-r-random-vwrite"), threads=4).points[0]

    assert abs(polarity.success_at_cap - baseline.success_at_cap) <= 0.1
    base_half = steps_to_success(baseline, 0.5)
    equal_half = steps_to_success(equal_r, 0.5)
    assert base_half is not None and equal_half is not None
    assert equal_half > base_half
    assert equal_r.success_at_cap >= baseline.success_at_cap - 0.1
    assert equal_r.final_r_std > 0


@pytest.mark.slow
def test_reference_maps_learned_in_sequence():
    """Every map is learned before the next starts, and each switch opens with a mismatch."""
    maps = SEQUENTIAL_REFERENCE_MAPS
    result = run_sequential_maps(NetworkDims(n_in=4, n_bulk=200, n_out=4), maps, TrainerConfig(), seed=37)
    assert all(entry.learned_at is not None for entry in result.schedule)

    for previous, current, entry in zip(maps, maps[1:], result.schedule[1:]):
        assert entry.initial_error == previous.hamming(current) > 0
        first_row = next(row for row in result.rows if row[1] == entry.label)
        assert first_row[0] == entry.start_step

    last_rows = {}
    for row in result.rows:
        last_rows[row[1]] = row
    assert all(row[2] == 0 for row in last_rows.values())


@pytest.mark.slow
def test_perturbation_recovery():
    result = run_perturbation(NetworkDims(n_in=4, n_bulk=200, n_out=4), TrainerConfig(), 100, 0.1, 1.05, seed=19, events=20)
    assert result.learned_at is not None
    assert result.recovery_fraction >= 0.95


@pytest.mark.slow
def test_relearn_cv_approaches_one_third():
    result = run_relearn_shuffle(NetworkDims(n_in=3, n_bulk=400, n_out=3), TrainerConfig(), cycles=10, seed=23, realizations=10, threads=4)
    assert {27, 108, 270}.issubset(result.histograms)
    assert result.final_cv == pytest.approx(1.0 / 3.0, abs=0.10)


@pytest.mark.slow
def test_toy_reference_sequence_and_scaling():
    trace = run_toy_sequence(6, 300, 6, TOY_REFERENCE_MAPS, 200000, seed=29).trace
    assert all(t is not None for t in trace.learned_at)

    scaling = run_toy_scaling(6, 6, [50, 150, 300], realizations=25, seed=31, target=TOY_REFERENCE_MAPS[0])
    medians = [scaling.median(n) for n in (50, 150, 300)]
    assert medians[0] >= medians[1] >= medians[2]
    assert not math.isinf(medians[2])
