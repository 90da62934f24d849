"""
Scenario runners: success sweeps, sequential maps, perturbation recovery, shuffle and
relearn statistics, the single-device demo, construction variants and the toy model.

Independent realizations run in a bounded process pool. Each one draws from its own random
substream keyed by (base seed, grid point, realization), so results do not depend on
scheduling order.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.circuit.network import (
    NetworkDims,
    NetworkState,
    build_network,
    perturb,
    resistance_stats,
    shuffle_devices,
)
from src.experiments.results import (
    DeviceDemoResult,
    MapSchedule,
    PerturbationEvent,
    PerturbationResult,
    RelearnResult,
    SequentialResult,
    SweepPoint,
    SweepResult,
    ToyResult,
    ToyScalingResult,
    pooled_histogram,
)
from src.learning.toy import ToyNetwork, toy_train
from src.learning.trainer import (
    TargetMap,
    TrainerConfig,
    compute_error,
    enumerate_maps,
    maps_from_assignments,
    random_map,
    train_until_learned,
    training_step,
)
from src.memristor.device import DeviceRecord, ModelKind, apply_voltage_substep, resistance_of
from src.utils.config import (
    EQUAL_R_INITIAL,
    EQUAL_R_V_WRITE_RANGE,
    MAX_TRAINING_STEPS,
    TOY_DELTA,
)
from src.utils.seeding import substream_seed

logger = logging.getLogger(__name__)

VARIANTS = ("random-polarity", "equal-r-random-vwrite")

# Six maps for the 6x6 toy network, learned in order a..f
TOY_REFERENCE_MAPS = maps_from_assignments(
    [
        (0, 1, 2, 3, 4, 5),
        (5, 4, 3, 2, 1, 0),
        (1, 2, 3, 4, 5, 0),
        (1, 0, 3, 2, 5, 4),
        (3, 4, 5, 0, 1, 2),
        (2, 2, 4, 4, 0, 0),
    ],
    n_out=6,
)

# Seven maps for the 4x4 memristor network, learned in order a..g
SEQUENTIAL_REFERENCE_MAPS = maps_from_assignments(
    [
        (0, 1, 2, 3),
        (3, 2, 1, 0),
        (1, 0, 3, 2),
        (1, 2, 3, 0),
        (2, 3, 0, 1),
        (0, 0, 1, 1),
        (3, 1, 2, 0),
    ],
    n_out=4,
)


class SweepSpec(BaseModel):
    """Grid of network sizes and realization count for a success sweep."""
    model_config = ConfigDict(frozen=True)

    model: ModelKind = Field(ModelKind.BMS, description="Memristor model")
    grid: Tuple[Tuple[int, int, int], ...] = Field(..., min_length=1, description="(n_in, n_out, n_bulk) points")
    realizations: int = Field(100, ge=1, description="Networks per grid point")
    base_seed: int = Field(0, description="Base seed for all substreams")
    step_cap: int = Field(MAX_TRAINING_STEPS, ge=1, description="Training step cap per realization")
    variant: Optional[str] = Field(None, description="Construction variant, if any")

    @field_validator("grid")
    @classmethod
    def _check_grid(cls, grid):
        for point in grid:
            if min(point) < 1:
                raise ValueError(f"grid point {point} has a non-positive size")
        return grid

    @field_validator("variant")
    @classmethod
    def _check_variant(cls, value):
        if value is not None and value not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{value}'")
        return value


def run_tasks(fn: Callable, tasks: Sequence, threads: int = 1) -> List:
    """Map ``fn`` over ``tasks`` in order, in a process pool when threads > 1."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (threads * 4))))


# ---------------------------------------------------------------------------
# Success sweeps and variants
# ---------------------------------------------------------------------------

def _variant_setup(variant: Optional[str], cfg: TrainerConfig) -> Tuple[Dict, TrainerConfig]:
    if variant == "random-polarity":
        return {"random_polarity": True}, cfg
    if variant == "equal-r-random-vwrite":
        return {"initial_resistance": EQUAL_R_INITIAL}, cfg.model_copy(update={"v_write_range": EQUAL_R_V_WRITE_RANGE})
    return {}, cfg


def _sweep_realization(task: Tuple) -> Tuple[Optional[int], int, float, float, int]:
    dims, kind, cfg, seed, variant = task
    rng = np.random.default_rng(seed)
    build_kwargs, cfg = _variant_setup(variant, cfg)
    net = build_network(dims, kind, rng, seed=seed, **build_kwargs)
    target = random_map(dims.n_in, dims.n_out, rng)
    run = train_until_learned(net, target, cfg, rng)
    resistances = net.resistances()
    return run.learned_at, run.total_corrections, float(resistances.sum()), float((resistances ** 2).sum()), resistances.size


def run_success_sweep(spec: SweepSpec, cfg: Optional[TrainerConfig] = None, threads: int = 1) -> SweepResult:
    """
    Train ``spec.realizations`` fresh networks on fresh random maps at every grid point.

    Args:
        spec: Grid, realization count, seed and step cap
        cfg: Protocol; defaults to the model's standard protocol
        threads: Worker processes

    Returns:
        Success curves per grid point
    """
    cfg = (cfg or TrainerConfig.for_model(spec.model)).model_copy(update={"max_training_steps": spec.step_cap})
    result = SweepResult(name="variants" if spec.variant else "sweep")

    for point_index, (n_in, n_out, n_bulk) in enumerate(spec.grid):
        dims = NetworkDims(n_in=n_in, n_bulk=n_bulk, n_out=n_out)
        point_seed = substream_seed(spec.base_seed, point_index)
        tasks = [
            (dims, spec.model, cfg, substream_seed(point_seed, r), spec.variant)
            for r in range(spec.realizations)
        ]
        logger.info(
            f"Sweep point {n_in}x{n_bulk}x{n_out} ({spec.model.value}"
            f"{', ' + spec.variant if spec.variant else ''}): {spec.realizations} realization(s)"
        )
        outcomes = run_tasks(_sweep_realization, tasks, threads)

        total = sum(o[4] for o in outcomes)
        mean = sum(o[2] for o in outcomes) / total
        variance = max(sum(o[3] for o in outcomes) / total - mean ** 2, 0.0)
        point = SweepPoint(
            n_in=n_in,
            n_out=n_out,
            n_bulk=n_bulk,
            step_cap=spec.step_cap,
            learned_at=[o[0] for o in outcomes],
            corrections=[o[1] for o in outcomes],
            final_r_mean=mean,
            final_r_std=math.sqrt(variance),
        )
        logger.info(f"  success@{spec.step_cap} = {point.success_at_cap:.3f} +/- {point.sem_at_cap:.3f}")
        result.points.append(point)
    return result


def run_variants(spec: SweepSpec, cfg: Optional[TrainerConfig] = None, threads: int = 1) -> SweepResult:
    """Success sweep with one of the construction variants (random polarity, equal R with random V_write)."""
    if spec.variant not in VARIANTS:
        raise ValueError(f"run_variants needs a variant from {VARIANTS}, got {spec.variant!r}")
    return run_success_sweep(spec, cfg, threads)


# ---------------------------------------------------------------------------
# Sequential maps and perturbation
# ---------------------------------------------------------------------------

def run_sequential_maps(
    dims: NetworkDims,
    maps: Sequence[TargetMap],
    cfg: TrainerConfig,
    seed: int,
    model: ModelKind = ModelKind.BMS,
    net: Optional[NetworkState] = None,
) -> SequentialResult:
    """Learn ``maps`` one after another on the same evolving network (fresh unless ``net`` is given)."""
    rng = np.random.default_rng(seed)
    if net is None:
        net = build_network(dims, model, rng, seed=seed)
    result = SequentialResult()
    step = 0
    for index, target in enumerate(maps):
        label = target.label or str(index)
        initial_error = compute_error(net, target, cfg, rng)
        run = train_until_learned(net, target, cfg, rng, start_step=step + 1)
        result.schedule.append(MapSchedule(
            label=label,
            assignment=target.assignment,
            start_step=step + 1,
            initial_error=initial_error,
            learned_at=run.learned_at,
        ))
        for record in run.steps:
            result.rows.append((record.step, label, record.error, record.corrections))
        step += len(run.steps)
        if not run.learned:
            logger.warning(f"Map {label} not learned within {cfg.max_training_steps} steps; moving on")
    return result


def _continue_training(net, target, cfg, rng, steps: int, start: int, trace: List[Tuple[int, int]]) -> Optional[int]:
    """Run ``steps`` more training steps; return the first local step with zero error."""
    first_zero = None
    for local in range(1, steps + 1):
        training_step(net, target, cfg, rng, step=start + local)
        error = compute_error(net, target, cfg, rng)
        trace.append((start + local, error))
        if error == 0 and first_zero is None:
            first_zero = local
    return first_zero


def run_perturbation(
    dims: NetworkDims,
    cfg: TrainerConfig,
    period: int,
    fraction: float,
    factor: float,
    seed: int,
    events: int,
    model: ModelKind = ModelKind.BMS,
) -> PerturbationResult:
    """
    Learn the identity map, then alternate ``period`` steps of training with perturbations.

    After learning, ``period`` steps run before the first event; each event perturbs the
    network and is followed by ``period`` steps in which recovery is looked for.
    """
    if period < 1:
        raise ValueError(f"period must be at least 1, got {period}")
    if dims.n_out < dims.n_in:
        raise ValueError("The identity map needs n_out >= n_in")

    rng = np.random.default_rng(seed)
    net = build_network(dims, model, rng, seed=seed)
    target = TargetMap(assignment=tuple(range(dims.n_in)), n_out=dims.n_out, label="identity")

    run = train_until_learned(net, target, cfg, rng)
    result = PerturbationResult(learned_at=run.learned_at)
    result.trace.extend((record.step, record.error) for record in run.steps)
    if not run.learned:
        logger.warning("Identity map not learned before perturbations start")

    step = len(run.steps)
    _continue_training(net, target, cfg, rng, period, step, result.trace)
    step += period

    for event in range(events):
        count = perturb(net, fraction, factor, rng)
        error_after = compute_error(net, target, cfg, rng)
        recovered = 0 if error_after == 0 else None
        first_zero = _continue_training(net, target, cfg, rng, period, step, result.trace)
        if recovered is None:
            recovered = first_zero
        result.events.append(PerturbationEvent(
            event=event, step=step, perturbed=count, error_after=error_after, steps_to_recover=recovered,
        ))
        logger.debug(f"Event {event} at step {step}: error {error_after}, recovered after {recovered}")
        step += period

    logger.info(f"Perturbation run: {result.recovery_fraction:.0%} of {events} event(s) recovered")
    return result


# ---------------------------------------------------------------------------
# Shuffle and relearn
# ---------------------------------------------------------------------------

def relearn_checkpoints(n_maps: int, cycles: int, passes: Sequence[int] = (1, 4, 10)) -> List[int]:
    """Learned-map counts at which full histograms are kept: fresh, selected passes, final."""
    total = n_maps * (cycles + 1)
    points = {0, total}
    points.update(n_maps * p for p in passes if n_maps * p <= total)
    return sorted(points)


def _relearn_realization(task: Tuple) -> Dict:
    dims, kind, cfg, seed, cycles, map_order, checkpoints = task
    rng = np.random.default_rng(seed)
    net = build_network(dims, kind, rng, seed=seed)
    maps = enumerate_maps(dims.n_in, dims.n_out)

    counts, means, cvs = [0], [], []
    snapshots = {}
    not_learned = 0

    def record(count: int) -> None:
        stats = resistance_stats(net, 5.0)
        means.append(stats.mean)
        cvs.append(stats.cv)
        if count in checkpoints:
            snapshots[count] = net.resistances()

    record(0)
    learned = 0
    for cycle in range(cycles + 1):
        if cycle:
            net = shuffle_devices(net, rng)
        order = rng.permutation(len(maps)) if map_order == "shuffled" else range(len(maps))
        for index in order:
            run = train_until_learned(net, maps[index], cfg, rng)
            not_learned += not run.learned
            learned += 1
            counts.append(learned)
            record(learned)

    return {"counts": counts, "means": means, "cvs": cvs, "snapshots": snapshots, "not_learned": not_learned}


def run_relearn_shuffle(
    dims: NetworkDims,
    cfg: TrainerConfig,
    cycles: int,
    seed: int,
    realizations: int = 1,
    model: ModelKind = ModelKind.BMS,
    map_order: str = "lexicographic",
    bin_width: float = 5.0,
    threads: int = 1,
) -> RelearnResult:
    """
    Learn every map in turn, then ``cycles`` times shuffle the devices and relearn them all.

    Mean resistance and CV are averaged over realizations after every learned map. Raw
    histograms (``bin_width``) and normalized histograms (R over its network's mean, bin 0.05)
    are pooled over realizations at the checkpoints.
    """
    if map_order not in ("lexicographic", "shuffled"):
        raise ValueError(f"Unknown map order: {map_order}")
    n_maps = len(enumerate_maps(dims.n_in, dims.n_out))
    checkpoints = relearn_checkpoints(n_maps, cycles)
    tasks = [
        (dims, model, cfg, substream_seed(seed, r), cycles, map_order, set(checkpoints))
        for r in range(realizations)
    ]
    logger.info(f"Relearn {dims.n_in}x{dims.n_bulk}x{dims.n_out}: {n_maps} maps, {cycles} cycle(s), {realizations} realization(s)")
    outcomes = run_tasks(_relearn_realization, tasks, threads)

    result = RelearnResult(
        maps_learned=outcomes[0]["counts"],
        mean_r=list(np.mean([o["means"] for o in outcomes], axis=0)),
        cv=list(np.mean([o["cvs"] for o in outcomes], axis=0)),
        not_learned=sum(o["not_learned"] for o in outcomes),
    )
    for count in checkpoints:
        raw = [o["snapshots"][count] for o in outcomes]
        result.histograms[count] = pooled_histogram(raw, bin_width)
        result.normalized_histograms[count] = pooled_histogram([values / values.mean() for values in raw], 0.05)

    logger.info(f"Final <CV> = {result.final_cv:.4f} ({result.not_learned} map run(s) not learned)")
    return result


# ---------------------------------------------------------------------------
# Single device
# ---------------------------------------------------------------------------

def _triangle(amplitude: float, samples: int) -> List[float]:
    half = samples // 2
    rise = [amplitude * k / half for k in range(half)]
    return rise + [amplitude * (half - k) / half for k in range(half)]


def triangle_waveform(
    small: float = 0.05,
    large: float = -0.3,
    triangle_samples: int = 40,
    excursion_samples: int = 60,
    gap: int = 5,
) -> List[float]:
    """Three small positive triangles, one large negative excursion, one final small triangle."""
    pause = [0.0] * gap
    waveform: List[float] = []
    for _ in range(3):
        waveform += _triangle(small, triangle_samples) + pause
    waveform += _triangle(large, excursion_samples) + pause
    waveform += _triangle(small, triangle_samples) + [0.0]
    return waveform


def sine_waveform(amplitude: float = 0.3, samples: int = 200, periods: int = 1) -> List[float]:
    """Full sine cycles starting with the negative half-wave."""
    t = np.arange(samples * periods) / samples
    return list(-amplitude * np.sin(2.0 * np.pi * t))


def run_device_demo(dev: DeviceRecord, waveform: Sequence[float], dt: float = 1.0) -> DeviceDemoResult:
    """
    Drive a single memristor directly from the source.

    Each sample records the source voltage, the current V/R and the resistance seen at that
    instant, then advances the device by one substep.
    """
    result = DeviceDemoResult()
    for index, v in enumerate(waveform):
        r = resistance_of(dev)
        result.t.append(index * dt)
        result.v.append(float(v))
        result.i.append(float(v) / r)
        result.r.append(r)
        dev = apply_voltage_substep(dev, float(v), dt)
    return result


# ---------------------------------------------------------------------------
# Toy model
# ---------------------------------------------------------------------------

def run_toy_sequence(
    n_in: int,
    n_mid: int,
    n_out: int,
    maps: Sequence[TargetMap],
    max_steps: int,
    seed: int,
    delta: float = TOY_DELTA,
) -> ToyResult:
    rng = np.random.default_rng(seed)
    tn = ToyNetwork.random(n_in, n_mid, n_out, rng, delta=delta)
    return ToyResult(trace=toy_train(tn, maps, max_steps, rng))


def _toy_learning_time(task: Tuple) -> Optional[int]:
    n_in, n_mid, n_out, target, max_steps, seed, delta = task
    rng = np.random.default_rng(seed)
    tn = ToyNetwork.random(n_in, n_mid, n_out, rng, delta=delta)
    return toy_train(tn, [target], max_steps, rng).learned_at[0]


def run_toy_scaling(
    n_in: int,
    n_out: int,
    mids: Sequence[int],
    realizations: int,
    seed: int,
    target: Optional[TargetMap] = None,
    delta: float = TOY_DELTA,
    max_steps: int = 100000,
    threads: int = 1,
) -> ToyScalingResult:
    """Steps to learn one map (default: identity) for each middle-layer size."""
    target = target or TargetMap(assignment=tuple(range(n_in)), n_out=n_out, label="identity")
    result = ToyScalingResult()
    for point_index, n_mid in enumerate(mids):
        point_seed = substream_seed(seed, point_index)
        tasks = [
            (n_in, n_mid, n_out, target, max_steps, substream_seed(point_seed, r), delta)
            for r in range(realizations)
        ]
        result.learning_times[n_mid] = run_tasks(_toy_learning_time, tasks, threads)
        logger.info(f"Toy n_mid={n_mid}: median learning time {result.median(n_mid)}")
    return result
