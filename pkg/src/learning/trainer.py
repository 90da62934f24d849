"""
Learning by mistakes on a memristor network.

Each training step drives one random input with V_read and finds the output with the
largest current. A wrong answer is punished by applying V_write between that input and the
wrong output, and the read is repeated, up to ``max_corrections`` times. Correct answers
leave the network untouched.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.circuit.network import NetworkState
from src.circuit.solver import SOLVER_METHODS, read_currents, solve
from src.memristor.device import ModelKind
from src.utils.config import (
    BCM_V_READ,
    BCM_V_WRITE,
    BCM_WRITE_DURATION,
    BCM_WRITE_SUBSTEPS,
    BMS_V_READ,
    BMS_V_WRITE,
    BMS_WRITE_DURATION,
    BMS_WRITE_SUBSTEPS,
    MAX_CORRECTIONS,
    MAX_TRAINING_STEPS,
)

logger = logging.getLogger(__name__)

MAP_COUNT_LIMIT = 10 ** 6
TIE_TOLERANCE = 1e-12


class TargetMap(BaseModel):
    """Desired output index for every input index."""
    model_config = ConfigDict(frozen=True)

    assignment: Tuple[int, ...] = Field(..., min_length=1, description="Output index per input")
    n_out: int = Field(..., ge=1, description="Number of output nodes")
    label: str = Field("", description="Optional name used in traces")

    @model_validator(mode="after")
    def _check_range(self) -> "TargetMap":
        bad = [value for value in self.assignment if not 0 <= value < self.n_out]
        if bad:
            raise ValueError(f"assignment values {bad} outside [0, {self.n_out})")
        return self

    @property
    def n_in(self) -> int:
        return len(self.assignment)

    def __getitem__(self, input_idx: int) -> int:
        return self.assignment[input_idx]

    def hamming(self, other: "TargetMap") -> int:
        return sum(a != b for a, b in zip(self.assignment, other.assignment))


class TrainerConfig(BaseModel):
    """Parameters of the read / punish protocol."""
    model_config = ConfigDict(frozen=True)

    v_read: float = Field(BMS_V_READ, description="Read bias (volts)")
    v_write: float = Field(BMS_V_WRITE, description="Punishment bias (volts); negative raises resistance")
    write_substeps: int = Field(BMS_WRITE_SUBSTEPS, ge=1, description="Circuit re-solves per punishment")
    write_duration: float = Field(BMS_WRITE_DURATION, gt=0, description="Total punishment time")
    max_corrections: int = Field(MAX_CORRECTIONS, ge=1, description="Punishments allowed per training step")
    max_training_steps: int = Field(MAX_TRAINING_STEPS, ge=1, description="Training step cap")
    tie_break: str = Field("lowest", description="'lowest' index or seeded 'random' among tied outputs")
    solver: str = Field("dense", description="Nodal solver method")
    v_write_range: Optional[Tuple[float, float]] = Field(
        None, description="If set, each punishment draws |V_write| uniformly from this range (applied negative)"
    )

    @field_validator("tie_break")
    @classmethod
    def _check_tie_break(cls, value: str) -> str:
        if value not in ("lowest", "random"):
            raise ValueError(f"tie_break must be 'lowest' or 'random', got '{value}'")
        return value

    @field_validator("solver")
    @classmethod
    def _check_solver(cls, value: str) -> str:
        if value not in SOLVER_METHODS:
            raise ValueError(f"solver must be one of {SOLVER_METHODS}, got '{value}'")
        return value

    @model_validator(mode="after")
    def _check_voltages(self) -> "TrainerConfig":
        if self.v_read == 0:
            raise ValueError("v_read must be nonzero")
        if abs(self.v_read) >= abs(self.v_write):
            raise ValueError("|v_read| must be smaller than |v_write|")
        if self.v_write_range is not None:
            low, high = self.v_write_range
            if not 0 < low <= high:
                raise ValueError(f"v_write_range must satisfy 0 < low <= high, got {self.v_write_range}")
        return self

    @property
    def dt(self) -> float:
        return self.write_duration / self.write_substeps

    @classmethod
    def for_model(cls, kind: ModelKind, **overrides) -> "TrainerConfig":
        """Standard protocol for a memristor model, with optional overrides."""
        if ModelKind(kind) is ModelKind.BCM:
            base = dict(
                v_read=BCM_V_READ,
                v_write=BCM_V_WRITE,
                write_substeps=BCM_WRITE_SUBSTEPS,
                write_duration=BCM_WRITE_DURATION,
            )
        else:
            base = dict(
                v_read=BMS_V_READ,
                v_write=BMS_V_WRITE,
                write_substeps=BMS_WRITE_SUBSTEPS,
                write_duration=BMS_WRITE_DURATION,
            )
        base.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**base)


@dataclass
class PunishOutcome:
    """Device update counts over all substeps of one punishment."""
    decreased: int = 0
    increased: int = 0
    v_write: float = 0.0


@dataclass
class StepRecord:
    step: int
    input_idx: int
    corrections: int
    resolved: bool
    error: int = -1
    decreased: int = 0
    increased: int = 0


@dataclass
class RunRecord:
    """Trace of one training run."""
    steps: List[StepRecord] = field(default_factory=list)
    learned_at: Optional[int] = None

    @property
    def learned(self) -> bool:
        return self.learned_at is not None

    @property
    def total_corrections(self) -> int:
        return sum(record.corrections for record in self.steps)

    @property
    def total_decreased(self) -> int:
        return sum(record.decreased for record in self.steps)

    @property
    def total_increased(self) -> int:
        return sum(record.increased for record in self.steps)


def read_winner(
    net: NetworkState,
    input_idx: int,
    cfg: TrainerConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[int, np.ndarray]:
    """
    Output with the largest read current.

    Currents within a relative 1e-12 of the maximum count as tied; ties go to the lowest
    index, or to a random tied output when ``cfg.tie_break == "random"``.

    Returns:
        (winner index, currents per output)
    """
    currents = read_currents(net, input_idx, cfg.v_read, method=cfg.solver)
    best = currents.max()
    tied = np.flatnonzero(currents >= best - TIE_TOLERANCE * abs(best))
    if cfg.tie_break == "random" and tied.size > 1:
        if rng is None:
            raise ValueError("Random tie-break requires a random generator")
        return int(rng.choice(tied)), currents
    return int(tied[0]), currents


def write_punish(
    net: NetworkState,
    input_idx: int,
    output_idx: int,
    cfg: TrainerConfig,
    rng: Optional[np.random.Generator] = None,
) -> PunishOutcome:
    """
    Apply V_write between ``input_idx`` and ``output_idx`` (grounded), mutating ``net``.

    Every substep re-solves the circuit at the current resistances and updates all devices
    simultaneously from their voltage drops.
    """
    v_write = cfg.v_write
    if cfg.v_write_range is not None:
        if rng is None:
            raise ValueError("Random write voltage requires a random generator")
        v_write = -rng.uniform(*cfg.v_write_range)

    outcome = PunishOutcome(v_write=v_write)
    dt = cfg.dt
    for _ in range(cfg.write_substeps):
        solution = solve(net, input_idx, output_idx, v_write, method=cfg.solver)
        for table, drops in ((net.layer1, solution.layer1_drops), (net.layer2, solution.layer2_drops)):
            decreased, increased = table.apply_drops(drops, dt)
            outcome.decreased += decreased
            outcome.increased += increased

    if outcome.decreased:
        logger.debug(f"Punishment {input_idx}->{output_idx} lowered {outcome.decreased} device resistance(s)")
    return outcome


def training_step(
    net: NetworkState,
    target: TargetMap,
    cfg: TrainerConfig,
    rng: np.random.Generator,
    step: int = 0,
) -> StepRecord:
    """Pick a random input and punish until it reads correctly or corrections run out."""
    input_idx = int(rng.integers(target.n_in))
    record = StepRecord(step=step, input_idx=input_idx, corrections=0, resolved=False)
    for _ in range(cfg.max_corrections):
        winner, _ = read_winner(net, input_idx, cfg, rng)
        if winner == target[input_idx]:
            record.resolved = True
            break
        outcome = write_punish(net, input_idx, winner, cfg, rng)
        record.corrections += 1
        record.decreased += outcome.decreased
        record.increased += outcome.increased
    else:
        winner, _ = read_winner(net, input_idx, cfg, rng)
        record.resolved = winner == target[input_idx]
    return record


def compute_error(
    net: NetworkState,
    target: TargetMap,
    cfg: TrainerConfig,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """Hamming distance between the current winners and the map."""
    return sum(
        read_winner(net, i, cfg, rng)[0] != target[i]
        for i in range(target.n_in)
    )


def train_until_learned(
    net: NetworkState,
    target: TargetMap,
    cfg: TrainerConfig,
    rng: np.random.Generator,
    start_step: int = 1,
) -> RunRecord:
    """
    Repeat training steps until the error is zero or the step cap is reached.

    ``learned_at`` is the (1-based, local) step at which the error first reached zero.
    ``start_step`` only offsets the step numbers written into the records.
    """
    _check_map(net, target)
    run = RunRecord()
    for local in range(1, cfg.max_training_steps + 1):
        record = training_step(net, target, cfg, rng, step=start_step + local - 1)
        record.error = compute_error(net, target, cfg, rng)
        run.steps.append(record)
        logger.debug(
            f"step {record.step}: input {record.input_idx}, {record.corrections} correction(s), error {record.error}"
        )
        if record.error == 0:
            run.learned_at = local
            break

    if run.total_decreased:
        logger.info(f"{run.total_decreased} device update(s) lowered resistance during punishment")
    if run.learned:
        logger.debug(f"Map {target.assignment} learned after {run.learned_at} step(s)")
    else:
        logger.info(f"Map {target.assignment} not learned within {cfg.max_training_steps} steps")
    return run


def _check_map(net: NetworkState, target: TargetMap) -> None:
    if target.n_in != net.dims.n_in or target.n_out != net.dims.n_out:
        raise ValueError(
            f"Map of shape {target.n_in}->{target.n_out} does not fit network {net.dims.n_in}->{net.dims.n_out}"
        )


def enumerate_maps(n_in: int, n_out: int) -> List[TargetMap]:
    """All n_out ** n_in maps in lexicographic order."""
    if n_in < 1 or n_out < 1:
        raise ValueError("n_in and n_out must be positive")
    if n_out ** n_in > MAP_COUNT_LIMIT:
        raise OverflowError(f"{n_out}^{n_in} maps exceed the enumeration limit of {MAP_COUNT_LIMIT}")
    return [
        TargetMap(assignment=assignment, n_out=n_out)
        for assignment in itertools.product(range(n_out), repeat=n_in)
    ]


def random_map(n_in: int, n_out: int, rng: np.random.Generator) -> TargetMap:
    """Independent uniform output choice for every input."""
    return TargetMap(assignment=tuple(int(k) for k in rng.integers(n_out, size=n_in)), n_out=n_out)


def identity_map(n: int) -> TargetMap:
    return TargetMap(assignment=tuple(range(n)), n_out=n, label="identity")


def parse_map(text: str, n_out: int, label: str = "") -> TargetMap:
    """Build a map from a comma-separated list such as ``"0,2,1"``."""
    try:
        assignment = tuple(int(token) for token in text.replace(" ", "").split(",") if token)
    except ValueError:
        raise ValueError(f"Invalid map '{text}': expected comma-separated integers") from None
    return TargetMap(assignment=assignment, n_out=n_out, label=label)


def maps_from_assignments(assignments: Sequence[Sequence[int]], n_out: int, labels: str = "abcdefghijklmnopqrstuvwxyz") -> List[TargetMap]:
    return [
        TargetMap(assignment=tuple(assignment), n_out=n_out, label=labels[i] if i < len(labels) else str(i))
        for i, assignment in enumerate(assignments)
    ]
