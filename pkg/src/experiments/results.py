"""
Result containers for the scenario runners.

Every result exposes ``tables()``: the rows written to CSV. Plots are drawn from the same
tables, so an SVG never shows anything the CSV does not hold.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.circuit.network import histogram_from_values
from src.learning.toy import ToyTrace
from src.learning.trainer import RunRecord


@dataclass
class ResultTable:
    """
    One CSV file worth of rows plus hints for plotting it.

    ``plot`` is one of "line", "histogram", "loop" or "none"; ``group`` splits rows into one
    series per distinct value.
    """
    name: str
    header: Tuple[str, ...]
    rows: List[Tuple[Any, ...]] = field(default_factory=list)
    plot: str = "line"
    x: Optional[str] = None
    y: Optional[str] = None
    group: Optional[str] = None
    title: str = ""

    def column(self, name: str) -> List[Any]:
        index = self.header.index(name)
        return [row[index] for row in self.rows]


def binomial_sem(p: np.ndarray, n: int) -> np.ndarray:
    """Standard error of a success fraction over n trials."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(p * (1.0 - p) / n)


@dataclass
class SweepPoint:
    """All realizations at one (n_in, n_out, n_bulk) grid point."""
    n_in: int
    n_out: int
    n_bulk: int
    step_cap: int
    learned_at: List[Optional[int]]
    corrections: List[int]
    final_r_mean: float = math.nan
    final_r_std: float = math.nan

    @property
    def realizations(self) -> int:
        return len(self.learned_at)

    @property
    def curve(self) -> np.ndarray:
        """Fraction of realizations learned at or before each step 1..step_cap."""
        steps = np.arange(1, self.step_cap + 1)
        learned = np.array([s for s in self.learned_at if s is not None], dtype=int)
        counts = np.searchsorted(np.sort(learned), steps, side="right")
        return counts / self.realizations

    @property
    def sem(self) -> np.ndarray:
        return binomial_sem(self.curve, self.realizations)

    @property
    def success_at_cap(self) -> float:
        return float(self.curve[-1])

    @property
    def sem_at_cap(self) -> float:
        return float(self.sem[-1])


def steps_to_success(point: SweepPoint, level: float) -> Optional[int]:
    """First step at which the success fraction reaches ``level`` (None if never)."""
    reached = np.flatnonzero(point.curve >= level)
    return int(reached[0]) + 1 if reached.size else None


@dataclass
class SweepResult:
    points: List[SweepPoint] = field(default_factory=list)
    name: str = "sweep"

    def point(self, n_bulk: int, n_in: Optional[int] = None) -> SweepPoint:
        for candidate in self.points:
            if candidate.n_bulk == n_bulk and (n_in is None or candidate.n_in == n_in):
                return candidate
        raise KeyError(f"No grid point with n_bulk={n_bulk}")

    def tables(self) -> List[ResultTable]:
        curves = ResultTable(
            name=self.name,
            header=("n_in", "n_out", "n_bulk", "step", "success", "sem"),
            x="step",
            y="success",
            group="n_bulk",
            title="Success vs training step",
        )
        runs = ResultTable(
            name=f"{self.name}_realizations",
            header=("n_in", "n_out", "n_bulk", "realization", "learned_at", "corrections"),
            plot="none",
        )
        for point in self.points:
            for step, (success, sem) in enumerate(zip(point.curve, point.sem), start=1):
                curves.rows.append((point.n_in, point.n_out, point.n_bulk, step, float(success), float(sem)))
            for index, (learned_at, corrections) in enumerate(zip(point.learned_at, point.corrections)):
                runs.rows.append((point.n_in, point.n_out, point.n_bulk, index, learned_at, corrections))
        return [curves, runs]


@dataclass
class TrainResult:
    """A single training run on one map."""
    run: RunRecord

    def tables(self) -> List[ResultTable]:
        table = ResultTable(
            name="train",
            header=("step", "input", "corrections", "resolved", "error"),
            x="step",
            y="error",
            title="Training error",
        )
        for record in self.run.steps:
            table.rows.append((record.step, record.input_idx, record.corrections, record.resolved, record.error))
        return [table]


@dataclass
class MapSchedule:
    label: str
    assignment: Tuple[int, ...]
    start_step: int
    learned_at: Optional[int]
    initial_error: int = 0


@dataclass
class SequentialResult:
    """Error trace of successive maps on one evolving network."""
    rows: List[Tuple[int, str, int, int]] = field(default_factory=list)
    schedule: List[MapSchedule] = field(default_factory=list)

    def tables(self) -> List[ResultTable]:
        trace = ResultTable(
            name="sequential",
            header=("step", "map", "error", "corrections"),
            rows=list(self.rows),
            x="step",
            y="error",
            title="Sequential map learning",
        )
        schedule = ResultTable(
            name="sequential_schedule",
            header=("map", "assignment", "start_step", "initial_error", "learned_at"),
            rows=[
                (entry.label, " ".join(str(k) for k in entry.assignment), entry.start_step, entry.initial_error, entry.learned_at)
                for entry in self.schedule
            ],
            plot="none",
        )
        return [trace, schedule]


@dataclass
class PerturbationEvent:
    event: int
    step: int
    perturbed: int
    error_after: int
    steps_to_recover: Optional[int]

    @property
    def recovered(self) -> bool:
        return self.steps_to_recover is not None


@dataclass
class PerturbationResult:
    learned_at: Optional[int]
    trace: List[Tuple[int, int]] = field(default_factory=list)
    events: List[PerturbationEvent] = field(default_factory=list)

    @property
    def recovery_fraction(self) -> float:
        if not self.events:
            return 1.0
        return sum(event.recovered for event in self.events) / len(self.events)

    def tables(self) -> List[ResultTable]:
        trace = ResultTable(
            name="perturb_trace",
            header=("step", "error"),
            rows=list(self.trace),
            x="step",
            y="error",
            title="Error under periodic perturbation",
        )
        events = ResultTable(
            name="perturb_events",
            header=("event", "step", "perturbed", "error_after", "recovered", "steps_to_recover"),
            rows=[
                (e.event, e.step, e.perturbed, e.error_after, e.recovered, e.steps_to_recover)
                for e in self.events
            ],
            plot="none",
        )
        return [trace, events]


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def rows(self) -> List[Tuple[float, float, int]]:
        return [
            (float(low), float(high), int(count))
            for low, high, count in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts)
        ]


@dataclass
class RelearnResult:
    """Realization-averaged resistance statistics along the learned-maps axis."""
    maps_learned: List[int] = field(default_factory=list)
    mean_r: List[float] = field(default_factory=list)
    cv: List[float] = field(default_factory=list)
    histograms: Dict[int, Histogram] = field(default_factory=dict)
    normalized_histograms: Dict[int, Histogram] = field(default_factory=dict)
    not_learned: int = 0

    @property
    def final_cv(self) -> float:
        return self.cv[-1]

    def tables(self) -> List[ResultTable]:
        tables = [
            ResultTable(
                name="relearn",
                header=("maps_learned", "mean_r", "cv"),
                rows=list(zip(self.maps_learned, self.mean_r, self.cv)),
                x="maps_learned",
                y="cv",
                title="Coefficient of variation vs learned maps",
            )
        ]
        for count, histogram in sorted(self.histograms.items()):
            tables.append(ResultTable(
                name=f"relearn_hist_{count}",
                header=("bin_low", "bin_high", "count"),
                rows=histogram.rows(),
                plot="histogram",
                title=f"Resistance histogram after {count} maps",
            ))
        for count, histogram in sorted(self.normalized_histograms.items()):
            tables.append(ResultTable(
                name=f"relearn_hist_norm_{count}",
                header=("bin_low", "bin_high", "count"),
                rows=histogram.rows(),
                plot="histogram",
                title=f"Normalized resistance histogram after {count} maps",
            ))
        return tables


@dataclass
class DeviceDemoResult:
    t: List[float] = field(default_factory=list)
    v: List[float] = field(default_factory=list)
    i: List[float] = field(default_factory=list)
    r: List[float] = field(default_factory=list)

    def tables(self) -> List[ResultTable]:
        series = ResultTable(
            name="device_demo",
            header=("t", "v", "i", "r"),
            rows=list(zip(self.t, self.v, self.i, self.r)),
            plot="loop",
            x="v",
            y="i",
            title="I-V characteristic",
        )
        return [series]


@dataclass
class ToyResult:
    trace: ToyTrace

    def tables(self) -> List[ResultTable]:
        return [ResultTable(
            name="toy_trace",
            header=("step", "map", "error"),
            rows=[
                (step, label, error)
                for step, (label, error) in enumerate(zip(self.trace.labels, self.trace.errors), start=1)
            ],
            x="step",
            y="error",
            title="Toy model error",
        )]


@dataclass
class ToyScalingResult:
    learning_times: Dict[int, List[Optional[int]]] = field(default_factory=dict)

    def median(self, n_mid: int) -> float:
        """Median learning time; unlearned runs count as infinitely slow."""
        times = [math.inf if t is None else t for t in self.learning_times[n_mid]]
        return float(np.median(times))

    def tables(self) -> List[ResultTable]:
        runs = ResultTable(
            name="toy_scaling",
            header=("n_mid", "realization", "learning_time"),
            plot="none",
        )
        medians = ResultTable(
            name="toy_scaling_median",
            header=("n_mid", "median_learning_time"),
            x="n_mid",
            y="median_learning_time",
            title="Toy learning time vs middle layer size",
        )
        for n_mid in sorted(self.learning_times):
            for index, time in enumerate(self.learning_times[n_mid]):
                runs.rows.append((n_mid, index, time))
            medians.rows.append((n_mid, self.median(n_mid)))
        return [runs, medians]


def pooled_histogram(values: Sequence[np.ndarray], bin_width: float) -> Histogram:
    edges, counts = histogram_from_values(np.concatenate(list(values)), bin_width)
    return Histogram(bin_edges=edges, counts=counts)
