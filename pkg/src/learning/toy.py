"""
Weight-based toy model of learning by mistakes.

Activity follows only the strongest connection at each layer (extremal dynamics); when the
resulting output is wrong, the two weights on the active path are depressed by ``delta``.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.learning.trainer import TargetMap
from src.utils.config import TOY_DELTA

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ToyNetwork:
    """
    ``w1[j, i]`` connects input i to middle node j; ``w2[k, j]`` connects middle j to output k.
    """
    w1: np.ndarray
    w2: np.ndarray
    delta: float = TOY_DELTA

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.w1.shape[0] != self.w2.shape[1]:
            raise ValueError("w1 rows and w2 columns must both index the middle layer")
        if not (np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.w2))):
            raise ValueError("weights must be finite")

    @classmethod
    def random(cls, n_in: int, n_mid: int, n_out: int, rng: np.random.Generator, delta: float = TOY_DELTA) -> "ToyNetwork":
        """Weights drawn i.i.d. from U(0, 1)."""
        if min(n_in, n_mid, n_out) < 1:
            raise ValueError("all layer sizes must be positive")
        return cls(w1=rng.uniform(0.0, 1.0, size=(n_mid, n_in)), w2=rng.uniform(0.0, 1.0, size=(n_out, n_mid)), delta=delta)

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_mid(self) -> int:
        return self.w1.shape[0]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]


@dataclass
class ToyStep:
    input_idx: int
    output_idx: int
    punished: bool


@dataclass
class ToyTrace:
    """Per-step Hamming error and the label of the map being learned."""
    errors: List[int] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)
    learned_at: List[Optional[int]] = field(default_factory=list)


def toy_propagate(tn: ToyNetwork, input_idx: int) -> Tuple[int, int]:
    """Strongest middle node for the input, then strongest output for that node (lowest index on ties)."""
    if not 0 <= input_idx < tn.n_in:
        raise IndexError(f"input index {input_idx} out of range [0, {tn.n_in})")
    j_m = int(np.argmax(tn.w1[:, input_idx]))
    k_m = int(np.argmax(tn.w2[:, j_m]))
    return j_m, k_m


def toy_error(tn: ToyNetwork, target: TargetMap) -> int:
    return sum(toy_propagate(tn, i)[1] != target[i] for i in range(target.n_in))


def toy_step(tn: ToyNetwork, target: TargetMap, rng: np.random.Generator) -> ToyStep:
    """One random input; on a wrong output depress both weights of the active path."""
    input_idx = int(rng.integers(target.n_in))
    j_m, k_m = toy_propagate(tn, input_idx)
    if k_m == target[input_idx]:
        return ToyStep(input_idx=input_idx, output_idx=k_m, punished=False)
    tn.w1[j_m, input_idx] -= tn.delta
    tn.w2[k_m, j_m] -= tn.delta
    return ToyStep(input_idx=input_idx, output_idx=k_m, punished=True)


def toy_train(
    tn: ToyNetwork,
    maps: Sequence[TargetMap],
    max_steps: int,
    rng: np.random.Generator,
) -> ToyTrace:
    """
    Learn ``maps`` one after another on the same weights.

    The error is measured after every step; once it reaches zero the next map becomes
    active. Stops when all maps are learned or after ``max_steps`` steps in total.
    """
    trace = ToyTrace()
    if not maps:
        return trace

    active = 0
    started = 0
    for step in range(1, max_steps + 1):
        target = maps[active]
        toy_step(tn, target, rng)
        error = toy_error(tn, target)
        trace.errors.append(error)
        trace.labels.append(target.label or str(active))
        if error == 0:
            trace.learned_at.append(step - started)
            logger.debug(f"Toy map {target.label or active} learned after {step - started} step(s)")
            active += 1
            started = step
            if active == len(maps):
                break

    trace.learned_at.extend([None] * (len(maps) - len(trace.learned_at)))
    return trace
