"""
Device-level physics for the two memristor models.

BMS (bipolar memristive system with threshold) evolves its resistance R directly:
dR/dt = -F(R, V). BCM (boundary condition memristor) evolves a normalized internal
state x = w/D, with R = R_max - x (R_max - R_min).

Every rate function is written once against numpy arrays; the scalar operations on a
single DeviceRecord and the vectorized DeviceTable used by whole crossbar layers share it.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Dict, List, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.utils.config import (
    BCM_A,
    BCM_B,
    BCM_D,
    BCM_MU,
    BCM_R_MAX,
    BCM_R_MIN_RANGE,
    BCM_V_T0,
    BCM_V_T1,
    BCM_V_TH0,
    BCM_V_TH1,
    BMS_BETA_RANGE,
    BMS_R_MAX,
    BMS_R_MIN_RANGE,
    BMS_V_THRESHOLD_RANGE,
)

logger = logging.getLogger(__name__)


class ModelKind(str, Enum):
    """Supported memristor models."""
    BMS = "bms"
    BCM = "bcm"


class BmsParams(BaseModel):
    """Parameters of a threshold (BMS) memristor."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["bms"] = "bms"
    beta: float = Field(..., gt=0, description="Rate coefficient (resistance per volt per time unit)")
    v_threshold: float = Field(..., gt=0, description="Switching threshold in volts")
    r_min: float = Field(..., gt=0, description="Lower resistance bound")
    r_max: float = Field(..., gt=0, description="Upper resistance bound")

    @model_validator(mode="after")
    def _check_bounds(self) -> "BmsParams":
        if not self.r_min < self.r_max:
            raise ValueError(f"r_min ({self.r_min}) must be below r_max ({self.r_max})")
        return self


class BcmParams(BaseModel):
    """Parameters of a boundary condition (BCM) memristor."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["bcm"] = "bcm"
    a: float = Field(BCM_A, gt=0, description="Slow interior rate (dimensionless)")
    b: float = Field(BCM_B, gt=0, description="Fast rate (dimensionless)")
    v_t0: float = Field(BCM_V_T0, ge=0, description="Interior positive threshold in volts")
    v_t1: float = Field(BCM_V_T1, ge=0, description="Interior negative threshold in volts")
    v_th0: float = Field(BCM_V_TH0, ge=0, description="Release threshold at x = 0 in volts")
    v_th1: float = Field(BCM_V_TH1, ge=0, description="Release threshold at x = 1 in volts")
    mu: float = Field(BCM_MU, gt=0, description="Dopant mobility (m^2 V^-1 s^-1)")
    d: float = Field(BCM_D, gt=0, description="Device width (m)")
    r_min: float = Field(..., gt=0, description="Resistance at x = 1")
    r_max: float = Field(BCM_R_MAX, gt=0, description="Resistance at x = 0")

    @model_validator(mode="after")
    def _check_bounds(self) -> "BcmParams":
        if not self.a < self.b:
            raise ValueError(f"a ({self.a}) must be below b ({self.b})")
        if not self.r_min < self.r_max:
            raise ValueError(f"r_min ({self.r_min}) must be below r_max ({self.r_max})")
        return self


DeviceParams = Annotated[Union[BmsParams, BcmParams], Field(discriminator="kind")]


class DeviceRecord(BaseModel):
    """One memristor: parameters, orientation and mutable state."""
    model_config = ConfigDict(frozen=True)

    params: DeviceParams
    polarity: Literal[1, -1] = Field(1, description="Orientation sign applied to the terminal voltage")
    state: float = Field(..., description="Resistance (BMS) or normalized state x in [0, 1] (BCM)")

    @model_validator(mode="after")
    def _check_state(self) -> "DeviceRecord":
        if isinstance(self.params, BmsParams):
            if not self.params.r_min <= self.state <= self.params.r_max:
                raise ValueError(
                    f"resistance {self.state} outside [{self.params.r_min}, {self.params.r_max}]"
                )
        elif not 0.0 <= self.state <= 1.0:
            raise ValueError(f"normalized state {self.state} outside [0, 1]")
        return self

    @property
    def kind(self) -> ModelKind:
        return ModelKind(self.params.kind)


BMS_FIELDS = ("beta", "v_threshold", "r_min", "r_max")
BCM_FIELDS = ("a", "b", "v_t0", "v_t1", "v_th0", "v_th1", "mu", "d", "r_min", "r_max")


def param_fields(kind: ModelKind) -> Tuple[str, ...]:
    """Names of the per-device parameters stored for a model."""
    return BMS_FIELDS if ModelKind(kind) is ModelKind.BMS else BCM_FIELDS


# ---------------------------------------------------------------------------
# Rate kernels (array-valued)
# ---------------------------------------------------------------------------

def bms_rate_array(r, v, beta, v_threshold, r_min, r_max) -> np.ndarray:
    """dR/dt for BMS devices; zero inside the dead zone and at saturated bounds."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    falling = (v > v_threshold) & (r > r_min)
    rising = (v < -v_threshold) & (r < r_max)
    return np.where(
        falling,
        -beta * (v - v_threshold),
        np.where(rising, -beta * (v + v_threshold), 0.0),
    )


def bcm_resistance_array(x, r_min, r_max) -> np.ndarray:
    return r_max - np.asarray(x, dtype=float) * (r_max - r_min)


def bcm_state_array(resistance, r_min, r_max) -> np.ndarray:
    """Inverse of bcm_resistance_array, clamped to [0, 1]."""
    x = (r_max - np.asarray(resistance, dtype=float)) / (r_max - r_min)
    return np.clip(x, 0.0, 1.0)


def bcm_rate_array(x, v, a, b, v_t0, v_t1, v_th0, v_th1, mu, d, r_min, r_max) -> np.ndarray:
    """dx/dt for BCM devices."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    current = v / bcm_resistance_array(x, r_min, r_max)
    interior = np.where((v >= -v_t1) & (v <= v_t0), a, b)
    window = np.where(
        x >= 1.0,
        np.where(v < -v_th1, b, 0.0),
        np.where(x <= 0.0, np.where(v > v_th0, b, 0.0), interior),
    )
    return (mu * r_min / d ** 2) * current * window


def _rate(kind: ModelKind, state, v, params: Dict[str, np.ndarray]) -> np.ndarray:
    if kind is ModelKind.BMS:
        return bms_rate_array(state, v, *(params[name] for name in BMS_FIELDS))
    return bcm_rate_array(state, v, *(params[name] for name in BCM_FIELDS))


def _clamp(kind: ModelKind, state, params: Dict[str, np.ndarray]) -> np.ndarray:
    if kind is ModelKind.BMS:
        return np.clip(state, params["r_min"], params["r_max"])
    return np.clip(state, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Single-device operations
# ---------------------------------------------------------------------------

def bms_rate(r: float, v: float, p: BmsParams) -> float:
    """
    Rate of change of a BMS resistance.

    Args:
        r: Current resistance, within [r_min, r_max]
        v: Voltage across the device
        p: Device parameters

    Returns:
        dR/dt; negative above +V_threshold, positive below -V_threshold, otherwise zero
    """
    assert p.r_min <= r <= p.r_max, f"resistance {r} outside [{p.r_min}, {p.r_max}]"
    return float(bms_rate_array(r, v, p.beta, p.v_threshold, p.r_min, p.r_max))


def bcm_rate(x: float, v: float, p: BcmParams) -> float:
    """Rate of change of the normalized BCM state x (per second)."""
    assert 0.0 <= x <= 1.0, f"normalized state {x} outside [0, 1]"
    return float(
        bcm_rate_array(x, v, *(getattr(p, name) for name in BCM_FIELDS))
    )


def _record_params(dev: DeviceRecord) -> Dict[str, float]:
    return {name: getattr(dev.params, name) for name in param_fields(dev.kind)}


def apply_voltage_substep(dev: DeviceRecord, v_terminal: float, dt: float) -> DeviceRecord:
    """
    Advance one device by one explicit Euler substep.

    The device sees ``polarity * v_terminal``. The result is clamped to the state bounds.
    """
    assert dt > 0, "dt must be positive"
    kind = dev.kind
    params = _record_params(dev)
    v_dev = dev.polarity * v_terminal
    rate = _rate(kind, dev.state, v_dev, params)
    new_state = float(_clamp(kind, dev.state + dt * rate, params))
    return dev.model_copy(update={"state": new_state})


def resistance_of(dev: DeviceRecord) -> float:
    """Resistance of a device in ohms."""
    if dev.kind is ModelKind.BMS:
        return dev.state
    return float(bcm_resistance_array(dev.state, dev.params.r_min, dev.params.r_max))


def sample_bms_params(rng: np.random.Generator) -> DeviceRecord:
    """Draw a BMS device from the uniform population, starting at R = r_min."""
    beta = rng.uniform(*BMS_BETA_RANGE)
    v_threshold = rng.uniform(*BMS_V_THRESHOLD_RANGE)
    r_min = rng.uniform(*BMS_R_MIN_RANGE)
    params = BmsParams(beta=beta, v_threshold=v_threshold, r_min=r_min, r_max=BMS_R_MAX)
    return DeviceRecord(params=params, polarity=1, state=params.r_min)


def sample_bcm_params(rng: np.random.Generator) -> DeviceRecord:
    """Draw a BCM device; only r_min varies. Starts at x = 1 (R = r_min)."""
    params = BcmParams(r_min=rng.uniform(*BCM_R_MIN_RANGE))
    return DeviceRecord(params=params, polarity=1, state=1.0)


SAMPLERS = {
    ModelKind.BMS: sample_bms_params,
    ModelKind.BCM: sample_bcm_params,
}


# ---------------------------------------------------------------------------
# Vectorized table of devices (one crossbar layer)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DeviceTable:
    """
    A rectangular grid of devices of one model, stored column-wise as numpy arrays.

    ``params`` maps every name in ``param_fields(kind)`` to an array of the grid shape.
    """
    kind: ModelKind
    params: Dict[str, np.ndarray]
    polarity: np.ndarray
    state: np.ndarray
    _names: Tuple[str, ...] = field(init=False, repr=False)

    def __post_init__(self):
        self.kind = ModelKind(self.kind)
        self._names = param_fields(self.kind)
        missing = [name for name in self._names if name not in self.params]
        if missing:
            raise ValueError(f"Missing device parameters: {', '.join(missing)}")
        shape = self.state.shape
        for name in self._names:
            if self.params[name].shape != shape:
                raise ValueError(f"Parameter '{name}' has shape {self.params[name].shape}, expected {shape}")
        if self.polarity.shape != shape:
            raise ValueError("Polarity shape does not match state shape")

    @classmethod
    def from_records(cls, records: Sequence[Sequence[DeviceRecord]]) -> "DeviceTable":
        """Pack a row-major grid of records into arrays."""
        rows = len(records)
        cols = len(records[0]) if rows else 0
        flat = [record for row in records for record in row]
        if not flat:
            raise ValueError("A device table needs at least one device")
        kind = flat[0].kind
        if any(record.kind is not kind for record in flat):
            raise ValueError("All devices of a table must use the same model")
        names = param_fields(kind)
        params = {
            name: np.array([getattr(r.params, name) for r in flat], dtype=float).reshape(rows, cols)
            for name in names
        }
        polarity = np.array([r.polarity for r in flat], dtype=np.int8).reshape(rows, cols)
        state = np.array([r.state for r in flat], dtype=float).reshape(rows, cols)
        return cls(kind=kind, params=params, polarity=polarity, state=state)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.state.shape

    @property
    def size(self) -> int:
        return self.state.size

    def record(self, i: int, j: int) -> DeviceRecord:
        """Snapshot of the device at grid position (i, j)."""
        values = {name: float(self.params[name][i, j]) for name in self._names}
        params = BmsParams(**values) if self.kind is ModelKind.BMS else BcmParams(**values)
        return DeviceRecord(params=params, polarity=int(self.polarity[i, j]), state=float(self.state[i, j]))

    def resistance(self) -> np.ndarray:
        if self.kind is ModelKind.BMS:
            return self.state.copy()
        return bcm_resistance_array(self.state, self.params["r_min"], self.params["r_max"])

    def set_resistance(self, resistance: np.ndarray) -> None:
        """Overwrite resistances, clamped into each device's range."""
        r = np.clip(np.asarray(resistance, dtype=float), self.params["r_min"], self.params["r_max"])
        if self.kind is ModelKind.BMS:
            self.state = r
        else:
            self.state = bcm_state_array(r, self.params["r_min"], self.params["r_max"])

    def apply_drops(self, drops: np.ndarray, dt: float) -> Tuple[int, int]:
        """
        One simultaneous Euler substep for every device given its terminal voltage drop.

        Returns:
            (devices whose resistance decreased, devices whose resistance increased)
        """
        assert dt > 0, "dt must be positive"
        before = self.resistance()
        v_dev = self.polarity * drops
        rate = _rate(self.kind, self.state, v_dev, self.params)
        self.state = _clamp(self.kind, self.state + dt * rate, self.params)
        after = self.resistance()
        return int(np.count_nonzero(after < before)), int(np.count_nonzero(after > before))

    def flat_fields(self) -> Dict[str, np.ndarray]:
        """Every per-device column raveled row-major (parameters, polarity, state)."""
        columns = {name: self.params[name].ravel() for name in self._names}
        columns["polarity"] = self.polarity.ravel()
        columns["state"] = self.state.ravel()
        return columns

    @classmethod
    def from_flat(cls, kind: ModelKind, shape: Tuple[int, int], columns: Dict[str, np.ndarray]) -> "DeviceTable":
        names = param_fields(kind)
        return cls(
            kind=kind,
            params={name: np.array(columns[name], dtype=float).reshape(shape) for name in names},
            polarity=np.array(columns["polarity"], dtype=np.int8).reshape(shape),
            state=np.array(columns["state"], dtype=float).reshape(shape),
        )

    def copy(self) -> "DeviceTable":
        return DeviceTable(
            kind=self.kind,
            params={name: values.copy() for name, values in self.params.items()},
            polarity=self.polarity.copy(),
            state=self.state.copy(),
        )

    def equals(self, other: "DeviceTable") -> bool:
        """Bit-exact equality of every field."""
        if self.kind is not other.kind or self.shape != other.shape:
            return False
        if not np.array_equal(self.polarity, other.polarity) or not np.array_equal(self.state, other.state):
            return False
        return all(np.array_equal(self.params[name], other.params[name]) for name in self._names)


def sample_table(kind: ModelKind, shape: Tuple[int, int], rng: np.random.Generator) -> DeviceTable:
    """Sample a grid of devices row-major through the model's sampler."""
    sampler = SAMPLERS[ModelKind(kind)]
    rows, cols = shape
    records: List[List[DeviceRecord]] = [[sampler(rng) for _ in range(cols)] for _ in range(rows)]
    return DeviceTable.from_records(records)
