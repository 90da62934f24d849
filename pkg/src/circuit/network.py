"""
Three-layer memristive network: two fully connected crossbars
(input -> bulk, bulk -> output) sharing the bulk nodes.
"""

import hashlib
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.memristor.device import (
    BcmParams,
    BmsParams,
    DeviceRecord,
    DeviceTable,
    ModelKind,
    param_fields,
    sample_table,
)
from src.utils.errors import NetworkFormatError

logger = logging.getLogger(__name__)

FORMAT_MAGIC = "memnet-network"
FORMAT_VERSION = 1
LAYER_NAMES = ("layer1", "layer2")


class NetworkDims(BaseModel):
    """Layer sizes of the network."""
    model_config = ConfigDict(frozen=True)

    n_in: int = Field(..., ge=1, description="Number of input nodes")
    n_bulk: int = Field(..., ge=1, description="Number of bulk (middle) nodes")
    n_out: int = Field(..., ge=1, description="Number of output nodes")

    @property
    def n_devices(self) -> int:
        return self.n_in * self.n_bulk + self.n_bulk * self.n_out

    @property
    def n_nodes(self) -> int:
        return self.n_in + self.n_bulk + self.n_out


@dataclass(eq=False)
class NetworkState:
    """Dimensions plus the two device tables; ``seed`` records construction provenance."""
    dims: NetworkDims
    layer1: DeviceTable
    layer2: DeviceTable
    seed: Optional[int] = None

    def __post_init__(self):
        if self.layer1.shape != (self.dims.n_in, self.dims.n_bulk):
            raise ValueError(f"layer1 shape {self.layer1.shape} does not match {self.dims}")
        if self.layer2.shape != (self.dims.n_bulk, self.dims.n_out):
            raise ValueError(f"layer2 shape {self.layer2.shape} does not match {self.dims}")
        if self.layer1.kind is not self.layer2.kind:
            raise ValueError("Both layers must use the same memristor model")

    @property
    def kind(self) -> ModelKind:
        return self.layer1.kind

    @property
    def n_devices(self) -> int:
        return self.layer1.size + self.layer2.size

    def resistances(self) -> np.ndarray:
        """All resistances, layer 1 row-major followed by layer 2 row-major."""
        return np.concatenate([self.layer1.resistance().ravel(), self.layer2.resistance().ravel()])

    def min_threshold(self) -> float:
        """Smallest BMS switching threshold in the network (infinite for BCM)."""
        if self.kind is not ModelKind.BMS:
            return math.inf
        return float(min(self.layer1.params["v_threshold"].min(), self.layer2.params["v_threshold"].min()))

    def state_hash(self) -> str:
        """Digest of the mutable device state of both layers."""
        digest = hashlib.sha256()
        for table in (self.layer1, self.layer2):
            digest.update(np.ascontiguousarray(table.state).tobytes())
            digest.update(np.ascontiguousarray(table.polarity).tobytes())
        return digest.hexdigest()

    def copy(self) -> "NetworkState":
        return NetworkState(dims=self.dims, layer1=self.layer1.copy(), layer2=self.layer2.copy(), seed=self.seed)

    def equals(self, other: "NetworkState") -> bool:
        return (
            self.dims == other.dims
            and self.seed == other.seed
            and self.layer1.equals(other.layer1)
            and self.layer2.equals(other.layer2)
        )


def build_network(
    dims: NetworkDims,
    model_kind: Union[ModelKind, str],
    rng: np.random.Generator,
    random_polarity: bool = False,
    initial_resistance: Optional[float] = None,
    seed: Optional[int] = None,
) -> NetworkState:
    """
    Sample a fresh network.

    Args:
        dims: Layer sizes
        model_kind: Memristor model for every device
        rng: Random generator; layer 1 is sampled row-major first, then layer 2
        random_polarity: Draw each device's polarity as +1/-1 with probability 1/2
        initial_resistance: Start every device at this resistance instead of r_min
        seed: Provenance recorded in the state (not used for sampling)

    Returns:
        The new network
    """
    kind = ModelKind(model_kind)
    layer1 = sample_table(kind, (dims.n_in, dims.n_bulk), rng)
    layer2 = sample_table(kind, (dims.n_bulk, dims.n_out), rng)

    if random_polarity:
        for table in (layer1, layer2):
            table.polarity = rng.choice(np.array([-1, 1], dtype=np.int8), size=table.shape)
    if initial_resistance is not None:
        for table in (layer1, layer2):
            table.set_resistance(np.full(table.shape, float(initial_resistance)))

    net = NetworkState(dims=dims, layer1=layer1, layer2=layer2, seed=seed)
    logger.debug(f"Built {kind.value} network {dims.n_in}x{dims.n_bulk}x{dims.n_out} ({net.n_devices} devices)")
    return net


def perturb(net: NetworkState, fraction: float, factor: float, rng: np.random.Generator) -> int:
    """
    Multiply the resistance of a random subset of devices by ``factor``.

    Exactly floor(fraction * total) devices are chosen without replacement across both
    layers; parameters stay with their slot and the new resistance is clamped.

    Returns:
        Number of devices perturbed
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be within [0, 1], got {fraction}")
    if factor <= 0:
        raise ValueError(f"factor must be positive, got {factor}")

    total = net.n_devices
    count = int(math.floor(round(fraction * total, 9)))
    if count == 0:
        return 0

    chosen = rng.choice(total, size=count, replace=False)
    offset = 0
    for table in (net.layer1, net.layer2):
        local = chosen[(chosen >= offset) & (chosen < offset + table.size)] - offset
        if local.size:
            resistance = table.resistance().ravel()
            resistance[local] *= factor
            table.set_resistance(resistance.reshape(table.shape))
        offset += table.size

    logger.debug(f"Perturbed {count} of {total} devices by factor {factor}")
    return count


def shuffle_devices(net: NetworkState, rng: np.random.Generator, scope: str = "global") -> NetworkState:
    """
    Randomly permute whole device records over the edge slots.

    Args:
        net: Source network (left untouched)
        rng: Random generator
        scope: "global" permutes across both layers, "layer" within each layer

    Returns:
        The shuffled network
    """
    if scope not in ("global", "layer"):
        raise ValueError(f"Unknown shuffle scope: {scope}")

    if scope == "layer":
        tables = []
        for table in (net.layer1, net.layer2):
            columns = table.flat_fields()
            order = rng.permutation(table.size)
            tables.append(DeviceTable.from_flat(table.kind, table.shape, {k: v[order] for k, v in columns.items()}))
        return NetworkState(dims=net.dims, layer1=tables[0], layer2=tables[1], seed=net.seed)

    first = net.layer1.flat_fields()
    second = net.layer2.flat_fields()
    merged = {name: np.concatenate([first[name], second[name]]) for name in first}
    order = rng.permutation(net.n_devices)
    merged = {name: values[order] for name, values in merged.items()}

    split = net.layer1.size
    layer1 = DeviceTable.from_flat(net.kind, net.layer1.shape, {k: v[:split] for k, v in merged.items()})
    layer2 = DeviceTable.from_flat(net.kind, net.layer2.shape, {k: v[split:] for k, v in merged.items()})
    return NetworkState(dims=net.dims, layer1=layer1, layer2=layer2, seed=net.seed)


@dataclass(frozen=True, eq=False)
class ResistanceStats:
    """Summary of a resistance population; histogram lower edge is the observed minimum."""
    mean: float
    std: float
    cv: float
    bin_edges: np.ndarray
    counts: np.ndarray


def histogram_from_values(values: np.ndarray, bin_width: float) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-width histogram starting at min(values)."""
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    values = np.asarray(values, dtype=float)
    low = float(values.min())
    n_bins = int(math.floor((float(values.max()) - low) / bin_width)) + 1
    edges = low + bin_width * np.arange(n_bins + 1)
    index = np.minimum(((values - low) / bin_width).astype(int), n_bins - 1)
    counts = np.bincount(index, minlength=n_bins)
    return edges, counts


def stats_from_values(values: np.ndarray, bin_width: float) -> ResistanceStats:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    std = float(values.std())
    edges, counts = histogram_from_values(values, bin_width)
    return ResistanceStats(mean=mean, std=std, cv=std / mean, bin_edges=edges, counts=counts)


def resistance_stats(net: NetworkState, bin_width: float) -> ResistanceStats:
    """Mean, population std, coefficient of variation and histogram of all resistances."""
    return stats_from_values(net.resistances(), bin_width)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _format_float(value: float) -> str:
    return repr(float(value))


def save(net: NetworkState, sink: Union[str, Path, TextIO]) -> None:
    """Write the network in the versioned plain-text format."""
    lines = [
        f"{FORMAT_MAGIC} {FORMAT_VERSION}",
        f"dims {net.dims.n_in} {net.dims.n_bulk} {net.dims.n_out}",
        f"model {net.kind.value}",
        f"seed {'none' if net.seed is None else net.seed}",
        f"devices {net.n_devices}",
    ]
    names = param_fields(net.kind)
    for layer_name, table in zip(LAYER_NAMES, (net.layer1, net.layer2)):
        rows, cols = table.shape
        for i in range(rows):
            for j in range(cols):
                fields = " ".join(f"{name}={_format_float(table.params[name][i, j])}" for name in names)
                lines.append(
                    f"{layer_name} {i} {j} {net.kind.value} {fields} "
                    f"polarity={int(table.polarity[i, j])} state={_format_float(table.state[i, j])}"
                )
    lines.append("end")
    text = "\n".join(lines) + "\n"

    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
        logger.info(f"Saved network ({net.n_devices} devices) to {sink}")
    else:
        sink.write(text)


def _header_value(lines: List[Tuple[int, str]], position: int, keyword: str) -> Tuple[int, List[str]]:
    if position >= len(lines):
        raise NetworkFormatError(f"Truncated file: missing '{keyword}' section", line=position + 1)
    number, text = lines[position]
    parts = text.split()
    if not parts or parts[0] != keyword:
        raise NetworkFormatError(f"Expected '{keyword}' section", line=number, field=keyword)
    return number, parts[1:]


def _parse_int(token: str, number: int, field: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise NetworkFormatError(f"Invalid integer '{token}'", line=number, field=field) from None


def _parse_device(number: int, parts: List[str], kind: ModelKind) -> Tuple[str, int, int, DeviceRecord]:
    if len(parts) < 4:
        raise NetworkFormatError("Incomplete device line", line=number)
    layer_name, i_token, j_token, tag = parts[:4]
    if layer_name not in LAYER_NAMES:
        raise NetworkFormatError(f"Unknown layer '{layer_name}'", line=number, field="layer")
    if tag != kind.value:
        raise NetworkFormatError(f"Device model '{tag}' differs from network model '{kind.value}'", line=number, field="model")

    values: Dict[str, str] = {}
    for token in parts[4:]:
        key, sep, value = token.partition("=")
        if not sep:
            raise NetworkFormatError(f"Malformed field '{token}'", line=number)
        values[key] = value

    expected = param_fields(kind) + ("polarity", "state")
    for name in expected:
        if name not in values:
            raise NetworkFormatError("Missing device field", line=number, field=name)
    extra = sorted(set(values) - set(expected))
    if extra:
        raise NetworkFormatError("Unexpected device field", line=number, field=extra[0])

    numbers: Dict[str, float] = {}
    for name in expected:
        try:
            numbers[name] = float(values[name])
        except ValueError:
            raise NetworkFormatError(f"Invalid number '{values[name]}'", line=number, field=name) from None

    try:
        params_cls = BmsParams if kind is ModelKind.BMS else BcmParams
        params = params_cls(**{name: numbers[name] for name in param_fields(kind)})
        record = DeviceRecord(params=params, polarity=int(numbers["polarity"]), state=numbers["state"])
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or "state"
        raise NetworkFormatError(f"Invariant violation: {first.get('msg')}", line=number, field=field) from None

    return layer_name, _parse_int(i_token, number, "i"), _parse_int(j_token, number, "j"), record


def load(source: Union[str, Path, TextIO]) -> NetworkState:
    """
    Read a network written by :func:`save`.

    Raises:
        NetworkFormatError: malformed content, version mismatch or invariant violation
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()

    lines = [(n, line.strip()) for n, line in enumerate(io.StringIO(text), start=1) if line.strip()]
    if not lines:
        raise NetworkFormatError("Empty file: missing header", line=1)

    number, header = lines[0]
    parts = header.split()
    if len(parts) != 2 or parts[0] != FORMAT_MAGIC:
        raise NetworkFormatError("Missing network file header", line=number)
    version = _parse_int(parts[1], number, "version")
    if version != FORMAT_VERSION:
        raise NetworkFormatError(f"Unsupported format version {version} (expected {FORMAT_VERSION})", line=number, field="version")

    number, values = _header_value(lines, 1, "dims")
    if len(values) != 3:
        raise NetworkFormatError("dims needs three values", line=number, field="dims")
    try:
        dims = NetworkDims(
            n_in=_parse_int(values[0], number, "dims"),
            n_bulk=_parse_int(values[1], number, "dims"),
            n_out=_parse_int(values[2], number, "dims"),
        )
    except ValidationError:
        raise NetworkFormatError("Dimensions must be positive", line=number, field="dims") from None

    number, values = _header_value(lines, 2, "model")
    try:
        kind = ModelKind(values[0] if values else "")
    except ValueError:
        raise NetworkFormatError("Unknown model", line=number, field="model") from None

    number, values = _header_value(lines, 3, "seed")
    seed = None if not values or values[0] == "none" else _parse_int(values[0], number, "seed")

    number, values = _header_value(lines, 4, "devices")
    count = _parse_int(values[0] if values else "", number, "devices")
    if count != dims.n_devices:
        raise NetworkFormatError(f"Device count {count} does not match dims ({dims.n_devices})", line=number, field="devices")

    grids = {
        "layer1": [[None] * dims.n_bulk for _ in range(dims.n_in)],
        "layer2": [[None] * dims.n_out for _ in range(dims.n_bulk)],
    }
    body = lines[5:]
    if not body or body[-1][1] != "end":
        raise NetworkFormatError("Truncated file: missing 'end' section", line=lines[-1][0] + 1)
    device_lines = body[:-1]
    if len(device_lines) != count:
        raise NetworkFormatError(f"Expected {count} device lines, found {len(device_lines)}", line=body[-1][0], field="devices")

    for number, text in device_lines:
        layer_name, i, j, record = _parse_device(number, text.split(), kind)
        grid = grids[layer_name]
        if not (0 <= i < len(grid) and 0 <= j < len(grid[0])):
            raise NetworkFormatError(f"Index ({i}, {j}) out of range", line=number, field="index")
        if grid[i][j] is not None:
            raise NetworkFormatError(f"Duplicate device ({i}, {j})", line=number, field="index")
        grid[i][j] = record

    net = NetworkState(
        dims=dims,
        layer1=DeviceTable.from_records(grids["layer1"]),
        layer2=DeviceTable.from_records(grids["layer2"]),
        seed=seed,
    )
    logger.debug(f"Loaded network with {net.n_devices} devices")
    return net
