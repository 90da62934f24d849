"""
Command-line entry point for the memristor network simulator.

    python -m src.app sweep --nin 3 --nout 3 --nbulk 20,100,400 --reals 100 --seed 7
    python -m src.app train --nin 4 --nbulk 200 --nout 4 --maps reference --plot
    python -m src.app device-demo --plot

Every subcommand writes one or more CSV files (and SVG plots with ``--plot``) into the
output directory. Exit codes: 0 success, 1 runtime fault, 2 usage error.
"""

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.circuit.network import NetworkDims, build_network, load, save
from src.experiments.results import ResultTable, TrainResult
from src.experiments.scenarios import (
    SEQUENTIAL_REFERENCE_MAPS,
    TOY_REFERENCE_MAPS,
    VARIANTS,
    SweepSpec,
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
from src.learning.trainer import TargetMap, TrainerConfig, parse_map, random_map, train_until_learned
from src.memristor.device import BmsParams, DeviceRecord, ModelKind
from src.utils.config import (
    BMS_V_THRESHOLD_RANGE,
    DEFAULT_THREADS,
    MAX_CORRECTIONS,
    MAX_TRAINING_STEPS,
    TOY_DELTA,
    get_output_dir,
    load_config_file,
    set_log_level,
)
from src.utils.errors import ConfigError, MemnetError
from src.utils.export import write_tables

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("device-demo", "train", "sweep", "perturb", "relearn", "variants", "toy")
WAVEFORMS = ("triangles", "sine", "zero")
DIMENSION_KEYS = ("n_in", "n_bulk", "n_out")


def _int_list(value) -> Tuple[int, ...]:
    if isinstance(value, int):
        return (value,)
    if isinstance(value, str):
        try:
            return tuple(int(token) for token in value.replace(" ", "").split(",") if token)
        except ValueError:
            raise ValueError(f"expected a comma-separated list of integers, got '{value}'") from None
    return tuple(value)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


class CliConfig(BaseModel):
    """Everything one CLI invocation needs, after config file and flags are merged."""
    command: str = Field(..., description="Subcommand")

    # Network
    n_in: int = Field(3, ge=1, description="Input nodes")
    n_bulk: Tuple[int, ...] = Field((400,), min_length=1, description="Bulk sizes (several for sweeps)")
    n_out: int = Field(3, ge=1, description="Output nodes")
    model: ModelKind = Field(ModelKind.BMS, description="Memristor model")
    solver: str = Field("dense", description="Nodal solver")

    # Protocol (None keeps the model's defaults)
    v_read: Optional[float] = Field(None, description="Read bias")
    v_write: Optional[float] = Field(None, description="Punishment bias")
    write_substeps: Optional[int] = Field(None, ge=1, description="Substeps per punishment")
    write_duration: Optional[float] = Field(None, gt=0, description="Punishment duration")
    max_corrections: int = Field(MAX_CORRECTIONS, ge=1, description="Punishments allowed per training step")
    max_steps: int = Field(MAX_TRAINING_STEPS, ge=1, description="Training steps before a run counts as not learned")
    tie_break: str = Field("lowest", description="Winner among equal read currents: lowest or random")

    # Run control
    seed: int = Field(0, description="Base seed")
    out_dir: Optional[str] = Field(None, description="Output directory (default MEMNET_OUTPUT_DIR)")
    threads: int = Field(DEFAULT_THREADS, ge=1, description="Worker processes")
    realizations: int = Field(100, ge=1, description="Independent networks per grid point")
    plot: bool = Field(False, description="Also write SVG plots")
    log_level: Optional[str] = Field(None, description="Overrides LOG_LEVEL")

    # train
    maps: Optional[str] = Field(None, description="'reference' or semicolon-separated maps such as '0,1,2;2,1,0'")
    save_net: Optional[str] = Field(None, description="Write the trained network here")
    load_net: Optional[str] = Field(None, description="Start from a saved network")

    # perturb
    period: int = Field(100, ge=1, description="Training steps between perturbations")
    fraction: float = Field(0.1, ge=0.0, le=1.0, description="Share of devices perturbed per event")
    factor: float = Field(1.05, gt=0.0, description="Resistance multiplier per perturbation")
    events: int = Field(20, ge=0, description="Perturbation events")

    # relearn
    cycles: int = Field(10, ge=0, description="Shuffle and relearn cycles")
    map_order: str = Field("lexicographic", description="Order of maps in each pass: lexicographic or shuffled")

    # variants
    variant: str = Field(VARIANTS[0], description="Network construction variant")

    # device-demo
    waveform: str = Field("triangles", description="Drive waveform: triangles, sine or zero")
    beta: float = Field(0.9, gt=0.0, description="Switching rate of the demo device")
    v_threshold: float = Field(0.075, gt=0.0, description="Switching threshold of the demo device")
    r_min: float = Field(75.0, gt=0.0, description="Lower resistance bound (and start) of the demo device")
    r_max: float = Field(5000.0, gt=0.0, description="Upper resistance bound of the demo device")

    # toy
    n_mid: Tuple[int, ...] = Field((300,), min_length=1, description="Toy middle layer size(s)")
    delta: float = Field(TOY_DELTA, gt=0.0, description="Toy weight decrement per mistake")
    toy_max_steps: int = Field(100000, ge=1, description="Toy step cap per map")

    @field_validator("n_bulk", "n_mid", mode="before")
    @classmethod
    def _split_list(cls, value):
        return _int_list(value)

    @field_validator("n_bulk", "n_mid")
    @classmethod
    def _check_sizes(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(size < 1 for size in value):
            raise ValueError(f"sizes must be positive, got {value}")
        return value

    @field_validator("command")
    @classmethod
    def _check_command(cls, value: str) -> str:
        if value not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand '{value}'")
        return value

    @field_validator("tie_break")
    @classmethod
    def _check_tie_break(cls, value: str) -> str:
        if value not in ("lowest", "random"):
            raise ValueError(f"tie_break must be 'lowest' or 'random', got '{value}'")
        return value

    @field_validator("map_order")
    @classmethod
    def _check_map_order(cls, value: str) -> str:
        if value not in ("lexicographic", "shuffled"):
            raise ValueError(f"map_order must be 'lexicographic' or 'shuffled', got '{value}'")
        return value

    @field_validator("variant")
    @classmethod
    def _check_variant(cls, value: str) -> str:
        if value not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{value}'")
        return value

    @field_validator("waveform")
    @classmethod
    def _check_waveform(cls, value: str) -> str:
        if value not in WAVEFORMS:
            raise ValueError(f"waveform must be one of {WAVEFORMS}, got '{value}'")
        return value

    @model_validator(mode="after")
    def _check_combination(self) -> "CliConfig":
        if self.model is ModelKind.BMS and self.v_read is not None and abs(self.v_read) >= BMS_V_THRESHOLD_RANGE[0]:
            raise ValueError(
                f"|v_read| = {abs(self.v_read)} must stay below the smallest BMS threshold {BMS_V_THRESHOLD_RANGE[0]}"
            )
        if self.command == "device-demo" and self.model is not ModelKind.BMS:
            raise ValueError("device-demo drives a BMS device; use --model bms")
        if self.command == "device-demo" and self.r_min >= self.r_max:
            raise ValueError("r_min must be below r_max")
        try:
            self.trainer_config()
        except ValidationError as e:
            raise ValueError(_describe(e)) from None
        return self

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig.for_model(
            self.model,
            v_read=self.v_read,
            v_write=self.v_write,
            write_substeps=self.write_substeps,
            write_duration=self.write_duration,
            max_corrections=self.max_corrections,
            max_training_steps=self.max_steps,
            tie_break=self.tie_break,
            solver=self.solver,
        )

    def dims(self) -> NetworkDims:
        return NetworkDims(n_in=self.n_in, n_bulk=self.n_bulk[0], n_out=self.n_out)

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(
            model=self.model,
            grid=tuple((self.n_in, self.n_out, n_bulk) for n_bulk in self.n_bulk),
            realizations=self.realizations,
            base_seed=self.seed,
            step_cap=self.max_steps,
            variant=self.variant if self.command == "variants" else None,
        )


CONFIG_KEYS = tuple(name for name in CliConfig.model_fields if name != "command")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="Flat key = value file; keys are CliConfig field names")
    common.add_argument("--seed", type=int, help="Base seed")
    common.add_argument("--out", dest="out_dir", help="Output directory")
    common.add_argument("--threads", type=int, help="Worker processes")
    common.add_argument("--model", choices=[kind.value for kind in ModelKind], help="Memristor model")
    common.add_argument("--solver", choices=["dense", "schur"], help="Nodal solver")
    common.add_argument("--vread", dest="v_read", type=float, help="Read bias")
    common.add_argument("--vwrite", dest="v_write", type=float, help="Punishment bias")
    common.add_argument("--substeps", dest="write_substeps", type=int, help="Substeps per punishment")
    common.add_argument("--duration", dest="write_duration", type=float, help="Punishment duration")
    common.add_argument("--max-corrections", dest="max_corrections", type=int)
    common.add_argument("--max-steps", dest="max_steps", type=int, help="Training step cap")
    common.add_argument("--tie-break", dest="tie_break", choices=["lowest", "random"])
    common.add_argument("--plot", action="store_true", help="Also write SVG plots")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    return common


def _add_dimensions(parser: argparse.ArgumentParser, bulk_help: str = "Bulk nodes") -> None:
    parser.add_argument("--nin", dest="n_in", type=int, help="Input nodes")
    parser.add_argument("--nbulk", dest="n_bulk", help=bulk_help)
    parser.add_argument("--nout", dest="n_out", type=int, help="Output nodes")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="python -m src.app",
        description="Learning-by-mistakes simulations on memristor networks",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    demo = sub.add_parser("device-demo", parents=[common], argument_default=argparse.SUPPRESS,
                          help="Drive a single memristor with a voltage waveform")
    demo.add_argument("--waveform", choices=WAVEFORMS)
    demo.add_argument("--beta", type=float)
    demo.add_argument("--vthreshold", dest="v_threshold", type=float)
    demo.add_argument("--rmin", dest="r_min", type=float)
    demo.add_argument("--rmax", dest="r_max", type=float)

    train = sub.add_parser("train", parents=[common], argument_default=argparse.SUPPRESS,
                           help="Train one network on one map or a sequence of maps")
    _add_dimensions(train)
    train.add_argument("--map", dest="maps", help="Target map, e.g. '0,2,1'")
    train.add_argument("--maps", dest="maps", help="'reference' or semicolon-separated maps learned in turn")
    train.add_argument("--save-net", dest="save_net", help="Write the final network state here")
    train.add_argument("--load-net", dest="load_net", help="Start from a saved network state")

    sweep = sub.add_parser("sweep", parents=[common], argument_default=argparse.SUPPRESS,
                           help="Success vs training step over a grid of bulk sizes")
    _add_dimensions(sweep, "Comma-separated bulk sizes")
    sweep.add_argument("--reals", dest="realizations", type=int, help="Realizations per grid point")

    variants = sub.add_parser("variants", parents=[common], argument_default=argparse.SUPPRESS,
                              help="Success sweep with a construction variant")
    _add_dimensions(variants, "Comma-separated bulk sizes")
    variants.add_argument("--reals", dest="realizations", type=int)
    variants.add_argument("--variant", choices=VARIANTS)

    pert = sub.add_parser("perturb", parents=[common], argument_default=argparse.SUPPRESS,
                          help="Robustness of a learned identity map to periodic perturbations")
    _add_dimensions(pert)
    pert.add_argument("--period", type=int, help="Training steps between events")
    pert.add_argument("--fraction", type=float, help="Fraction of devices perturbed per event")
    pert.add_argument("--factor", type=float, help="Resistance multiplier")
    pert.add_argument("--events", type=int, help="Number of perturbation events")

    relearn = sub.add_parser("relearn", parents=[common], argument_default=argparse.SUPPRESS,
                             help="Learn all maps, then shuffle devices and relearn")
    _add_dimensions(relearn)
    relearn.add_argument("--cycles", type=int, help="Shuffle/relearn cycles")
    relearn.add_argument("--reals", dest="realizations", type=int)
    relearn.add_argument("--map-order", dest="map_order", choices=["lexicographic", "shuffled"])

    toy = sub.add_parser("toy", parents=[common], argument_default=argparse.SUPPRESS,
                         help="Weight-based toy model; several --nmid values run a scaling study")
    toy.add_argument("--nin", dest="n_in", type=int)
    toy.add_argument("--nmid", dest="n_mid", help="Middle layer size(s), comma-separated")
    toy.add_argument("--nout", dest="n_out", type=int)
    toy.add_argument("--delta", type=float, help="Weight decrement per mistake")
    toy.add_argument("--reals", dest="realizations", type=int)
    toy.add_argument("--toy-max-steps", dest="toy_max_steps", type=int)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> CliConfig:
    """
    Parse the command line into a CliConfig.

    Flags override values from ``--config``, which override the built-in defaults.
    Usage errors print a message and raise SystemExit(2).
    """
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)

    if args.get("load_net") and any(key in args for key in DIMENSION_KEYS):
        parser.error("--load-net cannot be combined with --nin/--nbulk/--nout")

    values: Dict[str, object] = {}
    if config_path:
        try:
            values.update(load_config_file(config_path, CONFIG_KEYS))
        except ConfigError as e:
            parser.error(str(e))
    values.update(args)
    values["command"] = command

    try:
        return CliConfig(**values)
    except ValidationError as e:
        parser.error(_describe(e))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _device_demo(cfg: CliConfig) -> List[ResultTable]:
    params = BmsParams(beta=cfg.beta, v_threshold=cfg.v_threshold, r_min=cfg.r_min, r_max=cfg.r_max)
    device = DeviceRecord(params=params, state=cfg.r_min)
    if cfg.waveform == "triangles":
        waveform = triangle_waveform()
    elif cfg.waveform == "sine":
        waveform = sine_waveform()
    else:
        waveform = [0.0] * 200
    return run_device_demo(device, waveform).tables()


def _parse_maps(text: str, n_in: int, n_out: int) -> List[TargetMap]:
    if text == "reference":
        if (n_in, n_out) != (4, 4):
            raise ConfigError("The reference map sequence needs a 4x4 network")
        return list(SEQUENTIAL_REFERENCE_MAPS)
    maps = [
        parse_map(chunk, n_out, label=str(index))
        for index, chunk in enumerate(part for part in text.split(";") if part.strip())
    ]
    for target in maps:
        if target.n_in != n_in:
            raise ConfigError(f"Map {target.assignment} has {target.n_in} entries, network has {n_in} inputs")
    return maps


def _train(cfg: CliConfig) -> List[ResultTable]:
    trainer_cfg = cfg.trainer_config()
    rng = np.random.default_rng(cfg.seed)
    if cfg.load_net:
        net = load(cfg.load_net)
        if net.kind is not cfg.model:
            logger.info(f"Loaded network uses the {net.kind.value} model; protocol follows it")
            trainer_cfg = cfg.model_copy(update={"model": net.kind}).trainer_config()
        logger.info(f"Loaded {net.dims.n_in}x{net.dims.n_bulk}x{net.dims.n_out} network from {cfg.load_net}")
    else:
        net = build_network(cfg.dims(), cfg.model, rng, seed=cfg.seed)
    dims = net.dims

    if cfg.maps is None:
        maps = [random_map(dims.n_in, dims.n_out, rng)]
    else:
        maps = _parse_maps(cfg.maps, dims.n_in, dims.n_out)

    if len(maps) == 1:
        run = train_until_learned(net, maps[0], trainer_cfg, rng)
        logger.info(f"Map {maps[0].assignment}: learned at step {run.learned_at}")
        tables = TrainResult(run=run).tables()
    else:
        result = run_sequential_maps(dims, maps, trainer_cfg, cfg.seed, net.kind, net=net)
        tables = result.tables()

    if cfg.save_net:
        save(net, cfg.save_net)
        logger.info(f"Saved network state to {cfg.save_net}")
    return tables


def _sweep(cfg: CliConfig) -> List[ResultTable]:
    return run_success_sweep(cfg.sweep_spec(), cfg.trainer_config(), threads=cfg.threads).tables()


def _variants(cfg: CliConfig) -> List[ResultTable]:
    return run_variants(cfg.sweep_spec(), cfg.trainer_config(), threads=cfg.threads).tables()


def _perturb(cfg: CliConfig) -> List[ResultTable]:
    result = run_perturbation(
        cfg.dims(), cfg.trainer_config(), cfg.period, cfg.fraction, cfg.factor, cfg.seed, cfg.events, cfg.model,
    )
    return result.tables()


def _relearn(cfg: CliConfig) -> List[ResultTable]:
    result = run_relearn_shuffle(
        cfg.dims(),
        cfg.trainer_config(),
        cfg.cycles,
        cfg.seed,
        realizations=cfg.realizations,
        model=cfg.model,
        map_order=cfg.map_order,
        threads=cfg.threads,
    )
    return result.tables()


def _toy(cfg: CliConfig) -> List[ResultTable]:
    if len(cfg.n_mid) > 1:
        result = run_toy_scaling(
            cfg.n_in, cfg.n_out, cfg.n_mid, cfg.realizations, cfg.seed,
            delta=cfg.delta, max_steps=cfg.toy_max_steps, threads=cfg.threads,
        )
        return result.tables()

    if (cfg.n_in, cfg.n_out) == (6, 6):
        maps = list(TOY_REFERENCE_MAPS)
    else:
        rng = np.random.default_rng(cfg.seed)
        maps = [random_map(cfg.n_in, cfg.n_out, rng) for _ in range(len(TOY_REFERENCE_MAPS))]
    result = run_toy_sequence(cfg.n_in, cfg.n_mid[0], cfg.n_out, maps, cfg.toy_max_steps, cfg.seed, cfg.delta)
    return result.tables()


COMMANDS: Dict[str, Callable[[CliConfig], List[ResultTable]]] = {
    "device-demo": _device_demo,
    "train": _train,
    "sweep": _sweep,
    "variants": _variants,
    "perturb": _perturb,
    "relearn": _relearn,
    "toy": _toy,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        cfg = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    if cfg.log_level:
        try:
            set_log_level(cfg.log_level)
        except ConfigError as e:
            logger.error(str(e))
            return 2

    out_dir = get_output_dir(cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Output directory {out_dir} is not writable: {e}")
        return 2

    logger.info(f"Running {cfg.command} (seed {cfg.seed}, output {out_dir})")
    try:
        tables = COMMANDS[cfg.command](cfg)
        written = write_tables(tables, Path(out_dir), plot=cfg.plot)
    except (MemnetError, ValueError, OSError) as e:
        logger.error(f"{cfg.command} failed: {e}")
        return 1
    except Exception as e:
        logger.error(f"Unexpected error in {cfg.command}: {e}")
        logger.debug(traceback.format_exc())
        return 1

    logger.info(f"Wrote {len(written)} file(s) to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
