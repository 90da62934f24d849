"""
CSV and SVG output for result tables.
"""

import csv
import io
import logging
import math
from pathlib import Path
from typing import Any, List, TextIO, Union

import matplotlib
from matplotlib.figure import Figure

from src.experiments.results import ResultTable
from src.utils.errors import MemnetError

logger = logging.getLogger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "memnet"
matplotlib.rcParams["svg.fonttype"] = "none"

Sink = Union[str, Path, TextIO]


def format_value(value: Any) -> str:
    """Render one CSV cell; floats keep 9 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".9g")
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


def table_to_csv(table: ResultTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.header)
    for row in table.rows:
        writer.writerow([format_value(value) for value in row])
    return buffer.getvalue()


def emit_csv(table: ResultTable, sink: Sink) -> None:
    """Write a table as CSV with a header row."""
    text = table_to_csv(table)
    if isinstance(sink, (str, Path)):
        try:
            Path(sink).write_text(text)
        except OSError as e:
            logger.error(f"Failed to write {sink}: {e}")
            raise MemnetError(f"Could not write CSV to {sink}: {e}") from e
        logger.info(f"Wrote {len(table.rows)} row(s) to {sink}")
    else:
        sink.write(text)


def _numeric(values: List[Any]) -> List[float]:
    return [math.nan if value is None else float(value) for value in values]


def build_figure(table: ResultTable) -> Figure:
    """Draw a table: one polyline per group for line/loop plots, bars for histograms."""
    figure = Figure(figsize=(6.0, 4.0))
    axes = figure.add_subplot(1, 1, 1)
    axes.set_title(table.title or table.name)

    if table.plot == "histogram":
        axes.set_xlabel("resistance")
        axes.set_ylabel("count")
        if table.rows:
            lows = _numeric(table.column("bin_low"))
            highs = _numeric(table.column("bin_high"))
            counts = _numeric(table.column("count"))
            axes.bar(lows, counts, width=[h - l for l, h in zip(lows, highs)], align="edge")
        return figure

    axes.set_xlabel(table.x or "")
    axes.set_ylabel(table.y or "")
    if not table.rows or table.x is None or table.y is None:
        return figure

    if table.group is None:
        series = {None: table.rows}
    else:
        series = {}
        key = table.header.index(table.group)
        for row in table.rows:
            series.setdefault(row[key], []).append(row)

    x_index = table.header.index(table.x)
    y_index = table.header.index(table.y)
    for label, rows in series.items():
        xs = _numeric([row[x_index] for row in rows])
        ys = _numeric([row[y_index] for row in rows])
        axes.plot(xs, ys, label=None if label is None else f"{table.group}={label}")
    if table.group is not None:
        axes.legend()
    return figure


def emit_svg(table: ResultTable, sink: Sink) -> None:
    """Render a table as a deterministic SVG."""
    figure = build_figure(table)
    buffer = io.StringIO()
    figure.savefig(buffer, format="svg", metadata={"Date": None})
    text = buffer.getvalue()
    if isinstance(sink, (str, Path)):
        try:
            Path(sink).write_text(text)
        except OSError as e:
            logger.error(f"Failed to write {sink}: {e}")
            raise MemnetError(f"Could not write SVG to {sink}: {e}") from e
        logger.info(f"Wrote plot {sink}")
    else:
        sink.write(text)


def write_tables(tables: List[ResultTable], out_dir: Path, plot: bool = False) -> List[Path]:
    """Write every table as ``<name>.csv`` (and ``<name>.svg`` for plottable ones)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for table in tables:
        path = out_dir / f"{table.name}.csv"
        emit_csv(table, path)
        written.append(path)
        if plot and table.plot != "none":
            svg_path = out_dir / f"{table.name}.svg"
            emit_svg(table, svg_path)
            written.append(svg_path)
    return written
