"""
DC nodal analysis of the two-crossbar network.

One input node is held at the applied bias and one output node is grounded; every other
input, bulk and output node floats. Node ordering is [inputs | bulk | outputs].
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.circuit.network import NetworkState
from src.memristor.device import ModelKind
from src.utils.errors import SolverError

logger = logging.getLogger(__name__)

SOLVER_METHODS = ("dense", "schur")


@dataclass(frozen=True, eq=False)
class CircuitSolution:
    """
    Result of one DC solve.

    ``layer1_drops[i, j] = v_in[i] - v_bulk[j]`` and ``layer2_drops[j, k] = v_bulk[j] - v_out[k]``.
    """
    n_in: int
    n_bulk: int
    node_voltages: np.ndarray
    layer1_drops: np.ndarray
    layer2_drops: np.ndarray
    terminal_current: float
    source_current: float
    kcl_residual: float

    @property
    def input_voltages(self) -> np.ndarray:
        return self.node_voltages[: self.n_in]

    @property
    def bulk_voltages(self) -> np.ndarray:
        return self.node_voltages[self.n_in: self.n_in + self.n_bulk]

    @property
    def output_voltages(self) -> np.ndarray:
        return self.node_voltages[self.n_in + self.n_bulk:]

    @property
    def device_drops(self) -> np.ndarray:
        return np.concatenate([self.layer1_drops.ravel(), self.layer2_drops.ravel()])


def _conductances(net: NetworkState) -> Tuple[np.ndarray, np.ndarray]:
    r1 = net.layer1.resistance()
    r2 = net.layer2.resistance()
    if not (np.all(np.isfinite(r1)) and np.all(np.isfinite(r2)) and r1.min() > 0 and r2.min() > 0):
        raise SolverError("All resistances must be finite and positive")
    return 1.0 / r1, 1.0 / r2


def laplacian(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Weighted graph Laplacian of the tripartite network."""
    n_in, n_bulk = g1.shape
    n_out = g2.shape[1]
    n = n_in + n_bulk + n_out
    bulk = slice(n_in, n_in + n_bulk)
    out = slice(n_in + n_bulk, n)

    lap = np.zeros((n, n))
    lap[:n_in, bulk] = -g1
    lap[bulk, :n_in] = -g1.T
    lap[bulk, out] = -g2
    lap[out, bulk] = -g2.T
    degree = np.concatenate([g1.sum(axis=1), g1.sum(axis=0) + g2.sum(axis=1), g2.sum(axis=0)])
    lap[np.diag_indices(n)] = degree
    return lap


def _cholesky_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if matrix.size == 0:
        return np.zeros(0)
    try:
        factor = cho_factor(matrix, lower=True, check_finite=True)
        return cho_solve(factor, rhs, check_finite=False)
    except (LinAlgError, ValueError) as e:
        logger.error(f"Nodal system factorization failed: {e}")
        raise SolverError(f"Singular nodal system: {e}") from e


def _solve_dense(g1: np.ndarray, g2: np.ndarray, source: int, sink: int, v_applied: float) -> np.ndarray:
    lap = laplacian(g1, g2)
    n = lap.shape[0]
    free = np.ones(n, dtype=bool)
    free[[source, sink]] = False
    rhs = -lap[free, source] * v_applied
    voltages = np.zeros(n)
    voltages[source] = v_applied
    voltages[free] = _cholesky_solve(lap[np.ix_(free, free)], rhs)
    return voltages


def _solve_schur(g1: np.ndarray, g2: np.ndarray, source: int, sink: int, v_applied: float) -> np.ndarray:
    """Eliminate the (diagonal) bulk block first, solve on the terminals, back-substitute."""
    n_in, n_bulk = g1.shape
    n_out = g2.shape[1]
    coupling = np.vstack([g1, g2.T])
    bulk_degree = g1.sum(axis=0) + g2.sum(axis=1)
    terminal_degree = np.concatenate([g1.sum(axis=1), g2.sum(axis=0)])
    reduced = np.diag(terminal_degree) - (coupling / bulk_degree) @ coupling.T

    t_source = source
    t_sink = sink - n_bulk
    m = n_in + n_out
    free = np.ones(m, dtype=bool)
    free[[t_source, t_sink]] = False
    terminal = np.zeros(m)
    terminal[t_source] = v_applied
    terminal[free] = _cholesky_solve(reduced[np.ix_(free, free)], -reduced[free, t_source] * v_applied)

    bulk = (coupling.T @ terminal) / bulk_degree
    return np.concatenate([terminal[:n_in], bulk, terminal[n_in:]])


def _node_imbalance(g1: np.ndarray, g2: np.ndarray, voltages: np.ndarray) -> np.ndarray:
    """Net current leaving each node through its devices (L @ v without forming L)."""
    n_in, n_bulk = g1.shape
    v_in = voltages[:n_in]
    v_bulk = voltages[n_in: n_in + n_bulk]
    v_out = voltages[n_in + n_bulk:]
    return np.concatenate([
        g1.sum(axis=1) * v_in - g1 @ v_bulk,
        (g1.sum(axis=0) + g2.sum(axis=1)) * v_bulk - g1.T @ v_in - g2 @ v_out,
        g2.sum(axis=0) * v_out - g2.T @ v_bulk,
    ])


def solve(
    net: NetworkState,
    input_idx: int,
    output_idx: int,
    v_applied: float,
    method: str = "dense",
) -> CircuitSolution:
    """
    Solve node voltages with ``input_idx`` at ``v_applied`` and ``output_idx`` grounded.

    Args:
        net: Network (not modified)
        input_idx: Driven input node
        output_idx: Grounded output node
        v_applied: Source voltage
        method: "dense" (Cholesky on the reduced Laplacian) or "schur" (bulk elimination)

    Returns:
        Voltages, per-device drops and terminal current
    """
    dims = net.dims
    if not 0 <= input_idx < dims.n_in:
        raise IndexError(f"input index {input_idx} out of range [0, {dims.n_in})")
    if not 0 <= output_idx < dims.n_out:
        raise IndexError(f"output index {output_idx} out of range [0, {dims.n_out})")
    if method not in SOLVER_METHODS:
        raise ValueError(f"Unknown solver method: {method}")

    g1, g2 = _conductances(net)
    source = input_idx
    sink = dims.n_in + dims.n_bulk + output_idx
    if method == "dense":
        voltages = _solve_dense(g1, g2, source, sink, v_applied)
    else:
        voltages = _solve_schur(g1, g2, source, sink, v_applied)

    if not np.all(np.isfinite(voltages)):
        raise SolverError("Non-finite node voltages")

    v_in = voltages[: dims.n_in]
    v_bulk = voltages[dims.n_in: dims.n_in + dims.n_bulk]
    v_out = voltages[dims.n_in + dims.n_bulk:]

    imbalance = _node_imbalance(g1, g2, voltages)
    source_current = float(imbalance[source])
    terminal_current = float(g2[:, output_idx] @ v_bulk)
    floating = np.ones(voltages.size, dtype=bool)
    floating[[source, sink]] = False
    residual = float(np.abs(imbalance[floating]).max()) if floating.any() else 0.0
    scale = max(abs(source_current), abs(terminal_current))
    kcl_residual = residual / scale if scale > 0 else residual
    logger.debug(f"solve({input_idx}->{output_idx}, {v_applied}) current={terminal_current:.6g} residual={kcl_residual:.3g}")

    return CircuitSolution(
        n_in=dims.n_in,
        n_bulk=dims.n_bulk,
        node_voltages=voltages,
        layer1_drops=v_in[:, None] - v_bulk[None, :],
        layer2_drops=v_bulk[:, None] - v_out[None, :],
        terminal_current=terminal_current,
        source_current=source_current,
        kcl_residual=kcl_residual,
    )


def read_currents(net: NetworkState, input_idx: int, v_read: float, method: str = "dense") -> np.ndarray:
    """
    Current into each output node when it alone is grounded (others floating).

    Reads are instantaneous: the network state is not touched.
    """
    if net.kind is ModelKind.BMS:
        assert abs(v_read) < net.min_threshold(), (
            f"|v_read|={abs(v_read)} must stay below the smallest device threshold {net.min_threshold()}"
        )
    return np.array([
        solve(net, input_idx, k, v_read, method=method).terminal_current
        for k in range(net.dims.n_out)
    ])
