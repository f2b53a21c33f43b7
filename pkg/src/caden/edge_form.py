"""Edge-variable reference iterations with explicit per-edge consensus
variables and per-endpoint duals.

This is the unsimplified form of the method: every edge (i, j) carries a
consensus variable z_ij and two duals, one per endpoint.  It runs full
participation only and serves as the equivalence oracle for the agent-form
engine: with zero dual initialization the two endpoint duals stay
antisymmetric, z collapses to the edge midpoints, and the x-trajectories of
the two forms coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Topology, constraint_residual, edge_midpoints
from .losses import LocalLoss
from .solvers import (
    DEFAULT_MEMORY,
    LocalSubproblem,
    gd_minimize,
    lbfgs_minimize,
    solve_exact_quadratic,
)


@dataclass
class EdgeState:
    """Full edge-form state.

    ``y`` has shape (n, 2, d): slot 0 holds the dual of the smaller endpoint
    of each edge, slot 1 the larger.  The duals are stored separately rather
    than assumed antisymmetric; antisymmetry is a property to verify.
    """

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray


def init_edge_state(topology: Topology, x_init: np.ndarray) -> EdgeState:
    """Zero duals; z starts at the edge midpoints of the initial models."""
    x = np.asarray(x_init, dtype=float).copy()
    z = edge_midpoints(topology, x)
    y = np.zeros((topology.n, 2, x.shape[1]))
    return EdgeState(x=x, z=z, y=y)


def local_objective(
    state: EdgeState, topology: Topology, agent: int, loss: LocalLoss, mu_z: float
):
    """Value/gradient closures of the agent's edge-form x-step objective:

        f_i(x) + sum_{edges k at i} [ y_k,i . (x - z_k) + (mu_z/2) ||x - z_k||^2 ]
    """
    incident = topology.incident(agent)

    def value(x: np.ndarray) -> float:
        total = loss.value(x)
        for k, _, side in incident:
            diff = x - state.z[k]
            total += float(state.y[k, side] @ diff) + 0.5 * mu_z * float(diff @ diff)
        return total

    def gradient(x: np.ndarray) -> np.ndarray:
        g = loss.gradient(x)
        for k, _, side in incident:
            g = g + state.y[k, side] + mu_z * (x - state.z[k])
        return g

    return value, gradient


def edge_x_step(
    state: EdgeState,
    losses: list[LocalLoss],
    topology: Topology,
    mu_z: float,
    tau: int,
    solver: str = "lbfgs",
    memory: int = DEFAULT_MEMORY,
    gd_step: float | None = None,
) -> np.ndarray:
    """Inexactly minimize every agent's edge-form objective, warm-started.

    Must be driven with the same solver and iteration budget as the paired
    agent-form run for trace equality.
    """
    new_x = np.empty_like(state.x)
    for i in range(topology.m):
        if solver == "exact":
            incident = topology.incident(i)
            phi = np.zeros(state.x.shape[1])
            anchors = np.empty((len(incident), state.x.shape[1]))
            for slot, (k, _, side) in enumerate(incident):
                phi += state.y[k, side]
                anchors[slot] = state.z[k]
            problem = LocalSubproblem(loss=losses[i], phi=phi, anchors=anchors, mu_z=mu_z)
            new_x[i] = solve_exact_quadratic(problem).x_out
            continue
        value, gradient = local_objective(state, topology, i, losses[i], mu_z)
        if solver == "lbfgs":
            new_x[i] = lbfgs_minimize(value, gradient, state.x[i], tau, memory).x_out
        elif solver == "gd":
            if gd_step is None:
                raise ValueError("gd solver needs an explicit step")
            new_x[i] = gd_minimize(gradient, state.x[i], tau, gd_step).x_out
        else:
            raise ValueError(f"unknown solver {solver!r}")
    return new_x


def edge_z_step(state: EdgeState, topology: Topology, mu_z: float) -> np.ndarray:
    """Closed form: z_k = (x_i + x_j + (y_k,i + y_k,j) / mu_z) / 2."""
    src, dst = topology.edge_arrays()
    return 0.5 * (state.x[src] + state.x[dst] + (state.y[:, 0] + state.y[:, 1]) / mu_z)


def edge_y_step(state: EdgeState, topology: Topology, mu_y: float) -> np.ndarray:
    """Dual ascent per endpoint: y_k,i += mu_y (x_i - z_k)."""
    src, dst = topology.edge_arrays()
    y = state.y.copy()
    y[:, 0] += mu_y * (state.x[src] - state.z)
    y[:, 1] += mu_y * (state.x[dst] - state.z)
    return y


def run_edge_round(
    state: EdgeState,
    losses: list[LocalLoss],
    topology: Topology,
    mu_z: float,
    mu_y: float,
    tau: int,
    solver: str = "lbfgs",
    memory: int = DEFAULT_MEMORY,
    gd_step: float | None = None,
) -> EdgeState:
    """One synchronous x, z, y sweep; returns the new state."""
    x = edge_x_step(state, losses, topology, mu_z, tau, solver, memory, gd_step)
    mid = EdgeState(x=x, z=state.z, y=state.y)
    z = edge_z_step(mid, topology, mu_z)
    mid = EdgeState(x=x, z=z, y=state.y)
    y = edge_y_step(mid, topology, mu_y)
    return EdgeState(x=x, z=z, y=y)


def dual_aggregates(state: EdgeState, topology: Topology) -> np.ndarray:
    """Per-agent sums of incident endpoint duals (the agent-form dual)."""
    phi = np.zeros_like(state.x)
    for i in range(topology.m):
        for k, _, side in topology.incident(i):
            phi[i] += state.y[k, side]
    return phi


def antisymmetry_gap(state: EdgeState) -> float:
    """Max-abs violation of y_k,i + y_k,j = 0 over all edges."""
    if state.y.shape[0] == 0:
        return 0.0
    return float(np.abs(state.y[:, 0] + state.y[:, 1]).max())


def augmented_lagrangian_value(
    state: EdgeState, losses: list[LocalLoss], topology: Topology, mu_z: float
) -> float:
    """F(x) + y . (Ax - Bz) + (mu_z / 2) ||Ax - Bz||^2, evaluated edge-wise."""
    total = sum(loss.value(x) for loss, x in zip(losses, state.x))
    src, dst = topology.edge_arrays()
    total += float((state.y[:, 0] * (state.x[src] - state.z)).sum())
    total += float((state.y[:, 1] * (state.x[dst] - state.z)).sum())
    total += 0.5 * mu_z * constraint_residual(topology, state.x, state.z)
    return total
