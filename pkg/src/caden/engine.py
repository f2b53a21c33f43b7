"""Agent-form round engine: partial participation, local solves, broadcast
with buffering, dual ascent.

Rounds are synchronous.  Every active agent minimizes its local subproblem
built from round-t snapshots (its own model, its buffered neighbor models and
its dual vector), broadcasts the new model once, then updates its dual from
the post-broadcast buffers.  Inactive agents are frozen for the round, and
their last broadcast keeps standing in for them at the neighbors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .graphs import Topology
from .losses import LocalLoss
from .solvers import (
    DEFAULT_MEMORY,
    LocalSubproblem,
    solve_exact_quadratic,
    solve_gd,
    solve_lbfgs,
)

_PARTICIPATION_STREAM = 401

CHECKPOINT_HEADER = struct.Struct("<QQQ")


@dataclass
class AgentState:
    """Per-agent record: model, dual, neighbor buffer, activity flag."""

    x: np.ndarray
    phi: np.ndarray
    inbox: dict[int, np.ndarray]
    active: bool = False


@dataclass(frozen=True)
class TauSchedule:
    """Local-iteration budget per (round, agent).

    ``base`` applies everywhere, optionally dropping to ``reduced`` from
    ``reduce_round`` on (the workload-reduction schedule).  ``per_agent``
    overrides the base for specific agents.
    """

    base: int = 5
    reduce_round: int | None = None
    reduced: int = 1
    per_agent: dict[int, int] | None = None

    def __post_init__(self):
        budgets = [self.base, self.reduced, *(self.per_agent or {}).values()]
        if any(b < 1 for b in budgets):
            raise ValueError("every local iteration budget must be at least 1")

    def tau(self, round_index: int, agent: int) -> int:
        if self.reduce_round is not None and round_index >= self.reduce_round:
            return self.reduced
        if self.per_agent and agent in self.per_agent:
            return self.per_agent[agent]
        return self.base

    def minimum(self, rounds: int, m: int) -> int:
        """Smallest budget over all (round, agent) pairs in a run."""
        taus = {self.tau(t, i) for t in range(rounds) for i in range(m)}
        return min(taus)


@dataclass
class CadenConfig:
    """Engine parameters for one run."""

    mu_z: float
    mu_y: float
    tau_schedule: TauSchedule = field(default_factory=TauSchedule)
    participation: float | tuple[float, ...] = 1.0
    solver: str = "lbfgs"  # lbfgs | gd | exact
    seed: int = 0
    lbfgs_memory: int = DEFAULT_MEMORY
    gd_step: float | None = None
    lipschitz: float | None = None

    def __post_init__(self):
        if self.mu_z <= 0 or self.mu_y <= 0:
            raise ValueError("mu_z and mu_y must be positive")
        if self.solver not in ("lbfgs", "gd", "exact"):
            raise ValueError(f"unknown solver {self.solver!r}")
        for p in np.atleast_1d(np.asarray(self.participation, dtype=float)):
            if not (0.0 < p <= 1.0):
                raise ValueError("participation probabilities must be in (0, 1]")

    def p_of(self, agent: int) -> float:
        if np.isscalar(self.participation):
            return float(self.participation)
        return float(self.participation[agent])

    @property
    def p_min(self) -> float:
        if np.isscalar(self.participation):
            return float(self.participation)
        return float(min(self.participation))

    @property
    def full_participation(self) -> bool:
        if np.isscalar(self.participation):
            return self.participation == 1.0
        return all(p == 1.0 for p in self.participation)


@dataclass(frozen=True)
class RoundSummary:
    round_index: int
    active: np.ndarray
    broadcasts: int


def init_states(
    losses: list[LocalLoss],
    topology: Topology,
    x_init: np.ndarray,
) -> list[AgentState]:
    """Zero duals; buffers seeded with the neighbors' initial models."""
    x_init = np.asarray(x_init, dtype=float)
    if x_init.shape[0] != topology.m:
        raise ValueError(f"x_init has {x_init.shape[0]} rows for m={topology.m}")
    d = x_init.shape[1]
    for i, loss in enumerate(losses):
        if loss.dim != d:
            raise ValueError(f"loss {i} has dim {loss.dim}, expected {d}")
    states = []
    for i in range(topology.m):
        inbox = {j: x_init[j].copy() for j in topology.neighbors[i]}
        states.append(AgentState(x=x_init[i].copy(), phi=np.zeros(d), inbox=inbox))
    return states


def sample_participation(config: CadenConfig, round_index: int, m: int) -> np.ndarray:
    """Independent Bernoulli activity flags.

    Each (agent, round) pair draws from its own counter-derived stream, so the
    flags are a pure function of (seed, round, agent) and independent of any
    execution schedule.
    """
    flags = np.empty(m, dtype=bool)
    for i in range(m):
        p = config.p_of(i)
        if p >= 1.0:
            flags[i] = True
        else:
            u = np.random.default_rng(
                [_PARTICIPATION_STREAM, config.seed, round_index, i]
            ).random()
            flags[i] = u < p
    return flags


def primal_update(
    agent: int,
    states: list[AgentState],
    losses: list[LocalLoss],
    topology: Topology,
    config: CadenConfig,
    round_index: int,
) -> np.ndarray:
    """Solve the agent's round-t subproblem from its current model.

    Reads only round-t snapshots, so primal updates of distinct agents
    commute.  The caller applies the returned model after all active agents
    have computed theirs.
    """
    state = states[agent]
    anchors = np.array(
        [0.5 * (state.x + state.inbox[j]) for j in topology.neighbors[agent]]
    )
    problem = LocalSubproblem(
        loss=losses[agent], phi=state.phi, anchors=anchors, mu_z=config.mu_z
    )
    tau = config.tau_schedule.tau(round_index, agent)
    if config.solver == "lbfgs":
        report = solve_lbfgs(problem, state.x, tau, config.lbfgs_memory)
    elif config.solver == "gd":
        report = solve_gd(problem, state.x, tau, step=config.gd_step, lipschitz=config.lipschitz)
    else:
        report = solve_exact_quadratic(problem)
    return report.x_out


def broadcast(agent: int, states: list[AgentState], topology: Topology) -> int:
    """Deposit the agent's model in every neighbor's buffer.

    Returns the communication units consumed: one per broadcast of a single
    model vector, regardless of neighbor count, and zero for inactive agents.
    """
    if not states[agent].active:
        return 0
    for j in topology.neighbors[agent]:
        states[j].inbox[agent] = states[agent].x
    return 1


def dual_update(
    agent: int, states: list[AgentState], topology: Topology, config: CadenConfig
) -> np.ndarray:
    """phi_i + (mu_y / 2) sum_j (x_i - x_j), with x_j read from the buffer."""
    state = states[agent]
    acc = np.zeros_like(state.phi)
    for j in topology.neighbors[agent]:
        acc += state.x - state.inbox[j]
    return state.phi + 0.5 * config.mu_y * acc


def run_round(
    states: list[AgentState],
    losses: list[LocalLoss],
    topology: Topology,
    config: CadenConfig,
    round_index: int,
) -> RoundSummary:
    """One synchronous round: participation, primal solves, broadcast, dual."""
    m = topology.m
    flags = sample_participation(config, round_index, m)
    for i in range(m):
        states[i].active = bool(flags[i])
    new_x = {i: primal_update(i, states, losses, topology, config, round_index)
             for i in range(m) if flags[i]}
    for i, x in new_x.items():
        states[i].x = x
    broadcasts = 0
    for i in range(m):
        broadcasts += broadcast(i, states, topology)
    new_phi = {i: dual_update(i, states, topology, config) for i in range(m) if flags[i]}
    for i, phi in new_phi.items():
        states[i].phi = phi
    return RoundSummary(round_index=round_index, active=flags, broadcasts=broadcasts)


def save_checkpoint(path: str, states: list[AgentState], round_index: int) -> None:
    """Binary checkpoint: '<QQQ' header (m, d, round), then per-agent models
    and duals as little-endian float64 rows."""
    m = len(states)
    d = states[0].x.shape[0]
    with open(path, "wb") as fp:
        fp.write(CHECKPOINT_HEADER.pack(m, d, round_index))
        for s in states:
            fp.write(s.x.astype("<f8").tobytes())
        for s in states:
            fp.write(s.phi.astype("<f8").tobytes())


def load_checkpoint(path: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Read a checkpoint back as ((m, d) models, (m, d) duals, round)."""
    with open(path, "rb") as fp:
        header = fp.read(CHECKPOINT_HEADER.size)
        m, d, round_index = CHECKPOINT_HEADER.unpack(header)
        body = np.frombuffer(fp.read(2 * m * d * 8), dtype="<f8")
    if body.size != 2 * m * d:
        raise ValueError("truncated checkpoint")
    x = body[: m * d].reshape(m, d).copy()
    phi = body[m * d :].reshape(m, d).copy()
    return x, phi, int(round_index)


def restore_states(
    losses: list[LocalLoss],
    topology: Topology,
    x: np.ndarray,
    phi: np.ndarray,
) -> list[AgentState]:
    """Rebuild engine state from checkpoint arrays.

    Buffers are reseeded with the stored models, which matches a synchronized
    save point (every agent's last broadcast is its current model).
    """
    states = init_states(losses, topology, x)
    for i, s in enumerate(states):
        s.phi = np.asarray(phi[i], dtype=float).copy()
    return states
