"""Run orchestration: builds the problem from a config, runs the chosen
method, records metrics, and writes CSV + JSON outputs.

CSV rows follow a fixed column order (round, V_t, rel_err, rel_err_graph,
acc, comms, time_s, phi_drift, active); metrics without a defined value for
the current method are left empty.  Floats are written shortest-roundtrip, so
a (config, seed) pair reproduces its CSV byte for byte when wall-time
recording is off.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, engine, graphs, metrics, theory
from .config import ExperimentConfig, config_as_dict
from .datasets import (
    gaussian_blobs,
    load_idx_images,
    load_idx_labels,
    shard_indices,
)
from .engine import AgentState, CadenConfig, TauSchedule
from .errors import ConfigError
from .losses import LogisticLoss, MlpLoss, QuadraticLoss, estimate_lipschitz
from .solvers import LocalSubproblem, estimate_contraction

_TARGET_STREAM = 501
_CURVATURE_STREAM = 502
_XINIT_STREAM = 503

GT_STEP_GRID = (1e-1, 1e-2, 1e-3, 1e-4)

CSV_COLUMNS = (
    "round",
    "V_t",
    "rel_err",
    "rel_err_graph",
    "acc",
    "comms",
    "time_s",
    "phi_drift",
    "active",
)


@dataclass
class TraceRow:
    round: int
    v: float | None
    rel_err: float
    rel_err_graph: float
    acc: float | None
    comms: int
    time_s: float
    phi_drift: float | None
    active: int

    def cells(self) -> list[str]:
        def num(value):
            return "" if value is None else repr(float(value))

        return [
            str(self.round),
            num(self.v),
            num(self.rel_err),
            num(self.rel_err_graph),
            num(self.acc),
            str(self.comms),
            num(self.time_s),
            num(self.phi_drift),
            str(self.active),
        ]


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.round <= self.rows[-1].round:
            raise ValueError("trace rounds must be strictly increasing")
        self.rows.append(row)

    def column(self, name: str) -> list:
        attr = {"V_t": "v"}.get(name, name)
        return [getattr(r, attr) for r in self.rows]

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        lines.extend(",".join(r.cells()) for r in self.rows)
        return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    config: ExperimentConfig
    trace: RunTrace
    summary: dict
    csv_path: Path | None = None
    json_path: Path | None = None


def build_topology(cfg: ExperimentConfig) -> graphs.Topology:
    kind = cfg.topology_kind
    if kind == "random":
        return graphs.build_random_graph(cfg.topology_m, cfg.topology_edge_prob, cfg.seed)
    if kind == "complete":
        return graphs.complete_graph(cfg.topology_m)
    if kind == "path":
        return graphs.path_graph(cfg.topology_m)
    if kind == "ring":
        return graphs.ring_graph(cfg.topology_m)
    if kind == "file":
        if not cfg.topology_file:
            raise ConfigError("topology.kind = file requires topology.file")
        return graphs.load_edge_list(cfg.topology_file)
    raise ConfigError(f"unknown topology.kind {kind!r}")


def _random_psd(dim: int, cond: float, rng: np.random.Generator) -> np.ndarray:
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    evals = np.logspace(0.0, np.log10(cond), dim)
    return basis @ np.diag(evals) @ basis.T


def _quadratic_losses(cfg: ExperimentConfig, m: int) -> list[QuadraticLoss]:
    if cfg.quadratic_targets.strip():
        targets = [float(tok) for tok in cfg.quadratic_targets.split(",")]
        if len(targets) != m:
            raise ConfigError(f"quadratic.targets lists {len(targets)} values for m={m}")
        a = np.asarray(targets).reshape(m, 1)
        d = 1
    else:
        d = cfg.loss_dimension
        rng = np.random.default_rng([_TARGET_STREAM, cfg.seed])
        a = cfg.quadratic_target_spread * rng.standard_normal((m, d))
    losses = []
    for i in range(m):
        if cfg.quadratic_style == "identity":
            q = np.ones(d)
        else:
            rng_i = np.random.default_rng([_CURVATURE_STREAM, cfg.seed, i])
            q = _random_psd(d, cfg.quadratic_cond, rng_i)
        losses.append(QuadraticLoss(q=q, a=a[i]))
    return losses


def _data_losses(cfg: ExperimentConfig, m: int):
    if cfg.loss_data == "blobs":
        total = m * cfg.loss_samples_per_agent
        x, y = gaussian_blobs(
            total + cfg.loss_eval_samples,
            cfg.loss_features,
            cfg.loss_classes,
            seed=cfg.seed,
            spread=cfg.loss_blob_spread,
        )
        if cfg.loss_feature_scale_max != 1.0:
            # Log-spaced column scales mimic unnormalized data; they spread
            # the loss curvature spectrum without changing separability.
            x = x * np.logspace(
                0.0, np.log10(cfg.loss_feature_scale_max), cfg.loss_features
            )
        x_train, y_train = x[:total], y[:total]
        x_eval, y_eval = x[total:], y[total:]
        classes = cfg.loss_classes
    elif cfg.loss_data == "idx":
        if not (cfg.loss_idx_images and cfg.loss_idx_labels):
            raise ConfigError("loss.data = idx requires loss.idx_images and loss.idx_labels")
        x_train = load_idx_images(cfg.loss_idx_images)
        y_train = load_idx_labels(cfg.loss_idx_labels)
        classes = int(y_train.max()) + 1
        if cfg.loss_idx_eval_images:
            x_eval = load_idx_images(cfg.loss_idx_eval_images)
            y_eval = load_idx_labels(cfg.loss_idx_eval_labels)
        else:
            cut = max(1, x_train.shape[0] - cfg.loss_eval_samples)
            x_eval, y_eval = x_train[cut:], y_train[cut:]
            x_train, y_train = x_train[:cut], y_train[:cut]
    else:
        raise ConfigError(f"unknown loss.data {cfg.loss_data!r}")
    shards = shard_indices(x_train.shape[0], m, cfg.shard_seed())
    losses = []
    for idx in shards:
        if cfg.loss_kind == "logistic":
            losses.append(LogisticLoss(x_train[idx], y_train[idx], classes, cfg.loss_l2))
        else:
            losses.append(
                MlpLoss(x_train[idx], y_train[idx], cfg.loss_hidden, classes, cfg.loss_l2)
            )
    return losses, (x_eval, y_eval)


def build_losses(cfg: ExperimentConfig, topology: graphs.Topology):
    """Per-agent losses plus the shared held-out set (None for quadratics)."""
    if cfg.loss_kind == "quadratic":
        return _quadratic_losses(cfg, topology.m), None
    return _data_losses(cfg, topology.m)


@dataclass
class Initialization:
    x0: np.ndarray
    phi0: np.ndarray | None
    start_round: int
    lipschitz: float | None
    source: str


def initialize(cfg: ExperimentConfig, losses, topology) -> Initialization:
    """Initial models plus the resolved smoothness constant.

    The warm-start strategy runs the smoothness probe per agent from a common
    start; its final iterates become the initial models and the global
    constant is the max across agents.  Quadratic losses report their exact
    smoothness, so the harness never needs a probe for them.
    """
    m, d = topology.m, losses[0].dim
    if cfg.init_state_file:
        x0, phi0, round_index = engine.load_checkpoint(cfg.init_state_file)
        return Initialization(x0, phi0, round_index, _exact_smoothness(losses), "checkpoint")
    if cfg.init_strategy == "warmstart":
        if isinstance(losses[0], MlpLoss):
            common = losses[0].init_params(cfg.seed)
        else:
            rng = np.random.default_rng([_XINIT_STREAM, cfg.seed])
            common = cfg.init_scale * rng.standard_normal(d)
        x0 = np.empty((m, d))
        l_hat = 0.0
        for i, loss in enumerate(losses):
            est = estimate_lipschitz(
                loss,
                common,
                warm_epochs=cfg.lipschitz_warm_epochs,
                warm_lr=cfg.lipschitz_warm_lr,
                probe_epochs=cfg.lipschitz_probe_epochs,
                probe_lr=cfg.lipschitz_probe_lr,
            )
            x0[i] = est.x_init
            l_hat = max(l_hat, est.l_hat)
        return Initialization(x0, None, 0, l_hat, "warmstart")
    if cfg.init_strategy == "random":
        rng = np.random.default_rng([_XINIT_STREAM, cfg.seed])
        x0 = cfg.init_scale * rng.standard_normal((m, d))
    elif isinstance(losses[0], MlpLoss):
        # Zero weights are a ReLU saddle; seeded small weights keep the probe
        # and the solvers off it while staying deterministic.
        x0 = np.tile(losses[0].init_params(cfg.seed), (m, 1))
    else:
        x0 = np.zeros((m, d))
    return Initialization(x0, None, 0, _exact_smoothness(losses), cfg.init_strategy)


def _exact_smoothness(losses) -> float | None:
    values = [loss.smoothness() for loss in losses]
    if any(v is None for v in values):
        return None
    return max(values)


def _probe_contraction(cfg, losses, topology, init, mu_z) -> float:
    """Max over agents of the empirical subproblem contraction rate."""
    rate = 0.0
    for i, loss in enumerate(losses):
        anchors = np.array(
            [0.5 * (init.x0[i] + init.x0[j]) for j in topology.neighbors[i]]
        )
        problem = LocalSubproblem(
            loss=loss, phi=np.zeros(loss.dim), anchors=anchors, mu_z=mu_z
        )
        rate = max(
            rate,
            estimate_contraction(
                problem, init.x0[i], cfg.contraction_probe_iters, memory=cfg.caden_lbfgs_memory
            ),
        )
    return rate


@dataclass
class ResolvedParameters:
    mu_z: float
    mu_y: float
    tau_schedule: TauSchedule
    lipschitz: float | None
    theory: dict


def resolve_parameters(
    cfg: ExperimentConfig, losses, topology, init: Initialization
) -> ResolvedParameters:
    """Fill auto parameters.

    Practice mode: mu_z = 2L + 1 and mu_y = mu_z unless set explicitly; tau
    comes from the config schedule.  Theory mode probes the local contraction
    rate and takes the full prescribed triple, reporting the analysis
    constants at the minimum budget of the run.
    """
    l_hat = init.lipschitz
    if cfg.caden_mu_z is not None:
        mu_z = cfg.caden_mu_z
    else:
        if l_hat is None:
            raise ConfigError(
                "caden.mu_z = auto needs a smoothness constant; use init.strategy ="
                " warmstart or a loss family with exact smoothness"
            )
        mu_z = 2.0 * l_hat + 1.0
    schedule = TauSchedule(
        base=cfg.caden_tau,
        reduce_round=None if cfg.caden_tau_reduce_round < 0 else cfg.caden_tau_reduce_round,
        reduced=cfg.caden_tau_reduced,
    )
    theory_info: dict = {"mode": cfg.mode}
    if cfg.mode == "theory":
        if l_hat is None:
            raise ConfigError("theory mode needs a smoothness constant")
        spectral = graphs.laplacian_spectrum(topology)
        rate = _probe_contraction(cfg, losses, topology, init, mu_z)
        rate = min(max(rate, 1e-12), 1.0 - 1e-12)
        selected = theory.select_parameters(l_hat, spectral, cfg.caden_participation, rate)
        mu_z, mu_y = selected.mu_z, selected.mu_y
        schedule = TauSchedule(base=selected.tau)
        report = theory.compute_constants(
            theory.TheoryInputs(
                lipschitz=l_hat,
                spectral=spectral,
                p_min=cfg.caden_participation,
                rate=rate,
                tau=schedule.minimum(cfg.rounds, topology.m),
                mu_z=mu_z,
                mu_y=mu_y,
            )
        )
        theory_info.update(
            {
                "contraction_rate": rate,
                "selected": {"mu_z": mu_z, "mu_y": mu_y, "tau": selected.tau},
                "report": report.as_dict(),
            }
        )
    else:
        mu_y = cfg.caden_mu_y if cfg.caden_mu_y is not None else mu_z
    theory_info["parameters"] = {"mu_z": mu_z, "mu_y": mu_y, "lipschitz": l_hat}
    return ResolvedParameters(
        mu_z=mu_z, mu_y=mu_y, tau_schedule=schedule, lipschitz=l_hat, theory=theory_info
    )


def _states_view(x: np.ndarray) -> list[AgentState]:
    d = x.shape[1]
    return [AgentState(x=row, phi=np.zeros(d), inbox={}, active=True) for row in x]


def _tau_segments(schedule: TauSchedule, start: int, rounds: int, m: int) -> list[list[int]]:
    """Run-length encoding [start, end, tau] of the per-round budget."""
    segments: list[list[int]] = []
    for t in range(start, start + rounds):
        tau = min(schedule.tau(t, i) for i in range(m))
        if segments and segments[-1][2] == tau:
            segments[-1][1] = t + 1
        else:
            segments.append([t, t + 1, tau])
    return segments


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self._t0 = time.perf_counter() if enabled else 0.0

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0 if self.enabled else 0.0


def _caden_row(round_index, states, losses, topology, comms, clock, acc_fn, active):
    return TraceRow(
        round=round_index,
        v=metrics.lyapunov_v(states, losses, topology),
        rel_err=metrics.relative_error(states, losses),
        rel_err_graph=metrics.relative_error_graph(states, losses, topology),
        acc=acc_fn(states),
        comms=comms,
        time_s=clock.elapsed(),
        phi_drift=metrics.phi_drift(states),
        active=active,
    )


def run_experiment(
    cfg: ExperimentConfig, out_dir: str | None = None, write_outputs: bool = True
) -> RunResult:
    """Build the problem, run T rounds, record metrics, emit CSV + JSON.

    Any error during the round loop flushes the partial trace and a summary
    carrying the failure message before re-raising.
    """
    topology = build_topology(cfg)
    losses, eval_set = build_losses(cfg, topology)
    init = initialize(cfg, losses, topology)
    params = resolve_parameters(cfg, losses, topology, init)

    spectral = graphs.laplacian_spectrum(topology)
    summary: dict = {
        "config": config_as_dict(cfg),
        "graph": {
            "m": topology.m,
            "n": topology.n,
            "d_max": topology.d_max,
            "lambda_max": spectral.lambda_max,
            "lambda_min": spectral.lambda_min,
            "resamples": topology.resamples,
        },
        "theory": params.theory,
    }
    if eval_set is None:
        acc_fn = lambda states: None  # noqa: E731 - trivial closure
    else:
        acc_fn = lambda states: metrics.test_accuracy(states, losses, *eval_set)  # noqa: E731

    trace = RunTrace()
    clock = _Clock(cfg.metrics_wall_time)
    error: Exception | None = None
    final_states: list[AgentState] | None = None
    try:
        if cfg.algorithm == "gt":
            _run_gt(cfg, losses, topology, init, trace, clock, acc_fn, summary)
        else:
            final_states = _run_caden(
                cfg, losses, topology, init, params, trace, clock, acc_fn, summary
            )
    except Exception as exc:  # flush partial trace, then surface the failure
        error = exc
        summary["error"] = f"{type(exc).__name__}: {exc}"

    if trace.rows:
        last = trace.rows[-1]
        summary["totals"] = {
            "rounds": last.round,
            "communications": last.comms,
            "wall_time_s": last.time_s,
            "final_rel_err": last.rel_err,
            "final_v": last.v,
            "final_acc": last.acc,
        }
        summary["thresholds"] = _threshold_table(cfg, trace)

    csv_path = json_path = None
    if write_outputs:
        out = Path(out_dir if out_dir is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{cfg.output_label}_metrics.csv"
        json_path = out / f"{cfg.output_label}_summary.json"
        csv_path.write_text(trace.to_csv(), encoding="ascii")
        json_path.write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="ascii"
        )
    if error is None and cfg.output_save_state and final_states is not None:
        engine.save_checkpoint(
            cfg.output_save_state, final_states, init.start_round + cfg.rounds
        )
    if error is not None:
        raise error
    return RunResult(config=cfg, trace=trace, summary=summary, csv_path=csv_path, json_path=json_path)


def _run_caden(cfg, losses, topology, init, params, trace, clock, acc_fn, summary):
    solver = "gd" if cfg.algorithm == "caden-gd" else "lbfgs"
    if solver == "gd" and cfg.caden_gd_step is None and params.lipschitz is None:
        smooth = _exact_smoothness(losses)
        if smooth is None:
            raise ConfigError("caden-gd needs caden.gd_step or a resolvable smoothness constant")
    run_cfg = CadenConfig(
        mu_z=params.mu_z,
        mu_y=params.mu_y,
        tau_schedule=params.tau_schedule,
        participation=cfg.caden_participation,
        solver=solver,
        seed=cfg.seed,
        lbfgs_memory=cfg.caden_lbfgs_memory,
        gd_step=cfg.caden_gd_step,
        lipschitz=params.lipschitz,
    )
    states = engine.init_states(losses, topology, init.x0)
    if init.phi0 is not None:
        for i, s in enumerate(states):
            s.phi = init.phi0[i].copy()
    start = init.start_round
    summary["tau_by_round"] = _tau_segments(params.tau_schedule, start, cfg.rounds, topology.m)
    comms = 0
    trace.append(_caden_row(start, states, losses, topology, comms, clock, acc_fn, 0))
    last_round = start + cfg.rounds
    for t in range(start, last_round):
        result = engine.run_round(states, losses, topology, run_cfg, t)
        comms += result.broadcasts
        done = t + 1
        if (done - start) % cfg.metrics_cadence == 0 or done == last_round:
            trace.append(
                _caden_row(
                    done, states, losses, topology, comms, clock, acc_fn,
                    int(result.active.sum()),
                )
            )
    return states


def _tune_gt_step(cfg, losses, topology, x0, w) -> tuple[float, list[dict]]:
    """Short deterministic runs over the step grid; best final error wins."""
    rounds = min(cfg.rounds, cfg.gt_tune_rounds)
    table = []
    best_step, best_err = None, np.inf
    for step in GT_STEP_GRID:
        state = baselines.gt_init(losses, x0, w, step)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(rounds):
                state = baselines.gt_round(state, losses)
            err = metrics.relative_error(_states_view(state.x), losses)
        if not np.isfinite(err):
            err = np.inf
        table.append({"step": step, "rel_err": None if err == np.inf else err})
        if err < best_err:
            best_step, best_err = step, err
    if best_step is None:
        raise ConfigError("every gt.step candidate diverged; set gt.step explicitly")
    return best_step, table


def _run_gt(cfg, losses, topology, init, trace, clock, acc_fn, summary):
    w = baselines.metropolis_weights(topology)
    if cfg.gt_step is not None:
        step = cfg.gt_step
    else:
        step, table = _tune_gt_step(cfg, losses, topology, init.x0, w)
        summary["gt_tuning"] = {"grid": list(GT_STEP_GRID), "table": table, "selected": step}
    summary["theory"]["parameters"]["gt_step"] = step
    state = baselines.gt_init(losses, init.x0, w, step)

    def row(round_index, comms):
        view = _states_view(state.x)
        return TraceRow(
            round=round_index,
            v=None,
            rel_err=metrics.relative_error(view, losses),
            rel_err_graph=metrics.relative_error_graph(view, losses, topology),
            acc=acc_fn(view),
            comms=comms,
            time_s=clock.elapsed(),
            phi_drift=None,
            active=topology.m,
        )

    comms = 0
    trace.append(row(0, comms))
    trace.rows[-1].active = 0
    for t in range(cfg.rounds):
        state = baselines.gt_round(state, losses)
        # Each agent shares its model and its tracker: two d-vectors.
        comms += 2 * topology.m
        done = t + 1
        if done % cfg.metrics_cadence == 0 or done == cfg.rounds:
            trace.append(row(done, comms))


def _threshold_table(cfg: ExperimentConfig, trace: RunTrace) -> list[dict]:
    table = []
    for eps in cfg.thresholds():
        hit = next((r for r in trace.rows if r.rel_err <= eps), None)
        table.append(
            {
                "epsilon": eps,
                "round": None if hit is None else hit.round,
                "communications": None if hit is None else hit.comms,
                "time_s": None if hit is None else hit.time_s,
            }
        )
    return table


@dataclass
class SweepResult:
    values: list[float]
    seeds: list[int]
    final_v: dict[float, float]
    runs: dict[tuple[float, int], RunResult]


def participation_sweep(
    cfg: ExperimentConfig,
    p_values: list[float],
    n_seeds: int = 5,
    out_dir: str | None = None,
    write_outputs: bool = False,
) -> SweepResult:
    """Identical-seed runs varying only the participation probability.

    For each p, runs ``n_seeds`` experiments (seeds seed, seed+1, ...) and
    averages the mean residual V over the final 10% of logged rounds.  Traces
    are aligned: every run covers the same rounds at the same cadence.
    """
    for p in p_values:
        if not (0.0 < p <= 1.0):
            raise ValueError(f"participation {p} not in (0, 1]")
    seeds = [cfg.seed + k for k in range(n_seeds)]
    runs: dict[tuple[float, int], RunResult] = {}
    final_v: dict[float, float] = {}
    for p in p_values:
        per_seed = []
        for s in seeds:
            run_cfg = cfg.replace(
                caden_participation=p,
                seed=s,
                output_label=f"{cfg.output_label}_p{p:g}_s{s}",
            )
            result = run_experiment(run_cfg, out_dir=out_dir, write_outputs=write_outputs)
            runs[(p, s)] = result
            v_col = [r.v for r in result.trace.rows if r.v is not None]
            tail = max(1, int(np.ceil(0.1 * len(v_col))))
            per_seed.append(float(np.mean(v_col[-tail:])))
        final_v[p] = float(np.mean(per_seed))
    return SweepResult(values=list(p_values), seeds=seeds, final_v=final_v, runs=runs)
