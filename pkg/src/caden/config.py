"""Experiment configuration: flat key-value text files with dotted sections.

Every key has a typed default; parsing fills defaults so a loaded config is
fully explicit, and re-serialization is canonical (sorted registry order,
shortest-roundtrip floats), hence idempotent.  ``auto`` is the spelled value
of the optional floats that the harness resolves from problem data.

The shipped ``docs/config_schema.txt`` is generated from this registry.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import IO

from .errors import ConfigError

AUTO = None  # spelled "auto" in config files


@dataclass(frozen=True)
class _Key:
    name: str  # dotted config key
    attr: str  # ExperimentConfig attribute
    kind: str  # int | float | autofloat | str | bool
    default: object
    help: str
    choices: tuple[str, ...] = ()


@dataclass
class ExperimentConfig:
    seed: int = 0
    rounds: int = 100
    algorithm: str = "caden"
    mode: str = "practice"

    topology_kind: str = "random"
    topology_m: int = 20
    topology_edge_prob: float = 0.2
    topology_file: str = ""

    loss_kind: str = "quadratic"
    loss_dimension: int = 2
    loss_classes: int = 3
    loss_features: int = 16
    loss_hidden: int = 25
    loss_l2: float = 0.0
    loss_samples_per_agent: int = 40
    loss_eval_samples: int = 200
    loss_blob_spread: float = 1.0
    loss_feature_scale_max: float = 1.0
    loss_data: str = "blobs"
    loss_idx_images: str = ""
    loss_idx_labels: str = ""
    loss_idx_eval_images: str = ""
    loss_idx_eval_labels: str = ""
    loss_shard_seed: int = -1

    quadratic_style: str = "identity"
    quadratic_cond: float = 10.0
    quadratic_targets: str = ""
    quadratic_target_spread: float = 1.0

    caden_mu_z: float | None = AUTO
    caden_mu_y: float | None = AUTO
    caden_tau: int = 5
    caden_tau_reduce_round: int = -1
    caden_tau_reduced: int = 1
    caden_participation: float = 1.0
    caden_lbfgs_memory: int = 10
    caden_gd_step: float | None = AUTO

    gt_step: float | None = AUTO
    gt_tune_rounds: int = 100

    init_strategy: str = "zeros"
    init_scale: float = 1.0
    init_state_file: str = ""

    lipschitz_warm_epochs: int = 20
    lipschitz_warm_lr: float = 0.1
    lipschitz_probe_epochs: int = 10
    lipschitz_probe_lr: float = 1e-7

    contraction_probe_iters: int = 20

    metrics_cadence: int = 1
    metrics_thresholds: str = "1e-2,1e-4,1e-6"
    metrics_wall_time: bool = True

    output_dir: str = "out"
    output_label: str = "run"
    output_save_state: str = ""

    def replace(self, **updates) -> "ExperimentConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(updates)
        return ExperimentConfig(**values)

    def shard_seed(self) -> int:
        return self.seed if self.loss_shard_seed < 0 else self.loss_shard_seed

    def thresholds(self) -> list[float]:
        text = self.metrics_thresholds.strip()
        return [float(tok) for tok in text.split(",") if tok.strip()] if text else []


KEYS: tuple[_Key, ...] = (
    _Key("seed", "seed", "int", 0, "master seed for every derived random stream"),
    _Key("rounds", "rounds", "int", 100, "number of synchronous rounds T"),
    _Key("algorithm", "algorithm", "str", "caden", "method to run",
         ("caden", "caden-gd", "gt")),
    _Key("mode", "mode", "str", "practice",
         "parameter source: user-set (practice) or prescribed (theory)",
         ("practice", "theory")),
    _Key("topology.kind", "topology_kind", "str", "random", "graph family",
         ("random", "file", "complete", "path", "ring")),
    _Key("topology.m", "topology_m", "int", 20, "number of agents"),
    _Key("topology.edge_prob", "topology_edge_prob", "float", 0.2,
         "edge probability for random graphs"),
    _Key("topology.file", "topology_file", "str", "",
         "edge-list file path when topology.kind = file"),
    _Key("loss.kind", "loss_kind", "str", "quadratic", "per-agent loss family",
         ("quadratic", "logistic", "mlp")),
    _Key("loss.dimension", "loss_dimension", "int", 2,
         "model dimension (quadratic losses only; data losses derive it)"),
    _Key("loss.classes", "loss_classes", "int", 3, "number of classes"),
    _Key("loss.features", "loss_features", "int", 16, "feature dimension for blob data"),
    _Key("loss.hidden", "loss_hidden", "int", 25, "hidden width of the two-layer net"),
    _Key("loss.l2", "loss_l2", "float", 0.0, "L2 coefficient for data losses"),
    _Key("loss.samples_per_agent", "loss_samples_per_agent", "int", 40,
         "training samples held by each agent (blob data)"),
    _Key("loss.eval_samples", "loss_eval_samples", "int", 200,
         "size of the shared held-out set"),
    _Key("loss.blob_spread", "loss_blob_spread", "float", 1.0,
         "within-class standard deviation of blob data"),
    _Key("loss.feature_scale_max", "loss_feature_scale_max", "float", 1.0,
         "log-spaced per-column scaling of blob features up to this factor"),
    _Key("loss.data", "loss_data", "str", "blobs", "data source for data losses",
         ("blobs", "idx")),
    _Key("loss.idx_images", "loss_idx_images", "str", "", "IDX image file (training)"),
    _Key("loss.idx_labels", "loss_idx_labels", "str", "", "IDX label file (training)"),
    _Key("loss.idx_eval_images", "loss_idx_eval_images", "str", "",
         "IDX image file (evaluation); empty carves the tail of training data"),
    _Key("loss.idx_eval_labels", "loss_idx_eval_labels", "str", "",
         "IDX label file (evaluation)"),
    _Key("loss.shard_seed", "loss_shard_seed", "int", -1,
         "seed for the random shard shuffle; -1 uses the master seed"),
    _Key("quadratic.style", "quadratic_style", "str", "identity",
         "curvature of quadratic losses", ("identity", "random")),
    _Key("quadratic.cond", "quadratic_cond", "float", 10.0,
         "condition number for random quadratic curvature"),
    _Key("quadratic.targets", "quadratic_targets", "str", "",
         "comma-separated per-agent scalar targets (forces dimension 1)"),
    _Key("quadratic.target_spread", "quadratic_target_spread", "float", 1.0,
         "standard deviation of seeded random targets"),
    _Key("caden.mu_z", "caden_mu_z", "autofloat", AUTO,
         "quadratic penalty; auto = 2 L + 1"),
    _Key("caden.mu_y", "caden_mu_y", "autofloat", AUTO,
         "dual ascent coefficient; auto = mu_z in practice mode, prescribed floor in theory mode"),
    _Key("caden.tau", "caden_tau", "int", 5, "local solver iterations per round"),
    _Key("caden.tau_reduce_round", "caden_tau_reduce_round", "int", -1,
         "round from which the reduced budget applies; -1 disables"),
    _Key("caden.tau_reduced", "caden_tau_reduced", "int", 1,
         "budget after the reduction round"),
    _Key("caden.participation", "caden_participation", "float", 1.0,
         "per-round activity probability, identical across agents"),
    _Key("caden.lbfgs_memory", "caden_lbfgs_memory", "int", 10,
         "curvature pairs kept by the local solver"),
    _Key("caden.gd_step", "caden_gd_step", "autofloat", AUTO,
         "step for the gradient-descent solver; auto = 1 / (L + mu_z d_i)"),
    _Key("gt.step", "gt_step", "autofloat", AUTO,
         "gradient-tracking step; auto tunes over {1e-1,1e-2,1e-3,1e-4}"),
    _Key("gt.tune_rounds", "gt_tune_rounds", "int", 100,
         "rounds of the short tuning runs for gt.step = auto"),
    _Key("init.strategy", "init_strategy", "str", "zeros",
         "model initialization", ("zeros", "random", "warmstart")),
    _Key("init.scale", "init_scale", "float", 1.0, "scale of random initialization"),
    _Key("init.state_file", "init_state_file", "str", "",
         "checkpoint to resume from (overrides init.strategy)"),
    _Key("lipschitz.warm_epochs", "lipschitz_warm_epochs", "int", 20,
         "full-gradient warm-up steps of the smoothness probe"),
    _Key("lipschitz.warm_lr", "lipschitz_warm_lr", "float", 0.1, "warm-up learning rate"),
    _Key("lipschitz.probe_epochs", "lipschitz_probe_epochs", "int", 10,
         "tiny-step probe iterations"),
    _Key("lipschitz.probe_lr", "lipschitz_probe_lr", "float", 1e-7, "probe learning rate"),
    _Key("contraction.probe_iters", "contraction_probe_iters", "int", 20,
         "solver iterations of the local contraction probe (theory mode)"),
    _Key("metrics.cadence", "metrics_cadence", "int", 1, "log every k-th round"),
    _Key("metrics.thresholds", "metrics_thresholds", "str", "1e-2,1e-4,1e-6",
         "relative-error thresholds for the time/communication table"),
    _Key("metrics.wall_time", "metrics_wall_time", "bool", True,
         "record wall time in the CSV; disable for byte-reproducible output"),
    _Key("output.dir", "output_dir", "str", "out", "output directory"),
    _Key("output.label", "output_label", "str", "run", "basename of the emitted files"),
    _Key("output.save_state", "output_save_state", "str", "",
         "write a final checkpoint to this path"),
)

_BY_NAME = {k.name: k for k in KEYS}


def _parse_value(key: _Key, raw: str):
    raw = raw.strip()
    try:
        if key.kind == "int":
            return int(raw)
        if key.kind == "float":
            return float(raw)
        if key.kind == "autofloat":
            return AUTO if raw == "auto" else float(raw)
        if key.kind == "bool":
            if raw.lower() in ("true", "on", "yes", "1"):
                return True
            if raw.lower() in ("false", "off", "no", "0"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key.name}: {raw!r}") from exc


def _format_value(key: _Key, value) -> str:
    if key.kind == "autofloat" and value is None:
        return "auto"
    if key.kind == "bool":
        return "true" if value else "false"
    if key.kind == "float" or (key.kind == "autofloat" and value is not None):
        return repr(float(value))
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; unknown keys and bad values raise ConfigError."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        name, raw = body.split("=", 1)
        name = name.strip()
        key = _BY_NAME.get(name)
        if key is None:
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        value = _parse_value(key, raw)
        if key.choices and value not in key.choices:
            raise ConfigError(
                f"line {lineno}: {name} must be one of {', '.join(key.choices)}"
            )
        values[key.attr] = value
    return ExperimentConfig(**values)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text: every key, registry order, canonical value spelling."""
    lines = [f"{k.name} = {_format_value(k, getattr(cfg, k.attr))}" for k in KEYS]
    return "\n".join(lines) + "\n"


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fp:
        return parse_config(fp.read())


def save_config(cfg: ExperimentConfig, fp: IO[str]) -> None:
    fp.write(serialize_config(cfg))


def config_as_dict(cfg: ExperimentConfig) -> dict:
    """Dotted-key mapping with canonical value spellings (for JSON echoes)."""
    return {k.name: _format_value(k, getattr(cfg, k.attr)) for k in KEYS}


def schema_text() -> str:
    """Human-readable schema, one block per key (shipped as a doc file)."""
    lines = [
        "Configuration schema",
        "====================",
        "",
        "Flat text files, one `key = value` per line; `#` starts a comment.",
        "Keys are dotted section names.  Every key is optional and defaults as",
        "listed.  Floats accept any Python literal; `auto` marks values the",
        "harness resolves from problem data.",
        "",
    ]
    for k in KEYS:
        default = _format_value(k, k.default)
        head = f"{k.name}  ({k.kind}, default {default})"
        lines.append(head)
        lines.append(f"    {k.help}")
        if k.choices:
            lines.append(f"    choices: {', '.join(k.choices)}")
        lines.append("")
    return "\n".join(lines)
