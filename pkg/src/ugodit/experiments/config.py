"""Experiment configuration: YAML schema, defaults, strict validation.

A config is a nested key/value document. Unknown keys are rejected by
name so a typo cannot silently fall back to a default. Omitted keys
resolve to task-appropriate defaults (for example the regularization
weight defaults to 2 and the per-task round counts follow the standard
recipes); the fully resolved document is what the runner records in the
manifest.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from ..errors import ConfigurationError
from ..group_trainer import SolverConfig
from ..network import ArchitectureSpec

TASKS = ("mri", "sr", "ndb")
MODES = ("frozen", "warmstart", "scratch", "vanilla", "frozen_shared")

_TASK_OPERATOR_KEYS = {
    "mri": {"noise_sigma", "acceleration_factor", "acs_fraction", "coils"},
    "sr": {"noise_sigma", "factor"},
    "ndb": {"noise_sigma", "gamma", "blur_sigma", "kernel_radius"},
}

_TASK_NK = {"mri": (2, 2000), "sr": (10, 2000), "ndb": (10, 2000)}


def _require_keys(section: dict, allowed: set[str], prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigurationError(f"unknown config key {prefix + str(key)!r}")


def _get(section: dict, key: str, default, caster, prefix: str):
    value = section.get(key, default)
    if value is None:
        return None
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {prefix}{key}: {value!r}") from exc


@dataclass
class DataSection:
    source: str = "synthetic"
    family: str = "ellipses"
    complexity: int = 3
    directory: str | None = None
    count_train: int = 4
    count_test: int = 5
    image_size: int = 64


@dataclass
class OperatorSection:
    noise_sigma: float = 0.05
    acceleration_factor: int = 4
    acs_fraction: float = 0.08
    coils: int = 4
    factor: int = 4
    gamma: float = 2.2
    blur_sigma: float = 2.0
    kernel_radius: int = 6


@dataclass
class NetworkSection:
    depth: int = 5
    channels: tuple[int, ...] = ()
    kernel_size: int = 3
    skip: bool = True
    activation: str = "leaky_relu"
    upsample_mode: str = "nearest"


@dataclass
class RunSection:
    modes: tuple[str, ...] = ("frozen", "scratch")
    train: bool = True
    train_shared_decoder: bool = False
    checkpoint_path: str | None = None
    shared_checkpoint_path: str | None = None
    output_dir: str | None = None
    save_plots: bool = True
    save_grids: bool = True


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    data: DataSection
    operator: OperatorSection
    network: NetworkSection
    solver: SolverConfig
    run: RunSection

    def architecture(self) -> ArchitectureSpec:
        channels_out = 2 if self.task == "mri" else 3
        return ArchitectureSpec(
            depth=self.network.depth,
            channels=self.network.channels,
            kernel_size=self.network.kernel_size,
            in_channels=channels_out,
            out_channels=channels_out,
            skip=self.network.skip,
            activation=self.network.activation,
            upsample_mode=self.network.upsample_mode,
        )

    def resolved(self) -> dict:
        """Fully resolved nested dict, suitable for the manifest."""
        return {
            "task": self.task,
            "seed": self.seed,
            "data": {
                "source": self.data.source,
                "family": self.data.family,
                "complexity": self.data.complexity,
                "directory": self.data.directory,
                "count_train": self.data.count_train,
                "count_test": self.data.count_test,
                "image_size": self.data.image_size,
            },
            "operator": self._resolved_operator(),
            "network": {
                "depth": self.network.depth,
                "channels": list(self.network.channels),
                "kernel_size": self.network.kernel_size,
                "skip": self.network.skip,
                "activation": self.network.activation,
                "upsample_mode": self.network.upsample_mode,
            },
            "solver": {
                "K": self.solver.K,
                "N": self.solver.N,
                "lambda": self.solver.lam,
                "beta": self.solver.beta,
                "sigma_ini": self.solver.sigma_ini,
                "joint_step": self.solver.joint_step,
            },
            "run": {
                "modes": list(self.run.modes),
                "train": self.run.train,
                "train_shared_decoder": self.run.train_shared_decoder,
                "checkpoint_path": self.run.checkpoint_path,
                "shared_checkpoint_path": self.run.shared_checkpoint_path,
                "output_dir": self.run.output_dir,
                "save_plots": self.run.save_plots,
                "save_grids": self.run.save_grids,
            },
        }

    def _resolved_operator(self) -> dict:
        op = {"noise_sigma": self.operator.noise_sigma}
        if self.task == "mri":
            op.update(
                acceleration_factor=self.operator.acceleration_factor,
                acs_fraction=self.operator.acs_fraction,
                coils=self.operator.coils,
            )
        elif self.task == "sr":
            op.update(factor=self.operator.factor)
        else:
            op.update(
                gamma=self.operator.gamma,
                blur_sigma=self.operator.blur_sigma,
                kernel_radius=self.operator.kernel_radius,
            )
        return op


def default_channels(depth: int) -> tuple[int, ...]:
    return tuple(min(16 * 2**i, 128) for i in range(depth))


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a nested config dict and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config document must be a mapping")
    _require_keys(
        raw, {"task", "seed", "data", "operator", "network", "solver", "run"}, ""
    )
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigurationError(f"task must be one of {TASKS}, got {task!r}")
    seed = _get(raw, "seed", 0, int, "")

    data_raw = raw.get("data", {}) or {}
    _require_keys(
        data_raw,
        {"source", "family", "complexity", "directory", "count_train", "count_test", "image_size"},
        "data.",
    )
    data = DataSection(
        source=_get(data_raw, "source", "synthetic", str, "data."),
        family=_get(data_raw, "family", "ellipses" if task == "mri" else "texture", str, "data."),
        complexity=_get(data_raw, "complexity", 3, int, "data."),
        directory=data_raw.get("directory"),
        count_train=_get(data_raw, "count_train", 4, int, "data."),
        count_test=_get(data_raw, "count_test", 5, int, "data."),
        image_size=_get(data_raw, "image_size", 64, int, "data."),
    )
    if data.source not in ("synthetic", "directory"):
        raise ConfigurationError(f"data.source must be synthetic or directory, got {data.source!r}")
    if data.source == "directory":
        if task == "mri":
            raise ConfigurationError("data.source: directory is only supported for sr and ndb")
        if not data.directory:
            raise ConfigurationError("data.directory is required when data.source is directory")
    if data.family not in ("ellipses", "texture"):
        raise ConfigurationError(f"data.family must be ellipses or texture, got {data.family!r}")
    if data.count_train < 1:
        raise ConfigurationError("data.count_train must be >= 1")
    if data.count_test < 0:
        raise ConfigurationError("data.count_test must be >= 0")

    op_raw = raw.get("operator", {}) or {}
    allowed = _TASK_OPERATOR_KEYS[task]
    for key in op_raw:
        if key not in allowed:
            if any(key in keys for keys in _TASK_OPERATOR_KEYS.values()):
                raise ConfigurationError(
                    f"config key {'operator.' + str(key)!r} is not valid for task {task!r}"
                )
            raise ConfigurationError(f"unknown config key {'operator.' + str(key)!r}")
    af = _get(op_raw, "acceleration_factor", 4, int, "operator.")
    acs_default = min(1.0, 0.32 / max(af, 1))
    operator = OperatorSection(
        noise_sigma=_get(op_raw, "noise_sigma", 0.05, float, "operator."),
        acceleration_factor=af,
        acs_fraction=_get(op_raw, "acs_fraction", acs_default, float, "operator."),
        coils=_get(op_raw, "coils", 4, int, "operator."),
        factor=_get(op_raw, "factor", 4, int, "operator."),
        gamma=_get(op_raw, "gamma", 2.2, float, "operator."),
        blur_sigma=_get(op_raw, "blur_sigma", 2.0, float, "operator."),
        kernel_radius=_get(op_raw, "kernel_radius", 6, int, "operator."),
    )

    net_raw = raw.get("network", {}) or {}
    _require_keys(
        net_raw,
        {"depth", "channels", "kernel_size", "skip", "activation", "upsample_mode"},
        "network.",
    )
    depth = _get(net_raw, "depth", 5, int, "network.")
    channels = net_raw.get("channels") or default_channels(depth)
    network = NetworkSection(
        depth=depth,
        channels=tuple(int(c) for c in channels),
        kernel_size=_get(net_raw, "kernel_size", 3, int, "network."),
        skip=bool(net_raw.get("skip", True)),
        activation=_get(net_raw, "activation", "leaky_relu", str, "network."),
        upsample_mode=_get(net_raw, "upsample_mode", "nearest", str, "network."),
    )
    if data.image_size % (2**network.depth) != 0:
        raise ConfigurationError(
            f"data.image_size {data.image_size} must be a multiple of 2^depth "
            f"({2 ** network.depth})"
        )

    solver_raw = raw.get("solver", {}) or {}
    _require_keys(
        solver_raw, {"K", "N", "lambda", "beta", "sigma_ini", "joint_step"}, "solver."
    )
    default_n, default_k = _TASK_NK[task]
    sigma_ini = solver_raw.get("sigma_ini", "auto")
    if not isinstance(sigma_ini, str):
        sigma_ini = float(sigma_ini)
    solver = SolverConfig(
        K=_get(solver_raw, "K", default_k, int, "solver."),
        N=_get(solver_raw, "N", default_n, int, "solver."),
        lam=_get(solver_raw, "lambda", 2.0, float, "solver."),
        beta=_get(solver_raw, "beta", 1e-4, float, "solver."),
        sigma_ini=sigma_ini,
        seed=seed,
        joint_step=bool(solver_raw.get("joint_step", False)),
    )

    run_raw = raw.get("run", {}) or {}
    _require_keys(
        run_raw,
        {
            "modes",
            "train",
            "train_shared_decoder",
            "checkpoint_path",
            "shared_checkpoint_path",
            "output_dir",
            "save_plots",
            "save_grids",
        },
        "run.",
    )
    modes = tuple(run_raw.get("modes", ("frozen", "scratch")))
    for mode in modes:
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r} in run.modes")
    run = RunSection(
        modes=modes,
        train=bool(run_raw.get("train", True)),
        train_shared_decoder=bool(run_raw.get("train_shared_decoder", False)),
        checkpoint_path=run_raw.get("checkpoint_path"),
        shared_checkpoint_path=run_raw.get("shared_checkpoint_path"),
        output_dir=run_raw.get("output_dir"),
        save_plots=bool(run_raw.get("save_plots", True)),
        save_grids=bool(run_raw.get("save_grids", True)),
    )
    if "frozen_shared" in modes and not (
        run.train_shared_decoder or run.shared_checkpoint_path
    ):
        raise ConfigurationError(
            "mode frozen_shared needs run.train_shared_decoder or a shared checkpoint"
        )

    return ExperimentConfig(
        task=task,
        seed=seed,
        data=data,
        operator=operator,
        network=network,
        solver=solver,
        run=run,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw or {})


def apply_overrides(raw: dict, assignments: list[str]) -> dict:
    """Apply ``section.key=value`` overrides to a raw config dict."""
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigurationError(f"override {assignment!r} is not of the form key=value")
        dotted, text = assignment.split("=", 1)
        value = yaml.safe_load(text)
        node = raw
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot descend into {dotted!r}")
        node[parts[-1]] = value
    return raw
