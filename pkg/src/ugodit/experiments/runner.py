"""Config-driven experiment pipeline.

``run_experiment`` wires the full workflow: synthesize or ingest images,
simulate degraded measurements, train the shared encoder, persist a
checkpoint, reconstruct every test measurement in the requested modes,
and emit CSV metrics, summary statistics, curve plots, and image grids.
CSVs are the source of truth; plots can be regenerated from them.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch
import yaml

from ..adaptive_solver import ReconRequest, ReconResult, reconstruct
from ..errors import ConfigurationError, ContractError
from ..group_trainer import (
    SolverConfig,
    TrainingItem,
    TrainingSet,
    train_group,
    train_shared_decoder,
)
from ..metrics import GuardedTruth, to_magnitude
from ..network import Encoder
from ..operators import (
    ForwardOperator,
    MriOperator,
    NonlinearBlurOperator,
    SuperResOperator,
    apply_adjoint,
    make_cartesian_mask,
    make_sensitivity_maps,
    simulate_measurement,
)
from ..seeding import derive_seed
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .data import PhantomSpec, ingest_directory, synthesize_dataset

OUTPUT_ROOT_ENV = "UGODIT_OUTPUT_ROOT"

METRICS_COLUMNS = (
    "run_id",
    "mode",
    "image_id",
    "iteration",
    "data_fit",
    "autoenc",
    "psnr_db",
    "ssim",
)
SUMMARY_COLUMNS = (
    "mode",
    "psnr_mean",
    "psnr_std",
    "ssim_mean",
    "ssim_std",
    "wall_time_mean",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolve_output_dir(config: ExperimentConfig) -> Path:
    if config.run.output_dir:
        return Path(config.run.output_dir)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{config.task}-seed{config.seed}"


def _make_operator(config: ExperimentConfig, role: str, index: int) -> ForwardOperator:
    op = config.operator
    if config.task == "mri":
        size = config.data.image_size
        maps = make_sensitivity_maps(
            op.coils, size, size, derive_seed(config.seed, "maps")
        )
        mask = make_cartesian_mask(
            size,
            op.acceleration_factor,
            op.acs_fraction,
            derive_seed(config.seed, "mask", role, index),
        )
        return MriOperator(mask, maps)
    if config.task == "sr":
        return SuperResOperator(op.factor)
    return NonlinearBlurOperator(op.gamma, op.blur_sigma, op.kernel_radius)


def _load_images(config: ExperimentConfig) -> tuple[list, list]:
    data = config.data
    if data.source == "directory":
        images = ingest_directory(
            data.directory, data.image_size, data.count_train + data.count_test
        )
        return images[: data.count_train], images[data.count_train :]
    train = synthesize_dataset(
        PhantomSpec(data.family, data.complexity, derive_seed(config.seed, "data", "train")),
        data.count_train,
        data.image_size,
    )
    test = synthesize_dataset(
        PhantomSpec(data.family, data.complexity, derive_seed(config.seed, "data", "test")),
        data.count_test,
        data.image_size,
    ) if data.count_test else []
    return train, test


def _build_training_set(
    config: ExperimentConfig, images
) -> tuple[TrainingSet, list[GuardedTruth]]:
    items, guards = [], []
    for i, x_star in enumerate(images):
        op = _make_operator(config, "train", i)
        measurement = simulate_measurement(
            x_star, op, config.operator.noise_sigma, derive_seed(config.seed, "noise", "train", i)
        )
        guard = GuardedTruth(x_star)
        guards.append(guard)
        items.append(TrainingItem(measurement, op, guard))
    return TrainingSet(items), guards


def _solver_for_run(config: ExperimentConfig, mode: str, index: int) -> SolverConfig:
    base = config.solver
    return SolverConfig(
        K=base.K,
        N=base.N,
        lam=base.lam,
        beta=base.beta,
        sigma_ini=base.sigma_ini,
        seed=derive_seed(config.seed, "recon", mode, index),
        joint_step=base.joint_step,
    )


def _write_metrics_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in METRICS_COLUMNS])


def _write_summary_csv(path: Path, summary: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary:
            writer.writerow([_fmt(row[col]) for col in SUMMARY_COLUMNS])


def _mean_psnr_curves(rows: list[dict]) -> dict[str, tuple[list[int], list[float]]]:
    by_mode: dict[str, dict[int, list[float]]] = {}
    for row in rows:
        if row["psnr_db"] is None:
            continue
        by_mode.setdefault(row["mode"], {}).setdefault(row["iteration"], []).append(
            row["psnr_db"]
        )
    curves = {}
    for mode, series in by_mode.items():
        iters = sorted(series)
        curves[mode] = (iters, [float(np.mean(series[i])) for i in iters])
    return curves


def plot_psnr_curves(rows: list[dict], path: Path, title: str = "") -> None:
    curves = _mean_psnr_curves(rows)
    if not curves:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, (iters, vals) in sorted(curves.items()):
        ax.plot(iters, vals, label=mode)
    ax.set_xlabel("gradient iteration")
    ax.set_ylabel("PSNR (dB)")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _grid_panel(x) -> np.ndarray:
    arr = to_magnitude(x)
    if arr.shape[0] == 1:
        return arr[0]
    return np.clip(arr.transpose(1, 2, 0), 0.0, 1.0)


def _save_grid(path: Path, panels: list[tuple[str, np.ndarray]]) -> None:
    fig, axes = plt.subplots(1, len(panels), figsize=(2.6 * len(panels), 2.9))
    if len(panels) == 1:
        axes = [axes]
    for ax, (label, img) in zip(axes, panels):
        if img.ndim == 2:
            ax.imshow(img, cmap="gray")
        else:
            ax.imshow(img)
        ax.set_title(label, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _summarize(recons: dict[str, list[ReconResult]]) -> list[dict]:
    summary = []
    for mode in sorted(recons):
        results = recons[mode]
        psnrs = [r.trace.final_psnr for r in results if r.trace.final_psnr is not None]
        ssims = [
            r.trace.rows[-1].ssim for r in results if r.trace.rows[-1].ssim is not None
        ]
        walls = [r.wall_time_seconds for r in results]
        summary.append(
            {
                "mode": mode,
                "psnr_mean": float(np.mean(psnrs)) if psnrs else None,
                "psnr_std": float(np.std(psnrs)) if psnrs else None,
                "ssim_mean": float(np.mean(ssims)) if ssims else None,
                "ssim_std": float(np.std(ssims)) if ssims else None,
                "wall_time_mean": float(np.mean(walls)) if walls else None,
            }
        )
    return summary


def run_experiment(config: ExperimentConfig) -> Path:
    """Execute the full pipeline for one config; returns the output dir."""
    out_dir = resolve_output_dir(config)
    traces_dir = out_dir / "traces"
    plots_dir = out_dir / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    traces_dir.mkdir(exist_ok=True)
    plots_dir.mkdir(exist_ok=True)

    spec = config.architecture()
    train_images, test_images = _load_images(config)
    guards: list[GuardedTruth] = []

    manifest = {
        "config": config.resolved(),
        "architecture_fingerprint": spec.fingerprint(),
        "seeds": {
            "master": config.seed,
            "data_train": derive_seed(config.seed, "data", "train"),
            "data_test": derive_seed(config.seed, "data", "test"),
            "maps": derive_seed(config.seed, "maps"),
        },
    }

    checkpoint_path = Path(
        config.run.checkpoint_path or out_dir / "encoder.ckpt"
    )
    shared_checkpoint_path = Path(
        config.run.shared_checkpoint_path or out_dir / "encoder_shared.ckpt"
    )

    encoder: Encoder | None = None
    shared_encoder: Encoder | None = None
    provenance = {
        "task": config.task,
        "M": config.data.count_train,
        "lambda": config.solver.lam,
        "K": config.solver.K,
        "N": config.solver.N,
        "seed": config.seed,
    }

    if config.run.train:
        training_set, train_guards = _build_training_set(config, train_images)
        guards.extend(train_guards)
        result = train_group(training_set, spec, config.solver)
        encoder = result.encoder
        save_checkpoint(encoder, provenance, checkpoint_path)
        for i, trace in enumerate(result.traces):
            trace.write_csv(traces_dir / f"train_group_item{i:03d}.csv")
        if config.run.train_shared_decoder:
            shared_set, shared_guards = _build_training_set(config, train_images)
            guards.extend(shared_guards)
            shared_result = train_shared_decoder(shared_set, spec, config.solver)
            shared_encoder = shared_result.encoder
            save_checkpoint(
                shared_encoder, {**provenance, "variant": "shared_decoder"},
                shared_checkpoint_path,
            )
            for i, trace in enumerate(shared_result.traces):
                trace.write_csv(traces_dir / f"train_shared_item{i:03d}.csv")
    else:
        if not checkpoint_path.is_file():
            raise ConfigurationError(
                f"run.train is false but no checkpoint at {checkpoint_path}"
            )
        encoder, _ = load_checkpoint(checkpoint_path)
        if "frozen_shared" in config.run.modes:
            shared_encoder, _ = load_checkpoint(shared_checkpoint_path)

    manifest["checkpoint"] = str(checkpoint_path)

    metric_rows: list[dict] = []
    recons: dict[str, list[ReconResult]] = {}
    for j, x_star in enumerate(test_images):
        op = _make_operator(config, "test", j)
        measurement = simulate_measurement(
            x_star,
            op,
            config.operator.noise_sigma,
            derive_seed(config.seed, "noise", "test", j),
        )
        guard = GuardedTruth(x_star)
        guards.append(guard)
        panels = [
            ("ground truth", _grid_panel(x_star)),
            ("adjoint input", _grid_panel(apply_adjoint(op, measurement))),
        ]
        for mode in config.run.modes:
            solver_mode = "frozen" if mode == "frozen_shared" else mode
            used_encoder = shared_encoder if mode == "frozen_shared" else encoder
            request = ReconRequest(
                measurement=measurement,
                operator=op,
                mode=solver_mode,
                spec=spec,
                config=_solver_for_run(config, mode, j),
                encoder=used_encoder if solver_mode in ("frozen", "warmstart") else None,
                truth=guard,
                run_id=f"{config.task}-{mode}-img{j:03d}",
            )
            result = reconstruct(request)
            recons.setdefault(mode, []).append(result)
            result.trace.write_csv(traces_dir / f"{mode}_img{j:03d}.csv")
            for row in result.trace.rows:
                if row.psnr_db is None:
                    continue
                metric_rows.append(
                    {
                        "run_id": result.trace.run_id,
                        "mode": mode,
                        "image_id": j,
                        "iteration": row.iteration,
                        "data_fit": row.data_fit,
                        "autoenc": row.autoenc,
                        "psnr_db": row.psnr_db,
                        "ssim": row.ssim,
                    }
                )
            panels.append((mode, _grid_panel(result.x_hat)))
        if config.run.save_grids and test_images:
            _save_grid(plots_dir / f"recon_img{j:03d}.png", panels)

    foreign = [p for g in guards for p in g.foreign_reads]
    if foreign:
        raise ContractError(
            f"ground truth was read outside metric logging: {sorted(set(foreign))}"
        )
    manifest["ground_truth_reads"] = {
        "metrics": sum(len(g.reads) for g in guards),
        "other": 0,
    }

    _write_metrics_csv(out_dir / "metrics.csv", metric_rows)
    _write_summary_csv(out_dir / "summary.csv", _summarize(recons))
    if config.run.save_plots and metric_rows:
        plot_psnr_curves(
            metric_rows, plots_dir / "psnr_curves.png", title=config.task
        )

    with open(out_dir / "manifest.yaml", "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=True)
    return out_dir


def read_metrics_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            rows.append(
                {
                    "run_id": raw["run_id"],
                    "mode": raw["mode"],
                    "image_id": int(raw["image_id"]),
                    "iteration": int(raw["iteration"]),
                    "data_fit": float(raw["data_fit"]),
                    "autoenc": float(raw["autoenc"]),
                    "psnr_db": float(raw["psnr_db"]) if raw["psnr_db"] else None,
                    "ssim": float(raw["ssim"]) if raw["ssim"] else None,
                }
            )
    return rows


def regenerate_plots(run_dir) -> None:
    """Rebuild curve plots from the CSVs in an existing run directory."""
    run_dir = Path(run_dir)
    rows = read_metrics_csv(run_dir / "metrics.csv")
    (run_dir / "plots").mkdir(exist_ok=True)
    plot_psnr_curves(rows, run_dir / "plots" / "psnr_curves.png")


SWEEP_AXES = ("M", "depth", "NK", "lambda")


def _sweep_variant(base: dict, axis: str, value) -> tuple[dict, str]:
    raw = yaml.safe_load(yaml.safe_dump(base))  # deep copy
    if axis == "M":
        raw["data"]["count_train"] = int(value)
        label = f"M{int(value)}"
    elif axis == "depth":
        raw["network"]["depth"] = int(value)
        raw["network"]["channels"] = None
        label = f"depth{int(value)}"
    elif axis == "NK":
        n, k = value
        raw["solver"]["N"] = int(n)
        raw["solver"]["K"] = int(k)
        label = f"N{int(n)}K{int(k)}"
    elif axis == "lambda":
        raw["solver"]["lambda"] = float(value)
        label = f"lambda{value}"
    else:
        raise ConfigurationError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    return raw, label


def run_sweep(
    base_config: ExperimentConfig, axis: str, values, output_dir=None
) -> Path:
    """Run one experiment per axis value with a shared test set and seeds.

    Emits per-value run directories, a ``sweep_summary.csv`` table, and an
    overlay plot of the mean frozen-mode PSNR curves.
    """
    from .config import parse_config

    sweep_dir = Path(output_dir) if output_dir else resolve_output_dir(base_config).parent / (
        f"sweep-{axis}-{base_config.task}-seed{base_config.seed}"
    )
    sweep_dir.mkdir(parents=True, exist_ok=True)

    base_raw = base_config.resolved()
    summary_rows = []
    overlay: dict[str, tuple[list[int], list[float]]] = {}
    for value in values:
        raw, label = _sweep_variant(base_raw, axis, value)
        raw["run"]["output_dir"] = str(sweep_dir / label)
        variant = parse_config(raw)
        run_dir = run_experiment(variant)
        rows = read_metrics_csv(run_dir / "metrics.csv")
        curves = _mean_psnr_curves(rows)
        preferred = "frozen" if "frozen" in curves else (sorted(curves)[0] if curves else None)
        if preferred:
            overlay[label] = curves[preferred]
        with open(run_dir / "summary.csv", newline="") as fh:
            for srow in csv.DictReader(fh):
                summary_rows.append({"value": label, **srow})

    with open(sweep_dir / "sweep_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", *SUMMARY_COLUMNS])
        for row in summary_rows:
            writer.writerow([row["value"], *[row[c] for c in SUMMARY_COLUMNS]])

    if overlay:
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (iters, vals) in sorted(overlay.items()):
            ax.plot(iters, vals, label=label)
        ax.set_xlabel("gradient iteration")
        ax.set_ylabel("PSNR (dB)")
        ax.set_title(f"sweep over {axis}")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(sweep_dir / "sweep_curves.png", dpi=110)
        plt.close(fig)
    return sweep_dir
