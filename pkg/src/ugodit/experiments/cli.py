"""Command-line entry point.

Verbs:

* ``train``       run the training half of a config (checkpoint only)
* ``reconstruct`` run the test half against an existing checkpoint
* ``sweep``       repeat an experiment along one config axis
* ``probe``       report per-layer low-frequency ratios of a checkpoint
* ``plot``        regenerate curve plots from a run directory's CSVs

Every verb takes ``--config`` plus repeatable ``--set section.key=value``
overrides mirroring the config schema. The default output root comes from
``UGODIT_OUTPUT_ROOT``.
"""

from __future__ import annotations

import argparse
import csv
import sys

import torch
import yaml

from ..errors import UgoditError
from ..metrics import spectral_probe
from ..network import Decoder
from ..network import init_group
from ..seeding import derive_seed
from .checkpoint import load_checkpoint
from .config import apply_overrides, parse_config
from .data import PhantomSpec, synthesize_dataset
from .runner import regenerate_plots, run_experiment, run_sweep


def _load_raw_config(path: str | None, overrides: list[str]) -> dict:
    raw = {}
    if path:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    return apply_overrides(raw, overrides or [])


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a YAML config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key, e.g. --set solver.K=100",
    )


def _cmd_train(args) -> int:
    raw = _load_raw_config(args.config, args.overrides)
    raw.setdefault("run", {})["modes"] = []
    raw["run"]["train"] = True
    config = parse_config(raw)
    out = run_experiment(config)
    print(f"trained; checkpoint and traces under {out}")
    return 0


def _cmd_reconstruct(args) -> int:
    raw = _load_raw_config(args.config, args.overrides)
    run = raw.setdefault("run", {})
    if args.checkpoint:
        run["checkpoint_path"] = args.checkpoint
        run["train"] = False
    if args.modes:
        run["modes"] = args.modes.split(",")
    config = parse_config(raw)
    out = run_experiment(config)
    print(f"reconstructions written to {out}")
    return 0


def _cmd_sweep(args) -> int:
    raw = _load_raw_config(args.config, args.overrides)
    config = parse_config(raw)
    if args.axis == "NK":
        values = []
        for token in args.values.split(","):
            n, k = token.split(":")
            values.append((int(n), int(k)))
    elif args.axis in ("M", "depth"):
        values = [int(v) for v in args.values.split(",")]
    else:
        values = [float(v) for v in args.values.split(",")]
    out = run_sweep(config, args.axis, values, output_dir=args.output_dir)
    print(f"sweep results under {out}")
    return 0


def _cmd_probe(args) -> int:
    encoder, meta = load_checkpoint(args.checkpoint)
    spec = encoder.spec
    family = "ellipses" if spec.in_channels == 2 else "texture"
    size = args.image_size
    image = synthesize_dataset(PhantomSpec(family, seed=args.seed), 1, size)[0]
    _, decoders = init_group(spec, "auto", derive_seed(args.seed, "probe"), 1)
    reports = spectral_probe(encoder, decoders[0], image, args.center_fraction)
    writer = csv.writer(sys.stdout)
    writer.writerow(["layer", "lf_ratio"])
    for report in reports:
        writer.writerow([report.layer, repr(report.lf_ratio)])
    return 0


def _cmd_plot(args) -> int:
    regenerate_plots(args.run_dir)
    print(f"plots regenerated under {args.run_dir}/plots")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ugodit",
        description="group-trained deep image prior with a transferable encoder",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the shared encoder and checkpoint it")
    _add_config_args(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_rec = sub.add_parser("reconstruct", help="reconstruct test measurements")
    _add_config_args(p_rec)
    p_rec.add_argument("--checkpoint", help="use this encoder checkpoint instead of training")
    p_rec.add_argument("--modes", help="comma-separated reconstruction modes")
    p_rec.set_defaults(func=_cmd_reconstruct)

    p_sweep = sub.add_parser("sweep", help="repeat the experiment along one axis")
    _add_config_args(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=("M", "depth", "NK", "lambda"))
    p_sweep.add_argument(
        "--values",
        required=True,
        help="comma-separated values; NK pairs as N:K, e.g. 4:5000,10:2000",
    )
    p_sweep.add_argument("--output-dir")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_probe = sub.add_parser("probe", help="per-layer low-frequency spectrum report")
    p_probe.add_argument("--checkpoint", required=True)
    p_probe.add_argument("--center-fraction", type=float, default=0.25)
    p_probe.add_argument("--image-size", type=int, default=64)
    p_probe.add_argument("--seed", type=int, default=0)
    p_probe.set_defaults(func=_cmd_probe)

    p_plot = sub.add_parser("plot", help="regenerate plots from run CSVs")
    p_plot.add_argument("--run-dir", required=True)
    p_plot.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UgoditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
