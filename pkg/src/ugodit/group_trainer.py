"""Group training with a shared encoder and per-measurement decoders.

The trainer alternates two phases for K rounds: N gradient steps on the
network parameters against a measurement-consistency plus autoencoding
objective, then a gradient-free refresh of every network input with its
own decoder output. A single-decoder variant shares one decoder across
all measurements and serves as the ablation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigurationError, ContractError, DivergenceError
from .metrics import GuardedTruth, MetricTrace, psnr, ssim
from .network import ArchitectureSpec, Decoder, Encoder, forward_pass, init_group
from .operators import ForwardOperator, Measurement, apply_adjoint

Tensor = torch.Tensor


@dataclass
class TrainingItem:
    """One degraded measurement, its operator, and optional guarded truth."""

    measurement: Measurement
    operator: ForwardOperator
    truth: GuardedTruth | None = None


@dataclass
class TrainingSet:
    items: list[TrainingItem]

    @property
    def size(self) -> int:
        return len(self.items)


@dataclass
class SolverConfig:
    """Every knob of the alternating solvers.

    ``K`` input-update rounds of ``N`` gradient steps each; ``lam`` weighs
    the autoencoding term; ``beta`` is the Adam learning rate (standard
    moment defaults). ``sigma_ini`` is the init std or ``"auto"`` for
    fan-in scaling. ``joint_step`` applies one fused optimizer step over
    all parameter groups instead of per-group steps; gradients are always
    evaluated at the pre-step parameters, so both orderings see the same
    gradient.
    """

    K: int
    N: int
    lam: float = 2.0
    beta: float = 1e-4
    sigma_ini: float | str = "auto"
    seed: int = 0
    joint_step: bool = False

    def __post_init__(self):
        if self.K < 1 or self.N < 1:
            raise ConfigurationError(f"K and N must be >= 1, got K={self.K}, N={self.N}")
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if self.beta <= 0:
            raise ConfigurationError(f"learning rate must be > 0, got {self.beta}")


@dataclass
class GroupModel:
    """Shared encoder, per-item decoders, and the current network inputs."""

    encoder: Encoder
    decoders: list[Decoder]
    zs: list[Tensor]

    def __post_init__(self):
        if len(self.decoders) not in (1, len(self.zs)):
            raise ContractError(
                f"{len(self.decoders)} decoders but {len(self.zs)} inputs"
            )
        fps = {d.fingerprint for d in self.decoders} | {self.encoder.fingerprint}
        if len(fps) != 1:
            raise ContractError("encoder and decoders were built from different specs")


@dataclass
class TrainResult:
    encoder: Encoder
    decoders: list[Decoder]
    traces: list[MetricTrace]
    final_zs: list[Tensor]


@dataclass
class ItemLoss:
    data_fit: Tensor
    autoenc: Tensor


def group_objective(
    model: GroupModel, training_set: TrainingSet, lam: float
) -> tuple[Tensor, list[ItemLoss]]:
    """Summed data-fit plus ``lam`` times autoencoding loss over all items.

    Both terms are plain sums over entries (no averaging). Returns the
    scalar objective and the per-item breakdown; everything stays
    differentiable with respect to the encoder, each decoder, and the
    inputs.
    """
    items = training_set.items
    if len(items) != len(model.decoders):
        raise ContractError(
            f"{len(items)} measurements but {len(model.decoders)} decoders"
        )
    total = None
    breakdown = []
    for item, decoder, z in zip(items, model.decoders, model.zs):
        out = decoder(model.encoder(z))
        residual = item.operator.apply(out) - item.measurement.y
        data_fit = (residual**2).sum()
        autoenc = ((out - z) ** 2).sum()
        breakdown.append(ItemLoss(data_fit=data_fit, autoenc=autoenc))
        loss = data_fit + lam * autoenc
        total = loss if total is None else total + loss
    return total, breakdown


def _item_losses(encoder, decoder, z, item, lam) -> tuple[Tensor, Tensor, Tensor]:
    out = decoder(encoder(z))
    residual = item.operator.apply(out) - item.measurement.y
    data_fit = (residual**2).sum()
    autoenc = ((out - z) ** 2).sum()
    return data_fit + lam * autoenc, data_fit, autoenc


def run_alternating_rounds(
    model: GroupModel,
    training_set: TrainingSet,
    *,
    K: int,
    N: int,
    lam: float,
    beta: float,
    train_encoder: bool,
    shared_decoder: bool = False,
    update_inputs: bool = True,
    joint_step: bool = False,
    run_prefix: str = "run",
    role: str = "train",
) -> list[MetricTrace]:
    """Low-level alternating loop shared by training and reconstruction.

    Mutates ``model`` in place. When ``shared_decoder`` is set, the single
    decoder in ``model.decoders`` is applied to every item and its
    gradient accumulates over the group. Optimizer state persists across
    all K rounds. Loss is logged every gradient step; PSNR/SSIM are logged
    at round ends when an item carries ground truth.
    """
    items = training_set.items
    if not items:
        raise ContractError("training set is empty")
    if shared_decoder and len(model.decoders) != 1:
        raise ContractError("shared-decoder mode expects exactly one decoder")
    if not shared_decoder and len(model.decoders) != len(items):
        raise ContractError(
            f"{len(items)} measurements but {len(model.decoders)} decoders"
        )

    psi_opts = [
        torch.optim.Adam(d.parameters(), lr=beta) for d in model.decoders
    ]
    phi_opt = (
        torch.optim.Adam(model.encoder.parameters(), lr=beta) if train_encoder else None
    )
    if joint_step:
        params = [p for d in model.decoders for p in d.parameters()]
        if train_encoder:
            params += list(model.encoder.parameters())
        fused = torch.optim.Adam(params, lr=beta)
        psi_opts, phi_opt = [fused], None

    if not train_encoder:
        model.encoder.requires_grad_(False)

    traces = [
        MetricTrace(run_id=f"{run_prefix}/item{i:03d}", role=role)
        for i in range(len(items))
    ]

    def decoder_for(i: int) -> Decoder:
        return model.decoders[0] if shared_decoder else model.decoders[i]

    step = 0
    for k in range(1, K + 1):
        for n in range(1, N + 1):
            step += 1
            total = None
            per_item = []
            for i, item in enumerate(items):
                loss, data_fit, autoenc = _item_losses(
                    model.encoder, decoder_for(i), model.zs[i], item, lam
                )
                per_item.append((data_fit.detach().item(), autoenc.detach().item()))
                total = loss if total is None else total + loss
            if not torch.isfinite(total):
                raise DivergenceError(
                    f"non-finite loss at round {k}, gradient step {n}"
                )
            for opt in psi_opts:
                opt.zero_grad(set_to_none=True)
            if phi_opt is not None:
                phi_opt.zero_grad(set_to_none=True)
            total.backward()
            for opt in psi_opts:
                opt.step()
            if phi_opt is not None:
                phi_opt.step()

            last_of_round = n == N
            for i, (data_fit, autoenc) in enumerate(per_item):
                if last_of_round:
                    continue
                traces[i].append(step, data_fit, autoenc)

        with torch.no_grad():
            for i, item in enumerate(items):
                out = forward_pass(model.encoder, decoder_for(i), model.zs[i])
                quality: tuple[float | None, float | None] = (None, None)
                if item.truth is not None:
                    x_star = item.truth.read("metrics")
                    quality = (psnr(out, x_star), ssim(out, x_star))
                traces[i].append(step, *per_item[i], *quality)
                if update_inputs:
                    model.zs[i] = out.detach()
    return traces


def _prepare(training_set: TrainingSet, spec: ArchitectureSpec) -> list[Tensor]:
    if training_set.size < 1:
        raise ContractError("training set is empty")
    zs = [
        apply_adjoint(item.operator, item.measurement).detach()
        for item in training_set.items
    ]
    shapes = {tuple(z.shape) for z in zs}
    if len(shapes) != 1:
        raise ContractError(f"items have mixed image shapes: {sorted(shapes)}")
    shape = next(iter(shapes))
    if shape[0] != spec.in_channels:
        raise ContractError(
            f"architecture expects {spec.in_channels} input channels, data has {shape[0]}"
        )
    return zs


def train_group(
    training_set: TrainingSet, spec: ArchitectureSpec, config: SolverConfig
) -> TrainResult:
    """Fit a shared encoder with one decoder per measurement.

    Inputs start at the adjoint images; parameters are drawn per
    :func:`ugodit.network.init_group`. Returns the trained encoder, all
    decoders, per-item traces (one loss row per gradient step), and the
    final network inputs.
    """
    zs = _prepare(training_set, spec)
    encoder, decoders = init_group(
        spec, config.sigma_ini, config.seed, training_set.size
    )
    model = GroupModel(encoder=encoder, decoders=decoders, zs=zs)
    traces = run_alternating_rounds(
        model,
        training_set,
        K=config.K,
        N=config.N,
        lam=config.lam,
        beta=config.beta,
        train_encoder=True,
        shared_decoder=False,
        joint_step=config.joint_step,
        run_prefix="train_group",
        role="train",
    )
    return TrainResult(
        encoder=model.encoder, decoders=model.decoders, traces=traces, final_zs=model.zs
    )


def train_shared_decoder(
    training_set: TrainingSet, spec: ArchitectureSpec, config: SolverConfig
) -> TrainResult:
    """Ablation baseline: one decoder shared across every measurement.

    Inputs are still initialized and refreshed per item; the decoder
    gradient is the sum of the per-item gradients. Coincides with
    :func:`train_group` when the training set has a single item.
    """
    zs = _prepare(training_set, spec)
    encoder, decoders = init_group(spec, config.sigma_ini, config.seed, 1)
    model = GroupModel(encoder=encoder, decoders=decoders, zs=zs)
    traces = run_alternating_rounds(
        model,
        training_set,
        K=config.K,
        N=config.N,
        lam=config.lam,
        beta=config.beta,
        train_encoder=True,
        shared_decoder=True,
        joint_step=config.joint_step,
        run_prefix="train_shared",
        role="train",
    )
    return TrainResult(
        encoder=model.encoder, decoders=model.decoders, traces=traces, final_zs=model.zs
    )
