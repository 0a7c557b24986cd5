"""Test-time reconstruction for a single unseen measurement.

Four modes share one alternating loop:

* ``frozen``: the pre-trained encoder is fixed, only the fresh decoder
  (and the evolving input) adapt to the measurement,
* ``warmstart``: the encoder starts from the pre-trained weights but is
  optimized together with the decoder,
* ``scratch``: encoder and decoder both start random; this is the
  single-measurement group update and serves as the standalone baseline,
* ``vanilla``: classic single-network fit with a fixed input, no
  autoencoding term, and no input updates.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass

import torch

from .errors import ArchitectureError, ContractError
from .group_trainer import (
    GroupModel,
    SolverConfig,
    TrainingItem,
    TrainingSet,
    run_alternating_rounds,
)
from .metrics import GuardedTruth, MetricTrace
from .network import (
    ArchitectureSpec,
    Decoder,
    Encoder,
    forward_pass,
    init_group,
    state_checksum,
)
from .operators import ForwardOperator, Measurement, apply_adjoint

Tensor = torch.Tensor

RECON_MODES = ("frozen", "warmstart", "scratch", "vanilla")


@dataclass
class ReconRequest:
    measurement: Measurement
    operator: ForwardOperator
    mode: str
    spec: ArchitectureSpec
    config: SolverConfig
    encoder: Encoder | None = None
    truth: GuardedTruth | None = None
    run_id: str = "recon"


@dataclass
class ReconResult:
    x_hat: Tensor
    trace: MetricTrace
    final_decoder: Decoder
    final_encoder: Encoder
    wall_time_seconds: float
    final_z: Tensor


def reconstruct(request: ReconRequest) -> ReconResult:
    """Solve one measurement according to ``request.mode``.

    The input starts at the adjoint image. Each of the K rounds runs N
    Adam steps on the trainable parameters and then refreshes the input
    with a gradient-free forward pass (except in vanilla mode, which keeps
    the input fixed and forces the autoencoding weight to zero). The
    returned image is the network output on the final input.
    """
    mode = request.mode
    if mode not in RECON_MODES:
        raise ContractError(f"unknown mode {mode!r}; expected one of {RECON_MODES}")
    cfg = request.config
    spec = request.spec

    rand_encoder, decoders = init_group(spec, cfg.sigma_ini, cfg.seed, 1)
    decoder = decoders[0]

    frozen_checksum = None
    if mode in ("frozen", "warmstart"):
        if request.encoder is None:
            raise ContractError(f"mode {mode!r} requires pre-trained encoder weights")
        if request.encoder.fingerprint != spec.fingerprint():
            raise ArchitectureError(
                "pre-trained encoder fingerprint does not match the requested spec"
            )
        encoder = copy.deepcopy(request.encoder)
        if mode == "frozen":
            encoder.requires_grad_(False)
            frozen_checksum = state_checksum(encoder)
    else:
        encoder = rand_encoder

    start = time.perf_counter()
    z0 = apply_adjoint(request.operator, request.measurement).detach()
    model = GroupModel(encoder=encoder, decoders=[decoder], zs=[z0])
    training_set = TrainingSet(
        items=[TrainingItem(request.measurement, request.operator, request.truth)]
    )
    traces = run_alternating_rounds(
        model,
        training_set,
        K=cfg.K,
        N=cfg.N,
        lam=0.0 if mode == "vanilla" else cfg.lam,
        beta=cfg.beta,
        train_encoder=mode != "frozen",
        shared_decoder=False,
        update_inputs=mode != "vanilla",
        joint_step=cfg.joint_step,
        run_prefix=request.run_id,
        role="test",
    )
    wall = time.perf_counter() - start

    if frozen_checksum is not None and state_checksum(encoder) != frozen_checksum:
        raise ArchitectureError("frozen encoder weights changed during reconstruction")

    with torch.no_grad():
        x_hat = forward_pass(encoder, decoder, model.zs[0])
        check = forward_pass(encoder, decoder, model.zs[0])
    if not torch.equal(x_hat, check):
        raise ContractError("reconstruction is not a pure function of the final state")

    trace = traces[0]
    trace.run_id = request.run_id
    return ReconResult(
        x_hat=x_hat,
        trace=trace,
        final_decoder=decoder,
        final_encoder=encoder,
        wall_time_seconds=wall,
        final_z=model.zs[0],
    )


def compare_modes(
    measurement: Measurement,
    operator: ForwardOperator,
    encoder: Encoder,
    spec: ArchitectureSpec,
    config: SolverConfig,
    truth: GuardedTruth | None = None,
    modes: tuple[str, ...] = ("frozen", "warmstart", "scratch"),
) -> dict[str, ReconResult]:
    """Run several modes on one measurement with identical seeds and budget."""
    results = {}
    for mode in modes:
        request = ReconRequest(
            measurement=measurement,
            operator=operator,
            mode=mode,
            spec=spec,
            config=config,
            encoder=encoder if mode in ("frozen", "warmstart") else None,
            truth=truth,
            run_id=mode,
        )
        results[mode] = reconstruct(request)
    return results
