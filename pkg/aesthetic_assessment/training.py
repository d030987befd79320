"""MSE objective, two-stage Adam schedule and the end-to-end training pipeline."""

import csv
import enum
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from humanfriendly import format_timespan

from .dataset import AestheticDataset, load_benchmark_records, make_loader, split_dataset
from .evaluation import evaluate, predict, spearman_rho
from .reporting import write_report
from .exceptions import EmptySplitError, TrainingDivergedError, UndefinedCorrelationError
from .network import (
    BackboneSpec,
    HeadSpec,
    build_network,
    save_checkpoint,
    set_trainable,
    trainable_parameters,
)

logger = logging.getLogger(__name__)

STAGE2_UNFREEZE = ("block4_conv2", "block4_conv3")
LOG_COLUMNS = ("step", "epoch", "stage", "lr", "train_loss", "val_loss", "val_rho")

# Report column written after each stage.
STAGE_COLUMNS = {"stage1": "training", "stage2": "fine_tuning"}


class StageId(str, enum.Enum):
    STAGE1 = "stage1"
    STAGE2 = "stage2"


class Schedule(str, enum.Enum):
    CONSTANT = "constant"
    STAIRCASE = "staircase"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class StageConfig:
    stage_id: StageId
    lr: float
    epochs: int
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    trainable: tuple = ("head",)
    schedule: Schedule = Schedule.CONSTANT
    decay_steps: int = 125
    decay_base: float = 0.5
    flip_probability: float = 0.5

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError(f"Invalid {self.stage_id.value} settings: lr, epochs or batch size")
        if self.schedule != Schedule.CONSTANT and (self.decay_steps < 1 or not 0 < self.decay_base):
            raise ValueError("Decay steps must be >= 1 and the decay base positive")

    @classmethod
    def stage1(cls, **overrides):
        """Head-only training: Adam(0.001, 0.9, 0.999), 5 epochs, batch 64, constant rate."""
        return replace(cls(stage_id=StageId.STAGE1, lr=0.001, epochs=5), **overrides)

    @classmethod
    def stage2(cls, **overrides):
        """Fine-tuning block4_conv2/3 and the head at 0.0001, halved every 125 steps, 3 epochs."""
        stage = cls(
            stage_id=StageId.STAGE2,
            lr=0.0001,
            epochs=3,
            trainable=("head", *STAGE2_UNFREEZE),
            schedule=Schedule.STAIRCASE,
        )
        return replace(stage, **overrides)


@dataclass(frozen=True)
class ValidationRecord:
    stage: str
    epoch: int
    loss: float
    rho: float


@dataclass
class TrainState:
    seed: int = 0
    global_step: int = 0
    epoch: int = 0
    loss_history: list = field(default_factory=list)
    validation_history: list = field(default_factory=list)


def mse_loss(predictions, targets, weights=None):
    """
    Mean of squared differences over every batch entry and output.

    weights is the per-target weighting hook; the default (all ones) is the
    plain MSE, and it is the only setting the pipeline uses by default.
    """
    predictions = torch.as_tensor(predictions)
    targets = torch.as_tensor(targets, dtype=predictions.dtype, device=predictions.device)
    if predictions.shape != targets.shape:
        raise ValueError(
            f"Shape mismatch: predictions {tuple(predictions.shape)} vs targets {tuple(targets.shape)}"
        )
    if not (torch.isfinite(predictions).all() and torch.isfinite(targets).all()):
        raise ValueError("Predictions and targets must be finite")
    squared = (predictions - targets) ** 2
    if weights is not None:
        weights = torch.as_tensor(weights, dtype=squared.dtype, device=squared.device)
        if weights.shape != squared.shape[-1:]:
            raise ValueError(f"Expected {squared.shape[-1]} loss weights, got {tuple(weights.shape)}")
        squared = squared * weights
    return squared.mean()


def lr_schedule(stage, step):
    if step < 0:
        raise ValueError(f"Step must be non-negative, got {step}")
    if stage.schedule == Schedule.CONSTANT:
        return stage.lr
    if stage.schedule == Schedule.STAIRCASE:
        return stage.lr * stage.decay_base ** (step // stage.decay_steps)
    return stage.lr * stage.decay_base ** (step / stage.decay_steps)


def configure_determinism(seed, deterministic=True):
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    if deterministic:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.backends.cudnn.benchmark = False
    torch.use_deterministic_algorithms(deterministic)


def resolve_device(name="auto"):
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


class TrainingLog:
    """CSV writer for per-step losses and per-epoch validation rows."""

    def __init__(self, path):
        self.path = Path(path) if path else None
        self._handle = None
        self._writer = None

    def __enter__(self):
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", newline="", encoding="utf-8")
            self._writer = csv.DictWriter(self._handle, fieldnames=LOG_COLUMNS, lineterminator="\n")
            self._writer.writeheader()
        return self

    def __exit__(self, *exc):
        if self._handle is not None:
            self._handle.close()
        return False

    def write(self, **row):
        if self._writer is not None:
            self._writer.writerow(row)


def validate(net, records, batch_size=64, device="cpu", num_workers=0):
    """Validation MSE over every output plus the overall-score rank correlation."""
    predictions = predict(net, records, batch_size=batch_size, device=device, num_workers=num_workers)
    targets = np.array([r.normalized_targets[: net.output_units] for r in records])
    loss = float(mse_loss(torch.from_numpy(predictions), torch.from_numpy(targets)))
    try:
        rho = spearman_rho(targets[:, 0], predictions[:, 0])
    except UndefinedCorrelationError as e:
        logger.warning("Validation correlation undefined: %s", e)
        rho = float("nan")
    return loss, rho


def train_stage(
    net,
    splits,
    stage,
    state,
    device="cpu",
    loss_weights=None,
    num_workers=0,
    log=None,
):
    """
    Run one optimization stage and return (net, state).

    Only the layers named in stage.trainable receive updates. The learning-rate
    schedule counts steps from zero at the start of the stage, while
    state.global_step keeps counting across stages.
    """
    if not splits.train:
        raise EmptySplitError("The training split is empty")
    device = torch.device(device)
    log = log or TrainingLog(None)

    set_trainable(net, net.layer_names, False)
    set_trainable(net, stage.trainable, True)
    net.to(device)
    optimizer = torch.optim.Adam(
        trainable_parameters(net),
        lr=stage.lr,
        betas=(stage.beta1, stage.beta2),
        eps=stage.epsilon,
    )
    dataset = AestheticDataset(
        splits.train,
        target_size=net.input_size,
        num_outputs=net.output_units,
        augment=stage.flip_probability > 0,
        flip_probability=stage.flip_probability,
        seed=state.seed,
    )
    if not splits.val:
        logger.warning("No validation split; skipping per-epoch validation for %s", stage.stage_id.value)

    started = time.monotonic()
    stage_step = 0
    for _ in range(stage.epochs):
        torch.manual_seed(int(np.random.SeedSequence([state.seed, state.epoch]).generate_state(1)[0]))
        loader = make_loader(dataset.for_epoch(state.epoch), stage.batch_size, shuffle=True, num_workers=num_workers)
        net.train()
        epoch_losses = []
        for batch in loader:
            lr = lr_schedule(stage, stage_step)
            for group in optimizer.param_groups:
                group["lr"] = lr
            predictions = net(batch.images.to(device))
            if not torch.isfinite(predictions).all():
                raise TrainingDivergedError(state.global_step, float("nan"))
            loss = mse_loss(predictions, batch.targets.to(device), weights=loss_weights)
            if not math.isfinite(loss.item()):
                raise TrainingDivergedError(state.global_step, loss.item())
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            value = loss.item()
            state.loss_history.append(value)
            log.write(
                step=state.global_step,
                epoch=state.epoch,
                stage=stage.stage_id.value,
                lr=lr,
                train_loss=value,
                val_loss="",
                val_rho="",
            )
            epoch_losses.append(value)
            state.global_step += 1
            stage_step += 1

        if splits.val:
            val_loss, val_rho = validate(net, splits.val, stage.batch_size, device, num_workers)
            state.validation_history.append(
                ValidationRecord(stage.stage_id.value, state.epoch, val_loss, val_rho)
            )
            log.write(
                step=state.global_step,
                epoch=state.epoch,
                stage=stage.stage_id.value,
                lr=lr_schedule(stage, stage_step),
                train_loss="",
                val_loss=val_loss,
                val_rho=val_rho,
            )
            logger.info(
                "%s epoch %d: train loss %.5f, val loss %.5f, val rho %.4f",
                stage.stage_id.value,
                state.epoch,
                float(np.mean(epoch_losses)),
                val_loss,
                val_rho,
            )
        else:
            logger.info(
                "%s epoch %d: train loss %.5f",
                stage.stage_id.value,
                state.epoch,
                float(np.mean(epoch_losses)),
            )
        state.epoch += 1

    logger.info(
        "%s finished %d steps in %s",
        stage.stage_id.value,
        stage_step,
        format_timespan(time.monotonic() - started),
    )
    return net, state


@dataclass
class PipelineResult:
    network: object
    state: TrainState
    checkpoints: dict
    report: object
    splits: object


def run_pipeline(config):
    """
    Train stage 1 then stage 2, checkpointing and evaluating after each stage.

    Writes stage checkpoints, training_log.csv and the evaluation report under
    config.output_dir.
    """
    configure_determinism(config.seed, config.deterministic)
    device = resolve_device(config.device)
    schema = config.schema
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    records = load_benchmark_records(
        schema,
        manifest=config.manifest,
        votes=config.votes,
        image_root=config.image_root,
    )
    splits = split_dataset(records, schema, config.split_seed)
    logger.info("Split sizes: %s", splits.sizes)

    net = build_network(
        BackboneSpec(widths=config.backbone_widths, weights_path=config.backbone_weights),
        HeadSpec(dropout_rate=config.dropout_rate, output_units=config.output_units),
        seed=config.seed,
        input_size=config.input_size,
    )
    state = TrainState(seed=config.seed)
    checkpoints = {}
    report = None

    with TrainingLog(output_dir / "training_log.csv") as log:
        for stage in config.stages:
            net, state = train_stage(
                net,
                splits,
                stage,
                state,
                device=device,
                loss_weights=config.loss_weights,
                num_workers=config.num_workers,
                log=log,
            )
            checkpoints[stage.stage_id.value] = save_checkpoint(
                net,
                output_dir / f"{stage.stage_id.value}.pt",
                benchmark=schema.benchmark,
                target_names=schema.target_names,
                stage=stage.stage_id.value,
                seed=config.seed,
                global_step=state.global_step,
            )
            if splits.test:
                report = evaluate(
                    net,
                    splits.test,
                    schema,
                    stage=STAGE_COLUMNS.get(stage.stage_id.value, stage.stage_id.value),
                    previous=report,
                    device=device,
                    batch_size=stage.batch_size,
                    num_workers=config.num_workers,
                )
            else:
                logger.warning("No test split; skipping evaluation after %s", stage.stage_id.value)

    if report is not None:
        write_report(report, output_dir / "report")
    return PipelineResult(
        network=net,
        state=state,
        checkpoints=checkpoints,
        report=report,
        splits=splits,
    )
