"""Adaptation of a pretrained backbone to a downstream target task.

The conv stack is copied from the checkpoint with only a short prefix left
trainable (first three conv layers by default); everything downstream stays
frozen except a freshly initialized dense head sized to the target task.
Training then uses a small stratified fraction of the labeled windows.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .metrics import evaluate
from .model import (BACKBONE_CONV_LAYERS, BACKBONE_FILTERS, BACKBONE_KERNEL,
                    DenseLayer, Model, init_dense)
from .pipeline import DatasetSplit, stratified_fraction
from .train import TrainConfig, TrainHistory, train_model

_HEAD_SALT = 0x4EAD


@dataclass
class FineTuneConfig:
    labeled_fraction: float
    target_num_classes: int
    trainable_prefix: int = 3
    learning_rate: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0
    clip_norm: Optional[float] = None
    patience: Optional[int] = 10
    hidden_units: Optional[int] = None  # optional extra dense layer, off by default

    def __post_init__(self):
        if not (0 < self.labeled_fraction <= 1):
            raise ValueError(
                f"labeled_fraction must lie in (0, 1], got {self.labeled_fraction}")
        if self.target_num_classes < 2:
            raise ValueError(
                f"target_num_classes must be >= 2, got {self.target_num_classes}")
        if not (0 <= self.trainable_prefix <= BACKBONE_CONV_LAYERS):
            raise ValueError(
                f"trainable_prefix must lie in [0, {BACKBONE_CONV_LAYERS}], "
                f"got {self.trainable_prefix}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, beta1=self.beta1, beta2=self.beta2,
            epsilon=self.epsilon, batch_size=self.batch_size, epochs=self.epochs,
            seed=self.seed, clip_norm=self.clip_norm, patience=self.patience)


@dataclass
class TargetTask:
    """A downstream classification problem over a filtered slice of the data.

    groups maps each task class name to the record fault classes it covers;
    regime restricts the speed profile; severity_band selects the default or
    the wide-severity record pool.
    """
    task_id: str
    name: str
    machine_id: str
    groups: dict[str, tuple[str, ...]]
    regime: Optional[str] = None
    severity_band: str = "default"
    noise_percent: float = 0.0

    @property
    def num_classes(self) -> int:
        return len(self.groups)

    def class_names(self) -> list[str]:
        return sorted(self.groups)


def _expected_conv_fingerprint() -> str:
    shapes = [(BACKBONE_FILTERS, 1, BACKBONE_KERNEL)]
    shapes += [(BACKBONE_FILTERS, BACKBONE_FILTERS, BACKBONE_KERNEL)] * (
        BACKBONE_CONV_LAYERS - 1)
    sig = ";".join(f"{s}" for s in shapes)
    return "conv:" + hashlib.sha256(sig.encode()).hexdigest()[:12]


def fresh_head(seed: int, num_classes: int, n_in: int = BACKBONE_FILTERS) -> DenseLayer:
    """Head initialization depends only on (seed, num_classes), never on the
    head being replaced."""
    rng = np.random.default_rng([seed, num_classes, _HEAD_SALT])
    return init_dense(rng, num_classes, n_in)


def prepare_finetune(pretrained: Model, config: FineTuneConfig) -> Model:
    """Copy the backbone convs, freeze all but the first trainable_prefix of
    them, and attach a freshly initialized head for the target task."""
    if pretrained.conv_fingerprint() != _expected_conv_fingerprint():
        raise ValueError(
            f"not a backbone checkpoint: conv stack fingerprint "
            f"{pretrained.conv_fingerprint()} != expected {_expected_conv_fingerprint()}")
    conv_layers = [layer.copy() for layer in pretrained.conv_layers]
    for i, layer in enumerate(conv_layers):
        layer.trainable = i < config.trainable_prefix
    hidden = None
    head_in = BACKBONE_FILTERS
    if config.hidden_units:
        rng = np.random.default_rng([config.seed, config.hidden_units, _HEAD_SALT, 1])
        hidden = init_dense(rng, config.hidden_units, BACKBONE_FILTERS)
        head_in = config.hidden_units
    head = fresh_head(config.seed, config.target_num_classes, head_in)
    return Model(conv_layers, head, alpha=pretrained.alpha, hidden=hidden)


def finetune(model: Model, data: DatasetSplit, config: FineTuneConfig,
             task: Optional[TargetTask] = None) -> tuple[Model, TrainHistory]:
    """Train the unfrozen prefix + head on a stratified labeled fraction.

    Frozen parameters are bit-identical before and after; deterministic for
    a fixed seed.
    """
    if model.num_classes != config.target_num_classes:
        raise ValueError(
            f"model head has {model.num_classes} classes, config expects "
            f"{config.target_num_classes}")
    if task is not None:
        if set(data.label_map) != set(task.groups):
            raise ValueError(
                f"task inventory {sorted(task.groups)} inconsistent with data "
                f"labels {sorted(data.label_map)}")
    subset = stratified_fraction(data, config.labeled_fraction, config.seed)
    history = train_model(model, subset, data.validation, config.train_config())
    model.label_map = dict(data.label_map)
    return model, history


@dataclass
class CellResult:
    fraction: float
    seed: int
    accuracy: float
    confusion: np.ndarray
    epochs_run: int
    error: Optional[str] = None


@dataclass
class TaskRunResult:
    task_id: str
    fractions: list[float]
    mean_accuracy: list[float]
    std_accuracy: list[float]
    cells: list[CellResult]


def run_target_task(backbone: Model, task: TargetTask, data: DatasetSplit,
                    fractions: Sequence[float], seeds: Sequence[int],
                    base_config: FineTuneConfig) -> TaskRunResult:
    """prepare -> subsample -> finetune -> evaluate for each (fraction, seed);
    reports mean and std accuracy per fraction."""
    for f in fractions:
        if not (0 < f <= 1):
            raise ValueError(f"fraction {f} outside (0, 1]")
    cells: list[CellResult] = []
    means, stds = [], []
    for fraction in fractions:
        accs = []
        for seed in seeds:
            cfg = replace(base_config, labeled_fraction=fraction, seed=seed,
                          target_num_classes=task.num_classes)
            model = prepare_finetune(backbone, cfg)
            model, history = finetune(model, data, cfg, task=task)
            acc, confusion = evaluate(model, data.test)
            cells.append(CellResult(fraction, seed, acc, confusion,
                                    history.epochs_run))
            accs.append(acc)
        means.append(float(np.mean(accs)))
        stds.append(float(np.std(accs)))
    return TaskRunResult(task.task_id, list(fractions), means, stds, cells)
