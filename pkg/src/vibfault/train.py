"""Mini-batch training loop and backbone pretraining."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .autodiff import GradTape, backward, cross_entropy
from .metrics import evaluate, stack_samples
from .model import Model
from .optim import Adam, clip_grad_norm
from .pipeline import DatasetSplit, WindowedSample


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0
    clip_norm: Optional[float] = None
    patience: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


def _check_labels(samples: Sequence[WindowedSample], num_classes: int, part: str) -> None:
    for s in samples:
        if not (0 <= s.label < num_classes):
            raise ValueError(
                f"{part} label {s.label} out of range for {num_classes}-class head")


def train_model(model: Model, train_samples: Sequence[WindowedSample],
                val_samples: Sequence[WindowedSample],
                config: TrainConfig) -> TrainHistory:
    """Adam + sparse cross-entropy over shuffled mini-batches.

    Tracks per-epoch loss and accuracies, keeps the best-validation-accuracy
    parameters, and restores them into the model before returning.
    Deterministic for a fixed seed.
    """
    if not train_samples:
        raise ValueError("training set is empty")
    _check_labels(train_samples, model.num_classes, "train")
    _check_labels(val_samples, model.num_classes, "validation")

    X, y = stack_samples(train_samples)
    n = len(y)
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(trainable_only=True), config.learning_rate,
                     config.beta1, config.beta2, config.epsilon)
    history = TrainHistory()
    best_val = -1.0
    best_params: Optional[list[np.ndarray]] = None
    since_best = 0

    # single-threaded BLAS wins for this network's small GEMMs and keeps
    # parallel harness workers from oversubscribing the cores
    with threadpool_limits(limits=1):
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            total_loss = 0.0
            correct = 0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                xb, yb = X[idx], y[idx]
                model.zero_grad()
                tape = GradTape()
                logits = model.forward(xb, tape=tape)
                loss = cross_entropy(logits, yb, tape=tape)
                backward(tape, loss)
                if config.clip_norm is not None:
                    clip_grad_norm(model.parameters(trainable_only=True),
                                   config.clip_norm)
                optimizer.step()
                total_loss += float(loss.data) * len(idx)
                correct += int((np.argmax(logits.data, axis=1) == yb).sum())
            history.train_loss.append(total_loss / n)
            history.train_accuracy.append(100.0 * correct / n)

            if val_samples:
                val_acc, _ = evaluate(model, val_samples)
            else:
                val_acc = history.train_accuracy[-1]
            history.val_accuracy.append(val_acc)

            if val_acc > best_val:
                best_val = val_acc
                best_params = [p.data.copy() for p in model.parameters()]
                history.best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if config.patience is not None and since_best >= config.patience:
                    break

    if best_params is not None:
        for p, data in zip(model.parameters(), best_params):
            p.data = data
    model.zero_grad()
    return history


def pretrain(model: Model, data: DatasetSplit,
             config: TrainConfig) -> tuple[Model, TrainHistory]:
    """Backbone pretraining over the combined multi-fault dataset.

    Requires every layer to be trainable and all labels to fit the head.
    """
    if not all(layer.trainable for layer in model.conv_layers) or not model.head.trainable:
        raise ValueError("pretraining requires all layers trainable")
    history = train_model(model, data.train, data.validation, config)
    return model, history
