"""Accuracy and confusion-matrix evaluation."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import Model
from .pipeline import WindowedSample

EVAL_BATCH = 64  # larger batches fall out of cache and slow down sharply


def stack_samples(samples: Sequence[WindowedSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([s.values for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


def evaluate(model: Model, samples: Sequence[WindowedSample]) -> tuple[float, np.ndarray]:
    """Accuracy percent plus a confusion matrix indexed [true, predicted].

    Row sums of the confusion matrix equal the per-class sample counts.
    """
    if not samples:
        raise ValueError("cannot evaluate on an empty sample set")
    X, y = stack_samples(samples)
    m = model.num_classes
    if y.min() < 0 or y.max() >= m:
        raise ValueError(f"labels outside [0, {m}) in evaluation set")
    confusion = np.zeros((m, m), dtype=np.int64)
    correct = 0
    for i in range(0, len(y), EVAL_BATCH):
        xb, yb = X[i:i + EVAL_BATCH], y[i:i + EVAL_BATCH]
        pred = model.predict(xb)
        correct += int((pred == yb).sum())
        np.add.at(confusion, (yb, pred), 1)
    accuracy = 100.0 * correct / len(y)
    return accuracy, confusion
