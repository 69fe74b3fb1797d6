"""Finite-difference gradient verification for a whole model.

Central differences on the loss, parameter element by parameter element,
compared against the analytic gradients from one taped backward pass.
Failures are reported, never thrown.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradTape, backward
from .model import Model

REL_FLOOR = 1e-6  # denominators below this are treated as this scale


@dataclass
class BlockReport:
    name: str
    shape: tuple
    max_rel_err: float
    ok: bool


@dataclass
class GradCheckReport:
    step: float
    tolerance: float
    blocks: list[BlockReport] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(b.ok for b in self.blocks)

    @property
    def max_rel_err(self) -> float:
        return max((b.max_rel_err for b in self.blocks), default=0.0)

    def format_lines(self) -> list[str]:
        lines = []
        for b in self.blocks:
            status = "ok" if b.ok else "FAIL"
            lines.append(f"{b.name:<14s} {str(b.shape):<16s} "
                         f"max_rel_err={b.max_rel_err:.3e}  {status}")
        lines.append(f"overall: max_rel_err={self.max_rel_err:.3e} "
                     f"tolerance={self.tolerance:.1e} "
                     f"{'PASS' if self.ok else 'FAIL'}")
        return lines


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def finite_difference_check(model: Model, values: np.ndarray, label: int,
                            step: float = 1e-4,
                            tolerance: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients to central differences on one sample.

    Reports the max relative error per parameter block (weight/bias of each
    layer); a block passes when its max relative error is within tolerance.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    values = np.asarray(values, dtype=np.float64)

    model.zero_grad()
    tape = GradTape()
    loss = model.loss(values, label, tape=tape)
    backward(tape, loss)

    named = []
    for i, layer in enumerate(model.conv_layers):
        named.append((f"conv{i + 1:02d}.weight", layer.weight))
        named.append((f"conv{i + 1:02d}.bias", layer.bias))
    if model.hidden is not None:
        named.append(("hidden.weight", model.hidden.weight))
        named.append(("hidden.bias", model.hidden.bias))
    named.append(("head.weight", model.head.weight))
    named.append(("head.bias", model.head.bias))

    report = GradCheckReport(step=step, tolerance=tolerance)
    for name, param in named:
        if not param.requires_grad:
            continue
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        numeric = np.zeros_like(param.data)
        flat = param.data.ravel()
        num_flat = numeric.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = float(model.loss(values, label).data)
            flat[j] = orig - step
            down = float(model.loss(values, label).data)
            flat[j] = orig
            num_flat[j] = (up - down) / (2.0 * step)
        err = float(_relative_error(analytic, numeric).max())
        report.blocks.append(BlockReport(name, tuple(param.data.shape), err,
                                         err <= tolerance))
    model.zero_grad()
    return report
