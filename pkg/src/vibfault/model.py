"""The 1-D CNN classifier: 15 conv layers, global average pooling, dense head.

Every conv layer has 64 filters of kernel size 3 with LeakyReLU activation;
same-padding keeps the sequence length until pooling, so the head is
independent of the input window length. A reduced-depth variant of the same
stack is available for gradient checking.
"""
from __future__ import annotations

import hashlib
import json
import struct
from typing import Optional

import numpy as np

from .autodiff import GradTape, Tensor, conv1d, cross_entropy, dense, global_avg_pool, leaky_relu

CHECKPOINT_MAGIC = b"VIBFAULT-CKPT-1\n"

BACKBONE_CONV_LAYERS = 15
BACKBONE_FILTERS = 64
BACKBONE_KERNEL = 3


class ConvLayer:
    def __init__(self, weight: Tensor, bias: Tensor):
        self.weight = weight
        self.bias = bias

    @property
    def trainable(self) -> bool:
        return self.weight.requires_grad

    @trainable.setter
    def trainable(self, flag: bool) -> None:
        self.weight.requires_grad = flag
        self.bias.requires_grad = flag

    def copy(self) -> "ConvLayer":
        return ConvLayer(self.weight.copy(), self.bias.copy())


class DenseLayer(ConvLayer):
    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy())


def _he_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_conv(rng: np.random.Generator, c_out: int, c_in: int, k: int,
              trainable: bool = True) -> ConvLayer:
    w = Tensor(_he_uniform(rng, (c_out, c_in, k), c_in * k), requires_grad=trainable)
    b = Tensor(np.zeros(c_out), requires_grad=trainable)
    return ConvLayer(w, b)


def init_dense(rng: np.random.Generator, n_out: int, n_in: int,
               trainable: bool = True) -> DenseLayer:
    w = Tensor(_he_uniform(rng, (n_out, n_in), n_in), requires_grad=trainable)
    b = Tensor(np.zeros(n_out), requires_grad=trainable)
    return DenseLayer(w, b)


class Model:
    """Conv stack + GAP + dense head, with a per-layer trainability mask."""

    def __init__(self, conv_layers: list[ConvLayer], head: DenseLayer,
                 alpha: float = 0.01, label_map: Optional[dict[str, int]] = None,
                 hidden: Optional[DenseLayer] = None):
        self.conv_layers = conv_layers
        self.hidden = hidden
        self.head = head
        self.alpha = alpha
        self.label_map = label_map

    @property
    def num_classes(self) -> int:
        return self.head.weight.data.shape[0]

    def layer_names(self) -> list[str]:
        names = [f"conv{i + 1:02d}" for i in range(len(self.conv_layers))]
        names.append("gap")
        if self.hidden is not None:
            names.append("hidden")
        names.append("head")
        return names

    def trainable_mask(self) -> list[bool]:
        """Trainability flag per layer, in forward order (gap is parameter-free
        and always reported frozen)."""
        mask = [layer.trainable for layer in self.conv_layers]
        mask.append(False)
        if self.hidden is not None:
            mask.append(self.hidden.trainable)
        mask.append(self.head.trainable)
        return mask

    def parameters(self, trainable_only: bool = False) -> list[Tensor]:
        params: list[Tensor] = []
        for layer in self.conv_layers:
            params.extend((layer.weight, layer.bias))
        if self.hidden is not None:
            params.extend((self.hidden.weight, self.hidden.bias))
        params.extend((self.head.weight, self.head.bias))
        if trainable_only:
            params = [p for p in params if p.requires_grad]
        return params

    def parameter_count(self, trainable_only: bool = False) -> int:
        return sum(p.data.size for p in self.parameters(trainable_only))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def fingerprint(self) -> str:
        """Hash of the layer shapes; the conv-stack part is independent of the head."""
        conv_sig = ";".join(
            f"{tuple(c.weight.data.shape)}" for c in self.conv_layers)
        conv_hash = hashlib.sha256(conv_sig.encode()).hexdigest()[:12]
        head_sig = ""
        if self.hidden is not None:
            head_sig += f"{tuple(self.hidden.weight.data.shape)};"
        head_sig += f"{tuple(self.head.weight.data.shape)}"
        head_hash = hashlib.sha256(head_sig.encode()).hexdigest()[:12]
        return f"conv:{conv_hash}|head:{head_hash}"

    def conv_fingerprint(self) -> str:
        return self.fingerprint().split("|")[0]

    def forward(self, x: np.ndarray, tape: Optional[GradTape] = None) -> Tensor:
        """Map windows [B, L] (or a single [L]) to logits [B, M] (or [M])."""
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        t = Tensor(arr[None, :, :])  # channels-first [1, B, L]
        for layer in self.conv_layers:
            t = conv1d(t, layer.weight, layer.bias, padding="same", tape=tape)
            t = leaky_relu(t, self.alpha, tape=tape)
        t = global_avg_pool(t, tape=tape)
        if self.hidden is not None:
            t = dense(t, self.hidden.weight, self.hidden.bias, tape=tape)
            t = leaky_relu(t, self.alpha, tape=tape)
        t = dense(t, self.head.weight, self.head.bias, tape=tape)
        if single:
            t = Tensor(t.data[0]) if tape is None else t
        return t

    def loss(self, x: np.ndarray, labels, tape: Optional[GradTape] = None) -> Tensor:
        logits = self.forward(x, tape=tape)
        return cross_entropy(logits, labels, tape=tape)

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits = self.forward(x)
        return np.argmax(logits.data, axis=-1)

    def copy(self) -> "Model":
        return Model(
            [c.copy() for c in self.conv_layers],
            self.head.copy(),
            alpha=self.alpha,
            label_map=dict(self.label_map) if self.label_map else None,
            hidden=self.hidden.copy() if self.hidden is not None else None,
        )

    def set_parameters_from(self, other: "Model") -> None:
        mine, theirs = self.parameters(), other.parameters()
        if len(mine) != len(theirs):
            raise ValueError("parameter lists differ in length")
        for p, q in zip(mine, theirs):
            p.data = q.data.copy()


def build_cnn(num_classes: int, n_conv: int, filters: int = BACKBONE_FILTERS,
              kernel: int = BACKBONE_KERNEL, alpha: float = 0.01, seed: int = 0,
              label_map: Optional[dict[str, int]] = None) -> Model:
    """Seeded construction of a conv stack + GAP + dense head."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if n_conv < 1:
        raise ValueError(f"need at least one conv layer, got {n_conv}")
    rng = np.random.default_rng(seed)
    layers = [init_conv(rng, filters, 1, kernel)]
    for _ in range(n_conv - 1):
        layers.append(init_conv(rng, filters, filters, kernel))
    head = init_dense(rng, num_classes, filters)
    return Model(layers, head, alpha=alpha, label_map=label_map)


def build_backbone(num_classes: int, seed: int = 0, alpha: float = 0.01,
                   label_map: Optional[dict[str, int]] = None) -> Model:
    """The full backbone: 15 conv layers of 64 filters, kernel 3."""
    return build_cnn(num_classes, BACKBONE_CONV_LAYERS, BACKBONE_FILTERS,
                     BACKBONE_KERNEL, alpha=alpha, seed=seed, label_map=label_map)


def backbone_parameter_count(num_classes: int) -> int:
    """Closed-form parameter count of the backbone for a given head size."""
    first = BACKBONE_FILTERS * 1 * BACKBONE_KERNEL + BACKBONE_FILTERS
    middle = BACKBONE_FILTERS * BACKBONE_FILTERS * BACKBONE_KERNEL + BACKBONE_FILTERS
    head = (BACKBONE_FILTERS + 1) * num_classes
    return first + (BACKBONE_CONV_LAYERS - 1) * middle + head


def save_checkpoint(model: Model, path) -> None:
    """Write a versioned flat binary container: magic, JSON header, raw arrays."""
    entries = []
    arrays: list[np.ndarray] = []
    for i, layer in enumerate(model.conv_layers):
        entries.append({"kind": "conv", "name": f"conv{i + 1:02d}",
                        "weight": list(layer.weight.data.shape),
                        "bias": list(layer.bias.data.shape),
                        "trainable": layer.trainable})
        arrays.extend((layer.weight.data, layer.bias.data))
    if model.hidden is not None:
        entries.append({"kind": "dense", "name": "hidden",
                        "weight": list(model.hidden.weight.data.shape),
                        "bias": list(model.hidden.bias.data.shape),
                        "trainable": model.hidden.trainable})
        arrays.extend((model.hidden.weight.data, model.hidden.bias.data))
    entries.append({"kind": "dense", "name": "head",
                    "weight": list(model.head.weight.data.shape),
                    "bias": list(model.head.bias.data.shape),
                    "trainable": model.head.trainable})
    arrays.extend((model.head.weight.data, model.head.bias.data))
    header = {
        "fingerprint": model.fingerprint(),
        "alpha": model.alpha,
        "num_classes": model.num_classes,
        "label_map": model.label_map,
        "layers": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> Model:
    """Read a checkpoint, rejecting unknown or incompatible containers."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(
                f"{path}: not a model checkpoint (bad magic {magic[:16]!r})")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        conv_layers: list[ConvLayer] = []
        hidden: Optional[DenseLayer] = None
        head: Optional[DenseLayer] = None
        for entry in header["layers"]:
            w_shape, b_shape = tuple(entry["weight"]), tuple(entry["bias"])
            w = np.frombuffer(fh.read(8 * int(np.prod(w_shape))),
                              dtype="<f8").reshape(w_shape).copy()
            b = np.frombuffer(fh.read(8 * int(np.prod(b_shape))),
                              dtype="<f8").reshape(b_shape).copy()
            trainable = bool(entry["trainable"])
            if entry["kind"] == "conv":
                conv_layers.append(ConvLayer(Tensor(w, trainable), Tensor(b, trainable)))
            elif entry["name"] == "hidden":
                hidden = DenseLayer(Tensor(w, trainable), Tensor(b, trainable))
            else:
                head = DenseLayer(Tensor(w, trainable), Tensor(b, trainable))
    if head is None:
        raise ValueError(f"{path}: checkpoint has no head layer")
    label_map = header.get("label_map")
    model = Model(conv_layers, head, alpha=header["alpha"],
                  label_map=dict(label_map) if label_map else None, hidden=hidden)
    if model.fingerprint() != header["fingerprint"]:
        raise ValueError(
            f"{path}: fingerprint mismatch ({header['fingerprint']} in header, "
            f"{model.fingerprint()} from shapes)")
    return model
