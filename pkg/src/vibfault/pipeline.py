"""Raw vibration records -> normalized fixed-length training windows.

Also: stratified labeled-fraction subsampling, calibrated white-Gaussian
noise injection, and the on-disk CSV + sidecar-metadata record format.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

FAULT_CLASSES = (
    "healthy",
    "bearing-inner-race",
    "bearing-outer-race",
    "bearing-ball",
    "shaft-misalignment",
    "rotor-unbalance",
)

DEFAULT_WINDOW_LEN = 2048
DEFAULT_HOP = 1024
DEFAULT_SPLIT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SpeedProfile:
    """Constant shaft speed (start == end) or a linear RPM ramp."""
    rpm_start: float
    rpm_end: float

    @classmethod
    def constant(cls, rpm: float) -> "SpeedProfile":
        return cls(rpm, rpm)

    @classmethod
    def ramp(cls, rpm_start: float, rpm_end: float) -> "SpeedProfile":
        return cls(rpm_start, rpm_end)

    @property
    def is_constant(self) -> bool:
        return self.rpm_start == self.rpm_end

    @property
    def regime(self) -> str:
        return "constant" if self.is_constant else "variable"


@dataclass
class SignalRecord:
    samples: np.ndarray
    sample_rate_hz: float
    machine_id: str
    fault_class: str
    severity: float
    speed_profile: SpeedProfile
    load: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.samples.size == 0:
            raise ValueError("record has no samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("record contains non-finite samples")
        if self.fault_class not in FAULT_CLASSES:
            raise ValueError(f"unknown fault class {self.fault_class!r}")


@dataclass
class WindowedSample:
    values: np.ndarray
    label: int
    origin: str


@dataclass
class DatasetSplit:
    train: list[WindowedSample]
    validation: list[WindowedSample]
    test: list[WindowedSample]
    label_map: dict[str, int] = field(default_factory=dict)

    def class_counts(self, part: str = "train") -> dict[int, int]:
        counts: dict[int, int] = {}
        for s in getattr(self, part):
            counts[s.label] = counts.get(s.label, 0) + 1
        return counts


def segment(record: SignalRecord, window_len: int, hop: int,
            label: int = 0) -> list[WindowedSample]:
    """Slice a record into windows at offsets 0, hop, 2*hop, ...

    Window count is floor((L - window_len) / hop) + 1.
    """
    if window_len <= 0 or hop <= 0:
        raise ValueError(f"window_len and hop must be positive, got {window_len}, {hop}")
    L = record.samples.size
    if window_len > L:
        raise ValueError(f"window_len {window_len} exceeds signal length {L}")
    count = (L - window_len) // hop + 1
    out = []
    for i in range(count):
        off = i * hop
        out.append(WindowedSample(
            values=record.samples[off:off + window_len].copy(),
            label=label,
            origin=f"{record.machine_id}:{off}",
        ))
    return out


def normalize_window(values: np.ndarray) -> np.ndarray:
    """Per-window z-score; constant windows map to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    std = values.std()
    if std == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def normalize(sample: WindowedSample) -> WindowedSample:
    return WindowedSample(normalize_window(sample.values), sample.label, sample.origin)


def add_noise(record: SignalRecord, percent: float, seed: int) -> SignalRecord:
    """Add i.i.d. zero-mean Gaussian noise with std = (percent/100) * std(signal).

    The percentage is the ratio of noise std to signal std. Deterministic
    for a given seed; percent 0 returns an identical copy.
    """
    if percent < 0:
        raise ValueError(f"percent must be >= 0, got {percent}")
    samples = record.samples
    if percent > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, (percent / 100.0) * samples.std(), size=samples.shape)
        samples = samples + noise
    else:
        samples = samples.copy()
    return SignalRecord(samples, record.sample_rate_hz, record.machine_id,
                        record.fault_class, record.severity, record.speed_profile,
                        record.load)


def stratified_fraction(split: DatasetSplit, fraction: float,
                        seed: int) -> list[WindowedSample]:
    """Per class, select round(fraction * class_count) training samples, min 1.

    Selection is deterministic given the seed; validation and test are
    untouched. Rounding is half-up.
    """
    if not (0 < fraction <= 1):
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    by_class: dict[int, list[WindowedSample]] = {}
    for s in split.train:
        by_class.setdefault(s.label, []).append(s)
    for name, idx in sorted(split.label_map.items(), key=lambda kv: kv[1]):
        if idx not in by_class:
            raise ValueError(f"class {name!r} has no training samples")
    chosen: list[WindowedSample] = []
    for label in sorted(by_class):
        group = by_class[label]
        n = len(group)
        k = max(1, int(np.floor(fraction * n + 0.5)))
        rng = np.random.default_rng([seed, label])
        order = rng.permutation(n)[:k]
        chosen.extend(group[i] for i in sorted(order))
    return chosen


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode())


def split_records(records: Sequence[SignalRecord],
                  ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
                  seed: int = 0,
                  key: Optional[Callable[[SignalRecord], str]] = None,
                  ) -> tuple[list[SignalRecord], list[SignalRecord], list[SignalRecord]]:
    """Stratified record-level split so no source record leaks across splits."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    key = key or (lambda r: r.fault_class)
    groups: dict[str, list[SignalRecord]] = {}
    for r in records:
        groups.setdefault(key(r), []).append(r)
    train: list[SignalRecord] = []
    val: list[SignalRecord] = []
    test: list[SignalRecord] = []
    for name in sorted(groups):
        group = groups[name]
        n = len(group)
        if n < 3:
            raise ValueError(
                f"class {name!r} has only {n} record(s); need >= 3 to stratify")
        rng = np.random.default_rng([seed, _stable_hash(name)])
        order = rng.permutation(n)
        n_val = max(1, int(np.floor(n * ratios[1] + 0.5)))
        n_test = max(1, int(np.floor(n * ratios[2] + 0.5)))
        n_train = n - n_val - n_test
        if n_train < 1:
            raise ValueError(f"class {name!r}: split ratios leave no training records")
        train.extend(group[i] for i in order[:n_train])
        val.extend(group[i] for i in order[n_train:n_train + n_val])
        test.extend(group[i] for i in order[n_train + n_val:])
    return train, val, test


def _cap_windows(windows: list[WindowedSample], cap: Optional[int],
                 seed: int, label: int) -> list[WindowedSample]:
    if cap is None or len(windows) <= cap:
        return windows
    rng = np.random.default_rng([seed, 0xCA9, label])
    keep = sorted(rng.permutation(len(windows))[:cap])
    return [windows[i] for i in keep]


def build_split(records: Sequence[SignalRecord], window_len: int, hop: int,
                label_of: Optional[Callable[[SignalRecord], str]] = None,
                ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
                seed: int = 0,
                caps: tuple[Optional[int], Optional[int], Optional[int]] = (None, None, None),
                ) -> DatasetSplit:
    """Record-level split, then segmentation and per-window normalization.

    caps optionally bound the per-class window counts of (train, val, test).
    """
    label_of = label_of or (lambda r: r.fault_class)
    names = sorted({label_of(r) for r in records})
    label_map = {name: i for i, name in enumerate(names)}
    parts = split_records(records, ratios=ratios, seed=seed, key=label_of)
    out: list[list[WindowedSample]] = []
    for part_idx, part in enumerate(parts):
        by_label: dict[int, list[WindowedSample]] = {}
        for rec in part:
            label = label_map[label_of(rec)]
            for w in segment(rec, window_len, hop, label=label):
                by_label.setdefault(label, []).append(normalize(w))
        collected: list[WindowedSample] = []
        for label in sorted(by_label):
            collected.extend(_cap_windows(by_label[label], caps[part_idx],
                                          seed + part_idx, label))
        out.append(collected)
    return DatasetSplit(out[0], out[1], out[2], label_map)


# --- on-disk record format -------------------------------------------------
#
# One CSV per record: a header line "# sample_rate_hz=<real>" followed by one
# amplitude per line, written with shortest round-trip repr (bit-exact).
# A sidecar key=value file holds machine_id, fault_class, severity,
# speed_rpm or speed_ramp, and load.

def meta_path_for(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta")


def write_record_csv(record: SignalRecord, csv_path) -> None:
    csv_path = Path(csv_path)
    with open(csv_path, "w") as fh:
        fh.write(f"# sample_rate_hz={record.sample_rate_hz!r}\n")
        for v in record.samples:
            fh.write(f"{float(v)!r}\n")
    sp = record.speed_profile
    with open(meta_path_for(csv_path), "w") as fh:
        fh.write(f"machine_id={record.machine_id}\n")
        fh.write(f"fault_class={record.fault_class}\n")
        fh.write(f"severity={record.severity!r}\n")
        if sp.is_constant:
            fh.write(f"speed_rpm={sp.rpm_start!r}\n")
        else:
            fh.write(f"speed_ramp={sp.rpm_start!r},{sp.rpm_end!r}\n")
        fh.write(f"load={record.load!r}\n")


def read_record_csv(csv_path) -> SignalRecord:
    csv_path = Path(csv_path)
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# sample_rate_hz="):
            raise ValueError(f"{csv_path}: missing sample_rate_hz header")
        rate = float(header.split("=", 1)[1])
        samples = np.array([float(line) for line in fh if line.strip()])
    meta: dict[str, str] = {}
    with open(meta_path_for(csv_path)) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            k, v = line.split("=", 1)
            meta[k] = v
    if "speed_rpm" in meta:
        profile = SpeedProfile.constant(float(meta["speed_rpm"]))
    elif "speed_ramp" in meta:
        lo, hi = meta["speed_ramp"].split(",")
        profile = SpeedProfile.ramp(float(lo), float(hi))
    else:
        raise ValueError(f"{meta_path_for(csv_path)}: needs speed_rpm or speed_ramp")
    return SignalRecord(
        samples=samples,
        sample_rate_hz=rate,
        machine_id=meta["machine_id"],
        fault_class=meta["fault_class"],
        severity=float(meta["severity"]),
        speed_profile=profile,
        load=float(meta.get("load", 0.0)),
    )
