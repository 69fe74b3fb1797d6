"""Synthetic vibration benches: three virtual machines with seeded fault signatures.

Signal model per record: background Gaussian noise + a shaft component
(1x fundamental with weak 2x/3x harmonics) + a fault component. Rotor
unbalance raises the 1x amplitude, shaft misalignment the 2x harmonic, and
bearing faults add a periodic impulse train at a characteristic frequency
(geometry-free approximations 0.4/0.6/0.23 * n * f_r for outer / inner /
ball), each impulse an exponentially decaying sinusoid at the machine's
resonance. Inner-race impulses are amplitude-modulated at the shaft rate;
under a speed ramp the impulse spacing tracks the instantaneous rate.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import butter, filtfilt, hilbert

from .pipeline import (FAULT_CLASSES, SignalRecord, SpeedProfile,
                       read_record_csv, write_record_csv)

# shaft component shape (shared by all machines)
SHAFT_AMP = 1.0
HARMONIC_2X = 0.30
HARMONIC_3X = 0.12
# fault gains, scaled by severity
UNBALANCE_GAIN = 1.8
MISALIGN_GAIN = 1.8
IMPULSE_GAIN = 3.0
IMPULSE_MOD_FLOOR = 0.25   # inner-race modulation never fully vanishes
LOAD_AMP_GAIN = 0.03       # load acts as a mild amplitude nuisance

CHARACTERISTIC_COEFF = {
    "bearing-outer-race": 0.40,
    "bearing-inner-race": 0.60,
    "bearing-ball": 0.23,
}

DEFAULT_SEVERITY_RANGE = (0.6, 1.5)
WIDE_SEVERITY_RANGE = (0.35, 2.0)


@dataclass(frozen=True)
class MachineSpec:
    machine_id: str
    sample_rate_hz: float
    shaft_speed: SpeedProfile
    n_rolling_elements: int
    resonance_hz: float
    resonance_decay: float
    base_noise_std: float
    duration_s: float
    load: float = 0.0

    def __post_init__(self):
        if self.resonance_hz >= self.sample_rate_hz / 2:
            raise ValueError(
                f"resonance {self.resonance_hz} Hz is not representable at "
                f"{self.sample_rate_hz} Hz sampling")
        if self.shaft_speed.rpm_start <= 0 or self.shaft_speed.rpm_end <= 0:
            raise ValueError("shaft speed endpoints must be positive")
        if self.n_rolling_elements < 1:
            raise ValueError("n_rolling_elements must be >= 1")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.base_noise_std < 0:
            raise ValueError("base_noise_std must be >= 0")


@dataclass(frozen=True)
class FaultSignature:
    fault_class: str
    severity: float

    def __post_init__(self):
        if self.fault_class not in FAULT_CLASSES:
            raise ValueError(f"unknown fault class {self.fault_class!r}")
        if self.fault_class == "healthy" and self.severity != 0:
            raise ValueError("healthy records must have severity 0")
        if self.fault_class != "healthy" and self.severity <= 0:
            raise ValueError("faulty records must have severity > 0")

    def characteristic_freq(self, machine: MachineSpec, shaft_hz: float) -> float:
        """Impulse repetition rate for bearing faults at a given shaft rate."""
        coeff = CHARACTERISTIC_COEFF.get(self.fault_class)
        if coeff is None:
            raise ValueError(f"{self.fault_class!r} has no characteristic frequency")
        return coeff * machine.n_rolling_elements * shaft_hz


def _shaft_phase(machine: MachineSpec, t: np.ndarray) -> np.ndarray:
    """Accumulated shaft phase in radians; linear RPM ramps integrate exactly."""
    sp = machine.shaft_speed
    f0 = sp.rpm_start / 60.0
    f1 = sp.rpm_end / 60.0
    T = machine.duration_s
    return 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / T * t * t)


def _impulse_train(machine: MachineSpec, coeff: float, phase: np.ndarray,
                   amp_at, rng: np.random.Generator,
                   n_samples: int) -> np.ndarray:
    """Superpose decaying-resonance impulses wherever the characteristic phase
    crosses an integer; spacing therefore tracks the instantaneous shaft rate.

    amp_at maps the hit sample indices to per-impulse amplitudes.
    """
    fs = machine.sample_rate_hz
    char_revs = coeff * machine.n_rolling_elements * phase / (2 * np.pi)
    char_revs = char_revs + rng.uniform(0, 1)
    hits = np.flatnonzero(np.diff(np.floor(char_revs)) > 0) + 1
    amps = amp_at(hits)
    # one impulse template, truncated at 8 decay time constants
    n_imp = min(n_samples, max(4, int(8 * fs / machine.resonance_decay)))
    tau = np.arange(n_imp) / fs
    template = np.exp(-machine.resonance_decay * tau) * np.sin(
        2 * np.pi * machine.resonance_hz * tau)
    out = np.zeros(n_samples)
    for k, i0 in enumerate(hits):
        seg = min(n_imp, n_samples - i0)
        out[i0:i0 + seg] += amps[k] * template[:seg]
    return out


def gen_record(machine: MachineSpec, fault: FaultSignature, seed: int) -> SignalRecord:
    """Deterministically synthesize one labeled vibration record."""
    rng = np.random.default_rng(seed)
    fs = machine.sample_rate_hz
    n = int(round(machine.duration_s * fs))
    t = np.arange(n) / fs
    phase = _shaft_phase(machine, t)

    phi1, phi2, phi3 = rng.uniform(0, 2 * np.pi, size=3)
    amp = SHAFT_AMP * (1.0 + LOAD_AMP_GAIN * machine.load)
    signal = amp * (np.sin(phase + phi1)
                    + HARMONIC_2X * np.sin(2 * phase + phi2)
                    + HARMONIC_3X * np.sin(3 * phase + phi3))

    sev = fault.severity
    if fault.fault_class == "rotor-unbalance":
        signal += sev * UNBALANCE_GAIN * amp * np.sin(phase + phi1)
    elif fault.fault_class == "shaft-misalignment":
        signal += sev * MISALIGN_GAIN * amp * np.sin(2 * phase + phi2)
    elif fault.fault_class in CHARACTERISTIC_COEFF:
        coeff = CHARACTERISTIC_COEFF[fault.fault_class]
        base_amp = sev * IMPULSE_GAIN * amp
        if fault.fault_class == "bearing-inner-race":
            # the defect passes through the load zone once per revolution
            def amp_at(hits):
                mod = IMPULSE_MOD_FLOOR + (1 - IMPULSE_MOD_FLOOR) * 0.5 * (
                    1 + np.cos(phase[hits] + phi1))
                return base_amp * mod
        else:
            def amp_at(hits):
                return np.full(len(hits), base_amp)
        signal += _impulse_train(machine, coeff, phase, amp_at, rng, n)

    if machine.base_noise_std > 0:
        signal = signal + rng.normal(0.0, machine.base_noise_std, size=n)

    return SignalRecord(
        samples=signal,
        sample_rate_hz=fs,
        machine_id=machine.machine_id,
        fault_class=fault.fault_class,
        severity=sev,
        speed_profile=machine.shaft_speed,
        load=machine.load,
    )


def _record_seed(seed: int, machine_id: str, class_idx: int, rec_idx: int) -> list[int]:
    return [seed, zlib.crc32(machine_id.encode()), class_idx, rec_idx]


def gen_machine_dataset(machine: MachineSpec, classes: Sequence[str],
                        per_class: int, seed: int,
                        severity_ranges: Optional[dict[str, tuple[float, float]]] = None,
                        loads: Optional[Sequence[float]] = None,
                        speed_jitter: float = 0.02) -> list[SignalRecord]:
    """Balanced labeled records; severities drawn per record from the class's
    configured range, record seeds derived deterministically."""
    if not classes:
        raise ValueError("class list is empty")
    severity_ranges = severity_ranges or {}
    records = []
    for ci, cls in enumerate(classes):
        if cls not in FAULT_CLASSES:
            raise ValueError(f"unknown fault class {cls!r}")
        lo, hi = severity_ranges.get(
            cls, (0.0, 0.0) if cls == "healthy" else DEFAULT_SEVERITY_RANGE)
        for ri in range(per_class):
            rng = np.random.default_rng(_record_seed(seed, machine.machine_id, ci, ri))
            sev = 0.0 if cls == "healthy" else float(rng.uniform(lo, hi))
            jitter = 1.0 + speed_jitter * float(rng.uniform(-1, 1))
            sp = machine.shaft_speed
            spec_k = MachineSpec(
                machine_id=machine.machine_id,
                sample_rate_hz=machine.sample_rate_hz,
                shaft_speed=SpeedProfile(sp.rpm_start * jitter, sp.rpm_end * jitter),
                n_rolling_elements=machine.n_rolling_elements,
                resonance_hz=machine.resonance_hz,
                resonance_decay=machine.resonance_decay,
                base_noise_std=machine.base_noise_std,
                duration_s=machine.duration_s,
                load=machine.load if loads is None else loads[ri % len(loads)],
            )
            rec_seed = int(rng.integers(0, 2 ** 63 - 1))
            records.append(gen_record(spec_k, FaultSignature(cls, sev), rec_seed))
    return records


# --- virtual machine presets -------------------------------------------------
# Desk-scale rates keep the full experiment suite tractable on a laptop while
# preserving the structural differences between the benches (distinct rates,
# resonances, element counts, noise floors). full_rate=True restores the
# 25.6 k / 50 k / 48 k Hz rates of the corresponding physical test benches.

DESK_RATE_A, FULL_RATE_A = 3200.0, 25600.0
DESK_RATE_B, FULL_RATE_B = 6250.0, 50000.0
DESK_RATE_C, FULL_RATE_C = 6000.0, 48000.0


def machine_a_constant(duration_s: float = 1.2, full_rate: bool = False,
                       load: float = 2.0) -> MachineSpec:
    """Primary bench, constant 1800 RPM."""
    return MachineSpec("machine-a", FULL_RATE_A if full_rate else DESK_RATE_A,
                       SpeedProfile.constant(1800.0), n_rolling_elements=8,
                       resonance_hz=800.0 if not full_rate else 4000.0,
                       resonance_decay=600.0, base_noise_std=0.10,
                       duration_s=duration_s, load=load)


def machine_a_variable(duration_s: float = 1.2, full_rate: bool = False,
                       load: float = 0.0) -> MachineSpec:
    """Primary bench under a 680 -> 2460 RPM ramp."""
    return MachineSpec("machine-a", FULL_RATE_A if full_rate else DESK_RATE_A,
                       SpeedProfile.ramp(680.0, 2460.0), n_rolling_elements=8,
                       resonance_hz=800.0 if not full_rate else 4000.0,
                       resonance_decay=600.0, base_noise_std=0.10,
                       duration_s=duration_s, load=load)


def machine_b(rpm: float = 600.0, duration_s: float = 1.2,
              full_rate: bool = False) -> MachineSpec:
    """Second bench: bearing diagnosis at 600/800/1000 RPM."""
    return MachineSpec("machine-b", FULL_RATE_B if full_rate else DESK_RATE_B,
                       SpeedProfile.constant(rpm), n_rolling_elements=12,
                       resonance_hz=1500.0 if not full_rate else 9000.0,
                       resonance_decay=700.0, base_noise_std=0.12,
                       duration_s=duration_s, load=0.0)


def machine_c(load_hp: float = 0.0, duration_s: float = 1.2,
              full_rate: bool = False) -> MachineSpec:
    """Third bench: bearing diagnosis under 0-3 HP loads; speed sags with load."""
    rpm_by_load = {0.0: 1797.0, 1.0: 1772.0, 2.0: 1750.0, 3.0: 1730.0}
    rpm = rpm_by_load.get(float(load_hp), 1797.0 - 22.0 * float(load_hp))
    return MachineSpec("machine-c", FULL_RATE_C if full_rate else DESK_RATE_C,
                       SpeedProfile.constant(rpm), n_rolling_elements=9,
                       resonance_hz=2000.0 if not full_rate else 11000.0,
                       resonance_decay=800.0, base_noise_std=0.08,
                       duration_s=duration_s, load=float(load_hp))


# --- rule-based spectral oracle ----------------------------------------------

def _order_spectrum(x: np.ndarray, phase: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Resample a signal onto a uniform shaft-angle grid and FFT it.

    Returns (orders, magnitude); order k means k cycles per shaft revolution.
    Order-domain analysis makes the oracle exact under speed ramps.
    """
    revs = phase / (2 * np.pi)
    total = revs[-1]
    n = len(x)
    grid = np.linspace(0, total, n, endpoint=False)
    resampled = np.interp(grid, revs, x)
    mag = np.abs(np.fft.rfft(resampled)) / n * 2
    orders = np.fft.rfftfreq(n, d=total / n)
    return orders, mag


def _peak_near(orders: np.ndarray, mag: np.ndarray, target: float,
               halfwidth: float) -> float:
    sel = (orders >= target - halfwidth) & (orders <= target + halfwidth)
    return float(mag[sel].max()) if np.any(sel) else 0.0


def _harmonic_amplitude(x: np.ndarray, phase: np.ndarray, k: int) -> float:
    """Amplitude of the k-th shaft-order harmonic by coherent demodulation."""
    return 2.0 * float(np.abs(np.mean(x * np.exp(-1j * k * phase))))


def _angle_resample(x: np.ndarray, phase: np.ndarray) -> tuple[np.ndarray, float]:
    """Resample onto a uniform shaft-angle grid; returns (signal, revs/sample).

    Angle-domain analysis keeps impulse spacing constant under speed ramps.
    """
    revs = phase / (2 * np.pi)
    total = revs[-1]
    n = len(x)
    grid = np.linspace(0, total, n, endpoint=False)
    return np.interp(grid, revs, x), total / n


def _spacing_scores(envelope: np.ndarray, phase: np.ndarray,
                    spacings: dict[str, float]) -> dict[str, float]:
    """Angle-domain envelope autocorrelation evaluated at candidate impulse
    spacings (in revolutions). An impulse train autocorrelates strongly at
    its own spacing; the candidate spacings are never integer multiples of
    one another, so repetition-rate harmonics cannot masquerade as a
    different fault the way envelope-spectrum peaks can."""
    env, dr = _angle_resample(envelope - envelope.mean(), phase)
    spec = np.abs(np.fft.rfft(env)) ** 2
    ac = np.fft.irfft(spec)
    half = len(ac) // 2
    scores = {}
    for cls, spacing in spacings.items():
        lo = max(1, int(spacing * 0.9 / dr))
        hi = min(half, int(spacing * 1.1 / dr) + 1)
        scores[cls] = float(ac[lo:hi].max()) if hi > lo else -np.inf
    return scores


def spectral_label_oracle(record: SignalRecord, machine: MachineSpec) -> str:
    """Classify a synthetic record from first principles (no learning).

    Bearing faults: high kurtosis in the resonance band; the subtype follows
    from the fundamental impulse spacing in the shaft-angle domain.
    Otherwise the 2x/1x shaft-harmonic balance separates misalignment,
    unbalance, and healthy.
    """
    x = record.samples
    n = x.size
    fs = record.sample_rate_hz
    t = np.arange(n) / fs
    sp = record.speed_profile
    f0, f1 = sp.rpm_start / 60.0, sp.rpm_end / 60.0
    T = n / fs
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / T * t * t)

    # resonance-band content: anything impulsive rings near resonance_hz.
    # A real bandpass (not FFT masking) keeps the strong low-frequency shaft
    # harmonics from leaking into the band and inflating the kurtosis.
    nyq = fs / 2
    lo = machine.resonance_hz * 0.5 / nyq
    hi = min(machine.resonance_hz * 1.5 / nyq, 0.98)
    b, a = butter(4, [lo, hi], btype="bandpass")
    banded = filtfilt(b, a, x)
    centered = banded - banded.mean()
    m2 = float((centered ** 2).mean())
    kurt = float((centered ** 4).mean() / (m2 ** 2)) if m2 > 0 else 3.0

    if kurt > 4.5:
        envelope = np.abs(hilbert(banded))
        nre = machine.n_rolling_elements
        spacings = {cls: 1.0 / (coeff * nre)
                    for cls, coeff in CHARACTERISTIC_COEFF.items()}
        scores = _spacing_scores(envelope, phase, spacings)
        return max(scores, key=scores.get)

    # coherent demodulation at the known shaft phase: no FFT binning loss
    a1 = _harmonic_amplitude(x, phase, 1)
    a2 = _harmonic_amplitude(x, phase, 2)
    if a2 / max(a1, 1e-12) > 0.75:
        return "shaft-misalignment"
    if a1 / max(a2, 1e-12) > 5.0:
        return "rotor-unbalance"
    return "healthy"


# --- dataset files -----------------------------------------------------------

def write_dataset(records: Sequence[SignalRecord], out_dir,
                  prefix: str = "rec") -> Path:
    """Write one CSV + sidecar per record plus a manifest listing them all."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w") as fh:
        fh.write("filename,machine_id,fault_class,severity,"
                 "rpm_start,rpm_end,load\n")
        for i, rec in enumerate(records):
            name = f"{prefix}_{i:04d}.csv"
            write_record_csv(rec, out_dir / name)
            sp = rec.speed_profile
            fh.write(f"{name},{rec.machine_id},{rec.fault_class},{rec.severity!r},"
                     f"{sp.rpm_start!r},{sp.rpm_end!r},{rec.load!r}\n")
    return manifest


def load_dataset(manifest_path) -> list[SignalRecord]:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.csv"
    records = []
    with open(manifest_path) as fh:
        header = fh.readline()
        if not header.startswith("filename,"):
            raise ValueError(f"{manifest_path}: not a dataset manifest")
        for line in fh:
            name = line.split(",", 1)[0].strip()
            if name:
                records.append(read_record_csv(manifest_path.parent / name))
    return records
