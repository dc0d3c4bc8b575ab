"""Acoustic event gate built on a Goertzel filter bank.

The detector evaluates squared DFT magnitudes at a small set of target bins
using the Goertzel recurrence (state update s0 = x[n] + 2*cos(w)*s1 - s2),
which costs O(N) per bin instead of a full transform. A window is flagged as
an event when the median bank power strictly exceeds a threshold.

An abstract detector model (true/false positive rates) stands in for the
filter bank when simulating schedules; both share the DetectorModel type.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "GoertzelBank",
    "DetectorModel",
    "goertzel_power",
    "goertzel_spectrum",
    "bank_powers",
    "gate_from_powers",
    "gate",
    "sample_detection",
    "synthesize_tone",
    "load_wav",
    "default_bank",
]

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_WINDOW = 1600  # 0.1 s at 16 kHz


@dataclass(frozen=True)
class GoertzelBank:
    """Target bins plus the gate threshold.

    Bins index the DFT of a window_len-sample frame at sample_rate, so bin b
    sits at b * sample_rate / window_len Hz.
    """

    sample_rate: int = DEFAULT_SAMPLE_RATE
    window_len: int = DEFAULT_WINDOW
    target_bins: tuple[int, ...] = ()
    threshold: float = 1e4

    def __post_init__(self):
        if self.sample_rate <= 0 or self.window_len <= 0:
            raise ValueError("sample_rate and window_len must be positive")
        if not self.target_bins:
            raise ValueError("target_bins must not be empty")
        for b in self.target_bins:
            _check_bin(b, self.window_len)

    def bin_for(self, freq_hz: float) -> int:
        return int(round(freq_hz * self.window_len / self.sample_rate))

    def freq_of(self, bin_idx: int) -> float:
        return bin_idx * self.sample_rate / self.window_len


def default_bank(threshold: float = 1e4) -> GoertzelBank:
    """2 to 8 kHz in 500 Hz steps at 16 kHz / 1600-sample windows."""
    bins = tuple(
        int(round(f * DEFAULT_WINDOW / DEFAULT_SAMPLE_RATE))
        for f in range(2000, 8001, 500)
    )
    return GoertzelBank(target_bins=bins, threshold=threshold)


@dataclass(frozen=True)
class DetectorModel:
    """Either the real filter-bank gate or an abstract tp/fp-rate stand-in.

    kind "abstract": a probe with an event present fires with probability
    tp_rate, one without fires with probability fp_rate. kind "goertzel":
    the probe window is synthesized (each overlapping event contributes
    tones at the bank frequencies within event_bandwidth_hz of its band,
    plus Gaussian noise) and run through the gate. A narrow bandwidth
    therefore makes off-band events invisible to the median gate.
    """

    kind: str = "abstract"
    tp_rate: float = 1.0
    fp_rate: float = 0.0
    bank: GoertzelBank | None = None
    tone_amplitude: float = 1.0
    noise_sd: float = 0.0
    default_band: float = 4000.0
    event_bandwidth_hz: float = 4000.0

    def __post_init__(self):
        if self.kind not in ("abstract", "goertzel"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not 0 <= self.tp_rate <= 1 or not 0 <= self.fp_rate <= 1:
            raise ValueError("tp_rate and fp_rate must lie in [0, 1]")
        if self.event_bandwidth_hz <= 0:
            raise ValueError("event_bandwidth_hz must be positive")
        if self.kind == "goertzel" and self.bank is None:
            object.__setattr__(self, "bank", default_bank())


def _check_bin(bin_idx: int, window_len: int) -> None:
    if not 0 <= bin_idx <= window_len // 2:
        raise ValueError(
            f"bin {bin_idx} out of range [0, {window_len // 2}] for window {window_len}"
        )


def _coeffs(bins: np.ndarray, window_len: int) -> np.ndarray:
    return 2.0 * np.cos(2.0 * np.pi * bins / window_len)


def goertzel_power(samples: np.ndarray, bin_idx: int, window_len: int | None = None) -> float:
    """|X[bin]|^2 of the window via the Goertzel recurrence.

    window_len defaults to len(samples) and must match it when given.
    """
    x = np.ascontiguousarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("samples must be 1D")
    n = x.shape[0]
    if window_len is None:
        window_len = n
    if window_len != n:
        raise ValueError(f"window_len {window_len} does not match {n} samples")
    if n == 0:
        return 0.0
    _check_bin(bin_idx, n)
    coeffs = _coeffs(np.array([bin_idx], dtype=np.float64), n)
    return float(_kernels.goertzel_many(x, coeffs)[0])


def goertzel_spectrum(samples: np.ndarray, bins) -> np.ndarray:
    """Powers at several bins of one window, one recurrence per bin."""
    x = np.ascontiguousarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ValueError("samples must be a non-empty 1D array")
    bins = np.asarray(bins, dtype=np.int64)
    for b in bins:
        _check_bin(int(b), x.shape[0])
    return _kernels.goertzel_many(x, _coeffs(bins.astype(np.float64), x.shape[0]))


def bank_powers(bank: GoertzelBank, samples: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(samples, dtype=np.float64)
    if x.shape[0] != bank.window_len:
        raise ValueError(
            f"expected {bank.window_len} samples, got {x.shape[0]}"
        )
    bins = np.asarray(bank.target_bins, dtype=np.float64)
    return _kernels.goertzel_many(x, _coeffs(bins, bank.window_len))


def median_power(powers: np.ndarray) -> float:
    """Lower-middle median: element (n-1)//2 of the sorted powers."""
    arr = np.sort(np.asarray(powers, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("no powers to take a median of")
    return float(arr[(arr.size - 1) // 2])


def gate_from_powers(powers: np.ndarray, threshold: float) -> bool:
    """Event iff the median power strictly exceeds the threshold."""
    return median_power(powers) > threshold


def gate(bank: GoertzelBank, samples: np.ndarray) -> bool:
    return gate_from_powers(bank_powers(bank, samples), bank.threshold)


def sample_detection(model: DetectorModel, present: bool, rng: np.random.Generator) -> bool:
    """Draw one abstract detector outcome for a probe.

    Rates of exactly 0 or 1 consume no randomness.
    """
    if model.kind != "abstract":
        raise ValueError("sample_detection applies to abstract detector models")
    rate = model.tp_rate if present else model.fp_rate
    if rate >= 1.0:
        return True
    if rate <= 0.0:
        return False
    return bool(rng.random() < rate)


def synthesize_tone(
    freq_hz: float,
    amplitude: float,
    n_samples: int = DEFAULT_WINDOW,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    noise_sd: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """amplitude * sin(2 pi f t) plus optional Gaussian noise."""
    if n_samples <= 0 or sample_rate <= 0:
        raise ValueError("n_samples and sample_rate must be positive")
    if not 0.0 < freq_hz < sample_rate / 2.0:
        raise ValueError(
            f"frequency {freq_hz} Hz outside (0, {sample_rate / 2:g}) Nyquist range"
        )
    t = np.arange(n_samples, dtype=np.float64) / sample_rate
    out = amplitude * np.sin(2.0 * np.pi * freq_hz * t)
    if noise_sd > 0:
        if rng is None:
            raise ValueError("noise_sd > 0 needs an rng")
        out = out + rng.normal(0.0, noise_sd, size=n_samples)
    return out


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono PCM16 WAV file into float64 samples in [-1, 1)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError("expected a mono WAV file")
        if wf.getsampwidth() != 2:
            raise ValueError("expected 16-bit PCM")
        raw = wf.readframes(wf.getnframes())
        rate = wf.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate
