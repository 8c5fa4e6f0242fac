"""Waveform container and deterministic synthetic test signals.

The synthesis routines here stand in for recorded corpora at desk scale.
They are fully deterministic given a :class:`numpy.random.Generator`, so
any scene built from them can be regenerated bit for bit from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySignalError, ValidationError

__all__ = [
    "WaveBuffer",
    "rms",
    "speech_like",
    "noise_like",
]


@dataclass
class WaveBuffer:
    """Multichannel waveform held as float64 with an explicit sample rate.

    Parameters
    ----------
    data : numpy.ndarray
        Samples with shape ``(channels, num_samples)``.  A 1-D array is
        promoted to a single channel.  Stored as float64.
    sample_rate : int
        Sampling rate in Hz; must be positive.
    """

    data: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ValidationError(
                f"waveform must be 1-D or 2-D (channels, samples), got ndim={arr.ndim}"
            )
        if arr.shape[1] == 0:
            raise EmptySignalError("waveform has zero samples")
        if int(self.sample_rate) <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        self.data = arr
        self.sample_rate = int(self.sample_rate)

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.data.shape[1] / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        """Return one channel as a 1-D float64 view."""
        return self.data[index]

    def mono(self) -> np.ndarray:
        """Return the sole channel; raise if the buffer is multichannel."""
        if self.num_channels != 1:
            raise ValidationError(
                f"expected a mono buffer, got {self.num_channels} channels"
            )
        return self.data[0]


def rms(x: np.ndarray) -> float:
    """Root-mean-square level of an array, over all elements."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise EmptySignalError("cannot take RMS of an empty array")
    return float(np.sqrt(np.mean(x**2)))


def _normalize_rms(x: np.ndarray, target: float) -> np.ndarray:
    level = rms(x)
    if level == 0.0:
        raise EmptySignalError("signal has zero energy; cannot normalize")
    return x * (target / level)


def speech_like(
    duration: float,
    sample_rate: int,
    rng: np.random.Generator,
    level: float = 0.1,
) -> WaveBuffer:
    """Synthesize a speech-shaped test signal.

    A harmonic source with a drifting pitch contour is filtered through a
    randomized three-resonance spectral envelope and gated by a syllabic
    (2-5 Hz) amplitude envelope, with a weak wideband component standing in
    for fricatives.  This is not speech, but it shares the coarse spectral
    and temporal structure that the enhancement pipeline cares about.

    Parameters
    ----------
    duration : float
        Length in seconds (> 0).
    sample_rate : int
        Sampling rate in Hz.
    rng : numpy.random.Generator
        Source of all randomness; equal states give bit-identical output.
    level : float
        Target RMS of the returned signal.

    Returns
    -------
    WaveBuffer
        Mono buffer of ``round(duration * sample_rate)`` samples.
    """
    if duration <= 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    n = int(round(duration * sample_rate))
    if n == 0:
        raise EmptySignalError("requested duration rounds to zero samples")
    t = np.arange(n, dtype=np.float64) / sample_rate

    # Pitch contour: slow drift plus vibrato around a per-utterance base.
    f0 = rng.uniform(90.0, 220.0)
    drift = 0.12 * f0 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
    vibrato = 0.02 * f0 * np.sin(2 * np.pi * rng.uniform(4.0, 7.0) * t)
    inst_freq = f0 + drift + vibrato
    phase = 2 * np.pi * np.cumsum(inst_freq) / sample_rate

    # Three randomized resonances shape the harmonic amplitudes.
    centers = np.array(
        [rng.uniform(300, 800), rng.uniform(900, 1800), rng.uniform(2000, 3200)]
    )
    widths = np.array([rng.uniform(80, 150), rng.uniform(120, 250), rng.uniform(200, 400)])
    gains = np.array([1.0, rng.uniform(0.3, 0.8), rng.uniform(0.1, 0.4)])

    top = min(4000.0, 0.45 * sample_rate)
    num_harmonics = max(1, int(top / (f0 * 1.15)))
    voiced = np.zeros(n)
    for k in range(1, num_harmonics + 1):
        freq_k = k * f0
        envelope = np.sum(gains * np.exp(-0.5 * ((freq_k - centers) / widths) ** 2))
        voiced += (envelope / k**0.5) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    # Syllabic gating: smoothed positive modulation at a few Hz with pauses.
    syllable_rate = rng.uniform(2.0, 5.0)
    gate = 0.5 * (1 + np.sin(2 * np.pi * syllable_rate * t + rng.uniform(0, 2 * np.pi)))
    gate = gate**1.5
    pause = 0.5 * (1 + np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t + rng.uniform(0, 2 * np.pi)))
    gate *= 0.25 + 0.75 * pause

    # Weak wideband component so the signal is not purely harmonic.
    hiss = rng.standard_normal(n)
    hiss -= np.mean(hiss)

    # Fricative-like bursts: short high-band noise events at a level
    # comparable to the voiced signal.  Real speech keeps substantial
    # 3-8 kHz energy in such bursts, and downstream spatial processing
    # needs the upper bins to carry genuine source structure.
    burst_env = np.zeros(n)
    num_bursts = max(1, int(round(duration * rng.uniform(1.5, 3.5))))
    for _ in range(num_bursts):
        width = max(2, int(rng.uniform(0.04, 0.12) * sample_rate))
        start = int(rng.uniform(0, max(1, n - width)))
        stop = min(n, start + width)
        ramp = np.hanning(width)[: stop - start]
        burst_env[start:stop] = np.maximum(burst_env[start:stop], ramp)
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    low_edge, high_edge = 2500.0, 0.47 * sample_rate
    band = 1.0 / (1.0 + np.exp(-(freqs - low_edge) / 200.0))
    band /= 1.0 + np.exp((freqs - high_edge) / 200.0)
    frication = np.fft.irfft(spectrum * band, n=n)
    frication *= 0.4 * rms(voiced) / max(rms(frication), 1e-12)

    out = gate * (voiced + 0.05 * hiss * rms(voiced)) + burst_env * frication

    return WaveBuffer(_normalize_rms(out, level), sample_rate)


def noise_like(
    duration: float,
    sample_rate: int,
    rng: np.random.Generator,
    level: float = 0.1,
    color: str = "pink",
) -> WaveBuffer:
    """Synthesize a stationary noise test signal.

    Parameters
    ----------
    duration : float
        Length in seconds (> 0).
    sample_rate : int
        Sampling rate in Hz.
    rng : numpy.random.Generator
        Source of all randomness.
    level : float
        Target RMS.
    color : {"pink", "white", "lowpass"}
        Spectral shape.  ``"pink"`` applies a 1/sqrt(f) magnitude slope
        that flattens below a 50 Hz corner (as hardware pinking filters
        do — without the corner nearly all energy would sit in the first
        few analysis bins), ``"lowpass"`` a gentle first-order roll-off;
        ``"white"`` is flat.

    Returns
    -------
    WaveBuffer
        Mono buffer of ``round(duration * sample_rate)`` samples.
    """
    if duration <= 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    n = int(round(duration * sample_rate))
    if n == 0:
        raise EmptySignalError("requested duration rounds to zero samples")

    white = rng.standard_normal(n)
    if color == "white":
        out = white
    elif color in ("pink", "lowpass"):
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
        freqs[0] = freqs[1] if n > 1 else 1.0
        if color == "pink":
            shaping = 1.0 / np.sqrt(np.maximum(freqs, 50.0))
        else:
            corner = 400.0
            shaping = 1.0 / np.sqrt(1.0 + (freqs / corner) ** 2)
        out = np.fft.irfft(spectrum * shaping, n=n)
    else:
        raise ValidationError(f"unknown noise color: {color!r}")

    out = out - np.mean(out)
    return WaveBuffer(_normalize_rms(out, level), sample_rate)
