"""Causal neural beamforming toolkit for multichannel speech enhancement.

Subpackage map
--------------
``beamkit.stft``
    STFT analysis/synthesis and magnitude power compression.
``beamkit.signals``
    Waveform container and deterministic synthetic test signals.
``beamkit.rooms``
    Image-method room impulse responses and multichannel scene synthesis.
``beamkit.autodiff``
    Minimal reverse-mode tensor engine (numpy-backed) and layer library.
``beamkit.model``
    The causal embedding-and-beamforming enhancement network.
``beamkit.mvdr``
    Oracle-mask MVDR beamformer baseline.
``beamkit.metrics`` / ``beamkit.training``
    SI-SNR/SNR metrics, spectral loss, Adam trainer, evaluation harness.
``beamkit.wavio`` / ``beamkit.config`` / ``beamkit.cli``
    WAV file I/O, run configuration, and the command-line interface.
"""

from .errors import BeamkitError
from .signals import WaveBuffer
from .stft import ComplexSpectrogram, StftConfig, compress, decompress, istft, stft

__version__ = "0.1.0"

__all__ = [
    "BeamkitError",
    "WaveBuffer",
    "ComplexSpectrogram",
    "StftConfig",
    "stft",
    "istft",
    "compress",
    "decompress",
    "__version__",
]
