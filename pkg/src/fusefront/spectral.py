"""Log-Mel filterbank (FBANK) extraction.

Pipeline: pre-emphasis on the whole waveform, framing, windowing,
power spectrum, triangular Mel filters, natural log with a floor.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .features import FeatureMatrix, Source


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError(f"waveform must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("waveform contains NaN or Inf samples")
        if not self.sample_rate > 0:
            raise InvalidInputError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self):
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class SpectralConfig:
    """Front-end settings.

    Defaults: 25 ms frames every 10 ms, 80 Mel bands, pre-emphasis 0.97,
    16 kHz, periodic Hann window. ``window="rectangular"`` disables windowing.
    """

    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    n_mels: int = 80
    pre_emphasis: float = 0.97
    sample_rate: int = 16000
    log_floor: float = 1e-10
    window: str = "hann"

    def __post_init__(self):
        if not self.frame_length_ms >= self.frame_shift_ms > 0:
            raise ConfigurationError("need frame_length_ms >= frame_shift_ms > 0")
        if self.n_mels < 1:
            raise ConfigurationError("n_mels must be >= 1")
        if not 0 <= self.pre_emphasis < 1:
            raise ConfigurationError("pre_emphasis must lie in [0, 1)")
        if not self.sample_rate > 0:
            raise ConfigurationError("sample_rate must be positive")
        if not self.log_floor > 0:
            raise ConfigurationError("log_floor must be positive")
        if self.window not in ("hann", "rectangular"):
            raise ConfigurationError(f"unknown window {self.window!r}")
        if self.frame_length < 1 or self.frame_shift < 1:
            raise ConfigurationError("frame length/shift shorter than one sample")

    @property
    def frame_length(self):
        """Frame length in samples."""
        return int(round(self.sample_rate * self.frame_length_ms / 1000.0))

    @property
    def frame_shift(self):
        """Frame shift in samples."""
        return int(round(self.sample_rate * self.frame_shift_ms / 1000.0))

    @property
    def n_bins(self):
        return self.frame_length // 2 + 1


def pre_emphasize(w, coeff):
    """``y[0] = x[0]``, ``y[t] = x[t] - coeff * x[t-1]``."""
    if not 0 <= coeff <= 1:
        raise InvalidInputError(f"pre-emphasis coefficient must lie in [0, 1], got {coeff}")
    x = w.samples
    y = x.copy()
    y[1:] -= coeff * x[:-1]
    return Waveform(y, w.sample_rate)


def frame_count(n_samples, frame_length, frame_shift):
    if n_samples < frame_length:
        return 0
    return (n_samples - frame_length) // frame_shift + 1


def frame_signal(w, cfg):
    """Read-only ``(n_frames, frame_length)`` view; frame t starts at ``t * shift``."""
    L, H = cfg.frame_length, cfg.frame_shift
    n = frame_count(len(w), L, H)
    if n == 0:
        return np.empty((0, L))
    return np.lib.stride_tricks.sliding_window_view(w.samples, L)[: (n - 1) * H + 1 : H]


def window(length, kind="hann"):
    if kind == "rectangular":
        return np.ones(length)
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def power_spectrum(frame, window_kind="hann"):
    """``|DFT_k|**2`` of the windowed frame for ``k = 0 .. L//2``.

    Works on a single frame or a stack of frames along the last axis. The DFT
    runs at the frame length itself (no zero padding).
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] == 0:
        raise InvalidInputError("empty frame")
    spec = np.fft.rfft(frame * window(frame.shape[-1], window_kind), axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix(cfg):
    """Triangular Mel filterbank, shape ``(n_mels, frame_length // 2 + 1)``.

    Filter edges and centres are ``n_mels + 2`` points equally spaced on the
    Mel scale from 0 Hz to Nyquist. Each triangle is evaluated at the DFT bin
    frequencies and then scaled so its largest sampled value is exactly 1.
    """
    L = cfg.frame_length
    freqs = np.arange(L // 2 + 1) * cfg.sample_rate / L
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate / 2.0), cfg.n_mels + 2))
    lo, centre, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (centre - lo)
    falling = (hi - freqs) / (hi - centre)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1)
    empty = np.flatnonzero(peaks <= 0)
    if empty.size:
        raise ConfigurationError(
            f"{empty.size} of {cfg.n_mels} Mel filters cover no DFT bin "
            f"(frame length {L} samples is too short for n_mels={cfg.n_mels})"
        )
    return fb / peaks[:, None]


def extract_fbank(w, cfg=None):
    """Log-Mel filterbank features of ``w`` as a ``T x n_mels`` SF stream."""
    cfg = cfg or SpectralConfig()
    if w.sample_rate != cfg.sample_rate:
        raise ConfigurationError(
            f"waveform is {w.sample_rate} Hz but config expects {cfg.sample_rate} Hz (no resampling)"
        )
    fb = mel_matrix(cfg)
    frames = frame_signal(pre_emphasize(w, cfg.pre_emphasis), cfg)
    if frames.shape[0] == 0:
        data = np.empty((0, cfg.n_mels))
    else:
        energies = power_spectrum(frames, cfg.window) @ fb.T
        data = np.log(np.maximum(energies, cfg.log_floor))
    return FeatureMatrix(data, cfg.frame_shift_ms, Source.SF)
