"""16-bit PCM mono WAV input/output via the standard ``wave`` module."""

import wave

import numpy as np

from .errors import InvalidDataError
from .spectral import Waveform


def read_wav(path):
    """Samples scaled to ``[-1, 1)``; anything but PCM16 mono is rejected."""
    try:
        with wave.open(str(path), "rb") as f:
            if f.getnchannels() != 1:
                raise InvalidDataError(f"{path}: expected mono, got {f.getnchannels()} channels")
            if f.getsampwidth() != 2:
                raise InvalidDataError(f"{path}: expected 16-bit samples, got {8 * f.getsampwidth()}-bit")
            if f.getcomptype() != "NONE":
                raise InvalidDataError(f"{path}: compressed WAV ({f.getcomptype()}) not supported")
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise InvalidDataError(f"{path}: not a PCM WAV file ({exc})") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, w):
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(w.sample_rate))
        f.writeframes(pcm.tobytes())
