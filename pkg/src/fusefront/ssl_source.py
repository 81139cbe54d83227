"""SSL-style feature streams: FEAT file I/O and a seeded synthetic generator.

FEAT layout (little-endian)::

    offset  size  field
    0       4     magic b"FEAT"
    4       1     version (1)
    5       4     uint32 T (frames)
    9       4     uint32 D (dimension)
    13      4     float32 frame_shift_ms
    17      1     source tag (0 = SF, 1 = SSL, 2 = FUSED)
    18      4*T*D float32 payload, row-major

Payloads are float32, so a matrix round-trips bit-exactly once its values are
float32-representable (anything that was itself loaded from a FEAT file).
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FeatFormatError, InvalidDataError, ShapeError
from .features import FeatureMatrix, Source
from .rng import SplitMix64

log = logging.getLogger(__name__)

MAGIC = b"FEAT"
VERSION = 1
_HEADER = struct.Struct("<4sBIIfB")
HEADER_SIZE = _HEADER.size

# SSL encoders see 25 ms of audio per frame and hop 20 ms
SSL_RECEPTIVE_FIELD_MS = 25.0
SSL_FRAME_SHIFT_MS = 20.0


def encode_features(fm):
    T, D = fm.shape
    if T >= 2**32 or D >= 2**32:
        raise ShapeError(f"matrix too large for FEAT: {fm.shape}")
    header = _HEADER.pack(MAGIC, VERSION, T, D, fm.frame_shift_ms, fm.source.value)
    return header + np.ascontiguousarray(fm.data, dtype="<f4").tobytes()


def decode_features(buf, source=None):
    """Parse FEAT bytes. ``source`` overrides the tag stored in the header."""
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FeatFormatError("missing FEAT magic", offset=0)
    if len(buf) < HEADER_SIZE:
        raise FeatFormatError(f"truncated header: {len(buf)} of {HEADER_SIZE} bytes", offset=len(buf))
    _, version, T, D, shift, tag = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise FeatFormatError(f"unsupported FEAT version {version}", offset=4)
    if tag not in (s.value for s in Source):
        raise FeatFormatError(f"unknown source tag {tag}", offset=17)
    if not (np.isfinite(shift) and shift > 0):
        raise FeatFormatError(f"invalid frame shift {shift}", offset=13)
    expected = HEADER_SIZE + 4 * T * D
    if len(buf) < expected:
        raise FeatFormatError(
            f"truncated payload: header declares {T}x{D} floats ({expected} bytes), file has {len(buf)}",
            offset=len(buf),
        )
    if len(buf) > expected:
        raise FeatFormatError(f"{len(buf) - expected} trailing bytes after payload", offset=expected)
    data = np.frombuffer(buf, dtype="<f4", count=T * D, offset=HEADER_SIZE).reshape(T, D)
    bad = np.flatnonzero(~np.isfinite(data.ravel()))
    if bad.size:
        raise InvalidDataError(
            f"non-finite value in payload at byte offset {HEADER_SIZE + 4 * int(bad[0])}"
        )
    return FeatureMatrix(data.astype(np.float64), float(shift), source or Source(tag))


def save_features(fm, path):
    Path(path).write_bytes(encode_features(fm))


def read_features(path):
    """Load a FEAT file keeping its stored source tag."""
    return decode_features(Path(path).read_bytes())


def load_features(path):
    """Load a precomputed SSL feature file (tagged SSL on return)."""
    return decode_features(Path(path).read_bytes(), source=Source.SSL)


@dataclass(frozen=True)
class SslSourceConfig:
    kind: str = "synthetic"
    path: str = None
    dim: int = 1024
    frame_shift_ms: float = SSL_FRAME_SHIFT_MS
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("file", "synthetic"):
            raise ConfigurationError(f"unknown SSL source kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ConfigurationError("file source needs a path")
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")
        if not self.frame_shift_ms > 0:
            raise ConfigurationError("frame_shift_ms must be positive")


def ssl_frame_count(n_samples, sample_rate=16000):
    """Frames an SSL encoder emits for ``n_samples`` of audio (25 ms field, 20 ms hop)."""
    field = int(round(sample_rate * SSL_RECEPTIVE_FIELD_MS / 1000.0))
    hop = int(round(sample_rate * SSL_FRAME_SHIFT_MS / 1000.0))
    if n_samples < field:
        return 0
    return (n_samples - field) // hop + 1


def synth_features(cfg, n_frames, injected_signal=None, sf_dim=80):
    """Seeded standard-normal ``n_frames x cfg.dim`` stream.

    If ``injected_signal`` (``n_frames x k``) is given, it overwrites the first
    ``k`` columns verbatim.
    """
    if n_frames < 0:
        raise ShapeError(f"n_frames must be >= 0, got {n_frames}")
    if cfg.dim <= sf_dim:
        log.warning("SSL dim %d is not larger than the SF dim %d", cfg.dim, sf_dim)
    data = SplitMix64(cfg.seed).normal((n_frames, cfg.dim))
    if injected_signal is not None:
        sig = np.asarray(injected_signal, dtype=np.float64)
        if sig.ndim != 2 or sig.shape[0] != n_frames or sig.shape[1] > cfg.dim:
            raise ShapeError(
                f"injected signal of shape {sig.shape} does not fit a {n_frames}x{cfg.dim} stream"
            )
        data[:, : sig.shape[1]] = sig
    return FeatureMatrix(data, cfg.frame_shift_ms, Source.SSL)


def ssl_features(cfg, n_frames=None):
    """Features from whichever source ``cfg`` names."""
    if cfg.kind == "file":
        return load_features(cfg.path)
    if n_frames is None:
        raise ConfigurationError("synthetic source needs n_frames")
    return synth_features(cfg, n_frames)
