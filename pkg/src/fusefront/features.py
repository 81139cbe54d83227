from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidDataError, ShapeError


class Source(Enum):
    SF = 0
    SSL = 1
    FUSED = 2


@dataclass(frozen=True)
class FeatureMatrix:
    """A T x D feature stream plus its frame clock.

    ``data`` is always a 2-D float64 array; a 0-frame matrix keeps its width.
    """

    data: np.ndarray
    frame_shift_ms: float
    source: Source

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidDataError("feature matrix contains NaN or Inf")
        if not self.frame_shift_ms > 0:
            raise InvalidDataError(f"frame shift must be positive, got {self.frame_shift_ms}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "frame_shift_ms", float(self.frame_shift_ms))
        object.__setattr__(self, "source", Source(self.source))

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def replace(self, data=None, frame_shift_ms=None, source=None):
        return FeatureMatrix(
            self.data if data is None else data,
            self.frame_shift_ms if frame_shift_ms is None else frame_shift_ms,
            self.source if source is None else source,
        )
