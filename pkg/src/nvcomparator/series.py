"""Uniformly sampled field records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a physical or structural invariant."""


@dataclass
class TimeSeries:
    """Uniformly sampled record.

    ``samples`` are in SI units (tesla for field records). ``valid`` marks
    samples a tracker could not vouch for; ``None`` means all valid.
    """

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0
    units: str = "T"
    valid: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValidationError("samples must be one-dimensional")
        if not self.sample_rate > 0:
            raise ValidationError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.samples.shape:
                raise ValidationError("valid mask must match samples")

    def __len__(self):
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    @property
    def all_valid(self) -> bool:
        return self.valid is None or bool(self.valid.all())

    def slice(self, start: int, stop: int) -> "TimeSeries":
        valid = None if self.valid is None else self.valid[start:stop]
        return TimeSeries(
            self.sample_rate,
            self.samples[start:stop],
            self.start_time + start / self.sample_rate,
            self.units,
            valid,
        )

    def with_samples(self, samples) -> "TimeSeries":
        return TimeSeries(self.sample_rate, samples, self.start_time, self.units, self.valid)

    def require_nonempty(self):
        if self.samples.size == 0:
            raise ValidationError("time series is empty")
