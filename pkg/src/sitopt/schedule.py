"""Piecewise release schedules: off, constant, and sampled segments.

A schedule covers [0, T] with contiguous segments.  Sampled segments carry a
grid of (t, rate) pairs interpolated piecewise-linearly, which is how the
singular feedback arc is stored once computed.  Evaluation is total on
[0, T]; times are clamped to the horizon so roundoff at segment edges cannot
escape the domain.  Values are right-continuous at interior boundaries.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = ["Segment", "ControlSchedule"]

OFF = "off"
CONSTANT = "constant"
SAMPLED = "sampled"


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    kind: str
    rate: float = 0.0
    ts: np.ndarray | None = None
    rates: np.ndarray | None = None

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"segment must have t_end > t_start, got [{self.t_start}, {self.t_end}]")
        if self.kind == OFF:
            object.__setattr__(self, "rate", 0.0)
        elif self.kind == CONSTANT:
            if self.rate < 0.0:
                raise ValueError(f"negative release rate {self.rate!r}")
        elif self.kind == SAMPLED:
            ts = np.asarray(self.ts, dtype=float)
            rates = np.asarray(self.rates, dtype=float)
            if ts.ndim != 1 or ts.shape != rates.shape or ts.size < 2:
                raise ValueError("sampled segment needs matching 1-d (t, rate) grids, len >= 2")
            if not np.all(np.diff(ts) > 0.0):
                raise ValueError("sampled segment times must increase strictly")
            if not math.isclose(ts[0], self.t_start, abs_tol=1e-9) or not math.isclose(
                ts[-1], self.t_end, abs_tol=1e-9
            ):
                raise ValueError("sampled grid must span the segment")
            if np.any(rates < 0.0):
                raise ValueError("negative release rate in sampled segment")
            object.__setattr__(self, "ts", ts)
            object.__setattr__(self, "rates", rates)
        else:
            raise ValueError(f"unknown segment kind {self.kind!r}")

    def value_at(self, t: float) -> float:
        if self.kind == OFF:
            return 0.0
        if self.kind == CONSTANT:
            return self.rate
        return float(np.interp(t, self.ts, self.rates))

    def mass(self) -> float:
        """Integral of the rate over the segment."""
        if self.kind == OFF:
            return 0.0
        if self.kind == CONSTANT:
            return self.rate * (self.t_end - self.t_start)
        return float(np.trapezoid(self.rates, self.ts))

    def max_rate(self) -> float:
        if self.kind == SAMPLED:
            return float(np.max(self.rates))
        return self.rate


@dataclass(frozen=True)
class ControlSchedule:
    """Release rate u(t) on [0, horizon], as contiguous segments."""

    segments: tuple[Segment, ...]
    horizon: float
    u_max: float | None = None
    _starts: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        if abs(self.segments[0].t_start) > 1e-12:
            raise ValueError("first segment must start at t = 0")
        for left, right in zip(self.segments, self.segments[1:]):
            if not math.isclose(left.t_end, right.t_start, rel_tol=0.0, abs_tol=1e-9):
                raise ValueError(
                    f"segments must be contiguous: gap between {left.t_end} and {right.t_start}"
                )
        if not math.isclose(self.segments[-1].t_end, self.horizon, abs_tol=1e-9):
            raise ValueError("segments must cover [0, horizon]")
        if self.u_max is not None:
            peak = max(seg.max_rate() for seg in self.segments)
            if peak > self.u_max * (1.0 + 1e-12):
                raise ValueError(f"rate {peak} exceeds attached bound {self.u_max}")
        object.__setattr__(self, "_starts", [seg.t_start for seg in self.segments])

    # -- constructors ---------------------------------------------------

    @classmethod
    def off(cls, horizon: float, u_max: float | None = None) -> "ControlSchedule":
        return cls((Segment(0.0, horizon, OFF),), horizon, u_max)

    @classmethod
    def constant(cls, rate: float, horizon: float, u_max: float | None = None) -> "ControlSchedule":
        return cls((Segment(0.0, horizon, CONSTANT, rate=rate),), horizon, u_max)

    @classmethod
    def from_segments(cls, segments: Iterable[Segment], horizon: float,
                      u_max: float | None = None) -> "ControlSchedule":
        return cls(tuple(segments), horizon, u_max)

    @classmethod
    def pulse_train(cls, rate: float, period: float, width: float, horizon: float,
                    u_max: float | None = None) -> "ControlSchedule":
        """Releases of the given rate during [k*period, k*period + width)."""
        if not 0.0 < width <= period:
            raise ValueError("pulse width must lie in (0, period]")
        segs: list[Segment] = []
        t = 0.0
        while t < horizon - 1e-12:
            on_end = min(t + width, horizon)
            segs.append(Segment(t, on_end, CONSTANT, rate=rate))
            if on_end >= horizon - 1e-12:
                break
            off_end = min(t + period, horizon)
            if off_end > on_end:
                segs.append(Segment(on_end, off_end, OFF))
            t += period
        return cls(tuple(segs), horizon, u_max)

    @classmethod
    def piecewise_constant(cls, edges: Sequence[float], values: Sequence[float],
                           u_max: float | None = None) -> "ControlSchedule":
        """Cell-wise constant control on the given edge grid (edges[0] = 0)."""
        edges = np.asarray(edges, dtype=float)
        values = np.asarray(values, dtype=float)
        if edges.ndim != 1 or edges.size != values.size + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        segs = []
        for i, v in enumerate(values):
            kind = OFF if v == 0.0 else CONSTANT
            segs.append(Segment(float(edges[i]), float(edges[i + 1]), kind, rate=float(v)))
        return cls(tuple(segs), float(edges[-1]), u_max)

    # -- queries ---------------------------------------------------------

    def segment_at(self, t: float) -> Segment:
        t = min(max(t, 0.0), self.horizon)
        idx = bisect.bisect_right(self._starts, t) - 1
        return self.segments[max(idx, 0)]

    def rate_at(self, t: float) -> float:
        t = min(max(t, 0.0), self.horizon)
        return self.segment_at(t).value_at(t)

    def boundaries(self) -> list[float]:
        """Interior segment boundaries, strictly inside (0, horizon)."""
        return [seg.t_start for seg in self.segments[1:]]

    def integral(self) -> float:
        """Total number of released individuals over the horizon."""
        return sum(seg.mass() for seg in self.segments)

    def max_rate(self) -> float:
        return max(seg.max_rate() for seg in self.segments)
