"""Shared domain types and operating-point bookkeeping.

Everything is stored in SI base units (m, s, m^3/s). Channel vectors are
ordered by ascending stripe centre and sensors are index-aligned with inlets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

Frame = Literal["absolute", "deviation"]


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Geometry:
    """Slot-die and sensor layout."""

    stripe_centers: np.ndarray
    stripe_width: float
    channel_height: float
    sensor_station: float
    sensor_radius: float
    coating_width: float
    web_speed: float

    def __post_init__(self):
        centers = _frozen(self.stripe_centers, 1, "stripe_centers")
        object.__setattr__(self, "stripe_centers", centers)
        if centers.size < 1:
            raise ValueError("need at least one inlet stripe")
        if np.any(np.diff(centers) <= 0):
            raise ValueError("stripe centres must be strictly ascending")
        ws = self.stripe_width
        if ws <= 0 or self.channel_height <= 0 or self.coating_width <= 0:
            raise ValueError("stripe width, channel height and coating width must be positive")
        if self.web_speed <= 0 or self.sensor_station <= 0 or self.sensor_radius <= 0:
            raise ValueError("web speed, sensor station and sensor radius must be positive")
        if self.sensor_radius >= ws / 2:
            raise ValueError("sensor radius must be smaller than half the stripe width")
        # small slack so that stripes tiling [0, w] exactly pass despite rounding
        slack = 1e-12 * self.coating_width
        lo, hi = centers - ws / 2, centers + ws / 2
        if lo[0] < -slack or hi[-1] > self.coating_width + slack:
            raise ValueError("stripes must lie inside the coating width")
        if np.any(lo[1:] < hi[:-1] - slack):
            raise ValueError("stripes must not overlap")

    @property
    def n_inlets(self) -> int:
        return int(self.stripe_centers.size)

    @property
    def transport_delay(self) -> float:
        """Convective transit time from die lip to sensor station [s]."""
        return self.sensor_station / self.web_speed

    @property
    def stripe_area(self) -> float:
        return self.stripe_width * self.channel_height

    def stripe_bounds(self) -> np.ndarray:
        """(n, 2) array of stripe intervals [y_i - w_s/2, y_i + w_s/2]."""
        half = self.stripe_width / 2
        return np.column_stack([self.stripe_centers - half, self.stripe_centers + half])

    def to_dict(self) -> dict:
        return {
            "stripe_centers_m": [float(v) for v in self.stripe_centers],
            "stripe_width_m": self.stripe_width,
            "channel_height_m": self.channel_height,
            "sensor_station_m": self.sensor_station,
            "sensor_radius_m": self.sensor_radius,
            "coating_width_m": self.coating_width,
            "web_speed_mps": self.web_speed,
        }


def default_geometry() -> Geometry:
    """Five 30 mm stripes across a 150 mm coating, sensors 30 mm downstream."""
    return Geometry(
        stripe_centers=np.array([15.0, 45.0, 75.0, 105.0, 135.0]) * 1e-3,
        stripe_width=0.030,
        channel_height=0.004,
        sensor_station=0.030,
        sensor_radius=0.001,
        coating_width=0.150,
        web_speed=0.333,
    )


@dataclass(frozen=True)
class OperatingPoint:
    q0: np.ndarray
    h0: np.ndarray

    def __post_init__(self):
        q0 = _frozen(self.q0, 1, "q0")
        h0 = _frozen(self.h0, 1, "h0")
        if q0.shape != h0.shape:
            raise ValueError(f"q0 and h0 lengths differ: {q0.size} vs {h0.size}")
        if np.any(q0 <= 0) or np.any(h0 <= 0):
            raise ValueError("operating point flows and thicknesses must be strictly positive")
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "h0", h0)

    @property
    def n(self) -> int:
        return int(self.q0.size)

    def to_dict(self) -> dict:
        return {"q0_m3ps": [float(v) for v in self.q0], "h0_m": [float(v) for v in self.h0]}

    @classmethod
    def from_dict(cls, data: dict) -> "OperatingPoint":
        return cls(q0=data["q0_m3ps"], h0=data["h0_m"])


@dataclass(frozen=True)
class SignalLog:
    """Uniformly sampled multichannel record; rows are channels, columns samples."""

    sample_time: float
    inputs: np.ndarray
    outputs: np.ndarray
    frame: Frame = "absolute"
    # no semantic role, kept so CSV round trips preserve the time origin
    t0: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not self.sample_time > 0:
            raise ValueError("sample time must be positive")
        if self.frame not in ("absolute", "deviation"):
            raise ValueError(f"unknown frame {self.frame!r}")
        u = _frozen(self.inputs, 2, "inputs")
        y = _frozen(self.outputs, 2, "outputs")
        if u.shape != y.shape:
            raise ValueError(f"inputs {u.shape} and outputs {y.shape} must have equal shapes")
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    @property
    def n_channels(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def time(self) -> np.ndarray:
        return self.t0 + self.sample_time * np.arange(self.n_samples)


def _check_op(log: SignalLog, op: OperatingPoint) -> None:
    if log.n_channels != op.n:
        raise ValueError(f"log has {log.n_channels} channels, operating point has {op.n}")


def to_deviation(log: SignalLog, op: OperatingPoint) -> SignalLog:
    """Subtract (q0, h0) from every sample."""
    if log.frame != "absolute":
        raise ValueError("log is already in deviation coordinates")
    _check_op(log, op)
    return replace(
        log,
        inputs=log.inputs - op.q0[:, None],
        outputs=log.outputs - op.h0[:, None],
        frame="deviation",
    )


def to_absolute(log: SignalLog, op: OperatingPoint) -> SignalLog:
    """Inverse of :func:`to_deviation`.

    The round trip is bit-exact whenever every absolute sample lies within a
    factor of two of its operating value (the subtraction is then exact),
    which covers any small-signal log.
    """
    if log.frame != "deviation":
        raise ValueError("log is already in absolute coordinates")
    _check_op(log, op)
    return replace(
        log,
        inputs=log.inputs + op.q0[:, None],
        outputs=log.outputs + op.h0[:, None],
        frame="absolute",
    )


# ---------------------------------------------------------------------------
# CSV I/O

class LogFormatError(ValueError):
    """Malformed SignalLog CSV; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _header(n: int) -> list[str]:
    return ["t"] + [f"q{i + 1}" for i in range(n)] + [f"h{i + 1}" for i in range(n)]


def write_log_csv(log: SignalLog, path: str | Path) -> None:
    """Write ``t,q1..qn,h1..hn`` with shortest round-trip float formatting."""
    n = log.n_channels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(n))
        for k in range(log.n_samples):
            t = round(log.t0 + k * log.sample_time, 12)
            row = [repr(float(t))]
            row += [repr(float(v)) for v in log.inputs[:, k]]
            row += [repr(float(v)) for v in log.outputs[:, k]]
            writer.writerow(row)


def read_log_csv(path: str | Path, frame: Frame = "absolute") -> SignalLog:
    """Parse a SignalLog CSV. Raises :class:`LogFormatError` naming the bad line."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise LogFormatError("empty file", 1)
    header = [c.strip() for c in rows[0]]
    if len(header) < 3 or (len(header) - 1) % 2:
        raise LogFormatError(f"bad header {header!r}", 1)
    n = (len(header) - 1) // 2
    if header != _header(n):
        raise LogFormatError(f"expected header {','.join(_header(n))}", 1)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise LogFormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            values = [float(c) for c in row]
        except ValueError as exc:
            raise LogFormatError(str(exc), lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise LogFormatError("non-finite value", lineno)
        data.append(values)
    if len(data) < 2:
        raise LogFormatError("need at least two samples", len(rows))
    arr = np.array(data)
    t = arr[:, 0]
    steps = np.diff(t)
    ts = float(steps[0])
    if ts <= 0:
        raise LogFormatError("time column must increase", 3)
    bad = np.flatnonzero(np.abs(steps - ts) > 1e-9 * max(1.0, abs(t[-1])))
    if bad.size:
        raise LogFormatError("time column is not uniformly spaced", int(bad[0]) + 3)
    # recover the nominal step from the whole span to suppress per-row rounding
    ts = float((t[-1] - t[0]) / (len(t) - 1))
    return SignalLog(
        sample_time=round(ts, 12),
        inputs=arr[:, 1 : 1 + n].T,
        outputs=arr[:, 1 + n :].T,
        frame=frame,
        t0=float(t[0]),
    )


def as_vector(values: Sequence[float] | np.ndarray | float, n: int, name: str) -> np.ndarray:
    """Broadcast a scalar or validate a length-n vector."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got shape {arr.shape}")
    return arr
