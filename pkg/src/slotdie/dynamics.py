"""Dead-time second-order surrogate, its exact ZOH discretisation, and MIMO simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .core import Geometry, SignalLog
from .kernelmap import CrossGain

# below this |mu^2 T^2| the matrix exponential switches to its Taylor form
_SERIES_BAND = 1e-6


@dataclass(frozen=True)
class ScalarSurrogate:
    """G(s) = exp(-L s) (b0 + b1 s) / (s^2 + c1 s + c0)."""

    L: float
    b0: float
    b1: float
    c0: float
    c1: float

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("dead time must be non-negative")
        if not (self.c0 > 0 and self.c1 > 0):
            raise ValueError(f"unstable denominator: c0={self.c0}, c1={self.c1}")
        for name in ("L", "b0", "b1", "c0", "c1"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")

    @classmethod
    def normalized(cls, L: float, c0: float, c1: float) -> "ScalarSurrogate":
        return cls(L=L, b0=c0, b1=0.0, c0=c0, c1=c1)

    @property
    def dc_gain(self) -> float:
        return self.b0 / self.c0

    @property
    def is_normalized(self) -> bool:
        return self.b0 == self.c0 and self.b1 == 0.0

    def to_dict(self) -> dict:
        return {"L": self.L, "b0": self.b0, "b1": self.b1, "c0": self.c0, "c1": self.c1}


def surrogate_from_geometry(g: Geometry, c0: float, c1: float) -> ScalarSurrogate:
    """Unit-DC surrogate whose dead time is the convective transit x_s / U0."""
    if not (c0 > 0 and c1 > 0):
        raise ValueError("c0 and c1 must be positive")
    return ScalarSurrogate.normalized(g.transport_delay, c0, c1)


def _expm_companion(c0: float, c1: float, T: float) -> np.ndarray:
    """exp(A T) for A = [[0, 1], [-c0, -c1]] in closed form.

    Uses exp(AT) = e^{sT} [cosh(mu T) I + sinh(mu T)/mu (A - s I)] with
    s = -c1/2, mu^2 = c1^2/4 - c0; the three damping regimes differ only in
    how cosh and sinh/mu are evaluated.
    """
    s = -0.5 * c1
    mu2 = 0.25 * c1 * c1 - c0
    x = mu2 * T * T
    if x > _SERIES_BAND:
        mu = math.sqrt(mu2)
        ep, em = math.exp((s + mu) * T), math.exp((s - mu) * T)
        ch, sh = 0.5 * (ep + em), (ep - em) / (2.0 * mu)
    elif x < -_SERIES_BAND:
        w = math.sqrt(-mu2)
        e = math.exp(s * T)
        ch, sh = e * math.cos(w * T), e * math.sin(w * T) / w
    else:
        e = math.exp(s * T)
        ch = e * (1.0 + x / 2.0 + x * x / 24.0)
        sh = e * T * (1.0 + x / 6.0 + x * x / 120.0)
    a_shift = np.array([[-s, 1.0], [-c0, -c1 - s]])
    return ch * np.eye(2) + sh * a_shift


class DiscreteFilter:
    """ZOH-discretised rational part plus an integer-sample delay line.

    State recurrence per channel: x(k+1) = Phi x(k) + Gamma w(k),
    y(k) = C x(k) + D w(k), with w(k) = u(k - d). Channels run in parallel;
    an instance carries mutable state and belongs to one simulation.
    """

    def __init__(self, Ts: float, d: int, Phi, Gamma, C, D: float = 0.0, rounded: bool = False):
        self.Ts = float(Ts)
        self.d = int(d)
        self.Phi = np.asarray(Phi, dtype=float)
        self.Gamma = np.asarray(Gamma, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.D = float(D)
        # True when L / Ts was not an integer and the delay got rounded
        self.rounded = rounded
        self.reset(1)

    @property
    def tf(self) -> tuple[np.ndarray, np.ndarray]:
        """(b, a) in powers of z^-1, excluding the delay."""
        p = self.Phi
        a1, a2 = -np.trace(p), np.linalg.det(p)
        n1 = self.C @ self.Gamma
        adj0 = np.array([[-p[1, 1], p[0, 1]], [p[1, 0], -p[0, 0]]])
        n2 = self.C @ adj0 @ self.Gamma
        D = self.D
        return np.array([D, n1 + D * a1, n2 + D * a2]), np.array([1.0, a1, a2])

    @property
    def dc_gain(self) -> float:
        return float(self.C @ np.linalg.solve(np.eye(2) - self.Phi, self.Gamma) + self.D)

    @property
    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.Phi)

    def reset(self, n_channels: int = 1) -> None:
        self.x = np.zeros((2, n_channels))
        self._fifo = np.zeros((self.d, n_channels))
        self._head = 0

    def _delayed(self, u: np.ndarray) -> np.ndarray:
        return self._fifo[self._head] if self.d else u

    def output(self, u=None) -> np.ndarray:
        """Current output y(k). ``u`` is only needed for undelayed feedthrough."""
        if self.d == 0:
            w = np.zeros(self.x.shape[1]) if u is None else np.asarray(u, dtype=float)
        else:
            w = self._fifo[self._head]
        return self.C @ self.x + self.D * w

    def advance(self, u) -> None:
        u = np.broadcast_to(np.asarray(u, dtype=float), (self.x.shape[1],))
        w = self._delayed(u).copy()
        if self.d:
            self._fifo[self._head] = u
            self._head = (self._head + 1) % self.d
        self.x = self.Phi @ self.x + np.outer(self.Gamma, w)

    def step(self, u) -> np.ndarray:
        y = self.output(u)
        self.advance(u)
        return y

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Zero-state response to ``u`` of shape (n_channels, N); does not touch state."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        b, a = self.tf
        y = signal.lfilter(b, a, u, axis=1)
        if self.d:
            out = np.zeros_like(y)
            out[:, self.d :] = y[:, : y.shape[1] - self.d]
            return out
        return y


def discretize_zoh(s: ScalarSurrogate, Ts: float, allow_rounding: bool = True) -> DiscreteFilter:
    """Exact zero-order-hold discretisation with the delay rounded to whole samples."""
    if not Ts > 0:
        raise ValueError("sample time must be positive")
    ratio = s.L / Ts
    d = int(round(ratio))
    rounded = abs(ratio - d) > 1e-9 * max(1.0, ratio)
    if rounded and not allow_rounding:
        raise ValueError(f"dead time {s.L} s is not a whole number of {Ts} s samples")
    phi = _expm_companion(s.c0, s.c1, Ts)
    a_inv = np.array([[-s.c1, -1.0], [s.c0, 0.0]]) / s.c0
    gamma = a_inv @ (phi - np.eye(2)) @ np.array([0.0, 1.0])
    return DiscreteFilter(Ts, d, phi, gamma, np.array([s.b0, s.b1]), 0.0, rounded)


def filter_channels(s: ScalarSurrogate, u: np.ndarray, Ts: float) -> np.ndarray:
    """Pass every row of ``u`` through the discretised G, delay included."""
    return discretize_zoh(s, Ts).apply(u)


def simulate_mimo(s: ScalarSurrogate, H: CrossGain, dq: SignalLog) -> SignalLog:
    """Zero-state response dh(k) = H r(k), r_i = G * dq_i."""
    if dq.frame != "deviation":
        raise ValueError("simulate_mimo expects deviation-frame inputs")
    if dq.n_channels != H.n:
        raise ValueError(f"input has {dq.n_channels} channels, gain matrix is {H.n}x{H.n}")
    r = filter_channels(s, dq.inputs, dq.sample_time)
    return SignalLog(dq.sample_time, dq.inputs, H.H @ r, frame="deviation", t0=dq.t0)


@dataclass
class SurrogatePlant:
    """Stateful G(s) H plant stepped one sample at a time (deviation frame)."""

    surrogate: ScalarSurrogate
    gain: CrossGain
    Ts: float
    _filter: DiscreteFilter = field(init=False, repr=False)

    def __post_init__(self):
        self._filter = discretize_zoh(self.surrogate, self.Ts)
        self.reset()

    @property
    def n(self) -> int:
        return self.gain.n

    def reset(self) -> None:
        self._filter.reset(self.n)

    def output(self) -> np.ndarray:
        return self.gain.H @ self._filter.output()

    def advance(self, dq) -> None:
        self._filter.advance(dq)
