"""PRBS experiment design and identification of the factored G(s) H model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .core import OperatingPoint, SignalLog
from .dynamics import ScalarSurrogate, filter_channels
from .kernelmap import CrossGain
from .numerics import ConvergenceError, lstsq, prbs_bits

DEFAULT_D_MAX = 30


@dataclass(frozen=True)
class PoleGrid:
    """Log-spaced starting grid for the (c0, c1) search."""

    c0_range: tuple[float, float] = (1e2, 1e6)
    c1_range: tuple[float, float] = (1e0, 1e4)
    points: int = 17

    def __post_init__(self):
        for lo, hi in (self.c0_range, self.c1_range):
            if not 0 < lo < hi:
                raise ValueError("grid ranges must be positive intervals")
        if self.points < 2:
            raise ValueError("grid needs at least two points per axis")

    def cells(self) -> list[tuple[float, float]]:
        c0 = np.geomspace(*self.c0_range, self.points)
        c1 = np.geomspace(*self.c1_range, self.points)
        return [(a, b) for a in c0 for b in c1]

    def log_bounds(self) -> list[tuple[float, float]]:
        # one decade of slack beyond the grid; wrong delays can push the poles away
        return [
            (math.log(self.c0_range[0] / 10), math.log(self.c0_range[1] * 10)),
            (math.log(self.c1_range[0] / 10), math.log(self.c1_range[1] * 10)),
        ]


DEFAULT_GRID = PoleGrid()


@dataclass(frozen=True)
class PrbsSpec:
    amplitude_fraction: float = 0.10
    bit_duration: float = 0.01
    total_duration: float = 2.0
    base_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.amplitude_fraction < 1:
            raise ValueError("amplitude_fraction must lie in [0, 1)")
        if not self.bit_duration > 0:
            raise ValueError("bit_duration must be positive")
        if self.total_duration < 20 * self.bit_duration * (1 - 1e-12):
            raise ValueError("total_duration must cover at least 20 bits")


@dataclass(frozen=True)
class FitReport:
    """Per-channel fit quality. ``r_squared`` is NaN where the data has no variance."""

    rmse: np.ndarray
    r_squared: np.ndarray
    residuals: np.ndarray

    def to_dict(self) -> dict:
        return {
            "rmse": [float(v) for v in self.rmse],
            "r2": [None if math.isnan(v) else float(v) for v in self.r_squared],
        }


def design_prbs(spec: PrbsSpec, op: OperatingPoint, Ts: float) -> SignalLog:
    """Absolute-frame excitation q_i0 (1 +/- a) with one LFSR seed per channel.

    The output rows hold h0 as a placeholder until the log is run on a plant.
    """
    if not Ts > 0:
        raise ValueError("sample time must be positive")
    per_bit = spec.bit_duration / Ts
    spb = int(round(per_bit))
    if spb < 1 or abs(per_bit - spb) > 1e-9 * per_bit:
        raise ValueError("bit_duration must be an integer multiple of Ts")
    n_samples = int(round(spec.total_duration / Ts))
    n_bits = -(-n_samples // spb)
    rows = []
    for i in range(op.n):
        bits = prbs_bits(n_bits, spec.base_seed + i)
        rows.append(np.repeat(bits, spb)[:n_samples])
    q = op.q0[:, None] * (1.0 + spec.amplitude_fraction * np.array(rows))
    h = np.repeat(op.h0[:, None], n_samples, axis=1)
    return SignalLog(Ts, q, h, frame="absolute")


# ---------------------------------------------------------------------------
# SISO fit


def _check_log(log: SignalLog, Ts: float | None = None) -> None:
    if log.frame != "deviation":
        raise ValueError("identification expects a deviation-frame log")
    if Ts is not None and not math.isclose(Ts, log.sample_time, rel_tol=1e-9):
        raise ValueError(f"Ts={Ts} does not match the log sample time {log.sample_time}")


def _shift(r: np.ndarray, d: int) -> np.ndarray:
    if d == 0:
        return r
    out = np.zeros_like(r)
    out[:, d:] = r[:, :-d]
    return out


@dataclass
class _SisoProblem:
    """Output-error objective with the per-input gains projected out.

    For candidate poles the inputs are filtered through the unit-DC G and the
    output is regressed on them, so the residual depends on (c0, c1, d) only.
    """

    u: np.ndarray  # (m, N) regressor inputs
    y: np.ndarray  # (N,)
    Ts: float

    def __post_init__(self):
        self.sst = max(float(self.y @ self.y), 1e-300)

    def filtered(self, c0: float, c1: float) -> np.ndarray:
        s = ScalarSurrogate.normalized(0.0, c0, c1)
        return filter_channels(s, self.u, self.Ts)

    def sse(self, r: np.ndarray) -> float:
        if not np.all(np.isfinite(r)):
            return math.inf
        theta, *_ = np.linalg.lstsq(r.T, self.y, rcond=None)
        e = self.y - theta @ r
        return float(e @ e) / self.sst

    def objective(self, d: int):
        def f(z):
            c0, c1 = math.exp(z[0]), math.exp(z[1])
            if not (math.isfinite(c0) and math.isfinite(c1)):
                return math.inf
            return self.sse(_shift(self.filtered(c0, c1), d))

        return f


def _refine(problem: _SisoProblem, d: int, start, rtol: float, grid: PoleGrid):
    """Nelder-Mead in log(c0), log(c1); returns (c0, c1, cost, converged)."""
    res = optimize.minimize(
        problem.objective(d),
        np.log(start),
        method="Nelder-Mead",
        bounds=grid.log_bounds(),
        options={"xatol": rtol, "fatol": 1e-15, "maxiter": 4000, "maxfev": 8000},
    )
    c0, c1 = (float(v) for v in np.exp(res.x))
    return c0, c1, float(res.fun), bool(res.success)


def _converged(fit, d: int):
    c0, c1, cost, ok = fit
    if not ok:
        raise ConvergenceError(f"pole refinement did not converge for d={d}")
    return c0, c1, cost


def _problem(log: SignalLog, channel: int, all_inputs: bool) -> _SisoProblem:
    n = log.n_channels
    if not 0 <= channel < n:
        raise IndexError(f"channel {channel} out of range for {n} channels")
    if np.ptp(log.inputs[channel]) == 0:
        raise ValueError(f"input channel {channel} is not excited")
    u = log.inputs if all_inputs else log.inputs[channel : channel + 1]
    return _SisoProblem(np.asarray(u), np.asarray(log.outputs[channel]), log.sample_time)


def _fit_fixed_delay(problem: _SisoProblem, d: int, rtol: float, grid: PoleGrid):
    cells = grid.cells()
    cost = [problem.objective(d)(np.log(p)) for p in cells]
    start = cells[int(np.argmin(cost))]
    return _converged(_refine(problem, d, start, rtol, grid), d)


def fit_siso(
    log: SignalLog,
    channel: int,
    d: int,
    Ts: float | None = None,
    all_inputs: bool = True,
    rtol: float = 1e-10,
    grid: PoleGrid = DEFAULT_GRID,
) -> ScalarSurrogate:
    """Normalized surrogate (b0 = c0, b1 = 0, L = d Ts) by output-error least squares.

    With ``all_inputs`` the output is regressed on every filtered inlet so that
    cross-coupled inputs do not act as disturbances; the gains are discarded.
    """
    _check_log(log, Ts)
    if d < 0:
        raise ValueError("delay must be non-negative")
    problem = _problem(log, channel, all_inputs)
    c0, c1, _ = _fit_fixed_delay(problem, d, rtol, grid)
    return ScalarSurrogate.normalized(d * log.sample_time, c0, c1)


@dataclass(frozen=True)
class DelayEstimate:
    L: float
    d: int
    surrogate: ScalarSurrogate
    sse: np.ndarray  # normalized residual for every candidate d

    def __iter__(self):
        # allows ``L, d = estimate_delay(...)``
        return iter((self.L, self.d))


def estimate_delay(
    log: SignalLog,
    channel: int,
    d_max: int = DEFAULT_D_MAX,
    all_inputs: bool = True,
    rtol: float = 1e-10,
    grid: PoleGrid = DEFAULT_GRID,
) -> DelayEstimate:
    """Exhaustive integer-delay search, each candidate with a full SISO fit."""
    _check_log(log)
    if d_max < 0 or d_max > log.n_samples / 4:
        raise ValueError(f"d_max={d_max} must lie in [0, N/4] with N={log.n_samples}")
    problem = _problem(log, channel, all_inputs)
    cells = grid.cells()
    # filter once per grid cell, then every delay is just a shift
    filtered = [problem.filtered(*p) for p in cells]
    fits = []
    for d in range(d_max + 1):
        costs = [problem.sse(_shift(r, d)) for r in filtered]
        fits.append(_refine(problem, d, cells[int(np.argmin(costs))], rtol, grid))
    sse = np.array([f[2] for f in fits])
    d = int(np.argmin(sse))
    # losing candidates may stall at the box edge; only the winner must converge
    c0, c1, _ = _converged(fits[d], d)
    L = d * log.sample_time
    return DelayEstimate(L, d, ScalarSurrogate.normalized(L, c0, c1), sse)


# ---------------------------------------------------------------------------
# gain matrix and validation


def fit_H(log: SignalLog, s: ScalarSurrogate, Ts: float | None = None) -> CrossGain:
    """Row-wise least squares of dh_j on the filtered inputs r_i = G * dq_i."""
    _check_log(log, Ts)
    r = filter_channels(s, log.inputs, log.sample_time)
    X = r.T
    H = np.vstack([lstsq(X, log.outputs[j]) for j in range(log.n_channels)])
    return CrossGain(H, provenance="identified")


def _simulate(log: SignalLog, s: ScalarSurrogate, H: CrossGain) -> np.ndarray:
    if H.n != log.n_channels:
        raise ValueError(f"log has {log.n_channels} channels, gain matrix is {H.n}x{H.n}")
    return H.H @ filter_channels(s, log.inputs, log.sample_time)


def validate(log: SignalLog, s: ScalarSurrogate, H: CrossGain) -> FitReport:
    _check_log(log)
    resid = log.outputs - _simulate(log, s, H)
    rmse = np.sqrt(np.mean(resid**2, axis=1))
    centered = log.outputs - log.outputs.mean(axis=1, keepdims=True)
    sst = np.sum(centered**2, axis=1)
    sse = np.sum(resid**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(sst > 0, 1.0 - sse / np.where(sst > 0, sst, 1.0), np.nan)
    return FitReport(rmse, r2, resid)


@dataclass(frozen=True)
class IdentifiedModel:
    surrogate: ScalarSurrogate
    d: int
    Ts: float
    H: CrossGain
    fit: FitReport | None = None
    op: OperatingPoint | None = None


def identify(
    log: SignalLog,
    channel: int | None = None,
    d_max: int = DEFAULT_D_MAX,
    all_inputs: bool = True,
    rtol: float = 1e-10,
    grid: PoleGrid = DEFAULT_GRID,
    op: OperatingPoint | None = None,
) -> IdentifiedModel:
    """Delay, poles, gain matrix and fit metrics in one pass (deviation-frame log).

    The representative SISO channel defaults to the centre one.
    """
    channel = log.n_channels // 2 if channel is None else channel
    est = estimate_delay(log, channel, d_max, all_inputs, rtol, grid)
    H = fit_H(log, est.surrogate)
    fit = validate(log, est.surrogate, H)
    return IdentifiedModel(est.surrogate, est.d, log.sample_time, H, fit, op)


__all__ = [
    "PoleGrid",
    "PrbsSpec",
    "FitReport",
    "DelayEstimate",
    "IdentifiedModel",
    "design_prbs",
    "estimate_delay",
    "fit_siso",
    "fit_H",
    "validate",
    "identify",
]
