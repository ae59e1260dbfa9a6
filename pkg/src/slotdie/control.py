"""Decoupling P and IMC thickness controllers and discrete closed-loop simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .core import OperatingPoint, SignalLog, as_vector
from .dynamics import DiscreteFilter, ScalarSurrogate, discretize_zoh
from .kernelmap import CrossGain
from .numerics import IllConditionedError, NumericalError, SvdResult, inverse, svd
from .truthplant import TruthPlantConfig, _Stepper

DIVERGENCE_FACTOR = 100.0
SETTLING_BAND = 0.02
FINAL_WINDOW = 0.10


class DivergenceError(NumericalError):
    """Closed loop left the admissible envelope; ``step`` and ``peak`` locate it."""

    def __init__(self, message: str, step: int, peak: float):
        self.step = step
        self.peak = peak
        super().__init__(message)


# ---------------------------------------------------------------------------
# controllers


@dataclass(frozen=True)
class PController:
    K_P: np.ndarray
    beta: float

    @property
    def kind(self) -> str:
        return "p"

    def runtime(self, Ts: float, n: int) -> "_StaticLaw":
        return _StaticLaw(self.K_P)

    def to_dict(self) -> dict:
        return {"type": "p", "beta": self.beta, "K_P": self.K_P.tolist()}


def design_p(H_hat: CrossGain, beta: float) -> PController:
    """K_P = beta H^-1, giving the loop DC map beta I and tracking fraction beta/(1+beta)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    try:
        h_inv = inverse(H_hat.H)
    except IllConditionedError as exc:
        raise IllConditionedError(
            "gain matrix cannot be inverted for P design; use the IMC design with a "
            "singular-value floor instead",
            exc.condition,
        ) from None
    K = beta * h_inv
    K.setflags(write=False)
    n = H_hat.n
    resid = np.linalg.norm(H_hat.H @ K - beta * np.eye(n))
    if resid > 1e-8 * beta * n:
        raise IllConditionedError("inverse too inaccurate for decoupling", np.linalg.cond(H_hat.H))
    return PController(K, float(beta))


def tracking_fraction(beta: float) -> float:
    return beta / (1.0 + beta)


def shape_reference(h_target: float, op: OperatingPoint, beta: float) -> np.ndarray:
    """Deviation reference that lands every sensor on ``h_target`` under P control."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return (h_target - op.h0) / tracking_fraction(beta)


def imc_filter(s: ScalarSurrogate, lam: float) -> tuple[ScalarSurrogate, float]:
    """Split Q(s) = (s^2 + c1 s + c0) / (b0 (lam s + 1)^2) into proper part + feedthrough.

    Q(s) = 1/(b0 lam^2) + ((c1 - 2/lam) s + (c0 - 1/lam^2)) / (b0 lam^2 (s^2 + 2s/lam + 1/lam^2)).
    """
    k = 1.0 / (s.b0 * lam * lam)
    proper = ScalarSurrogate(
        L=0.0,
        b0=k * (s.c0 - 1.0 / lam**2),
        b1=k * (s.c1 - 2.0 / lam),
        c0=1.0 / lam**2,
        c1=2.0 / lam,
    )
    return proper, k


REALIZATIONS = ("zoh", "model-inverse")


@dataclass(frozen=True)
class ImcController:
    """Floored inverse D plus filter Q(s); ``realization`` picks how Q runs in discrete time.

    "zoh" holds and discretises Q(s) itself. "model-inverse" uses
    Q(z) = F(z) / G0(z) with F and G0 the ZOH equivalents of 1/(lam s + 1)^2 and
    the delay-free model, so the nominal sampled loop follows F exactly.
    """

    lam: float
    floor_fraction: float
    D: np.ndarray
    svd: SvdResult
    S_eff: np.ndarray
    H: CrossGain
    surrogate: ScalarSurrogate
    realization: str = "zoh"

    @property
    def kind(self) -> str:
        return "imc"

    @property
    def condition(self) -> float:
        return float(self.S_eff[0] / self.S_eff[-1])

    @property
    def filter_numerator(self) -> tuple[float, float, float]:
        """(c0, c1, 1) / b0, ascending powers of s."""
        s = self.surrogate
        return (s.c0 / s.b0, s.c1 / s.b0, 1.0 / s.b0)

    @property
    def filter_denominator(self) -> tuple[float, float, float]:
        """(1, 2 lam, lam^2), ascending powers of s."""
        return (1.0, 2.0 * self.lam, self.lam**2)

    def runtime(self, Ts: float, n: int) -> "_ImcLaw":
        return _ImcLaw(self, Ts, n)

    def to_dict(self) -> dict:
        return {
            "type": "imc",
            "lambda_s": self.lam,
            "floor_fraction": self.floor_fraction,
            "realization": self.realization,
            "D": self.D.tolist(),
            "H": self.H.H.tolist(),
            "surrogate": self.surrogate.to_dict(),
        }


def design_imc(
    H_hat: CrossGain,
    s: ScalarSurrogate,
    lam: float,
    floor_fraction: float = 0.05,
    realization: str = "zoh",
) -> ImcController:
    """Singular-value-floored inverse D = V S_eff^-1 U^T with a critically damped IMC filter."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if realization not in REALIZATIONS:
        raise ValueError(f"realization must be one of {REALIZATIONS}")
    if not 0 < floor_fraction <= 1:
        raise ValueError("floor_fraction must lie in (0, 1]")
    if s.b1 != 0:
        raise ValueError("IMC inverse requires b1 = 0 (no finite zero)")
    dec = svd(H_hat.H)
    if dec.S[0] <= 0:
        raise ValueError("gain matrix is zero")
    s_eff = np.maximum(dec.S, floor_fraction * dec.S[0])
    D = (dec.V / s_eff) @ dec.U.T
    D.setflags(write=False)
    s_eff.setflags(write=False)
    return ImcController(float(lam), float(floor_fraction), D, dec, s_eff, H_hat, s, realization)


def model_inverse_filter(s: ScalarSurrogate, lam: float, Ts: float):
    """(b, a) in powers of z^-1 for Q(z) = F(z) / G0(z).

    Both ZOH equivalents carry one sample of delay, which cancels, so the
    result is biproper and causal. G0's sampling zero must be stable.
    """
    gb, ga = discretize_zoh(replace(s, L=0.0), Ts).tf
    lag = ScalarSurrogate.normalized(0.0, 1.0 / lam**2, 2.0 / lam)
    fb, fa = discretize_zoh(lag, Ts).tf
    if abs(gb[2]) >= abs(gb[1]):
        raise ValueError("sampled model has a zero outside the unit circle; use realization='zoh'")
    b = np.convolve(fb[1:], ga)
    a = np.convolve(gb[1:], fa)
    return b / a[0], a / a[0]


class _TfChannels:
    """Stateful transfer function applied channel-wise, one sample at a time."""

    def __init__(self, b: np.ndarray, a: np.ndarray, n: int):
        self.b, self.a = b, a
        self.zi = np.zeros((max(len(a), len(b)) - 1, n))

    def step(self, x: np.ndarray) -> np.ndarray:
        y, self.zi = signal.lfilter(self.b, self.a, x[None, :], axis=0, zi=self.zi)
        return y[0]


class _StaticLaw:
    def __init__(self, K: np.ndarray):
        self.K = K

    def update(self, e: np.ndarray) -> np.ndarray:
        return self.K @ e

    def applied(self, u: np.ndarray) -> None:
        pass


class _ImcLaw:
    """u = Q D (e + y_model), y_model = H G u.

    The internal model turns the IMC structure into a controller driven by
    the error alone, so it slots into the same unity-feedback loop as P.
    """

    def __init__(self, ctrl: ImcController, Ts: float, n: int):
        if ctrl.realization == "zoh":
            proper, k = imc_filter(ctrl.surrogate, ctrl.lam)
            qf = discretize_zoh(proper, Ts)
            self.Q = DiscreteFilter(Ts, 0, qf.Phi, qf.Gamma, qf.C, D=k)
            self.Q.reset(n)
        else:
            self.Q = _TfChannels(*model_inverse_filter(ctrl.surrogate, ctrl.lam, Ts), n)
        self.G = discretize_zoh(ctrl.surrogate, Ts)
        self.G.reset(n)
        self.D = ctrl.D
        self.H = ctrl.H.H

    def update(self, e: np.ndarray) -> np.ndarray:
        y_model = self.H @ self.G.output()
        return self.Q.step(self.D @ (e + y_model))

    def applied(self, u: np.ndarray) -> None:
        # the model sees the actuation actually applied (after any clamp)
        self.G.advance(u)


# ---------------------------------------------------------------------------
# plants seen by the loop (deviation frame)


@dataclass
class SurrogateLoopPlant:
    surrogate: ScalarSurrogate
    gain: CrossGain
    op: OperatingPoint
    _f: DiscreteFilter | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.op.n != self.gain.n:
            raise ValueError("operating point and gain matrix sizes differ")

    @property
    def n(self) -> int:
        return self.gain.n

    def reset(self, Ts: float) -> None:
        self._f = discretize_zoh(self.surrogate, Ts)
        self._f.reset(self.n)

    def output(self) -> np.ndarray:
        return self.gain.H @ self._f.output()

    def advance(self, dq: np.ndarray) -> None:
        self._f.advance(dq)


@dataclass
class TruthLoopPlant:
    cfg: TruthPlantConfig
    _stepper: _Stepper | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        stepper = _Stepper(self.cfg)
        h0 = stepper.measure(stepper.steady_state(self.cfg.q0))
        self.op = OperatingPoint(self.cfg.q0, h0)

    @property
    def n(self) -> int:
        return self.cfg.geometry.n_inlets

    def reset(self, Ts: float) -> None:
        sub = Ts / self.cfg.sim_dt
        self._n_sub = int(round(sub))
        if self._n_sub < 1 or abs(sub - self._n_sub) > 1e-9 * sub:
            raise ValueError(f"Ts={Ts} is not an integer multiple of sim_dt={self.cfg.sim_dt}")
        self._stepper = _Stepper(self.cfg)
        self._state = self._stepper.steady_state(self.cfg.q0)
        self._rng = np.random.default_rng(self.cfg.rng_seed)

    def output(self) -> np.ndarray:
        h = self._stepper.measure(self._state)
        if self.cfg.noise_std > 0:
            h = h + self._rng.normal(0.0, self.cfg.noise_std, size=h.shape)
        return h - self.op.h0

    def advance(self, dq: np.ndarray) -> None:
        q = self.cfg.q0 + dq
        for _ in range(self._n_sub):
            self._stepper.step(self._state, q)


# ---------------------------------------------------------------------------
# closed loop


@dataclass(frozen=True)
class ClosedLoopResult:
    log: SignalLog
    final_values: np.ndarray
    overshoot: np.ndarray
    settling_time: np.ndarray

    def summary(self) -> dict:
        def clean(v):
            return [None if not math.isfinite(x) else float(x) for x in v]

        return {
            "final_values_m": clean(self.final_values),
            "overshoot": clean(self.overshoot),
            "settling_s": clean(self.settling_time),
        }


def step_metrics(h: np.ndarray, Ts: float, final_window: float = FINAL_WINDOW):
    """Final value, overshoot fraction and 2% settling time for each row of ``h``.

    The final value averages the last ``final_window`` of the record. Overshoot
    is the largest excursion past it relative to the net change from the first
    sample. Settling is the first time after which the response stays within 2%
    of the net change; NaN if it never does.
    """
    h = np.atleast_2d(h)
    N = h.shape[1]
    tail = max(1, int(round(final_window * N)))
    final = h[:, -tail:].mean(axis=1)
    net = final - h[:, 0]
    overshoot = np.zeros(h.shape[0])
    settle = np.zeros(h.shape[0])
    for j in range(h.shape[0]):
        if net[j] == 0:
            continue
        excursion = np.sign(net[j]) * (h[j] - final[j])
        overshoot[j] = max(0.0, float(excursion.max())) / abs(net[j])
        outside = np.flatnonzero(np.abs(h[j] - final[j]) > SETTLING_BAND * abs(net[j]))
        if outside.size == 0:
            settle[j] = 0.0
        elif outside[-1] == N - 1:
            settle[j] = math.nan
        else:
            settle[j] = (outside[-1] + 1) * Ts
    return final, overshoot, settle


def simulate_closed_loop(
    plant: SurrogateLoopPlant | TruthLoopPlant,
    ctrl: PController | ImcController,
    dref,
    horizon: float,
    Ts: float,
    clamp: bool = False,
) -> ClosedLoopResult:
    """Unity-feedback loop at period Ts in deviation coordinates.

    At each sample the plant output is measured, the control law maps the
    error to a flow deviation, and that flow is held for one period. There is
    no additional computation delay. With ``clamp`` the absolute flows are
    limited to [0, 2 q0].
    """
    if not (horizon > 0 and Ts > 0):
        raise ValueError("horizon and Ts must be positive")
    n = plant.n
    r = as_vector(dref, n, "dref")
    op = plant.op
    N = int(round(horizon / Ts))
    if N < 1:
        raise ValueError("horizon shorter than one sample")
    plant.reset(Ts)
    law = ctrl.runtime(Ts, n)
    limit = DIVERGENCE_FACTOR * float(np.max(np.abs(r)))
    dq_log = np.empty((n, N))
    dh_log = np.empty((n, N))
    for k in range(N):
        y = plant.output()
        peak = float(np.max(np.abs(y)))
        if not math.isfinite(peak) or (limit > 0 and peak > limit):
            raise DivergenceError(
                f"closed loop diverged at t={k * Ts:.3f} s: |dh| = {peak:.3e} m exceeds "
                f"{DIVERGENCE_FACTOR:g} x reference magnitude",
                k,
                peak,
            )
        u = law.update(r - y)
        if clamp:
            u = np.clip(u, -op.q0, op.q0)
        law.applied(u)
        dq_log[:, k] = u
        dh_log[:, k] = y
        plant.advance(u)
    log = SignalLog(Ts, dq_log + op.q0[:, None], dh_log + op.h0[:, None], frame="absolute")
    final, over, settle = step_metrics(log.outputs, Ts)
    return ClosedLoopResult(log, final, over, settle)
