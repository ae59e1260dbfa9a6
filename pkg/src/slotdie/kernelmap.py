"""Gaussian-kernel cross-directional gain family and its calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import Geometry
from .numerics import erf, minimize_1d

Provenance = Literal["kernel", "identified", "finite-difference"]

DEFAULT_ELL_RANGE = (1e-4, 1e-1)


@dataclass(frozen=True)
class KernelParams:
    kappa: float
    ell: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.ell > 0):
            raise ValueError("kappa and ell must be positive")


@dataclass(frozen=True)
class CrossGain:
    """Square DC gain matrix H[j, i] = d h_j / d q_i in m/(m^3/s)."""

    H: np.ndarray
    provenance: Provenance = "identified"

    def __post_init__(self):
        h = np.array(self.H, dtype=float, copy=True)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"cross gain must be square, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("cross gain has non-finite entries")
        if self.provenance not in ("kernel", "identified", "finite-difference"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        h.setflags(write=False)
        object.__setattr__(self, "H", h)

    @property
    def n(self) -> int:
        return int(self.H.shape[0])

    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "provenance": self.provenance}


@dataclass(frozen=True)
class CalibrationResult:
    params: KernelParams
    rel_error: float

    @property
    def kappa_star(self) -> float:
        return self.params.kappa

    @property
    def ell_star(self) -> float:
        return self.params.ell


def kernel_entry(j: int, i: int, p: KernelParams, g: Geometry) -> float:
    """Gain from inlet ``i`` to sensor ``j`` (0-based) for a point sensor.

    Integral of the Gaussian kernel over the uniform stripe footprint of
    inlet i, evaluated at the centre of sensor j.
    """
    n = g.n_inlets
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"indices ({j}, {i}) out of range for {n} channels")
    y, ws = g.stripe_centers, g.stripe_width
    s = math.sqrt(2.0) * p.ell
    scale = p.kappa * math.sqrt(math.pi / 2.0) * p.ell / ws
    return scale * (erf((y[i] + ws / 2 - y[j]) / s) - erf((y[i] - ws / 2 - y[j]) / s))


def build_h_pde(p: KernelParams, g: Geometry) -> CrossGain:
    y, ws = g.stripe_centers, g.stripe_width
    s = math.sqrt(2.0) * p.ell
    offset = y[None, :] - y[:, None]  # [j, i] -> y_i - y_j
    scale = p.kappa * math.sqrt(math.pi / 2.0) * p.ell / ws
    h = scale * (erf((offset + ws / 2) / s) - erf((offset - ws / 2) / s))
    return CrossGain(h, provenance="kernel")


def _shape(ell: float, g: Geometry) -> np.ndarray:
    return build_h_pde(KernelParams(1.0, ell), g).H


def _as_matrix(h_hat: CrossGain | np.ndarray, g: Geometry) -> np.ndarray:
    h = h_hat.H if isinstance(h_hat, CrossGain) else np.asarray(h_hat, dtype=float)
    if h.shape != (g.n_inlets, g.n_inlets):
        raise ValueError(f"gain matrix shape {h.shape} does not match {g.n_inlets} channels")
    return h


def kappa_star(h_hat: CrossGain | np.ndarray, ell: float, g: Geometry) -> float:
    """Frobenius projection coefficient of h_hat onto the unit-scale kernel map."""
    if not ell > 0:
        raise ValueError("ell must be positive")
    h = _as_matrix(h_hat, g)
    h0 = _shape(ell, g)
    denom = float(np.sum(h0 * h0))
    assert denom > 0, "unit-scale kernel map vanished"
    return float(np.sum(h * h0)) / denom


def calibrate(
    h_hat: CrossGain | np.ndarray,
    g: Geometry,
    ell_range: tuple[float, float] = DEFAULT_ELL_RANGE,
    tol: float = 1e-10,
) -> CalibrationResult:
    """Best Gaussian-kernel fit (kappa*, ell*) to an identified gain matrix."""
    h = _as_matrix(h_hat, g)
    norm = float(np.linalg.norm(h))
    if norm == 0:
        raise ValueError("cannot calibrate against an all-zero gain matrix")
    lo, hi = ell_range
    if not 0 < lo < hi:
        raise ValueError("ell_range must be a positive interval")

    def mismatch(ell: float) -> float:
        return float(np.linalg.norm(h - kappa_star(h, ell, g) * _shape(ell, g)))

    ell = minimize_1d(mismatch, lo, hi, tol=tol)
    kappa = kappa_star(h, ell, g)
    if kappa <= 0:
        raise ValueError("gain matrix is anti-aligned with every kernel shape (kappa* <= 0)")
    return CalibrationResult(KernelParams(kappa, ell), mismatch(ell) / norm)
