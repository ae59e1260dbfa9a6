"""scikit-learn style wrappers around identification and kernel calibration.

Data follow the sklearn convention: rows are samples, columns are channels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import Geometry, SignalLog, default_geometry
from .dynamics import filter_channels
from .ident import DEFAULT_D_MAX, PoleGrid, estimate_delay, fit_H, validate
from .kernelmap import DEFAULT_ELL_RANGE, KernelParams, build_h_pde, calibrate


class SurrogateIdentifier(RegressorMixin, BaseEstimator):
    """Identify the delay, poles and gain matrix of dh = G(s) H dq.

    ``fit(X, y)`` takes deviation-frame flows X and thicknesses y, both of
    shape (n_samples, n_channels), sampled every ``sample_time`` seconds.
    ``predict`` returns the zero-state model response to new flows.
    """

    def __init__(
        self,
        sample_time: float = 0.01,
        channel: int | None = None,
        d_max: int = DEFAULT_D_MAX,
        all_inputs: bool = True,
        rtol: float = 1e-10,
        grid_points: int = 17,
    ):
        self.sample_time = sample_time
        self.channel = channel
        self.d_max = d_max
        self.all_inputs = all_inputs
        self.rtol = rtol
        self.grid_points = grid_points

    def _log(self, X, y) -> SignalLog:
        return SignalLog(self.sample_time, X.T, y.T, frame="deviation")

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = y.reshape(len(y), -1)
        if X.shape != y.shape:
            raise ValueError(f"X and y must have the same shape, got {X.shape} and {y.shape}")
        log = self._log(X, y)
        channel = X.shape[1] // 2 if self.channel is None else self.channel
        grid = PoleGrid(points=self.grid_points)
        est = estimate_delay(log, channel, self.d_max, self.all_inputs, self.rtol, grid)
        self.surrogate_ = est.surrogate
        self.delay_samples_ = est.d
        self.delay_ = est.L
        self.sse_by_delay_ = est.sse
        self.gain_ = fit_H(log, est.surrogate)
        self.fit_report_ = validate(log, est.surrogate, self.gain_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "gain_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} channels, got {X.shape[1]}")
        r = filter_channels(self.surrogate_, X.T, self.sample_time)
        return (self.gain_.H @ r).T


class KernelCalibrator(BaseEstimator):
    """Fit the Gaussian-kernel family (kappa, ell) to an identified gain matrix."""

    def __init__(
        self,
        geometry: Geometry | None = None,
        ell_range: tuple[float, float] = DEFAULT_ELL_RANGE,
        tol: float = 1e-10,
    ):
        self.geometry = geometry
        self.ell_range = ell_range
        self.tol = tol

    def fit(self, H_hat, y=None):
        H_hat = check_array(H_hat)
        g = self.geometry if self.geometry is not None else default_geometry()
        res = calibrate(H_hat, g, tuple(self.ell_range), self.tol)
        self.kappa_ = res.kappa_star
        self.ell_ = res.ell_star
        self.rel_error_ = res.rel_error
        self.kernel_ = build_h_pde(KernelParams(self.kappa_, self.ell_), g).H
        self.n_features_in_ = H_hat.shape[1]
        return self

    def predict(self, X=None):
        """Calibrated kernel gain matrix; ``X`` is ignored."""
        check_is_fitted(self, "kernel_")
        return self.kernel_.copy()

    def score(self, H_hat, y=None) -> float:
        """1 - relative Frobenius mismatch against ``H_hat``."""
        check_is_fitted(self, "kernel_")
        H_hat = check_array(H_hat)
        return 1.0 - float(np.linalg.norm(H_hat - self.kernel_) / np.linalg.norm(H_hat))
