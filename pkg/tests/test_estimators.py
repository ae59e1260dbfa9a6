import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from slotdie.core import OperatingPoint, SignalLog
from slotdie.datasets import cfd_gain
from slotdie.dynamics import ScalarSurrogate, simulate_mimo
from slotdie.estimators import KernelCalibrator, SurrogateIdentifier
from slotdie.ident import PrbsSpec, design_prbs
from slotdie.kernelmap import KernelParams, build_h_pde

OP = OperatingPoint(np.full(5, 1e-6), np.full(5, 1e-4))


@pytest.fixture(scope="module")
def surrogate_data():
    q = design_prbs(PrbsSpec(), OP, 0.01)
    dq = SignalLog(0.01, q.inputs - OP.q0[:, None], np.zeros_like(q.inputs), "deviation")
    log = simulate_mimo(ScalarSurrogate.normalized(0.09, 1.87e4, 197.0), cfd_gain(), dq)
    return log.inputs.T, log.outputs.T


class TestSurrogateIdentifier:
    def test_fit_predict(self, surrogate_data):
        X, y = surrogate_data
        est = SurrogateIdentifier(d_max=20).fit(X, y)
        assert est.delay_samples_ == 9 and est.delay_ == pytest.approx(0.09)
        assert est.surrogate_.c0 == pytest.approx(1.87e4, rel=1e-6)
        assert est.n_features_in_ == 5
        np.testing.assert_allclose(est.predict(X), y, atol=1e-12 * np.abs(y).max())
        assert est.score(X, y) == pytest.approx(1.0)

    def test_params_round_trip(self):
        est = SurrogateIdentifier(d_max=12, channel=1)
        assert clone(est).get_params()["d_max"] == 12
        assert est.set_params(rtol=1e-8).rtol == 1e-8

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            SurrogateIdentifier().predict(np.zeros((10, 5)))

    def test_shape_checks(self, surrogate_data):
        X, y = surrogate_data
        with pytest.raises(ValueError):
            SurrogateIdentifier().fit(X, y[:, :3])
        est = SurrogateIdentifier(d_max=12).fit(X, y)
        with pytest.raises(ValueError):
            est.predict(X[:, :4])


class TestKernelCalibrator:
    def test_recovers_kernel(self):
        H = build_h_pde(KernelParams(60.0, 0.014), _geom()).H
        est = KernelCalibrator().fit(H)
        assert est.kappa_ == pytest.approx(60.0, rel=1e-6)
        assert est.ell_ == pytest.approx(0.014, rel=1e-6)
        np.testing.assert_allclose(est.predict(), H, rtol=1e-6)
        assert est.score(H) == pytest.approx(1.0, abs=1e-6)

    def test_published_gain(self):
        est = KernelCalibrator().fit(cfd_gain().H)
        assert est.rel_error_ == pytest.approx(0.33, abs=0.005)

    def test_clone(self):
        assert clone(KernelCalibrator(tol=1e-8)).tol == 1e-8


def _geom():
    from slotdie.core import default_geometry

    return default_geometry()
