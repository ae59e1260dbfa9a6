"""Published reference values bundled for tests, examples and the CLI.

Numbers are stored exactly as printed (three to four significant figures).
"""

from __future__ import annotations

import numpy as np

from .core import OperatingPoint
from .dynamics import ScalarSurrogate
from .kernelmap import CrossGain

#: identified gain matrix from the CFD logs [m / (m^3/s)]
CFD_H_HAT = (
    (49.38, 1.03, 7.41, 16.54, 14.53),
    (9.45, 43.59, 11.75, 10.76, 13.14),
    (1.39, 5.58, 52.63, 13.37, 15.49),
    (3.34, 13.50, 6.08, 53.15, 12.61),
    (0.16, 4.64, 11.19, 18.51, 54.84),
)

#: steady CFD sensor thicknesses [um]
CFD_H0_UM = (90.51, 87.16, 84.02, 88.30, 90.85)

#: identified supply dynamics
CFD_C0 = 1.87e4
CFD_C1 = 1.97e2
CFD_DELAY_S = 0.09

#: near-rank-one gain matrix used for the IMC study [m / (m^3/s)]
NEAR_RANK_ONE_H = (
    (0.4763, 0.4803, 0.4828, 0.4801, 0.4776),
    (0.4759, 0.4799, 0.4824, 0.4798, 0.4771),
    (0.4739, 0.4778, 0.4804, 0.4777, 0.4752),
    (0.4759, 0.4800, 0.4825, 0.4799, 0.4771),
    (0.4759, 0.4799, 0.4822, 0.4801, 0.4774),
)
NEAR_RANK_ONE_H0_M = 87e-6

Q0_M3PS = 1.0e-6


def cfd_gain() -> CrossGain:
    return CrossGain(np.array(CFD_H_HAT), provenance="identified")


def cfd_operating_point() -> OperatingPoint:
    return OperatingPoint(np.full(5, Q0_M3PS), np.array(CFD_H0_UM) * 1e-6)


def cfd_surrogate() -> ScalarSurrogate:
    return ScalarSurrogate.normalized(CFD_DELAY_S, CFD_C0, CFD_C1)


def near_rank_one_gain() -> CrossGain:
    return CrossGain(np.array(NEAR_RANK_ONE_H), provenance="identified")


def near_rank_one_surrogate() -> ScalarSurrogate:
    """e^{-0.09 s} / (s^2 + 12 s + 100): DC gain 0.01, not normalized."""
    return ScalarSurrogate(L=0.09, b0=1.0, b1=0.0, c0=100.0, c1=12.0)


def near_rank_one_operating_point() -> OperatingPoint:
    return OperatingPoint(np.full(5, Q0_M3PS), np.full(5, NEAR_RANK_ONE_H0_M))


BUILTIN_MODELS = {
    "cfd": (cfd_surrogate, cfd_gain, cfd_operating_point),
    "near-rank-one": (near_rank_one_surrogate, near_rank_one_gain, near_rank_one_operating_point),
}
