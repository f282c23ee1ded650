import warnings

import numpy as np
import pytest

from bichromatic_eit.model import (AtomicLevelScheme, BichromaticDrive, ProbeField,
                                   SolverSettings, WeakProbeWarning, validate)


def make_config(omega_c=0.4, delta=0.7, gamma21=0.01, avg=0.0, omega_p=0.01, delta_p=0.0,
                omega_c2=None, method="banded", **settings):
    """Configuration in units of gamma; ``omega_c2`` defaults to ``omega_c``."""
    if delta == 0:
        drive = BichromaticDrive.monochromatic(omega_c, avg)
    else:
        drive = BichromaticDrive(omega_c, omega_c if omega_c2 is None else omega_c2,
                                 delta, avg + delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakProbeWarning)
        return validate(AtomicLevelScheme(gamma21=gamma21), drive,
                        ProbeField(omega_p, delta_p), SolverSettings(method=method, **settings))


@pytest.fixture
def fig2a():
    return make_config(0.4, 0.7, 0.01)


@pytest.fixture
def fig2b():
    return make_config(2.0, 3.35, 0.01)


@pytest.fixture
def mono():
    return make_config(0.4, 0.0, 0.0)


def lorentzian(dp):
    dp = np.asarray(dp, float)
    return 0.25 / (0.25 + dp ** 2)
