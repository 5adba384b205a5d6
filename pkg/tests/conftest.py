import numpy as np
import pytest

from pulsefront import CoefficientField, PeriodicGrid, constant_field
from pulsefront.fields import CoefficientSpec, Harmonic


def make_harmonic_field(period_L=1.0, r_u=(1.0, 0.3, 1, 0.0),
                        r_v=(0.8, 0.2, 2, 0.7), gamma_u=(1.0,),
                        gamma_v=(1.0, 0.2, 1, 1.2), mu=(0.1,)):
    """Field with one cosine harmonic per coefficient (or none).

    Each entry is (mean,) or (mean, amplitude, wavenumber, phase).
    """
    def spec(args):
        if len(args) == 1:
            return CoefficientSpec(args[0])
        mean, amp, k, phase = args
        return CoefficientSpec(mean, (Harmonic(amp, k, phase),))
    return CoefficientField.from_specs(
        period_L, r_u=spec(r_u), r_v=spec(r_v), gamma_u=spec(gamma_u),
        gamma_v=spec(gamma_v), mu=spec(mu))


def random_harmonic_field(rng, period_L=1.0, r_sign=None):
    """Random positive coefficients with a couple of harmonics each."""
    def spec(mean, spread):
        harmonics = []
        budget = spread
        for k in (1, 2):
            amp = rng.uniform(0.0, 0.5 * budget)
            harmonics.append(Harmonic(amp, k, rng.uniform(0, 2 * np.pi)))
        return CoefficientSpec(mean, tuple(harmonics))

    r_mean = rng.uniform(0.3, 1.5)
    if r_sign is not None and r_sign < 0:
        r_mean = -r_mean
    return CoefficientField.from_specs(
        period_L,
        r_u=spec(r_mean, 0.4 * abs(r_mean)),
        r_v=spec(r_mean * rng.uniform(0.5, 1.5), 0.3 * abs(r_mean)),
        gamma_u=spec(rng.uniform(0.5, 2.0), 0.3),
        gamma_v=spec(rng.uniform(0.5, 2.0), 0.3),
        mu=spec(rng.uniform(0.05, 0.5), 0.02))


@pytest.fixture(scope="session")
def homog_field():
    return constant_field(period_L=1.0, r_u=1.0, r_v=1.0, gamma_u=1.0, gamma_v=1.0, mu=0.1)


@pytest.fixture(scope="session")
def hetero_field():
    return make_harmonic_field()


@pytest.fixture(scope="session")
def extinct_field():
    return constant_field(period_L=1.0, r_u=-0.5, r_v=-0.5, gamma_u=1.0, gamma_v=1.0,
                          mu=0.1)


@pytest.fixture(scope="session")
def grid256():
    return PeriodicGrid(256, 1.0)


@pytest.fixture(scope="session")
def grid64():
    return PeriodicGrid(64, 1.0)
