import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulsefront import (
    CoefficientField,
    IntervalGrid,
    PeriodicGrid,
    parse_scenario,
    serialize_scenario,
)
from pulsefront.errors import BadPeriod, ParseError, PositivityViolation
from pulsefront.fields import CoefficientSpec, Harmonic

from .conftest import make_harmonic_field

SCENARIO = """\
period_L = 2.5

[r_u]
mean = 1.0
harmonic = (0.3, 1, 0.0)

[r_v]
mean = 0.8

[gamma_u]
mean = 1.0

[gamma_v]
mean = 1.0

[mu]
mean = 0.1

[grid]
n_cells = 128

[simulation]
t_max = 10.0

[sweep]
axis = mu_mean 0.01 1.0 5
"""


def test_parse_basic_sections():
    config = parse_scenario(SCENARIO)
    assert config.period_L == 2.5
    assert config.coefficients["r_u"].mean == 1.0
    assert config.coefficients["r_u"].harmonics[0].wavenumber == 1
    assert config.grid["n_cells"] == 128
    assert config.simulation["t_max"] == 10.0
    assert config.sweep == [("mu_mean", 0.01, 1.0, 5)]


def test_serialize_round_trip():
    config = parse_scenario(SCENARIO)
    text = serialize_scenario(config)
    assert parse_scenario(text) == config
    # canonical form is a fixed point
    assert serialize_scenario(parse_scenario(text)) == text


@pytest.mark.parametrize("line,fragment", [
    ("period_L = ", "must be a number"),
    ("junk line without equals", "key = value"),
    ("[nonsense]", "unknown section"),
    ("stray = 1", "unexpected top-level key"),
])
def test_parse_errors_carry_line_numbers(line, fragment):
    with pytest.raises(ParseError) as err:
        parse_scenario(line + "\n")
    assert fragment in str(err.value)
    assert "line 1" in str(err.value)


def test_parse_error_missing_mean():
    text = "period_L = 1.0\n[r_u]\nharmonic = (0.1, 1)\n"
    with pytest.raises(ParseError, match="missing its mean"):
        parse_scenario(text)


def test_bad_harmonic_rejected():
    text = "period_L = 1.0\n[r_u]\nmean = 1.0\nharmonic = 0.1 1\n"
    with pytest.raises(ParseError, match="harmonic"):
        parse_scenario(text)


def test_negative_period_rejected():
    with pytest.raises(BadPeriod):
        CoefficientField.from_specs(
            -1.0, r_u=CoefficientSpec(1.0), r_v=CoefficientSpec(1.0),
            gamma_u=CoefficientSpec(1.0), gamma_v=CoefficientSpec(1.0),
            mu=CoefficientSpec(0.1))


def test_nonpositive_gamma_rejected():
    with pytest.raises(PositivityViolation):
        make_harmonic_field(gamma_u=(0.2, 0.3, 1, 0.0))


def test_nonpositive_mu_rejected():
    with pytest.raises(PositivityViolation):
        make_harmonic_field(mu=(0.1, 0.2, 1, 0.0))


@settings(max_examples=50, deadline=None)
@given(mean=st.floats(0.5, 3.0), amp=st.floats(0.0, 0.4),
       k=st.integers(1, 5), phase=st.floats(0, 2 * np.pi))
def test_bounds_contain_samples(mean, amp, k, phase):
    field = make_harmonic_field(r_u=(mean, amp, k, phase))
    xs = np.linspace(0.0, 1.0, 613)
    vals = field.sample("r_u", xs)
    b = field.bounds
    assert vals.max() <= b.r_inf + 1e-9
    # analytic (outer) bounds are at least as wide as the sampled ones
    lo, hi = field.r_u.analytic_bounds()
    assert lo - 1e-12 <= vals.min() and vals.max() <= hi + 1e-12


def test_sample_periodicity():
    field = make_harmonic_field(period_L=2.0, r_u=(1.0, 0.3, 2, 0.4))
    xs = np.linspace(0.0, 2.0, 77)
    np.testing.assert_allclose(field.sample("r_u", xs),
                               field.sample("r_u", xs + 2.0), atol=1e-12)


def test_periodic_grid_spacing():
    grid = PeriodicGrid(64, 2.0)
    assert grid.h == pytest.approx(2.0 / 64)
    assert len(grid.x) == 64
    with pytest.raises(ValueError):
        PeriodicGrid(4, 1.0)


def test_interval_grid_symmetric():
    grid = IntervalGrid.symmetric(5.0, 99)
    x = grid.x_interior
    assert len(x) == 99
    np.testing.assert_allclose(x[0] - grid.a, grid.b - x[-1], atol=1e-12)
    np.testing.assert_allclose(np.diff(x), grid.h, atol=1e-12)
