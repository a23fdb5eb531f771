import io

import numpy as np
from scipy.integrate import trapezoid
import pytest
from hypothesis import given, settings, strategies as st

from brushhom.density import covered_length, theta_empirical, theta_exact, write_density_csv
from brushhom.errors import ConfigError
from brushhom.geometry import cylinder, place_explicit, place_linear_gaps, place_periodic, place_single

X = np.linspace(0, 1, 129)


def test_exact_periodic():
    d = theta_exact(place_periodic((0, 1), 0.25, 0.5, cylinder()), X)
    assert np.all(d.values == 0.5) and not d.theta0_mask.any()


def test_exact_linear_gaps_endpoints():
    d = theta_exact({"kind": "linear_gaps"}, [0.0, 0.5, 1.0])
    assert d.values.tolist() == [0.5, 0.25, 0.0]
    assert d.theta0_mask.tolist() == [False, False, True]


def test_exact_full_fill():
    assert np.all(theta_exact({"kind": "periodic", "rho": 1.0}, X).values == 1.0)


def test_exact_single_is_zero():
    assert theta_exact({"kind": "single"}, X).theta0_mask.all()


def test_exact_unknown_family():
    with pytest.raises(ConfigError):
        theta_exact({"kind": "explicit"}, X)


def test_window_must_exceed_cell():
    s = place_periodic((0, 1), 2.0 ** -4, 0.5, cylinder())
    with pytest.raises(ConfigError):
        theta_empirical(s, 2.0 ** -4, X)


@pytest.mark.parametrize("k", [3, 4, 5, 6])
def test_empirical_periodic(k):
    eps = 2.0 ** -k
    s = place_periodic((0, 1), eps, 0.5, cylinder())
    d = theta_empirical(s, 4 * eps, X)
    assert np.max(np.abs(d.values - 0.5)) <= eps / (4 * eps) + 1e-14


def test_empirical_periodic_refines():
    devs = []
    for k in [3, 4, 5]:
        eps = 2.0 ** -k
        s = place_periodic((0, 1), eps, 0.5, cylinder())
        devs.append(np.max(np.abs(theta_empirical(s, 0.25, X).values - 0.5)))
        assert devs[-1] <= eps / 0.25 + 1e-14


def test_empirical_single_vanishes():
    m = []
    for k in [5, 6, 7, 8]:
        s = place_single((0, 1), 2.0 ** -k, cylinder())
        m.append(theta_empirical(s, 1 / 8, X).values.max())
    assert all(b < a for a, b in zip(m, m[1:])) and m[-1] <= 2.0 ** -8 / (2 / 8) + 1e-15


@pytest.mark.parametrize("k,hw,tol", [(4, 1 / 8, 0.1), (7, 2.0 ** -4, 0.03)])
def test_empirical_linear_gaps_midpoint(k, hw, tol):
    s = place_linear_gaps(2.0 ** -k, cylinder())
    assert abs(theta_empirical(s, hw, [0.5]).values[0] - 0.25) <= tol


def test_empirical_linear_gaps_sup():
    s = place_linear_gaps(2.0 ** -7, cylinder())
    hw = 2.0 ** -4
    x = X[(X >= hw) & (X <= 1 - hw)]
    assert np.max(np.abs(theta_empirical(s, hw, x).values - 0.5 * (1 - x))) <= 0.05


@settings(max_examples=30, deadline=None)
@given(k=st.integers(4, 7), rho=st.floats(0.1, 0.8))  # guard radius 0.6 rho eps
def test_mass_identity(k, rho):
    eps = 2.0 ** -k
    s = place_periodic((0, 1), eps, rho, cylinder())
    hw = 3 * eps
    x = np.linspace(0, 1, 2049)
    v = theta_empirical(s, hw, x).values
    integral = trapezoid(v, x)
    assert abs(integral - s.teeth_measure) <= 2 * hw


def test_covered_length_oracle():
    iv = np.array([[0.1, 0.2], [0.3, 0.35], [0.5, 0.9]])
    assert covered_length(iv, 0.0, 1.0) == pytest.approx(0.55)
    assert covered_length(iv, 0.15, 0.6) == pytest.approx(0.05 + 0.05 + 0.1)
    assert covered_length(iv, 0.2, 0.3) == 0.0


def test_explicit_family_uses_empirical():
    s = place_explicit((0, 1), [(0.25, 0.1), (0.75, 0.1)], 0.1, 1.0, cylinder())
    d = theta_empirical(s, 0.25, [0.25, 0.5, 0.75])
    np.testing.assert_allclose(d.values, [0.2, 0.2, 0.2])


def test_csv():
    buf = io.StringIO()
    write_density_csv(buf, theta_exact({"kind": "linear_gaps"}, [0.0, 1.0]))
    assert buf.getvalue() == "x,theta\n0,0.5\n1,0\n"
