import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brushhom.errors import GeometryError, PlacementError
from brushhom.geometry import (BUILTIN_TEETH, ModelTooth, cylinder, figure5, figure5_normalized, holed,
                               place_explicit, place_linear_gaps, place_periodic, place_single, t_shape,
                               validate_tooth)

from conftest import stacked_cylinder


def rect(lo, hi, height=1.0):
    v = [(lo, 0.0), (hi, 0.0), (hi, height), (lo, height)]
    return ModelTooth(np.array(v), (lo, hi), height, max(abs(lo), abs(hi)) + 0.1, height)


def test_unit_rectangle_ok():
    assert validate_tooth(rect(-0.5, 0.5)).ok


def test_wide_base_violates_normalization():
    v = validate_tooth(rect(-1.0, 1.0))
    assert not v.ok and v.violation == "|ω| ≠ 1"


def test_figure5_style_tooth_ok():
    assert validate_tooth(figure5_normalized()).ok


def test_figure5_has_width_two():
    assert validate_tooth(figure5()).violation == "|ω| ≠ 1"


@pytest.mark.parametrize("name", ["cylinder", "figure5_normalized", "t_shape", "holed"])
def test_shipped_normalized_teeth_validate(name):
    assert validate_tooth(BUILTIN_TEETH[name]()).ok


def test_stacked_cylinder_validates():
    assert validate_tooth(stacked_cylinder()).ok


def test_self_intersecting_polygon_is_geometry_error():
    bow = np.array([(-0.5, 0.0), (0.5, 0.0), (-0.5, 1.0), (0.5, 1.0)])
    with pytest.raises(GeometryError):
        validate_tooth(ModelTooth(bow, (-0.5, 0.5), 1.0, 1.0, 0.1))


def test_zero_not_in_omega():
    t = ModelTooth(np.array([(0.1, 0), (1.1, 0), (1.1, 1), (0.1, 1)]), (0.1, 1.1), 1.0, 1.2, 1.0)
    assert not validate_tooth(t).ok


def test_collar_violation():
    # notch cut into the collar region
    v = np.array([(-0.5, 0), (0.5, 0), (0.5, 1), (0.0, 0.1), (-0.5, 1)])
    assert not validate_tooth(ModelTooth(v, (-0.5, 0.5), 1.0, 0.6, 0.5)).ok


def test_polygon_outside_R1():
    assert not validate_tooth(ModelTooth(np.array([(-.5, 0), (.5, 0), (.5, 1), (-.5, 1)]),
                                         (-.5, .5), 1.0, 0.5, 1.0)).ok


def test_periodic_quarter():
    s = place_periodic((0, 1), 0.25, 0.5, cylinder())
    assert s.n_teeth == 4
    np.testing.assert_allclose(s.lengths, 1 / 8)
    np.testing.assert_allclose(s.centers, [0.125, 0.375, 0.625, 0.875])


def test_periodic_eighth():
    s = place_periodic((0, 1), 0.125, 0.5, cylinder())
    assert s.n_teeth == 8
    assert s.teeth_measure == pytest.approx(0.5)


def test_periodic_guard_intervals_touch():
    with pytest.raises(PlacementError):
        place_periodic((0, 1), 0.25, 1.0, cylinder(R1=1.0))


def test_linear_gaps_structure():
    for eps in [2.0 ** -4, 2.0 ** -7]:
        s = place_linear_gaps(eps, cylinder())
        iv = s.base_intervals()
        assert np.all(np.diff(s.centers) > 0)
        assert np.all(iv[:, 0] > 0) and np.all(iv[:, 1] < 1)
        gaps = iv[1:, 0] - iv[:-1, 1]
        assert np.all(gaps > 0) and np.all(np.diff(gaps) > 0)
        assert np.all(s.lengths == s.lengths[0])


def test_linear_gaps_too_coarse():
    with pytest.raises(PlacementError):
        place_linear_gaps(1.0, cylinder())


def test_single_and_explicit():
    s = place_single((0, 1), 0.1, cylinder())
    assert s.n_teeth == 1 and s.teeth_measure == pytest.approx(0.1)
    e = place_explicit((0, 1), [(0.3, 0.1), (0.7, 0.1)], 0.1, 1.0, cylinder())
    assert e.n_teeth == 2
    with pytest.raises(PlacementError):
        place_explicit((0, 1), [(0.05, 0.1)], 0.1, 1.0, cylinder())   # touches boundary of omega'
    with pytest.raises(PlacementError):
        place_explicit((0, 1), [(0.5, 0.3)], 0.1, 1.0, cylinder())    # l > C eps


@settings(max_examples=40, deadline=None)
@given(k=st.integers(2, 7), rho=st.floats(0.05, 0.8))
def test_periodic_invariants(k, rho):
    eps = 2.0 ** -k
    s = place_periodic((0, 1), eps, rho, cylinder())
    assert s.teeth_measure <= 1.0
    s2 = place_periodic((0, 1), eps / 2, rho, cylinder())
    assert s2.n_teeth == 2 * s.n_teeth
    assert abs(s2.teeth_measure - s.teeth_measure) <= rho * eps + 1e-12


@settings(max_examples=30, deadline=None)
@given(k=st.integers(3, 9))
def test_linear_gaps_measure_bound(k):
    s = place_linear_gaps(2.0 ** -k, cylinder())
    assert s.teeth_measure <= 1.0


def test_areas():
    assert cylinder().area == pytest.approx(1.0)
    assert holed().area == pytest.approx(2.0 - 0.16)
    assert figure5().area == pytest.approx(2 + 0.5 + 0.75 + 1)


def test_linear_gaps_rejects_wide_guard():
    # cells near x=0 are about 2l wide, a guard radius 1.6 l does not fit
    with pytest.raises(PlacementError):
        place_linear_gaps(2.0 ** -4, t_shape())
