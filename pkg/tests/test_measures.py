"""Measure constructors, Moran dimension, Ahlfors regularity estimates."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltaspec import (
    DiscreteMeasure,
    Grid,
    Similitude,
    ValidationError,
    boundary_measure,
    estimate_ahlfors_constants,
    ifs_measure,
    lebesgue_measure,
    segment_measure,
    solve_moran_dimension,
    union_measure,
)

LOG2_OVER_LOG3 = math.log(2.0) / math.log(3.0)


def _cantor_maps(rho=1.0 / 3.0):
    eye = np.eye(1)
    return [
        Similitude(rho, eye, np.array([0.0])),
        Similitude(rho, eye, np.array([1.0 - rho])),
    ]


def _cantor(depth):
    return ifs_measure(_cantor_maps(), depth)


def test_moran_two_thirds():
    d = solve_moran_dimension([1.0 / 3.0, 1.0 / 3.0])
    assert abs(d - LOG2_OVER_LOG3) < 1e-12


def test_moran_golden_ratio_oracle():
    # 0.5^d + 0.25^d = 1 has the closed-form solution d = log2(phi)
    d = solve_moran_dimension([0.5, 0.25])
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    assert abs(d - math.log(phi) / math.log(2.0)) < 1e-12


def test_moran_single_ratio_is_zero():
    assert solve_moran_dimension([0.5]) == 0.0


@pytest.mark.parametrize("bad", [[1.0, 0.5], [0.0, 0.5], [-0.2, 0.5], []])
def test_moran_rejects_inadmissible_ratios(bad):
    with pytest.raises(ValidationError):
        solve_moran_dimension(bad)


@given(
    rho=st.floats(min_value=0.05, max_value=0.49),
    m=st.integers(min_value=2, max_value=6),
)
@settings(max_examples=40, deadline=None)
def test_moran_equal_ratios_closed_form(rho, m):
    d = solve_moran_dimension([rho] * m)
    assert abs(d - math.log(m) / math.log(1.0 / rho)) < 1e-10
    assert abs(sum(rho**d for _ in range(m)) - 1.0) < 1e-10


def test_cantor_measure_basics():
    m = _cantor(8)
    assert m.count == 256
    assert abs(m.mass - 1.0) < 1e-12
    assert abs(m.nominal_dim - LOG2_OVER_LOG3) < 1e-12
    hull = m.hull()
    assert hull[0, 0] >= 0.0
    assert hull[0, 1] <= 1.0


def test_cantor_branch_masses():
    # the word structure puts exactly half the mass in each third
    m = _cantor(7)
    left = m.atoms[:, 0] < 1.0 / 3.0
    assert abs(m.weights[left].sum() - 0.5) < 1e-13
    far_left = m.atoms[:, 0] < 1.0 / 9.0
    assert abs(m.weights[far_left].sum() - 0.25) < 1e-13


def test_ifs_atom_cap():
    with pytest.raises(ValidationError):
        ifs_measure(_cantor_maps(), depth=13, atom_cap=5000)


def test_ifs_rotation_2d():
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    maps = [
        Similitude(0.5, np.eye(2), np.array([0.0, 0.0])),
        Similitude(0.5, rot, np.array([0.5, 0.0])),
    ]
    m = ifs_measure(maps, depth=5)
    assert m.count == 32
    assert abs(m.mass - 1.0) < 1e-12
    assert m.ambient_dim == 2


def test_segment_mass_is_length():
    seg = segment_measure(np.array([[0.1, 0.2], [0.7, 1.0]]), 37)
    length = math.hypot(0.6, 0.8)
    assert abs(seg.mass - length) < 1e-14
    assert seg.count == 37
    assert seg.nominal_dim == 1.0


def test_segment_atoms_inside_and_even():
    seg = segment_measure(np.array([[0.0], [1.0]]), 10)
    gaps = np.diff(seg.atoms[:, 0])
    assert np.allclose(gaps, 0.1, atol=1e-15)
    assert seg.atoms[0, 0] == pytest.approx(0.05)
    assert seg.atoms[-1, 0] == pytest.approx(0.95)


def test_segment_rejects_degenerate():
    with pytest.raises(ValidationError):
        segment_measure(np.array([[0.3, 0.3], [0.3, 0.3]]), 8)
    with pytest.raises(ValidationError):
        segment_measure(np.array([[0.0], [1.0]]), 1)


def test_boundary_measure_2d_perimeter():
    g = Grid(np.array([[0.0, 2.0], [0.0, 1.0]]), (16, 8))
    b = boundary_measure(g)
    assert abs(b.mass - 6.0) < 1e-12
    assert b.nominal_dim == 1.0


def test_boundary_measure_1d_endpoints():
    g = Grid(np.array([[0.0, 1.0]]), (32,))
    b = boundary_measure(g)
    assert b.count == 2
    assert abs(b.mass - 2.0) < 1e-15
    assert b.nominal_dim == 0.0


def test_lebesgue_measure_volume():
    g = Grid(np.array([[0.0, 1.5], [0.0, 2.0]]), (6, 8))
    m = lebesgue_measure(g)
    assert m.count == g.size
    assert abs(m.mass - 3.0) < 1e-12
    assert m.nominal_dim == 2.0


def test_union_measure_adds():
    a = segment_measure(np.array([[0.0, 0.0], [1.0, 0.0]]), 12)
    b = segment_measure(np.array([[0.0, 1.0], [1.0, 1.0]]), 20)
    u = union_measure(a, b)
    assert u.count == 32
    assert abs(u.mass - (a.mass + b.mass)) < 1e-14


def test_union_rejects_dimension_mismatch():
    a = segment_measure(np.array([[0.0], [1.0]]), 8)
    b = segment_measure(np.array([[0.0, 0.0], [1.0, 1.0]]), 8)
    with pytest.raises(ValidationError):
        union_measure(a, b)


def test_scaled_weights_only():
    m = _cantor(4)
    m2 = m.scaled(3.0)
    assert abs(m2.mass - 3.0 * m.mass) < 1e-12
    assert np.array_equal(m2.atoms, m.atoms)
    with pytest.raises(ValidationError):
        m.scaled(0.0)


def test_ahlfors_segment_brackets():
    seg = segment_measure(np.array([[0.0, 0.0], [1.0, 0.0]]), 200)
    rep = estimate_ahlfors_constants(seg, 1.0)
    # mu(B(x,r)) / r for a unit-density line is ~1 at the ends, ~2 inside
    assert 0.5 <= rep.lower_const <= 1.5
    assert 1.5 <= rep.upper_const <= 2.5
    assert rep.lower_const <= rep.upper_const


def test_ahlfors_cantor_bounded_ratio():
    m = _cantor(8)
    rep = estimate_ahlfors_constants(m, LOG2_OVER_LOG3)
    assert rep.lower_const > 0.05
    assert rep.upper_const < 20.0
    assert rep.upper_const / rep.lower_const < 40.0


def test_ahlfors_rejects_bad_radii():
    seg = segment_measure(np.array([[0.0], [1.0]]), 50)
    with pytest.raises(ValidationError):
        estimate_ahlfors_constants(seg, 1.0, radii=[1e-9])
    with pytest.raises(ValidationError):
        estimate_ahlfors_constants(seg, 1.0, radii=[5.0])


def test_measure_validation():
    with pytest.raises(ValidationError):
        DiscreteMeasure(np.zeros((3, 1)), np.array([1.0, -0.5, 0.2]), 1.0)
    with pytest.raises(ValidationError):
        DiscreteMeasure(np.zeros((3, 1)), np.array([1.0, 1.0]), 1.0)
