import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvspin.dipolar import (
    SpinDensityModel,
    calibrated_constants,
    mirror_about_xz,
    read_density,
    ring_density,
    symmetry_residual,
    t_tensor,
)
from nvspin.errors import ParseError, SingularDensity, UnnormalizedDensity
from nvspin.hfi import HfiMatrix, to_site_frame, z_rotation

# 1H point-dipole coupling of a free electron (MHz A^3) and the 13C/1H gyromagnetic ratio
H1_DIPOLAR_MHZ_A3 = 79.0
C13_OVER_H1 = 10.7084 / 42.5774


def test_unit_point_on_axis():
    t = t_tensor(SpinDensityModel([[0, 0, 1]], [1.0]), [0, 0, 0])
    np.testing.assert_allclose(t, np.diag([-1.0, -1.0, 2.0]), atol=1e-15)


def test_calibrated_prefactor_matches_textbook_coupling():
    c = calibrated_constants(total_spin=1.0)
    expected = H1_DIPOLAR_MHZ_A3 * C13_OVER_H1 * 1e3
    assert 2 * c.prefactor == pytest.approx(expected, rel=5e-3)
    assert calibrated_constants(0.5).prefactor == pytest.approx(2 * c.prefactor)


def test_singular_guard():
    d = SpinDensityModel([[5, 0, 0], [0, 0, 0.01]], [1, 1])
    with pytest.raises(SingularDensity) as exc:
        t_tensor(d, [0, 0, 0])
    assert exc.value.index == 1


def test_normalization_warning():
    with pytest.warns(UnnormalizedDensity):
        assert not SpinDensityModel([[1, 0, 0]], [0.5]).check_normalization()
    assert SpinDensityModel([[1, 0, 0]], [2.0]).check_normalization()


def test_read_density():
    d = read_density("# x y z w\n1 0 0 0.5\n0 1 0 1.5  # note\n")
    assert len(d) == 2 and d.total_weight == 2.0
    with pytest.raises(ParseError) as exc:
        read_density("1 0 0\n", source="d.tsv")
    assert exc.value.line == 1
    with pytest.raises(ParseError):
        read_density("")


def test_ring_is_axially_symmetric():
    axis = np.array([1.0, 1.0, 0.5])
    ring = ring_density(center=2 * axis, axis=axis, radius=0.7, n=12)
    assert symmetry_residual(ring, [0, 0, 0], axis) < 1e-14
    assert symmetry_residual(ring, [0, 0, 0], [0, 0, 1]) > 1e-3


def test_mirror_keeps_weight():
    d = SpinDensityModel([[1, 2, 3]], [0.8])
    m = mirror_about_xz(d, 0.0)
    assert m.total_weight == pytest.approx(0.8)
    np.testing.assert_allclose(m.positions[1], [1, -2, 3])


coord = st.floats(-3, 3, allow_nan=False)


@st.composite
def densities(draw):
    n = draw(st.integers(1, 12))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    pos = rng.uniform(-3, 3, (n, 3))
    pos[np.linalg.norm(pos, axis=1) < 0.3] += 1.0
    return SpinDensityModel(pos, rng.uniform(-0.5, 1.0, n))


@settings(max_examples=50)
@given(densities())
def test_traceless_symmetric(d):
    t = t_tensor(d, [0, 0, 0])
    scale = np.abs(t).max() + 1e-300
    assert abs(np.trace(t)) <= 1e-12 * scale * 10
    np.testing.assert_array_equal(t, t.T)


@settings(max_examples=50)
@given(densities(), st.floats(0.3, 3.0))
def test_scaling(d, s):
    t1 = t_tensor(d, [0, 0, 0])
    ts = t_tensor(SpinDensityModel(d.positions * s, d.weights), [0, 0, 0])
    np.testing.assert_allclose(ts * s**3, t1, atol=1e-10 * np.abs(t1).max())


@settings(max_examples=50)
@given(densities(), st.floats(-180, 180), st.floats(-180, 180))
def test_rotational_covariance(d, a1, a2):
    r = z_rotation(a1) @ np.array(
        [[1, 0, 0], [0, math.cos(math.radians(a2)), -math.sin(math.radians(a2))], [0, math.sin(math.radians(a2)), math.cos(math.radians(a2))]]
    )
    nuc = np.array([0.1, -0.2, 0.05])
    t = t_tensor(d, nuc)
    tr = t_tensor(d.transformed(r), r @ nuc)
    np.testing.assert_allclose(tr, r @ t @ r.T, atol=1e-10 * np.abs(t).max())


@settings(max_examples=50)
@given(densities(), st.floats(-180, 180), st.floats(0.5, 3), st.floats(-2, 2))
def test_mirror_symmetrized_zero_y_coupling(d, az, rho, z):
    nuc = [rho * math.cos(math.radians(az)), rho * math.sin(math.radians(az)), z]
    if np.min(np.linalg.norm(d.positions - nuc, axis=1)) < 0.1:
        return
    t = t_tensor(mirror_about_xz(d, az), nuc)
    site = to_site_frame(HfiMatrix.symmetrized(t), az).elements
    norm = np.linalg.norm(t)
    assert abs(site[2, 1]) / norm < 1e-12
    assert abs(site[0, 1]) / norm < 1e-12


def test_mirror_of_symmetric_density_duplicates_points():
    d = SpinDensityModel([[1, 0, 2], [-1, 0, 0.5]], [0.4, 0.6])
    m = mirror_about_xz(d, 0.0)
    np.testing.assert_allclose(m.positions[:2], m.positions[2:])
    np.testing.assert_allclose(m.weights, [0.2, 0.3, 0.2, 0.3])
    np.testing.assert_allclose(t_tensor(m, [0, 0, 5]), t_tensor(d, [0, 0, 5]), atol=1e-15)


def test_residual_grows_with_axis_tilt():
    axis = np.array([1.0, 0.0, 0.0])
    ring = ring_density(center=[2.5, 0, 0], axis=axis, radius=0.8, n=16)
    res = []
    for deg in range(0, 11):
        a = math.radians(deg)
        res.append(symmetry_residual(ring, [0, 0, 0], [math.cos(a), 0.0, math.sin(a)]))
    assert res[0] < 1e-10
    assert np.all(np.diff(res) > 0)


def test_residual_of_random_density_positive():
    rng = np.random.default_rng(3)
    d = SpinDensityModel(rng.uniform(-3, 3, (10, 3)) + 4, rng.uniform(0, 1, 10))
    assert symmetry_residual(d, [0, 0, 0], [1, 0, 0]) > 1e-3


def test_residual_zero_tensor():
    # a cubic arrangement gives an identically zero dipolar field at its centre
    pts = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    d = SpinDensityModel(pts, np.ones(6))
    assert np.abs(t_tensor(d, [0, 0, 0])).max() < 1e-15
    assert symmetry_residual(SpinDensityModel(pts, np.ones(6)), [0, 0, 0], [1, 1, 0]) < 1e-10
