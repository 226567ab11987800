import numpy as np
import pytest

from tlsfluct.errors import InvalidInputError
from tlsfluct.fieldmap import (
    FieldMap,
    coupling_from_dipole,
    effective_permittivity,
    interdigital_field_map,
    mode_volume,
    mode_volume_from_map,
    read_field_csv,
    write_field_csv,
    zero_point_scale,
)
from tlsfluct.physics import EPS0

E_ANG = 1.602176634e-29


def test_effective_permittivity():
    assert effective_permittivity(0.916, 11.9) == pytest.approx(10.98, abs=0.005)
    assert effective_permittivity(0.0, 11.9) == 1.0
    assert effective_permittivity(1.0, 11.9) == 11.9
    with pytest.raises(InvalidInputError):
        effective_permittivity(1.2, 11.9)


def test_zero_point_scale():
    e0 = zero_point_scale(6.0814e9, 10.981 * EPS0, 9.692e-17)
    assert e0 == pytest.approx(14.6, abs=0.05)
    assert zero_point_scale(6.0814e9, 10.981 * EPS0, 2 * 9.692e-17) == pytest.approx(e0 / np.sqrt(2))
    assert zero_point_scale(6.0814e9 / 2, 10.981 * EPS0, 9.692e-17) == pytest.approx(e0 / np.sqrt(2))
    with pytest.raises(InvalidInputError):
        zero_point_scale(0.0, 1.0, 1.0)


def test_coupling_from_dipole():
    assert coupling_from_dipole([E_ANG, 0, 0], [0, 14.6, 0]) == 0.0
    assert coupling_from_dipole([0, 0, E_ANG], [0, 0, 14.6]) == pytest.approx(353e3, rel=2e-3)
    assert coupling_from_dipole(E_ANG, -14.6) == coupling_from_dipole(E_ANG, 14.6)


def test_mode_volume_uniform_and_peaked():
    e = np.ones((3, 3))
    w = np.full((3, 3), 2.0)
    sub = np.zeros((3, 3), bool)
    assert mode_volume(e, w, sub, 11.9 * EPS0) == pytest.approx(18.0)
    # a single peak cell concentrates the volume
    e2 = np.zeros((3, 3))
    e2[1, 1] = 5.0
    assert mode_volume(e2, w, sub, 11.9 * EPS0) == pytest.approx(2.0)
    # substrate cells weigh by the permittivity ratio
    sub2 = np.zeros((3, 3), bool)
    sub2[0] = True
    assert mode_volume(e, w, sub2, 2 * EPS0) == pytest.approx((3 * 2 * 2 + 6 * 2 * 1) / 2)
    with pytest.raises(InvalidInputError):
        mode_volume(np.zeros((2, 2)), np.ones((2, 2)), np.zeros((2, 2), bool), EPS0)


def test_interdigital_map_shape_and_scaling():
    fm = interdigital_field_map(nx=801)
    assert fm.e_mag.max() == pytest.approx(1.0)
    assert np.all(fm.e_mag >= 0)
    (x0, x1), (z0, z1) = fm.bounds
    assert x1 - x0 == pytest.approx(10e-6)
    assert z0 == pytest.approx(0.5e-9) and z1 == pytest.approx(3e-9)
    # strongest near the finger edges, weaker at the gap centre, decays with height
    i_edge = np.argmin(np.abs(fm.x - 2.5e-6))
    i_mid = np.argmin(np.abs(fm.x - 5e-6))
    assert fm.e_mag[i_edge, 0] > 10 * fm.e_mag[i_mid, 0]
    assert np.all(np.diff(fm.e_mag[i_edge]) < 0)
    assert mode_volume_from_map(fm, 11.9 * EPS0, depth=1e-6) > 0


def test_sample_normalized_matches_grid():
    fm = interdigital_field_map(nx=201)
    got = fm.sample_normalized(fm.x[[3, 50]], fm.z[[1, 4]])
    assert got == pytest.approx([fm.normalized[3, 1], fm.normalized[50, 4]])


def test_field_csv_roundtrip(tmp_path):
    fm = interdigital_field_map(nx=11)
    p = tmp_path / "field.csv"
    write_field_csv(fm, p)
    back = read_field_csv(p)
    assert np.array_equal(back.x, fm.x) and np.array_equal(back.z, fm.z)
    assert np.array_equal(back.e_mag, fm.e_mag)


def test_field_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x_m,height,e_mag_v_per_m\n0,0,1\n")
    with pytest.raises(InvalidInputError, match="z_m"):
        read_field_csv(p)
    with pytest.raises(InvalidInputError):
        FieldMap([0.0, 1.0], [0.0], [[1.0], [-1.0]])
