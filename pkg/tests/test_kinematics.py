"""TOF scattering algebra tests."""

import math

import numpy as np
import pytest

from wmscatter import constants as C
from wmscatter.errors import (
    KinematicallyForbidden,
    NonPositiveMass,
    NonPositiveSpeed,
    UnphysicalTOF,
)
from wmscatter.kinematics import (
    DetectorGeometry,
    KEPoint,
    NeutronBeam,
    conservation_residual,
    doppler_term,
    effective_mass_bound_check,
    elastic_ratio,
    energy_transfer,
    invert_tof,
    k_transfer,
    recoil_energy,
    tof,
)

GEOM = DetectorGeometry(10.0, 4.0, math.radians(60.0), 0.0)


def test_tof_basic_arithmetic():
    assert tof(GEOM, 2000.0, 1000.0) == pytest.approx(9000.0, rel=1e-12)


def test_tof_elastic_limit():
    g = DetectorGeometry(10.0, 4.0, 1.0, 0.0)
    assert tof(g, 1500.0, 1500.0) == pytest.approx(14.0 / 1500.0 * 1e6)


def test_tof_offset_linearity():
    g0 = DetectorGeometry(10.0, 4.0, 1.0, 0.0)
    g1 = DetectorGeometry(10.0, 4.0, 1.0, 100.0)
    assert tof(g1, 2000.0, 900.0) - tof(g0, 2000.0, 900.0) == pytest.approx(100.0)


def test_tof_rejects_nonpositive_speed():
    with pytest.raises(NonPositiveSpeed):
        tof(GEOM, 2000.0, 0.0)


def test_invert_tof_inverse():
    beam = NeutronBeam(C.neutron_energy_from_speed(2000.0))
    t = tof(GEOM, beam.v0, 1000.0)
    assert invert_tof(GEOM, beam, t) == pytest.approx(1000.0, rel=1e-12)


def test_invert_tof_singular_boundary():
    beam = NeutronBeam(25.0)
    t_edge = GEOM.t0 + GEOM.l0 / beam.v0 / C.US_S
    with pytest.raises(UnphysicalTOF):
        invert_tof(GEOM, beam, t_edge)


def test_tof_roundtrip_random():
    rng = np.random.default_rng(7)
    for _ in range(300):
        geom = DetectorGeometry(rng.uniform(5, 20), rng.uniform(1, 6),
                                rng.uniform(0.1, 3.0), rng.uniform(0, 50))
        v0 = rng.uniform(500, 8000)
        v1 = rng.uniform(200, v0)
        beam = NeutronBeam(C.neutron_energy_from_speed(v0))
        t = tof(geom, beam.v0, v1)
        assert invert_tof(geom, beam, t) == pytest.approx(v1, rel=1e-12)


def test_energy_transfer_value_and_signs():
    # C_E * (4 - 1) with C_E = 2.0721 meV A^2 from the pinned constants
    assert energy_transfer(2.0, 1.0) == pytest.approx(3.0 * C.NEUTRON_E_COEF)
    assert energy_transfer(2.0, 1.0) == pytest.approx(6.22, abs=0.01)
    assert energy_transfer(1.7, 1.7) == 0.0
    assert energy_transfer(1.0, 2.0) == -energy_transfer(2.0, 1.0)


def test_k_transfer_special_angles():
    assert k_transfer(1.3, 1.3, math.pi / 2) == pytest.approx(1.3 * math.sqrt(2.0))
    assert k_transfer(2.0, 1.0, 0.0) == pytest.approx(1.0)
    assert k_transfer(2.0, 1.0, math.pi) == pytest.approx(3.0)


def test_k_transfer_triangle_bounds():
    rng = np.random.default_rng(11)
    for _ in range(300):
        k0, k1 = rng.uniform(0.1, 10, size=2)
        theta = rng.uniform(0, math.pi)
        kk = k_transfer(k0, k1, theta)
        assert abs(k0 - k1) - 1e-12 <= kk <= k0 + k1 + 1e-12


def test_elastic_ratio_examples():
    assert elastic_ratio(5.0, 0.0) == pytest.approx(1.0)
    assert elastic_ratio(1.0, math.pi / 2) == pytest.approx(0.0, abs=1e-14)
    assert elastic_ratio(1.0, math.pi / 3) == pytest.approx(0.5, rel=1e-14)


def test_elastic_ratio_monotone_in_angle():
    thetas = np.linspace(0.0, math.pi, 200)
    vals = [elastic_ratio(3.5, t) for t in thetas]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_elastic_ratio_forbidden():
    with pytest.raises(KinematicallyForbidden):
        elastic_ratio(0.5, math.pi / 2)
    with pytest.raises(NonPositiveMass):
        elastic_ratio(-1.0, 0.3)


def test_recoil_energy_rotational_line():
    # K = 2.7 1/A on a free H atom: ~15.1 meV, within 5% of the measured 14.7
    e = recoil_energy(2.7, 1.0079)
    assert e == pytest.approx(15.117, abs=0.01)
    assert abs(e - 14.7) / 14.7 < 0.05


def test_recoil_energy_scaling():
    assert recoil_energy(0.0, 3.0) == 0.0
    assert recoil_energy(2.0, 4.0) == pytest.approx(recoil_energy(2.0, 2.0) / 2.0)
    with pytest.raises(NonPositiveMass):
        recoil_energy(1.0, 0.0)


def test_doppler_term():
    assert doppler_term(2.0, 0.0, 1.0) == 0.0
    assert doppler_term(2.0, 1.0, 1.0) == pytest.approx(4.0 * C.ATOM_E_COEF)
    assert doppler_term(2.0, 1.0, 1.0) == pytest.approx(8.36, abs=0.01)
    assert doppler_term(2.0, -1.5, 1.0) == -doppler_term(2.0, 1.5, 1.0)


def test_conservation_residual():
    e = recoil_energy(3.0, 2.0) + doppler_term(3.0, 0.7, 2.0)
    assert abs(conservation_residual(e, 3.0, 0.7, 2.0)) < 1e-12
    assert conservation_residual(recoil_energy(3.0, 2.0), 3.0, 0.0, 2.0) == 0.0
    assert conservation_residual(e + 0.25, 3.0, 0.7, 2.0) == pytest.approx(0.25)


def test_effective_mass_bound_check():
    assert effective_mass_bound_check(2.05, 2.01) == "conventional"
    assert effective_mass_bound_check(0.64, 2.01) == "anomalous"
    assert effective_mass_bound_check(0.94, 1.0079) == "anomalous"


def test_unit_constants_cross_check():
    # the 2.072 meV A^2 and 3956/lambda rules must agree to 0.1%
    assert abs(C.NEUTRON_E_COEF - 2.072) / 2.072 < 1e-3
    assert abs(C.VEL_WAVELENGTH_COEF - 3956.0) / 3956.0 < 1e-3
    beam = NeutronBeam(25.0)
    v_from_lambda = C.VEL_WAVELENGTH_COEF / beam.wavelength
    assert abs(beam.v0 - v_from_lambda) / beam.v0 < 1e-3


def test_kepoint_invariant():
    with pytest.raises(ValueError):
        KEPoint(-1.0, 5.0)
