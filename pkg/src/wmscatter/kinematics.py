"""Exact scalar algebra of time-of-flight two-body scattering.

Flight paths in meters, times in microseconds, energies in meV, wavenumbers
in 1/Angstrom, masses in a.m.u., angles in radians (degrees only at the CLI
boundary).  All functions are stateless and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import constants as C
from .errors import (
    KinematicallyForbidden,
    NonPositiveMass,
    NonPositiveSpeed,
    UnphysicalTOF,
)


@dataclass(frozen=True)
class NeutronBeam:
    """Monochromatic incident beam fixed by its energy E0 in meV."""

    e0: float

    def __post_init__(self):
        if self.e0 <= 0:
            raise ValueError("E0 must be positive")

    @property
    def k0(self):
        """Incident wavenumber [1/A]."""
        return C.neutron_wavenumber(self.e0)

    @property
    def v0(self):
        """Incident speed [m/s]."""
        return C.neutron_speed(self.e0)

    @property
    def wavelength(self):
        """de Broglie wavelength [A]."""
        return 2.0 * math.pi / self.k0


@dataclass(frozen=True)
class DetectorGeometry:
    """One detector: flight paths L0 (source-sample) and L1 (sample-detector)
    in meters, scattering angle theta in radians, electronic offset t0 in us."""

    l0: float
    l1: float
    theta: float
    t0: float = 0.0

    def __post_init__(self):
        if self.l0 <= 0 or self.l1 <= 0:
            raise ValueError("flight paths must be positive")
        if not 0 < self.theta < math.pi:
            raise ValueError("theta must lie in (0, pi)")


@dataclass(frozen=True)
class KEPoint:
    """One (momentum transfer, energy transfer) point, optionally with an
    energy uncertainty for weighted fits."""

    k: float
    e: float
    sigma_e: float | None = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("K must be nonnegative")


def tof(geom: DetectorGeometry, v0: float, v1: float) -> float:
    """Total time-of-flight L0/v0 + L1/v1 + t0 in microseconds."""
    if v0 <= 0 or v1 <= 0:
        raise NonPositiveSpeed("speeds must be positive")
    return (geom.l0 / v0 + geom.l1 / v1) / C.US_S + geom.t0


def invert_tof(geom: DetectorGeometry, beam: NeutronBeam, t: float) -> float:
    """Final speed v1 [m/s] from a measured TOF value [us]."""
    remain_s = (t - geom.t0) * C.US_S - geom.l0 / beam.v0
    if remain_s <= 0:
        raise UnphysicalTOF(
            f"t = {t} us leaves no time for the scattered flight path "
            f"(incident leg alone takes {geom.l0 / beam.v0 / C.US_S + geom.t0:.3f} us)")
    return geom.l1 / remain_s


def energy_transfer(k0: float, k1: float) -> float:
    """Neutron energy loss hbar*omega = C_E (k0^2 - k1^2) in meV."""
    return C.NEUTRON_E_COEF * (k0**2 - k1**2)


def k_transfer(k0: float, k1: float, theta: float) -> float:
    """Momentum-transfer magnitude K = sqrt(k0^2 + k1^2 - 2 k0 k1 cos theta)."""
    val = k0**2 + k1**2 - 2.0 * k0 * k1 * math.cos(theta)
    return math.sqrt(max(val, 0.0))


def elastic_ratio(mass_ratio: float, theta: float) -> float:
    """k1/k0 for elastic scattering from a free atom at rest, M/m = mass_ratio.

    Applies to the center-of-gravity of a measured peak, never bin-by-bin.
    """
    if mass_ratio <= 0:
        raise NonPositiveMass("mass ratio must be positive")
    disc = mass_ratio**2 - math.sin(theta) ** 2
    if disc < 0:
        raise KinematicallyForbidden(
            f"no real k1/k0 at theta={theta} for M/m={mass_ratio}")
    return (math.cos(theta) + math.sqrt(disc)) / (mass_ratio + 1.0)


def recoil_energy(k: float, mass_amu: float) -> float:
    """Free recoil energy (hbar K)^2 / 2M in meV."""
    if mass_amu <= 0:
        raise NonPositiveMass("mass must be positive")
    return C.ATOM_E_COEF * k**2 / mass_amu


def doppler_term(k: float, p_par: float, mass_amu: float) -> float:
    """Doppler energy hbar K P_par / M in meV (P_par in hbar/A)."""
    if mass_amu <= 0:
        raise NonPositiveMass("mass must be positive")
    return 2.0 * C.ATOM_E_COEF * k * p_par / mass_amu


def conservation_residual(e: float, k: float, p_par: float, mass_amu: float) -> float:
    """E - E_rec(K,M) - E_Doppler(K,P,M); zero on the impulse energy shell."""
    return e - recoil_energy(k, mass_amu) - doppler_term(k, p_par, mass_amu)


def effective_mass_bound_check(m_eff: float, m_free: float) -> str:
    """'conventional' iff M_eff >= M_free (binding can only add mass);
    'anomalous' otherwise."""
    if m_eff <= 0 or m_free <= 0:
        raise NonPositiveMass("masses must be positive")
    return "conventional" if m_eff >= m_free else "anomalous"
