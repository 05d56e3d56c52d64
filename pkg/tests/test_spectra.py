"""Forward instrument model tests: density, S_IA, trajectories, simulation,
deficit injection, counting noise, file round trips."""

import json
import math

import numpy as np
import pytest

import wmscatter.analysis as analysis
from wmscatter import constants as C
from wmscatter.errors import NonPositiveK, UnphysicalTOF
from wmscatter.kinematics import DetectorGeometry, NeutronBeam, k_transfer
from wmscatter.qstate import MixedState, gaussian_state, grid_for_gaussians, shift
from wmscatter.spectra import (
    DeficitInjection,
    InstrumentConfig,
    SampleModel,
    Spectrum,
    TofBinning,
    arcs_like_instrument,
    detector_trajectory,
    instrument_from_dict,
    instrument_to_dict,
    momentum_density,
    peak_tof,
    poisson_sample,
    recoil_peak_k1,
    recoil_tof_window,
    s_ia,
    sample_from_dict,
    simulate_spectrum,
    write_spectrum_csv,
)

BEAM = NeutronBeam(90.0)


def make_sample(sigma_p, mass, e_rot=0.0, deficit=None):
    grid = grid_for_gaussians([0.0], [sigma_p])
    return SampleModel(mass, gaussian_state(grid, 0.0, sigma_p), e_rot, deficit)


def one_detector_cfg(theta_deg, sample, sigma_p, n_bins=512):
    geom = DetectorGeometry(11.6, 4.0, math.radians(theta_deg))
    bins = recoil_tof_window(BEAM, (geom,), sample, sigma_p, n_bins=n_bins)
    return InstrumentConfig(BEAM, (geom,), bins)


def centroid_points(sample, sigma_p, theta_degs, n_bins=512):
    pts = []
    for a in theta_degs:
        cfg = one_detector_cfg(a, sample, sigma_p, n_bins)
        spec = simulate_spectrum(cfg, sample, 0)
        red = analysis.reduce_spectrum(spec, cfg, 0)
        pts.append(analysis.centroid_ke(red)[0])
    return pts


# --- momentum density -----------------------------------------------------------

def test_density_gaussian_std():
    grid = grid_for_gaussians([0.0], [0.7])
    state = gaussian_state(grid, 0.0, 0.7)
    dens = momentum_density(state)
    dp = grid.dp
    total = np.trapezoid(dens.n, dx=dp)
    assert total == pytest.approx(1.0, abs=1e-10)
    var = np.trapezoid(dens.p**2 * dens.n, dx=dp)
    assert math.sqrt(var) == pytest.approx(0.7, rel=1e-8)


def test_density_commutes_with_shift():
    grid = grid_for_gaussians([0.0, 2.0], [0.6, 0.6])
    state = gaussian_state(grid, 0.0, 0.6)
    d1 = momentum_density(shift(state.tabulated(), 1.5))
    # shifted density evaluated at the grid nodes = density of the shifted center
    expect = momentum_density(gaussian_state(grid, 1.5, 0.6)).n
    assert np.allclose(d1.n, expect, atol=1e-9)


def test_density_mixture_weighted_sum():
    grid = grid_for_gaussians([0.0], [0.5, 1.0])
    a = gaussian_state(grid, 0.0, 0.5)
    b = gaussian_state(grid, 0.0, 1.0)
    mix = MixedState(((0.25, a), (0.75, b)))
    dm = momentum_density(mix)
    expect = 0.25 * momentum_density(a).n + 0.75 * momentum_density(b).n
    assert np.allclose(dm.n, expect)


# --- impulse-approximation structure factor --------------------------------------

def test_s_ia_sum_rule_and_center():
    grid = grid_for_gaussians([0.0], [0.8], points_per_sigma=32)
    dens = momentum_density(gaussian_state(grid, 0.0, 0.8))
    for k in (1.5, 3.0, 6.0):
        for mass in (1.0079, 2.01, 4.0026):
            e_rec = C.ATOM_E_COEF * k**2 / mass
            width = 2.0 * C.ATOM_E_COEF * k * 0.8 / mass
            e = np.linspace(e_rec - 8 * width, e_rec + 8 * width, 4096)
            s = s_ia(k, e, dens, mass)
            assert np.trapezoid(s, e) == pytest.approx(1.0, abs=1e-6)
            spacing = e[1] - e[0]
            assert np.trapezoid(e * s, e) == pytest.approx(e_rec, abs=spacing)
            # argmax resolution is limited by the density knots mapped into E
            knot = grid.dp * 2.0 * C.ATOM_E_COEF * k / mass
            assert e[np.argmax(s)] == pytest.approx(e_rec, abs=spacing + knot)


def test_s_ia_width_matches_doppler():
    sigma_p = 0.6
    k, mass = 4.0, 2.01
    grid = grid_for_gaussians([0.0], [sigma_p], points_per_sigma=32)
    dens = momentum_density(gaussian_state(grid, 0.0, sigma_p))
    e_rec = C.ATOM_E_COEF * k**2 / mass
    width_pred = 2.0 * C.ATOM_E_COEF * k * sigma_p / mass
    e = np.linspace(e_rec - 10 * width_pred, e_rec + 10 * width_pred, 8192)
    s = s_ia(k, e, dens, mass)
    mean = np.trapezoid(e * s, e)
    std = math.sqrt(np.trapezoid((e - mean) ** 2 * s, e))
    assert std == pytest.approx(width_pred, rel=1e-4)
    # independent histogram oracle: draw P, put each event on its energy shell
    rng = np.random.default_rng(2718)
    p = rng.normal(0.0, sigma_p, size=400_000)
    e_events = e_rec + 2.0 * C.ATOM_E_COEF * k * p / mass
    assert np.std(e_events) == pytest.approx(width_pred, rel=0.01)
    assert np.mean(e_events) == pytest.approx(e_rec, abs=4 * width_pred / math.sqrt(len(p)))


def test_s_ia_rejects_bad_k():
    grid = grid_for_gaussians([0.0], [0.5])
    dens = momentum_density(gaussian_state(grid, 0.0, 0.5))
    with pytest.raises(NonPositiveK):
        s_ia(0.0, np.linspace(0, 10, 64), dens, 1.0)


# --- detector trajectories ---------------------------------------------------------

def test_trajectory_elastic_point():
    geom = DetectorGeometry(11.6, 4.0, math.radians(45.0), t0=12.0)
    t_el = geom.t0 + (geom.l0 + geom.l1) / BEAM.v0 / C.US_S
    width = 2.0
    bins = TofBinning(t_el - 8.5 * width, t_el + 7.5 * width, 16)
    cfg = InstrumentConfig(BEAM, (geom,), bins)
    points, valid = detector_trajectory(cfg, 0)
    assert valid.all()
    centers = cfg.tof_bins.centers
    j = int(np.argmin(np.abs(centers - t_el)))
    assert centers[j] == pytest.approx(t_el, abs=1e-9)
    assert points[j].e == pytest.approx(0.0, abs=1e-9)


def test_trajectory_monotone_energy_and_angle_dependence():
    sample = make_sample(0.3, 1.0079)
    geom1 = DetectorGeometry(11.6, 4.0, math.radians(40.0))
    geom2 = DetectorGeometry(11.6, 4.0, math.radians(60.0))
    bins = TofBinning(3000.0, 6000.0, 64)
    cfg = InstrumentConfig(BEAM, (geom1, geom2), bins)
    pts1, v1 = detector_trajectory(cfg, 0)
    pts2, v2 = detector_trajectory(cfg, 1)
    assert v1.all() and v2.all()
    es = [p.e for p in pts1]
    assert all(b > a for a, b in zip(es, es[1:]))
    # same TOF bin -> same E, different K at different angles
    assert pts1[10].e == pytest.approx(pts2[10].e)
    assert pts1[10].k != pytest.approx(pts2[10].k)


def test_trajectory_satisfies_k_relation():
    cfg = arcs_like_instrument(theta_deg=[50], n_bins=64)
    points, valid = detector_trajectory(cfg, 0)
    for pt, ok in zip(points, valid):
        if not ok:
            continue
        k1 = math.sqrt((BEAM.k0**2 * C.NEUTRON_E_COEF - pt.e) / C.NEUTRON_E_COEF)
        assert pt.k == pytest.approx(
            k_transfer(BEAM.k0, k1, math.radians(50.0)), rel=1e-12)


def test_trajectory_flags_unphysical_bins():
    geom = DetectorGeometry(11.6, 4.0, math.radians(45.0))
    t_in = geom.l0 / BEAM.v0 / C.US_S
    bins = TofBinning(t_in - 100.0, t_in + 100.0, 16)
    cfg = InstrumentConfig(BEAM, (geom,), bins)
    points, valid = detector_trajectory(cfg, 0)
    assert not valid.all() and valid.any()
    assert len(points) == 16
    for pt, ok in zip(points, valid):
        if not ok:
            assert math.isnan(pt.e)
    with pytest.raises(UnphysicalTOF):
        simulate_spectrum(cfg, make_sample(0.3, 1.0079), 0)


# --- recoil peak location helpers ----------------------------------------------

def test_recoil_peak_matches_elastic_ratio():
    from wmscatter.kinematics import elastic_ratio

    mass = 4.0026
    rho = mass * C.AMU_KG / C.NEUTRON_MASS_KG
    for theta in (0.4, 0.9, 1.6, 2.4):
        k1 = recoil_peak_k1(BEAM, theta, mass)
        assert k1 == pytest.approx(BEAM.k0 * elastic_ratio(rho, theta), rel=1e-12)


def test_peak_tof_lands_on_shell():
    sample = make_sample(0.3, 2.01, e_rot=14.7)
    geom = DetectorGeometry(11.6, 4.0, math.radians(25.0))
    tp = peak_tof(BEAM, geom, sample)
    bins = TofBinning(tp - 200, tp + 200, 64)
    cfg = InstrumentConfig(BEAM, (geom,), bins)
    red = analysis.reduce_spectrum(simulate_spectrum(cfg, sample, 0), cfg, 0)
    e_at_tp = float(np.interp(tp, red.t, red.e))
    k_at_tp = float(np.interp(tp, red.t, red.k))
    assert e_at_tp - 14.7 == pytest.approx(
        C.ATOM_E_COEF * k_at_tp**2 / 2.01, rel=1e-3)


# --- spectrum synthesis -------------------------------------------------------------

def test_simulated_centroids_on_recoil_shell():
    # deficit-free hydrogen: centroid within 0.5% of E_rec(K_c)
    sample = make_sample(0.1, 1.0079)
    for pt in centroid_points(sample, 0.1, range(30, 65, 5), n_bins=768):
        shell = C.ATOM_E_COEF * pt.k**2 / 1.0079
        assert abs(pt.e - shell) / shell < 0.005


def test_centroid_within_half_bin():
    sample = make_sample(0.02, 1.0079, e_rot=5.0)
    for a in (30, 35, 40, 45):
        cfg = one_detector_cfg(a, sample, 0.02, n_bins=1024)
        red = analysis.reduce_spectrum(simulate_spectrum(cfg, sample, 0), cfg, 0)
        pt, _ = analysis.centroid_ke(red)
        j = int(np.argmin(np.abs(red.e - pt.e)))
        half_bin = abs(red.e[min(j + 1, len(red.e) - 1)] - red.e[j]) / 2.0
        shell = 5.0 + C.ATOM_E_COEF * pt.k**2 / 1.0079
        assert abs(pt.e - shell) < half_bin


def test_noiseless_centroids_lie_on_one_parabola():
    # R^2 > 1 - 1e-9 for a narrow momentum distribution
    sample = make_sample(0.01, 1.0079)
    pts = centroid_points(sample, 0.01, range(30, 75, 5), n_bins=6144)
    ks = np.array([p.k for p in pts])
    es = np.array([p.e for p in pts])
    x = C.ATOM_E_COEF * ks**2
    beta = float((x * es).sum() / (x * x).sum())
    r2 = 1.0 - float(((es - beta * x) ** 2).sum() / ((es - es.mean()) ** 2).sum())
    assert r2 > 1.0 - 1e-9
    assert 1.0 / beta == pytest.approx(1.0079, rel=1e-4)


def test_full_deficit_gives_half_momentum_fraction():
    # lambda=1, equal widths: fitted mass M/4, deficit fraction -50%
    sample = make_sample(0.3, 2.01, deficit=DeficitInjection(1.0, 1.0))
    pts = centroid_points(sample, 0.3, range(8, 26, 4), n_bins=256)
    fit = analysis.fit_recoil_mass(pts, m_free=2.01)
    assert fit.m_eff == pytest.approx(2.01 / 4.0, rel=0.02)
    rep = analysis.deficit_report(fit, 2.01)
    assert rep["deficit_percent"] == pytest.approx(-50.0, abs=1.0)
    assert rep["classification"] == "anomalous"


def test_deficit_monotone_in_lambda():
    masses = []
    for lam in (0.2, 0.5, 0.8, 1.0):
        sample = make_sample(0.3, 2.01, deficit=DeficitInjection(lam, 1.0))
        pts = centroid_points(sample, 0.3, range(8, 26, 4), n_bins=256)
        masses.append(analysis.fit_recoil_mass(pts).m_eff)
    assert all(b < a for a, b in zip(masses, masses[1:]))


def test_roto_recoil_ribbon_targets_paper_fit():
    lam = 2.0 * (1.0 - math.sqrt(0.64 / 2.01))
    sample = make_sample(0.3, 2.01, e_rot=14.7, deficit=DeficitInjection(lam, 1.0))
    pts = centroid_points(sample, 0.3, range(8, 30, 2), n_bins=256)
    fit = analysis.fit_roto_recoil(pts)
    assert fit.m_eff == pytest.approx(0.64, abs=0.02)
    assert fit.e_rot_fit == pytest.approx(14.7, abs=0.2)


# --- Poisson sampling ---------------------------------------------------------------

def _toy_expected():
    edges = np.linspace(0.0, 100.0, 65)
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = np.exp(-((centers - 50.0) ** 2) / 50.0)
    return Spectrum(0, edges, counts, {"schema": 1})


def test_poisson_deterministic_per_seed():
    spec = _toy_expected()
    a = poisson_sample(spec, 100000, seed=7)
    b = poisson_sample(spec, 100000, seed=7)
    c = poisson_sample(spec, 100000, seed=8)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)
    assert a.metadata["seed"] == 7


def test_poisson_total_and_relative_deviations():
    spec = _toy_expected()
    total = 1_000_000
    scale = total / spec.counts.sum()
    zs = []
    for seed in range(100):
        s = poisson_sample(spec, total, seed)
        assert abs(s.counts.sum() - total) <= 3.0 * math.sqrt(total)
        mu = spec.counts * scale
        sel = mu > 25
        zs.append((s.counts[sel] - mu[sel]) / np.sqrt(mu[sel]))
    z = np.concatenate(zs)
    assert np.std(z) == pytest.approx(1.0, abs=0.05)
    assert abs(np.mean(z)) < 0.05


def test_poisson_zero_expectation():
    edges = np.linspace(0, 10, 17)
    spec = Spectrum(0, edges, np.zeros(16), {})
    out = poisson_sample(spec, 1000, seed=3)
    assert np.array_equal(out.counts, np.zeros(16))


# --- config and file I/O --------------------------------------------------------------

def test_instrument_json_roundtrip(tmp_path):
    cfg = arcs_like_instrument()
    doc = instrument_to_dict(cfg)
    assert doc["schema"] == 1
    back = instrument_from_dict(json.loads(json.dumps(doc)))
    assert back.beam.e0 == cfg.beam.e0
    assert len(back.detectors) == len(cfg.detectors)
    assert back.detectors[3].theta == pytest.approx(cfg.detectors[3].theta)


def test_instrument_accepts_degrees():
    doc = {"schema": 1, "beam": {"E0": 90.0},
           "detectors": [{"L0": 11.6, "L1": 4.0, "theta_deg": 45.0}],
           "tof_bins": {"t_min": 3000.0, "t_max": 6000.0, "n_bins": 64}}
    cfg = instrument_from_dict(doc)
    assert cfg.detectors[0].theta == pytest.approx(math.pi / 4.0)


def test_sample_from_dict_mixture_and_deficit():
    doc = {"schema": 1, "M": 2.01, "E_rot": 14.7,
           "momentum_dist": {"type": "mixture", "components": [
               {"weight": 0.6, "sigma": 0.3}, {"weight": 0.4, "sigma": 0.6}]},
           "deficit": {"lambda": 0.5, "width_ratio": 1.0}}
    sample = sample_from_dict(doc)
    assert isinstance(sample.momentum_dist, MixedState)
    assert sample.deficit.lam == 0.5
    assert sample.deficit.k_scale == pytest.approx(0.75)


def test_sample_requires_centered_distribution():
    grid = grid_for_gaussians([0.0, 2.0], [0.5, 0.5])
    off = gaussian_state(grid, 2.0, 0.5)
    with pytest.raises(ValueError):
        SampleModel(1.0, off)


def test_spectrum_csv_roundtrip(tmp_path):
    sample = make_sample(0.3, 2.01)
    cfg = one_detector_cfg(30.0, sample, 0.3, n_bins=64)
    spec = poisson_sample(simulate_spectrum(cfg, sample, 0), 5000, seed=11)
    path = tmp_path / "spec.csv"
    write_spectrum_csv(spec, path)
    back = analysis.ingest_spectrum(path)
    assert np.array_equal(back.counts, spec.counts)
    assert np.allclose(back.bin_edges, spec.bin_edges)
    assert back.metadata["seed"] == 11
    assert back.detector_index == spec.detector_index
