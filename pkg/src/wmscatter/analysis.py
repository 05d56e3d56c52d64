"""Inverse problem: peak centroids, recoil / roto-recoil mass fits, deficit
reporting against the conventional bound, calibration-masking audit, and
spectrum file ingestion.

The recoil fit E = C_A K^2 / M is exactly linear in 1/M and solved in closed
form; the two-parameter roto-recoil fit E = E_rot + C_A K^2 / M uses
Gauss-Newton iteration with the analytic Jacobian, started from the exact
linear solution in (E_rot, 1/M).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import curve_fit, least_squares

from . import constants as C
from .errors import (
    CollinearDegeneracy,
    DegeneratePeak,
    EmptyWindow,
    InsufficientPoints,
    MissingMetadata,
    NonConvergence,
    ParseError,
    Underdetermined,
)
from .kinematics import KEPoint, effective_mass_bound_check
from .spectra import InstrumentConfig, Spectrum, TofBinning, _trajectory_arrays

GN_MAX_ITER = 200
GN_REL_STEP = 1e-10


@dataclass(frozen=True)
class PeakFit:
    """Gaussian-refined peak location. first_moment is the coarse windowed
    centroid kept for comparison; the refined centroid is used downstream."""

    centroid: float
    width: float
    amplitude: float
    residual_norm: float
    first_moment: float = float("nan")
    centroid_err: float | None = None


@dataclass(frozen=True)
class MassFitResult:
    m_eff: float
    stderr: float
    e_rot_fit: float = 0.0
    e_rot_stderr: float = 0.0
    m_free: float | None = None
    mass_ratio: float | None = None
    deficit_fraction: float | None = None   # 1 - sqrt(M_eff/M_free)
    classification: str | None = None


@dataclass(frozen=True)
class CalibrationReport:
    adjusted_params: dict
    refit_mass: float
    masking_flag: bool
    residual_norm: float
    assumed_mass: float


def _gauss(x, amp, center, width):
    return amp * np.exp(-((x - center) ** 2) / (2.0 * width**2))


def peak_centroid(spec: Spectrum, energy_axis, window=None,
                  count_errors=None) -> PeakFit:
    """Locate the peak of counts-versus-energy data.

    First-moment centroid over the window, then a Gaussian least-squares
    refinement.  When window is None it defaults to +-3 coarse widths around
    the coarse centroid, iterated once.  count_errors (same length as counts)
    enables calibrated centroid uncertainties.
    """
    e = np.asarray(energy_axis, dtype=float)
    y = np.asarray(spec.counts, dtype=float)
    if e.shape != y.shape:
        raise ValueError("energy axis and counts must have equal length")
    if window is None:
        lo, hi = _auto_window(e, y)
    else:
        lo, hi = window
    mask = (e >= lo) & (e <= hi)
    if np.count_nonzero(mask & (y > 0)) < 5:
        raise EmptyWindow(
            f"window [{lo}, {hi}] holds fewer than 5 bins with positive counts")
    if np.ptp(y[mask]) == 0:
        raise DegeneratePeak("all counts in the window are equal")
    ew, yw = e[mask], y[mask]
    # nonuniform-axis moments
    de = np.gradient(ew)
    tot = np.sum(yw * de)
    first = float(np.sum(ew * yw * de) / tot)
    var = float(np.sum((ew - first) ** 2 * yw * de) / tot)
    width0 = math.sqrt(max(var, (ew[1] - ew[0]) ** 2 / 12.0))
    p0 = [float(yw.max()), first, width0]
    sig = None
    absolute = False
    if count_errors is not None:
        sig = np.asarray(count_errors, dtype=float)[mask]
        sig = np.where(sig > 0, sig, sig[sig > 0].min() if np.any(sig > 0) else 1.0)
        absolute = True
    try:
        popt, pcov = curve_fit(_gauss, ew, yw, p0=p0, sigma=sig,
                               absolute_sigma=absolute, maxfev=4000)
    except RuntimeError as exc:
        raise NonConvergence(f"Gaussian refinement failed: {exc}") from exc
    amp, center, width = float(popt[0]), float(popt[1]), abs(float(popt[2]))
    resid = yw - _gauss(ew, *popt)
    cerr = None
    if np.all(np.isfinite(pcov)):
        cerr = float(math.sqrt(abs(pcov[1][1])))
    return PeakFit(center, width, amp, float(np.linalg.norm(resid)),
                   first_moment=first, centroid_err=cerr)


def _moments(e, y):
    de = np.gradient(e)
    tot = np.sum(y * de)
    if tot <= 0:
        raise EmptyWindow("no counts at all")
    c = float(np.sum(e * y * de) / tot)
    w = math.sqrt(max(float(np.sum((e - c) ** 2 * y * de) / tot), 0.0))
    if w == 0:
        raise DegeneratePeak("zero-width count distribution")
    return c, w


def _auto_window(e, y):
    """Coarse moments over everything, +-3 widths, iterated once."""
    c, w = _moments(e, y)
    for _ in range(2):
        mask = (e >= c - 3.0 * w) & (e <= c + 3.0 * w)
        if np.count_nonzero(mask) < 5:
            break
        c, w = _moments(e[mask], y[mask])
    return c - 3.0 * w, c + 3.0 * w


def _weights(points):
    sig = [p.sigma_e for p in points]
    if all(s is not None and s > 0 for s in sig):
        return np.array([1.0 / s**2 for s in sig]), True
    return np.ones(len(points)), False


def fit_recoil_mass(points, m_free: float | None = None) -> MassFitResult:
    """Weighted least squares of E = C_A K^2 / M_eff (linear in 1/M_eff)."""
    points = list(points)
    if len(points) < 3:
        raise InsufficientPoints(f"need >= 3 points, got {len(points)}")
    ks = np.array([p.k for p in points])
    if np.ptp(ks) == 0:
        raise CollinearDegeneracy("all K values coincide")
    es = np.array([p.e for p in points])
    w, absolute = _weights(points)
    x = C.ATOM_E_COEF * ks**2
    sxx = np.sum(w * x * x)
    beta = np.sum(w * x * es) / sxx
    if beta <= 0:
        raise NonConvergence("fitted curvature is non-positive; no mass solution")
    if absolute:
        var_beta = 1.0 / sxx
    else:
        chi2 = np.sum(w * (es - beta * x) ** 2)
        var_beta = chi2 / max(len(points) - 1, 1) / sxx
    m_eff = 1.0 / beta
    stderr = math.sqrt(var_beta) / beta**2
    return _classified(MassFitResult(m_eff, stderr), m_free)


def fit_roto_recoil(points, pin_e_rot: float | None = None,
                    m_free: float | None = None) -> MassFitResult:
    """Two-parameter fit E = E_rot + C_A K^2 / M_eff by Gauss-Newton.

    With pin_e_rot set, the offset is held fixed and the problem reduces to
    fit_recoil_mass on the shifted energies.
    """
    points = list(points)
    if pin_e_rot is not None:
        shifted = [KEPoint(p.k, p.e - pin_e_rot, p.sigma_e) for p in points]
        base = fit_recoil_mass(shifted, m_free=None)
        return _classified(
            MassFitResult(base.m_eff, base.stderr, e_rot_fit=pin_e_rot),
            m_free)
    if len(points) < 4:
        raise InsufficientPoints(f"need >= 4 points, got {len(points)}")
    ks = np.array([p.k for p in points])
    if np.ptp(ks) == 0:
        raise CollinearDegeneracy("all K values coincide")
    es = np.array([p.e for p in points])
    w, absolute = _weights(points)
    x = C.ATOM_E_COEF * ks**2
    sw = np.sqrt(w)
    # exact linear start in (E_rot, 1/M)
    design = np.column_stack([np.ones_like(x), x]) * sw[:, None]
    sol, *_ = np.linalg.lstsq(design, es * sw, rcond=None)
    e_rot, beta = float(sol[0]), float(sol[1])
    if beta <= 0:
        raise NonConvergence("fitted curvature is non-positive; no mass solution")
    m = 1.0 / beta
    theta = np.array([e_rot, m])
    for _ in range(GN_MAX_ITER):
        model = theta[0] + x / theta[1]
        r = es - model
        jac = np.column_stack([np.ones_like(x), -x / theta[1] ** 2])
        step, *_ = np.linalg.lstsq(jac * sw[:, None], r * sw, rcond=None)
        theta = theta + step
        if np.linalg.norm(step) < GN_REL_STEP * max(np.linalg.norm(theta), 1.0):
            break
    else:
        raise NonConvergence(f"Gauss-Newton did not converge in {GN_MAX_ITER} iterations")
    e_rot, m = float(theta[0]), float(theta[1])
    if m <= 0:
        raise NonConvergence("converged to non-positive mass")
    jac = np.column_stack([np.ones_like(x), -x / m**2]) * sw[:, None]
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError as exc:
        raise CollinearDegeneracy("singular normal equations") from exc
    if not absolute:
        r = es - (e_rot + x / m)
        cov = cov * float(np.sum(w * r**2)) / max(len(points) - 2, 1)
    return _classified(
        MassFitResult(m, float(math.sqrt(abs(cov[1, 1]))), e_rot_fit=e_rot,
                      e_rot_stderr=float(math.sqrt(abs(cov[0, 0])))),
        m_free)


def _classified(fit: MassFitResult, m_free) -> MassFitResult:
    if m_free is None:
        return fit
    ratio = fit.m_eff / m_free
    return MassFitResult(
        fit.m_eff, fit.stderr, fit.e_rot_fit, fit.e_rot_stderr,
        m_free=m_free, mass_ratio=ratio,
        deficit_fraction=1.0 - math.sqrt(ratio),
        classification=effective_mass_bound_check(fit.m_eff, m_free))


def deficit_report(fit: MassFitResult, m_free: float) -> dict:
    """Deficit record for a fitted mass against the free-mass bound.

    The momentum-deficit percentage uses the fixed-E reading K ~ sqrt(M): a
    mass ratio r gives a momentum ratio sqrt(r), hence -100*(1 - sqrt(r)).
    The linear mass-ratio form is included for transparency but is not the
    adopted convention.
    """
    ratio = fit.m_eff / m_free
    frac_sqrt = 1.0 - math.sqrt(ratio)
    return {
        "m_eff": fit.m_eff,
        "stderr": fit.stderr,
        "e_rot_fit": fit.e_rot_fit,
        "m_free": m_free,
        "mass_ratio": ratio,
        "momentum_ratio": math.sqrt(ratio),
        "deficit_fraction": frac_sqrt,
        "deficit_percent": -100.0 * frac_sqrt,
        "deficit_percent_linear": -100.0 * (1.0 - ratio),
        "classification": effective_mass_bound_check(fit.m_eff, m_free),
    }


# --- spectrum reduction --------------------------------------------------------

@dataclass(frozen=True)
class ReducedDetector:
    """One detector converted from TOF to the (K, E) plane.

    intensity is counts divided by the instrument factor (k1/k0) * |dE/dt| * dt,
    i.e. samples of the energy-shell intensity along the trajectory.  factor
    holds that per-bin conversion so Poisson errors can be modeled.
    """

    detector_index: int
    t: np.ndarray
    k: np.ndarray
    e: np.ndarray
    intensity: np.ndarray
    intensity_err: np.ndarray | None
    counts: np.ndarray
    factor: np.ndarray | None = None


def _config_from_metadata(meta: dict) -> InstrumentConfig:
    from .kinematics import DetectorGeometry, NeutronBeam

    beam = NeutronBeam(float(meta["beam"]["E0"]))
    g = meta["detector"]
    det = DetectorGeometry(float(g["L0"]), float(g["L1"]),
                           float(g["theta"]), float(g.get("t0", 0.0)))
    tb = meta["tof_bins"]
    bins = TofBinning(float(tb["t_min"]), float(tb["t_max"]), int(tb["n_bins"]))
    return InstrumentConfig(beam, (det,), bins)


def reduce_spectrum(spec: Spectrum, cfg: InstrumentConfig | None = None,
                    det_index: int | None = None,
                    poisson_errors: bool = False) -> ReducedDetector:
    """Map a TOF spectrum to (K, E) and divide out the instrument factors.

    Without an explicit cfg the single-detector geometry embedded in the
    spectrum metadata is used.
    """
    if cfg is None:
        cfg = _config_from_metadata(spec.metadata)
        det_index = 0
    elif det_index is None:
        det_index = spec.detector_index
    t, valid, v1, k1, e, kk, jac = _trajectory_arrays(cfg, det_index)
    factor = (k1 / cfg.beam.k0) * jac * cfg.tof_bins.width
    with np.errstate(invalid="ignore", divide="ignore"):
        inten = np.where(valid, spec.counts / factor, 0.0)
        err = None
        if poisson_errors:
            err = np.where(valid, np.sqrt(np.maximum(spec.counts, 1.0)) / factor, 0.0)
    return ReducedDetector(spec.detector_index, t, kk, e, inten, err,
                           np.asarray(spec.counts, dtype=float),
                           np.where(valid, factor, np.nan))


def _gauss_jac(e, amp, center, width):
    u = (e - center) / width
    g = np.exp(-0.5 * u**2)
    return np.column_stack([g, amp * g * u / width, amp * g * u**2 / width])


def centroid_ke(red: ReducedDetector, window=None) -> tuple:
    """Per-detector peak centroid mapped to a KEPoint on the trajectory.

    Returns (KEPoint, PeakFit); K is interpolated at the fitted energy centroid.
    The Gaussian location fit is unweighted (Poisson weighting would emphasize
    the wings, where the shell lineshape departs from a Gaussian); for counting
    data the centroid uncertainty comes from the sandwich covariance with
    per-bin Poisson variances modeled as (fitted counts, floored at 1).
    """
    spec_like = Spectrum(red.detector_index,
                         np.arange(len(red.intensity) + 1, dtype=float),
                         np.maximum(red.intensity, 0.0))
    fit = peak_centroid(spec_like, red.e, window=window, count_errors=None)
    if red.intensity_err is not None and red.factor is not None:
        lo, hi = window if window is not None else \
            (fit.centroid - 3.0 * fit.width, fit.centroid + 3.0 * fit.width)
        mask = (red.e >= lo) & (red.e <= hi) & np.isfinite(red.factor)
        if np.count_nonzero(mask) >= 5:
            ew = red.e[mask]
            jac = _gauss_jac(ew, fit.amplitude, fit.centroid, fit.width)
            model_counts = _gauss(ew, fit.amplitude, fit.centroid, fit.width) \
                * red.factor[mask]
            var_i = np.maximum(model_counts, 1.0) / red.factor[mask] ** 2
            jtj = jac.T @ jac
            try:
                jtj_inv = np.linalg.inv(jtj)
                cov = jtj_inv @ ((jac.T * var_i) @ jac) @ jtj_inv
                fit = replace(fit, centroid_err=float(math.sqrt(abs(cov[1, 1]))))
            except np.linalg.LinAlgError:
                pass
    k_at = float(np.interp(fit.centroid, red.e, red.k))
    sigma = fit.centroid_err if (fit.centroid_err and fit.centroid_err > 0) else None
    return KEPoint(k_at, fit.centroid, sigma), fit


# --- calibration audit -----------------------------------------------------------

AUDIT_PARAMS = ("L0", "L1", "t0", "theta", "E0")


def _peak_tof(cfg: InstrumentConfig, det_index: int, e_centroid: float) -> float:
    """TOF position [us] of an energy-transfer centroid under a given config."""
    geom = cfg.detectors[det_index]
    e1 = cfg.beam.e0 - e_centroid
    if e1 <= 0:
        raise ValueError(f"centroid {e_centroid} meV exceeds the incident energy")
    v1 = C.neutron_speed(e1)
    return (geom.l0 / cfg.beam.v0 + geom.l1 / v1) / C.US_S + geom.t0


def _ke_under(cfg, det_index, t_peak, deltas):
    geom = cfg.detectors[det_index]
    e0 = cfg.beam.e0 + deltas.get("E0", 0.0)
    if e0 <= 0:
        return None
    v0 = C.neutron_speed(e0)
    k0 = C.neutron_wavenumber(e0)
    l0 = geom.l0 + deltas.get("L0", 0.0)
    l1 = geom.l1 + deltas.get("L1", 0.0)
    t0 = geom.t0 + deltas.get("t0", 0.0)
    theta = geom.theta + deltas.get("theta", 0.0)
    if l0 <= 0 or l1 <= 0:
        return None
    remain = (t_peak - t0) * C.US_S - l0 / v0
    if remain <= 0:
        return None
    v1 = l1 / remain
    k1 = v1 / C.VEL_PER_WAVENUMBER
    e = C.NEUTRON_E_COEF * (k0**2 - k1**2)
    kk = math.sqrt(max(k0**2 + k1**2 - 2 * k0 * k1 * math.cos(theta), 0.0))
    return kk, e


def calibration_audit(cfg: InstrumentConfig, observed_peaks, assumed_m: float,
                      free_params=(), masking_tol: float = 0.01) -> CalibrationReport:
    """Adjust chosen instrument parameters so the observed peak positions land
    on the free-recoil line of the assumed mass.

    observed_peaks: sequence of (detector_index, PeakFit) with energy-domain
    centroids referred to cfg.  They are converted once to their (fixed,
    map-independent) TOF positions; the chosen parameter deltas (shared across
    detectors) are then fitted by least squares.  masking_flag reports whether
    the refitted mass agrees with assumed_m within masking_tol, i.e. whether
    recalibration has absorbed whatever anomaly was present.
    """
    peaks = list(observed_peaks)
    free = tuple(free_params)
    for name in free:
        if name not in AUDIT_PARAMS:
            raise ValueError(f"unknown calibration parameter {name!r}")
    if len(free) > len(peaks):
        raise Underdetermined(
            f"{len(free)} free parameters but only {len(peaks)} peaks")
    t_peaks = [(d, _peak_tof(cfg, d, pf.centroid),
                pf.centroid_err if (pf.centroid_err and pf.centroid_err > 0) else 1.0)
               for d, pf in peaks]

    def residuals(x):
        deltas = dict(zip(free, x))
        out = []
        for d, tp, sig in t_peaks:
            ke = _ke_under(cfg, d, tp, deltas)
            if ke is None:
                out.append(1e6)
                continue
            kk, e = ke
            out.append((e - C.ATOM_E_COEF * kk**2 / assumed_m) / sig)
        return np.array(out)

    deltas = {name: 0.0 for name in AUDIT_PARAMS}
    resid_norm = float(np.linalg.norm(residuals([])))
    if free:
        res = least_squares(residuals, np.zeros(len(free)), method="lm")
        if not res.success:
            raise NonConvergence(f"calibration adjustment failed: {res.message}")
        deltas.update(dict(zip(free, (float(v) for v in res.x))))
        resid_norm = float(np.linalg.norm(res.fun))
    fit_points = []
    use = {k: v for k, v in deltas.items() if k in free}
    for d, tp, sig in t_peaks:
        ke = _ke_under(cfg, d, tp, use)
        if ke is not None:
            fit_points.append(KEPoint(ke[0], ke[1], sig if sig != 1.0 else None))
    refit = fit_recoil_mass(fit_points)
    masking = abs(refit.m_eff - assumed_m) / assumed_m < masking_tol
    return CalibrationReport(deltas, refit.m_eff, masking, resid_norm, assumed_m)


def report_text(report: CalibrationReport) -> str:
    """Human-readable audit table (4 significant digits)."""
    lines = ["calibration audit",
             f"  assumed mass : {report.assumed_mass:.4g} amu",
             f"  refit mass   : {report.refit_mass:.4g} amu",
             f"  masking      : {'YES' if report.masking_flag else 'no'}",
             f"  residual norm: {report.residual_norm:.4g}",
             "  parameter deltas:"]
    for name in AUDIT_PARAMS:
        lines.append(f"    {name:<6} {report.adjusted_params[name]:+.4g}")
    return "\n".join(lines) + "\n"


# --- file ingestion ---------------------------------------------------------------

def ingest_spectrum(path, strict: bool = True) -> Spectrum:
    """Read a spectrum CSV written by spectra.write_spectrum_csv.

    The first line must be a '#'-prefixed JSON metadata record; with
    strict=False a missing header only warns and default metadata is attached.
    Malformed rows raise ParseError with their 1-based line number.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(1, "empty file")
    meta = None
    body_start = 0
    if lines[0].lstrip().startswith("#"):
        try:
            meta = json.loads(lines[0].lstrip()[1:])
        except json.JSONDecodeError as exc:
            raise ParseError(1, f"bad metadata JSON: {exc}") from None
        body_start = 1
    elif strict:
        raise MissingMetadata(f"{path}: no '#' JSON metadata header")
    else:
        warnings.warn(f"{path}: missing metadata header; assuming default "
                      "instrument context", stacklevel=2)
        meta = {"schema": 1, "seed": None, "detector_index": 0,
                "default_instrument": True}
    if body_start >= len(lines) or lines[body_start].strip() != "tof_us,counts":
        raise ParseError(body_start + 1, "expected header 'tof_us,counts'")
    t, c = [], []
    for i, line in enumerate(lines[body_start + 1:], start=body_start + 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(i, f"expected 2 fields, got {len(parts)}")
        try:
            tv, cv = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(i, f"non-numeric row {line!r}") from None
        if cv < 0:
            raise ParseError(i, f"negative counts {cv}")
        t.append(tv)
        c.append(cv)
    if len(t) < 2:
        raise ParseError(len(lines), "need at least 2 data rows")
    t = np.asarray(t)
    tb = meta.get("tof_bins") if meta else None
    if tb and int(tb["n_bins"]) != len(c):
        raise ParseError(len(lines),
                         f"metadata says {tb['n_bins']} bins, file has {len(c)}")
    if tb:
        edges = np.linspace(float(tb["t_min"]), float(tb["t_max"]), len(c) + 1)
    else:
        half = 0.5 * (t[1] - t[0])
        edges = np.concatenate([t - half, [t[-1] + half]])
    return Spectrum(int(meta.get("detector_index", 0)), edges, np.asarray(c), meta)


# --- centroid table I/O (CSV with '#' JSON metadata, used by the CLI) ------------

def write_centroids_csv(records, path, metadata=None):
    """records: iterable of (detector_index, KEPoint)."""
    meta = {"schema": 1}
    if metadata:
        meta.update(metadata)
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("detector,K,E,sigma_E\n")
        for d, pt in records:
            s = "" if pt.sigma_e is None else repr(float(pt.sigma_e))
            fh.write(f"{int(d)},{float(pt.k)!r},{float(pt.e)!r},{s}\n")


def read_centroids_csv(path):
    """Returns (metadata, list of (detector_index, KEPoint))."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].lstrip().startswith("#"):
        raise MissingMetadata(f"{path}: no '#' JSON metadata header")
    meta = json.loads(lines[0].lstrip()[1:])
    if len(lines) < 2 or lines[1].strip() != "detector,K,E,sigma_E":
        raise ParseError(2, "expected header 'detector,K,E,sigma_E'")
    out = []
    for i, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(i, f"expected 4 fields, got {len(parts)}")
        try:
            d = int(parts[0])
            k, e = float(parts[1]), float(parts[2])
            sig = float(parts[3]) if parts[3].strip() else None
        except ValueError:
            raise ParseError(i, f"non-numeric row {line!r}") from None
        out.append((d, KEPoint(k, e, sig)))
    return meta, out
