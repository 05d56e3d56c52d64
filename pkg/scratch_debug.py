import math

import numpy as np

import wmscatter as w
import wmscatter.analysis as an
from wmscatter import constants as C
from wmscatter.kinematics import DetectorGeometry, NeutronBeam
from wmscatter.qstate import gaussian_state, grid_for_gaussians
from wmscatter.spectra import recoil_tof_window


def make_sample(sigma_p, M, e_rot=0.0, deficit=None):
    grid = grid_for_gaussians([0.0], [sigma_p])
    return w.SampleModel(M, gaussian_state(grid, 0.0, sigma_p), e_rot, deficit)


def per_detector_points(sample, sigma_p, thetas, n_bins=384, margin=8.0, verbose=False):
    beam = NeutronBeam(90.0)
    pts = []
    for a in thetas:
        geom = DetectorGeometry(11.6, 4.0, math.radians(a))
        bins = recoil_tof_window(beam, (geom,), sample, sigma_p,
                                 margin_sigmas=margin, n_bins=n_bins)
        cfg = w.InstrumentConfig(beam, (geom,), bins)
        spec = w.simulate_spectrum(cfg, sample, 0)
        red = w.reduce_spectrum(spec, cfg, 0)
        pt, fit = w.centroid_ke(red)
        pts.append(pt)
        if verbose:
            ksc = sample.deficit.k_scale if sample.deficit else 1.0
            shell = sample.e_rot + C.ATOM_E_COEF * pt.k**2 / (sample.mass * ksc**2)
            print(f"   th={a:3d} K={pt.k:.3f} E={pt.e:.4f} bias={pt.e - shell:+.3e} rel={(pt.e - shell) / shell:+.2e}")
    return pts


def parabola_stats(pts, e_rot=0.0):
    ks = np.array([p.k for p in pts])
    es = np.array([p.e for p in pts])
    x = C.ATOM_E_COEF * ks**2
    y = es - e_rot
    beta = (x * y).sum() / (x * x).sum()
    r2 = 1 - ((y - beta * x) ** 2).sum() / ((y - y.mean()) ** 2).sum()
    return 1 / beta, r2


print("A) deficit-free H (M=1.0079), theta 30..70, per-detector windows:")
for sp, nb in [(0.5, 384), (0.2, 384), (0.1, 768), (0.05, 1536), (0.02, 3072)]:
    sample = make_sample(sp, 1.0079)
    pts = per_detector_points(sample, sp, range(30, 75, 5), n_bins=nb)
    m, r2 = parabola_stats(pts)
    print(f"  sigma={sp:5} bins={nb}: M={m:.8f} 1-R2={1 - r2:.2e}")

print("B) deficit lam=1 w=1 M=2.01, theta 30..110:")
sample = make_sample(0.4, 2.01, deficit=w.DeficitInjection(1.0, 1.0))
pts = per_detector_points(sample, 0.4, range(30, 115, 10), verbose=True)
m, r2 = parabola_stats(pts)
print(f"  M={m:.5f} target {2.01 / 4}; deficit pct {-100 * (1 - math.sqrt(m / 2.01)):.3f} (target -50)")

print("C) roto-recoil M=2.01 E_rot=14.7, deficit to 0.64:")
lam = (1 - math.sqrt(0.64 / 2.01)) * 2
print("  lam:", lam)
sample = make_sample(0.4, 2.01, e_rot=14.7, deficit=w.DeficitInjection(lam, 1.0))
pts = per_detector_points(sample, 0.4, range(30, 115, 10))
fit = an.fit_roto_recoil(pts)
print(f"  roto fit: M={fit.m_eff:.5f} E_rot={fit.e_rot_fit:.4f} (targets 0.64, 14.7)")
