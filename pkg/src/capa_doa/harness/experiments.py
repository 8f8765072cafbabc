"""Seeded Monte Carlo sweeps, bound surfaces, spectra and timing runs."""

import time
from dataclasses import dataclass, field

import numpy as np

from ..capa_music import (
    ScanRanges,
    assemble_k,
    estimate,
    noise_subspace,
    scan,
    spectrum_value,
)
from ..crlb import (
    crlb_capa_closed_form,
    crlb_known,
    crlb_unknown,
    fim_known,
    fim_unknown,
    linearized_error,
    snapshot_gram,
)
from ..errors import ConfigError, UnidentifiableError
from ..geometry import AngleConvention, Aperture
from ..numerics import eig_hermitian, pinv
from ..quadrature import make_grid
from ..scene import FieldSamples, steering_matrix, synthesize_noise, synthesize_snapshots

PENALTY = (np.pi / 2) ** 2


@dataclass
class MseRow:
    value: float
    mse_alpha: float
    mse_phi: float
    crlb_known_alpha: float
    crlb_known_phi: float
    crlb_unknown_alpha: float
    crlb_unknown_phi: float
    trials: int
    failures: int
    mse_cv_alpha: float = float("nan")
    mse_cv_phi: float = float("nan")
    extra: dict = field(default_factory=dict, repr=False)

    COLUMNS = (
        "value", "mse_alpha", "mse_phi", "crlb_known_alpha", "crlb_known_phi",
        "crlb_unknown_alpha", "crlb_unknown_phi", "trials", "failures", "mse_cv_alpha", "mse_cv_phi",
    )

    def as_tuple(self):
        return tuple(getattr(self, c) for c in self.COLUMNS)


def trial_rng(master_seed, point, trial):
    """Independent generator for one trial, keyed by (master seed, point, trial)."""
    return np.random.default_rng([master_seed, point, trial])


def apply_sweep(scene, order, variable, value):
    """Return ``(scene, order)`` with one sweep variable set."""
    if variable is None:
        return scene, order
    if variable == "noise_density":
        return scene.with_updates(noise_density=float(value)), order
    if variable == "snapshots":
        return scene.with_updates(snapshots=int(value)), order
    if variable == "wavelength":
        return scene.with_updates(wavelength=float(value)), order
    if variable == "aperture_scale":
        return scene.with_updates(aperture=scene.aperture.scaled(float(value))), order
    if variable == "quadrature_order":
        return scene, int(value)
    raise ConfigError(f"unknown sweep variable {variable!r}")


def synthesize_trial(scene, grid, rng):
    """Draw snapshots and noise for one trial; returns ``(field, snapshots, noise)``."""
    g_sig, g_noise = rng.spawn(2)
    s = synthesize_snapshots(scene, rng=g_sig)
    alpha, phi = scene.angles()
    clean = steering_matrix(grid, alpha, phi, scene.convention, scene.k) @ s
    if scene.noise_density > 0:
        noise = synthesize_noise(grid, scene.noise_density, s.shape[1], g_noise)
    else:
        noise = np.zeros_like(clean)
    meta = {"k": scene.k, "convention": scene.convention.value, "noise_density": scene.noise_density}
    return FieldSamples(clean + noise, grid, meta), s, noise


def associate(est_alpha, est_phi, true_alpha, true_phi):
    """Greedy nearest-truth matching in degrees with azimuth wrap-around.

    Returns ``(err_alpha, err_phi, bijective)`` in radians, ordered like the
    truths. Unmatched truths get NaN errors.
    """
    ea, ep = np.asarray(est_alpha, dtype=float), np.asarray(est_phi, dtype=float)
    ta, tp = np.asarray(true_alpha, dtype=float), np.asarray(true_phi, dtype=float)
    da = np.angle(np.exp(1j * (ea[:, None] - ta[None, :])))
    dp = ep[:, None] - tp[None, :]
    dist = np.hypot(np.degrees(da), np.degrees(dp))
    err_a = np.full(ta.size, np.nan)
    err_p = np.full(ta.size, np.nan)
    used_e, used_t = set(), set()
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = np.unravel_index(flat, dist.shape)
        if i in used_e or j in used_t:
            continue
        used_e.add(i)
        used_t.add(j)
        err_a[j], err_p[j] = da[i, j], dp[i, j]
    return err_a, err_p, len(used_t) == ta.size == ea.size


def point_bounds(scene, grid, snapshots):
    """Known- and unknown-snapshot bounds for a reference snapshot draw."""
    alpha, phi = scene.angles()
    var = scene.noise_density
    if var <= 0:
        z = np.zeros(scene.m)
        return (z, z), (z, z), None
    fk = fim_known(alpha, phi, snapshot_gram(snapshots), var, grid, scene.convention, scene.k)
    fu = fim_unknown(alpha, phi, snapshots, var, grid, scene.convention, scene.k)
    ck, cu = crlb_known(fk), crlb_unknown(fu)
    return (ck.alpha, ck.phi), (cu.alpha, cu.phi), fu


def run_mse_sweep(cfg, trials=None, control_variate=False, progress=None):
    """Monte Carlo MSE per sweep point alongside the bounds.

    Snapshots are redrawn every trial. Bounds use the snapshots of trial 0.
    With ``control_variate`` the linearized error of each trial is
    subtracted and its exact expectation (that trial's unknown-snapshot
    bound) added back, which cancels most of the Monte Carlo spread.
    """
    trials = trials or cfg.trials
    points = cfg.sweep_values if cfg.sweep_variable else [float("nan")]
    rows = []
    for pi, value in enumerate(points):
        scene, order = apply_sweep(cfg.scene, cfg.quadrature_order, cfg.sweep_variable, value)
        grid = make_grid(order, scene.aperture)
        alpha, phi = scene.angles()
        sq_a, sq_p, cv_a, cv_p = [], [], [], []
        failures = 0
        bounds = None
        for t in range(trials):
            fld, s, noise = synthesize_trial(scene, grid, trial_rng(cfg.master_seed, pi, t))
            if bounds is None:
                bounds = point_bounds(scene, grid, s)
            est = estimate(
                fld, cfg.m_targets, cfg.estimator.ranges, scene.convention, scene.k,
                cfg.estimator.mode, cfg.estimator.refine,
            )
            ea, ep, ok = associate(est.alpha, est.phi, alpha, phi)
            if est.degraded or not ok:
                failures += 1
                if cfg.failure_policy == "penalize":
                    sq_a.append(np.full(scene.m, PENALTY))
                    sq_p.append(np.full(scene.m, PENALTY))
                continue
            sq_a.append(ea**2)
            sq_p.append(ep**2)
            if control_variate and scene.noise_density > 0:
                fu = fim_unknown(alpha, phi, s, scene.noise_density, grid, scene.convention, scene.k)
                la, lp = linearized_error(
                    alpha, phi, s, noise, scene.noise_density, grid, scene.convention, scene.k, fim=fu
                )
                cu = crlb_unknown(fu)
                cv_a.append(ea**2 - la**2 + cu.alpha)
                cv_p.append(ep**2 - lp**2 + cu.phi)
            if progress:
                progress(pi, t)
        (ka, kp), (ua, up), _ = bounds
        used = len(sq_a)
        mse_a = float(np.mean(sq_a)) if used else float("nan")
        mse_p = float(np.mean(sq_p)) if used else float("nan")
        row = MseRow(
            float(value), mse_a, mse_p, float(np.mean(ka)), float(np.mean(kp)),
            float(np.mean(ua)), float(np.mean(up)), used, failures,
        )
        if used > 1:
            row.extra["se_alpha"] = float(np.std(np.mean(sq_a, axis=1), ddof=1) / np.sqrt(used))
            row.extra["se_phi"] = float(np.std(np.mean(sq_p, axis=1), ddof=1) / np.sqrt(used))
        if cv_a:
            row.mse_cv_alpha = float(np.mean(cv_a))
            row.mse_cv_phi = float(np.mean(cv_p))
            n = len(cv_a)
            row.extra["cv_se_alpha"] = float(np.std(np.mean(cv_a, axis=1), ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
            row.extra["cv_se_phi"] = float(np.std(np.mean(cv_p, axis=1), ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        rows.append(row)
    return rows


def run_crlb_sweep(cfg):
    """Bounds per sweep point; rows ``(param, value, crlb_alpha, crlb_phi, regime)``.

    For more than one target the regime carries a ``:<index>`` suffix.
    """
    points = cfg.sweep_values if cfg.sweep_variable else [float("nan")]
    rows = []
    for pi, value in enumerate(points):
        scene, order = apply_sweep(cfg.scene, cfg.quadrature_order, cfg.sweep_variable, value)
        grid = make_grid(order, scene.aperture)
        s = synthesize_snapshots(scene, rng=trial_rng(cfg.master_seed, pi, 0).spawn(2)[0])
        if scene.noise_density <= 0:
            raise ConfigError("bounds need a positive noise density")
        (ka, kp), (ua, up), _ = point_bounds(scene, grid, s)
        for regime, (ca, cp) in (("known", (ka, kp)), ("unknown", (ua, up))):
            for i in range(scene.m):
                tag = regime if scene.m == 1 else f"{regime}:{i}"
                rows.append((cfg.sweep_variable or "none", float(value), float(ca[i]), float(cp[i]), tag))
    return rows


@dataclass
class CrlbSurface:
    alpha_grid: np.ndarray
    phi_grid: np.ndarray
    log_alpha: np.ndarray  # [n_alpha, n_phi], +inf where singular
    log_phi: np.ndarray
    method: str


def run_crlb_surface(aperture, wavelength, r_s, noise_var, alpha_grid, phi_grid,
                     method="closed-form", convention="B", order=30):
    """log10 bound surfaces over an (alpha, phi) grid.

    ``closed-form`` evaluates the single-target expressions (convention B);
    ``quadrature`` inverts the quadrature Fisher matrix in any convention.
    """
    ag, pg = np.asarray(alpha_grid, dtype=float), np.asarray(phi_grid, dtype=float)
    la = np.full((ag.size, pg.size), np.inf)
    lp = np.full((ag.size, pg.size), np.inf)
    k = 2 * np.pi / wavelength
    grid = make_grid(order, aperture) if method == "quadrature" else None
    if method not in ("closed-form", "quadrature"):
        raise ValueError(f"unknown surface method {method!r}")
    for i, a in enumerate(ag):
        for j, p in enumerate(pg):
            try:
                if method == "closed-form":
                    ca, cp = crlb_capa_closed_form(a, p, aperture, k, r_s, noise_var)
                else:
                    c = crlb_known(fim_known([a], [p], [[r_s]], noise_var, grid, convention, k))
                    ca, cp = c.alpha[0], c.phi[0]
            except UnidentifiableError:
                continue
            la[i, j], lp[i, j] = np.log10(ca), np.log10(cp)
    return CrlbSurface(ag, pg, la, lp, method)


@dataclass
class SpectrumRun:
    spectrum: object
    estimate: object
    widths: list = field(default_factory=list)  # (scale, alpha_width_deg, phi_width_deg)


def half_power_width(ns, alpha, phi, convention, k, grid, axis, max_width):
    """Full -3 dB width of the peak at (alpha, phi) along one axis, by bisection."""
    peak = spectrum_value(ns, alpha, phi, convention, k, grid)
    total = 0.0
    for sign in (-1.0, 1.0):
        lo, hi = 0.0, max_width / 2

        def value(off):
            if axis == "alpha":
                return spectrum_value(ns, alpha + sign * off, phi, convention, k, grid)
            return spectrum_value(ns, alpha, phi + sign * off, convention, k, grid)

        if value(hi) > peak / 2:
            total += hi
            continue
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if value(mid) > peak / 2:
                lo = mid
            else:
                hi = mid
        total += 0.5 * (lo + hi)
    return total


def run_spectrum(cfg, scales=(1.0, 2.0, 4.0), seed=None):
    """Spectrum and peaks for the base scenario plus peak widths per aperture scale."""
    seed = cfg.master_seed if seed is None else seed
    base = None
    widths = []
    for si, scale in enumerate(scales):
        scene = cfg.scene.with_updates(aperture=cfg.scene.aperture.scaled(scale))
        grid = make_grid(cfg.quadrature_order, scene.aperture)
        fld, _, _ = synthesize_trial(scene, grid, trial_rng(seed, 0, 0))
        cov = assemble_k(fld)
        ns = noise_subspace(cov, cfg.m_targets, cfg.estimator.mode)
        est = estimate(fld, cfg.m_targets, cfg.estimator.ranges, scene.convention, scene.k,
                       cfg.estimator.mode, cfg.estimator.refine)
        if si == 0:
            spec = scan(ns, cfg.estimator.ranges, scene.convention, scene.k, grid)
            base = (spec, est)
        if est.count:
            a0, p0 = est.alpha[0], est.phi[0]
            wa = half_power_width(ns, a0, p0, scene.convention, scene.k, grid, "alpha", np.pi / 2)
            wp = half_power_width(ns, a0, p0, scene.convention, scene.k, grid, "phi", np.pi / 2)
            widths.append((float(scale), float(np.degrees(wa)), float(np.degrees(wp))))
    return SpectrumRun(base[0], base[1], widths)


def _timed(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_benchmark(t_list=(16, 32, 64), k_list=(10, 20, 30), scan_sizes=(1000, 2000, 4000),
                  seed=0, repeat=3):
    """Best-of-``repeat`` wall-clock time per estimator stage.

    Rows are ``(stage, T, K, n_dirs, seconds)``. The pseudo-inverse stage runs
    with one shared T >= max(K)^2 so its cost follows the K^4 T term.
    """
    rng = np.random.default_rng(seed)
    ap = Aperture(1.0, 1.0)
    k = 20 * np.pi
    rows = []

    def field_for(t, kk):
        grid = make_grid(kk, ap)
        a = steering_matrix(grid, [0.3], [0.6], AngleConvention.A, k)
        s = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, t)))
        n = synthesize_noise(grid, 1e-3, t, rng)
        return FieldSamples(a @ s + n, grid, {"k": k, "convention": "A"})

    for t in t_list:
        for kk in k_list:
            fld = field_for(t, kk)
            sec, cov = _timed(lambda: assemble_k(fld), repeat)
            rows.append(("assemble", t, kk, 0, sec))
            sec, _ = _timed(lambda: eig_hermitian(cov.k_matrix), repeat)
            rows.append(("eig", t, kk, 0, sec))
    t = max(k_list) ** 2
    for kk in k_list:
        fld = field_for(t, kk)
        weighted = fld.values.conj().T * fld.grid.omega
        sec, _ = _timed(lambda: pinv(weighted), repeat)
        rows.append(("pinv", t, kk, 0, sec))
    kk, t = k_list[-1], t_list[-1]
    fld = field_for(t, kk)
    ns = noise_subspace(assemble_k(fld), 1, "truncated")
    for n in scan_sizes:
        side = int(np.sqrt(n))
        r = ScanRanges(-np.pi, np.pi, max(side, 2), 0.0, np.pi / 2, max(n // max(side, 2), 2))
        sec, _ = _timed(lambda: scan(ns, r, "A", k, fld.grid), repeat)
        rows.append(("scan", t, kk, r.n_alpha * r.n_phi, sec))
    return rows


def loglog_slope(x, y):
    x, y = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
