"""Subspace DOA estimation on a continuous aperture.

The field is never sampled densely. Everything runs on the tensor
Gauss-Legendre grid: the T x T matrix ``K = E^H Omega E / T`` replaces the
aperture covariance, its eigenvectors are mapped back to sampled
eigenfunctions with a pseudo-inverse, and the spectrum is the reciprocal of
the Omega-weighted projection of a steering vector onto the noise subspace.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .geometry import AngleConvention
from .numerics import eig_hermitian, pinv
from .scene import steering_vector

DENOMINATOR_FLOOR = 1e-18
SUBSPACE_MODES = ("complement", "truncated")
_NEGLIGIBLE_ENERGY = 1e-20
_SCAN_CHUNK = 2_000_000  # complex entries per scan work buffer


@dataclass(frozen=True)
class ReducedCovariance:
    k_matrix: np.ndarray
    field: object

    @property
    def grid(self):
        return self.field.grid

    @property
    def snapshots(self):
        return self.k_matrix.shape[0]


@dataclass(frozen=True)
class NoiseSubspace:
    """Sampled eigenfunctions of the aperture covariance.

    ``u_bar`` holds the noise eigenfunctions ``pinv(E^H Omega) e_i`` for
    i > M, one per column. ``signal`` is an Omega-orthonormal basis of the
    span of the top-M eigenfunctions.

    In ``complement`` mode the noise projector is taken as the Omega-weighted
    complement of ``signal``. In ``truncated`` mode only the columns of
    ``u_bar`` are used; when T is smaller than the grid size that drops
    every noise direction outside the span of the data.
    """

    u_bar: np.ndarray
    omega: np.ndarray
    signal: np.ndarray
    eigenvalues: np.ndarray
    mode: str = "complement"
    degenerate: bool = False

    @property
    def m(self):
        return self.signal.shape[1]

    def projector_columns(self):
        """Columns ``Q`` such that the spectrum denominator is built from ``Q^H Omega a``."""
        return self.signal if self.mode == "complement" else self.u_bar


@dataclass(frozen=True)
class ScanRanges:
    """Inclusive uniform search grid, angles in radians."""

    alpha_min: float = -np.pi
    alpha_max: float = np.pi
    n_alpha: int = 361
    phi_min: float = 0.0
    phi_max: float = np.pi / 2
    n_phi: int = 91

    def __post_init__(self):
        if self.n_alpha < 2 or self.n_phi < 2:
            raise ValueError("scan grids need at least two points per axis")
        if not (self.alpha_min < self.alpha_max and self.phi_min < self.phi_max):
            raise ValueError("scan ranges must have min < max")
        if self.alpha_max - self.alpha_min > 2 * np.pi + 1e-9:
            raise ValueError("azimuth range exceeds 360 degrees")
        if self.phi_min < -np.pi / 2 - 1e-12 or self.phi_max > np.pi / 2 + 1e-12:
            raise ValueError("elevation range must lie within [-90, 90] degrees")

    @classmethod
    def from_degrees(cls, alpha=(-180.0, 180.0), phi=(0.0, 90.0), step=1.0):
        if not step > 0:
            raise ValueError("scan step must be positive")
        na = int(round((alpha[1] - alpha[0]) / step)) + 1
        npi = int(round((phi[1] - phi[0]) / step)) + 1
        return cls(np.radians(alpha[0]), np.radians(alpha[1]), na, np.radians(phi[0]), np.radians(phi[1]), npi)

    @property
    def alpha_grid(self):
        return np.linspace(self.alpha_min, self.alpha_max, self.n_alpha)

    @property
    def phi_grid(self):
        return np.linspace(self.phi_min, self.phi_max, self.n_phi)

    @property
    def alpha_step(self):
        return (self.alpha_max - self.alpha_min) / (self.n_alpha - 1)

    @property
    def phi_step(self):
        return (self.phi_max - self.phi_min) / (self.n_phi - 1)

    @property
    def periodic_alpha(self):
        return abs(self.alpha_max - self.alpha_min - 2 * np.pi) < 1e-9

    def clip(self, alpha, phi):
        if self.periodic_alpha:
            alpha = _wrap(alpha)
        else:
            alpha = float(np.clip(alpha, self.alpha_min, self.alpha_max))
        return alpha, float(np.clip(phi, self.phi_min, self.phi_max))


@dataclass(frozen=True)
class MusicSpectrum:
    alpha_grid: np.ndarray
    phi_grid: np.ndarray
    values: np.ndarray  # [n_alpha, n_phi]
    convention: AngleConvention
    floored: bool = False

    def __post_init__(self):
        if self.values.shape != (self.alpha_grid.size, self.phi_grid.size):
            raise ValueError("spectrum values do not match the angle grids")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise NumericError("spectrum must be finite and non-negative")


@dataclass(frozen=True)
class DoaEstimate:
    alpha: np.ndarray
    phi: np.ndarray
    peak: np.ndarray
    m_requested: int
    degraded: bool = False
    flags: dict = field(default_factory=dict)

    @property
    def count(self):
        return self.alpha.size

    def to_records(self):
        return [
            {"alpha_deg": float(np.degrees(a)), "phi_deg": float(np.degrees(p)), "peak": float(v)}
            for a, p, v in zip(self.alpha, self.phi, self.peak)
        ]


def _wrap(alpha):
    """Wrap to (-pi, pi]."""
    a = np.mod(np.asarray(alpha, dtype=float) + np.pi, 2 * np.pi) - np.pi
    a = np.where(a <= -np.pi, a + 2 * np.pi, a)
    return float(a) if np.ndim(a) == 0 else a


def assemble_k(field):
    """Quadrature form of the reduced T x T covariance."""
    e = np.asarray(field.values)
    if e.ndim != 2 or e.shape[1] < 1:
        raise ValueError("field must have at least one snapshot")
    if not np.all(np.isfinite(e)):
        raise NumericError("field samples contain non-finite values")
    omega = field.grid.omega
    k = (e.conj().T @ (omega[:, None] * e)) / e.shape[1]
    k = 0.5 * (k + k.conj().T)
    return ReducedCovariance(k, field)


def reconstruct_eigenfunctions(field, vectors, rcond=1e-12, weighting="aperture"):
    """Map eigenvectors of K to sampled aperture eigenfunctions.

    ``weighting="euclidean"`` is the literal ``pinv(E^H Omega) @ vectors``.
    ``weighting="aperture"`` takes the minimum-norm solution in the Omega
    inner product instead, ``Omega^-1/2 pinv(E^H Omega^1/2) @ vectors``,
    which keeps each eigenfunction inside the span of the data and gives
    ``E v_i / (T lambda_i)`` for every non-zero eigenvalue.
    """
    e = np.asarray(field.values)
    omega = field.grid.omega
    if weighting == "euclidean":
        return pinv(e.conj().T * omega[None, :], rcond) @ vectors
    if weighting != "aperture":
        raise ValueError(f"unknown weighting {weighting!r}")
    root = np.sqrt(omega)
    return (pinv(e.conj().T * root[None, :], rcond) @ vectors) / root[:, None]


def noise_subspace(cov, m_targets, mode="complement", rcond=1e-12):
    """Split the sampled eigenfunctions into signal and noise parts."""
    t = cov.snapshots
    if int(m_targets) != m_targets or m_targets < 1:
        raise ValueError("number of targets must be a positive integer")
    if m_targets >= t:
        raise ValueError(f"need more snapshots than targets (T = {t}, M = {m_targets})")
    if mode not in SUBSPACE_MODES:
        raise ValueError(f"unknown subspace mode {mode!r}")
    pairs = eig_hermitian(cov.k_matrix)
    omega = cov.grid.omega
    root = np.sqrt(omega)

    u_noise = reconstruct_eigenfunctions(cov.field, pairs.vectors[:, m_targets:], rcond, "euclidean")
    u_sig = reconstruct_eigenfunctions(cov.field, pairs.vectors[:, :m_targets], rcond, "aperture")
    q, r = np.linalg.qr(root[:, None] * u_sig)
    if np.min(np.abs(np.diag(r))) <= 1e-12 * max(np.max(np.abs(np.diag(r))), 1e-300):
        raise NumericError("signal eigenfunctions are linearly dependent; too few sources in the data")
    signal = q / root[:, None]

    # without noise the columns are exactly zero; in floating point they come
    # out as rounding residue along the signal direction, so clear them
    noise_energy = np.sum(omega[:, None] * np.abs(u_noise) ** 2, axis=0)
    sig_energy = np.sum(omega[:, None] * np.abs(u_sig) ** 2, axis=0)
    negligible = noise_energy <= _NEGLIGIBLE_ENERGY * max(np.max(sig_energy), 1e-300)
    u_noise[:, negligible] = 0.0
    degenerate = bool(np.all(negligible))
    return NoiseSubspace(u_noise, omega, signal, pairs.values, mode, degenerate)


def _denominator(ns, a):
    """Noise-projection energy of steering vector(s) ``a`` (columns)."""
    a = np.atleast_2d(a.T).T
    proj = ns.projector_columns().conj().T @ (ns.omega[:, None] * a)
    if ns.mode == "complement":
        # Omega-norm of the residual after removing the signal component
        resid = a - ns.signal @ proj
        d = np.sum(ns.omega[:, None] * np.abs(resid) ** 2, axis=0)
    else:
        if ns.degenerate:
            return np.full(a.shape[1], DENOMINATOR_FLOOR)
        d = np.sum(np.abs(proj) ** 2, axis=0)
    return np.maximum(d, DENOMINATOR_FLOOR)


def spectrum_denominator(ns, alpha, phi, convention, k, grid):
    a = steering_vector(grid, alpha, phi, convention, k)
    return float(_denominator(ns, a)[0])


def spectrum_value(ns, alpha, phi, convention, k, grid):
    """Pseudo-spectrum ``1 / (a^H Omega P_N Omega a)`` at one direction."""
    if ns.u_bar.shape[1] < 1:
        raise ValueError("noise subspace is empty")
    return 1.0 / spectrum_denominator(ns, alpha, phi, convention, k, grid)


def _axis_responses(axis, cosines, k):
    return np.exp(1j * k * np.outer(cosines, axis))


def scan(ns, ranges, convention, k, grid):
    """Evaluate the spectrum on a uniform (alpha, phi) grid.

    Steering vectors on a tensor grid factor as ``ex(u)[kx] * ey(v)[ky]``, so
    projections reduce to two small matrix products per direction.
    """
    convention = AngleConvention.parse(convention)
    if ns.u_bar.shape[1] < 1:
        raise ValueError("noise subspace is empty")
    ag, pg = ranges.alpha_grid, ranges.phi_grid
    aa, pp = np.meshgrid(ag, pg, indexing="ij")
    u, v = convention.direction_cosines(aa.ravel(), pp.ravel())
    kk = grid.order
    cols = ns.projector_columns()
    c = cols.shape[1]
    w = (cols.conj() * ns.omega[:, None]).reshape(kk, kk, c)
    total = float(np.sum(ns.omega))

    n = u.size
    d = np.empty(n)
    chunk = max(1, _SCAN_CHUNK // (kk * max(c, 1)))
    for s in range(0, n, chunk):
        ex = _axis_responses(grid.x_axis, u[s : s + chunk], k)
        ey = _axis_responses(grid.y_axis, v[s : s + chunk], k)
        proj = np.einsum("gjc,gj->gc", np.einsum("gi,ijc->gjc", ex, w), ey)
        energy = np.sum(np.abs(proj) ** 2, axis=1)
        if ns.mode == "complement":
            d[s : s + chunk] = total - energy
        else:
            d[s : s + chunk] = energy
    if ns.mode == "truncated" and ns.degenerate:
        d[:] = 0.0
    floored = bool(np.any(d <= DENOMINATOR_FLOOR))
    values = 1.0 / np.maximum(d, DENOMINATOR_FLOOR)
    return MusicSpectrum(ag.copy(), pg.copy(), values.reshape(aa.shape), convention, floored)


def _local_maxima(values, periodic):
    """Boolean mask of strict 8-neighbour maxima."""
    v = values
    if periodic:
        v = v[:-1]  # last azimuth row repeats the first
    na, nphi = v.shape
    pad = np.full((na + 2, nphi + 2), -np.inf)
    pad[1:-1, 1:-1] = v
    if periodic:
        pad[0, 1:-1] = v[-1]
        pad[-1, 1:-1] = v[0]
    mask = np.ones_like(v, dtype=bool)
    for da in (-1, 0, 1):
        for dp in (-1, 0, 1):
            if da == 0 and dp == 0:
                continue
            mask &= v > pad[1 + da : 1 + da + na, 1 + dp : 1 + dp + nphi]
    if periodic:
        mask = np.vstack([mask, np.zeros((1, nphi), dtype=bool)])
    return mask


def _parabola_offset(pm, p0, pp):
    """Vertex offset (in cells) of the parabola through the denominators ``1/P``."""
    if not (pm > 0 and p0 > 0 and pp > 0):
        return 0.0
    dm, d0, dp = 1.0 / pm, 1.0 / p0, 1.0 / pp
    curv = dm - 2 * d0 + dp
    if not curv > 0:
        return 0.0
    return float(np.clip(0.5 * (dm - dp) / curv, -1.0, 1.0))


def find_peaks(spec, m_targets, ranges=None):
    """Pick the M largest strict local maxima and refine each on the grid.

    The refinement fits a parabola to ``1/P`` through the three neighbours
    along each axis independently and clamps the vertex to one cell.
    """
    if int(m_targets) != m_targets or m_targets < 1:
        raise ValueError("number of targets must be a positive integer")
    ag, pg, vals = spec.alpha_grid, spec.phi_grid, spec.values
    periodic = abs(ag[-1] - ag[0] - 2 * np.pi) < 1e-9
    mask = _local_maxima(vals, periodic)
    idx = np.argwhere(mask)
    order = np.argsort(-vals[mask], kind="stable")
    idx = idx[order][:m_targets]

    n_alpha = ag.size - (1 if periodic else 0)
    da = ag[1] - ag[0]
    dphi = pg[1] - pg[0]
    alphas, phis, peaks = [], [], []
    for i, j in idx:
        if periodic or 0 < i < ag.size - 1:
            im, ip = (i - 1) % n_alpha, (i + 1) % n_alpha
            off_a = _parabola_offset(vals[im, j], vals[i, j], vals[ip, j])
        else:
            off_a = 0.0
        off_p = _parabola_offset(vals[i, j - 1], vals[i, j], vals[i, j + 1]) if 0 < j < pg.size - 1 else 0.0
        a = ag[i] + off_a * da
        p = float(np.clip(pg[j] + off_p * dphi, pg[0], pg[-1]))
        alphas.append(_wrap(a) if periodic else float(np.clip(a, ag[0], ag[-1])))
        phis.append(p)
        peaks.append(vals[i, j])
    found = len(alphas)
    return DoaEstimate(
        np.array(alphas, dtype=float),
        np.array(phis, dtype=float),
        np.array(peaks, dtype=float),
        int(m_targets),
        degraded=found < m_targets,
        flags={"maxima_found": int(mask.sum()), "floored": spec.floored},
    )


def polish_peak(ns, alpha, phi, convention, k, grid, ranges, step, tol=1e-7, max_iter=60):
    """Iterative 3x3 quadratic zoom on the spectrum denominator.

    A full 2D quadratic is fitted to the denominator on a 3x3 stencil; the
    centre moves to the vertex (clamped to one stencil step) and the step
    shrinks until it drops below ``tol`` radians.
    """
    offs = np.array([-1.0, 0.0, 1.0])
    ga, gp = np.meshgrid(offs, offs, indexing="ij")
    ga, gp = ga.ravel(), gp.ravel()
    design = np.column_stack([np.ones(9), ga, gp, ga * ga, ga * gp, gp * gp])
    convention = AngleConvention.parse(convention)
    h = float(step)
    a0, p0 = alpha, phi
    for _ in range(max_iter):
        if h < tol:
            break
        pts_a = a0 + h * ga
        pts_p = np.clip(p0 + h * gp, ranges.phi_min, ranges.phi_max)
        u, v = convention.direction_cosines(pts_a, pts_p)
        a_mat = np.exp(1j * k * (np.outer(grid.rx, u) + np.outer(grid.ry, v)))
        d = _denominator(ns, a_mat)
        c = np.linalg.lstsq(design, d, rcond=None)[0]
        hess = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
        if np.all(np.linalg.eigvalsh(hess) > 0):
            step_vec = np.clip(-np.linalg.solve(hess, c[1:3]), -1.0, 1.0)
        else:
            best = int(np.argmin(d))
            step_vec = np.array([ga[best], gp[best]])
        a0, p0 = ranges.clip(a0 + h * step_vec[0], p0 + h * step_vec[1])
        h *= 0.5 if np.max(np.abs(step_vec)) > 0.5 else 0.25
    return a0, p0


def estimate(field, m_targets, ranges=None, convention=None, k=None, mode="complement",
             refine=True, rcond=1e-12):
    """Run the full estimator on sampled field data.

    ``convention`` and ``k`` default to ``field.meta`` entries when present.
    """
    ranges = ranges or ScanRanges()
    convention = AngleConvention.parse(convention or field.meta.get("convention", "A"))
    if k is None:
        if "k" not in field.meta:
            raise ValueError("wavenumber k must be given")
        k = field.meta["k"]
    cov = assemble_k(field)
    ns = noise_subspace(cov, m_targets, mode, rcond)
    spec = scan(ns, ranges, convention, k, field.grid)
    est = find_peaks(spec, m_targets, ranges)
    if not refine or est.count == 0:
        return est
    step = max(ranges.alpha_step, ranges.phi_step)
    alphas, phis, peaks = [], [], []
    for a, p in zip(est.alpha, est.phi):
        a2, p2 = polish_peak(ns, a, p, convention, k, field.grid, ranges, step)
        alphas.append(a2)
        phis.append(p2)
        peaks.append(spectrum_value(ns, a2, p2, convention, k, field.grid))
    order = np.argsort(-np.array(peaks), kind="stable")
    floored = est.flags.get("floored", False) or bool(np.max(peaks) >= 0.5 / DENOMINATOR_FLOOR)
    flags = dict(est.flags, floored=floored, degenerate_subspace=ns.degenerate, mode=mode)
    return DoaEstimate(
        np.array(alphas)[order], np.array(phis)[order], np.array(peaks)[order],
        est.m_requested, est.degraded, flags,
    )


def write_spectrum_csv(spec, path):
    """Row-major export, azimuth outer."""
    lines = ["alpha_deg,phi_deg,p_music"]
    ad, pd = np.degrees(spec.alpha_grid), np.degrees(spec.phi_grid)
    for i, a in enumerate(ad):
        for j, p in enumerate(pd):
            lines.append(f"{a:.12g},{p:.12g},{spec.values[i, j]:.12g}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def estimate_to_json(est):
    return json.dumps(
        [{k: float(f"{v:.12g}") for k, v in r.items()} for r in est.to_records()], indent=2
    )
