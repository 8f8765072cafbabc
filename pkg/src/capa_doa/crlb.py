"""Fisher information and Cramer-Rao bounds for azimuth/elevation on a continuous aperture.

Parameters are ordered ``(alpha_1..alpha_M, phi_1..phi_M)``. The noise is a
circular complex white field with spectral density ``noise_var``, so every
Fisher entry is ``(2 / noise_var) Re <dmu_i, dmu_j>`` with the inner product
evaluated by the aperture quadrature.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericError, SingularMatrixError, UnidentifiableError
from .geometry import AngleConvention, Aperture
from .numerics import inv_spd, solve_spd
from .scene import steering_matrix

_SINGULAR_COS = 1e-12


@dataclass(frozen=True)
class CrlbValues:
    alpha: np.ndarray  # rad^2 per target
    phi: np.ndarray


@dataclass(frozen=True)
class FimKnown:
    j_theta: np.ndarray
    correlation: np.ndarray
    noise_var: float

    @property
    def m(self):
        return self.j_theta.shape[0] // 2

    @property
    def j_aa(self):
        return self.j_theta[: self.m, : self.m]

    @property
    def j_ap(self):
        return self.j_theta[: self.m, self.m :]

    @property
    def j_pp(self):
        return self.j_theta[self.m :, self.m :]


@dataclass(frozen=True)
class FimUnknown:
    """Fisher blocks with the snapshots as nuisance parameters.

    The per-snapshot amplitude block ``j_ss`` does not depend on t because
    it only involves the steering functions; ``j_theta_s[t]`` does.
    Nuisance parameters at snapshot t are ordered ``(Re s_1..M, Im s_1..M)``.
    """

    j_theta: np.ndarray
    j_ss: np.ndarray
    j_theta_s: np.ndarray  # [T, 2M, 2M]
    schur: np.ndarray
    noise_var: float

    @property
    def m(self):
        return self.j_theta.shape[0] // 2


@dataclass(frozen=True)
class SpdaConfig:
    """Half-wavelength grid of short dipoles covering the same aperture."""

    dipole_length: float
    wavelength: float
    aperture: Aperture

    def __post_init__(self):
        if not 0 < self.dipole_length < self.wavelength / 10:
            raise ValueError("dipole length must be positive and below a tenth of the wavelength")
        if self.p < 2 or self.q < 2:
            raise ValueError(f"array needs at least 2x2 elements, got {self.p}x{self.q}")

    @property
    def spacing(self):
        return self.wavelength / 2

    @property
    def p(self):
        return int(np.floor(self.aperture.lx / self.spacing + 1e-9))

    @property
    def q(self):
        return int(np.floor(self.aperture.ly / self.spacing + 1e-9))


def snapshot_gram(snapshots):
    """``C[i, j] = sum_t conj(s_i(t)) s_j(t)`` for an ``[M, T]`` snapshot matrix."""
    s = np.atleast_2d(np.asarray(snapshots, dtype=complex))
    return s.conj() @ s.T


def snapshot_correlation(snapshots):
    """Real part of the snapshot Gram matrix."""
    return snapshot_gram(snapshots).real


def _check_angles(alphas, phis):
    alphas, phis = np.atleast_1d(np.asarray(alphas, dtype=float)), np.atleast_1d(np.asarray(phis, dtype=float))
    if alphas.size == 0:
        raise ValueError("at least one target is required")
    if alphas.shape != phis.shape or alphas.ndim != 1:
        raise ValueError("alpha and phi must be 1D arrays of equal length")
    return alphas, phis


def steering_derivatives(grid, alphas, phis, convention, k):
    """Steering matrix ``A`` [K^2, M] and derivative matrix ``D`` [K^2, 2M].

    Column b of ``D`` is the derivative of the steering vector of its target
    with respect to parameter b: ``j k (r_x du/dtheta + r_y dv/dtheta) a``.
    """
    convention = AngleConvention.parse(convention)
    a = steering_matrix(grid, alphas, phis, convention, k)
    du_a, dv_a, du_p, dv_p = convention.partials(alphas, phis)
    g_a = np.outer(grid.rx, du_a) + np.outer(grid.ry, dv_a)
    g_p = np.outer(grid.rx, du_p) + np.outer(grid.ry, dv_p)
    d = 1j * k * np.hstack([g_a * a, g_p * a])
    return a, d


def _gram(x, y, omega):
    return x.conj().T @ (omega[:, None] * y)


def fim_known(alphas, phis, correlation, noise_var, grid, convention, k):
    """Fisher information for the angles when the snapshots are known.

    ``correlation`` is the M x M snapshot Gram ``sum_t conj(s_i) s_j``; a
    real symmetric matrix is accepted and used as is.
    """
    alphas, phis = _check_angles(alphas, phis)
    m = alphas.size
    c = np.asarray(correlation)
    if c.shape != (m, m):
        raise ValueError(f"correlation must be {m}x{m}, got {c.shape}")
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    _, d = steering_derivatives(grid, alphas, phis, convention, k)
    g = _gram(d, d, grid.omega)
    tgt = np.concatenate([np.arange(m), np.arange(m)])
    j = (2.0 / noise_var) * np.real(c[np.ix_(tgt, tgt)] * g)
    return FimKnown(0.5 * (j + j.T), c, float(noise_var))


def _diag_inverse(j, label):
    try:
        inv = inv_spd(j)
    except SingularMatrixError as exc:
        raise UnidentifiableError(f"{label} is singular (pivot {exc.pivot}); the angles are not identifiable") from exc
    m = j.shape[0] // 2
    d = np.diag(inv)
    return CrlbValues(d[:m].copy(), d[m:].copy())


def crlb_known(fim):
    return _diag_inverse(fim.j_theta, "Fisher information")


def fim_unknown(alphas, phis, snapshots, noise_var, grid, convention, k):
    """Fisher information with the snapshot amplitudes as nuisance parameters."""
    alphas, phis = _check_angles(alphas, phis)
    m = alphas.size
    s = np.atleast_2d(np.asarray(snapshots, dtype=complex))
    if s.shape[0] != m or s.shape[1] < 1:
        raise ValueError(f"snapshots must have shape [{m}, T>=1], got {s.shape}")
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    a, d = steering_derivatives(grid, alphas, phis, convention, k)
    om = grid.omega
    g_dd, g_da, g_aa = _gram(d, d, om), _gram(d, a, om), _gram(a, a, om)
    scale = 2.0 / noise_var
    tgt = np.concatenate([np.arange(m), np.arange(m)])

    c = snapshot_gram(s)
    j_theta = scale * np.real(c[np.ix_(tgt, tgt)] * g_dd)
    j_theta = 0.5 * (j_theta + j_theta.T)

    j_ss = scale * np.block([[g_aa.real, -g_aa.imag], [g_aa.imag, g_aa.real]])
    j_ss = 0.5 * (j_ss + j_ss.T)

    # rows: theta_b of target tgt[b], scaled by conj(s_tgt[b](t))
    w = s.conj()[tgt].T[:, :, None] * g_da[None, :, :]  # [T, 2M, M]
    j_ts = scale * np.concatenate([w.real, -w.imag], axis=2)

    try:
        x = solve_spd(j_ss, j_ts.reshape(-1, 2 * m).T)  # J_ss^-1 J_s theta, stacked over t
    except SingularMatrixError as exc:
        raise NumericError(
            "snapshot Fisher block is singular at snapshot t = 0 (the block is the same for every t); "
            "two targets share a steering function",
            where=0,
        ) from exc
    x = x.T.reshape(j_ts.shape)  # [T, 2M, 2M], rows = theta
    correction = np.einsum("tbi,tci->bc", j_ts, x)
    schur = j_theta - correction
    schur = 0.5 * (schur + schur.T)
    return FimUnknown(j_theta, j_ss, j_ts, schur, float(noise_var))


def crlb_unknown(fim):
    return _diag_inverse(fim.schur, "Schur-complement Fisher information")


def crlb_unknown_woodbury(fim):
    """Same bound through the matrix inversion lemma on the full Fisher matrix.

    With ``V = [J_theta_s(1) .. J_theta_s(T)]`` and ``Z = blkdiag(J_ss)``,
    ``T^-1 = J^-1 + J^-1 V (Z - V^T J^-1 V)^-1 V^T J^-1``. Builds a
    2MT-sized system, so it is meant for cross-checks at small T.
    """
    j = fim.j_theta
    t, n, _ = fim.j_theta_s.shape
    v = np.concatenate(list(fim.j_theta_s), axis=1)  # [2M, 2M T]
    z = np.kron(np.eye(t), fim.j_ss)
    try:
        j_inv = inv_spd(j)
        inner = inv_spd(z - v.T @ j_inv @ v)
    except SingularMatrixError as exc:
        raise UnidentifiableError("Fisher information is singular") from exc
    full = j_inv + j_inv @ v @ inner @ v.T @ j_inv
    d = np.diag(full)
    m = n // 2
    return CrlbValues(d[:m].copy(), d[m:].copy())


def crlb_capa_closed_form(alpha, phi, aperture, k, r_s, noise_var):
    """Single-target bounds on a centred rectangular aperture, convention B angles."""
    ca, sa, cp, sp = np.cos(alpha), np.sin(alpha), np.cos(phi), np.sin(phi)
    if abs(ca) < _SINGULAR_COS or abs(cp) < _SINGULAR_COS:
        raise UnidentifiableError(f"angles ({alpha}, {phi}) make the Fisher information singular")
    if not (r_s > 0 and noise_var > 0):
        raise ValueError("signal energy and noise variance must be positive")
    lx, ly = aperture.lx, aperture.ly
    pre = 6 * noise_var / (k * k * r_s)
    crlb_a = pre * (sa**2 * sp**2 / (lx * ly**3 * ca**2 * cp**4) + 1 / (lx**3 * ly * ca**2 * cp**2))
    crlb_p = pre / (lx * ly**3 * cp**2)
    return float(crlb_a), float(crlb_p)


def fim_capa_closed_form(alpha, phi, aperture, k, r_s, noise_var):
    """The three single-target Fisher entries ``(J_aa, J_ap, J_pp)``, convention B."""
    ca, sa, cp, sp = np.cos(alpha), np.sin(alpha), np.cos(phi), np.sin(phi)
    lx, ly = aperture.lx, aperture.ly
    s = 2 * k * k * r_s / noise_var
    j_aa = s * lx**3 * ly / 12 * ca**2 * cp**2
    j_ap = -s * lx**3 * ly / 12 * sa * ca * sp * cp
    j_pp = s * (lx**3 * ly / 12 * sa**2 * sp**2 + lx * ly**3 / 12 * cp**2)
    return float(j_aa), float(j_ap), float(j_pp)


def crlb_spda(alpha, phi, spda, r_s, noise_density, element_noise_var=None):
    """Single-target bounds for the short-dipole array, convention B angles.

    The per-element noise variance is ``dipole_length * noise_density`` unless
    ``element_noise_var`` fixes it directly.
    """
    ca, sa, cp, sp = np.cos(alpha), np.sin(alpha), np.cos(phi), np.sin(phi)
    if abs(ca) < _SINGULAR_COS or abs(cp) < _SINGULAR_COS:
        raise UnidentifiableError(f"angles ({alpha}, {phi}) make the Fisher information singular")
    lr = spda.dipole_length
    p, q = spda.p, spda.q
    var_nu = lr * noise_density if element_noise_var is None else float(element_noise_var)
    if var_nu <= 0:
        raise ValueError("element noise variance must be positive")
    gamma = r_s * np.pi**2 * lr**2 * p * q / (12 * var_nu)
    crlb_a = (sa**2 * sp**2 / (ca**2 * cp**4 * (q * q - 1)) + 1 / (ca**2 * cp**2 * (p * p - 1))) / gamma
    crlb_p = 1 / (cp**2 * (q * q - 1)) / gamma
    return float(crlb_a), float(crlb_p)


def fim_spda_elementwise(alpha, phi, spda, r_s, noise_var):
    """Single-target array Fisher matrix summed element by element, convention B.

    Elements sit on a centred ``P x Q`` half-wavelength grid; each receives
    ``dipole_length * a * s`` plus noise of variance ``noise_var``.
    """
    k = 2 * np.pi / spda.wavelength
    d = spda.spacing
    xs = (np.arange(spda.p) - (spda.p - 1) / 2) * d
    ys = (np.arange(spda.q) - (spda.q - 1) / 2) * d
    rx, ry = np.repeat(xs, spda.q), np.tile(ys, spda.p)
    du_a, dv_a, du_p, dv_p = AngleConvention.B.partials(alpha, phi)
    g = np.stack([rx * du_a + ry * dv_a, rx * du_p + ry * dv_p])
    return (2 * spda.dipole_length**2 * r_s * k * k / noise_var) * (g @ g.T)


@dataclass
class CrlbReport:
    alpha: np.ndarray
    phi: np.ndarray
    known: Optional[CrlbValues] = None
    unknown: Optional[CrlbValues] = None
    flags: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        def block(vals):
            if vals is None:
                return None
            return {
                "alpha_rad2": [float(f"{x:.12g}") for x in vals.alpha],
                "phi_rad2": [float(f"{x:.12g}") for x in vals.phi],
                "alpha_deg2": [float(f"{x:.12g}") for x in np.degrees(np.degrees(vals.alpha))],
                "phi_deg2": [float(f"{x:.12g}") for x in np.degrees(np.degrees(vals.phi))],
            }

        return {
            "targets": [
                {"alpha_deg": float(f"{np.degrees(a):.12g}"), "phi_deg": float(f"{np.degrees(p):.12g}")}
                for a, p in zip(self.alpha, self.phi)
            ],
            "crlb_known": block(self.known),
            "crlb_unknown": block(self.unknown),
            "flags": self.flags,
            "meta": self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def crlb_report(alphas, phis, snapshots, noise_var, grid, convention, k):
    """Known- and unknown-snapshot bounds for one scenario; singular cases are flagged."""
    alphas, phis = _check_angles(alphas, phis)
    report = CrlbReport(alphas, phis)
    try:
        report.known = crlb_known(fim_known(alphas, phis, snapshot_gram(snapshots), noise_var, grid, convention, k))
        report.flags["known_singular"] = False
    except UnidentifiableError:
        report.flags["known_singular"] = True
    try:
        report.unknown = crlb_unknown(fim_unknown(alphas, phis, snapshots, noise_var, grid, convention, k))
        report.flags["unknown_singular"] = False
    except (UnidentifiableError, NumericError):
        report.flags["unknown_singular"] = True
    return report


def linearized_error(alphas, phis, snapshots, noise, noise_var, grid, convention, k, fim=None):
    """First-order angle error caused by a noise realisation.

    ``noise`` holds the sampled noise ``[K^2, T]``. The result is
    ``T^-1 g`` where ``g`` is the efficient score (the angle score with the
    snapshot-amplitude score projected out). Its covariance over noise
    draws equals the unknown-snapshot bound exactly, which makes it a
    control variate for Monte Carlo error estimates.
    """
    alphas, phis = _check_angles(alphas, phis)
    m = alphas.size
    s = np.atleast_2d(np.asarray(snapshots, dtype=complex))
    fim = fim or fim_unknown(alphas, phis, s, noise_var, grid, convention, k)
    a, d = steering_derivatives(grid, alphas, phis, convention, k)
    wn = grid.omega[:, None] * noise
    scale = 2.0 / noise_var
    tgt = np.concatenate([np.arange(m), np.arange(m)])
    proj_d = d.conj().T @ wn  # [2M, T]
    score_theta = scale * np.real(np.sum(s.conj()[tgt] * proj_d, axis=1))
    proj_a = a.conj().T @ wn  # [M, T]
    score_s = scale * np.vstack([proj_a.real, proj_a.imag])  # [2M, T]
    x = solve_spd(fim.j_ss, score_s)
    score_eff = score_theta - np.einsum("tbi,it->b", fim.j_theta_s, x)
    err = solve_spd(fim.schur, score_eff)
    return err[:m], err[m:]
