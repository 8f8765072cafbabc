import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capa_doa.capa_music import (
    DENOMINATOR_FLOOR,
    MusicSpectrum,
    NoiseSubspace,
    ScanRanges,
    assemble_k,
    estimate,
    estimate_to_json,
    find_peaks,
    noise_subspace,
    scan,
    spectrum_denominator,
    spectrum_value,
    write_spectrum_csv,
)
from capa_doa.errors import NumericError
from capa_doa.geometry import AngleConvention, Aperture
from capa_doa.quadrature import make_grid
from capa_doa.scene import (
    FieldSamples,
    Scene,
    Target,
    steering_vector,
    synthesize_field,
    synthesize_snapshots,
)

from conftest import PAPER_POSITION, TWO_POSITIONS
from oracles import k_matrix_dense

K_WAVE = 20 * np.pi


def make_field(targets, noise=0.0, snapshots=16, order=30, seed=0, mode="random-gaussian", aperture=None):
    ap = aperture or Aperture(1.0, 1.0)
    tg = [Target(position=q, snapshot_mode=mode) if np.size(q) == 3 else Target(alpha=q[0], phi=q[1], snapshot_mode=mode)
          for q in targets]
    scene = Scene(ap, tg, 0.1, noise, snapshots, rng_seed=seed)
    grid = make_grid(order, ap)
    return scene, synthesize_field(scene, synthesize_snapshots(scene), grid)


def test_unit_snapshots_give_constant_k(unit_aperture):
    t = 8
    grid = make_grid(30, unit_aperture)
    a = steering_vector(grid, 0.4, 0.7, "A", K_WAVE)
    fld = FieldSamples(np.outer(a, np.ones(t)), grid)
    cov = assemble_k(fld)
    np.testing.assert_allclose(cov.k_matrix, np.full((t, t), 1 / t), atol=1e-14)
    assert np.linalg.eigvalsh(cov.k_matrix)[-1] == pytest.approx(1.0, abs=1e-13)


def test_single_snapshot_k_is_field_energy(unit_aperture):
    grid = make_grid(6, unit_aperture)
    e = np.random.default_rng(0).standard_normal((grid.size, 1)) + 0j
    cov = assemble_k(FieldSamples(e, grid))
    assert cov.k_matrix.shape == (1, 1)
    assert cov.k_matrix[0, 0].real == pytest.approx(np.sum(grid.omega * np.abs(e[:, 0]) ** 2), rel=1e-14)


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_noiseless_rank_equals_target_count(m, seed):
    angles = [(0.3, 0.4), (2.0, 0.9), (-1.2, 0.2)][:m]
    _, fld = make_field(angles, snapshots=8 + 4 * seed, seed=seed)
    vals = np.linalg.eigvalsh(assemble_k(fld).k_matrix)[::-1]
    assert np.sum(vals > 1e-6 * vals[0]) == m
    if m < vals.size:
        assert vals[m] <= 1e-8 * vals[0]


@given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=2**32 - 1))
def test_k_is_hermitian_psd(t, seed):
    grid = make_grid(5, Aperture(0.7, 1.3))
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((grid.size, t)) + 1j * rng.standard_normal((grid.size, t))
    km = assemble_k(FieldSamples(e, grid)).k_matrix
    np.testing.assert_array_equal(km, km.conj().T)
    vals = np.linalg.eigvalsh(km)
    assert vals[0] >= -1e-9 * vals[-1]


def test_k_matches_dense_oracle_single_order():
    # smaller than the acceptance run; same Richardson-extrapolated midpoint oracle
    scene, fld = make_field(TWO_POSITIONS, snapshots=4, order=30, mode="random-qpsk")
    s = synthesize_snapshots(scene)
    alpha, phi = scene.angles()
    cos = list(zip(*AngleConvention.A.direction_cosines(alpha, phi)))
    ref = k_matrix_dense(scene.aperture, scene.k, cos, s, n=200)
    got = assemble_k(fld).k_matrix
    assert np.max(np.abs(got - ref)) <= 2e-5 * np.max(np.abs(ref))


def test_assemble_rejects_nonfinite(unit_aperture):
    grid = make_grid(2, unit_aperture)

    class Bad:
        values = np.array([[np.inf], [0], [0], [0]], dtype=complex)

    Bad.grid = grid
    with pytest.raises(NumericError):
        assemble_k(Bad)


def _ratio(ns, grid, alpha, phi):
    a = steering_vector(grid, alpha, phi, "A", K_WAVE)
    out = 0.0
    for u in ns.u_bar.T:
        num = abs(a.conj() @ (grid.omega * u))
        den = np.linalg.norm(a) * np.linalg.norm(grid.omega * u)
        assert num <= 1e-6 * den or num == den == 0.0
        out = max(out, num / den if den else 0.0)
    return out


def test_noiseless_noise_columns_are_orthogonal():
    scene, fld = make_field([PAPER_POSITION])
    ns = noise_subspace(assemble_k(fld), 1, "truncated")
    (a,), (p,) = scene.angles()
    _ratio(ns, fld.grid, a, p)
    assert ns.degenerate


@pytest.mark.parametrize("positions, tol", [((PAPER_POSITION,), 1e-6), (TWO_POSITIONS, 1e-5)])
def test_weak_noise_columns_are_orthogonal(positions, tol):
    scene, fld = make_field(positions, noise=1e-14)
    ns = noise_subspace(assemble_k(fld), scene.m, "truncated")
    assert not ns.degenerate
    for a, p in zip(*scene.angles()):
        assert _ratio(ns, fld.grid, a, p) <= tol


def test_noise_subspace_dimensions():
    _, fld = make_field([(0.3, 0.4), (1.0, 0.2)], noise=1e-3, snapshots=3)
    ns = noise_subspace(assemble_k(fld), 2)
    assert ns.u_bar.shape == (fld.grid.size, 1)
    assert ns.signal.shape == (fld.grid.size, 2)
    with pytest.raises(ValueError):
        noise_subspace(assemble_k(fld), 3)
    with pytest.raises(ValueError):
        noise_subspace(assemble_k(fld), 0)
    with pytest.raises(ValueError):
        noise_subspace(assemble_k(fld), 1, mode="full")


def test_signal_basis_is_omega_orthonormal():
    _, fld = make_field([(0.3, 0.4), (1.0, 0.2)], noise=1e-3)
    ns = noise_subspace(assemble_k(fld), 2)
    gram = ns.signal.conj().T @ (fld.grid.omega[:, None] * ns.signal)
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-10)


@pytest.mark.parametrize("mode", ["complement", "truncated"])
def test_spectrum_peaks_at_truth(mode):
    scene, fld = make_field([PAPER_POSITION], noise=1e-12 if mode == "truncated" else 0.0)
    ns = noise_subspace(assemble_k(fld), 1, mode)
    (a,), (p,) = scene.angles()
    at = spectrum_value(ns, a, p, "A", K_WAVE, fld.grid)
    off = spectrum_value(ns, a + np.radians(5), p, "A", K_WAVE, fld.grid)
    assert at >= 1e6 * off


def test_zero_columns_hit_the_floor(unit_aperture):
    grid = make_grid(4, unit_aperture)
    ns = NoiseSubspace(np.zeros((grid.size, 3)), grid.omega, np.zeros((grid.size, 1)), np.ones(4),
                       "truncated", degenerate=True)
    assert spectrum_value(ns, 0.1, 0.2, "A", K_WAVE, grid) == pytest.approx(1 / DENOMINATOR_FLOOR)


def test_truncated_denominator_is_sum_of_projections():
    _, fld = make_field([(0.3, 0.4), (1.0, 0.2)], noise=1e-3)
    ns = noise_subspace(assemble_k(fld), 2, "truncated")
    a = steering_vector(fld.grid, 0.5, 0.6, "A", K_WAVE)
    direct = sum(abs(u.conj() @ (fld.grid.omega * a)) ** 2 for u in ns.u_bar.T)
    got = spectrum_denominator(ns, 0.5, 0.6, "A", K_WAVE, fld.grid)
    assert got == pytest.approx(direct, rel=1e-12)


def test_complement_denominator_is_residual_energy():
    _, fld = make_field([(0.3, 0.4), (1.0, 0.2)], noise=1e-3)
    ns = noise_subspace(assemble_k(fld), 2)
    om = fld.grid.omega
    a = steering_vector(fld.grid, 0.5, 0.6, "A", K_WAVE)
    proj = ns.signal.conj().T @ (om * a)
    direct = np.sum(om * np.abs(a) ** 2) - np.sum(np.abs(proj) ** 2)
    got = spectrum_denominator(ns, 0.5, 0.6, "A", K_WAVE, fld.grid)
    assert got == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("mode", ["complement", "truncated"])
def test_scan_matches_pointwise_evaluation(mode):
    _, fld = make_field([(0.3, 0.4), (1.0, 0.2)], noise=1e-3, order=12)
    ns = noise_subspace(assemble_k(fld), 2, mode)
    ranges = ScanRanges(-1.0, 2.0, 7, 0.0, 1.2, 5)
    spec = scan(ns, ranges, "A", K_WAVE, fld.grid)
    assert spec.values.shape == (7, 5)
    assert np.all(np.diff(spec.alpha_grid) > 0) and np.all(np.diff(spec.phi_grid) > 0)
    assert spec.alpha_grid[0] == -1.0 and spec.alpha_grid[-1] == 2.0
    for i, a in enumerate(spec.alpha_grid):
        for j, p in enumerate(spec.phi_grid):
            assert spec.values[i, j] == pytest.approx(spectrum_value(ns, a, p, "A", K_WAVE, fld.grid), rel=1e-8)


def test_scan_peak_within_one_cell():
    scene, fld = make_field([PAPER_POSITION])
    ns = noise_subspace(assemble_k(fld), 1)
    spec = scan(ns, ScanRanges(), "A", K_WAVE, fld.grid)
    i, j = np.unravel_index(np.argmax(spec.values), spec.values.shape)
    (a,), (p,) = scene.angles()
    assert abs(spec.alpha_grid[i] - a) <= np.radians(1.0)
    assert abs(spec.phi_grid[j] - p) <= np.radians(1.0)


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_alpha=1),
        dict(alpha_min=1.0, alpha_max=0.0),
        dict(alpha_min=-4.0, alpha_max=4.0),
        dict(phi_max=2.0),
    ],
)
def test_invalid_ranges(kw):
    with pytest.raises(ValueError):
        ScanRanges(**kw)


def test_default_ranges():
    r = ScanRanges.from_degrees()
    assert (r.n_alpha, r.n_phi) == (361, 91)
    assert r.periodic_alpha
    assert np.degrees(r.alpha_step) == pytest.approx(1.0)


def test_find_peaks_refines_single_target():
    scene, fld = make_field([PAPER_POSITION])
    ns = noise_subspace(assemble_k(fld), 1)
    est = find_peaks(scan(ns, ScanRanges(), "A", K_WAVE, fld.grid), 1)
    (a,), (p,) = scene.angles()
    assert not est.degraded
    assert abs(np.degrees(est.alpha[0] - a)) <= 0.1
    assert abs(np.degrees(est.phi[0] - p)) <= 0.1


def test_find_peaks_two_targets():
    scene, fld = make_field(TWO_POSITIONS)
    ns = noise_subspace(assemble_k(fld), 2)
    est = find_peaks(scan(ns, ScanRanges(), "A", K_WAVE, fld.grid), 2)
    assert est.count == 2 and not est.degraded
    got = sorted(zip(np.degrees(est.alpha), np.degrees(est.phi)))
    want = sorted(zip(*np.degrees(scene.angles())))
    np.testing.assert_allclose(got, want, atol=0.5)
    assert est.peak[0] >= est.peak[1]


def test_constant_spectrum_is_degraded():
    spec = MusicSpectrum(np.linspace(0, 1, 5), np.linspace(0, 1, 4), np.ones((5, 4)), AngleConvention.A)
    est = find_peaks(spec, 2)
    assert est.degraded and est.count == 0


def test_find_peaks_keeps_largest_and_flags_shortfall():
    vals = np.zeros((7, 7))
    vals[2, 2], vals[5, 4] = 3.0, 5.0
    spec = MusicSpectrum(np.linspace(0, 1, 7), np.linspace(0, 1, 7), vals, AngleConvention.A)
    est = find_peaks(spec, 1)
    assert est.count == 1 and est.peak[0] == 5.0
    est3 = find_peaks(spec, 3)
    assert est3.count == 2 and est3.degraded


def test_periodic_azimuth_wraps():
    scene, fld = make_field([(np.radians(179.6), 0.5)])
    est = estimate(fld, 1)
    assert abs(np.angle(np.exp(1j * (est.alpha[0] - np.radians(179.6))))) < np.radians(0.01)
    assert -np.pi < est.alpha[0] <= np.pi


def test_estimate_single_target_noiseless():
    scene, fld = make_field([PAPER_POSITION])
    est = estimate(fld, 1)
    (a,), (p,) = scene.angles()
    assert abs(np.degrees(est.alpha[0] - a)) < 1e-4
    assert abs(np.degrees(est.phi[0] - p)) < 1e-4
    assert est.flags["degenerate_subspace"]


def test_estimate_is_deterministic():
    _, fld = make_field(TWO_POSITIONS, noise=1e-3)
    e1, e2 = estimate(fld, 2), estimate(fld, 2)
    np.testing.assert_array_equal(e1.alpha, e2.alpha)
    np.testing.assert_array_equal(e1.phi, e2.phi)


@pytest.mark.parametrize("c", [2.0, 0.5, -4.0, -1.0])
def test_scale_invariance_exact(c):
    # power-of-two scalings are exact in floating point, so every stage scales exactly
    _, fld = make_field(TWO_POSITIONS, noise=1e-3)
    base = estimate(fld, 2)
    scaled = estimate(FieldSamples(fld.values * c, fld.grid, fld.meta), 2)
    np.testing.assert_array_equal(base.alpha, scaled.alpha)
    np.testing.assert_array_equal(base.phi, scaled.phi)


@pytest.mark.parametrize("c", [2j, 3.0, 0.7 - 1.3j])
def test_scale_invariance_rounding(c):
    _, fld = make_field(TWO_POSITIONS, noise=1e-3)
    base = estimate(fld, 2)
    scaled = estimate(FieldSamples(fld.values * c, fld.grid, fld.meta), 2)
    np.testing.assert_allclose(scaled.alpha, base.alpha, atol=1e-9)
    np.testing.assert_allclose(scaled.phi, base.phi, atol=1e-9)


def test_estimate_needs_wavenumber(unit_aperture):
    grid = make_grid(4, unit_aperture)
    fld = FieldSamples(np.ones((grid.size, 3), dtype=complex), grid)
    with pytest.raises(ValueError):
        estimate(fld, 1)


def test_exports(tmp_path):
    spec = MusicSpectrum(np.radians([0.0, 1.0]), np.radians([10.0, 20.0, 30.0]), np.arange(6.0).reshape(2, 3),
                         AngleConvention.A)
    path = tmp_path / "s.csv"
    write_spectrum_csv(spec, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "alpha_deg,phi_deg,p_music"
    assert lines[1:4] == ["0,10,0", "0,20,1", "0,30,2"]
    assert lines[4] == "1,10,3"
    est = find_peaks(spec, 1)
    rec = json.loads(estimate_to_json(est))
    assert set(rec[0]) == {"alpha_deg", "phi_deg", "peak"}


@pytest.mark.parametrize("positions", [(PAPER_POSITION,), TWO_POSITIONS])
def test_noise_keeps_signal_span(positions):
    from scipy.linalg import subspace_angles

    ap = Aperture(1.0, 1.0)
    scene = Scene(ap, [Target(position=q, snapshot_mode="random-gaussian") for q in positions], 0.1, 1e-3, 64, rng_seed=3)
    grid = make_grid(30, ap)
    s = synthesize_snapshots(scene)
    clean = assemble_k(synthesize_field(scene, s, grid, noise=False)).k_matrix
    noisy_k = assemble_k(synthesize_field(scene, s, grid, rng=np.random.default_rng(9))).k_matrix
    m = scene.m
    v0 = np.linalg.eigh(clean)[1][:, -m:]
    v1 = np.linalg.eigh(noisy_k)[1][:, -m:]
    assert np.linalg.eigvalsh(noisy_k)[0] > np.linalg.eigvalsh(clean)[0]
    assert np.degrees(np.max(subspace_angles(v0, v1))) < 5.0
