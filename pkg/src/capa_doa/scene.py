"""Targets, steering responses and synthetic fields on the aperture."""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericError
from .geometry import AngleConvention, Aperture

ETA0 = 120 * np.pi  # free-space impedance, ohm

SNAPSHOT_MODES = ("deterministic-given", "random-qpsk", "random-gaussian")


class FarFieldWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Target:
    """A far-field source given by position or by angles (radians).

    ``power`` scales randomly drawn snapshots; ``snapshots`` holds explicit
    complex amplitudes for the ``deterministic-given`` mode.
    """

    position: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    phi: Optional[float] = None
    power: float = 1.0
    snapshot_mode: str = "random-qpsk"
    snapshots: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.position is None and (self.alpha is None or self.phi is None):
            raise ValueError("target needs either a position or both angles")
        if self.position is not None:
            q = np.asarray(self.position, dtype=float)
            if q.shape != (3,) or not np.all(np.isfinite(q)):
                raise ValueError(f"target position must be a finite 3-vector, got {self.position!r}")
            object.__setattr__(self, "position", q)
        else:
            if not (np.isfinite(self.alpha) and np.isfinite(self.phi)):
                raise ValueError("target angles must be finite")
        if self.snapshot_mode not in SNAPSHOT_MODES:
            raise ValueError(f"unknown snapshot mode {self.snapshot_mode!r}")
        if self.power < 0:
            raise ValueError("target power must be non-negative")

    def angles(self, convention):
        if self.position is not None and (self.alpha is None or self.phi is None):
            a, p, _ = angles_from_position(self.position, convention)
            return a, p
        return float(self.alpha), float(self.phi)


@dataclass
class Scene:
    aperture: Aperture
    targets: list
    wavelength: float
    noise_density: float
    snapshots: int
    convention: AngleConvention = AngleConvention.A
    rng_seed: int = 0
    field_model: str = "planar"

    def __post_init__(self):
        self.convention = AngleConvention.parse(self.convention)
        if len(self.targets) < 1:
            raise ValueError("a scene needs at least one target")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not self.noise_density >= 0:
            raise ValueError("noise density must be non-negative")
        if int(self.snapshots) != self.snapshots or self.snapshots < 1:
            raise ValueError("number of snapshots must be a positive integer")
        self.snapshots = int(self.snapshots)
        if self.snapshots < len(self.targets):
            raise ValueError(
                f"need at least as many snapshots as targets ({self.snapshots} < {len(self.targets)})"
            )
        if self.field_model not in ("planar", "spherical"):
            raise ValueError(f"unknown field model {self.field_model!r}")
        self.check_far_field()

    @property
    def k(self):
        return 2 * np.pi / self.wavelength

    @property
    def m(self):
        return len(self.targets)

    def angles(self):
        """Arrays ``(alpha, phi)`` of target angles in radians."""
        pairs = [t.angles(self.convention) for t in self.targets]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def fraunhofer_distance(self):
        return 2 * self.aperture.diagonal ** 2 / self.wavelength

    def check_far_field(self):
        limit = self.fraunhofer_distance()
        for i, t in enumerate(self.targets):
            if t.position is not None and np.linalg.norm(t.position) <= limit:
                warnings.warn(
                    f"target {i} at {np.linalg.norm(t.position):.3g} m is inside the "
                    f"Fraunhofer distance {limit:.3g} m",
                    FarFieldWarning,
                    stacklevel=3,
                )

    def with_updates(self, **changes):
        kw = dict(
            aperture=self.aperture,
            targets=self.targets,
            wavelength=self.wavelength,
            noise_density=self.noise_density,
            snapshots=self.snapshots,
            convention=self.convention,
            rng_seed=self.rng_seed,
            field_model=self.field_model,
        )
        kw.update(changes)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FarFieldWarning)
            return Scene(**kw)


@dataclass(frozen=True)
class FieldSamples:
    """Field at the quadrature points: ``values[p, t]`` for point p, snapshot t."""

    values: np.ndarray
    grid: object
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.size:
            raise ValueError(
                f"field has shape {self.values.shape}, grid has {self.grid.size} points"
            )
        if not np.all(np.isfinite(self.values)):
            raise NumericError("field samples contain non-finite values")

    @property
    def snapshots(self):
        return self.values.shape[1]


def angles_from_position(q, convention=AngleConvention.A):
    """Azimuth/elevation of the unit direction ``q / |q|``.

    Returns ``(alpha, phi, degenerate)``. ``degenerate`` is True when the
    azimuth is undefined (the direction is the pole of the convention); the
    azimuth is then reported as 0.
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not n > 0:
        raise ValueError("position must be non-zero")
    x, y, z = q / n
    convention = AngleConvention.parse(convention)
    if convention is AngleConvention.A:
        phi = float(np.arcsin(np.clip(z, -1.0, 1.0)))
        degenerate = np.hypot(x, y) < 1e-12
        alpha = 0.0 if degenerate else float(np.arctan2(y, x))
    else:
        phi = float(np.arcsin(np.clip(y, -1.0, 1.0)))
        degenerate = np.hypot(x, z) < 1e-12
        alpha = 0.0 if degenerate else float(np.arctan2(x, z))
    if alpha <= -np.pi:
        alpha += 2 * np.pi
    return alpha, phi, bool(degenerate)


def steering(r, alpha, phi, convention, k):
    """Plane-wave response ``exp(j k (r_x u + r_y v))`` at a point with r_z = 0."""
    r = np.asarray(r, dtype=float)
    u, v = AngleConvention.parse(convention).direction_cosines(alpha, phi)
    return np.exp(1j * k * (r[..., 0] * u + r[..., 1] * v))


def steering_vector(grid, alpha, phi, convention, k):
    u, v = AngleConvention.parse(convention).direction_cosines(alpha, phi)
    return np.exp(1j * k * (grid.rx * u + grid.ry * v))


def steering_matrix(grid, alphas, phis, convention, k):
    """Columns are steering vectors for each (alpha, phi) pair."""
    u, v = AngleConvention.parse(convention).direction_cosines(np.atleast_1d(alphas), np.atleast_1d(phis))
    return np.exp(1j * k * (np.outer(grid.rx, u) + np.outer(grid.ry, v)))


def spherical_field(grid, q, k):
    """Exact point-source response normalised to unit amplitude and zero phase at the origin.

    Compare with the plane-wave model ``exp(j k r . q/|q|)``.
    """
    q = np.asarray(q, dtype=float)
    dist = np.linalg.norm(grid.points - q, axis=1)
    qn = np.linalg.norm(q)
    return (qn / dist) * np.exp(-1j * k * (dist - qn))


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def synthesize_snapshots(scene, mode=None, rng=None):
    """Complex amplitudes ``s[m, t]``.

    With ``mode=None`` each target uses its own ``snapshot_mode``. Random
    modes draw unit-average-power symbols scaled by ``sqrt(power)``; each
    target gets an independent stream so the sources are non-coherent.
    """
    rng = _rng(scene.rng_seed if rng is None else rng)
    streams = rng.spawn(scene.m)
    t = scene.snapshots
    out = np.empty((scene.m, t), dtype=complex)
    for i, (target, g) in enumerate(zip(scene.targets, streams)):
        tmode = mode or target.snapshot_mode
        if tmode not in SNAPSHOT_MODES:
            raise ValueError(f"unknown snapshot mode {tmode!r}")
        if tmode == "deterministic-given":
            if target.snapshots is None:
                raise ValueError(f"target {i} has no snapshot values for deterministic-given mode")
            s = np.asarray(target.snapshots, dtype=complex)
            if s.shape != (t,):
                raise ValueError(f"target {i} provides {s.shape} snapshots, scene needs {t}")
            out[i] = s
        elif tmode == "random-qpsk":
            out[i] = np.sqrt(target.power) * np.exp(1j * (np.pi / 4 + np.pi / 2 * g.integers(0, 4, t)))
        else:
            out[i] = np.sqrt(target.power / 2) * (g.standard_normal(t) + 1j * g.standard_normal(t))
    return out


def synthesize_noise(grid, noise_density, snapshots, rng):
    """White aperture noise sampled at the quadrature points.

    Point p gets variance ``noise_density / omega[p]``, so the quadrature
    projection ``sum_p omega_p f_p* n_p`` of any sampled function has
    variance ``noise_density * sum_p omega_p |f_p|^2``, the same as the
    delta-correlated continuous process integrated against f.
    """
    rng = _rng(rng)
    scale = np.sqrt(noise_density / (2 * grid.omega))[:, None]
    shape = (grid.size, snapshots)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_field(scene, snapshots, grid, rng=None, noise=True):
    """Noisy field ``E = A s + n`` at the grid points.

    ``rng`` defaults to a generator seeded from ``scene.rng_seed`` with an
    extra key so the noise stream differs from the snapshot stream.
    """
    s = np.asarray(snapshots)
    if s.ndim != 2 or s.shape[0] != scene.m:
        raise ValueError(f"snapshot matrix has shape {s.shape}, scene has {scene.m} targets")
    if grid.aperture != scene.aperture:
        raise ValueError("grid aperture does not match the scene aperture")
    if scene.field_model == "spherical":
        cols = []
        for i, t in enumerate(scene.targets):
            if t.position is None:
                raise ValueError(f"spherical field model needs a position for target {i}")
            cols.append(spherical_field(grid, t.position, scene.k))
        a = np.stack(cols, axis=1)
    else:
        alpha, phi = scene.angles()
        a = steering_matrix(grid, alpha, phi, scene.convention, scene.k)
    values = a @ s
    if noise and scene.noise_density > 0:
        if rng is None:
            rng = np.random.default_rng([scene.rng_seed, 1])
        values = values + synthesize_noise(grid, scene.noise_density, s.shape[1], rng)
    meta = {"noise_density": scene.noise_density, "k": scene.k, "convention": scene.convention.value}
    return FieldSamples(values, grid, meta)
