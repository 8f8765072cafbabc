"""YAML scenario and experiment configuration.

A scenario file describes the physical setup::

    aperture: {lx: 1.0, ly: 1.0}
    wavelength: 0.1
    noise_density: 1.0e-3
    snapshots: 64
    convention: A
    quadrature_order: 30
    rng_seed: 0
    targets:
      - position_m: [-100, 80, 300]
      - angles_deg: [14.04, 4.16]
        snapshot_mode: deterministic-given
        values: [[1, 0], [0, 1], ...]

An experiment file adds a sweep, trial counts and estimator settings and
points at a scenario (path relative to the experiment file, or inline).
A bare scenario file is accepted wherever an experiment is expected.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from ..capa_music import SUBSPACE_MODES, ScanRanges
from ..errors import ConfigError
from ..geometry import Aperture
from ..scene import Scene, Target

SWEEP_VARIABLES = ("noise_density", "snapshots", "wavelength", "aperture_scale", "quadrature_order")
FAILURE_POLICIES = ("exclude", "penalize")

_SCENE_KEYS = {
    "aperture", "wavelength", "noise_density", "snapshots", "convention", "rng_seed",
    "quadrature_order", "targets", "field_model", "spda",
}
_EXPERIMENT_KEYS = {
    "scenario", "sweep", "trials", "estimator", "master_seed", "output", "failure_policy",
    "surface", "benchmark",
}


@dataclass(frozen=True)
class EstimatorSettings:
    ranges: ScanRanges = field(default_factory=ScanRanges)
    m_targets: Optional[int] = None
    mode: str = "complement"
    refine: bool = True


@dataclass
class ExperimentConfig:
    scene: Scene
    quadrature_order: int = 30
    sweep_variable: Optional[str] = None
    sweep_values: list = field(default_factory=list)
    trials: int = 100
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    master_seed: int = 0
    output: Optional[str] = None
    failure_policy: str = "exclude"
    dipole_length: Optional[float] = None
    surface: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def m_targets(self):
        return self.estimator.m_targets or self.scene.m

    def config_hash(self):
        return config_hash(self.raw)


def config_hash(raw):
    """Short SHA-256 of the canonical JSON form of a resolved configuration."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _read_yaml(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def _require(d, key, where):
    if key not in d:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return d[key]


def _number(value, name, cast=float):
    try:
        out = cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if cast is int and out != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return out


def _target(d, i, snapshots):
    where = f"targets[{i}]"
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    kw = {
        "power": _number(d.get("power", 1.0), f"{where}.power"),
        "snapshot_mode": d.get("snapshot_mode", "random-qpsk"),
    }
    if "position_m" in d:
        kw["position"] = np.asarray(d["position_m"], dtype=float)
    elif "angles_deg" in d:
        ang = d["angles_deg"]
        if not isinstance(ang, (list, tuple)) or len(ang) != 2:
            raise ConfigError(f"{where}.angles_deg must be [alpha, phi]")
        kw["alpha"], kw["phi"] = np.radians(float(ang[0])), np.radians(float(ang[1]))
    else:
        raise ConfigError(f"{where}: give either position_m or angles_deg")
    if "values" in d:
        vals = np.asarray(d["values"], dtype=float)
        if vals.ndim != 2 or vals.shape[1] != 2:
            raise ConfigError(f"{where}.values must be a list of [re, im] pairs")
        kw["snapshots"] = vals[:, 0] + 1j * vals[:, 1]
    try:
        return Target(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def scene_from_dict(d):
    """Build ``(scene, quadrature_order, dipole_length)`` from a scenario mapping."""
    unknown = set(d) - _SCENE_KEYS
    if unknown:
        raise ConfigError(f"scenario: unknown keys {sorted(unknown)}")
    ap = _require(d, "aperture", "scenario")
    if not isinstance(ap, dict):
        raise ConfigError("scenario.aperture must be a mapping with lx and ly")
    targets = _require(d, "targets", "scenario")
    if not isinstance(targets, list) or not targets:
        raise ConfigError("scenario.targets must be a non-empty list")
    snapshots = _number(_require(d, "snapshots", "scenario"), "snapshots", int)
    order = _number(d.get("quadrature_order", 30), "quadrature_order", int)
    if not 1 <= order <= 256:
        raise ConfigError("quadrature_order must lie in [1, 256]")
    try:
        scene = Scene(
            aperture=Aperture(_number(_require(ap, "lx", "aperture"), "lx"), _number(_require(ap, "ly", "aperture"), "ly")),
            targets=[_target(t, i, snapshots) for i, t in enumerate(targets)],
            wavelength=_number(_require(d, "wavelength", "scenario"), "wavelength"),
            noise_density=_number(_require(d, "noise_density", "scenario"), "noise_density"),
            snapshots=snapshots,
            convention=d.get("convention", "A"),
            rng_seed=_number(d.get("rng_seed", 0), "rng_seed", int),
            field_model=d.get("field_model", "planar"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"scenario: {exc}") from None
    spda = d.get("spda") or {}
    dipole = spda.get("dipole_length") if isinstance(spda, dict) else None
    return scene, order, None if dipole is None else _number(dipole, "spda.dipole_length")


def _ranges(est):
    step = _number(est.get("step_deg", 1.0), "estimator.step_deg")
    a = est.get("alpha_range_deg", [-180.0, 180.0])
    p = est.get("phi_range_deg", [0.0, 90.0])
    try:
        return ScanRanges.from_degrees(tuple(map(float, a)), tuple(map(float, p)), step)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"estimator ranges: {exc}") from None


def experiment_from_dict(d, base_dir="."):
    """Resolve an experiment (or bare scenario) mapping."""
    if "scenario" not in d:
        scen_raw, exp = d, {}
    else:
        unknown = set(d) - _EXPERIMENT_KEYS
        if unknown:
            raise ConfigError(f"experiment: unknown keys {sorted(unknown)}")
        exp = d
        scen_raw = d["scenario"]
        if isinstance(scen_raw, str):
            scen_raw = _read_yaml(os.path.join(base_dir, scen_raw))
        if not isinstance(scen_raw, dict):
            raise ConfigError("experiment.scenario must be a path or a mapping")
    scene, order, dipole = scene_from_dict(scen_raw)

    sweep = exp.get("sweep") or {}
    var, values = sweep.get("variable"), list(sweep.get("values", []))
    if var is not None:
        if var not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep.variable must be one of {SWEEP_VARIABLES}, got {var!r}")
        if not values:
            raise ConfigError("sweep.values must be a non-empty list")
        values = [_number(v, "sweep value") for v in values]
        if any(v < 0 or (v == 0 and var != "noise_density") for v in values):
            raise ConfigError("sweep values must be positive")
    trials = _number(exp.get("trials", 100), "trials", int)
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    est = exp.get("estimator") or {}
    mode = est.get("subspace", "complement")
    if mode not in SUBSPACE_MODES:
        raise ConfigError(f"estimator.subspace must be one of {SUBSPACE_MODES}")
    m_targets = est.get("m_targets")
    if m_targets is not None:
        m_targets = _number(m_targets, "estimator.m_targets", int)
        if not 1 <= m_targets < scene.snapshots:
            raise ConfigError("estimator.m_targets must lie in [1, snapshots)")
    policy = exp.get("failure_policy", "exclude")
    if policy not in FAILURE_POLICIES:
        raise ConfigError(f"failure_policy must be one of {FAILURE_POLICIES}")
    master = _number(exp.get("master_seed", scene.rng_seed), "master_seed", int)
    if master < 0:
        raise ConfigError("master_seed must be non-negative")

    resolved = dict(exp)
    resolved["scenario"] = scen_raw
    return ExperimentConfig(
        scene=scene,
        quadrature_order=order,
        sweep_variable=var,
        sweep_values=values,
        trials=trials,
        estimator=EstimatorSettings(_ranges(est), m_targets, mode, bool(est.get("refine", True))),
        master_seed=master,
        output=exp.get("output"),
        failure_policy=policy,
        dipole_length=dipole,
        surface=dict(exp.get("surface") or {}),
        benchmark=dict(exp.get("benchmark") or {}),
        raw=resolved,
    )


def load_config(path):
    data = _read_yaml(path)
    return experiment_from_dict(data, os.path.dirname(os.path.abspath(path)))
