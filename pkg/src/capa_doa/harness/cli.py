"""Command-line front end.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical or
identifiability failures.
"""

import argparse
import logging
import sys

import numpy as np

from ..capa_music import estimate
from ..crlb import SpdaConfig, crlb_capa_closed_form, crlb_report, crlb_spda
from ..errors import ConfigError, NumericError
from ..geometry import Aperture
from ..quadrature import make_grid
from . import output
from .config import config_hash, load_config
from .experiments import (
    MseRow,
    loglog_slope,
    run_benchmark,
    run_crlb_surface,
    run_crlb_sweep,
    run_mse_sweep,
    run_spectrum,
    synthesize_trial,
    trial_rng,
)

log = logging.getLogger("capa_doa")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _load(args):
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.master_seed = args.seed
        cfg.scene = cfg.scene.with_updates(rng_seed=args.seed)
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        cfg.trials = args.trials
    cfg.raw = dict(cfg.raw, cli_overrides={"seed": args.seed, "trials": args.trials})
    return cfg


def _out(args, cfg, default):
    return args.out or (cfg.output if cfg is not None and cfg.output else default)


def _fmt(args, default="csv"):
    return args.format or default


def cmd_simulate(args):
    cfg = _load(args)
    scene = cfg.scene
    grid = make_grid(cfg.quadrature_order, scene.aperture)
    fld, s, _ = synthesize_trial(scene, grid, trial_rng(cfg.master_seed, 0, 0))
    out = _out(args, cfg, "field.csv")
    if _fmt(args) == "json":
        output.write_json(out, {
            "points": grid.points[:, :2],
            "omega": grid.omega,
            "snapshots": {"re": s.real, "im": s.imag},
            "field": {"re": fld.values.real, "im": fld.values.imag},
        })
    else:
        rows = []
        for p in range(grid.size):
            for t in range(fld.snapshots):
                v = fld.values[p, t]
                rows.append((p, grid.rx[p], grid.ry[p], grid.omega[p], t, v.real, v.imag))
        output.write_csv(out, ("point", "x_m", "y_m", "weight", "t", "re", "im"), rows)
    return out, cfg


def cmd_music(args):
    cfg = _load(args)
    scene = cfg.scene
    grid = make_grid(cfg.quadrature_order, scene.aperture)
    fld, _, _ = synthesize_trial(scene, grid, trial_rng(cfg.master_seed, 0, 0))
    est = estimate(fld, cfg.m_targets, cfg.estimator.ranges, scene.convention, scene.k,
                   cfg.estimator.mode, cfg.estimator.refine)
    out = _out(args, cfg, "estimate.json")
    if _fmt(args, "json") == "json":
        output.write_json(out, est.to_records())
    else:
        output.write_csv(out, ("alpha_deg", "phi_deg", "peak"),
                         [(r["alpha_deg"], r["phi_deg"], r["peak"]) for r in est.to_records()])
    if est.degraded:
        log.warning("only %d of %d peaks found", est.count, est.m_requested)
    return out, cfg


def _spda_block(cfg):
    """Single-target array baseline at the same physical direction, in convention B angles."""
    scene = cfg.scene
    if cfg.dipole_length is None or scene.m != 1:
        return None
    alpha, phi = scene.angles()
    u, v = scene.convention.direction_cosines(alpha[0], phi[0])
    pb = float(np.arcsin(v))
    ab = float(np.arcsin(np.clip(u / np.cos(pb), -1, 1)))
    spda = SpdaConfig(cfg.dipole_length, scene.wavelength, scene.aperture)
    r_s = float(scene.snapshots * scene.targets[0].power)
    capa = crlb_capa_closed_form(ab, pb, scene.aperture, scene.k, r_s, scene.noise_density)
    arr = crlb_spda(ab, pb, spda, r_s, scene.noise_density)
    return {
        "convention": "B",
        "alpha_deg": np.degrees(ab),
        "phi_deg": np.degrees(pb),
        "elements": [spda.p, spda.q],
        "capa_alpha_rad2": capa[0],
        "capa_phi_rad2": capa[1],
        "spda_alpha_rad2": arr[0],
        "spda_phi_rad2": arr[1],
    }


def cmd_crlb(args):
    cfg = _load(args)
    out = _out(args, cfg, "crlb.json" if not cfg.sweep_variable else "crlb.csv")
    if cfg.sweep_variable:
        rows = run_crlb_sweep(cfg)
        output.write_csv(out, ("param", "value", "crlb_alpha_rad2", "crlb_phi_rad2", "regime"), rows)
        return out, cfg
    scene = cfg.scene
    if scene.noise_density <= 0:
        raise ConfigError("bounds need a positive noise density")
    grid = make_grid(cfg.quadrature_order, scene.aperture)
    _, s, _ = synthesize_trial(scene, grid, trial_rng(cfg.master_seed, 0, 0))
    alpha, phi = scene.angles()
    rep = crlb_report(alpha, phi, s, scene.noise_density, grid, scene.convention, scene.k)
    spda = _spda_block(cfg)
    if spda:
        rep.meta["spda_baseline"] = spda
    if _fmt(args, "json") == "json":
        output.write_json(out, rep.to_dict())
    else:
        rows = []
        for name, vals in (("known", rep.known), ("unknown", rep.unknown)):
            for i in range(scene.m):
                a = vals.alpha[i] if vals else float("inf")
                p = vals.phi[i] if vals else float("inf")
                rows.append((i, name, a, p))
        output.write_csv(out, ("target", "regime", "crlb_alpha_rad2", "crlb_phi_rad2"), rows)
    return out, cfg


def _axis(spec, default):
    lo, hi, n = spec if spec is not None else default
    return np.radians(np.linspace(float(lo), float(hi), int(n)))


def cmd_crlb_surface(args):
    if args.config:
        cfg = _load(args)
        scene = cfg.scene
        ap, lam, var = scene.aperture, scene.wavelength, scene.noise_density
        r_s = float(scene.snapshots * scene.targets[0].power)
        surf = cfg.surface
        order = cfg.quadrature_order
    else:
        cfg = None
        ap, lam, var, r_s, surf, order = Aperture(1.0, 1.0), 0.1, 1e-3, 1.0, {}, 30
    ag = _axis(surf.get("alpha_deg"), (-89.5, 89.5, 180))
    pg = _axis(surf.get("phi_deg"), (0.0, 89.9, 90))
    method = surf.get("method", "closed-form")
    conv = surf.get("convention", "B")
    res = run_crlb_surface(ap, lam, r_s, var, ag, pg, method, conv, order)
    out = _out(args, None, "crlb_surface.csv")
    rows = []
    for i, a in enumerate(ag):
        for j, p in enumerate(pg):
            rows.append((np.degrees(a), np.degrees(p), res.log_alpha[i, j], res.log_phi[i, j]))
    output.write_csv(out, ("alpha_deg", "phi_deg", "log10_crlb_alpha", "log10_crlb_phi"), rows)
    return out, cfg


def cmd_sweep(args):
    cfg = _load(args)
    rows = run_mse_sweep(cfg, control_variate=args.control_variate)
    out = _out(args, cfg, "sweep.csv")
    param = cfg.sweep_variable or "none"
    if _fmt(args) == "json":
        output.write_json(out, {"param": param, "rows": [dict(zip(MseRow.COLUMNS, r.as_tuple())) for r in rows]})
    else:
        output.write_csv(out, ("param",) + MseRow.COLUMNS, [(param,) + r.as_tuple() for r in rows])
    return out, cfg


def cmd_spectrum(args):
    cfg = _load(args)
    res = run_spectrum(cfg)
    out = _out(args, cfg, "spectrum.csv")
    spec = res.spectrum
    rows = []
    ad, pd = np.degrees(spec.alpha_grid), np.degrees(spec.phi_grid)
    for i, a in enumerate(ad):
        for j, p in enumerate(pd):
            rows.append((a, p, spec.values[i, j]))
    output.write_csv(out, ("alpha_deg", "phi_deg", "p_music"), rows)
    output.write_json(f"{out}.estimate.json", res.estimate.to_records())
    output.write_csv(f"{out}.widths.csv", ("aperture_scale", "alpha_width_deg", "phi_width_deg"), res.widths)
    return out, cfg


def cmd_bench(args):
    cfg = _load(args) if args.config else None
    b = cfg.benchmark if cfg is not None else {}
    quick = args.quick
    rows = run_benchmark(
        tuple(b.get("snapshots", (8, 16) if quick else (16, 32, 64))),
        tuple(b.get("orders", (8, 16) if quick else (10, 20, 30))),
        tuple(b.get("scan_sizes", (500, 1000) if quick else (1000, 2000, 4000))),
        seed=cfg.master_seed if cfg is not None else (args.seed or 0),
        repeat=1 if quick else 3,
    )
    out = _out(args, cfg, "bench.csv")
    # timings are not reproducible, so they go to a sidecar
    output.write_csv(out, ("stage", "T", "K", "n_dirs"), [r[:4] for r in rows])
    output.write_csv(f"{out}.timings.csv", ("stage", "T", "K", "n_dirs", "seconds"), rows)
    scans = [r for r in rows if r[0] == "scan"]
    if len(scans) > 1:
        log.info("scan time slope vs directions: %.2f", loglog_slope([r[3] for r in scans], [r[4] for r in scans]))
    return out, cfg


COMMANDS = {
    "simulate": cmd_simulate,
    "music": cmd_music,
    "crlb": cmd_crlb,
    "crlb-surface": cmd_crlb_surface,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="capa-doa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="scenario or experiment YAML")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output path")
        p.add_argument("--trials", type=int, help="override trials per sweep point")
        p.add_argument("--format", choices=("csv", "json"))
        if name == "sweep":
            p.add_argument("--control-variate", action="store_true",
                           help="also report linearized-error adjusted MSE")
        if name == "bench":
            p.add_argument("--quick", action="store_true", help="small sizes for a smoke run")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        out, cfg = COMMANDS[args.command](args)
        if cfg is not None:
            chash, seed = cfg.config_hash(), cfg.master_seed
        else:
            chash, seed = config_hash({"command": args.command, "defaults": True}), args.seed or 0
        output.write_meta(out, args.command, chash, seed)
        print(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
