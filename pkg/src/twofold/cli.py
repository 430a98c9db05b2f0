"""Command-line entry point: runs the experiments and writes CSV artifacts.

Every run writes the requested CSV files plus a manifest.txt recording the
resolved parameters, seed, versions and wall time; rerunning with the same
manifest values reproduces the outputs bit for bit.  Presets freeze the
parameter sets of the reference figures (fig1a, fig1b, fig4a, fig4b,
fig5a, fig5b, fig6); --scale switches between the quick desk runs (ci) and
the full-size ones (paper).

Exit codes: 0 success, 1 runtime failure, 2 usage, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .core import FieldSpec, Perturbation, TwoFoldError, TwoFoldParams
from .desync import ControlParams, desync_experiment, verify_twofold_conditions
from .ensemble import EnsembleConfig, histogram, ks_distance, run_ensemble
from .integrate import (
    EventKind,
    IntegratorConfig,
    NoiseSpec,
    integrate_deterministic,
    integrate_sde,
)
from .phase import (
    find_periodic_orbit,
    isochron_mesh,
    return_time_table,
    theoretical_phase_pdf,
)
from .normalform import psi_point_on_ray
from .polar import DegenerateOriginError, to_polar

_TWO_PI = 2.0 * math.pi

PRESETS: dict[str, dict] = {
    # Monte-Carlo histograms of the phase after passage through the two-fold
    "fig1a": {"vm": -0.5, "vp": -2.5, "perturbation": "linear-damping",
              "x0": "0,1,1", "T": 15.0, "eps": 1e-3},
    "fig1b": {"vm": -0.5, "vp": -2.5, "perturbation": "cubic",
              "x0": "0,1,1", "T": 40.0, "eps": 1e-3},
    # single sample paths
    "fig4a": {"vm": -0.5, "vp": -2.5, "perturbation": "linear-damping",
              "x0": "0,1,1", "t0": 0.0, "t_end": 15.0, "eps": 1e-3},
    "fig4b": {"vm": -0.5, "vp": -2.5, "perturbation": "cubic",
              "x0": "0,1,1", "t0": 0.0, "t_end": 40.0, "eps": 1e-3},
    # return-time functions
    "fig5a": {"vm": -0.5, "vp": -2.5, "perturbation": "linear-damping",
              "T": 15.0, "t_max": 26.0},
    "fig5b": {"vm": -0.5, "vp": -2.5, "perturbation": "cubic",
              "T": 40.0, "t_max": 48.0},
    # oscillator desynchronisation
    "fig6": {"a1": -0.2, "a2": -1.0, "a3": 0.2, "a4": 1.0,
             "t1": -5.0, "t2": 2.5, "eps": 1e-3, "n_osc": 5,
             "t_start": -15.0, "t_end_osc": 15.0, "x0_planar": "1,0"},
}

_PERT = {
    "none": Perturbation.none,
    "linear-damping": Perturbation.linear_damping,
    "cubic": Perturbation.cubic,
}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_manifest(outdir, subcommand, resolved: dict, wall: float):
    lines = [f"subcommand={subcommand}"]
    for k in sorted(resolved):
        lines.append(f"{k}={_fmt(resolved[k])}")
    lines.append(f"twofold_version={__version__}")
    lines.append(f"numpy_version={np.__version__}")
    lines.append(
        "python_version="
        f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
    )
    lines.append(f"wall_time_s={wall:.3f}")
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _triple(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated values, got {text!r}")
    return np.array(parts)


def _pair(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated values, got {text!r}")
    return np.array(parts)


def _apply_preset(args):
    if getattr(args, "preset", None):
        preset = PRESETS.get(args.preset)
        if preset is None:
            raise ValueError(f"unknown preset {args.preset!r}")
        for key, val in preset.items():
            if getattr(args, key, None) is None:
                setattr(args, key, val)


def _apply_config_file(args):
    """key=value lines override parsed flags (comments with #)."""
    if not getattr(args, "config", None):
        return
    with open(args.config) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            key = key.strip().replace("-", "_")
            val = val.strip()
            if not hasattr(args, key):
                raise ValueError(f"config file sets unknown key {key!r}")
            for cast in (int, float):
                try:
                    setattr(args, key, cast(val))
                    break
                except ValueError:
                    continue
            else:
                setattr(args, key, val)


def _scale_defaults(args):
    """Resolve n/dt from --scale unless given explicitly."""
    scale = getattr(args, "scale", None) or "ci"
    if scale not in ("ci", "paper"):
        raise ValueError(f"unknown scale {scale!r}")
    if getattr(args, "n", None) is None:
        args.n = 2000 if scale == "ci" else 10000
    if getattr(args, "dt", None) is None:
        args.dt = 1e-4 if scale == "ci" else 1e-5
    return scale


def _field_spec(args) -> FieldSpec:
    params = TwoFoldParams(args.vm, args.vp)
    pert_name = args.perturbation or "none"
    if pert_name not in _PERT:
        raise ValueError(f"unknown perturbation {pert_name!r}")
    return FieldSpec.normal_form(params, _PERT[pert_name]())


# --- subcommands -----------------------------------------------------------

def cmd_eigen(args, outdir):
    params = TwoFoldParams(args.vm, args.vp)
    rows = [
        ("mu", params.mu),
        ("gamma", params.gamma),
        ("lambda", params.lambda_weak),
        ("alpha", params.alpha),
        ("beta", params.beta),
    ]
    _write_csv(os.path.join(outdir, "eigen.csv"), ["name", "value"], rows)
    for name, val in rows:
        print(f"{name},{_fmt(val)}")
    return {"vm": args.vm, "vp": args.vp}


def cmd_simulate(args, outdir):
    spec = _field_spec(args)
    x0 = _triple(args.x0)
    cfg = IntegratorConfig(dt=args.dt)
    if args.eps > 0:
        noise = NoiseSpec(epsilon=args.eps, seed=args.seed)
        traj = integrate_sde(spec, x0, args.t0, args.t_end, cfg, noise)
    else:
        traj = integrate_deterministic(spec, x0, args.t0, args.t_end, cfg)
    stride = max(1, len(traj.times) // args.max_rows)
    rows = [
        (traj.times[i], traj.states[i, 0], traj.states[i, 1], traj.states[i, 2])
        for i in range(0, len(traj.times), stride)
    ]
    _write_csv(os.path.join(outdir, "trajectory.csv"), ["t", "x", "y", "z"], rows)
    _write_csv(
        os.path.join(outdir, "events.csv"),
        ["kind", "t", "x", "y", "z"],
        [(e.kind.value, e.t, e.X[0], e.X[1], e.X[2]) for e in traj.events],
    )
    print(f"samples={len(traj.times)} events={len(traj.events)}")
    return {
        "vm": args.vm, "vp": args.vp, "perturbation": args.perturbation or "none",
        "x0": args.x0, "t0": args.t0, "t_end": args.t_end, "dt": args.dt,
        "eps": args.eps, "seed": args.seed, "max_rows": args.max_rows,
    }


def cmd_ensemble(args, outdir):
    scale = _scale_defaults(args)
    spec = _field_spec(args)
    x0 = _triple(args.x0)
    theory = theoretical_phase_pdf(spec, x0, args.T, n=args.depth)
    cfg = EnsembleConfig(
        n_samples=args.n,
        X0=x0,
        T=args.T,
        noise=NoiseSpec(epsilon=args.eps, seed=args.seed),
        integrator=IntegratorConfig(dt=args.dt),
    )
    result = run_ensemble(spec, cfg, theory.tau, n_threads=args.threads)
    _write_csv(
        os.path.join(outdir, "ensemble_samples.csv"),
        ["index", "s_T", "phi_T"],
        [(s.sample_index, s.s_T, s.phi_T) for s in result.samples],
    )
    counts, edges = histogram(result.samples, args.bins)
    _write_csv(
        os.path.join(outdir, "histogram.csv"),
        ["bin_left", "bin_right", "count"],
        [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))],
    )
    n_ok = len(result.samples)
    centers = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    emp = counts / (n_ok * widths)
    theo = theory.density_phi.pdf(centers)
    _write_csv(
        os.path.join(outdir, "ensemble_vs_theory.csv"),
        ["phi", "empirical_density", "theory_density"],
        list(zip(centers, emp, theo)),
    )
    ks = ks_distance(result.samples, theory.density_phi)
    summary = [
        ("ks_distance", ks),
        ("t0", theory.t0),
        ("tau", theory.tau),
        ("depth", theory.depth),
        ("n_samples", n_ok),
        ("n_failures", len(result.failures)),
    ]
    _write_csv(os.path.join(outdir, "summary.csv"), ["name", "value"], summary)
    print(f"ks_distance={ks:.6f} t0={theory.t0:.6f} tau={theory.tau:.9f} "
          f"depth={theory.depth} failures={len(result.failures)}")
    return {
        "vm": args.vm, "vp": args.vp, "perturbation": args.perturbation or "none",
        "x0": args.x0, "T": args.T, "eps": args.eps, "seed": args.seed,
        "n": args.n, "dt": args.dt, "scale": scale, "bins": args.bins,
        "depth": args.depth if args.depth is not None else "auto",
        "threads": args.threads,
    }


def cmd_pdf(args, outdir):
    spec = _field_spec(args)
    x0 = _triple(args.x0)
    theory = theoretical_phase_pdf(spec, x0, args.T, n=args.depth, a_min=args.a_min)
    _write_csv(
        os.path.join(outdir, "density_sT.csv"),
        ["s", "p"],
        list(zip(theory.density_sT.s, theory.density_sT.p)),
    )
    _write_csv(
        os.path.join(outdir, "density_phi.csv"),
        ["phi", "p"],
        list(zip(theory.density_phi.s, theory.density_phi.p)),
    )
    print(f"t0={theory.t0:.6f} tau={theory.tau:.9f} depth={theory.depth}")
    return {
        "vm": args.vm, "vp": args.vp, "perturbation": args.perturbation or "none",
        "x0": args.x0, "T": args.T, "a_min": args.a_min,
        "depth": args.depth if args.depth is not None else "auto",
    }


def cmd_return_time(args, outdir):
    spec = _field_spec(args)
    cfg = IntegratorConfig(dt=args.dt, event_tol=1e-13)
    table = return_time_table(
        spec, args.a_min, cfg, n_seeds=args.n_seeds, t_max=args.t_max
    )
    _write_csv(
        os.path.join(outdir, "fknots.csv"),
        ["a", "f"],
        list(zip(table.a_knots, table.f_values)),
    )
    if args.depth:
        a_grid = np.exp(
            np.linspace(
                math.log(table.a_knots[0]), math.log(table.a_knots[-1]), 400
            )
        )
        fn = a_grid.copy()
        for _ in range(args.depth):
            fn = table(fn)
        _write_csv(
            os.path.join(outdir, "fn.csv"),
            ["ln_a", f"f^{args.depth}"],
            list(zip(np.log(a_grid), fn)),
        )
    print(f"knots={len(table.a_knots)} small_slope={table.below_slope:.9f} "
          f"tail_offset={table.above_offset:.9f}")
    return {
        "vm": args.vm, "vp": args.vp, "perturbation": args.perturbation or "none",
        "a_min": args.a_min, "t_max": args.t_max, "n_seeds": args.n_seeds,
        "dt": args.dt, "depth": args.depth,
    }


def cmd_isochrons(args, outdir):
    spec = _field_spec(args)
    cfg = IntegratorConfig(dt=args.dt, event_tol=1e-13)
    orbit = find_periodic_orbit(spec, psi_point_on_ray(spec.params, 1.0), cfg)
    phases = [_TWO_PI * k / args.n_phases for k in range(args.n_phases)]
    lines = isochron_mesh(
        spec, orbit, args.n_orbits, phases, cfg, t_end=args.t_end
    )
    rows = []
    for pi, (phase, line) in enumerate(zip(phases, lines)):
        for j, pt in enumerate(line):
            rows.append((pi, phase, j, pt[0], pt[1], pt[2]))
    _write_csv(
        os.path.join(outdir, "isochrons.csv"),
        ["phase_index", "phase", "point_index", "x", "y", "z"],
        rows,
    )
    print(f"tau={orbit.tau:.9f} polylines={len(lines)}")
    return {
        "vm": args.vm, "vp": args.vp, "perturbation": args.perturbation or "none",
        "n_orbits": args.n_orbits, "n_phases": args.n_phases,
        "t_end": args.t_end, "dt": args.dt,
    }


def cmd_contours(args, outdir):
    params = TwoFoldParams(args.vm, args.vp)
    xs = np.linspace(args.xmin, args.xmax, args.nx)
    ys = np.linspace(args.ymin, args.ymax, args.ny)
    rows = []
    for xv in xs:
        for yv in ys:
            try:
                pt = to_polar(params, float(xv), float(yv))
                rows.append((xv, yv, pt.r, pt.theta))
            except DegenerateOriginError:
                rows.append((xv, yv, 0.0, float("nan")))
    _write_csv(
        os.path.join(outdir, "contours.csv"), ["x", "y", "r", "theta"], rows
    )
    print(f"grid={args.nx}x{args.ny}")
    return {
        "vm": args.vm, "vp": args.vp,
        "xmin": args.xmin, "xmax": args.xmax, "ymin": args.ymin,
        "ymax": args.ymax, "nx": args.nx, "ny": args.ny,
    }


def cmd_desync(args, outdir):
    ctrl = ControlParams(args.a1, args.a2, args.a3, args.a4, args.t1, args.t2)
    report = verify_twofold_conditions(ctrl)
    x0 = _pair(args.x0_planar)
    res = desync_experiment(
        ctrl,
        n_osc=args.n_osc,
        epsilon=args.eps,
        seed=args.seed,
        t_start=args.t_start,
        t_end=args.t_end_osc,
        X0=x0,
        dt=args.dt,
        n_threads=args.threads,
        record_paths=args.paths,
    )
    _write_csv(
        os.path.join(outdir, "desync_summary.csv"),
        ["oscillator", "phase_before", "phase_after"],
        [
            (i, res.phases_before[i], res.phases_after[i])
            for i in range(args.n_osc)
        ],
    )
    _write_csv(
        os.path.join(outdir, "desync_stats.csv"),
        ["name", "value"],
        [
            ("variance_before", res.variance_before),
            ("variance_after", res.variance_after),
            ("conditions_pass", int(report.all_pass)),
        ],
    )
    if args.paths:
        rows = []
        stride = max(1, len(res.path_times) // args.max_rows)
        for i, path in enumerate(res.paths):
            for j in range(0, len(res.path_times), stride):
                rows.append((i, res.path_times[j], path[j, 0], path[j, 1]))
        _write_csv(
            os.path.join(outdir, "desync_paths.csv"),
            ["oscillator", "t", "x", "y"],
            rows,
        )
    print(
        f"variance_before={res.variance_before:.6f} "
        f"variance_after={res.variance_after:.6f} "
        f"conditions_pass={report.all_pass}"
    )
    return {
        "a1": args.a1, "a2": args.a2, "a3": args.a3, "a4": args.a4,
        "t1": args.t1, "t2": args.t2, "eps": args.eps, "n_osc": args.n_osc,
        "t_start": args.t_start, "t_end": args.t_end_osc, "x0": args.x0_planar,
        "dt": args.dt, "seed": args.seed, "threads": args.threads,
        "paths": int(args.paths),
    }


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twofold",
        description="Two-fold singularity simulations and phase analytics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, preset=False):
        p.add_argument("--outdir", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=12345)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--config", default=None, help="key=value override file")
        if preset:
            p.add_argument("--preset", default=None, choices=sorted(PRESETS))

    def field_flags(p):
        p.add_argument("--vm", type=float, default=None, help="V- (< 0)")
        p.add_argument("--vp", type=float, default=None, help="V+ (< 0)")
        p.add_argument(
            "--perturbation", default=None,
            choices=sorted(_PERT), help="higher-order terms"
        )

    p = sub.add_parser("eigen", help="derived constants of the normal form")
    common(p)
    p.add_argument("--vm", type=float, required=True)
    p.add_argument("--vp", type=float, required=True)

    p = sub.add_parser("simulate", help="one deterministic or noisy trajectory")
    common(p, preset=True)
    field_flags(p)
    p.add_argument("--x0", default=None, help="initial state x,y,z")
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--eps", type=float, default=None, help="noise amplitude")
    p.add_argument("--scale", default=None, choices=("ci", "paper"))
    p.add_argument("--max-rows", dest="max_rows", type=int, default=20000)

    p = sub.add_parser("ensemble", help="Monte-Carlo phase histogram")
    common(p, preset=True)
    field_flags(p)
    p.add_argument("--x0", default=None)
    p.add_argument("--T", type=float, default=None, help="reference time")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--n", type=int, default=None, help="sample count")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--scale", default=None, choices=("ci", "paper"))
    p.add_argument("--bins", type=int, default=24)
    p.add_argument("--depth", type=int, default=None, help="push-forward depth")

    p = sub.add_parser("pdf", help="theoretical phase density")
    common(p)
    field_flags(p)
    p.add_argument("--x0", default="0,1,1")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--a-min", dest="a_min", type=float, default=1e-3)
    p.add_argument("--depth", type=int, default=None)

    p = sub.add_parser("return-time", help="tabulate the return-time map")
    common(p, preset=True)
    field_flags(p)
    p.add_argument("--a-min", dest="a_min", type=float, default=1e-3)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--n-seeds", dest="n_seeds", type=int, default=12)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--depth", type=int, default=10, help="also emit f^depth")
    p.add_argument("--T", type=float, default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("isochrons", help="constant-phase polylines")
    common(p)
    field_flags(p)
    p.add_argument("--n-orbits", dest="n_orbits", type=int, default=20)
    p.add_argument("--n-phases", dest="n_phases", type=int, default=5)
    p.add_argument("--t-end", dest="t_end", type=float, default=30.0)
    p.add_argument("--dt", type=float, default=1e-3)

    p = sub.add_parser("contours", help="grid samples of the polar chart")
    common(p)
    p.add_argument("--vm", type=float, required=True)
    p.add_argument("--vp", type=float, required=True)
    p.add_argument("--xmin", type=float, default=-1.0)
    p.add_argument("--xmax", type=float, default=1.0)
    p.add_argument("--ymin", type=float, default=-1.0)
    p.add_argument("--ymax", type=float, default=1.0)
    p.add_argument("--nx", type=int, default=101)
    p.add_argument("--ny", type=int, default=101)

    p = sub.add_parser("desync", help="oscillator desynchronisation run")
    common(p, preset=True)
    p.add_argument("--a1", type=float, default=None)
    p.add_argument("--a2", type=float, default=None)
    p.add_argument("--a3", type=float, default=None)
    p.add_argument("--a4", type=float, default=None)
    p.add_argument("--t1", type=float, default=None)
    p.add_argument("--t2", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--n-osc", dest="n_osc", type=int, default=None)
    p.add_argument("--t-start", dest="t_start", type=float, default=None)
    p.add_argument("--t-end", dest="t_end_osc", type=float, default=None)
    p.add_argument("--x0", dest="x0_planar", default=None, help="initial x,y")
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--paths", action="store_true", help="emit thinned paths")
    p.add_argument("--max-rows", dest="max_rows", type=int, default=20000)

    return parser


_HANDLERS = {
    "eigen": cmd_eigen,
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "pdf": cmd_pdf,
    "return-time": cmd_return_time,
    "isochrons": cmd_isochrons,
    "contours": cmd_contours,
    "desync": cmd_desync,
}

_FALLBACKS = {
    "vm": -0.5, "vp": -2.5, "x0": "0,1,1", "t0": 0.0, "t_end": 15.0,
    "dt": 1e-3, "eps": 0.0, "T": 15.0, "t_max": 30.0,
    "a1": -0.2, "a2": -1.0, "a3": 0.2, "a4": 1.0, "t1": -5.0, "t2": 2.5,
    "n_osc": 5, "t_start": -15.0, "t_end_osc": 15.0, "x0_planar": "1,0",
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_preset(args)
        _apply_config_file(args)
        for key, val in _FALLBACKS.items():
            if getattr(args, key, False) is None:
                setattr(args, key, val)
        outdir = args.outdir or os.environ.get("TWOFOLD_OUTDIR", ".")
        os.makedirs(outdir, exist_ok=True)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    start = time.perf_counter()
    try:
        resolved = _HANDLERS[args.cmd](args, outdir)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TwoFoldError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    resolved["seed"] = getattr(args, "seed", None)
    _write_manifest(outdir, args.cmd, resolved, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
