"""Command-line front end.

Usage::

    python -m mlpurcell <command> [--config FILE] [--output PATH] [options]
    python -m mlpurcell validate FILE

Every run writes its data (CSV with 12 significant digits, or JSON) and a
``<output>.meta.json`` sidecar holding the parameters, derived quantities,
truncations and tool version. Outputs contain no timestamps so identical
configurations give byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata

import numpy as np

from . import config as cfgmod
from . import reduced, spectra
from .dissipators import jc_channels, standard_channels
from .dynamics import PurcellFit, PurcellScan, exciton_observables, generator, ground_growth, initial_state, propagate
from .errors import ConfigError, MLPurcellError, NumericalError, UnsupportedConfigurationError
from .models import DimerParams, JCParams, build_dimer, build_jc

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULT_SWEEPS = {
    "jc-spectrum": ("g_c", 0.0, 30.0, 61),
    "dimer-spectrum": ("g_c", 0.0, 100.0, 21),
    "reduced-compare": ("g_c", 0.0, 100.0, 21),
    "fit-purcell": ("g_c", 0.0, 3.0, 7),
    "sweep-deloc": ("zeta", 0.05, 1.0, 20),
}
DEFAULT_G_VALUES = (50.0, 100.0, 267.1)


@dataclass
class RunConfig:
    command: str
    params: object
    sweep: tuple | None = None
    output: str | None = None
    fmt: str = "csv"
    jobs: int = 1
    window: tuple = (5.0, None)
    duration: float | None = None
    dt: float = 0.25
    g_values: tuple = DEFAULT_G_VALUES
    vib_modes: str = "local"
    com_levels: int | None = None
    notes: list = field(default_factory=list)

    @property
    def grid(self):
        if self.sweep is None:
            return None
        _, start, stop, steps = self.sweep
        return np.linspace(start, stop, steps)

    @property
    def sweep_var(self):
        return self.sweep[0] if self.sweep else None


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# -- config assembly ----------------------------------------------------------

def build_run(args):
    """Merge the config file and command-line flags into a :class:`RunConfig`."""
    cfg = cfgmod.read_config(args.config) if args.config else cfgmod.parse_text("")
    if cfg.errors:
        d = cfg.errors[0]
        raise ConfigError(d.message, d.line)
    for w in cfg.warnings:
        print(w, file=sys.stderr)
    vals = cfg.values
    command = args.command
    if "command" in vals and vals["command"] != command:
        raise ConfigError(f"config is for {vals['command']!r}, not {command!r}", cfg.lines["command"])

    cls = cfgmod.model_kind(command)
    overrides = {}
    if args.lc is not None:
        overrides["L_c"] = args.lc
    if args.lv is not None:
        if cls is JCParams:
            raise ConfigError("--lv does not apply to the JC model")
        overrides["L_v"] = args.lv
    params = cfgmod.params_from(cfg, cls, overrides)

    def pick(flag, key, parse=lambda x: x, default=None):
        if flag is not None:
            return parse(flag)
        if key in vals:
            try:
                return parse(vals[key])
            except ValueError as exc:
                raise ConfigError(str(exc), cfg.lines[key]) from exc
        return default

    try:
        sweep = pick(args.sweep, "sweep", cfgmod.parse_sweep, DEFAULT_SWEEPS.get(command))
        window = pick(args.window, "window", cfgmod.parse_window, (5.0, None))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fmt = pick(args.format, "format", default="csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}", cfg.lines.get("format"))
    jobs = pick(args.jobs, "jobs", int, 1)
    if jobs < 1:
        raise ConfigError("jobs must be >= 1", cfg.lines.get("jobs"))
    g_values = DEFAULT_G_VALUES
    if "g_values" in vals:
        try:
            g_values = tuple(float(x) for x in vals["g_values"].split(","))
        except ValueError as exc:
            raise ConfigError(f"g_values: {exc}", cfg.lines["g_values"]) from exc
    run = RunConfig(
        command=command,
        params=params,
        sweep=sweep,
        output=pick(args.output, "output", default=f"{command}.{fmt}"),
        fmt=fmt,
        jobs=jobs,
        window=window,
        duration=vals.get("duration"),
        dt=vals.get("dt", 0.25),
        g_values=g_values,
        vib_modes=vals.get("vib_modes", "local"),
        com_levels=vals.get("com_levels"),
    )
    check_run(run, cfg)
    return run


ALLOWED_SWEEP_VARS = {
    "jc-spectrum": {f for f in cfgmod.JC_KEYS if f != "L_c"},
    "dimer-spectrum": {"g_c", "g", "V", "omega_vib", "Q", "omega_c", "e1", "e2"},
    "reduced-compare": {"g_c"},
    "fit-purcell": {"g_c"},
    "sweep-deloc": {"zeta"},
}


def check_run(run, cfg):
    line = cfg.lines.get
    if run.sweep is not None and run.command in ALLOWED_SWEEP_VARS:
        var = run.sweep[0]
        if var not in ALLOWED_SWEEP_VARS[run.command]:
            raise ConfigError(f"{run.command} cannot sweep {var!r}", line("sweep"))
    if run.vib_modes not in ("local", "normal"):
        raise ConfigError(f"vib_modes must be local or normal, got {run.vib_modes!r}", line("vib_modes"))
    if run.duration is not None and not run.duration > 0:
        raise ConfigError("duration must be positive", line("duration"))
    if not run.dt > 0:
        raise ConfigError("dt must be positive", line("dt"))
    if run.command == "fit-purcell" and run.grid is not None and len(run.grid) < 2:
        raise ConfigError("fit-purcell needs at least two g_c values", line("sweep"))


# -- commands -------------------------------------------------------------------

def _pool_map(fn, items, jobs):
    """``map`` over a process pool; results come back in input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _diag_point(task):
    builder, x = task
    return builder(x)


def _tracked(builder, var, grid, anchors, jobs):
    """``sweep_branches`` with the diagonalised matrices built in parallel."""
    mats = _pool_map(_diag_point, [(builder, x) for x in grid], jobs)
    lookup = dict(zip((float(x) for x in grid), mats))
    return spectra.sweep_branches(lambda x: lookup[float(x)], var, grid, anchors)


class _JCBuilder:
    def __init__(self, params, var):
        self.params, self.var = params, var

    def __call__(self, value):
        s = build_jc(replace(self.params, **{self.var: float(value)}))
        return spectra.effective_hamiltonian(s, jc_channels(s))


class _DimerBuilder:
    def __init__(self, params, var, **build_kw):
        self.params, self.var, self.kw = params, var, build_kw

    def __call__(self, value):
        s = build_dimer(self.params.replace(**{self.var: float(value)}), **self.kw)
        return spectra.effective_hamiltonian(s, standard_channels(s))


def cmd_jc_spectrum(run):
    var = run.sweep_var
    s = build_jc(run.params)
    anchors = {"atom": s.named_states["e,0"], "cavity": s.named_states["g,1"]}
    # shift every eigenvalue by the ground-state energy so rows read as transition energies
    base = _JCBuilder(run.params, var)
    branches = _tracked(base, var, run.grid, anchors, run.jobs)
    ground = np.array([base(x)[0, 0] for x in run.grid])
    for b in branches:
        b.values = b.values - ground
    rows = spectra.branches_to_rows(branches)
    return rows, branches, {}


def cmd_dimer_spectrum(run):
    var = run.sweep_var
    kw = {"vib_modes": run.vib_modes, "com_levels": run.com_levels}
    s = build_dimer(run.params, **kw)
    branches = _tracked(_DimerBuilder(run.params, var, **kw), var, run.grid, spectra.dimer_anchors(s), run.jobs)
    flags = {b.label: [[int(k), why] for k, why in b.flags] for b in branches if b.flags}
    return spectra.branches_to_rows(branches), branches, {"tracking_flags": flags}


def cmd_reduced_compare(run):
    kw = {"vib_modes": run.vib_modes, "com_levels": run.com_levels}
    s = build_dimer(run.params, **kw)
    anchors = spectra.dimer_anchors(s, reduced.REDUCED_LABELS)
    full = _tracked(_DimerBuilder(run.params, "g_c", **kw), "g_c", run.grid, anchors, run.jobs)
    pred = reduced.predict_branch_rates(run.params, run.grid)
    rows = []
    for k, x in enumerate(run.grid):
        for i, lab in enumerate(reduced.REDUCED_LABELS):
            lam = full[i].values[k]
            rows.append(_row(x, lab, lam, full[i].overlaps[k], "full"))
            rows.append(_row(x, lab, pred.exact[i, k], float("nan"), "reduced"))
            rows.append(_row(x, lab, complex(float("nan"), pred.purcell[i, k]), float("nan"), "purcell"))
    m = reduced.build_reduced(run.params)
    extra = {"phi": m.phi, "g_x": m.g_x, "dressed_rates_cm1": list(m.dressed_rates)}
    return rows, None, extra


def _row(x, label, lam, overlap, source):
    return {
        "param": float(x),
        "branch_label": label,
        "re_cm1": float(lam.real),
        "im_cm1": float(lam.imag),
        "overlap": float(overlap),
        "source": source,
    }


def _fit_task(task):
    params, gc, duration, dt, window = task
    fit, _ = ground_growth(params.replace(g_c=float(gc)), duration, dt, window)
    return fit


def cmd_fit_purcell(run):
    duration = run.duration or 25.0
    grid = np.unique(np.append(run.grid, 0.0))
    fits = _pool_map(_fit_task, [(run.params, gc, duration, run.dt, run.window) for gc in grid], run.jobs)
    # gamma0 is the g_c = 0 rate fitted the same way
    gamma0 = fits[0].gamma_prime
    fits = [PurcellFit(f.gamma_prime, f.gamma_prime / gamma0 - 1.0, f.residual, f.window, f.amplitude) for f in fits]
    scan = PurcellScan(g_c=grid, fits=fits, gamma0=gamma0, duration=duration, dt=run.dt)
    a, r2 = scan.quadratic_fit()
    rows = [
        {
            "g_c": float(gc),
            "gamma_prime_ps": f.gamma_prime,
            "purcell_factor": f.purcell_factor,
            "amplitude": f.amplitude,
            "residual": f.residual,
        }
        for gc, f in zip(grid, fits)
    ]
    extra = {"gamma0_ps": gamma0, "quadratic_coefficient": a, "r_squared": r2, "duration_ps": duration,
             "fit_window_ps": list(fits[0].window)}
    return rows, None, extra


def cmd_dynamics(run):
    duration = run.duration or 10.0
    s = build_dimer(run.params, vib_modes=run.vib_modes, com_levels=run.com_levels)
    gen = generator(s, standard_channels(s))
    times = np.arange(0.0, duration + 0.5 * run.dt, run.dt)
    traj = propagate(initial_state(s), gen, times, exciton_observables(s))
    rows = []
    for k, t in enumerate(traj.times):
        row = {"time_ps": float(t)}
        row.update({lab: float(v[k]) for lab, v in traj.observables.items()})
        rows.append(row)
    return rows, None, {"propagator": traj.stats, "duration_ps": duration}


def _deloc_task(task):
    params, g, zetas = task
    base = params.replace(g=float(g))
    rows, idents = [], []
    labels = reduced.REDUCED_LABELS[:2]
    for z in zetas:
        pz = reduced.delocalisation_params(float(z), base)
        s = build_dimer(pz)
        br = spectra.sweep_branches(spectra.dimer_builder(pz), "g_c", [pz.g_c], spectra.dimer_anchors(s))
        pred = reduced.predict_branch_rates(pz, [pz.g_c])
        m = reduced.build_reduced(pz)
        idents.append(reduced.coupling_identity_error(pz))
        for b in br:
            rows.append({"g": float(g), "zeta": float(z), "branch_label": b.label, "source": "full",
                         "re_cm1": float(b.values[0].real), "im_cm1": float(b.values[0].imag),
                         "g_c1": m.g_c1, "g_c2": m.g_c2})
        for i, lab in enumerate(labels):
            lam = pred.exact[i, 0]
            rows.append({"g": float(g), "zeta": float(z), "branch_label": lab, "source": "reduced",
                         "re_cm1": float(lam.real), "im_cm1": float(lam.imag), "g_c1": m.g_c1, "g_c2": m.g_c2})
    return rows, max(idents)


def cmd_sweep_deloc(run):
    results = _pool_map(_deloc_task, [(run.params, g, run.grid) for g in run.g_values], run.jobs)
    rows = [r for part, _ in results for r in part]
    return rows, None, {"g_values": list(run.g_values), "max_coupling_identity_error": max(e for _, e in results)}


COMMANDS = {
    "jc-spectrum": cmd_jc_spectrum,
    "dimer-spectrum": cmd_dimer_spectrum,
    "dynamics": cmd_dynamics,
    "fit-purcell": cmd_fit_purcell,
    "sweep-deloc": cmd_sweep_deloc,
    "reduced-compare": cmd_reduced_compare,
}


# -- output -------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.12g}"
    return str(v)


def write_rows(path, rows, fmt, branches=None):
    if fmt == "json":
        payload = spectra.branches_to_json(branches) if branches is not None else rows
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def derived_quantities(params):
    if isinstance(params, JCParams):
        return {"Q": params.Q, "detuning": params.detuning,
                "cooperativity": spectra.cooperativity(params.g_c, params.kappa, params.gamma)}
    out = {
        "theta": params.theta,
        "zeta": params.zeta,
        "delta_E": params.delta_E,
        "E": params.E,
        "kappa": params.kappa,
        "omega_c": params.cavity_frequency,
        "n_vib": params.n_vib,
    }
    m = reduced.build_reduced(params)
    out.update(phi=m.phi, g_x=m.g_x, g_c1=m.g_c1, g_c2=m.g_c2, C1=m.C1, C2=m.C2)
    return out


def metadata_for(run, extra):
    p = run.params
    trunc = {"L_c": p.L_c}
    if isinstance(p, DimerParams):
        trunc.update(L_v=p.L_v, vib_modes=run.vib_modes, com_levels=run.com_levels,
                     include_double_excited=p.include_double_excited)
    return _jsonable({
        "command": run.command,
        "tool": "mlpurcell",
        "version": tool_version(),
        "params": asdict(p),
        "derived": derived_quantities(p),
        "truncation": trunc,
        "sweep": None if run.sweep is None else dict(zip(("variable", "start", "stop", "steps"), run.sweep)),
        "units": {"energy": "cm^-1", "rate": "cm^-1 unless suffixed _ps", "time": "ps", "temperature": "K"},
        "format": run.fmt,
        "extra": extra,
    })


def run(run_cfg):
    """Execute ``run_cfg``; returns the output path."""
    rows, branches, extra = COMMANDS[run_cfg.command](run_cfg)
    write_rows(run_cfg.output, rows, run_cfg.fmt, branches)
    with open(run_cfg.output + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(metadata_for(run_cfg, extra), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return run_cfg.output


# -- entry point --------------------------------------------------------------

def make_parser():
    ap = argparse.ArgumentParser(prog="mlpurcell", description="Multi-level Purcell effect calculations.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--output", help="output path (default <command>.<format>)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--jobs", type=int, help="worker processes for independent grid points")
        sp.add_argument("--sweep", help="var=start:stop:steps")
        sp.add_argument("--window", help="fit window t0:t1 in ps (fit-purcell)")
        sp.add_argument("--lv", type=int, help="vibrational levels per mode")
        sp.add_argument("--lc", type=int, help="cavity levels")
    vp = sub.add_parser("validate")
    vp.add_argument("config")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.command == "validate":
        try:
            diags = cfgmod.validate(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for d in diags:
            print(d)
        return EXIT_CONFIG if any(d.severity == "error" for d in diags) else EXIT_OK
    try:
        run_cfg = build_run(args)
    except (ConfigError, UnsupportedConfigurationError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = run(run_cfg)
    except (NumericalError, MLPurcellError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
