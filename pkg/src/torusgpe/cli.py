"""Command-line entry point: single computations and omega sweeps.

Exit codes: 0 pass, 1 execution or configuration error, 2 metric failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import circle1d, elliptic
from .cli_support import ConvergenceReport, bounded, fitRate, rate_ok, strictly_decreasing
from .core3d import Grid3D, Model3D, factorized, write_snapshot
from .errors import ConfigError, TorusGPEError
from .potentials import PotentialSpec
from .transverse import RadialGrid, groundStateConvergence, solveTransverse

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

TASKS = ("spectrum", "ground3d", "reduce", "gn", "coercivity")
TOP_KEYS = {"task", "omegas", "mass", "kappa", "delta", "potential", "grid", "evolve", "seed",
            "output_dir"}
SUB_KEYS = {"potential": {"variant", "m_param"},
            "grid": {"N_s", "N_z", "N_theta", "s_max", "z_max"},
            "evolve": {"dt", "T"}}
DEFAULTS = {"task": "spectrum", "omegas": [64.0, 256.0, 1024.0], "mass": 30.0, "kappa": -1,
            "delta": 0.05, "potential": {"variant": "Quadratic", "m_param": 2.0},
            "grid": {}, "evolve": {"dt": None, "T": 1.0}, "seed": 0, "output_dir": "torusgpe_out"}


# -- output --------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return f"{x:.17g}" if math.isfinite(x) else json.dumps(str(x))
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in sorted(x.items())) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj) -> str:
    """JSON with sorted keys and 17 significant digits for every float."""
    return _fmt(obj) + "\n"


def _write(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))


def _write_csv(path: Path, header: list, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(f"{float(x):.17g}" for x in r) + "\n")


# -- config --------------------------------------------------------------

def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return raw


def validate_config(raw: dict) -> dict:
    bad = set(raw) - TOP_KEYS
    if bad:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(bad))}")
    for k, allowed in SUB_KEYS.items():
        if k in raw:
            if not isinstance(raw[k], dict):
                raise ConfigError(f"key {k!r} must be an object")
            bad = set(raw[k]) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in {k!r}: {', '.join(sorted(bad))}")
    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULTS.items()}
    for k, v in raw.items():
        cfg[k] = {**cfg[k], **v} if k in SUB_KEYS else v
    if cfg["task"] not in TASKS:
        raise ConfigError(f"key 'task': expected one of {TASKS}, got {cfg['task']!r}")
    om = cfg["omegas"]
    if not isinstance(om, list) or not om:
        raise ConfigError("key 'omegas': need a non-empty list")
    try:
        om = [float(x) for x in om]
    except (TypeError, ValueError):
        raise ConfigError("key 'omegas': values must be numbers") from None
    if any(x <= 0 for x in om) or len(set(om)) != len(om):
        raise ConfigError("key 'omegas': values must be positive and distinct")
    cfg["omegas"] = sorted(om)
    if cfg["kappa"] not in (1, -1):
        raise ConfigError("key 'kappa': must be +1 or -1")
    if not float(cfg["mass"]) > 0:
        raise ConfigError("key 'mass': must be positive")
    return cfg


def merge_flags(cfg_file: dict | None, flags: dict, strict: bool) -> dict:
    """Combine a config document with command-line values.

    Without ``strict`` the file wins on conflicts; with ``strict`` a
    conflict is an error."""
    flags = {k: v for k, v in flags.items() if v is not None}
    if cfg_file is None:
        return validate_config(flags)
    out = dict(cfg_file)
    for k, v in flags.items():
        if k in out and out[k] != v:
            if strict:
                raise ConfigError(f"key {k!r}: flag value {v!r} conflicts with config {out[k]!r}")
            continue
        out[k] = v
    return validate_config(out)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TORUSGPE_THREADS", "1")))
    except ValueError:
        return 1


def _spec(cfg: dict, omega: float) -> PotentialSpec:
    p = cfg["potential"]
    return PotentialSpec(p["variant"], omega, float(p.get("m_param", 2.0)))


def _grid3d(cfg: dict, omega: float) -> Grid3D:
    return Grid3D.make(omega, **{k: v for k, v in cfg["grid"].items()})


# -- per-omega tasks -----------------------------------------------------

def _task_spectrum(cfg, omega):
    g = cfg["grid"]
    kw = {k: g[k] for k in ("N_s", "s_max") if k in g}
    res = solveTransverse(RadialGrid.make(omega, **kw), _spec(cfg, omega))
    conv = groundStateConvergence(res)
    return {"omega": omega, "lambda": res.lam, "lambda_prime": res.lam_prime,
            "lambda_err": abs(res.lam - 1.0), "gap_err": abs(res.lam_prime - res.lam - 2.0),
            "residual": res.residual, **conv}


def _minimize(cfg, omega):
    from .minimizer3d import MinimizeConfig, minimize
    mc = MinimizeConfig(omega, float(cfg["mass"]), int(cfg["kappa"]), float(cfg["delta"]))
    return minimize(mc, _spec(cfg, omega), _grid3d(cfg, omega))


def _task_ground3d(cfg, omega):
    from .minimizer3d import dimensionReductionReport
    res = _minimize(cfg, omega)
    gs = circle1d.groundState1d(float(cfg["mass"]), int(cfg["kappa"]))
    out = Path(cfg["output_dir"])
    write_snapshot(res.Q, out / f"ground3d_omega{omega:g}.bin")
    return {**res.record(), **dimensionReductionReport(res, gs)}


def _task_coercivity(cfg, omega):
    from .minimizer3d import coercivityCheck
    res = _minimize(cfg, omega)
    return {"omega": omega, **coercivityCheck(res)}


def _task_gn(cfg, omega):
    from .minimizer3d import gnCheck
    model = Model3D(_grid3d(cfg, omega), _spec(cfg, omega))
    r = gnCheck(200, model, int(cfg["seed"]))
    return {"omega": omega, "C_GN": r["C_GN"], "max_ratio": float(np.max(r["ratios"])),
            "n_fields": len(r["ratios"])}


def _task_reduce(cfg, omega):
    from .dynamics3d import EvolveConfig, evolve3d, circle_reference
    model = Model3D(_grid3d(cfg, omega), _spec(cfg, omega))
    gs = circle1d.groundState1d(float(cfg["mass"]), int(cfg["kappa"]))
    w0 = gs.sample(model.grid.N_theta)
    T = float(cfg["evolve"]["T"])
    dt = cfg["evolve"].get("dt") or 0.05 / omega
    n = max(1, int(round(T / dt)))
    ec = EvolveConfig(T / n, T, omega, int(cfg["kappa"]), model.Lambda, max(1, n // 50),
                      dt_limit=max(0.1, omega * T / n))
    tr = evolve3d(factorized(w0, model.basis), ec, model, check_h3=False)
    ref = circle_reference(w0, int(cfg["kappa"]), tr.times, 1e-4)
    dist = max(circle1d.l2_norm(p.values - r.values) for p, r in zip(tr.v_par_snapshots, ref))
    tr.to_csv(Path(cfg["output_dir"]) / f"trace_omega{omega:g}.csv")
    return {"omega": omega, "remainder_sup": float(tr.remainder_sup),
            "trajectory_distance": dist, "mass_drift": float(abs(tr.mass_series[-1] - tr.mass_series[0])),
            "steps": n}


TASK_FUNCS = {"spectrum": _task_spectrum, "ground3d": _task_ground3d, "reduce": _task_reduce,
              "gn": _task_gn, "coercivity": _task_coercivity}


def _run_one(args):
    task, cfg, omega = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return TASK_FUNCS[task](cfg, omega)


def _verdict(task: str, recs: list, omegas: list) -> ConvergenceReport:
    sq = np.sqrt(omegas)
    if task == "spectrum":
        vals = [r["lambda_err"] for r in recs]
        a = np.array(vals) * sq
        b = np.array([r["gap_err"] for r in recs]) * sq
        ok = bounded(a) and bounded(b)
        rep = ConvergenceReport(omegas, "abs(lambda-1)", vals, passed=ok,
                                criterion="abs(lambda-1)*sqrt(omega) and abs(gap-2)*sqrt(omega) "
                                          "bounded (max/min <= 3)")
    elif task == "ground3d":
        vals = [r["h1_distance_par"] for r in recs]
        ok = (strictly_decreasing(vals) and all(r["diagnostics"]["constraint_margin"] > 0 for r in recs)
              and strictly_decreasing([r["mu_gap"] for r in recs]))
        rep = ConvergenceReport(omegas, "h1_distance_par", vals, passed=ok,
                                criterion="H1 distance and mu gap decreasing, constraint inactive")
    elif task == "reduce":
        vals = [r["remainder_sup"] for r in recs]
        ok = strictly_decreasing([r["trajectory_distance"] for r in recs])
        rep = ConvergenceReport(omegas, "remainder_sup", vals, passed=ok,
                                criterion="remainder slope <= -0.4 with residual < 0.15, "
                                          "trajectory distance decreasing")
    elif task == "gn":
        vals = [r["C_GN"] for r in recs]
        rep = ConvergenceReport(omegas, "C_GN", vals, passed=bounded(vals),
                                criterion="C_GN max/min <= 3")
    else:
        vals = [r["lambda_min"] for r in recs]
        ok = all(r["lambda_min"] > 0 and r["kernel_residual"] < 1e-6 and r["LQ_Q"] < 0 for r in recs)
        rep = ConvergenceReport(omegas, "lambda_min", vals, passed=ok,
                                criterion="deflated lambda_min > 0, kernel residual < 1e-6, <LQ,Q> < 0")
    if len(omegas) >= 3 and all(v > 0 for v in vals):
        rep.fitted_rate, _, rep.fit_residual = fitRate(omegas, vals)
        if task == "reduce":
            rep.passed = rep.passed and rate_ok(rep.fitted_rate, rep.fit_residual)
    elif task == "reduce":
        rep.passed = False
    return rep


def runTask(cfg: dict) -> ConvergenceReport:
    """Run the configured task for every omega and write per-omega JSON
    records, a combined CSV and the report JSON into ``output_dir``."""
    task, omegas = cfg["task"], cfg["omegas"]
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(task, cfg, om) for om in omegas]
    nthreads = min(_threads(), len(jobs))
    if nthreads > 1:
        with ProcessPoolExecutor(nthreads) as ex:
            recs = list(ex.map(_run_one, jobs))
    else:
        recs = [_run_one(j) for j in jobs]
    for om, r in zip(omegas, recs):
        _write(out / f"{task}_omega{om:g}.json", r)
    scalar = sorted(k for k, v in recs[0].items()
                    if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool))
    _write_csv(out / f"{task}.csv", scalar, [[r[k] for k in scalar] for r in recs])
    rep = _verdict(task, recs, omegas)
    _write(out / f"{task}_report.json", rep.as_dict())
    return rep


# -- subcommands ---------------------------------------------------------

def _cmd_elliptic(a):
    if a.mass is not None:
        k = elliptic.invertMass(a.mass).k
    else:
        k = a.k
    K, E = elliptic.completeKE(k)
    return {"k": k, "K": K, "E": E, "mass": 8 * E * K}


def _cmd_ground1d(a):
    gs = circle1d.groundState1d(a.mass, a.kappa)
    w = gs.sample(a.N_theta)
    if a.csv:
        w.to_csv(a.csv)
    return {"branch": gs.branch.value, "k": gs.k, "mu_inf": gs.mu_inf, "mass": circle1d.mass1d(w),
            "energy": circle1d.energy1d(w.values, a.kappa),
            "residual": float(np.max(np.abs(circle1d.el_residual1d(gs, a.N_theta))))}


def _cmd_spectrum1d(a):
    res = solveTransverse(RadialGrid.make(a.omega, a.N_s), PotentialSpec(a.potential, a.omega, a.m_param))
    if a.csv:
        res.to_csv(a.csv)
    return {"omega": a.omega, "lambda": res.lam, "lambda_prime": res.lam_prime,
            "residual": res.residual, **groundStateConvergence(res)}


def _cmd_evolve1d(a):
    gs = circle1d.groundState1d(a.mass, a.kappa)
    w0 = gs.sample(a.N_theta)
    if a.perturb:
        th = w0.theta
        w0 = circle1d.CircleField(w0.values * (1 + a.perturb * np.cos(th)))
    tr = circle1d.evolve1d(w0, a.kappa, a.dt, a.T, record_every=a.record_every)
    if a.csv:
        _write_csv(Path(a.csv), ["t", "mass", "energy"], zip(tr.times, tr.mass, tr.energy))
    return {"steps": len(tr.times), "mass_drift": float(abs(tr.mass[-1] - tr.mass[0])),
            "energy_drift": float(abs(tr.energy[-1] - tr.energy[0]))}


def _cmd_ground3d(a, cfg):
    om = cfg["omegas"][0]
    rec = _task_ground3d(cfg, om)
    return rec


def _cmd_evolve3d(a, cfg):
    from .dynamics3d import EvolveConfig, evolve3d
    from .minimizer3d import MinimizeConfig, minimize
    om = cfg["omegas"][0]
    spec, grid = _spec(cfg, om), _grid3d(cfg, om)
    model = Model3D(grid, spec)
    gs = circle1d.groundState1d(float(cfg["mass"]), int(cfg["kappa"]))
    if a.initial == "ground":
        v0 = minimize(MinimizeConfig(om, float(cfg["mass"]), int(cfg["kappa"])), spec, grid, model).Q
    else:
        v0 = factorized(gs.sample(grid.N_theta), model.basis)
    T = float(cfg["evolve"]["T"])
    dt = cfg["evolve"].get("dt") or 0.05 / om
    tr = evolve3d(v0, EvolveConfig(dt, T, om, int(cfg["kappa"]), model.Lambda, a.record_every),
                  model, check_h3=False)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    tr.to_csv(out / f"evolve3d_omega{om:g}.csv")
    write_snapshot(tr.final, out / f"evolve3d_omega{om:g}_final.bin")
    return {"omega": om, "steps": len(tr.times), "mass_drift": float(abs(tr.mass_series[-1] - tr.mass_series[0])),
            "energy_drift": float(abs(tr.energy_series[-1] - tr.energy_series[0])),
            "remainder_sup": float(tr.remainder_sup)}


def _add_sweep_flags(p):
    p.add_argument("--config")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--omegas", type=float, nargs="+")
    p.add_argument("--omega", type=float)
    p.add_argument("--mass", type=float)
    p.add_argument("--kappa", type=int, choices=(-1, 1))
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", dest="output_dir")


class _Parser(argparse.ArgumentParser):
    # usage errors are execution errors (exit 1); 2 is reserved for metric failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="torusgpe")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    p = sub.add_parser("elliptic")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--k", type=float)
    g.add_argument("--mass", type=float)
    p = sub.add_parser("ground1d")
    p.add_argument("--mass", type=float, required=True)
    p.add_argument("--kappa", type=int, default=-1, choices=(-1, 1))
    p.add_argument("--N-theta", dest="N_theta", type=int, default=256)
    p.add_argument("--csv")
    p = sub.add_parser("spectrum1d")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--potential", default="Quadratic")
    p.add_argument("--m-param", dest="m_param", type=float, default=2.0)
    p.add_argument("--N-s", dest="N_s", type=int, default=1024)
    p.add_argument("--csv")
    p = sub.add_parser("evolve1d")
    p.add_argument("--mass", type=float, required=True)
    p.add_argument("--kappa", type=int, default=-1, choices=(-1, 1))
    p.add_argument("--N-theta", dest="N_theta", type=int, default=256)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--perturb", type=float, default=0.0)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--csv")
    for name in ("ground3d", "evolve3d", "reduce-sweep", "gn-check", "coercivity", "sweep"):
        p = sub.add_parser(name)
        _add_sweep_flags(p)
        if name == "sweep":
            p.add_argument("--task", choices=TASKS)
        if name == "evolve3d":
            p.add_argument("--initial", choices=("factorized", "ground"), default="factorized")
            p.add_argument("--dt", type=float)
            p.add_argument("--T", type=float)
            p.add_argument("--record-every", dest="record_every", type=int, default=10)
    return ap


SWEEP_TASK = {"reduce-sweep": "reduce", "gn-check": "gn", "coercivity": "coercivity",
              "ground3d": "ground3d", "evolve3d": "reduce"}


def _sweep_cfg(a) -> dict:
    flags = {"mass": a.mass, "kappa": a.kappa, "delta": a.delta, "seed": a.seed,
             "output_dir": a.output_dir}
    if a.omegas:
        flags["omegas"] = list(a.omegas)
    elif a.omega is not None:
        flags["omegas"] = [a.omega]
    task = getattr(a, "task", None) or SWEEP_TASK.get(a.cmd)
    if task is not None:
        flags["task"] = task
    if a.cmd == "evolve3d" and (a.dt is not None or a.T is not None):
        flags["evolve"] = {k: v for k, v in (("dt", a.dt), ("T", a.T)) if v is not None}
    cfg_file = load_config(a.config) if a.config else None
    return merge_flags(cfg_file, flags, a.strict)


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        if a.cmd in ("elliptic", "ground1d", "spectrum1d", "evolve1d"):
            rec = globals()["_cmd_" + a.cmd.replace("-", "")](a)
            sys.stdout.write(dumps(rec))
            return EXIT_PASS
        cfg = _sweep_cfg(a)
        if a.cmd in ("ground3d", "evolve3d"):
            rec = (_cmd_ground3d if a.cmd == "ground3d" else _cmd_evolve3d)(a, cfg)
            _write(Path(cfg["output_dir"]) / f"{a.cmd}.json", rec)
            sys.stdout.write(dumps(rec))
            return EXIT_PASS
        rep = runTask(cfg)
        sys.stdout.write(dumps(rep.as_dict()))
        return EXIT_PASS if rep.passed else EXIT_FAIL
    except (TorusGPEError, ValueError, OSError) as e:
        sys.stderr.write(f"torusgpe: error: {e}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
