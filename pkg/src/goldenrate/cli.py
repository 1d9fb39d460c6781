"""Command-line front end.

    goldenrate <command> [--preset NAME | --config PATH] [--set key=value ...]
               --out DIR [--workers N] [--seed S]

Commands: lineshape, rate, sweep, mc-validate, me-propagate.  A run is
described by a JSON config (presets fig1-fig4 ship with the package);
--set overrides individual dotted keys.  Outputs are RFC 4180 CSV files
with a header row naming columns and units, plus one JSON manifest per
run that echoes the fully resolved config (rerunning from it reproduces
the data files byte for byte).

Exit codes: 0 success, 1 validation error, 2 numerical failure at any
point (run continues, failures are recorded in-row), 3 I/O error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import json
import math
import sys
import time
from importlib import resources

import numpy as np

from . import __version__
from .bath import BathModel, ConvergenceError, Lineshape, ModelError, lineshape_quadrature
from .quad import EnvelopeError
from .rates import DisorderModel, FluctuationModel, RateSpec, compute_rate, m_fgr_1, m_fgr_2
from .stochastic import (
    TrajectoryEnsemble,
    mc_avg_population,
    mc_avg_rate,
    mc_cumulant_check,
    me_propagate,
)

UNIT_SYSTEM = "hbar = 1, omega_c = 1; energies in hbar*omega_c, times in 1/omega_c, rates in omega_c"

COMMANDS = ("lineshape", "rate", "sweep", "mc-validate", "me-propagate")

DEFAULTS = {
    "bath": {"n": 1, "lambda": 1.0, "theta": 1.0},
    "lineshape_method": "analytic",
    "j_sq": 1.0,
    "delta_e": 1.0,
    "t_grid": {"start": 0.0, "stop": 100.0, "points": 501},
    "delta_e_grid": {"start": -4.0, "stop": 8.0, "points": 49},
    "mc": {
        "n_traj": 2000,
        "seed": 0,
        "dt": None,
        "t_eval": 20.0,
        "horizon": 10.0,
        "tau_points": 50,
        "population_horizon": 8.0,
        "p2_0": 0.0,
    },
    "me": {"k12": 0.25, "k21": 0.1, "p2_0": 0.0},
    "quad": {},
    "output": {"prefix": "run"},
}


class ValidationError(ValueError):
    pass


def _fmt(x) -> str:
    """Shortest round-trip decimal representation."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _deep_update(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_set(config: dict, assignments) -> dict:
    for item in assignments or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(f"--set path {key!r} crosses a non-object value")
        node[parts[-1]] = value
    return config


def load_preset(name: str) -> dict:
    ref = resources.files("goldenrate").joinpath("presets", f"{name}.json")
    if not ref.is_file():
        raise ValidationError(f"unknown preset {name!r}")
    return json.loads(ref.read_text())


def resolve_config(args) -> dict:
    config = copy.deepcopy(DEFAULTS)
    if args.preset:
        config = _deep_update(config, load_preset(args.preset))
    if args.config:
        try:
            with open(args.config) as fh:
                config = _deep_update(config, json.load(fh))
        except OSError as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {args.config} is not valid JSON: {exc}") from exc
    _apply_set(config, args.set)
    if args.seed is not None:
        config.setdefault("mc", {})["seed"] = args.seed
    declared = config.get("command")
    if declared is not None and declared != args.command:
        raise ValidationError(
            f"config declares command {declared!r} but {args.command!r} was invoked"
        )
    config["command"] = args.command
    return config


# -- model construction from config blocks ---------------------------------

def _bath_from(cfg: dict) -> BathModel:
    try:
        return BathModel(n=int(cfg["n"]), lam=float(cfg["lambda"]), theta=float(cfg["theta"]))
    except KeyError as exc:
        raise ValidationError(f"bath config is missing {exc}") from exc


def _grid_from(cfg: dict, kind: str) -> np.ndarray:
    try:
        start, stop, points = float(cfg["start"]), float(cfg["stop"]), int(cfg["points"])
    except KeyError as exc:
        raise ValidationError(f"{kind} grid config is missing {exc}") from exc
    if points < 1 or stop < start:
        raise ValidationError(f"{kind} grid must be non-empty and ascending")
    return np.linspace(start, stop, points)


def _spec_from(config: dict, delta_e: float) -> RateSpec:
    disorder = None
    fluctuation = None
    if config.get("disorder"):
        d = config["disorder"]
        disorder = DisorderModel(kind=d["kind"], width=float(d["width"]))
    if config.get("fluctuation"):
        f = config["fluctuation"]
        tau_f = f.get("tau_f")
        fluctuation = FluctuationModel(
            tau_e=float(f["tau_e"]),
            dE_sq=float(f["de_sq"]),
            tau_f=math.inf if tau_f in (None, "inf") else float(tau_f),
        )
    gamma_d = config.get("gamma_d")
    return RateSpec(
        bath=_bath_from(config["bath"]),
        delta_E=delta_e,
        J_sq=float(config.get("j_sq", 1.0)),
        gamma_d=None if gamma_d is None else float(gamma_d),
        disorder=disorder,
        fluctuation=fluctuation,
    )


def _curve_configs(config: dict) -> list[dict]:
    curves = config.get("curves")
    if not curves:
        return [_deep_update(config, {"label": config.get("label", "curve")})]
    out = []
    for curve in curves:
        merged = _deep_update({k: v for k, v in config.items() if k != "curves"}, curve)
        if "label" not in merged:
            raise ValidationError("each curve needs a label")
        out.append(merged)
    return out


# -- output helpers ---------------------------------------------------------

def _write_csv(path, header: list[str], rows) -> int:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\r\n")
            count = 0
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\r\n")
                count += 1
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc
    return count


def _parallel_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# -- command implementations ------------------------------------------------

def _lineshape_point(args):
    bath_cfg, t = args
    bath = _bath_from(bath_cfg)
    c_quad = lineshape_quadrature(bath, t)
    from .bath import lineshape_imag_analytic, lineshape_real_analytic

    return (
        t,
        lineshape_real_analytic(bath, t),
        lineshape_imag_analytic(bath, t),
        c_quad.real,
        c_quad.imag,
    )


def run_lineshape(config: dict, out_dir, workers: int):
    t_grid = _grid_from(config["t_grid"], "t")
    outputs = []
    for curve in _curve_configs(config):
        bath_cfg = curve["bath"]
        _bath_from(bath_cfg)  # validate before dispatch
        rows = _parallel_map(_lineshape_point, [(bath_cfg, float(t)) for t in t_grid], workers)
        name = f"{config['output']['prefix']}_{curve['label']}.csv"
        path = out_dir / name
        count = _write_csv(
            path,
            [
                "t (1/omega_c)",
                "C_R_analytic (dimensionless)",
                "C_I_analytic (dimensionless)",
                "C_R_quad (dimensionless)",
                "C_I_quad (dimensionless)",
            ],
            rows,
        )
        outputs.append({"file": name, "rows": count, "statuses": {"ok": count}})
    return outputs, 0


def _sweep_point(args):
    curve_cfg, delta_e = args
    spec = _spec_from(curve_cfg, delta_e)
    lam = spec.bath.lam
    method = curve_cfg.get("lineshape_method", "analytic")
    quad_kw = curve_cfg.get("quad", {})
    try:
        result = compute_rate(spec, lineshape=Lineshape(spec.bath, method=method), **quad_kw)
    except (ConvergenceError, EnvelopeError, RuntimeError) as exc:
        return (delta_e, delta_e / lam, math.nan, math.nan, math.nan, f"error: {exc}")
    ln_kappa = math.log(result.kappa) if result.kappa > 0 else math.nan
    return (
        delta_e,
        delta_e / lam,
        result.k,
        result.kappa,
        ln_kappa,
        result.diagnostics.status,
    )


def run_rate_sweep(config: dict, out_dir, workers: int):
    grid = _grid_from(config["delta_e_grid"], "delta_e")
    if grid.size == 0:
        raise ValidationError("delta_e grid is empty")
    outputs = []
    failed = 0
    for curve in _curve_configs(config):
        _spec_from(curve, float(grid[0]))  # validate before dispatch
        rows = _parallel_map(_sweep_point, [(curve, float(de)) for de in grid], workers)
        statuses = {}
        for row in rows:
            key = row[-1].split(":")[0]
            statuses[key] = statuses.get(key, 0) + 1
            if row[-1].startswith("error"):
                failed += 1
        name = f"{config['output']['prefix']}_{curve['label']}.csv"
        count = _write_csv(
            out_dir / name,
            [
                "delta_E (hbar*omega_c)",
                "delta_E_over_lambda (dimensionless)",
                "k (omega_c)",
                "kappa (dimensionless)",
                "ln_kappa (dimensionless)",
                "status",
            ],
            rows,
        )
        outputs.append({"file": name, "rows": count, "statuses": statuses})
    return outputs, (2 if failed else 0)


def run_rate(config: dict, out_dir, workers: int):
    spec = _spec_from(config, float(config.get("delta_e", DEFAULTS["delta_e"])))
    method = config.get("lineshape_method", "analytic")
    result = compute_rate(spec, lineshape=Lineshape(spec.bath, method=method), **config.get("quad", {}))
    name = f"{config['output']['prefix']}_rate.csv"
    count = _write_csv(
        out_dir / name,
        [
            "delta_E (hbar*omega_c)",
            "variant",
            "k (omega_c)",
            "kappa (dimensionless)",
            "delta_weight (omega_c*hbar*omega_c)",
            "status",
            "error_estimate",
            "t_truncation (1/omega_c)",
        ],
        [
            (
                spec.delta_E,
                result.variant,
                result.k,
                result.kappa,
                result.delta_weight,
                result.diagnostics.status,
                result.diagnostics.error_estimate,
                result.diagnostics.t_truncation,
            )
        ],
    )
    return [{"file": name, "rows": count, "statuses": {result.diagnostics.status: 1}}], 0


def run_mc(config: dict, out_dir, workers: int):
    mc = config["mc"]
    n_traj = int(mc["n_traj"])
    if n_traj < 1:
        raise ValidationError("mc.n_traj must be >= 1")
    if not config.get("fluctuation"):
        raise ValidationError("mc-validate requires a fluctuation block")
    spec = _spec_from(config, float(config.get("delta_e", DEFAULTS["delta_e"])))
    fl = spec.fluctuation
    bath = spec.bath
    seed = int(mc.get("seed", 0))
    dt = mc.get("dt")
    dt = None if dt in (None, "auto") else float(dt)
    ensemble = TrajectoryEnsemble(n_traj=n_traj, master_seed=seed)
    prefix = config["output"]["prefix"]
    outputs = []

    tau, mc_mean, se, closed = mc_cumulant_check(
        ensemble, fl, n_tau=int(mc["tau_points"]), horizon=float(mc["horizon"]), dt=dt
    )
    name = f"{prefix}_cumulant.csv"
    count = _write_csv(
        out_dir / name,
        [
            "tau (1/omega_c)",
            "mc_real (dimensionless)",
            "mc_imag (dimensionless)",
            "closed_form (dimensionless)",
            "se_real (dimensionless)",
        ],
        [
            (float(t), float(m.real), float(m.imag), float(c), float(s))
            for t, m, c, s in zip(tau, mc_mean, closed, se)
        ],
    )
    within = int(np.sum(np.abs(mc_mean.real - closed) <= 3 * se))
    outputs.append({"file": name, "rows": count, "statuses": {"within_3se": within, "total": count}})

    est = mc_avg_rate(ensemble, bath, spec.delta_E, fl, t_eval=float(mc["t_eval"]), dt=dt, J_sq=spec.J_sq)
    closed_rate = m_fgr_2(spec).k
    name = f"{prefix}_avg_rate.csv"
    count = _write_csv(
        out_dir / name,
        [
            "t_eval (1/omega_c)",
            "mc_rate (omega_c)",
            "se (omega_c)",
            "closed_form (omega_c)",
            "n_traj",
            "status",
        ],
        [
            (
                float(mc["t_eval"]),
                est.mean,
                est.se,
                closed_rate,
                est.n_traj,
                est.warning or "ok",
            )
        ],
    )
    outputs.append({"file": name, "rows": count, "statuses": {est.warning or "ok": 1}})

    pop_grid = np.arange(
        0.0,
        float(mc["population_horizon"]) + 1e-12,
        dt if dt is not None else min(fl.tau_e, fl.tau_f, 1.0) / 20.0,
    )
    pop = mc_avg_population(
        ensemble, bath, spec.delta_E, fl, pop_grid, J_sq=spec.J_sq, p2_0=float(mc["p2_0"])
    )
    name = f"{prefix}_avg_population.csv"
    count = _write_csv(
        out_dir / name,
        [
            "t (1/omega_c)",
            "mc_p2 (probability)",
            "se (probability)",
            "meanfield_p2 (probability)",
            "decoupled_p2 (probability)",
        ],
        zip(pop.t, pop.mean_p2, pop.se_p2, pop.meanfield_p2, pop.decoupled_p2),
    )
    outputs.append({"file": name, "rows": count, "statuses": {"ok": count}})
    return outputs, 0


def run_me(config: dict, out_dir, workers: int):
    me = config["me"]
    t_grid = _grid_from(config["t_grid"], "t")
    if config.get("disorder") or config.get("fluctuation") or config.get("gamma_d") or "from_rates" in me:
        spec = _spec_from(config, float(config.get("delta_e", DEFAULTS["delta_e"])))
        back = RateSpec(
            bath=spec.bath,
            delta_E=-spec.delta_E,
            J_sq=spec.J_sq,
            gamma_d=spec.gamma_d,
            disorder=spec.disorder,
            fluctuation=spec.fluctuation,
        )
        k12 = compute_rate(spec).k
        k21 = compute_rate(back).k
    else:
        k12, k21 = float(me["k12"]), float(me["k21"])
    sol = me_propagate(k12, k21, float(me["p2_0"]), t_grid)
    name = f"{config['output']['prefix']}_population.csv"
    count = _write_csv(
        out_dir / name,
        ["t (1/omega_c)", "p1 (probability)", "p2 (probability)"],
        zip(sol.t, sol.p1, sol.p2),
    )
    return [{"file": name, "rows": count, "statuses": {"ok": count}}], 0


RUNNERS = {
    "lineshape": run_lineshape,
    "rate": run_rate,
    "sweep": run_rate_sweep,
    "mc-validate": run_mc,
    "me-propagate": run_me,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goldenrate",
        description="Golden-rule transition rates for a two-state system in a harmonic bath",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--preset", help="packaged preset name (fig1, fig2, fig3, fig4)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. bath.theta=0.2")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes for grid-parallel commands")
    parser.add_argument("--seed", type=int, default=None, help="override mc.seed")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    started = time.time()
    try:
        config = resolve_config(args)
        from pathlib import Path

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs, code = RUNNERS[args.command](config, out_dir, max(1, args.workers))
        manifest = {
            "tool": "goldenrate",
            "version": __version__,
            "command": args.command,
            "unit_system": UNIT_SYSTEM,
            "resolved_config": config,
            "workers": args.workers,
            "wall_time_s": time.time() - started,
            "outputs": outputs,
        }
        manifest_path = out_dir / f"{config['output']['prefix']}_manifest.json"
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for item in outputs:
            print(f"wrote {out_dir / item['file']} ({item['rows']} rows)")
        print(f"wrote {manifest_path}")
        return code
    except (ValidationError, ModelError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, EnvelopeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except IOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
