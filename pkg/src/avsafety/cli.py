"""Command-line front end.

Subcommands
-----------
mc-eval    Monte Carlo risk-distribution estimate for one model.
poly-vol   Per-horizon dangerous-proportion table from the selected volume
           engines (ve / sob / cg / mc), mirroring the comparison-table layout.
rank       Safety ranking of several models with cumulative-proportion CSVs.
calibrate  Fit car-following parameters from trajectory CSVs.

Configuration is TOML with an optional ``include`` list of files merged
shallowly (later keys win).  Every report embeds the resolved configuration
and seed.  Exit codes: 0 success, 2 validation error, 3 runtime error,
4 infeasible request.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import montecarlo, polytope, reports
from .calibrate import TrajectoryError, fit_linear, ingest_trajectory
from .models import BehaviorModel, ModelError, as_generalized, load_model, save_model
from .montecarlo import ConfigError, McConfig, RiskBinning, mc_estimate, rank_models
from .polytope import DimensionGuardError, PolytopeError, dangerous_proportion_polytope
from .scenario import ScenarioBounds, ScenarioError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_INFEASIBLE = 4

ENV_PARALLEL = "AVSAFETY_PARALLEL"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


def load_config(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: {exc}")
    merged: dict = {}
    for inc in data.pop("include", []):
        inc_path = (path.parent / inc) if not Path(inc).is_absolute() else Path(inc)
        merged.update(load_config(inc_path))
    merged.update(data)
    return merged


def _bounds_from(cfg: dict, args) -> ScenarioBounds:
    block = cfg.get("bounds")
    if block is None:
        raise CliError("config missing [bounds] block")
    if args.horizon is not None:
        block = dict(block, horizon_T=args.horizon)
    try:
        return ScenarioBounds(**block)
    except (TypeError, ScenarioError) as exc:
        raise CliError(f"bounds: {exc}")


def _binning_from(cfg: dict) -> RiskBinning:
    block = cfg.get("binning", {})
    try:
        if "thresholds" in block:
            return RiskBinning(tuple(float(t) for t in block["thresholds"]))
        return RiskBinning()
    except ConfigError as exc:
        raise CliError(f"binning: {exc}")


def _mc_config_from(cfg: dict, args) -> McConfig:
    block = dict(cfg.get("mc", {}))
    if args.samples is not None:
        block["n_samples"] = args.samples
    if args.seed is not None:
        block["seed"] = args.seed
    if getattr(args, "mode", None):
        block["mode"] = args.mode
    if "parallel_width" not in block and os.environ.get(ENV_PARALLEL):
        block["parallel_width"] = int(os.environ[ENV_PARALLEL])
    try:
        return McConfig(**block)
    except (TypeError, ConfigError) as exc:
        raise CliError(f"mc: {exc}")


def _model_paths(cfg: dict, base: Path, many: bool) -> list:
    if many:
        paths = cfg.get("models")
        if not paths or len(paths) < 2:
            raise CliError("ranking requires a 'models' list with at least two entries")
    else:
        one = cfg.get("model")
        if not one:
            raise CliError("config missing 'model'")
        paths = [one]
    resolved = []
    for p in paths:
        pp = Path(p)
        if not pp.is_absolute():
            pp = base / pp
        if not pp.exists():
            raise CliError(f"model file not found: {pp}")
        resolved.append(pp)
    return resolved


def _load_models(paths) -> list:
    try:
        return [load_model(p) for p in paths]
    except ModelError as exc:
        raise CliError(str(exc))


def _out_dir(cfg: dict, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg.get("out", "avsafety_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_mc_eval(args) -> int:
    cfg = load_config(Path(args.config))
    bounds = _bounds_from(cfg, args)
    binning = _binning_from(cfg)
    mc_cfg = _mc_config_from(cfg, args)
    model = _load_models(_model_paths(cfg, Path(args.config).parent, many=False))[0]
    out = _out_dir(cfg, args)

    t0 = time.perf_counter()
    hist = mc_estimate(model, bounds, binning, mc_cfg)
    runtime = time.perf_counter() - t0
    name = model.name or "model"
    reports.write_histogram_csv(hist, out / f"{name}_histogram.csv")
    echo = {"bounds": asdict(bounds), "mc": asdict(mc_cfg),
            "thresholds": list(binning.thresholds), "model": name}
    reports.write_json(reports.histogram_report(hist, echo, runtime),
                       out / f"{name}_report.json")
    print(f"wrote {out / (name + '_histogram.csv')}")
    return EXIT_OK


def cmd_poly_vol(args) -> int:
    cfg = load_config(Path(args.config))
    bounds = _bounds_from(cfg, args)
    binning = _binning_from(cfg)
    mc_cfg = _mc_config_from(cfg, args)
    model = _load_models(_model_paths(cfg, Path(args.config).parent, many=False))[0]
    out = _out_dir(cfg, args)
    eta = float(cfg.get("eta", 1.0))
    engines = args.engines.split(",") if args.engines else list(cfg.get("engines", []))
    if not engines:
        raise CliError("no volume engines selected")
    for e in engines:
        if e not in ("ve", "sob", "cg", "mc"):
            raise CliError(f"unknown engine {e!r}")
    horizons = [args.horizon] if args.horizon is not None else list(cfg.get("horizons", [bounds.horizon_T]))

    params = as_generalized(model.cf)
    rows = []
    produced = 0
    for T in horizons:
        b_T = ScenarioBounds(**{**asdict(bounds), "horizon_T": int(T)})
        ve_percent = None
        for engine in engines:
            t0 = time.perf_counter()
            try:
                if engine == "mc":
                    hist = mc_estimate(model, b_T, binning,
                                       McConfig(n_samples=mc_cfg.n_samples, seed=mc_cfg.seed,
                                                mode="polytope_consistent",
                                                parallel_width=mc_cfg.parallel_width))
                    percent = 100.0 * hist.dangerous_proportion(eta)
                else:
                    kwargs = {} if engine == "ve" else {"seed": mc_cfg.seed}
                    res = dangerous_proportion_polytope(params, b_T, eta,
                                                        method=engine, **kwargs)
                    percent = 100.0 * res.dangerous_proportion
            except DimensionGuardError:
                rows.append({"T": T, "engine": engine, "percent": "", "time_seconds": "",
                             "error_vs_ve_percent": "", "status": "infeasible"})
                continue
            runtime = time.perf_counter() - t0
            if engine == "ve":
                ve_percent = percent
            err = ""
            if ve_percent is not None and engine != "ve" and ve_percent > 0:
                err = f"{100.0 * abs(percent - ve_percent) / ve_percent:.4f}"
            rows.append({"T": T, "engine": engine, "percent": f"{percent:.4f}",
                         "time_seconds": f"{runtime:.3f}",
                         "error_vs_ve_percent": err, "status": "ok"})
            produced += 1

    import csv as _csv
    table_path = out / "poly_vol_table.csv"
    with open(table_path, "w", newline="") as fh:
        w = _csv.DictWriter(fh, fieldnames=["T", "engine", "percent", "time_seconds",
                                            "error_vs_ve_percent", "status"])
        w.writeheader()
        w.writerows(rows)
    echo = {"bounds": asdict(bounds), "mc": asdict(mc_cfg), "eta": eta,
            "engines": engines, "horizons": horizons, "model": model.name}
    reports.write_json({"config": echo, "rows": rows}, out / "poly_vol_report.json")
    print(f"wrote {table_path}")
    return EXIT_OK if produced else EXIT_INFEASIBLE


def cmd_rank(args) -> int:
    cfg = load_config(Path(args.config))
    bounds = _bounds_from(cfg, args)
    binning = _binning_from(cfg)
    mc_cfg = _mc_config_from(cfg, args)
    models = _load_models(_model_paths(cfg, Path(args.config).parent, many=True))
    out = _out_dir(cfg, args)

    t0 = time.perf_counter()
    ranking = rank_models(models, bounds, binning, mc_cfg)
    runtime = time.perf_counter() - t0

    import csv as _csv
    with open(out / "ranking.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["rank", "model", "dangerous_proportion", "wilson_lo", "wilson_hi", "tied_with_next"])
        for r, name in enumerate(ranking.order, start=1):
            lo, hi = ranking.intervals[name]
            tied = any(name in pair for pair in ranking.ties
                       if pair[0] == name)
            w.writerow([r, name, f"{ranking.dangerous[name]:.8f}", f"{lo:.8f}", f"{hi:.8f}", tied])
    for name, hist in ranking.histograms.items():
        reports.write_histogram_csv(hist, out / f"{name}_cumulative.csv")
    echo = {"bounds": asdict(bounds), "mc": asdict(mc_cfg), "eta": ranking.eta,
            "models": [m.name for m in models]}
    reports.write_json({
        "config": echo,
        "runtime_seconds": runtime,
        "order": ranking.order,
        "dangerous": ranking.dangerous,
        "intervals": {k: list(v) for k, v in ranking.intervals.items()},
        "ties": [list(t) for t in ranking.ties],
    }, out / "ranking_report.json")
    print("ranking (safest first): " + " < ".join(ranking.order))
    if ranking.ties:
        for a, b in ranking.ties:
            print(f"statistical tie: {a} ~ {b}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if not args.trajectories:
        raise CliError("no trajectory files given")
    out = Path(args.out) if args.out else Path("avsafety_out")
    out.mkdir(parents=True, exist_ok=True)
    import csv as _csv
    rows = []
    for traj in args.trajectories:
        path = Path(traj)
        if not path.exists():
            raise CliError(f"trajectory file not found: {path}")
        try:
            with open(path) as fh:
                records = ingest_trajectory(fh)
            result = fit_linear(records, form=args.form)
        except (TrajectoryError, ModelError) as exc:
            raise CliError(f"{path}: {exc}")
        model = BehaviorModel(cf=result.params, name=path.stem)
        model_path = out / f"{path.stem}_model.toml"
        save_model(model, model_path)
        rows.append({"trajectory": str(path), "model_file": str(model_path),
                     "form": args.form, "rmse": f"{result.rmse:.6f}",
                     "n_points": result.n_points,
                     "negative_t_hw": result.negative_t_hw})
        print(f"{path.name}: rmse={result.rmse:.4f} -> {model_path}")
    with open(out / "calibration_rmse.csv", "w", newline="") as fh:
        w = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avsafety",
                                     description="Volume-based AV safety evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)

    p = sub.add_parser("mc-eval", help="Monte Carlo risk histogram for one model")
    common(p)
    p.add_argument("--mode", choices=["clamping", "polytope_consistent"], default=None)
    p.set_defaults(func=cmd_mc_eval)

    p = sub.add_parser("poly-vol", help="per-horizon volume table (ve/sob/cg/mc)")
    common(p)
    p.add_argument("--mode", choices=["clamping", "polytope_consistent"], default=None)
    p.add_argument("--engines", default=None, help="comma-separated engine list")
    p.set_defaults(func=cmd_poly_vol)

    p = sub.add_parser("rank", help="rank several models by dangerous proportion")
    common(p)
    p.add_argument("--mode", choices=["clamping", "polytope_consistent"], default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("calibrate", help="fit CF parameters from trajectory CSVs")
    p.add_argument("trajectories", nargs="*")
    p.add_argument("--form", choices=["generalized", "milanes"], default="milanes")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ModelError, ScenarioError, TrajectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DimensionGuardError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PolytopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
