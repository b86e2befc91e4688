"""Command-line entry point: simulate, sweep, train, explain, optimize, report.

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 schema error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import explain as explain_mod
from . import optimizer as opt
from .config import RunConfig, load_config
from .errors import (ConfigurationError, InputDomainError, InsufficientDataError, NoFeasiblePointError,
                     ParseError, UnsupportedModelError)
from .handover import CopVector
from .io import atomic_write_text
from .kpi import NormBounds
from .seeding import derive_seed
from .simulation import simulate
from .surrogate import BAND_TARGETS, KPI_TARGETS, evaluate, fit, load_model, predict, save_model, split_dataset
from .sweep import (SweepSpec, _num, dataset_surface, dataset_to_text, format_metadata,
                    parse_dataset, run_sweep, surface_to_text)

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_SCHEMA = 0, 2, 3, 4
EVENT_HEADER = ("time_ms", "user_id", "event", "source_cell", "target_cell", "outcome", "cause")
DEFAULT_COP = "64,-96,-96,64,0"
FIG5_FIXED = {"a5_ttt": 64, "a3_ttt": 64, "a3_off": 0.0}


class MissingInput(Exception):
    pass


def smoke_dataset_path() -> Path:
    return Path(str(resources.files("hoopt") / "data" / "smoke_dataset.csv"))


# --- helpers ---------------------------------------------------------------------------


def _meta(cfg: RunConfig, **extra) -> dict:
    return {"config_sha256": cfg.sha256(), "master_seed": cfg.master_seed, **extra}


def _header(cfg: RunConfig, **extra) -> str:
    return format_metadata(_meta(cfg, **extra))


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out_dir) / name


def _require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"missing input file: {p}")
    return p


def _parse_cop(text: str) -> CopVector:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 5:
        raise ConfigurationError("cop: expected five comma-separated values "
                                 "a5_ttt,a5_th1,a5_th2,a3_ttt,a3_off", "cop")
    try:
        a5_ttt, th1, th2, a3_ttt, off = (float(p) for p in parts)
    except ValueError:
        raise ConfigurationError(f"cop: non-numeric value in {text!r}", "cop") from None
    if not (a5_ttt.is_integer() and a3_ttt.is_integer()):
        raise ConfigurationError("cop: TTT values must be integers (ms)", "cop")
    cop = CopVector(int(a5_ttt), th1, th2, int(a3_ttt), off)
    try:
        return cop.validate()
    except InputDomainError as exc:
        raise ConfigurationError(str(exc), str(exc).split("=")[0]) from exc


def _read_rows(path):
    rows, meta = parse_dataset(_require(path).read_text())
    return rows, meta


def _dataset_arg(args, cfg) -> Path:
    if getattr(args, "smoke", False):
        return smoke_dataset_path()
    return Path(args.dataset) if args.dataset else _out(cfg, "dataset.csv")


def _model_arg(args, cfg) -> Path:
    return Path(args.model) if args.model else _out(cfg, "model.json")


def _load_bundle(path):
    model, doc = load_model(_require(path))
    try:
        bounds = {k: NormBounds(float(v[0]), float(v[1])) for k, v in doc["bounds"].items()}
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"model file lacks normalization bounds: {exc}") from exc
    missing = [k for k in KPI_TARGETS if k not in model.regressors or k not in bounds]
    if missing:
        raise ParseError(f"model file lacks KPI models {missing}")
    return model, doc, bounds


def _write(path: Path, text: str) -> None:
    atomic_write_text(path, text)
    print(f"wrote {path}")


def _kpi_line(k) -> str:
    loads = " ".join(f"load_{b}={100 * v:.4f}%" for b, v in zip(("1700", "2100", "3500"), k.band_loads))
    return (f"edge_rsrp={k.edge_rsrp:.4f}dBm hosr={k.hosr:.4f}% {loads} "
            f"load_factor={k.load_factor:.4f}%")


# --- commands --------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, args) -> int:
    cop = _parse_cop(args.cop)
    out = simulate(cop, cfg.net, cfg.master_seed, cfg.prop, cfg.handover, log_events=args.events)
    led = out.ledger
    lines = [
        _header(cfg, sim_duration_ms=cfg.net.sim_duration),
        "cop " + " ".join(f"{n}={_num(v)}" for n, v in zip(CopVector.field_names(), cop.as_array())),
        "kpi " + _kpi_line(out.kpis),
        f"handovers hos={led.hos} hof={led.hof} a3_hos={led.a3_hos} a3_hof={led.a3_hof} "
        f"a5_hos={led.a5_hos} a5_hof={led.a5_hof} too_late={led.too_late} too_early={led.too_early}",
    ]
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    _write(_out(cfg, "simulate.txt"), report)
    if args.events:
        buf = io.StringIO()
        buf.write(_header(cfg) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        w.writerows(out.events)
        _write(_out(cfg, "events.csv"), buf.getvalue())
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    sub = args.grid_subsample if args.grid_subsample is not None else cfg.sweep.grid_subsample
    if sub is not None and sub <= 0:
        raise ConfigurationError("grid subsample must be positive", "grid_subsample")
    spec = SweepSpec(cfg.sweep.grid, cfg.net, cfg.prop, cfg.handover, cfg.master_seed,
                     cfg.sweep.seed_policy, sub)
    rows = run_sweep(spec, jobs=args.jobs)
    meta = _meta(cfg, sim_duration_ms=cfg.net.sim_duration, seed_policy=cfg.sweep.seed_policy)
    _write(_out(cfg, "dataset.csv"), dataset_to_text(rows, meta))
    print(f"{len(rows)} rows")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    rows, _ = _read_rows(_dataset_arg(args, cfg))
    seed = cfg.master_seed
    train, test, tr_idx, te_idx = split_dataset(rows, cfg.model.test_fraction, seed)
    entries = []
    for kind in cfg.model.kinds:
        model = fit(cfg.model.model_kind(kind), train, KPI_TARGETS, seed)
        entries += evaluate(model, test)
    buf = io.StringIO()
    buf.write(_header(cfg, train_rows=len(train), test_rows=len(test)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("kind", "kpi", "rmse"))
    for e in entries:
        w.writerow((e.kind, e.kpi, repr(e.rmse)))
    sys.stdout.write(buf.getvalue())
    _write(_out(cfg, "eval_report.csv"), buf.getvalue())

    # the optimizer's surrogate, with band-load models for the constraints
    model = fit(cfg.model.model_kind(cfg.model.optimizer_kind), train, KPI_TARGETS + BAND_TARGETS, seed)
    model.train_index, model.test_index = tr_idx, te_idx
    bounds = opt.kpi_bounds(rows)
    extra = {
        "bounds": {k: [b.lo, b.hi] for k, b in bounds.items()},
        "config_sha256": cfg.sha256(),
        "master_seed": cfg.master_seed,
        "dataset_rows": len(rows),
    }
    save_model(model, _out(cfg, "model.json"), extra)
    print(f"wrote {_out(cfg, 'model.json')}")
    return EXIT_OK


def cmd_explain(cfg: RunConfig, args) -> int:
    model, _, _ = _load_bundle(_model_arg(args, cfg))
    rows, _ = _read_rows(_dataset_arg(args, cfg))
    if not rows:
        raise InsufficientDataError("dataset has no rows")
    bg = explain_mod.background_sample(rows, cfg.model.background_size, cfg.master_seed)
    summary = explain_mod.mean_abs_shap(model, rows, KPI_TARGETS, background=bg, seed=cfg.master_seed)
    text = _header(cfg, model_kind=model.kind.name, rows=len(rows)) + "\n" + summary.to_csv()
    sys.stdout.write(text)
    _write(_out(cfg, "importance.csv"), text)
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, args) -> int:
    model, _, bounds = _load_bundle(_model_arg(args, cfg))
    o = cfg.optimizer
    if args.reference_weights:
        w_list = opt.REFERENCE_WEIGHTS
    else:
        alpha = o.weights.alpha if args.alpha is None else args.alpha
        beta = o.weights.beta if args.beta is None else args.beta
        try:
            opt.ObjectiveWeights(alpha, beta)
        except InputDomainError as exc:
            raise ConfigurationError(str(exc), "alpha") from exc
        w_list = ((alpha, beta),)
    s = o.schedule
    sched = opt.AnnealingSchedule(s.initial_temp, s.cooling_ratio, s.budget, s.neighbor_radius,
                                  derive_seed(cfg.master_seed, "annealing", s.seed), s.final_temp)
    runs = args.sa_runs if args.sa_runs is not None else o.sa_runs
    grid = cfg.sweep.grid
    table = opt.GridObjective(model, grid, bounds, o.constraints)
    rows = opt.compare(runs, model, grid, w_list, o.constraints, sched=sched, table=table)
    text = opt.comparison_to_csv(rows, _header(cfg, model_kind=model.kind.name, sa_runs=runs))
    sys.stdout.write(text)
    _write(_out(cfg, "comparison.csv"), text)

    if args.validate:
        buf = io.StringIO()
        buf.write(_header(cfg, sim_duration_ms=cfg.net.sim_duration) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("alpha", "beta", *CopVector.field_names(),
                    *(f"pred_{k}" for k in KPI_TARGETS), *(f"sim_{k}" for k in KPI_TARGETS)))
        for alpha, beta in w_list:
            best = opt.brute_force(model, grid, opt.ObjectiveWeights(alpha, beta), o.constraints, table=table)
            pred = predict(model, best.best_cop)
            k = simulate(best.best_cop, cfg.net, cfg.master_seed, cfg.prop, cfg.handover).kpis
            measured = {"edge_rsrp": k.edge_rsrp, "hosr": k.hosr, "load_factor": k.load_factor}
            w.writerow((_num(alpha), _num(beta), *(_num(v) for v in best.best_cop.as_array()),
                        *(repr(pred[n]) for n in KPI_TARGETS), *(repr(float(measured[n])) for n in KPI_TARGETS)))
        sys.stdout.write(buf.getvalue())
        _write(_out(cfg, "validation.csv"), buf.getvalue())
    return EXIT_OK


def _parse_a3(spec: str) -> tuple[int, float]:
    try:
        t, o = spec.split(":")
        return int(t), float(o)
    except ValueError:
        raise ConfigurationError(f"--a3 expects TTT:OFFSET, got {spec!r}", "a3") from None


def _argmax_cell(values, th1, th2):
    if not np.isfinite(values).any():
        return None
    i, j = opt.argmax_2d(values)
    return th1[i], th2[j], float(values[i, j])


def cmd_report(cfg: RunConfig, args) -> int:
    rows, _ = _read_rows(_dataset_arg(args, cfg))
    model_path = _model_arg(args, cfg)
    bundle = _load_bundle(model_path) if (args.model or model_path.is_file()) else None
    grid = cfg.sweep.grid
    _, th1, th2, _, _ = grid.axes()
    settings = [_parse_a3(s) for s in (args.a3 or ["64:0", "640:10"])]

    coupling = [("kpi", "source", "a5_ttt_ms", "a3_ttt_ms", "a3_off_db",
                 "argmax_th1_dbm", "argmax_th2_dbm", "max_value")]
    for kpi_name in KPI_TARGETS:
        for a3_ttt, a3_off in settings:
            tag = f"{kpi_name}_a5ttt{args.a5_ttt}_a3ttt{a3_ttt}_a3off{_num(a3_off)}"
            sources = [("dataset", dataset_surface(rows, kpi_name, args.a5_ttt, a3_ttt, a3_off, grid))]
            if bundle is not None:
                cops = [CopVector(args.a5_ttt, a, b, a3_ttt, a3_off) for a in th1 for b in th2]
                pred = predict(bundle[0], cops)[kpi_name].reshape(len(th1), len(th2))
                sources.append(("surrogate", pred))
            for source, values in sources:
                _write(_out(cfg, f"surface_{source}_{tag}.csv"),
                       surface_to_text(th1, th2, values, _meta(cfg, kpi=kpi_name, source=source)))
                cell = _argmax_cell(values, th1, th2)
                if cell is not None:
                    coupling.append((kpi_name, source, args.a5_ttt, a3_ttt, _num(a3_off),
                                     _num(cell[0]), _num(cell[1]), repr(cell[2])))
    buf = io.StringIO()
    buf.write(_header(cfg) + "\n")
    csv.writer(buf, lineterminator="\n").writerows(coupling)
    sys.stdout.write(buf.getvalue())
    _write(_out(cfg, "coupling.csv"), buf.getvalue())

    if bundle is not None:
        model, _, bounds = bundle
        w = cfg.optimizer.weights
        fixed = dict(FIG5_FIXED)
        surf = opt.surface_slice(model, fixed, w, bounds, grid, cfg.optimizer.constraints)
        meta = _meta(cfg, alpha=_num(w.alpha), beta=_num(w.beta), local_maxima=surf.local_maxima)
        _write(_out(cfg, "objective_surface.csv"), surface_to_text(*surf.axes, surf.values, meta))
        print(f"objective surface: {surf.values.size} points, {surf.local_maxima} strict local maxima")
    return EXIT_OK


# --- argument parsing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hoopt", description="Joint A3/A5 handover parameter optimization.")
    p.add_argument("--config", help="INI run configuration (built-in defaults when omitted)")
    p.add_argument("--seed", type=int, help="override network.master_seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="one seeded run for a COP vector")
    s.add_argument("--cop", default=DEFAULT_COP, help="a5_ttt,a5_th1,a5_th2,a3_ttt,a3_off")
    s.add_argument("--events", action="store_true", help="also write the handover event log")

    s = sub.add_parser("sweep", help="simulate the COP grid and write the dataset")
    s.add_argument("--grid-subsample", type=int, help="number of grid points drawn deterministically")

    def data_args(sp, model=False):
        sp.add_argument("--dataset", help="dataset CSV (default OUT/dataset.csv)")
        sp.add_argument("--smoke", action="store_true", help="use the shipped 200-row smoke dataset")
        if model:
            sp.add_argument("--model", help="model bundle (default OUT/model.json)")

    data_args(sub.add_parser("train", help="fit and evaluate the surrogate models"))
    data_args(sub.add_parser("explain", help="mean |SHAP| importance per KPI"), model=True)

    s = sub.add_parser("optimize", help="simulated annealing vs brute force on the surrogate")
    s.add_argument("--model", help="model bundle (default OUT/model.json)")
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--reference-weights", "--table3", dest="reference_weights", action="store_true",
                   help="use the four reference weight pairs")
    s.add_argument("--sa-runs", type=int, help="annealing repetitions per weight pair")
    s.add_argument("--validate", action="store_true", help="re-simulate each brute-force winner")

    s = sub.add_parser("report", help="KPI and objective surfaces over (th1, th2)")
    data_args(s, model=True)
    s.add_argument("--a5-ttt", type=int, default=64)
    s.add_argument("--a3", action="append", help="A3 setting TTT:OFFSET (repeatable)")
    return p


COMMANDS = {
    "simulate": cmd_simulate, "sweep": cmd_sweep, "train": cmd_train,
    "explain": cmd_explain, "optimize": cmd_optimize, "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = cfg.with_out(args.out)
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be at least 1", "jobs")
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"configuration error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnsupportedModelError, NoFeasiblePointError, InputDomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInput, FileNotFoundError) as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ParseError, InsufficientDataError, json.JSONDecodeError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
