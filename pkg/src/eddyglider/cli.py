"""
Command-line front end.

Every command writes its outputs plus ``manifest.json`` into the output
directory.  Exit codes: 0 success, 1 runtime failure, 2 invalid
configuration or usage.  Failures print a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .geo import GridSpec, OutsideRegion, SURVEY_REGION, Region
from .io import (FormatError, load_dataset, load_field, read_json, store_field, store_table,
                 store_track, write_json)

OUT_ENV = "EDDYGLIDER_OUT"


class ConfigError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field, self.message = field, message


# --------------------------------------------------------------------------
# helpers

def _out_dir(args) -> Path:
    root = Path(os.environ.get(OUT_ENV, "runs"))
    out = Path(args.out_dir) if args.out_dir else root / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        cfg = read_json(args.config)
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {args.config}") from None
    except FormatError as exc:
        raise ConfigError("--config", str(exc)) from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return cfg


def _apply_config(args, parser_dests: set[str], skip=()) -> None:
    """Config-file keys fill options not given on the command line."""
    cfg = _load_config(args)
    for key, val in cfg.items():
        dest = {"lambda": "lam"}.get(key, key.replace("-", "_"))
        if dest in skip:
            continue
        if dest not in parser_dests:
            raise ConfigError(f"config.{key}", "unknown option")
        if getattr(args, dest, None) in (None, False):
            setattr(args, dest, val)


def _parse_blocks(text: str, field: str = "--blocks") -> tuple[int, int, int]:
    try:
        parts = tuple(int(p) for p in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(field, f"expected BLONGxBLATxBDEP, got {text!r}") from None
    if len(parts) != 3 or min(parts) < 1:
        raise ConfigError(field, f"expected three positive counts, got {text!r}")
    return parts


def _parse_int_list(text: str, field: str) -> list[int]:
    text = str(text)
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(field, f"expected integers like 4..10 or 10,20,40, got {text!r}") from None


def _parse_lambda(text):
    if text is None or str(text).lower() == "gcv":
        return "gcv"
    try:
        v = float(text)
    except ValueError:
        raise ConfigError("--lambda", f"expected 'gcv' or a number, got {text!r}") from None
    if v < 0:
        raise ConfigError("--lambda", "must be non-negative")
    return v


def _region_from(obj, field: str) -> Region:
    try:
        return Region.from_dict(obj)
    except KeyError as exc:
        raise ConfigError(f"{field}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(field, str(exc)) from None


def _grid_from(obj, field: str) -> GridSpec:
    try:
        return GridSpec.from_dict(obj)
    except KeyError as exc:
        raise ConfigError(f"{field}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(field, str(exc)) from None


def _set_threads(n: int) -> None:
    if n and n > 0:
        import numba
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _manifest(args, out: Path, outputs: list, timings: dict, extra: dict | None = None) -> Path:
    cfg = {k: v for k, v in vars(args).items() if not k.startswith("_")}
    m = {"command": args.command, "argv": sys.argv[1:] if args._argv is None else args._argv,
         "config": cfg, "seed": args.seed, "version": __version__,
         "python": platform.python_version(), "numpy": np.__version__,
         "timings": timings, "outputs": [str(p) for p in outputs]}
    if extra:
        m.update(extra)
    path = out / "manifest.json"
    write_json(path, m)
    return path


# --------------------------------------------------------------------------
# commands

def cmd_synth_eddy(args) -> tuple[list, dict]:
    from .eddy import EddyParams, eddy_series, synth_eddy

    cfg = _load_config(args)
    region = _region_from(cfg.pop("region"), "config.region") if "region" in cfg else SURVEY_REGION
    grid = _grid_from(cfg.pop("grid"), "config.grid") if "grid" in cfg else GridSpec()
    days = int(cfg.pop("days", args.days or 1))
    for key in cfg:
        if key not in EddyParams.__dataclass_fields__:
            raise ConfigError(f"config.{key}", "unknown eddy parameter")
    try:
        params = EddyParams.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        name = str(exc).split()[0]
        raise ConfigError(f"config.{name}" if name in EddyParams.__dataclass_fields__ else "config",
                          str(exc)) from None
    if args.seed is not None:
        params = replace(params, seed=args.seed)
    out = _out_dir(args)
    T, S, (u, v) = synth_eddy(params, grid, region)
    outputs = [store_field(T, out / "temperature.csv"), store_field(S, out / "salinity.csv"),
               store_field(u, out / "u.csv"), store_field(v, out / "v.csv")]
    if days > 1:
        for d, (ud, vd) in enumerate(eddy_series(params, days, spec=grid, region=region)):
            outputs.append(store_field(ud, out / "currents" / f"day{d:03d}_u.csv"))
            outputs.append(store_field(vd, out / "currents" / f"day{d:03d}_v.csv"))
    write_json(out / "eddy_params.json", params.to_dict())
    return outputs + [out / "eddy_params.json"], {"params": params.to_dict()}


def _eval_points(args):
    """Query nodes from --eval-grid (JSON with region and grid) or the truth field."""
    if args.eval_grid:
        doc = read_json(args.eval_grid)
        region = _region_from(doc.get("region", SURVEY_REGION.to_dict()), "eval-grid.region")
        grid = _grid_from(doc.get("grid", GridSpec().to_dict()), "eval-grid.grid")
        return region, grid
    if args.truth:
        f = load_field(args.truth)
        return f.region, f.spec
    raise ConfigError("--eval-grid", "required (or give --truth)")


def cmd_reconstruct(args):
    from .blocking import blocked_fit, make_partition
    from .design import pearson, rmse
    from .geo import GriddedField3D

    if not args.samples:
        raise ConfigError("--samples", "required")
    blocks = _parse_blocks(args.blocks or "3x3x40")
    c = float(args.overlap if args.overlap is not None else 0.25)
    if not 0 <= c < 1:
        raise ConfigError("--overlap", "must lie in [0, 1)")
    method = args.method or "tps"
    if method not in ("tps", "idw"):
        raise ConfigError("--method", "expected tps or idw")
    lam = _parse_lambda(args.lam)
    samples = load_dataset(args.samples)
    if len(samples) == 0:
        raise ValueError(f"{args.samples}: no samples")
    eval_region, grid = _eval_points(args)
    region = _region_from(read_json(args.region), "region") if args.region else eval_region
    out = _out_dir(args)
    t0 = time.perf_counter()
    model = blocked_fit(samples, make_partition(*blocks, c), region, lam=lam, method=method,
                        threads=args.threads or 1)
    t_fit = time.perf_counter() - t0
    nodes = grid.nodes(eval_region)
    pred = model(nodes)
    field = GriddedField3D(eval_region, grid, pred.reshape(grid.shape), "prediction")
    out_csv = Path(args.out) if args.out else out / "prediction.csv"
    if not out_csv.is_absolute() and args.out:
        out_csv = out / out_csv
    store_field(field, out_csv)
    report = model.report_dict()
    metrics = {}
    if args.truth:
        truth = load_field(args.truth)
        ref = truth(nodes)
        metrics = {"rmse": rmse(pred, ref), "corr": pearson(pred, ref),
                   "range": float(ref.max() - ref.min())}
        report["metrics"] = metrics
    rep_path = out_csv.with_name(out_csv.stem + "_report.json")
    write_json(rep_path, report)
    return [out_csv, out_csv.with_suffix(".json"), rep_path], {"fit_seconds": t_fit, **metrics}


def cmd_design(args):
    from .design import InterpConfig, eval_design, gen_formation, select_best, default_test_set
    from .glider import GliderParams

    if not args.truth:
        raise ConfigError("--truth", "required")
    kinds = [k.strip() for k in (args.kinds or "parallel,parallel90,center,cross").split(",")]
    from .design import KINDS
    for k in kinds:
        if k not in KINDS:
            raise ConfigError("--kinds", f"unknown formation {k!r}")
    Ks = _parse_int_list(args.gliders or "4..10", "--gliders")
    if min(Ks) < 2:
        raise ConfigError("--gliders", "formations need at least 2 gliders")
    cfg = InterpConfig(blocks=_parse_blocks(args.blocks or "3x3x40"),
                       overlap=float(args.overlap if args.overlap is not None else 0.25),
                       lam=_parse_lambda(args.lam), threads=args.threads or 1)
    truth = load_field(args.truth)
    g = GliderParams()
    test = default_test_set(truth, g)
    out = _out_dir(args)
    reports = [eval_design(gen_formation(k, K, truth.region), truth, cfg, test, g)
               for k in kinds for K in Ks]
    best = select_best(reports)
    table = store_table(out / "design_table.csv", ["kind", "K", "length_km", "rmse", "corr",
                                                   "n_samples", "fit_seconds", "error"],
                        [[r.kind, r.K, f"{r.length_km:.3f}", repr(r.rmse), repr(r.corr),
                          r.n_samples, f"{r.fit_seconds:.3f}", r.error or ""] for r in reports])
    prof_rows = [[r.kind, r.K, z, repr(e)] for r in reports for z, e in r.depth_profile]
    prof = store_table(out / "depth_profiles.csv", ["kind", "K", "depth", "rmse"], prof_rows)
    doc = {"interp": cfg.to_dict(), "test_nodes": len(test),
           "reports": [r.to_dict() for r in reports],
           "best": {"kind": best.kind, "K": best.K, "rmse": best.rmse,
                    "formation": best.formation.to_dict()}}
    rep = Path(args.out) if args.out else out / "report.json"
    if not rep.is_absolute() and args.out:
        rep = out / rep
    write_json(rep, doc)
    svg = _plot_profiles(reports, out / "depth_profiles.svg")
    return [rep, table, prof, svg], {"best": f"{best.kind} K={best.K}", "rmse": best.rmse}


def cmd_impute_current(args):
    from .currents import fit_ratio_model

    if not args.history:
        raise ConfigError("--history", "required")
    snaps = _load_history(args.history)
    model = fit_ratio_model(snaps)
    out = _out_dir(args)
    path = Path(args.out) if args.out else out / "ratio_model.json"
    if not path.is_absolute() and args.out:
        path = out / path
    write_json(path, model.to_dict())
    return [path], {"snapshots": len(snaps), "r2": [model.zonal.r2, model.meridional.r2]}


def _load_history(folder):
    folder = Path(folder)
    if not folder.is_dir():
        raise ConfigError("--history", f"not a directory: {folder}")
    us = sorted(folder.glob("*_u.csv"))
    if not us:
        raise ConfigError("--history", f"no *_u.csv files in {folder}")
    snaps = []
    for u in us:
        v = u.with_name(u.name[:-6] + "_v.csv")
        if not v.exists():
            raise FormatError(f"{u}: matching {v.name} not found")
        snaps.append((load_field(u), load_field(v)))
    return snaps


def _build_currents(spec: str, region: Region, args):
    """(truth, provider) from a --current specification."""
    from .control import swirl_currents
    from .currents import CurrentProvider, GriddedCurrent, RatioModel, UniformCurrent, fit_ratio_model
    from .eddy import EddyParams

    if spec in ("zero", "none"):
        return UniformCurrent(), CurrentProvider.uniform(region, 0.0, 0.0)
    if spec.startswith("uniform:"):
        try:
            u, v = (float(s) for s in spec.split(":", 1)[1].split(","))
        except ValueError:
            raise ConfigError("--current", "expected uniform:U,V in m/s") from None
        return UniformCurrent(u, v), CurrentProvider.uniform(region, u, v)
    if spec == "swirl":
        params = EddyParams()
        if args.eddy_config:
            try:
                params = EddyParams.from_dict(read_json(args.eddy_config))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError("--eddy-config", str(exc)) from None
        return swirl_currents(params, days=args.days or 31)
    path = Path(spec)
    if path.is_dir():
        snaps = _load_history(path)
        ratio = RatioModel.load(args.ratio) if args.ratio else fit_ratio_model(snaps)
        return GriddedCurrent(snaps), CurrentProvider.from_fields(snaps, ratio)
    raise ConfigError("--current", f"expected zero, uniform:U,V, swirl or a directory, got {spec!r}")


def _mission_from(doc, field="mission"):
    from .control import MISSIONS
    from .glider import LinePath

    if "builtin" in doc:
        k = doc["builtin"]
        if k not in MISSIONS:
            raise ConfigError(f"{field}.builtin", "expected 1..5")
        return MISSIONS[k]
    try:
        return LinePath(tuple(doc["start"]), tuple(doc["end"]))
    except KeyError as exc:
        raise ConfigError(f"{field}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(field, str(exc)) from None


def cmd_control(args):
    from .control import ControlConfig, run_mission
    from .optim import OPTIMIZERS

    if not args.mission:
        raise ConfigError("--mission", "required")
    doc = read_json(args.mission) if Path(args.mission).exists() else None
    if doc is None:
        try:
            doc = {"builtin": int(args.mission)}
        except ValueError:
            raise ConfigError("--mission", f"not a file or a built-in mission index: {args.mission}") from None
    path = _mission_from(doc)
    try:
        ccfg = ControlConfig.from_dict(doc.get("control", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("mission.control", str(exc)) from None
    name = args.optimizer or ccfg.optimizer
    if name not in OPTIMIZERS:
        raise ConfigError("--optimizer", f"unknown optimizer {name!r}")
    if args.seed is not None:
        ccfg = replace(ccfg, opt=replace(ccfg.opt, seed=int(args.seed)))
    _set_threads(args.threads)
    truth, provider = _build_currents(args.current or "zero", ccfg.region, args)
    out = _out_dir(args)
    res = run_mission(path, ccfg, provider, truth, name)

    track = store_track(res.track_lonlat(), out / "track.csv")
    ll = res.surfacings_lonlat()
    from .control import line_distance
    dev = line_distance(res.surfacings, path.line_coefficients(ccfg.region))
    rows = []
    for k in range(len(res.surfacings)):
        row = [k, k * ccfg.glider.period, repr(ll[k, 0]), repr(ll[k, 1]),
               repr(res.surfacings[k, 0]), repr(res.surfacings[k, 1]), repr(dev[k])]
        if k >= 1:
            row += [repr(res.headings[k - 1]), repr(res.wall_times[k - 1])]
            row += ([repr(res.weights[k - 1][0]), repr(res.weights[k - 1][1]),
                     res.horizons[k - 1], repr(res.c_values[k - 1])]
                    if k - 1 < len(res.weights) else ["", "", "", ""])
        else:
            row += [""] * 6
        rows.append(row)
    surf = store_table(out / "surfacings.csv",
                       ["k", "t", "lon", "lat", "x_km", "y_km", "deviation_km", "heading_deg",
                        "wall_time_s", "w1", "w2", "H", "c"], rows)
    summary = res.summary()
    devj = out / "deviation.json"
    write_json(devj, summary)
    svg = _plot_mission(res, path, ccfg.region, out / "path.svg")
    if not res.completed:
        raise MissionFailed(summary, [track, surf, devj, svg])
    return [track, surf, devj, svg], summary


class MissionFailed(RuntimeError):
    def __init__(self, summary, outputs):
        super().__init__(f"mission not completed: {summary['reason']}")
        self.summary, self.outputs = summary, outputs


def cmd_bench(args):
    from .blocking import blocked_fit, make_partition
    from .design import default_test_set, design_region, gen_formation, rmse, sample_formation
    from .eddy import synth_eddy
    from .glider import GliderParams

    B_deps = _parse_int_list(args.blocks or "10,20,40,80", "--blocks")
    K = int(args.gliders or 5)
    horiz = _parse_blocks(f"{args.horizontal or '3x3'}x1", "--horizontal")[:2]
    truth = load_field(args.truth) if args.truth else synth_eddy()[0]
    g = GliderParams()
    samples = sample_formation(gen_formation("parallel", K, truth.region), truth, g)
    test = default_test_set(truth, g)
    region = design_region(truth, g)
    lam = _parse_lambda(args.lam)
    rows = []
    for b in B_deps:
        t0 = time.perf_counter()
        m = blocked_fit(samples, make_partition(*horiz, b, 0.25), region, lam=lam,
                        threads=args.threads or 1)
        t_fit = time.perf_counter() - t0
        rows.append([b, f"{t_fit:.4f}", repr(rmse(m(test.X), test.y)), m.n_fitted,
                     sum(r.status == "singular" for r in m.report)])
    out = _out_dir(args)
    path = store_table(out / "bench.csv", ["B_dep", "fit_seconds", "rmse", "fitted_blocks",
                                           "singular_blocks"], rows)
    return [path], {"samples": len(samples), "rows": rows}


# --------------------------------------------------------------------------
# figures

def _plot_mission(res, path, region, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    tr = res.track_lonlat()
    ax.plot([path.start[0], path.end[0]], [path.start[1], path.end[1]], "k--", lw=1, label="designed")
    ax.plot(tr[:, 1], tr[:, 2], "-", lw=0.8, label="realized")
    s = res.surfacings_lonlat()
    ax.plot(s[:, 0], s[:, 1], ".", ms=3)
    ax.set_xlim(region.lon_min, region.lon_max)
    ax.set_ylim(region.lat_min, region.lat_max)
    ax.set_xlabel("longitude (deg E)")
    ax.set_ylabel("latitude (deg N)")
    ax.set_title(f"{res.optimizer}: {'completed' if res.completed else res.reason}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out


def _plot_profiles(reports, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 6))
    for r in reports:
        if r.depth_profile:
            z, e = np.array(r.depth_profile).T
            ax.plot(e, z, lw=0.8, label=f"{r.kind} K={r.K}")
    ax.invert_yaxis()
    ax.set_xlabel("RMSE")
    ax.set_ylabel("depth (m)")
    if len(reports) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out


# --------------------------------------------------------------------------
# entry point

COMMANDS = {
    "synth-eddy": cmd_synth_eddy,
    "reconstruct": cmd_reconstruct,
    "design": cmd_design,
    "impute-current": cmd_impute_current,
    "control": cmd_control,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None,
                        help=f"output directory (default ${OUT_ENV}/<command>, ${OUT_ENV} defaults to ./runs)")
    common.add_argument("--threads", type=int, default=None, help="worker cap")

    p = argparse.ArgumentParser(prog="eddyglider", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("synth-eddy", parents=[common], help="write a synthetic eddy field")
    s.add_argument("--days", type=int, default=None, help="also write N daily current snapshots")

    s = sub.add_parser("reconstruct", parents=[common], help="blocked TPS / IDW reconstruction")
    s.add_argument("--samples")
    s.add_argument("--region", help="JSON region used for normalisation")
    s.add_argument("--blocks", help="BLONGxBLATxBDEP")
    s.add_argument("--overlap", type=float)
    s.add_argument("--method", choices=("tps", "idw"))
    s.add_argument("--lambda", dest="lam", help="gcv or a fixed value")
    s.add_argument("--eval-grid", help="JSON with region and grid of query nodes")
    s.add_argument("--truth", help="field CSV to score against")
    s.add_argument("--out", help="prediction CSV")

    s = sub.add_parser("design", parents=[common], help="formation sweep")
    s.add_argument("--truth")
    s.add_argument("--kinds")
    s.add_argument("--gliders", help="e.g. 4..10 or 4,6,8")
    s.add_argument("--blocks")
    s.add_argument("--overlap", type=float)
    s.add_argument("--lambda", dest="lam")
    s.add_argument("--out", help="report JSON")

    s = sub.add_parser("impute-current", parents=[common], help="fit velocity-ratio cubics")
    s.add_argument("--history", help="directory of *_u.csv / *_v.csv snapshots")
    s.add_argument("--out")

    s = sub.add_parser("control", parents=[common], help="adaptive path control mission")
    s.add_argument("--mission", help="mission JSON or built-in mission index 1..5")
    s.add_argument("--optimizer")
    s.add_argument("--current", help="zero | uniform:U,V | swirl | directory of snapshots")
    s.add_argument("--eddy-config", help="eddy parameters for --current swirl")
    s.add_argument("--days", type=int, help="days of swirl snapshots")
    s.add_argument("--ratio", help="ratio model JSON for a snapshot directory")

    s = sub.add_parser("bench", parents=[common], help="fit time vs depth block count")
    s.add_argument("--blocks", help="comma list of B_dep values")
    s.add_argument("--horizontal", help="BLONGxBLAT (default 3x3)")
    s.add_argument("--gliders", type=int)
    s.add_argument("--truth")
    s.add_argument("--lambda", dest="lam")

    for s in sub.choices.values():
        s.set_defaults(_dests=frozenset(a.dest for a in s._actions))
    return p


def _fail(code: int, payload: dict) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)          # usage errors exit 2 from argparse
    args._argv = list(argv) if argv is not None else None
    fn = COMMANDS[args.command]
    started = time.time()
    try:
        if args.command != "synth-eddy":
            _apply_config(args, args._dests, skip={"config", "help"})
        _set_threads(args.threads)
        t0 = time.perf_counter()
        outputs, info = fn(args)
        elapsed = time.perf_counter() - t0
    except ConfigError as exc:
        return _fail(2, {"error": "config", "field": exc.field, "message": exc.message})
    except MissionFailed as exc:
        out = _out_dir(args)
        _manifest(args, out, exc.outputs, {"total_s": time.time() - started},
                  {"status": "failed", "info": exc.summary})
        return _fail(1, {"error": "MissionFailed", "message": str(exc), "summary": exc.summary})
    except (ValueError, OutsideRegion, FormatError, FileNotFoundError, RuntimeError,
            np.linalg.LinAlgError) as exc:
        return _fail(1, {"error": type(exc).__name__, "message": str(exc)})
    out = _out_dir(args)
    _manifest(args, out, outputs, {"total_s": elapsed}, {"status": "ok", "info": info})
    print(json.dumps({"status": "ok", "out_dir": str(out), **_jsonable(info)}))
    return 0


def _jsonable(d: dict) -> dict:
    return json.loads(json.dumps(d, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


if __name__ == "__main__":
    sys.exit(main())
