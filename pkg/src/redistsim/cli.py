"""Command-line front end: simulate, summarize, diagnose, plot, validate-map."""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as rio
from .config import load_config, parse_config
from .diagnostics import build_report, verify_plans
from .errors import ConfigError, RedistError, SamplerCollapse
from .graph import as_plan
from .ingest import load_map
from .metrics import ElectionSet, opportunity_districts, summarize
from .plotting import boxplot, histogram
from .sampler import add_reference, match_numbers, smc_sample, thin

log = logging.getLogger("redistsim")


def load_run_map(cfg):
    for p in cfg.input_paths():
        if not Path(p).exists():
            raise ConfigError(f"input file not found: {p}")
    return load_map(cfg.map.attributes, cfg.map.adjacency, cfg.map.geometry,
                    ndists=cfg.ndists, pop_tol=cfg.pop_tol, admin_units=cfg.admin_units,
                    pop_col=cfg.map.pop_col, snap=cfg.map.snap)


def elections_for(cfg, rmap):
    if cfg.elections:
        return ElectionSet.from_config(cfg.elections)
    return ElectionSet.from_columns(rmap.data.columns)


def reference_plan(rmap, column):
    if column not in rmap.data.columns:
        raise ConfigError(f"reference column '{column}' not in attributes")
    vals = rmap.data[column]
    if vals.isna().any():
        raise ConfigError(f"reference column '{column}' has missing values")
    try:
        return as_plan(vals.to_numpy(), rmap.ndists)
    except RedistError as exc:
        raise ConfigError(f"reference column '{column}': {exc}") from None


def _opportunity(ensemble, rmap, cfg, elections):
    group = cfg.opportunity_group
    if not group:
        return None
    counts = {str(d): opportunity_districts(p, rmap, group, elections)
              for d, p in zip(ensemble.draw, ensemble.plans)}
    sims = [counts[str(d)] for d, r in zip(ensemble.draw, ensemble.reference) if not r]
    return {"group": group, "sim_min": int(min(sims)), "sim_mean": float(np.mean(sims)),
            "references": {str(d): counts[str(d)] for d in ensemble.reference_names}}


def _config_record(cfg_path):
    """Raw config with absolute paths, stored in the sidecar for later commands."""
    import yaml
    cfg_path = Path(cfg_path).resolve()
    with open(cfg_path) as fh:
        raw = yaml.safe_load(fh)
    raw = json.loads(json.dumps(raw))
    for key in ("attributes", "adjacency", "geometry"):
        if raw.get("map", {}).get(key):
            raw["map"][key] = str((cfg_path.parent / raw["map"][key]).resolve())
    raw.pop("output", None)
    return raw


def simulate(cfg, cfg_record=None):
    """Run the full pipeline in memory; returns (rmap, ensemble, stats, report)."""
    rmap = load_run_map(cfg)
    elections = elections_for(cfg, rmap)
    refs = {name: reference_plan(rmap, name) for name in cfg.reference}

    e = smc_sample(rmap, cfg.constraint_spec(), cfg.sampler)
    if cfg.thin is not None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.sampler.seed, spawn_key=(2 ** 31,)))
        e = thin(e, cfg.thin, rng)
    for name in reversed(cfg.reference):
        e = add_reference(e, refs[name], name, rmap.graph)
    if cfg.match_to:
        e = match_numbers(e, refs[cfg.match_to], rmap.pop)
    if cfg_record is not None:
        e.meta["config"] = cfg_record
    e.meta["map"] = rmap.summary()

    stats = summarize(e, rmap, elections, cfg.year_columns)
    report = build_report(e, stats, rmap, cfg.diagnostics, _opportunity(e, rmap, cfg, elections))
    return rmap, e, stats, report


def write_run(out, rmap, e, stats, report):
    out = Path(out)
    rio.write_ensemble(e, rmap.geoids, out)
    rio.atomic_write(out / rio.STATS, rio.stats_text(stats))
    rio.atomic_write(out / rio.REPORT, report.to_json() + "\n")
    rio.atomic_write(out / rio.REPORT_TXT, report.summary() + "\n")


def _apply_overrides(cfg, args):
    params = cfg.sampler
    if getattr(args, "seed", None) is not None:
        params = replace(params, seed=args.seed)
    if getattr(args, "chains", None) is not None:
        params = replace(params, nchains=args.chains)
    if getattr(args, "workers", None) is not None:
        params = replace(params, workers=args.workers)
    cfg.sampler = params
    if getattr(args, "strict", False):
        cfg.diagnostics = replace(cfg.diagnostics, strict=True)
    return cfg


def _out_dir(cfg, args):
    out = args.out or cfg.output
    if out is None:
        raise ConfigError("output: no output directory (set 'output' or pass --out)")
    return Path(out)


def cmd_simulate(args):
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(cfg, args)
    record = _config_record(args.config)
    record.setdefault("sampler", {}).update(seed=cfg.sampler.seed, nchains=cfg.sampler.nchains)
    try:
        rmap, e, stats, report = simulate(cfg, record)
    except SamplerCollapse as exc:
        print(f"error: sampler collapsed at stage {exc.stage}: {exc}", file=sys.stderr)
        return 3
    write_run(out, rmap, e, stats, report)
    print(f"wrote {e.n_sims} plans + {len(e.reference_names)} reference(s) to {out}")
    print(report.summary())
    return 0 if report.passed else 1


def _run_context(run_dir, args=None):
    run_dir = Path(run_dir)
    for name in (rio.PLANS_WIDE, rio.SIDECAR):
        if not (run_dir / name).exists():
            raise ConfigError(f"run artifact missing: {run_dir / name}")
    e, geoids = rio.read_ensemble(run_dir)
    if args is not None and getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        raw = e.meta.get("config")
        if raw is None:
            raise ConfigError("run has no stored config; pass --config")
        cfg = parse_config(raw, ".")
    rmap = load_run_map(cfg)
    if rmap.geoids != geoids:
        raise ConfigError("run plans and map disagree on precinct ids")
    return cfg, rmap, e


def cmd_summarize(args):
    run_dir = Path(args.run or args.out)
    cfg, rmap, e = _run_context(run_dir, args)
    stats = summarize(e, rmap, elections_for(cfg, rmap), cfg.year_columns)
    target = Path(args.stats_out) if args.stats_out else run_dir / rio.STATS
    rio.atomic_write(target, rio.stats_text(stats))
    print(f"wrote {len(stats)} rows to {target}")
    return 0


def cmd_diagnose(args):
    run_dir = Path(args.run or args.out)
    cfg, rmap, e = _run_context(run_dir, args)
    if args.strict:
        cfg.diagnostics = replace(cfg.diagnostics, strict=True)
    stats_path = run_dir / rio.STATS
    if stats_path.exists():
        stats = rio.read_stats(stats_path)
    else:
        stats = summarize(e, rmap, elections_for(cfg, rmap), cfg.year_columns)
    report = build_report(e, stats, rmap, cfg.diagnostics)
    bad = verify_plans(e, rmap, cfg.pop_tol, cfg.admin_units)
    print(report.summary())
    for draw, why in bad:
        print(f"  [FAIL] draw {draw} violates {', '.join(why)}")
    rio.atomic_write(run_dir / rio.REPORT, report.to_json() + "\n")
    rio.atomic_write(run_dir / rio.REPORT_TXT, report.summary() + "\n")
    return 0 if report.passed and not bad else 1


def cmd_plot(args):
    stats = rio.read_stats(args.stats)
    if args.kind == "boxplot":
        res = boxplot(stats, args.column, args.out)
        print(f"boxplot of {args.column}: {res['boxes']} ranked districts over {res['draws']} draws")
    else:
        res = histogram(stats, args.column, args.out, bins=args.bins)
        print(f"histogram of {args.column}: {int(res['counts'].sum())} draws")
    return 0


def cmd_validate_map(args):
    cfg = load_config(args.config)
    rmap = load_run_map(cfg)
    info = rmap.summary()
    info["elections"] = [el.name for el in elections_for(cfg, rmap)]
    for name in cfg.reference:
        plan = reference_plan(rmap, name)
        pops = np.bincount(plan - 1, weights=rmap.pop, minlength=rmap.ndists)
        info[f"reference:{name}:plan_dev"] = float(np.max(np.abs(pops - rmap.parity)) / rmap.parity)
    print(json.dumps(info, indent=2))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="redistsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample plans and write all run artifacts")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--chains", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("summarize", help="recompute the statistics table for a run")
    s.add_argument("run", nargs="?")
    s.add_argument("--out")
    s.add_argument("--config")
    s.add_argument("--stats-out")
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("diagnose", help="re-verify a run and print its diagnostics")
    s.add_argument("run", nargs="?")
    s.add_argument("--out")
    s.add_argument("--config")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("plot", help="boxplot or histogram from a stats file (SVG)")
    s.add_argument("stats")
    s.add_argument("--kind", choices=("boxplot", "histogram"), default="boxplot")
    s.add_argument("--column", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bins", type=int, default=30)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("validate-map", help="load and check the map described by a config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_validate_map)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("summarize", "diagnose") and not (args.run or args.out):
        print("error: give a run directory (positional or --out)", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except RedistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
