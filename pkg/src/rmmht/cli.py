"""Command-line front end.

    rmmht simulate --config scenario.ini --out runs/a
    rmmht track    --config scenario.ini --algo rmm-mht --out runs/a
    rmmht compare  --config scenario.ini --runs 100 --out runs/a
    rmmht selftest

Exit codes: 0 success, 1 runtime or self-test failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import InvalidArgument, __version__
from .evaluation import (OspaParams, initial_beliefs, make_algorithm, max_workers,
                         monte_carlo, ospa, parse_algorithm, tracker_config_for)
from .simulation import (ScenarioConfig, generate_scans_labeled, generate_truth, load_config,
                         read_scans_csv, region_volume, scenario_from_parser,
                         scenario_metadata, surveillance_region, write_scans_csv,
                         write_truth_csv)
from .baselines import KnownAssociationFilter

log = logging.getLogger("rmmht")

DEFAULT_COMPARE = "rmm-mht,imm-mht-p1,imm-mht-p2,imm-mht-p3"


class UsageError(Exception):
    pass


def _run_section(cp: configparser.ConfigParser) -> dict:
    """Optional ``[run]`` section; command-line flags take precedence."""
    if not cp.has_section("run"):
        return {}
    allowed = {"algo", "window", "runs", "ospa_p", "ospa_c"}
    out = dict(cp.items("run"))
    unknown = set(out) - allowed
    if unknown:
        raise InvalidArgument(f"unknown run keys: {sorted(unknown)}")
    return out


def _resolve(args):
    """Scenario config plus run options from ``--config`` and the flags."""
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        cp = load_config(args.config)
        cfg = scenario_from_parser(cp)
        run = _run_section(cp)
    else:
        cfg, run = ScenarioConfig(), {}
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    def pick(flag, key, cast, default):
        v = getattr(args, flag, None)
        return v if v is not None else cast(run.get(key, default))

    opts = {
        "algo": getattr(args, "algo", None) or run.get("algo"),
        "window": pick("window", "window", int, 2),
        "runs": pick("runs", "runs", int, 100),
        "ospa": OspaParams(pick("ospa_p", "ospa_p", float, 2.0),
                           pick("ospa_c", "ospa_c", float, 1000.0)),
    }
    if opts["window"] < 1:
        raise InvalidArgument("window must be >= 1")
    return cfg, opts


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(cfg):
    truth = generate_truth(cfg, np.random.default_rng([cfg.seed, 3]))
    scans, origins = generate_scans_labeled(truth, cfg, np.random.default_rng(cfg.seed))
    return truth, scans, origins


def _meta(cfg, truth, **extra) -> dict:
    meta = {"version": __version__}
    meta.update(scenario_metadata(cfg, truth))
    meta.update(extra)
    return meta


# --- commands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, _ = _resolve(args)
    out = _out_dir(args)
    truth, scans, origins = _scenario(cfg)
    meta = _meta(cfg, truth, command="simulate")
    with open(out / "truth.csv", "w", newline="") as fh:
        write_truth_csv(fh, truth, meta)
    with open(out / "scans.csv", "w", newline="") as fh:
        write_scans_csv(fh, scans, meta, origins)
    print(f"wrote {len(truth.times)} steps, {sum(s.count for s in scans)} measurements to {out}")
    return 0


def cmd_track(args) -> int:
    cfg, opts = _resolve(args)
    name = opts["algo"] or "rmm-mht"
    parse_algorithm(name)
    out = _out_dir(args)
    truth, scans, origins = _scenario(cfg)
    if args.scans:
        with open(args.scans) as fh:
            scans, origins = read_scans_csv(fh)
        if len(scans) != len(truth.times):
            raise InvalidArgument("scans file does not match the scenario length")
    V = region_volume(surveillance_region(truth, cfg))
    dump = None
    if args.dump_lp:
        dump_fh = open(args.dump_lp, "w")
        dump = dump_fh.write
    tcfg = tracker_config_for(cfg, V, opts["window"], dump_lp=dump)
    algo = make_algorithm(name, tcfg)
    if isinstance(algo, KnownAssociationFilter) and origins is None:
        raise InvalidArgument("kf-oracle and imm need origin labels in the scans file")
    for b in initial_beliefs(truth, cfg, cfg.seed):
        algo.add_track(b)
    meta = _meta(cfg, truth, command="track", algorithm=name, window=opts["window"],
                 ospa_p=opts["ospa"].p, ospa_c=opts["ospa"].c)
    N = opts["window"]
    try:
        with open(out / "tracks.csv", "w", newline="") as tf, \
                open(out / "diagnostics.csv", "w", newline="") as df:
            for fh in (tf, df):
                for k, v in meta.items():
                    fh.write(f"# {k}={v}\n")
            tw = csv.writer(tf, lineterminator="\n")
            dw = csv.writer(df, lineterminator="\n")
            tw.writerow(["time", "track_id", "x", "vx", "y", "vy"])
            dw.writerow(["time", "objective", "integral", "hypotheses", "shared", "tracks",
                         "ospa"])
            for k in range(2, len(scans)):
                if dump is not None:
                    dump(f"# time {scans[k].time_index}\n")
                if isinstance(algo, KnownAssociationFilter):
                    diag = algo.step(scans[k], origins[k])
                else:
                    diag = algo.step(scans[k:k + N])
                est = algo.estimates()
                for tid, x in est:
                    tw.writerow([scans[k].time_index, tid] + [repr(float(v)) for v in x])
                pts = np.array([x[[0, 2]] for _, x in est]).reshape(-1, 2)
                d = ospa(pts, truth.positions(k), opts["ospa"])
                dw.writerow([scans[k].time_index, repr(float(diag.get("objective", 0.0))),
                             int(bool(diag.get("integral", True))), diag.get("hypotheses", 0),
                             diag.get("shared", 0), len(est), repr(d)])
    finally:
        if args.dump_lp:
            dump_fh.close()
    print(f"{name}: wrote tracks.csv and diagnostics.csv to {out}")
    return 0


def cmd_compare(args) -> int:
    cfg, opts = _resolve(args)
    names = [a.strip() for a in (opts["algo"] or DEFAULT_COMPARE).split(",") if a.strip()]
    for a in names:
        parse_algorithm(a)
    out = _out_dir(args)
    truth = generate_truth(cfg, np.random.default_rng([cfg.seed, 3]))
    res = monte_carlo(names, cfg, opts["runs"], opts["ospa"], opts["window"],
                      workers=max_workers())
    res.metadata = {**_meta(cfg, truth, command="compare"), **res.metadata}
    with open(out / "ospa.csv", "w", newline="") as fh:
        res.write_csv(fh)
    with open(out / "summary.csv", "w", newline="") as fh:
        res.write_summary(fh)
    for a, v in res.summary().items():
        print(f"{a:14s} mean OSPA {v:9.2f}")
    if res.failures:
        print(f"{len(res.failures)} replica(s) failed; see summary.csv", file=sys.stderr)
        return 1
    return 0


def cmd_selftest(args) -> int:
    from .oracles import run_selftest
    results = run_selftest(args.seed or 0)
    width = max(len(n) for n, _, _ in results)
    for name, ok, detail in results:
        print(f"{name:{width}s}  {'PASS' if ok else 'FAIL'}  {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmmht", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="scenario file (INI sections [scenario], [segment.N], [run])")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", default=".", help="output directory")

    def tracking(sp):
        sp.add_argument("--window", type=int, help="N-scan window length")
        sp.add_argument("--ospa-p", type=float, dest="ospa_p")
        sp.add_argument("--ospa-c", type=float, dest="ospa_c")

    sp = sub.add_parser("simulate", help="write truth.csv and scans.csv")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("track", help="run one algorithm on one scenario")
    common(sp)
    tracking(sp)
    sp.add_argument("--algo", help="rmm-mht, imm-mht[-p1|-p2|-p3], imm[-pK] or kf-oracle")
    sp.add_argument("--scans", help="read scans from a CSV written by simulate")
    sp.add_argument("--dump-lp", dest="dump_lp", help="write every LP tableau to this file")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("compare", help="Monte Carlo OSPA comparison")
    common(sp)
    tracking(sp)
    sp.add_argument("--algo", help=f"comma-separated list (default {DEFAULT_COMPARE})")
    sp.add_argument("--runs", type=int)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("selftest", help="run the oracle suites")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidArgument, configparser.Error, FileNotFoundError) as exc:
        print(f"rmmht: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"rmmht: runtime error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
