"""Command line: ``peerlbs run`` and ``peerlbs sweep``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

from . import report as rep
from .sim import InvalidConfig, SimConfig, TraceParseError, run
from .sim.config import coerce, parse_config_text

log = logging.getLogger("peerlbs")


def _base_config(args) -> dict:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values = parse_config_text(fh.read())
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidConfig(f"--set expects key=value, got {item!r}")
        values[key.strip()] = coerce(key.strip(), value)
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _one(job):
    key, value, seed, values = job
    cfg = SimConfig(**values)
    _, report, _ = run(cfg)
    return key, value, seed, report.row()


def cmd_run(args) -> int:
    cfg = SimConfig(**_base_config(args))
    log.info("running seed=%s", cfg.seed)
    _, report, crl_text = run(cfg)
    rep.rows_to_csv([("", "", cfg.seed, report.row())], args.metrics)
    if args.crl:
        with open(args.crl, "w") as fh:
            fh.write(crl_text)
    if args.figures:
        for path in rep.run_figures(report, args.figures):
            log.info("wrote %s", path)
    row = report.row()
    print(f"peer_hit_ratio={row['peer_hit_ratio']:.4f} expo_lbs_C1={row['expo_lbs_C1']:.4f} "
          f"affected={row['affected_query_ratio']:.4f} -> {args.metrics}")
    return 0


def cmd_sweep(args) -> int:
    base = _base_config(args)
    SimConfig(**base)  # fail early on a bad base config
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base.get("seed", SimConfig.seed)]
    jobs = []
    for raw in values:
        for seed in seeds:
            cfg_values = dict(base, seed=seed)
            cfg_values[args.key] = coerce(args.key, raw)
            jobs.append((args.key, raw, seed, cfg_values))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_one, jobs))
    else:
        rows = [_one(j) for j in jobs]
    rep.rows_to_csv(rows, args.metrics)
    if args.figures:
        for path in rep.sweep_figures(rows, args.figures):
            log.info("wrote %s", path)
    print(f"{len(rows)} runs -> {args.metrics}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="peerlbs", description="Pseudonymous peer-assisted LBS simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--metrics", required=True, help="metrics CSV output path")
        sp.add_argument("--figures", help="directory for PNG figures")

    r = sub.add_parser("run", help="run a single configuration")
    common(r)
    r.add_argument("--crl", help="write the final CRL text to this path")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one key over a comma-separated list")
    common(s)
    s.add_argument("--key", required=True)
    s.add_argument("--values", required=True)
    s.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InvalidConfig, TraceParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
