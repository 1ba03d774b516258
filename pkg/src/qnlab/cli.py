"""Command line entry point: ``qnlab run|sweep|report|verify``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness, initdata
from .errors import FileFormatError, NumericalContractError, ParameterError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _eps_list(values: list[str]) -> list[float]:
    out = []
    for v in values:
        out += [float(x) for x in v.replace(",", " ").split()]
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnlab", description="Quasineutral-limit numerical laboratory.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, with_out=True):
        sp.add_argument("config", type=Path, help="key = value configuration file")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--t-end", type=float, dest="t_end", help="override the final time")
        if with_out:
            sp.add_argument("--out", type=Path, help="output directory (beats QNLAB_OUT and the config)")
            sp.add_argument("--workers", type=int, default=1, help="deposition threads")
            sp.add_argument("--checkpoint-every", type=int, dest="checkpoint_every",
                            help="write an ensemble checkpoint every K steps")

    common(sub.add_parser("run", help="one coupled run"))
    sp = sub.add_parser("sweep", help="one run per eps")
    common(sp)
    sp.add_argument("--eps", nargs="+", required=True, help="strictly decreasing eps values")
    rp = sub.add_parser("report", help="summarize a run or sweep directory")
    rp.add_argument("dir", type=Path)
    common(sub.add_parser("verify", help="check the initial-data hypotheses only"), with_out=False)
    return p


def _load(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config)
    changes = {}
    for key in ("seed", "t_end", "checkpoint_every"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    return cfg.replace(**changes) if changes else cfg


def output_root(args, cfg: harness.RunConfig) -> Path:
    if getattr(args, "out", None) is not None:
        return args.out
    env = os.environ.get("QNLAB_OUT")
    return Path(env) if env else Path(cfg.out)


def _dispatch(args) -> int:
    if args.verb == "report":
        sys.stdout.write(harness.report(args.dir))
        return EXIT_OK
    cfg = _load(args)
    if args.verb == "verify":
        flow, spec, ens = harness.prepare(cfg)
        rep = initdata.verify_hypotheses(ens, spec, cfg.k0, cfg.alpha)
        print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK if rep.all_pass else EXIT_NUMERICAL
    if args.workers < 1:
        raise ParameterError("--workers must be >= 1")
    root = output_root(args, cfg)
    if args.verb == "run":
        rep = harness.run_single(cfg, root, args.workers)
        status = "all audits pass" if rep.passed else "failed: " + ", ".join(rep.failures())
        print(f"{root}: {len(rep.steps['t']) - 1} steps, sup E = {rep.steps['E_total'].max():.6g}; {status}")
        return EXIT_OK if rep.passed else EXIT_NUMERICAL
    table = harness.sweep_epsilon(cfg, _eps_list(args.eps), root, args.workers)
    sys.stdout.write(table.to_csv().decode())
    print(f"monotone horizon: {table.horizon}")
    for eps, err in table.errors.items():
        print(f"eps={eps}: {err}", file=sys.stderr)
    return EXIT_OK if table.complete else EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalContractError as exc:
        print(f"numerical contract violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
