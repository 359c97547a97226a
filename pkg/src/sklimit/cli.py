"""``skcli``: run experiments, list them, validate configs and compute
Wasserstein distances between stored measures.

Exit codes: 0 success, 1 an assertion failed, 2 usage error (including an
unknown experiment), 3 config or hypothesis validation failure, 4 blow-up.
"""

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
import time

from threadpoolctl import threadpool_limits

EXIT_FAIL, EXIT_USAGE, EXIT_INVALID, EXIT_BLOWUP = 1, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="skcli", description="Small-mass limit experiments for damped stochastic waves.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("name")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default="skcli-out")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)

    sub.add_parser("list", help="list experiments")

    v = sub.add_parser("validate", help="check a config against the model hypotheses")
    v.add_argument("--config", required=True)

    w = sub.add_parser("wasserstein", help="empirical W1 between two measure files")
    w.add_argument("--a", required=True)
    w.add_argument("--b", required=True)
    w.add_argument("--metric", default="l2", help="l2 or path:<eta>")
    w.add_argument("--solver", default="exact", help="exact or entropic:<eps>")
    return p


def _write_outputs(out_dir, name, summary, tables):
    """Write into a fresh sibling directory, then move files into place."""
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".skcli-", dir=parent)
    try:
        for tname, (header, rows) in tables.items():
            with open(os.path.join(tmp, f"{name}.{tname}.csv"), "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(header)
                wr.writerows(rows)
        with open(os.path.join(tmp, f"{name}.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if not os.path.exists(out_dir):
            os.replace(tmp, out_dir)
            return
        for f in os.listdir(tmp):
            os.replace(os.path.join(tmp, f), os.path.join(out_dir, f))
    finally:
        if os.path.isdir(tmp):
            shutil.rmtree(tmp, ignore_errors=True)


def cmd_run(args):
    from . import __version__, experiments
    from .config import Config
    from .errors import BlowUpError, ConfigError, ValidationError

    if args.name not in experiments.REGISTRY:
        print(f"skcli: unknown experiment {args.name!r}; see 'skcli list'", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = Config.load(args.config)
        if args.seed is not None:
            cfg.set("run.seed", args.seed)
        report = experiments.validate(cfg)
    except (ConfigError, ValidationError, ValueError) as exc:
        print(f"skcli: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not report["ok"]:
        print("skcli: config fails validation: " + "; ".join(report["failures"]), file=sys.stderr)
        return EXIT_INVALID
    fn, _ = experiments.REGISTRY[args.name]
    start = time.time()
    try:
        outcome = fn(cfg)
    except BlowUpError as exc:
        print(f"skcli: blow-up: {exc} (step {exc.step}, norm {exc.norm})", file=sys.stderr)
        return EXIT_BLOWUP
    except (ConfigError, ValidationError) as exc:
        print(f"skcli: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    summary = {
        "experiment": args.name,
        "version": __version__,
        "passed": outcome.passed,
        "assertions": outcome.assertions,
        "values": experiments._plain(outcome.values),
        "config": cfg.resolved(),
        "config_hash": cfg.hash(),
        "seed": cfg["run.seed"],
        "files": sorted(f"{args.name}.{t}.csv" for t in outcome.tables),
        "meta": {"started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(start)),
                 "elapsed_seconds": round(time.time() - start, 3)},
    }
    _write_outputs(args.out, args.name, summary, outcome.tables)
    for a in outcome.assertions:
        print(f"[{'PASS' if a['passed'] else 'FAIL'}] {a['name']}: {a['value']}")
    return 0 if outcome.passed else EXIT_FAIL


def cmd_list(_args):
    from . import experiments

    for name, (_, summary) in experiments.REGISTRY.items():
        print(f"{name:22s} {summary}")
    return 0


def cmd_validate(args):
    from . import experiments
    from .config import Config
    from .errors import ConfigError

    try:
        report = experiments.validate(Config.load(args.config))
    except (ConfigError, ValueError) as exc:
        print(f"skcli: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps(experiments._plain(report), indent=2, sort_keys=True))
    return 0 if report["ok"] else EXIT_INVALID


def cmd_wasserstein(args):
    from . import measures, transport
    from .errors import ConfigError

    try:
        gm = transport.GroundMetric.parse(args.metric)
        solver, eps = transport.parse_solver(args.solver)
        a, b = measures.load_measure(args.a), measures.load_measure(args.b)
        res = transport.wasserstein(a, b, gm, solver, eps)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"skcli: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps({"value": res.value, "solver": res.solver, "bounds": res.bounds,
                      "converged": res.converged}, sort_keys=True))
    return 0


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    handler = {"run": cmd_run, "list": cmd_list, "validate": cmd_validate, "wasserstein": cmd_wasserstein}
    threads = getattr(args, "threads", None) or os.environ.get("SKCLI_THREADS")
    if threads:
        try:
            threads = int(threads)
        except ValueError:
            print(f"skcli: bad thread count {threads!r}", file=sys.stderr)
            return EXIT_USAGE
        with threadpool_limits(threads):
            return handler[args.command](args)
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
