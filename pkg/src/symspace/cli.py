"""Command line entry point: ``symspace <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .suite import (AlgebraContext, ConfigError, ExperimentSpec, VerificationReport, _rng,
                    load_spec, run_suite, single_pairing_rows)
from . import report as report_mod


def _common(p):
    p.add_argument("--config", help="JSON experiment file")
    p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    p.add_argument("--out", help="directory for report files and figures")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="format printed to standard output")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--algebra", action="append", metavar="FAMILY:N",
                   help="algebra such as sl:3 or so:3 (repeatable; overrides the config)")
    p.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symspace", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("structure", "print Cartan and Iwasawa data"),
                       ("verify", "run the verification suite"),
                       ("split", "run the splitting sweeps"),
                       ("pairing", "evaluate one pairing ratio and one codimension-one term"),
                       ("hardy", "run the Hardy checks")):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "verify":
            p.add_argument("--sections", help="comma-separated subset of sections")
    return ap


def _spec_from_args(args) -> ExperimentSpec:
    spec = load_spec(args.config) if args.config else ExperimentSpec()
    if args.seed is not None:
        spec.seed = args.seed
    if args.algebra:
        algs = []
        for a in args.algebra:
            fam, _, n = a.partition(":")
            if not n.isdigit():
                raise ConfigError(f"--algebra expects FAMILY:N, got {a!r}")
            algs.append({"family": fam, "n": int(n)})
        spec.algebras = algs
    if getattr(args, "sections", None):
        spec.sections = [s.strip() for s in args.sections.split(",") if s.strip()]
    if args.out:
        spec.output = args.out
    spec.validate()
    return spec


def _structure(spec, fmt, out):
    data = []
    for i, a in enumerate(spec.algebras):
        ctx = AlgebraContext(a, _rng(spec.seed, i))
        data.append({"algebra": ctx.label, "dim": ctx.alg.dim, "iwasawa": ctx.iw.to_json(),
                     "frame": ctx.frame.to_json()})
    if fmt == "json":
        out.write(json.dumps(data, indent=1) + "\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["algebra", "root", "values", "multiplicity", "grading"])
        for i, a in enumerate(spec.algebras):
            ctx = AlgebraContext(a, _rng(spec.seed, i))
            for k, (rt, d) in enumerate(zip(ctx.iw.positive, ctx.iw.grading)):
                w.writerow([ctx.label, k, " ".join(f"{v:.12g}" for v in rt.values),
                            rt.multiplicity, d])
    return 0


def _pairing(spec):
    import time
    rows, timings = [], []
    t0 = time.perf_counter()
    for i, a in enumerate(spec.algebras):
        ctx = AlgebraContext(a, _rng(spec.seed, i))
        t = time.perf_counter()
        rows += single_pairing_rows(ctx, spec, _rng(spec.seed, i, 99))
        timings.append({"section": "pairing", "algebra": ctx.label,
                        "seconds": round(time.perf_counter() - t, 3)})
    return VerificationReport(spec.to_json(), rows, timings, time.perf_counter() - t0)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"symspace: {exc}", file=sys.stderr)
        return 2
    if args.command == "structure":
        return _structure(spec, args.format, sys.stdout)
    if args.command == "pairing":
        rep = _pairing(spec)
    else:
        if args.command == "split":
            spec.sections = ["splitting"]
        elif args.command == "hardy":
            spec.sections = ["hardy"]

        def progress(section, alg, result):
            rows, secs = result
            bad = sum(r.passed is False for r in rows)
            print(f"[{section:10s}] {rows[0].algebra if rows else alg}: {len(rows)} rows, "
                  f"{bad} failed, {secs:.1f}s", file=sys.stderr)

        rep = run_suite(spec, jobs=max(1, args.jobs), progress=progress)
    if spec.output:
        for p in report_mod.write_report(rep, spec.output, figures=not args.no_figures):
            print(f"wrote {p}", file=sys.stderr)
    sys.stdout.write(report_mod.render(rep, args.format))
    if args.format == "json":
        sys.stdout.write("\n")
    s = rep.summary()
    print(f"{s['passed']} passed, {s['failed']} failed, {s['reported_only']} reported only "
          f"in {s['seconds']}s", file=sys.stderr)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
