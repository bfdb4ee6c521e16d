"""Command-line interface.

Exit codes: 0 clean, 1 check failure, 2 usage, 3 I/O, 4 external tool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import bench, gen, io, oracle
from .model import GdpModel
from .reform import METHODS, ReformConfig, reformulate
from .solver import ENV_COMMAND, ParseFailure, SolverRun, SolverSpawnError, run_external_solver

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO, EXIT_TOOL = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed() -> int:
    raw = os.environ.get("GDPQ_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"GDPQ_SEED must be an integer, got {raw!r}") from None


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError("must be > 0")
        return value
    return parse


def _write(data: bytes | str, out: str | None):
    if isinstance(data, str):
        data = data.encode()
    if out in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)


def _read_gdp(path: str) -> GdpModel:
    model = io.read_model(path)
    if not isinstance(model, GdpModel):
        raise UsageError(f"{path}: expected a GDP model document")
    return model


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.kind == "random":
        model = gen.gen_random(gen.RandomGdpParams(args.n_dims, args.n_disjunctions, args.disjuncts_per,
                                                   args.constraints_per, args.n_feasible_points,
                                                   not args.nonconvex, args.seed))
    elif args.kind == "kmeans":
        model = gen.gen_kmeans(gen.KmeansParams(K=args.K, n_points=args.n_points, n_dims=args.n_dims, seed=args.seed))
    elif args.kind == "cstr":
        model = gen.gen_cstr(gen.CstrParams(NT=args.NT))
    else:
        inst = gen.ClayInstance.from_json(args.instance, args.norm) if args.instance else \
            gen.ClayInstance.from_json(gen.CLAY_DEMO, args.norm)
        model = gen.gen_clay(inst)
    _write(io.write_model(model), args.output)
    return EXIT_OK


def cmd_reformulate(args) -> int:
    if args.method == "hull-eps" and not args.eps > 0:
        raise UsageError("eps must be > 0")
    bigm = json.loads(args.bigm_values) if args.bigm_values else {}
    config = ReformConfig(args.method, eps=args.eps, bigm_strategy="user" if bigm else "interval",
                          bigm_values=bigm, emit_s3=args.s3)
    minlp, report = reformulate(_read_gdp(args.model), config)
    if args.format == "lp":
        data = io.export_lp(io.lower_eps_rows(minlp))
    else:
        data = io.write_model(minlp)
    _write(data, args.output)
    print(json.dumps(report.to_dict(), sort_keys=True, default=str), file=sys.stderr)
    return EXIT_OK


def _verify_prop(args, degree_of) -> oracle.MembershipReport:
    rng = np.random.default_rng(args.seed)
    lo, hi = -args.box * np.ones(args.n_dims), args.box * np.ones(args.n_dims)
    total = oracle.MembershipReport()
    for k in range(args.count):
        h = degree_of(rng, k)
        total = total.merge(oracle.check_s1_s2(h, lo, hi, args.samples, args.seed + k))
    return total


def _verify_models(args) -> list[GdpModel]:
    if args.model:
        return [_read_gdp(path) for path in args.model]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [gen.gen_random(gen.RandomGdpParams(3, 3, 3, 2, seed=args.seed + k)) for k in range(args.count)]


def cmd_verify(args) -> int:
    if args.check == "prop1":
        report = _verify_prop(args, lambda rng, k: gen.random_quadratic(rng, args.n_dims, psd=k % 2 == 0))
    elif args.check == "prop2":
        report = _verify_prop(args, lambda rng, k: gen.random_polynomial(rng, args.n_dims, 3 + k % 2))
    elif args.check == "binary-fix":
        report = oracle.MembershipReport()
        methods = args.method or list(METHODS)
        for gdp in _verify_models(args):
            for method in methods:
                minlp, _ = reformulate(gdp, ReformConfig(method, eps=args.eps, emit_s3=args.s3))
                for k, active in enumerate(oracle.consistent_assignments(gdp, args.assignments)):
                    report = report.merge(oracle.fixed_binary_check(gdp, minlp, active, args.samples, args.seed + k))
    else:
        report = oracle.MembershipReport()
        for gdp in _verify_models(args):
            for d in gdp.disjunctions:
                for dj in d.disjuncts:
                    for con in dj.constraints:
                        report = report.merge(oracle.check_eps_containment(
                            con.body, gdp.lower, gdp.upper, args.samples, args.seed, args.eps))
    summary = report.summary()
    summary["check"] = args.check
    summary["seed"] = args.seed
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if report.clean else EXIT_CHECK


def cmd_bench(args) -> int:
    manifest = bench.SuiteManifest.load(args.manifest)
    records = bench.run_suite(manifest)
    _write(bench.records_csv(records), args.output)
    if args.summary:
        Path(args.summary).write_text(json.dumps(bench.summary(records), sort_keys=True, indent=2) + "\n")
    return EXIT_CHECK if any(r.error for r in records) else EXIT_OK


def cmd_solve_external(args) -> int:
    command = args.command or os.environ.get(ENV_COMMAND)
    if not command:
        raise UsageError(f"no solver command: pass --command or set {ENV_COMMAND}")
    run = SolverRun(command, time_limit=args.time_limit)
    model_path = Path(args.model)
    with tempfile.TemporaryDirectory() as tmp:
        if model_path.suffix != ".lp":
            model = io.read_model(model_path)
            if isinstance(model, GdpModel):
                model, _ = reformulate(model, ReformConfig(args.method, eps=args.eps))
            lp = Path(tmp) / (model_path.stem + ".lp")
            lp.write_text(io.export_lp(io.lower_eps_rows(model)))
            model_path = lp
        result = run_external_solver(model_path, run)
    print(json.dumps({"status": result.status, "objective": result.objective, "bound": result.bound,
                      "seconds": result.seconds}, sort_keys=True))
    if args.expect is not None:
        if result.objective is None or abs(result.objective - args.expect) > args.expect_tol:
            return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    p = _Parser(prog="gdpq", description="GDP model builder, reformulations and verification oracles.")
    sub = p.add_subparsers(dest="command_name", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a generated GDP model as JSON")
    gsub = g.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    r = gsub.add_parser("random")
    r.add_argument("--n-dims", type=int, default=3)
    r.add_argument("--n-disjunctions", type=int, default=3)
    r.add_argument("--disjuncts-per", type=int, default=10)
    r.add_argument("--constraints-per", type=int, default=10)
    r.add_argument("--n-feasible-points", type=int, default=10)
    r.add_argument("--nonconvex", action="store_true")
    k = gsub.add_parser("kmeans")
    k.add_argument("--K", type=int, default=3)
    k.add_argument("--n-points", type=int, default=10)
    k.add_argument("--n-dims", type=int, default=2)
    c = gsub.add_parser("cstr")
    c.add_argument("--NT", type=int, default=5)
    cl = gsub.add_parser("clay")
    cl.add_argument("--instance", help="rectangles/circles/costs JSON (default: bundled demo)")
    cl.add_argument("--norm", choices=("l1", "l2"), default="l1")
    for q in (r, k, c, cl):
        q.add_argument("--seed", type=int, default=seed)
        q.add_argument("-o", "--output")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("reformulate", help="GDP model -> MINLP (JSON or LP)")
    f.add_argument("model")
    f.add_argument("--method", choices=METHODS, required=True)
    f.add_argument("--eps", type=float, default=1e-4)
    f.add_argument("--s3", action="store_true", help="emit the S3 (Glover) form for nonconvex quadratics")
    f.add_argument("--bigm-values", help='JSON object {"indicator:j": M}')
    f.add_argument("--format", choices=("json", "lp"), default=None)
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_reformulate)

    v = sub.add_parser("verify", help="seeded property checks; exit 0 iff clean")
    v.add_argument("check", choices=("prop1", "prop2", "binary-fix", "containment"))
    v.add_argument("model", nargs="*", help="GDP model files (binary-fix/containment; default: random suite)")
    v.add_argument("--samples", type=_positive(int), default=10_000)
    v.add_argument("--seed", type=int, default=seed)
    v.add_argument("--count", type=_positive(int), default=None, help="suite size")
    v.add_argument("--n-dims", type=_positive(int), default=3)
    v.add_argument("--box", type=_positive(float), default=2.0)
    v.add_argument("--method", action="append", choices=METHODS)
    v.add_argument("--eps", type=float, default=1e-4)
    v.add_argument("--s3", action="store_true")
    v.add_argument("--assignments", type=_positive(int), default=None, help="cap on assignments per model")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="run a suite manifest and write CSV records")
    b.add_argument("manifest")
    b.add_argument("-o", "--output")
    b.add_argument("--summary", help="also write a JSON summary with performance profiles")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("solve-external", help="export and run a user-supplied solver command")
    s.add_argument("model", help="GDP/MINLP JSON or an .lp file")
    s.add_argument("--command", help=f"template with {{model}} and optional {{log}} (default: ${ENV_COMMAND})")
    s.add_argument("--method", choices=METHODS, default="hull-exact")
    s.add_argument("--eps", type=float, default=1e-4)
    s.add_argument("--time-limit", type=_positive(float), default=3600.0)
    s.add_argument("--expect", type=float, help="expected objective; exit 1 when missed")
    s.add_argument("--expect-tol", type=float, default=1e-2)
    s.set_defaults(func=cmd_solve_external)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command_name == "reformulate" and args.format is None:
            args.format = "lp" if (args.output or "").endswith(".lp") else "json"
        if args.command_name == "verify":
            if not args.eps > 0:
                raise UsageError("eps must be > 0")
            if args.count is None:
                args.count = {"prop1": 100, "prop2": 40}.get(args.check, 5)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.ModelFormatError, bench.ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        if isinstance(exc, SolverSpawnError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_TOOL
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ParseFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOOL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
