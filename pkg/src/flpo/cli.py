"""Command-line surface: generate, solve, bench, policy verbs."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import bench as bench_mod
from .anneal import AnnealConfig, centroid_init, solve
from .bridge import export_request, import_policy, load_request, validate_policy_doc, _read_json
from .bridge import StalePolicyError, instance_hash, facilities_hash
from .instance import generate_instance, load_instance, save_instance


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flpo",
        description="Facility-location and path optimization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a random instance file")
    gen.add_argument("--agents", type=int, required=True)
    gen.add_argument("--facilities", type=int, required=True)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--lo", type=float, default=0.0)
    gen.add_argument("--hi", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", required=True)

    slv = sub.add_parser("solve", help="solve an instance file")
    slv.add_argument("instance")
    slv.add_argument("--method", choices=("mep", "ga", "sa", "cem"), default="mep")
    slv.add_argument("--backend", choices=("exact-dp", "mixture"), default="exact-dp")
    slv.add_argument("--source", default=None, help="mixture policy source: exact-dp | uniform | external:<policyfile>")
    slv.add_argument("--beta-start", type=float, default=1e-3)
    slv.add_argument("--beta-end", type=float, default=1e3)
    slv.add_argument("--rate", type=float, default=10.0)
    slv.add_argument("--single-beta", type=float, default=None, help="run one annealing step at this beta")
    slv.add_argument("--iters", type=int, default=100)
    slv.add_argument("--step", type=float, default=0.01)
    slv.add_argument("--tol", type=float, default=1e-3)
    slv.add_argument("--b", type=int, default=5)
    slv.add_argument("--L", type=int, default=15)
    slv.add_argument("--seed", type=int, default=0)
    slv.add_argument("--init", choices=("centroid", "random"), default="centroid")
    slv.add_argument("--clip-domain", action="store_true")
    slv.add_argument("--dedup", action="store_true")
    slv.add_argument("-o", "--output", default=None, help="report file (JSON)")
    slv.add_argument("--trace-csv", default=None)

    ben = sub.add_parser("bench", help="run a benchmark suite")
    ben.add_argument("--instance", action="append", required=True, dest="instances")
    ben.add_argument("--methods", default="mep-anneal,mep-high-beta,ga,sa,cem")
    ben.add_argument("--repetitions", type=int, default=10)
    ben.add_argument("--seed-base", type=int, default=0)
    ben.add_argument("--parallel", type=int, default=1)
    ben.add_argument("-o", "--out-dir", required=True)

    pol = sub.add_parser("policy", help="policy bridge utilities")
    pol_sub = pol.add_subparsers(dest="policy_command", required=True)
    preq = pol_sub.add_parser("export-request", help="write a policy request file")
    preq.add_argument("instance")
    preq.add_argument("--facilities", default=None, help="JSON file with an MxD array; defaults to the centroid init")
    preq.add_argument("--seed", type=int, default=0)
    preq.add_argument("-o", "--output", required=True)
    pval = pol_sub.add_parser("validate", help="validate a policy file against its request")
    pval.add_argument("policy")
    pval.add_argument("--request", required=True)

    return parser


def _cmd_generate(args: argparse.Namespace) -> int:
    inst = generate_instance(
        args.agents, args.facilities, dim=args.dim, bounds=(args.lo, args.hi), seed=args.seed
    )
    save_instance(inst, args.output)
    print(f"wrote {args.output}: N={inst.n_agents} M={inst.facility_count} d={inst.dim}")
    return 0


def _make_source(spec: str | None, inst, Y):
    from .sampling import ExactDPSource, UniformSource

    if spec is None or spec == "exact-dp":
        return None
    if spec == "uniform":
        return UniformSource()
    if spec.startswith("external:"):
        return import_policy(spec.split(":", 1)[1], inst, Y)
    raise SystemExit(f"unknown source spec {spec!r}")


def _cmd_solve(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    t0 = time.perf_counter()
    if args.method == "mep":
        beta_start, beta_end = args.beta_start, args.beta_end
        if args.single_beta is not None:
            beta_start = beta_end = args.single_beta
        Y0 = None if args.init == "centroid" else bench_mod.random_init(inst, args.seed)
        source = _make_source(args.source, inst, Y0 if Y0 is not None else centroid_init(inst, args.seed))
        cfg = AnnealConfig(
            beta_start=beta_start,
            beta_end=beta_end,
            growth=args.rate,
            inner_iters=args.iters,
            step_size=args.step,
            tol=args.tol,
            backend=args.backend,
            source=source,
            b=args.b,
            L=args.L,
            seed=args.seed,
            clip_domain=args.clip_domain,
            dedup=args.dedup,
        )
        report = solve(inst, Y0, cfg)
    else:
        report = bench_mod.run_method(inst, args.method, args.seed)
    wall = (time.perf_counter() - t0) * 1e3
    print(f"method={report.method} cost={report.cost!r} wall_ms={wall:.1f}")
    if args.output:
        report.save(args.output)
    if args.trace_csv:
        report.save_trace_csv(args.trace_csv)
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in bench_mod.METHODS:
            raise SystemExit(f"unknown method {m!r}; choose from {bench_mod.METHODS}")
    suite = bench_mod.make_suite(
        args.instances, methods, args.repetitions, args.out_dir, seed_base=args.seed_base
    )
    _, summary = bench_mod.run_benchmark(suite, parallel=args.parallel)
    print(summary, end="")
    return 0


def _cmd_policy(args: argparse.Namespace) -> int:
    if args.policy_command == "export-request":
        inst = load_instance(args.instance)
        if args.facilities:
            Y = np.array(_read_json(args.facilities), dtype=float)
        else:
            Y = centroid_init(inst, args.seed)
        export_request(inst, Y, args.output)
        print(f"wrote {args.output}")
        return 0
    if args.policy_command == "validate":
        inst, Y = load_request(args.request)
        doc = _read_json(args.policy)
        validate_policy_doc(doc, inst.n_agents, inst.facility_count)
        if doc["instance_hash"] != instance_hash(inst):
            raise StalePolicyError("policy instance_hash does not match the request")
        if doc["y_hash"] != facilities_hash(Y):
            raise StalePolicyError("policy y_hash does not match the request")
        print(f"{args.policy}: valid {doc['mode']}-mode policy for the request")
        return 0
    raise SystemExit(2)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "generate":
        return _cmd_generate(args)
    if args.command == "solve":
        return _cmd_solve(args)
    if args.command == "bench":
        return _cmd_bench(args)
    if args.command == "policy":
        return _cmd_policy(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
