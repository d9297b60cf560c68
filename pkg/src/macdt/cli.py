"""Command-line entry point.

Exit status: 0 on success, 1 on invalid input, 2 when a theory check fails.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import MacdtError
from .gp import Kernel
from .graph import build_grid
from .io import (
    RunConfig,
    build_environment,
    ci_halfwidth,
    config_from_dict,
    load_config,
    load_trace,
    validate,
    write_grid_file,
    write_outputs,
)
from .policy import POLICIES
from .simulator import REWARD_FAMILIES, reward_values, simulate
from .theory import MIN_CLEAN_RUNS, Check, clean_event_rate, theory_report

EXIT_OK, EXIT_INVALID, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not check failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"3"``, ``"0-9"`` or ``"1,4,7"`` (ranges inclusive)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError("seeds must be non-negative integers")
    return tuple(out)


def _seeds_arg(text):
    try:
        return parse_seeds(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def run_one(cfg_dict: dict, seed: int, with_theory: bool = True):
    """One simulation; module level so worker processes can pickle it."""
    cfg = config_from_dict(cfg_dict)
    env = build_environment(cfg, seed)
    trace = simulate(env, cfg.policy_config)
    report = theory_report(trace, env, cfg.delta) if with_theory else None
    return trace, report


def _run_many(jobs, workers: int, with_theory: bool):
    if workers <= 1 or len(jobs) <= 1:
        return [run_one(c, s, with_theory) for c, s in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_one, c, s, with_theory) for c, s in jobs]
        return [f.result() for f in futures]


def _override(cfg: RunConfig, args) -> RunConfig:
    from dataclasses import replace

    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=args.seeds)
    if getattr(args, "policy", None):
        cfg = replace(cfg, policy=args.policy)
    if getattr(args, "out", None):
        cfg = replace(cfg, output=str(args.out))
    return validate(cfg)


def _summary(trace) -> str:
    return (f"{trace.policy} seed={trace.seed} episodes={trace.episode_count} "
            f"R={trace.regret(1.0)[-1]:.3f} R_alpha={trace.regret()[-1]:.3f}")


def cmd_run(args) -> int:
    cfg = _override(load_config(args.config), args)
    results = _run_many([(cfg.to_dict(), s) for s in cfg.seeds], args.workers, not args.no_theory)
    traces = [t for t, _ in results]
    reports = None if args.no_theory else [r for _, r in results]
    paths = write_outputs(traces, reports, cfg)
    for t in traces:
        print(_summary(t))
    print(f"wrote {len(paths)} files to {cfg.output}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    configs = [_override(load_config(p), args) for p in args.config]
    policies = args.policies or [None]
    jobs, keys = [], []
    for path, cfg in zip(args.config, configs):
        for pol in policies:
            c = cfg.with_policy(pol) if pol else cfg
            for s in c.seeds:
                jobs.append((c.to_dict(), s))
                keys.append((Path(path).stem, c))
    results = _run_many(jobs, args.workers, not args.no_theory)
    groups: dict = {}
    for (stem, c), res in zip(keys, results):
        groups.setdefault((stem, c.policy), (c, []))[1].append(res)
    base = Path(args.out or configs[0].output)
    for (stem, policy), (c, res) in groups.items():
        traces = [t for t, _ in res]
        reports = None if args.no_theory else [r for _, r in res]
        write_outputs(traces, reports, c, base / stem)
        final = np.array([t.regret(1.0)[-1] for t in traces])
        print(f"{stem} {policy}: runs={len(traces)} mean R(T)={final.mean():.3f} "
              f"+/- {float(ci_halfwidth(final)):.3f}")
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _override(load_config(args.config), args)
    if args.trace:
        pairs = []
        for p in args.trace:
            trace = load_trace(p)
            if trace.policy != cfg.policy:
                cfg = cfg.with_policy(trace.policy)
            env = build_environment(cfg, trace.seed)
            pairs.append((trace, theory_report(trace, env, cfg.delta)))
    else:
        pairs = _run_many([(cfg.to_dict(), s) for s in cfg.seeds], args.workers, True)
    ok = True
    for trace, rep in pairs:
        for c in rep.checks:
            ok &= c.passed
            print(f"seed={trace.seed} {c.name:<20} {'pass' if c.passed else 'FAIL'} margin={c.margin:.6g}")
    traces = [t for t, _ in pairs]
    if len(traces) >= MIN_CLEAN_RUNS:
        rate = clean_event_rate(traces)
        need = 1.0 - cfg.delta - 0.05
        c = Check("clean_event_rate", rate >= need, rate - need)
        ok &= c.passed
        print(f"clean event rate {rate:.3f} (need >= {need:.3f}) {'pass' if c.passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_gen_map(args) -> int:
    if args.family == "file":
        raise MacdtError("gen-map draws a family; 'file' is not one")
    graph = build_grid(args.rows, args.cols)
    kernel = Kernel("se", args.variance, args.lengthscale)
    rng = np.random.default_rng([args.seed, 0])
    fld = reward_values(args.family, graph, kernel, rng, args.sparse_count)
    write_grid_file(args.out, args.rows, args.cols, fld.values,
                    name=f"{args.family} seed {args.seed}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _override(load_config(args.config), args)
    variants = [cfg.with_policy(p) for p in args.policies]
    jobs = [(c.to_dict(), s) for c in variants for s in c.seeds]
    results = _run_many(jobs, args.workers, False)
    n = len(cfg.seeds)
    print(f"{'policy':<24}{'mean R(T)':>12}{'ci95':>10}{'mean Ra(T)':>12}")
    rows = []
    for k, c in enumerate(variants):
        traces = [t for t, _ in results[k * n:(k + 1) * n]]
        r = np.array([t.regret(1.0)[-1] for t in traces])
        ra = np.array([t.regret()[-1] for t in traces])
        rows.append((c.policy, r.mean()))
        print(f"{c.policy:<24}{r.mean():>12.3f}{float(ci_halfwidth(r)):>10.3f}{ra.mean():>12.3f}")
    best = min(rows, key=lambda x: x[1])
    print(f"lowest mean regret: {best[0]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="macdt", description="Simulate, check and compare multi-agent GP coverage runs.",
                epilog="exit status: 0 ok, 1 invalid input, 2 theory check failed")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, many=False):
        if many:
            sp.add_argument("--config", nargs="+", required=True, type=Path)
        else:
            sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seeds", type=_seeds_arg, help="e.g. 0-9 or 1,3,5; overrides the config")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("run", help="simulate one config over its seeds")
    common(sp)
    sp.add_argument("--policy", choices=POLICIES)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--no-theory", action="store_true", help="skip the theory report")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="configs x policies x seeds in parallel")
    common(sp, many=True)
    sp.add_argument("--policies", nargs="+", choices=POLICIES)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--no-theory", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check", help="theory checks on stored traces or fresh runs")
    common(sp)
    sp.add_argument("--trace", nargs="+", type=Path, help="trace files written by run")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("gen-map", help="write a reward grid file")
    sp.add_argument("--family", choices=[f for f in REWARD_FAMILIES if f != "file"], required=True)
    sp.add_argument("--rows", type=int, required=True)
    sp.add_argument("--cols", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--lengthscale", type=float, default=0.5)
    sp.add_argument("--variance", type=float, default=1.0)
    sp.add_argument("--sparse-count", type=int, default=4)
    sp.add_argument("--out", type=Path, required=True)
    sp.set_defaults(func=cmd_gen_map)

    sp = sub.add_parser("compare", help="regret table for several policies on shared seeds")
    common(sp)
    sp.add_argument("--policies", nargs="+", choices=POLICIES, required=True)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MacdtError, ValueError) as exc:
        print(f"macdt: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
