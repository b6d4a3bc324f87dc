"""Command line interface.

Subcommands:
  poly    - print a solver polynomial's coefficients as CSV
  moments - measure Chebyshev moments on one seeded instance and fit the
            max-entropy density to them
  solve   - run one plan on one seeded instance, printing err/diagnostics
  sweep   - run a benchmark grid from a TOML config (flags override)
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import bench, polyfactory
from .density import MaxentInfeasibleError, maxent_density
from .qsim import CostCounter, build_noise, estimate_moments


def _add_plan_args(parser, with_eps=True):
    parser.add_argument("--family", required=True,
                        choices=["qsvt", "cheb1", "cheb2", "cheb3", "cup", "cap"])
    parser.add_argument("--transform", default="none",
                        choices=list(polyfactory.TRANSFORMS))
    parser.add_argument("--n", type=int, required=True, help="step parameter")
    parser.add_argument("--kappa", type=float, default=3.0,
                        help="condition number bound")
    if with_eps:
        parser.add_argument("--eps", type=float, default=None,
                            help="target accuracy (default 2/sqrt(shots))")


def _print_plan_csv(plan, out):
    params = [f"family={plan.family}", f"transform={plan.transform}",
              f"n={plan.n}", f"eps={plan.eps}", f"kappa={plan.kappa}",
              f"lam_min={plan.lam_min}", f"lam_max={plan.lam_max}",
              f"gamma_even={float(plan.gamma_even)!r}", f"gamma_odd={float(plan.gamma_odd)!r}",
              f"steps={plan.steps}"]
    out.write("# " + " ".join(params) + "\n")
    out.write(f"gamma_ref={float(plan.poly.gamma_ref)!r}\n")
    out.write("k,c_k\n")
    for k, c in enumerate(plan.poly.coeffs):
        out.write(f"{k},{float(c)!r}\n")


def _cmd_poly(args):
    eps = args.eps if args.eps is not None else 2.0 / math.sqrt(160_000)
    if args.family == "cap":
        print("cap polynomials need measured moments; use the `moments` or "
              "`solve` subcommands", file=sys.stderr)
        return 2
    spec = bench.SolverSpec(args.family, args.transform)
    lam_min, lam_max = args.lam_min, args.lam_max
    if (lam_min is None) != (lam_max is None):
        lam_min = 1.0 / args.kappa if lam_min is None else lam_min
        lam_max = 1.0 if lam_max is None else lam_max
    plan = bench.make_plan(spec, args.n, eps, args.kappa,
                           lam_min=lam_min, lam_max=lam_max)
    _print_plan_csv(plan, sys.stdout)
    return 0


def _cmd_moments(args):
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0]))
    inst = bench.gen_problem(args.case, args.d, args.kappa, rng)
    noise = build_noise(args.d, args.n_noise, args.xi,
                        int(np.random.SeedSequence([args.seed, 1])
                            .generate_state(1)[0]))
    meas_rng = np.random.default_rng(np.random.SeedSequence([args.seed, 2]))
    cost = CostCounter()
    moments, diag = estimate_moments(inst, args.n, args.shots, noise,
                                     meas_rng, cost)
    print("k,mu_k")
    for k, mu in enumerate(moments.mu):
        print(f"{k},{float(mu)!r}")
    try:
        rho = maxent_density(moments, (inst.lam_min, inst.lam_max),
                             4 * (args.n + 1),
                             moment_tol=polyfactory.MOMENT_MISMATCH_CAP)
        print("j,q_j")
        for j, q in enumerate(rho.logpoly.coeffs):
            print(f"{j},{float(q)!r}")
    except MaxentInfeasibleError as exc:
        print(f"# maxent infeasible: {exc}", file=sys.stderr)
    print(f"# complexity={cost.block_applications} "
          f"clamp_rate={float(diag['clamp_rate'])!r}", file=sys.stderr)
    return 0


def _cmd_solve(args):
    eps = args.eps if args.eps is not None else 2.0 / math.sqrt(args.shots)
    spec = bench.SolverSpec(args.family, args.transform)
    plan = bench.make_plan(spec, args.n, eps, args.kappa)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0]))
    inst = bench.gen_problem(args.case, args.d, args.kappa, rng)
    noise = build_noise(args.d, args.n_noise, args.xi,
                        int(np.random.SeedSequence([args.seed, 1])
                            .generate_state(1)[0]))
    run_rng = np.random.default_rng(np.random.SeedSequence([args.seed, 2]))
    err, cost, diag = bench.run_single(
        plan, inst, noise, args.shots, run_rng,
        half_noise_for_sqrt=not args.full_noise_for_sqrt)
    print(f"err={float(err)!r}")
    print(f"complexity={cost.block_applications}")
    print(f"s_par={float(diag['s_par'])!r}")
    print(f"s_perp={float(diag['s_perp'])!r}")
    print(f"x_norm={diag['x_norm']!r}")
    print(f"clamp_rate={float(diag['clamp_rate'])!r}")
    print(f"maxent_fallback={diag['maxent_fallback']!r}")
    return 0


def _config_from_toml(path: str) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _cmd_sweep(args):
    data = _config_from_toml(args.config) if args.config else {}
    for key in ("case", "d", "kappa", "n_noise", "equations", "eps_factor",
                "half_noise_for_sqrt", "moment_shots"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.xi is not None:
        data["xi"] = args.xi
    if args.shots is not None:
        data["shots"] = args.shots
    if args.steps is not None:
        data["steps"] = args.steps
    if args.solvers is not None:
        data["solvers"] = args.solvers
    data["seed"] = args.seed
    if "solvers" in data:
        data["solvers"] = tuple(bench.SolverSpec.parse(s) if isinstance(s, str)
                                else s for s in data["solvers"])
    config = bench.BenchConfig(**data)
    out = open(args.out, "w", newline="\n") if args.out else sys.stdout
    try:
        records = bench.sweep(config, out, threads=args.threads)
    except Exception as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return 1
    finally:
        if args.out:
            out.close()
    if args.best_n_out:
        with open(args.best_n_out, "w", newline="\n") as fh:
            fh.write(bench.records_to_csv(bench.best_n_view(records)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlspoly")
    sub = parser.add_subparsers(dest="command", required=True)

    p_poly = sub.add_parser("poly", help="emit a solver polynomial as CSV")
    _add_plan_args(p_poly)
    p_poly.add_argument("--lam-min", type=float, default=None)
    p_poly.add_argument("--lam-max", type=float, default=None)
    p_poly.set_defaults(func=_cmd_poly)

    p_m = sub.add_parser("moments", help="measure moments and fit the "
                                         "max-entropy density")
    p_m.add_argument("--case", default="uniform", choices=list(bench.CASES))
    p_m.add_argument("--d", type=int, default=128)
    p_m.add_argument("--kappa", type=float, default=3.0)
    p_m.add_argument("--n", type=int, required=True)
    p_m.add_argument("--shots", type=int, default=10_000)
    p_m.add_argument("--xi", type=float, default=0.0)
    p_m.add_argument("--n-noise", dest="n_noise", type=int, default=20)
    p_m.add_argument("--seed", type=int, required=True)
    p_m.set_defaults(func=_cmd_moments)

    p_s = sub.add_parser("solve", help="run one plan on one seeded instance")
    _add_plan_args(p_s)
    p_s.add_argument("--case", default="uniform", choices=list(bench.CASES))
    p_s.add_argument("--d", type=int, default=128)
    p_s.add_argument("--shots", type=int, default=10_000)
    p_s.add_argument("--xi", type=float, default=0.0)
    p_s.add_argument("--n-noise", dest="n_noise", type=int, default=20)
    p_s.add_argument("--seed", type=int, required=True)
    p_s.add_argument("--full-noise-for-sqrt", action="store_true",
                     help="do not halve the flip rate on square-root walks")
    p_s.set_defaults(func=_cmd_solve)

    p_w = sub.add_parser("sweep", help="run a benchmark grid")
    p_w.add_argument("--config", help="TOML file mirroring BenchConfig fields")
    p_w.add_argument("--seed", type=int, required=True)
    p_w.add_argument("--out", help="CSV output path (default stdout)")
    p_w.add_argument("--best-n-out", help="also write the best-n view here")
    p_w.add_argument("--threads", type=int, default=None,
                     help=f"worker processes (default ${bench.THREADS_ENV} or 1)")
    p_w.add_argument("--case", choices=list(bench.CASES))
    p_w.add_argument("--d", type=int)
    p_w.add_argument("--kappa", type=float)
    p_w.add_argument("--n-noise", dest="n_noise", type=int)
    p_w.add_argument("--equations", type=int)
    p_w.add_argument("--eps-factor", dest="eps_factor", type=float)
    p_w.add_argument("--moment-shots", dest="moment_shots", type=int)
    p_w.add_argument("--half-noise-for-sqrt", dest="half_noise_for_sqrt",
                     action="store_const", const=True, default=None)
    p_w.add_argument("--xi", type=float, nargs="+")
    p_w.add_argument("--shots", type=int, nargs="+")
    p_w.add_argument("--steps", type=int, nargs="+")
    p_w.add_argument("--solvers", nargs="+",
                     help="family[:transform] entries, e.g. cup cheb2 "
                          "cap:inner_square")
    p_w.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
