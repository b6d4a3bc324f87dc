"""Benchmark harness: problem generation, the error metric, parameter
sweeps with CSV output, and deterministic seeding.

A sweep cell is one (solver, transform, xi, shots, n) combination; each cell
draws its own test equations (with a fresh flip bank per equation), solves
them once, and reports the median and 95th percentile of the error plus mean
complexity. Seeds are derived per (cell, equation) from the master seed so
results are byte-identical no matter how many workers run the grid.
"""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import polyfactory
from .density import MaxentInfeasibleError, SpectralDensity, maxent_density
from .polyfactory import SolverPlan, apply_transform
from .qsim import (CostCounter, NoiseModel, ProblemInstance, build_noise,
                   estimate_moments, estimate_quadratic_form)

CSV_HEADER = ("solver,transform,xi,N,n,median_err,p95_err,complexity,"
              "clamp_rate,maxent_fallback_rate")

THREADS_ENV = "QLSPOLY_THREADS"

CASES = ("uniform", "clustered")

# eigenvalue jitter around cluster centers, relative to the interval width
_CLUSTER_SIGMA = 0.025


@dataclass(frozen=True)
class SolverSpec:
    """A solver family plus transform, before any instance data is seen."""

    family: str
    transform: str = "none"

    def __post_init__(self):
        if self.family not in ("qsvt", "cheb1", "cheb2", "cheb3", "cup", "cap"):
            raise ValueError(f"unknown solver family {self.family!r}")
        if self.transform not in polyfactory.TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.family == "cheb1" and self.transform == "outer_square":
            raise ValueError("cheb1 has mixed parity; outer square unavailable")

    @property
    def label(self) -> str:
        return f"{self.family}:{self.transform}"

    @staticmethod
    def parse(text: str) -> "SolverSpec":
        family, _, transform = text.partition(":")
        return SolverSpec(family.strip(), transform.strip() or "none")


@dataclass(frozen=True)
class BenchConfig:
    case: str = "uniform"
    d: int = 128
    kappa: float = 3.0
    n_noise: int = 20
    xi: tuple[float, ...] = (0.0,)
    shots: tuple[int, ...] = (160_000,)
    steps: tuple[int, ...] = tuple(range(1, 17))
    solvers: tuple[SolverSpec, ...] = (SolverSpec("qsvt"),)
    equations: int = 200
    seed: int = 0
    eps_factor: float = 2.0  # target accuracy eps = eps_factor / sqrt(N)
    half_noise_for_sqrt: bool = True
    moment_shots: int | None = None  # defaults to the measurement shot count

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if self.d < 2 or self.d & (self.d - 1):
            raise ValueError("dimension must be a power of two, at least 2")
        for name in ("xi", "shots", "steps", "solvers"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} list must be nonempty")
            object.__setattr__(self, name, value)

    def cells(self) -> list[tuple[SolverSpec, float, int, int]]:
        return [(solver, xi, n_shots, n)
                for solver in self.solvers
                for xi in self.xi
                for n_shots in self.shots
                for n in self.steps]


@dataclass(frozen=True)
class BenchRecord:
    solver: str
    transform: str
    xi: float
    shots: int
    n: int
    median_err: float
    p95_err: float
    complexity: float
    clamp_rate: float
    maxent_fallback_rate: float

    def csv_row(self) -> str:
        return ",".join([
            self.solver, self.transform, repr(self.xi), str(self.shots),
            str(self.n), repr(self.median_err), repr(self.p95_err),
            repr(self.complexity), repr(self.clamp_rate),
            repr(self.maxent_fallback_rate),
        ])


def gen_problem(case: str, d: int, kappa: float,
                rng: np.random.Generator) -> ProblemInstance:
    """Random diagonal SPD test system with condition number bound kappa.

    "uniform": smallest eigenvalue pinned at 1/kappa, the rest iid uniform.
    "clustered": eigenvalues normal around 4 random cluster locations,
    clamped to [1/kappa, 1].
    """
    if d < 2:
        raise ValueError("need dimension at least 2")
    lo = 1.0 / kappa
    if case == "uniform":
        lam = np.empty(d)
        lam[0] = lo
        lam[1:] = rng.uniform(lo, 1.0, size=d - 1)
    elif case == "clustered":
        centers = rng.uniform(lo, 1.0, size=4)
        which = rng.integers(0, 4, size=d)
        sigma = _CLUSTER_SIGMA / (1.0 - lo)
        lam = np.clip(centers[which] + sigma * rng.standard_normal(d), lo, 1.0)
    else:
        raise ValueError(f"unknown case {case!r}")
    b = rng.standard_normal(d)
    b /= np.linalg.norm(b)
    return ProblemInstance(eigenvalues=lam, b=b, kappa=kappa)


def err_metric(s_par: float, s_perp: float, x_norm: float) -> float:
    """Relative squared error from the two projected-norm measurements,
    regularized so noisy slightly-negative estimates count as error."""
    if not x_norm > 0:
        raise ValueError("solution norm must be positive")
    return ((math.sqrt(max(0.0, s_par)) - x_norm) ** 2 + abs(s_perp)) / x_norm**2


@dataclass(frozen=True)
class CapSpec:
    """Deferred adaptive plan: moments must be measured on the instance
    before the polynomial exists."""

    n: int
    eps: float
    kappa: float
    transform: str = "none"


def make_plan(solver: SolverSpec, n: int, eps: float, kappa: float,
              lam_min: float | None = None, lam_max: float | None = None):
    """Instance-independent plan for a solver spec (CapSpec for cap, which
    needs per-instance measurements). Spectral bounds default to
    [1/kappa, 1], square-rooted for the outer transform."""
    if lam_min is None or lam_max is None:
        lam_min, lam_max = 1.0 / kappa, 1.0
        if solver.transform == "outer_square":
            lam_min, lam_max = math.sqrt(lam_min), math.sqrt(lam_max)
    family = solver.family
    if family == "cap":
        return CapSpec(n=n, eps=eps, kappa=kappa, transform=solver.transform)
    if family == "qsvt":
        kap = math.sqrt(kappa) if solver.transform == "outer_square" else kappa
        plan = polyfactory.qsvt_poly(n, kap, eps)
    elif family == "cheb1":
        plan = polyfactory.cheb1_poly(n, lam_min, lam_max)
    elif family == "cheb2":
        plan = polyfactory.cheb2_poly(n, lam_min, lam_max)
    elif family == "cheb3":
        plan = polyfactory.cheb3_poly(n, lam_min, lam_max)
    elif family == "cup":
        rho = SpectralDensity("uniform", (lam_min, lam_max))
        parity = "odd" if solver.transform == "outer_square" else "any"
        plan = polyfactory.cup_poly(rho, n, eps, parity=parity)
    else:
        raise ValueError(f"unknown family {family!r}")
    return apply_transform(plan, solver.transform)


def _cap_plan(spec: CapSpec, inst: ProblemInstance, noise: NoiseModel,
              moment_shots: int, rng: np.random.Generator,
              cost: CostCounter) -> SolverPlan:
    moments, _ = estimate_moments(inst, spec.n, moment_shots, noise, rng, cost)
    interval = (inst.lam_min, inst.lam_max)
    if spec.transform == "outer_square":
        fallback = False
        try:
            rho = maxent_density(moments, interval, 4 * (spec.n + 1),
                                 moment_tol=polyfactory.MOMENT_MISMATCH_CAP)
        except MaxentInfeasibleError:
            rho = SpectralDensity("uniform", interval)
            fallback = True
        plan = polyfactory.cup_poly(rho.sqrt_pushforward() if not fallback
                                    else SpectralDensity(
                                        "uniform", (math.sqrt(interval[0]),
                                                    math.sqrt(interval[1]))),
                                    spec.n, spec.eps, parity="odd",
                                    family="cap")
        plan = replace(plan, maxent_fallback=fallback)
    else:
        plan = polyfactory.cap_poly(moments, spec.n, spec.eps, interval)
    return apply_transform(plan, spec.transform)


def run_single(plan, inst: ProblemInstance, noise: NoiseModel, n_shots: int,
               rng: np.random.Generator, half_noise_for_sqrt: bool = True,
               moment_shots: int | None = None,
               expectation_only: bool = False):
    """Solve one equation with one plan: two quadratic-form measurements of
    N shots each (plus the moment budget for adaptive plans). Returns
    (err, complexity, diagnostics)."""
    cost = CostCounter()
    clamp_rates = []
    fallback = 0.0
    if isinstance(plan, CapSpec):
        plan = _cap_plan(plan, inst, noise, moment_shots or n_shots, rng, cost)
        fallback = float(plan.maxent_fallback)
    noise_eff = noise
    if plan.transform != "none" and half_noise_for_sqrt:
        noise_eff = noise.with_xi(noise.xi / 2.0)
    x = inst.solution()
    x_norm = np.linalg.norm(x)
    xhat = x / x_norm
    proj = np.outer(xhat, xhat)
    m_perp = np.eye(inst.dim) - proj
    s_par, diag1 = estimate_quadratic_form(
        plan, inst, proj, 1.0, n_shots, noise_eff, rng, cost,
        expectation_only=expectation_only)
    s_perp, diag2 = estimate_quadratic_form(
        plan, inst, m_perp, 1.0, n_shots, noise_eff, rng, cost,
        expectation_only=expectation_only)
    clamp_rates.extend([diag1["clamp_rate"], diag2["clamp_rate"]])
    err = err_metric(s_par, s_perp, x_norm)
    diagnostics = {
        "clamp_rate": float(np.mean(clamp_rates)),
        "maxent_fallback": fallback,
        "s_par": s_par,
        "s_perp": s_perp,
        "x_norm": float(x_norm),
        "plan": plan,
    }
    return err, cost, diagnostics


def _instance_seed_seq(seed: int, cell_idx: int, eq_idx: int, stream: int):
    return np.random.SeedSequence([seed, cell_idx, eq_idx, stream])


def _run_cell_equation(config: BenchConfig, cell_idx: int, eq_idx: int, plan,
                       xi: float, n_shots: int):
    gen_rng = np.random.default_rng(
        _instance_seed_seq(config.seed, cell_idx, eq_idx, 0))
    inst = gen_problem(config.case, config.d, config.kappa, gen_rng)
    noise_seed = int(_instance_seed_seq(config.seed, cell_idx, eq_idx, 1)
                     .generate_state(1)[0])
    noise = build_noise(config.d, config.n_noise, xi, noise_seed)
    run_rng = np.random.default_rng(
        _instance_seed_seq(config.seed, cell_idx, eq_idx, 2))
    err, cost, diag = run_single(
        plan, inst, noise, n_shots, run_rng,
        half_noise_for_sqrt=config.half_noise_for_sqrt,
        moment_shots=config.moment_shots)
    return err, cost.block_applications, diag["clamp_rate"], diag["maxent_fallback"]


def _cell_record(config: BenchConfig, cell_idx: int,
                 executor=None) -> BenchRecord:
    solver, xi, n_shots, n = config.cells()[cell_idx]
    eps = config.eps_factor / math.sqrt(n_shots)
    try:
        plan = make_plan(solver, n, eps, config.kappa)
    except (ValueError, RuntimeError) as exc:
        print(f"cell {solver.label} xi={xi} N={n_shots} n={n}: "
              f"plan unavailable ({exc})", file=sys.stderr)
        return BenchRecord(solver.family, solver.transform, xi, n_shots, n,
                           float("nan"), float("nan"), float("nan"),
                           float("nan"), float("nan"))
    args = [(config, cell_idx, eq, plan, xi, n_shots)
            for eq in range(config.equations)]
    if executor is None:
        results = [_run_cell_equation(*a) for a in args]
    else:
        results = list(executor.map(_run_cell_equation_star, args,
                                    chunksize=max(1, len(args) // 32)))
    errs = np.array([r[0] for r in results])
    complexity = float(np.mean([r[1] for r in results]))
    clamp = float(np.mean([r[2] for r in results]))
    fallback = float(np.mean([r[3] for r in results]))
    return BenchRecord(solver.family, solver.transform, xi, n_shots, n,
                       float(np.median(errs)),
                       float(np.percentile(errs, 95)),
                       complexity, clamp, fallback)


def _run_cell_equation_star(args):
    return _run_cell_equation(*args)


def sweep(config: BenchConfig, out=None, threads: int | None = None):
    """Run the full grid in deterministic cell order, optionally streaming
    one CSV row per cell to `out`; returns the records."""
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    records = []
    executor = None
    try:
        if threads > 1:
            executor = ProcessPoolExecutor(max_workers=threads)
        if out is not None:
            out.write(CSV_HEADER + "\n")
        for cell_idx, cell in enumerate(config.cells()):
            try:
                record = _cell_record(config, cell_idx, executor)
            except Exception as exc:
                solver, xi, n_shots, n = cell
                raise RuntimeError(
                    f"cell {solver.label} xi={xi} N={n_shots} n={n} "
                    f"failed: {exc}") from exc
            records.append(record)
            if out is not None:
                out.write(record.csv_row() + "\n")
                out.flush()
    finally:
        if executor is not None:
            executor.shutdown()
    return records


def best_n_view(records) -> list[BenchRecord]:
    """Per (solver, transform, xi, N), the record whose n minimizes the
    median error; a pure post-process of the emitted rows."""
    groups: dict[tuple, BenchRecord] = {}
    for rec in records:
        key = (rec.solver, rec.transform, rec.xi, rec.shots)
        best = groups.get(key)
        if best is None:
            groups[key] = rec
        elif not math.isnan(rec.median_err) and (
                math.isnan(best.median_err)
                or rec.median_err < best.median_err):
            groups[key] = rec
    return list(groups.values())


def records_from_csv(text: str) -> list[BenchRecord]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized CSV header")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        out.append(BenchRecord(parts[0], parts[1], float(parts[2]),
                               int(parts[3]), int(parts[4]), float(parts[5]),
                               float(parts[6]), float(parts[7]),
                               float(parts[8]), float(parts[9])))
    return out


def records_to_csv(records) -> str:
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in records]) + "\n"
