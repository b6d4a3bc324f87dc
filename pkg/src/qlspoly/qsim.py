"""Noisy execution semantics for the solver plans.

The block encoding is modeled by a unitary walk on a 2d-dimensional dilation
of the diagonal system matrix: one step applies, per eigencomponent, the
rotation [[e, -sqrt(1-e^2)], [sqrt(1-e^2), e]], so after k noiseless steps
the system block of the state is exactly T_k(D) b. Solver output is the
coefficient-weighted combination of these blocks. After every step a flip
F(U) = U (Z (x) Id) U', drawn from a fixed bank of Haar-random bases, is
applied with probability xi.

Measurement reduces a shot to a single +-1 draw with success probability
(1 + v)/2, v the clamped normalized quadratic form of the shot's output
vector. Because shots are independent two-stage draws, the channel is
sampled exactly without per-shot walks:

  * shots with no flip share one deterministic value (one binomial),
  * shots with exactly one flip take one of steps * bank_size enumerable
    values (a multinomial over exactly-computed values),
  * shots with two or more flips are simulated in a vectorized batch,
    capped at `max_noisy_rows` trajectories reused round-robin beyond that.

The cap is the only approximation anywhere in the channel; it is exact
whenever the number of multi-flip shots stays below it.

`noisy_walk` / `run_solver_shot` implement the same semantics as a plain
per-shot loop and serve as the reference the vectorized path is tested
against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chebpoly import cheb_eval
from .density import MomentVector
from .polyfactory import SolverPlan


@dataclass(frozen=True)
class ProblemInstance:
    """Diagonal SPD system D x = b with eigenvalues in [1/kappa, 1]."""

    eigenvalues: np.ndarray
    b: np.ndarray
    kappa: float
    sqrt_available: bool = True

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).copy()
        b = np.asarray(self.b, dtype=float).copy()
        if lam.ndim != 1 or lam.shape != b.shape:
            raise ValueError("eigenvalues and b must be 1-d of equal length")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise ValueError("right-hand side must be normalized")
        if lam.min() < 1.0 / self.kappa - 1e-12 or lam.max() > 1.0 + 1e-12:
            raise ValueError("eigenvalues must lie in [1/kappa, 1]")
        for name, arr in (("eigenvalues", lam), ("b", b)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def lam_min(self) -> float:
        return 1.0 / self.kappa

    @property
    def lam_max(self) -> float:
        return 1.0

    @property
    def gamma_a(self) -> float:
        return 1.0

    def solution(self) -> np.ndarray:
        return self.b / self.eigenvalues


@dataclass(frozen=True)
class NoiseModel:
    """Flip probability per walk step plus a bank of flip operators."""

    d: int
    n_noise: int
    xi: float
    seed: int

    def __post_init__(self):
        if self.d < 1 or (2 * self.d) & (2 * self.d - 1):
            raise ValueError("dilated dimension 2d must be a power of two")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("flip probability must be in [0, 1]")

    @property
    def minus_blocks(self) -> np.ndarray:
        """(n_noise, 2d, d) columns spanning each flip's -1 eigenspace;
        F = Id - 2 V V'. Built lazily, cached."""
        cached = self.__dict__.get("_minus_blocks")
        if cached is None:
            cached = _haar_minus_blocks(self.d, self.n_noise, self.seed)
            self.__dict__["_minus_blocks"] = cached
        return cached

    def flip_matrix(self, i: int) -> np.ndarray:
        """Dense 2d x 2d flip operator (reference/testing use)."""
        v = self.minus_blocks[i]
        return np.eye(2 * self.d, dtype=complex) - 2.0 * v @ v.conj().T

    def with_xi(self, xi: float) -> "NoiseModel":
        out = replace(self, xi=float(xi))
        if "_minus_blocks" in self.__dict__:
            out.__dict__["_minus_blocks"] = self.__dict__["_minus_blocks"]
        return out


def _haar_minus_blocks(d: int, n_noise: int, seed: int) -> np.ndarray:
    # a flip only depends on its -1 eigenspace, i.e. on the span of the last
    # d columns of the Haar basis: a uniformly random d-dim subspace, sampled
    # directly by orthonormalizing a 2d x d complex Gaussian
    rng = np.random.default_rng(seed)
    out = np.empty((n_noise, 2 * d, d), dtype=complex)
    for i in range(n_noise):
        z = rng.standard_normal((2 * d, d)) + 1j * rng.standard_normal((2 * d, d))
        q, _ = np.linalg.qr(z)
        out[i] = q
    out.flags.writeable = False
    return out


def build_noise(d: int, n_noise: int, xi: float, seed: int) -> NoiseModel:
    """Noise model on the 2d-dimensional dilated space; the flip bank is
    drawn from the Haar measure via phase-fixed QR."""
    return NoiseModel(d=d, n_noise=n_noise, xi=float(xi), seed=int(seed))


@dataclass
class CostCounter:
    """Total block-encoding applications and shots across measurements."""

    block_applications: int = 0
    shots: int = 0

    def add(self, shots: int, applications: int):
        self.shots += int(shots)
        self.block_applications += int(applications)

    def merge(self, other: "CostCounter"):
        self.block_applications += other.block_applications
        self.shots += other.shots


@dataclass(frozen=True)
class WalkState:
    """Final dilated state plus the system blocks after 0..steps steps."""

    psi: np.ndarray
    prefix_tops: np.ndarray
    n_flips: int = 0

    @property
    def steps(self) -> int:
        return self.prefix_tops.shape[0] - 1


def _walk_eigs(inst: ProblemInstance, matrix: str) -> np.ndarray:
    if matrix == "D":
        return inst.eigenvalues
    if matrix == "B":
        if not inst.sqrt_available:
            raise ValueError("square-root walk requested but unavailable")
        return np.sqrt(inst.eigenvalues)
    raise ValueError(f"unknown walk matrix {matrix!r}")


def _apply_flip(psi: np.ndarray, v: np.ndarray) -> np.ndarray:
    return psi - 2.0 * v @ (v.conj().T @ psi)


def noisy_walk(inst: ProblemInstance, matrix: str, steps: int,
               noise: NoiseModel, rng: np.random.Generator,
               init_top: np.ndarray | None = None) -> WalkState:
    """Reference per-shot walk: step, maybe flip, record the system block."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    e = _walk_eigs(inst, matrix)
    s = np.sqrt(np.maximum(0.0, 1.0 - e**2))
    d = e.size
    top = np.array(inst.b if init_top is None else init_top, dtype=complex)
    bot = np.zeros(d, dtype=complex)
    tops = np.empty((steps + 1, d), dtype=complex)
    tops[0] = top
    n_flips = 0
    for k in range(1, steps + 1):
        top, bot = e * top - s * bot, s * top + e * bot
        if noise.xi > 0.0 and rng.random() < noise.xi:
            idx = int(rng.integers(noise.n_noise))
            psi = np.concatenate([top, bot])
            psi = _apply_flip(psi, noise.minus_blocks[idx])
            top, bot = psi[:d], psi[d:]
            n_flips += 1
        tops[k] = top
    return WalkState(np.concatenate([top, bot]), tops, n_flips)


def _combine(coeffs: np.ndarray, tops: np.ndarray) -> np.ndarray:
    return np.tensordot(coeffs, tops[: len(coeffs)], axes=(0, 0))


def run_solver_shot(plan: SolverPlan, inst: ProblemInstance,
                    noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """One noisy realization of the plan's output vector (reference path)."""
    coeffs = plan.poly.coeffs[: plan.poly.degree + 1]
    if plan.transform == "none":
        walk = noisy_walk(inst, "D", plan.poly.degree, noise, rng)
        return _combine(coeffs, walk.prefix_tops)
    if plan.transform == "inner_square":
        walk = noisy_walk(inst, "B", plan.poly.degree, noise, rng)
        return _combine(coeffs, walk.prefix_tops)
    # outer square: apply the odd polynomial twice on the square root,
    # restarting the walk from the normalized intermediate vector
    walk1 = noisy_walk(inst, "B", plan.poly.degree, noise, rng)
    y = _combine(coeffs, walk1.prefix_tops)
    scale = np.linalg.norm(y)
    if scale == 0.0:
        return np.zeros_like(y)
    walk2 = noisy_walk(inst, "B", plan.poly.degree, noise, rng,
                       init_top=y / scale)
    return scale * _combine(coeffs, walk2.prefix_tops)


def exact_apply(plan: SolverPlan, inst: ProblemInstance) -> np.ndarray:
    """Noiseless output by direct eigenbasis evaluation (the independent
    cross-check for the walk)."""
    if plan.transform == "none":
        vals = cheb_eval(plan.poly, inst.eigenvalues)
    else:
        root = np.sqrt(inst.eigenvalues)
        vals = cheb_eval(plan.poly, root)
        if plan.transform == "outer_square":
            vals = vals**2
    return vals * inst.b


# ---------------------------------------------------------------------------
# vectorized trajectory engine
# ---------------------------------------------------------------------------

class _WalkTables:
    """Per-(eigenvalues, coefficients) precomputation for analytic jumps.

    cos_k/sin_k give the noiseless rotation by k steps; gp[m+1] is the
    partial sum over k <= m of coeffs[k] * exp(i k theta), so any flip-free
    stretch of the coefficient combination collapses to one gather.
    """

    def __init__(self, eigs: np.ndarray, steps: int, coeffs=None):
        theta = np.arccos(np.clip(eigs, -1.0, 1.0))
        k = np.arange(steps + 1)[:, None]
        self.steps = steps
        self.cos_k = np.cos(k * theta[None, :])
        self.sin_k = np.sin(k * theta[None, :])
        self.e_k = self.cos_k + 1j * self.sin_k
        if coeffs is not None:
            c = np.zeros(steps + 1)
            c[: len(coeffs)] = coeffs
            self.gp = np.concatenate(
                [np.zeros((1, eigs.size), dtype=complex),
                 np.cumsum(c[:, None] * self.e_k, axis=0)])
        else:
            self.gp = None


def _segment_sum(tables: _WalkTables, tau, upto, top, bot):
    """Sum of coeffs[k] * top_k over k in [tau, upto], rows evolving freely
    from state (top, bot) at time tau."""
    z = np.conj(tables.e_k[tau]) * (tables.gp[upto + 1] - tables.gp[tau])
    return z.real * top - z.imag * bot


def _rotate(tables: _WalkTables, delta, top, bot):
    c = tables.cos_k[delta]
    s = tables.sin_k[delta]
    return c * top - s * bot, s * top + c * bot


def _apply_flips_grouped(psi: np.ndarray, ops: np.ndarray, bank: np.ndarray):
    """psi[r] <- F_{ops[r]} psi[r], grouped by operator for batched matmuls."""
    order = np.argsort(ops, kind="stable")
    sorted_ops = ops[order]
    starts = np.searchsorted(sorted_ops, np.arange(bank.shape[0] + 1))
    for m in range(bank.shape[0]):
        rows = order[starts[m]:starts[m + 1]]
        if rows.size == 0:
            continue
        v = bank[m]
        block = psi[rows]
        psi[rows] = block - 2.0 * (block @ v.conj()) @ v.T
    return psi


def _sim_flip_group(tables: _WalkTables, bank: np.ndarray, init_top,
                    times: np.ndarray, ops: np.ndarray,
                    collect: tuple[int, ...] = ()):
    """Simulate rows that all carry the same number of flips.

    times: (rows, f) strictly increasing flip steps in 1..steps;
    ops: matching bank indices. init_top is (d,) or (rows, d); the implied
    initial bottom block is zero. Returns (acc, tops) where acc is the
    coefficient combination (if tables carry coefficients) and tops maps
    each requested step index to the system block at that step.
    """
    steps = tables.steps
    d = tables.cos_k.shape[1]
    rows, f = times.shape
    init_top = np.asarray(init_top, dtype=complex)
    tops_out = {}
    t0 = times[:, 0]
    acc = None
    if tables.gp is not None:
        acc = tables.gp[t0].real * init_top  # noiseless prefix k < t0
    for k in collect:
        if k == 0:
            tops_out[k] = np.broadcast_to(init_top, (rows, d)).astype(complex)
        else:
            noiseless = tables.cos_k[k] * init_top
            tops_out[k] = np.where((t0 > k)[:, None], noiseless, 0.0).astype(complex)
    top = tables.cos_k[t0] * init_top
    bot = tables.sin_k[t0] * init_top
    psi = np.concatenate([top, bot], axis=1)
    psi = _apply_flips_grouped(psi, ops[:, 0], bank)
    top, bot = psi[:, :d], psi[:, d:]
    for o in range(1, f + 1):
        tau = times[:, o - 1]
        nxt = times[:, o] if o < f else np.full(rows, steps + 1)
        if acc is not None:
            acc = acc + _segment_sum(tables, tau, np.minimum(nxt - 1, steps), top, bot)
        for k in collect:
            mask = (tau <= k) & (k < nxt)
            if mask.any():
                delta = np.maximum(k - tau, 0)
                val = (tables.cos_k[delta] * top - tables.sin_k[delta] * bot)
                tops_out[k] = np.where(mask[:, None], val, tops_out[k])
        if o < f:
            top, bot = _rotate(tables, nxt - tau, top, bot)
            psi = np.concatenate([top, bot], axis=1)
            psi = _apply_flips_grouped(psi, ops[:, o], bank)
            top, bot = psi[:, :d], psi[:, d:]
    return acc, tops_out


def _binom_pmf(s: int, xi: float) -> np.ndarray:
    f = np.arange(s + 1)
    log_c = np.array([math.lgamma(s + 1) - math.lgamma(i + 1) - math.lgamma(s - i + 1)
                      for i in f])
    with np.errstate(divide="ignore"):
        log_p = np.where(f > 0, f * np.log(xi) if xi > 0 else -np.inf, 0.0)
        log_q = np.where(s - f > 0, (s - f) * np.log1p(-xi) if xi < 1 else -np.inf, 0.0)
    out = np.exp(log_c + log_p + log_q)
    out[np.isnan(out)] = 0.0
    return out


def _sample_multiflip_patterns(s: int, xi: float, rows: int,
                               n_noise: int, rng: np.random.Generator):
    """Flip patterns of iid-Bernoulli(xi) steps conditioned on >= 2 flips,
    grouped by flip count: yields (times, ops) arrays per count."""
    pmf = _binom_pmf(s, xi)
    probs = pmf[2:].copy()
    total = probs.sum()
    if total <= 0:
        raise ValueError("conditioned flip-count distribution is empty")
    probs /= total
    counts = rng.multinomial(rows, probs)
    groups = []
    for f_idx, g in enumerate(counts):
        if g == 0:
            continue
        f = f_idx + 2
        # f distinct step indices per row, uniformly without replacement
        scores = rng.random((g, s))
        times = np.sort(np.argpartition(scores, f - 1, axis=1)[:, :f], axis=1) + 1
        ops = rng.integers(0, n_noise, size=(g, f))
        groups.append((times, ops))
    return groups


def _tier_probs(s: int, xi: float) -> np.ndarray:
    if s == 0 or xi == 0.0:
        return np.array([1.0, 0.0, 0.0])
    p0 = (1.0 - xi) ** s
    p1 = min(s * xi * (1.0 - xi) ** (s - 1), 1.0 - p0)
    return np.array([p0, p1, max(1.0 - p0 - p1, 0.0)])


class _MeasurementOutcome:
    """Aggregate of the Bernoulli encoding across all shots of one
    measurement."""

    def __init__(self, value_range: float):
        self.range = value_range
        self.positives = 0
        self.shots = 0
        self.clamped = 0
        self.value_sum = 0.0

    def record(self, raw_values, shot_counts, rng, exact: bool):
        raw = np.atleast_1d(np.asarray(raw_values, dtype=float))
        counts = np.broadcast_to(np.atleast_1d(shot_counts), raw.shape)
        clipped = np.clip(raw / self.range, -1.0, 1.0)
        self.clamped += int(counts[np.abs(raw) > self.range].sum())
        self.shots += int(counts.sum())
        self.value_sum += float((clipped * counts).sum())
        if not exact:
            p = 0.5 * (1.0 + clipped)
            self.positives += int(rng.binomial(counts.astype(np.int64), p).sum())

    def estimate(self, n_shots: int, exact: bool) -> float:
        if exact:
            return self.range * self.value_sum / n_shots
        return self.range * (2.0 * self.positives / n_shots - 1.0)

    @property
    def clamp_rate(self) -> float:
        return self.clamped / self.shots if self.shots else 0.0


def _sample_channel(outcome: _MeasurementOutcome, value_fn, steps: int,
                    noise: NoiseModel, n_shots: int,
                    rng: np.random.Generator, max_noisy_rows: int,
                    exact: bool):
    """Drive one measurement: split shots over the flip tiers, compute the
    per-trajectory values, and feed them to the Bernoulli aggregate.

    value_fn(times, ops) -> raw values for a batch of flip schedules;
    times=None requests the noiseless trajectory.
    """
    tiers = _tier_probs(steps, noise.xi)
    if exact:
        k0 = int(round(n_shots * tiers[0]))
        k1 = min(int(round(n_shots * tiers[1])), n_shots - k0)
        counts = np.array([k0, k1, n_shots - k0 - k1])
    else:
        counts = rng.multinomial(n_shots, tiers)
    v0 = value_fn(None, None)
    outcome.record(v0, counts[0], rng, exact)
    if counts[1] > 0:
        cells = steps * noise.n_noise
        t_grid = np.repeat(np.arange(1, steps + 1), noise.n_noise)
        m_grid = np.tile(np.arange(noise.n_noise), steps)
        vals = value_fn(t_grid[:, None], m_grid[:, None])
        cell_counts = rng.multinomial(counts[1], np.full(cells, 1.0 / cells))
        outcome.record(vals, cell_counts, rng, exact)
    if counts[2] > 0:
        n_rows = int(min(counts[2], max_noisy_rows))
        groups = _sample_multiflip_patterns(steps, noise.xi, n_rows,
                                            noise.n_noise, rng)
        base, extra = divmod(int(counts[2]), n_rows)
        row = 0
        for times, ops in groups:
            vals = value_fn(times, ops)
            g = times.shape[0]
            shot_counts = np.full(g, base, dtype=np.int64)
            bump = np.arange(row, row + g) < extra
            shot_counts += bump
            row += g
            outcome.record(vals, shot_counts, rng, exact)


def _plan_walk_data(plan: SolverPlan, inst: ProblemInstance):
    matrix = "D" if plan.transform == "none" else "B"
    eigs = _walk_eigs(inst, matrix) / plan.poly.gamma_ref
    deg = plan.poly.degree
    return eigs, plan.poly.coeffs[: deg + 1], deg


def estimate_quadratic_form(plan: SolverPlan, inst: ProblemInstance,
                            m_mat: np.ndarray, gamma_m: float, n_shots: int,
                            noise: NoiseModel, rng: np.random.Generator,
                            cost: CostCounter | None = None,
                            expectation_only: bool = False,
                            max_noisy_rows: int = 4096):
    """Monte-Carlo estimate of x' M x for the plan's output vector.

    Each shot produces +-1 with success probability (1 + v)/2 where
    v = clamp(xtilde' M xtilde / (gamma^2 gamma_m)); the estimate is
    gamma^2 gamma_m (2 #(+1)/N - 1). Returns (estimate, diagnostics).
    """
    if n_shots < 1:
        raise ValueError("need at least one shot")
    gamma = plan.gamma_total
    if not gamma > 0:
        raise ValueError("plan normalization must be positive")
    scale = gamma**2 * gamma_m
    eigs, coeffs, deg = _plan_walk_data(plan, inst)
    outer = plan.transform == "outer_square"
    steps = plan.steps
    tables = _WalkTables(eigs, deg, coeffs)
    m_mat = np.asarray(m_mat, dtype=float)

    def quad_values(xt: np.ndarray) -> np.ndarray:
        return np.einsum("rd,rd->r", xt @ m_mat, xt.conj()).real

    g_full = tables.gp[deg + 1]
    x0 = g_full.real * inst.b
    if outer:
        y0 = x0
        x0 = g_full.real * y0

    def value_fn(times, ops):
        if times is None:
            return quad_values(x0[None, :].astype(complex))
        if not outer:
            acc, _ = _sim_flip_group(tables, noise.minus_blocks, inst.b,
                                     times, ops)
            return quad_values(acc)
        return _outer_values(times, ops)

    def _outer_values(times, ops):
        # split each row's flips between the two walks of `deg` steps
        in_first = times <= deg
        n1 = in_first.sum(axis=1)
        rows = times.shape[0]
        out = np.empty(rows)
        for f1 in np.unique(n1):
            sel = np.where(n1 == f1)[0]
            t_sel, o_sel = times[sel], ops[sel]
            f = t_sel.shape[1]
            if f1 == 0:
                y = np.broadcast_to(y0.astype(complex), (sel.size, eigs.size))
            else:
                y, _ = _sim_flip_group(tables, noise.minus_blocks, inst.b,
                                       t_sel[:, :f1], o_sel[:, :f1])
            if f1 == f:
                xt = g_full.real * y
            else:
                xt, _ = _sim_flip_group(tables, noise.minus_blocks, y,
                                        t_sel[:, f1:] - deg, o_sel[:, f1:])
            out[sel] = quad_values(np.ascontiguousarray(xt))
        return out

    outcome = _MeasurementOutcome(scale)
    _sample_channel(outcome, value_fn, steps, noise, n_shots, rng,
                    max_noisy_rows, expectation_only)
    if cost is not None:
        cost.add(shots=n_shots, applications=n_shots * steps)
    estimate = outcome.estimate(n_shots, expectation_only)
    return estimate, {"clamp_rate": outcome.clamp_rate}


def estimate_moments(inst: ProblemInstance, n: int, n_shots: int,
                     noise: NoiseModel, rng: np.random.Generator,
                     cost: CostCounter | None = None,
                     expectation_only: bool = False,
                     max_noisy_rows: int = 4096):
    """Measure the Chebyshev moments mu_0..mu_{2n+1} of the system matrix.

    mu_0 = 1 is free; mu_k takes one walk of ceil(k/2) steps per shot, using
    2 T_i T_j = T_{i+j} + T_{|i-j|} to read the product from the recorded
    blocks. Values are Bernoulli-encoded with range 3. Returns
    (MomentVector, diagnostics).
    """
    if n < 0:
        raise ValueError("moment order must be nonnegative")
    if n_shots < 1:
        raise ValueError("need at least one shot")
    eigs = inst.eigenvalues / inst.gamma_a
    mu = np.empty(2 * n + 2)
    mu[0] = 1.0
    clamped = 0
    shots_seen = 0
    for k in range(1, 2 * n + 2):
        i = (k + 1) // 2
        j = k // 2
        tables = _WalkTables(eigs, i)
        collect = tuple(sorted({1, j, i} - {0}))
        cos_i, cos_j = tables.cos_k[i], tables.cos_k[j]
        odd = k % 2 == 1

        def value_fn(times, ops, _collect=collect, _ci=cos_i, _cj=cos_j,
                     _odd=odd, _i=i, _j=j, _tables=tables):
            if times is None:
                ti = _ci * inst.b
                tj = _cj * inst.b
                base = (np.dot(inst.b, _tables.cos_k[1] * inst.b)
                        if _odd else 1.0)
                return 2.0 * np.dot(ti, tj) - base
            _, tops = _sim_flip_group(_tables, noise.minus_blocks, inst.b,
                                      times, ops, collect=_collect)
            ti = tops[_i]
            tj = tops[_j] if _j > 0 else np.broadcast_to(
                inst.b.astype(complex), ti.shape)
            prod = 2.0 * np.einsum("rd,rd->r", ti.conj(), tj).real
            if _odd:
                base = np.einsum("d,rd->r", inst.b, tops[1]).real
            else:
                base = 1.0
            return prod - base

        outcome = _MeasurementOutcome(3.0)
        _sample_channel(outcome, value_fn, i, noise, n_shots, rng,
                        max_noisy_rows, expectation_only)
        mu[k] = outcome.estimate(n_shots, expectation_only)
        clamped += outcome.clamped
        shots_seen += outcome.shots
        if cost is not None:
            cost.add(shots=n_shots, applications=n_shots * i)
    diag = {"clamp_rate": clamped / shots_seen if shots_seen else 0.0}
    return MomentVector(np.clip(mu, -4.0, 4.0), inst.gamma_a), diag
