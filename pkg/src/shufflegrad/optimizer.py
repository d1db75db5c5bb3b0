"""Epoch loop for permutation-order gradient descent, the i.i.d. SGD
baseline, trajectory recording, and per-epoch inequality audits.

One run is strictly sequential; parallelism across runs belongs to the
harness.  All metrics (objective, squared gradient norm, distance to the
minimizer) are evaluated at epoch boundaries only.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng, schedules, shuffling
from .errors import ConfigError, DivergenceError
from .problems import FiniteSumProblem, ProblemConstants

GOLDEN_STEP = schedules.GOLDEN_STEP


@dataclass(frozen=True)
class EpochTrace:
    t: int
    eta_t: float
    f_val: float
    grad_norm_sq: float
    inner_dev_sum: float
    dist_sq: float | None = None
    w_tilde: np.ndarray | None = None
    permutation_digest: str = ""
    extras: dict = field(default_factory=dict)
    wall_ms: float = 0.0


@dataclass
class RunResult:
    seed: int
    initial_weights: np.ndarray
    initial_f: float
    initial_grad_norm_sq: float
    initial_dist_sq: float | None
    traces: list
    final_weights: np.ndarray
    averaged_iterate: np.ndarray | None = None
    initial_extras: dict = field(default_factory=dict)

    @property
    def epochs(self) -> int:
        return len(self.traces)

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(tr, name) for tr in self.traces])


@dataclass(frozen=True)
class OptimizerConfig:
    epochs: int
    schedule: schedules.Schedule
    strategy: shuffling.ShuffleStrategy
    record_weights: bool = True
    audit: bool = False
    consts: ProblemConstants | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epoch budget must be >= 1")


def _digest(perm: np.ndarray) -> str:
    return hashlib.blake2b(perm.tobytes(), digest_size=8).hexdigest()


def run_epoch(
    problem: FiniteSumProblem,
    w: np.ndarray,
    eta_t: float,
    perm: np.ndarray,
    record_inner: bool = False,
):
    """One pass over all components in permutation order.

    Applies n sequential steps of size eta_t / n and accumulates the inner
    deviation sum_{i=0}^{n-1} ||w_i - w_0||^2 on the fly.  Returns
    (w_next, inner_dev_sum, inner iterates or None).  Raises DivergenceError
    as soon as a non-finite iterate shows up.
    """
    if eta_t <= 0:
        raise ValueError("eta_t must be positive")
    n = problem.n
    if len(perm) != n:
        raise ValueError("permutation length does not match component count")
    eta_inner = eta_t / n
    w0 = np.asarray(w, dtype=float)
    wk = w0.copy()
    dev_sum = 0.0
    inner = [w0.copy()] if record_inner else None
    comp_grad = problem.comp_grad
    for k in range(n):
        diff = wk - w0
        step_dev = float(diff @ diff)
        if not math.isfinite(step_dev):
            raise DivergenceError(epoch=-1, inner_index=k)
        dev_sum += step_dev
        wk -= eta_inner * comp_grad(wk, int(perm[k]))
        if record_inner:
            inner.append(wk.copy())
    if not np.all(np.isfinite(wk)):
        raise DivergenceError(epoch=-1, inner_index=n)
    return wk, dev_sum, inner


def run(
    problem: FiniteSumProblem,
    config: OptimizerConfig,
    seed: int,
    w0: np.ndarray | None = None,
    extra_metrics=None,
) -> RunResult:
    """Execute the epoch loop for config.epochs epochs.

    Deterministic in (problem, config, seed, w0).  extra_metrics, when
    given, is called on each boundary iterate and its dict lands in the
    trace.  On divergence the partial result rides on the raised error.
    """
    w = np.zeros(problem.d) if w0 is None else np.asarray(w0, dtype=float).copy()
    strategy = config.strategy.fresh()
    strategy.seed = seed
    w_star = getattr(problem, "w_star", None)

    def boundary(vec):
        f = problem.full_value(vec)
        g = problem.full_grad(vec)
        dist = None if w_star is None else float(np.sum((vec - w_star) ** 2))
        return f, float(g @ g), dist

    f0, g0, dist0 = boundary(w)
    extras0 = extra_metrics(w) if extra_metrics else {}
    traces: list[EpochTrace] = []
    result = RunResult(
        seed=seed,
        initial_weights=w.copy(),
        initial_f=f0,
        initial_grad_norm_sq=g0,
        initial_dist_sq=dist0,
        traces=traces,
        final_weights=w,
        initial_extras=extras0,
    )
    for t in range(1, config.epochs + 1):
        eta_t = schedules.eta_at(config.schedule, t)
        perm = shuffling.next_permutation(strategy, t, problem.n)
        started = time.perf_counter()
        try:
            w, dev_sum, _ = run_epoch(problem, w, eta_t, perm)
        except DivergenceError as err:
            raise DivergenceError(epoch=t, inner_index=err.inner_index, partial=result) from None
        f, gsq, dist = boundary(w)
        if not (math.isfinite(f) and math.isfinite(gsq)):
            raise DivergenceError(epoch=t, partial=result)
        traces.append(
            EpochTrace(
                t=t,
                eta_t=eta_t,
                f_val=f,
                grad_norm_sq=gsq,
                inner_dev_sum=dev_sum,
                dist_sq=dist,
                w_tilde=w.copy() if config.record_weights else None,
                permutation_digest=_digest(perm),
                extras=extra_metrics(w) if extra_metrics else {},
                wall_ms=(time.perf_counter() - started) * 1e3,
            )
        )
    result.final_weights = w.copy()
    return result


def weighted_average_iterate(result: RunResult) -> np.ndarray:
    """Step-size-weighted average of the boundary iterates:
    sum_t eta_t w_{t-1} / sum_t eta_t over recorded epochs."""
    if not result.traces:
        raise ValueError("no epochs recorded")
    if any(tr.w_tilde is None for tr in result.traces):
        raise ValueError("weights were not recorded for this run")
    prev = [result.initial_weights] + [tr.w_tilde for tr in result.traces[:-1]]
    etas = np.array([tr.eta_t for tr in result.traces])
    stacked = np.stack(prev)
    return (etas[:, None] * stacked).sum(axis=0) / etas.sum()


# ---------------------------------------------------------------------------
# Per-epoch audits
# ---------------------------------------------------------------------------

#: relative slack tolerance: inequalities are exact in reals, this absorbs
#: float rounding only.
AUDIT_RTOL = 1e-9


@dataclass(frozen=True)
class AuditEntry:
    epoch: int
    check: str
    lhs: float
    rhs: float
    applicable: bool
    reason: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        if not self.applicable:
            return True
        return self.slack >= -AUDIT_RTOL * max(1.0, abs(self.rhs))


def audit_epoch(
    problem: FiniteSumProblem,
    consts: ProblemConstants,
    prev,
    trace: EpochTrace,
) -> list:
    """Deterministic single-epoch inequality checks on a realized trajectory.

    prev carries the epoch-start metrics: (f, grad_norm_sq, dist_sq) of the
    boundary iterate the epoch started from.  Three checks, each gated on
    its own step-size cap and otherwise recorded as skipped:

    - descent: the objective drops by at least eta/2 ||grad||^2 up to the
      inner-deviation correction (needs eta_t <= 1/L)
    - deviation: the inner deviation sum is controlled by the gradient norm
      and variance constants (needs eta_t <= 1/(sqrt(3) L))
    - deviation_scvx: the distance-based deviation control around a known
      minimizer (needs eta_t <= 1/(2L))
    """
    f_prev, gsq_prev, dist_prev = prev
    eta = trace.eta_t
    L = consts.L_hat
    out = []

    if eta <= 1.0 / L:
        rhs = f_prev - 0.5 * eta * gsq_prev + (L**2 * eta / (2.0 * problem.n)) * trace.inner_dev_sum
        out.append(AuditEntry(trace.t, "descent", trace.f_val, rhs, True))
    else:
        out.append(
            AuditEntry(trace.t, "descent", 0.0, 0.0, False, "step-size precondition violated")
        )

    if eta <= 1.0 / (math.sqrt(3.0) * L):
        rhs = problem.n * eta**2 * (
            (3.0 * consts.theta_hat + 2.0) * gsq_prev + 3.0 * consts.sigma_sq_hat
        )
        out.append(AuditEntry(trace.t, "deviation", trace.inner_dev_sum, rhs, True))
    else:
        out.append(
            AuditEntry(trace.t, "deviation", 0.0, 0.0, False, "step-size precondition violated")
        )

    if consts.sigma_star_sq is not None and dist_prev is not None:
        if eta <= 0.5 / L:
            s2 = consts.sigma_star_sq
            rhs = (
                (8.0 * L**2 / 3.0) * eta**2 * dist_prev
                + (16.0 * L**2 * s2 / 3.0) * eta**4
                + 2.0 * s2 * eta**2
            )
            out.append(
                AuditEntry(
                    trace.t, "deviation_scvx", trace.inner_dev_sum / problem.n, rhs, True
                )
            )
        else:
            out.append(
                AuditEntry(
                    trace.t, "deviation_scvx", 0.0, 0.0, False,
                    "step-size precondition violated",
                )
            )
    return out


def audit_run(problem, consts, result: RunResult) -> list:
    """audit_epoch applied along a finished run."""
    entries = []
    prev = (result.initial_f, result.initial_grad_norm_sq, result.initial_dist_sq)
    for tr in result.traces:
        entries.extend(audit_epoch(problem, consts, prev, tr))
        prev = (tr.f_val, tr.grad_norm_sq, tr.dist_sq)
    return entries


def audit_rr_expectation(
    problem: FiniteSumProblem,
    consts: ProblemConstants,
    w: np.ndarray,
    eta_t: float,
    num_perms: int = 1000,
    seed: int = 0,
) -> dict:
    """Permutation-expectation checks for one epoch started at w.

    Exhaustive over all n! orders when n <= 7, otherwise Monte Carlo over
    num_perms uniform draws (requires num_perms >= 100).  Checks the mean
    inner-deviation bound and, when every component is convex and the
    minimizer is known, the mean distance recursion.  Sampling mode asserts
    mean <= rhs + 3 SE; exhaustive mode uses the rounding tolerance only.
    """
    n = problem.n
    w = np.asarray(w, dtype=float)
    exhaustive = n <= 7
    if not exhaustive and num_perms < 100:
        raise ValueError("need num_perms >= 100 in sampling mode")
    if exhaustive:
        perms = shuffling.all_permutations(n)
    else:
        g = rng.stream(seed, rng.DOMAIN_PERMUTATION, counter=3)
        perms = [g.permutation(n).astype(np.int64) for _ in range(num_perms)]

    gsq = float(np.linalg.norm(problem.full_grad(w)) ** 2)
    f_w = problem.full_value(w)
    w_star = getattr(problem, "w_star", None)
    check_distance = (
        problem.component_convex
        and w_star is not None
        and consts.sigma_star_sq is not None
        and eta_t <= GOLDEN_STEP / consts.L_hat
    )
    dev_vals = np.empty(len(perms))
    dist_vals = np.empty(len(perms)) if check_distance else None
    for j, perm in enumerate(perms):
        w_next, dev, _ = run_epoch(problem, w, eta_t, perm)
        dev_vals[j] = dev
        if check_distance:
            dist_vals[j] = float(np.sum((w_next - w_star) ** 2))

    report = {"mode": "exhaustive" if exhaustive else "sampling", "count": len(perms)}

    def entry(name, samples, rhs):
        mean = float(samples.mean())
        se = (
            0.0
            if exhaustive
            else float(samples.std(ddof=1) / math.sqrt(len(samples)))
        )
        margin = 0.0 if exhaustive else 3.0 * se
        ok = mean <= rhs + margin + AUDIT_RTOL * max(1.0, abs(rhs))
        report[name] = {"mean": mean, "se": se, "rhs": rhs, "ok": ok}

    if eta_t <= 1.0 / (math.sqrt(3.0) * consts.L_hat):
        rhs_dev = 2.0 * eta_t**2 * (
            (consts.theta_hat + n) * gsq + consts.sigma_sq_hat
        )
        entry("deviation_rr_mean", dev_vals, rhs_dev)
    else:
        report["deviation_rr_mean"] = {"skipped": "step-size precondition violated"}

    if check_distance:
        f_gap = f_w - problem.f_star
        dist_now = float(np.sum((w - w_star) ** 2))
        lhs_samples = dist_vals - dist_now + 2.0 * eta_t * f_gap
        rhs_dist = 2.0 * consts.L_hat * eta_t**3 * consts.sigma_star_sq / (3.0 * n)
        entry("distance_recursion_rr", lhs_samples, rhs_dist)
    elif problem.component_convex and w_star is not None:
        report["distance_recursion_rr"] = {"skipped": "step-size precondition violated"}
    return report


# ---------------------------------------------------------------------------
# i.i.d. sampling baseline
# ---------------------------------------------------------------------------


def run_sgd_baseline(
    problem: FiniteSumProblem,
    schedule: schedules.Schedule,
    total_iters: int,
    seed: int,
    w0: np.ndarray | None = None,
    metric_stride: int = 1,
) -> RunResult:
    """Single-sample SGD with i.i.d. uniform component choice.

    The schedule is applied per iteration (no epoch structure, no 1/n
    scaling).  Metrics are recorded every metric_stride iterations.
    """
    if total_iters < 1:
        raise ConfigError("total_iters must be >= 1")
    w = np.zeros(problem.d) if w0 is None else np.asarray(w0, dtype=float).copy()
    g = rng.stream(seed, rng.DOMAIN_SGD_SAMPLING)
    picks = g.integers(0, problem.n, size=total_iters)
    w_star = getattr(problem, "w_star", None)

    def boundary(vec):
        grad = problem.full_grad(vec)
        dist = None if w_star is None else float(np.sum((vec - w_star) ** 2))
        return problem.full_value(vec), float(grad @ grad), dist

    f0, g0, dist0 = boundary(w)
    traces: list[EpochTrace] = []
    result = RunResult(
        seed=seed,
        initial_weights=w.copy(),
        initial_f=f0,
        initial_grad_norm_sq=g0,
        initial_dist_sq=dist0,
        traces=traces,
        final_weights=w,
    )
    for t in range(1, total_iters + 1):
        eta = schedules.eta_at(schedule, t)
        w -= eta * problem.comp_grad(w, int(picks[t - 1]))
        if not np.all(np.isfinite(w)):
            raise DivergenceError(epoch=t, partial=result)
        if t % metric_stride == 0 or t == total_iters:
            f, gsq, dist = boundary(w)
            traces.append(
                EpochTrace(
                    t=t,
                    eta_t=eta,
                    f_val=f,
                    grad_norm_sq=gsq,
                    inner_dev_sum=0.0,
                    dist_sq=dist,
                )
            )
    result.final_weights = w.copy()
    return result
