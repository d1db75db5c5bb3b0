"""Acceptance gate: every release criterion as an executable check.

Each criterion builds its own fixtures, runs at a pinned tolerance and a
stated wall-clock budget, and reports pass/fail/skip with a one-line
detail.  `run_all` prints one line per criterion and is wired to the
`accept` CLI subcommand (exit code 0 only when nothing failed).
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, datasets, harness, optimizer, rng, schedules, shuffling
from .problems import (
    LogisticNonconvex,
    ProblemConstants,
    QuadraticSC,
    component_variance,
    estimate_constants,
    widen_sigma_floor,
)


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float
    skipped: bool = False

    @property
    def status(self) -> str:
        if self.skipped:
            return "SKIP"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return (
            f"[{self.status}] {self.name}  ({self.seconds:.1f}s / "
            f"budget {self.budget:.0f}s)  {self.detail}"
        )


def _timed(name, budget, fn):
    start = time.perf_counter()
    try:
        passed, detail = fn()
        skipped = False
    except _Skip as sk:
        passed, detail, skipped = True, str(sk), True
    elapsed = time.perf_counter() - start
    if not skipped and elapsed > budget:
        passed = False
        detail += f"; exceeded runtime budget ({elapsed:.1f}s > {budget:.0f}s)"
    return CriterionResult(name, passed, detail, elapsed, budget, skipped)


class _Skip(Exception):
    pass


# ---------------------------------------------------------------------------
# 1. gradient correctness
# ---------------------------------------------------------------------------


def _fd_gradient(problem, w, i, h=1e-5):
    g = np.empty_like(w)
    for j in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[j] += h
        wm[j] -= h
        g[j] = (problem.comp_value(wp, i) - problem.comp_value(wm, i)) / (2 * h)
    return g


def check_gradients() -> tuple:
    ds = datasets.synthetic_classification(80, 20, seed=11)
    logistic = LogisticNonconvex(ds, lam=0.01)
    quad = QuadraticSC.random(40, 8, seed=12, eig_lo=0.2, eig_hi=1.5)
    g = rng.stream(100, rng.DOMAIN_PROBE)
    worst = 0.0
    for problem, scale in ((logistic, 2.0), (quad, 2.0)):
        for _ in range(100):
            w = scale * g.standard_normal(problem.d)
            i = int(g.integers(0, problem.n))
            ga = problem.comp_grad(w, i)
            gf = _fd_gradient(problem, w, i)
            denom = max(np.linalg.norm(ga), np.linalg.norm(gf))
            rel = float(np.linalg.norm(ga - gf)) / denom
            worst = max(worst, rel)
    return worst <= 1e-6, f"max relative gradient error {worst:.2e} (tol 1e-6)"


# ---------------------------------------------------------------------------
# 2. without-replacement identity
# ---------------------------------------------------------------------------


def check_subset_identity() -> tuple:
    g = rng.stream(101, rng.DOMAIN_PROBE)
    worst = 0.0
    sets = 0
    for n in range(2, 7):
        for _ in range(10):
            values = g.standard_normal((n, 3))
            sets += 1
            for k in range(1, n + 1):
                rep = shuffling.verify_rr_identity(values, k)
                worst = max(worst, rep["abs_gap"])
    return worst <= 1e-12, f"{sets} sets, max |gap| {worst:.2e} (tol 1e-12)"


# ---------------------------------------------------------------------------
# 3. geometric recursion domination (vectorized batch)
# ---------------------------------------------------------------------------


def check_geometric_domination(draws: int = 1000, T: int = 10_000) -> tuple:
    g = rng.stream(102, rng.DOMAIN_PROBE)
    q = g.integers(1, 4, size=draws).astype(float)
    rho = 10.0 ** g.uniform(-1.3, 0.5, size=draws)
    D = g.uniform(0.0, 10.0, size=draws)
    y1 = g.uniform(0.0, 10.0, size=draws)
    constant = g.uniform(size=draws) < 0.5
    # harmonic closed bound needs beta >= max(q - 1, 1)
    beta = np.maximum(q - 1.0, 1.0) + g.uniform(0.0, 20.0, size=draws)
    eta_const = g.uniform(0.01, 0.99, size=draws) / rho

    min_slack = np.inf
    for mask, is_const in ((constant, True), (~constant, False)):
        if not mask.any():
            continue
        qq, rr_, dd, yy1, bb = q[mask], rho[mask], D[mask], y1[mask], beta[mask]
        y = yy1.copy()
        if is_const:
            eta = eta_const[mask]
            contraction = 1.0 - rr_ * eta
            pw = np.ones_like(y)
            tail = dd * eta**qq / rr_
            for _ in range(T):
                pw *= contraction
                y = contraction * y + dd * eta ** (qq + 1.0)
                bound = yy1 * pw + tail * (1.0 - pw)
                slack = (bound - y) / np.maximum(1.0, np.abs(bound))
                min_slack = min(min_slack, float(slack.min()))
            exp_bound = yy1 * np.exp(-rr_ * eta * T) + tail
            min_slack = min(
                min_slack,
                float(np.min((exp_bound - y) / np.maximum(1.0, np.abs(exp_bound)))),
            )
        else:
            num = bb * np.where(qq >= 2, bb - 1.0, 1.0) * np.where(qq >= 3, bb - 2.0, 1.0)
            lead = qq ** (qq + 1.0) * dd / rr_ ** (qq + 1.0)
            for t in range(1, T + 1):
                eta = qq / (rr_ * (t + bb))
                y = (1.0 - rr_ * eta) * y + dd * eta ** (qq + 1.0)
                den = (
                    (t + bb)
                    * np.where(qq >= 2, t + bb - 1.0, 1.0)
                    * np.where(qq >= 3, t + bb - 2.0, 1.0)
                )
                bound = num / den * yy1 + lead * np.log(t + bb) / den
                slack = (bound - y) / np.maximum(1.0, np.abs(bound))
                min_slack = min(min_slack, float(slack.min()))
    return min_slack >= -1e-9, f"{draws} draws to T={T}, min relative slack {min_slack:.2e}"


# ---------------------------------------------------------------------------
# 4. averaged recursion domination (vectorized batch)
# ---------------------------------------------------------------------------


def check_averaged_domination(draws: int = 500, T: int = 10_000) -> tuple:
    g = rng.stream(103, rng.DOMAIN_PROBE)
    nu = g.uniform(0.05, 0.5, size=draws)  # alpha * m
    m = g.uniform(0.5, 2.5, size=draws)
    alpha = nu / m
    unit_branch = g.uniform(size=draws) < 0.5
    # alpha (q - m) == 1 on the unit branch, in (0.2, 1) otherwise; the
    # closed bound's decaying-sum term is only valid up to 1.
    aqm = np.where(unit_branch, 1.0, g.uniform(0.2, 0.999, size=draws))
    q = m + aqm / alpha
    gamma = 10.0 ** g.uniform(-1.0, 0.7, size=draws)
    beta = g.uniform(0.5, 20.0, size=draws)
    theta = 1.0 + beta
    C = g.uniform(0.1, 10.0, size=draws)
    H = np.where(g.uniform(size=draws) < 0.5, 0.0, g.uniform(0.0, 5.0, size=draws))
    D = g.uniform(0.0, 5.0, size=draws)
    rho = g.uniform(0.05, 2.0, size=draws)
    policy = g.integers(0, 3, size=draws)  # 0 max_z, 1 crash_end, 2 random

    cap1 = C + H * np.log(1.0 + theta)
    y = g.uniform(size=draws) * cap1
    y1 = y.copy()
    z_sum = np.zeros(draws)
    for t in range(1, T + 1):
        eta = gamma / (t + beta) ** alpha
        drive = eta**q * D
        denom = rho * eta**m
        cap_next = C + H * np.log(t + 1.0 + theta)
        z_max = (y + drive) / denom
        z_min = np.maximum(0.0, (y + drive - cap_next) / denom)
        u = g.uniform(size=draws)
        z = np.where(
            policy == 0,
            z_max,
            np.where(
                policy == 1,
                z_max if t == T else z_min,
                z_min + (z_max - z_min) * u,
            ),
        )
        y = y - denom * z + drive
        z_sum += z

    avg_z = z_sum / T
    am = nu
    a_T = np.where(
        np.abs(aqm - 1.0) <= 1e-12,
        np.log(T + beta) - np.log(beta),
        (T + beta) ** (1.0 - aqm) / np.where(aqm == 1.0, 1.0, 1.0 - aqm),
    )
    gm = gamma**m
    bound = (
        (1.0 + beta) ** am * y1 / (rho * gm * T)
        + C * (T - 1.0 + beta) ** am / (2.0 * rho * am * gm * T)
        + H * (T - 1.0 + beta) ** am * np.log(T + theta) / (2.0 * rho * am * gm * T)
        + D * gamma ** (q - m) * a_T / (rho * T)
    )
    slack = (bound - avg_z) / np.maximum(1.0, np.abs(bound))
    min_slack = float(slack.min())
    n_unit = int(unit_branch.sum())
    return (
        min_slack >= -1e-9,
        f"{draws} draws ({n_unit} on the log branch) to T={T}, min relative slack {min_slack:.2e}",
    )


# ---------------------------------------------------------------------------
# 5. elementary inequalities
# ---------------------------------------------------------------------------


def check_elementary() -> tuple:
    rep = analysis.elementary_inequalities_report(draws=10_000, seed=104)
    bad = {k: v for k, v in rep.items() if k != "draws" and v}
    return not bad, f"violations {rep}" if bad else "0 violations in 10000 draws per inequality"


# ---------------------------------------------------------------------------
# 6. per-epoch descent and deviation audits
# ---------------------------------------------------------------------------


def _audited_runs(problem, consts, sched, seeds, epochs):
    """Run each seed under random reshuffling, then audit every epoch."""
    results = []
    for seed in seeds:
        cfg = optimizer.OptimizerConfig(
            epochs=epochs,
            schedule=sched,
            strategy=shuffling.ShuffleStrategy(shuffling.RANDOM_RESHUFFLE, seed=seed),
        )
        results.append(optimizer.run(problem, cfg, seed))
    return results


def _epoch_start_points(result):
    return [result.initial_weights] + [tr.w_tilde for tr in result.traces[:-1]]


def check_epoch_audits() -> tuple:
    seeds = list(range(10))
    epochs = 50
    details = []

    quad = QuadraticSC.random(100, 10, seed=21)
    consts_q = estimate_constants(quad, [])
    gamma_q = 1.0 / (
        consts_q.L_hat * math.sqrt(2.0 * (3.0 * consts_q.theta_hat + 2.0))
    )
    sched_q = schedules.preset("cuberoot_decay", gamma=gamma_q, beta=1.0)
    if not schedules.validate(sched_q, consts_q, epochs, quad.n).passed:
        return False, "quadratic schedule validity failed"
    worst = np.inf
    for result in _audited_runs(quad, consts_q, sched_q, seeds, epochs):
        for entry in optimizer.audit_run(quad, consts_q, result):
            if not entry.applicable:
                return False, f"quadratic audit skipped: {entry.reason}"
            worst = min(worst, entry.slack / max(1.0, abs(entry.rhs)))
            if not entry.ok:
                return False, f"quadratic {entry.check} violated at epoch {entry.epoch}"
    details.append(f"quadratic min slack {worst:.2e}")

    ds = datasets.synthetic_classification(1000, 50, seed=22)
    logi = LogisticNonconvex(ds, lam=0.01)
    g = rng.stream(105, rng.DOMAIN_PROBE)
    probes = [np.zeros(logi.d)] + [0.5 * g.standard_normal(logi.d) for _ in range(8)]
    consts_l = estimate_constants(logi, probes)
    gamma_l = 1.0 / (
        consts_l.L_hat * math.sqrt(2.0 * (3.0 * consts_l.theta_hat + 2.0))
    )
    sched_l = schedules.preset("cuberoot_decay", gamma=gamma_l, beta=1.0)
    runs = _audited_runs(logi, consts_l, sched_l, seeds, epochs)
    visited = [w for r in runs for w in _epoch_start_points(r)]
    consts_l = widen_sigma_floor(consts_l, logi, visited)
    if not schedules.validate(sched_l, consts_l, epochs, logi.n).passed:
        return False, "logistic schedule validity failed"
    worst = np.inf
    for result in runs:
        for entry in optimizer.audit_run(logi, consts_l, result):
            if not entry.applicable:
                return False, f"logistic audit skipped: {entry.reason}"
            worst = min(worst, entry.slack / max(1.0, abs(entry.rhs)))
            if not entry.ok:
                return False, f"logistic {entry.check} violated at epoch {entry.epoch}"
    details.append(f"logistic min slack {worst:.2e}")
    return True, "; ".join(details)


# ---------------------------------------------------------------------------
# 7. reshuffling expectation bounds
# ---------------------------------------------------------------------------


def check_rr_expectation() -> tuple:
    quad = QuadraticSC.random(6, 3, seed=31)
    consts = estimate_constants(quad, [])
    eta = 0.9 * schedules.GOLDEN_STEP / consts.L_hat
    g = rng.stream(106, rng.DOMAIN_PROBE)
    worst_dev = worst_dist = np.inf
    for _ in range(20):
        w = quad.w_star + 2.0 * g.standard_normal(quad.d)
        rep = optimizer.audit_rr_expectation(quad, consts, w, eta)
        assert rep["mode"] == "exhaustive" and rep["count"] == 720
        for key, worst_name in (("deviation_rr_mean", "dev"), ("distance_recursion_rr", "dist")):
            ent = rep[key]
            if "skipped" in ent:
                return False, f"{key} unexpectedly skipped"
            rel = (ent["rhs"] - ent["mean"]) / max(1.0, abs(ent["rhs"]))
            if rel < -1e-9:
                return False, f"{key} violated: slack {rel:.2e}"
            if worst_name == "dev":
                worst_dev = min(worst_dev, rel)
            else:
                worst_dist = min(worst_dist, rel)

    ds = datasets.synthetic_classification(20, 10, seed=32)
    logi = LogisticNonconvex(ds, lam=0.01)
    points = [0.8 * g.standard_normal(logi.d) for _ in range(2)]
    probes = [np.zeros(logi.d)] + points
    consts_l = estimate_constants(logi, probes)
    eta_l = 0.9 / (math.sqrt(3.0) * consts_l.L_hat)
    for w in points:
        rep = optimizer.audit_rr_expectation(logi, consts_l, w, eta_l, num_perms=1000, seed=33)
        ent = rep["deviation_rr_mean"]
        if not ent["ok"]:
            return False, (
                f"sampled deviation bound violated: mean {ent['mean']:.3e} "
                f"> rhs {ent['rhs']:.3e} + 3se {3 * ent['se']:.3e}"
            )
    return True, (
        f"exhaustive 720 perms x 20 points: min slack dev {worst_dev:.2e}, "
        f"dist {worst_dist:.2e}; sampled logistic bound holds"
    )


# ---------------------------------------------------------------------------
# 8. strongly convex rate
# ---------------------------------------------------------------------------


def check_scvx_rate() -> tuple:
    quad = QuadraticSC.random(100, 10, seed=41)
    consts = estimate_constants(quad, [])
    if consts.kappa > 2.0:
        return False, f"instance condition number {consts.kappa:.2f} > 2"
    sched = schedules.preset("scvx_decay", consts)
    T = 2000
    gaps = np.zeros(T)
    for seed in range(10):
        cfg = optimizer.OptimizerConfig(
            epochs=T,
            schedule=sched,
            strategy=shuffling.ShuffleStrategy(shuffling.RANDOM_RESHUFFLE, seed=seed),
            record_weights=False,
        )
        result = optimizer.run(quad, cfg, seed)
        gaps += result.series("f_val") - quad.f_star
    gaps /= 10.0
    fit = analysis.fit_loglog_slope(np.arange(1, T + 1), gaps, window=(T // 2, T))
    return fit.slope <= -1.6, f"log-log slope {fit.slope:.3f} on [{T//2},{T}] (need <= -1.6)"


# ---------------------------------------------------------------------------
# 9. reshuffling beats the fixed order in the convex case
# ---------------------------------------------------------------------------


def check_rr_vs_incremental() -> tuple:
    quad = QuadraticSC.random(100, 10, seed=41)
    consts = estimate_constants(quad, [])
    sched = schedules.preset("scvx_decay_rr_convex", consts, n=quad.n)
    T = 200
    final_rr = []
    for seed in range(10):
        cfg = optimizer.OptimizerConfig(
            epochs=T,
            schedule=sched,
            strategy=shuffling.ShuffleStrategy(shuffling.RANDOM_RESHUFFLE, seed=seed),
            record_weights=False,
        )
        final_rr.append(optimizer.run(quad, cfg, seed).traces[-1].f_val - quad.f_star)
    cfg_ig = optimizer.OptimizerConfig(
        epochs=T,
        schedule=sched,
        strategy=shuffling.ShuffleStrategy(shuffling.INCREMENTAL),
        record_weights=False,
    )
    gap_ig = optimizer.run(quad, cfg_ig, 0).traces[-1].f_val - quad.f_star
    gap_rr = float(np.mean(final_rr))
    return gap_rr <= gap_ig, f"mean final gap rr {gap_rr:.3e} vs incremental {gap_ig:.3e}"


# ---------------------------------------------------------------------------
# 10. decay-exponent ordering on the logistic problem
# ---------------------------------------------------------------------------


def _ordering_config(dataset_path=None):
    # With a real corpus: seeded 5000-row subsample plus its companion test
    # file.  Synthetic fallback: 6250 rows so the 20% holdout leaves 5000.
    problem = {
        "kind": "logistic",
        "lambda": 0.01,
        "synthetic": {"n": 6250, "d": 50, "seed": 51},
        "test_fraction": 0.2,
        "split_seed": 51,
    }
    if dataset_path:
        problem["dataset"] = dataset_path
        problem["subsample"] = 5000
        problem["subsample_seed"] = 51
    return {
        "problem": problem,
        "strategies": ["rr"],
        "schedules": [
            {"variant": "poly", "alpha": [1 / 3, 0.5, 1.0], "gamma_over_n": [0.01], "beta": 0.0}
        ],
        "epochs": 20,
        "seeds": list(range(10)),
        "figures": False,
    }


def _find_corpus(data_dir):
    if not data_dir:
        return None
    for name in ("w8a", "w8a.txt", "w8a.gz"):
        if (Path(data_dir) / name).exists():
            return name
    return None


def check_schedule_ordering(out_root: Path, data_dir=None, variant="synthetic") -> tuple:
    dataset = None
    if variant == "dataset":
        dataset = _find_corpus(data_dir)
        if dataset is None:
            raise _Skip("classification corpus not present under the data directory")
    cfg = _ordering_config(dataset)
    out = out_root / f"schedule_ordering_{variant}"
    harness.run_experiment(cfg, out_dir=out, data_dir=data_dir)
    final = _final_losses_by_alpha(out / "aggregates.csv", epoch=cfg["epochs"])
    best = min(final, key=final.get)
    detail = f"{variant}; final mean loss by alpha: " + ", ".join(
        f"{a:g}: {v:.5f}" for a, v in sorted(final.items())
    )
    return math.isclose(best, 1 / 3, rel_tol=1e-9), detail


def _final_losses_by_alpha(agg_csv: Path, epoch: int) -> dict:
    import csv as _csv

    out = {}
    with open(agg_csv, newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            if int(row["epoch"]) == epoch:
                out[float(row["alpha"])] = float(row["train_loss_mean"])
    return out


# ---------------------------------------------------------------------------
# 11. slope-fitter calibration
# ---------------------------------------------------------------------------


def check_slope_calibration() -> tuple:
    ts = np.arange(1, 201, dtype=float)
    worst = 0.0
    for p in (-2.0, -1.0, -2.0 / 3.0, -0.5):
        fit = analysis.fit_loglog_slope(ts, 1.7 * ts**p, window=(20, 200))
        worst = max(worst, abs(fit.slope - p))
    return worst <= 1e-6, f"max |slope error| {worst:.2e} (tol 1e-6)"


# ---------------------------------------------------------------------------
# 12. byte-level reproducibility
# ---------------------------------------------------------------------------


def _strip_wall_ms(path: Path) -> str:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    drop = header.index("wall_ms")
    kept = []
    for line in lines:
        cols = line.split(",")
        del cols[drop]
        kept.append(",".join(cols))
    return "\n".join(kept)


def check_reproducibility(out_root: Path) -> tuple:
    cfg = {
        "problem": {"kind": "quadratic", "n": 20, "d": 4, "seed": 61},
        "strategies": ["rr", "ig"],
        "schedules": [
            {"variant": "poly", "alpha": [1 / 3], "gamma_over_n": [0.01], "beta": 0.0}
        ],
        "epochs": 5,
        "seeds": [0, 1, 2],
        "figures": False,
    }
    a, b = out_root / "repro_a", out_root / "repro_b"
    harness.run_experiment(cfg, out_dir=a)
    harness.run_experiment(cfg, out_dir=b)
    same = _strip_wall_ms(a / "runs.csv") == _strip_wall_ms(b / "runs.csv")
    same_agg = (a / "aggregates.csv").read_bytes() == (b / "aggregates.csv").read_bytes()
    return same and same_agg, (
        "per-run CSVs byte-identical modulo wall_ms; aggregates byte-identical"
        if same and same_agg
        else "outputs differ between identical configs"
    )


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def run_all(out_root=None, data_dir=None, echo=print) -> list:
    out_root = Path(out_root or os.environ.get("SHUFFLEGRAD_OUT", "out")) / "acceptance"
    out_root.mkdir(parents=True, exist_ok=True)
    data_dir = data_dir or os.environ.get("SHUFFLEGRAD_DATA")
    checks = [
        ("gradient correctness", 5, check_gradients),
        ("without-replacement identity", 5, check_subset_identity),
        ("geometric recursion domination", 30, check_geometric_domination),
        ("averaged recursion domination", 30, check_averaged_domination),
        ("elementary inequalities", 5, check_elementary),
        ("per-epoch audits", 60, check_epoch_audits),
        ("reshuffling expectation bounds", 60, check_rr_expectation),
        ("strongly convex rate", 60, check_scvx_rate),
        ("reshuffling vs incremental", 60, check_rr_vs_incremental),
        (
            "schedule-exponent ordering",
            120,
            lambda: check_schedule_ordering(out_root, data_dir),
        ),
        (
            "schedule-exponent ordering (dataset)",
            120,
            lambda: check_schedule_ordering(out_root, data_dir, variant="dataset"),
        ),
        ("slope-fitter calibration", 1, check_slope_calibration),
        ("reproducibility", 30, lambda: check_reproducibility(out_root)),
    ]
    results = []
    for name, budget, fn in checks:
        res = _timed(name, budget, fn)
        echo(res.line())
        results.append(res)
    n_pass = sum(r.passed and not r.skipped for r in results)
    n_fail = sum(not r.passed for r in results)
    n_skip = sum(r.skipped for r in results)
    echo(f"{n_pass} passed, {n_fail} failed, {n_skip} skipped")
    return results
