"""Experiment runner: expands a JSON config into a strategy x schedule x
seed grid, executes runs (optionally in parallel), and writes per-run CSV,
aggregate CSV and a JSON manifest.

Outputs are byte-stable for a fixed config except the wall_ms column, which
is excluded from the determinism contract.  Divergent cells are recorded in
the manifest and the grid continues.
"""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datasets, optimizer, rng, schedules, shuffling
from .errors import ConfigError, DivergenceError
from .problems import (
    LogisticNonconvex,
    QuadraticSC,
    estimate_constants,
    reference_minimum,
)

RUN_COLUMNS = [
    "run_id",
    "strategy",
    "alpha",
    "gamma_over_n",
    "seed",
    "epoch",
    "eta_t",
    "train_loss",
    "grad_norm_sq",
    "test_accuracy",
    "dist_sq",
    "wall_ms",
]

AGG_COLUMNS = [
    "strategy",
    "alpha",
    "gamma_over_n",
    "epoch",
    "n_seeds",
    "train_loss_mean",
    "train_loss_std",
    "grad_norm_sq_mean",
    "grad_norm_sq_std",
    "test_accuracy_mean",
    "test_accuracy_std",
    "dist_sq_mean",
    "dist_sq_std",
]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class Cell:
    """One grid cell: a strategy name and a schedule (with display params)."""

    strategy: str
    schedule: schedules.Schedule
    alpha: float
    gamma_over_n: float

    def run_id(self, seed: int) -> str:
        return (
            f"{self.strategy}-a{self.alpha:g}-g{self.gamma_over_n:g}-s{seed}"
        )


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    for key in ("problem", "schedules", "epochs", "seeds"):
        if key not in cfg:
            raise ConfigError(f"config is missing {key!r}")
    if int(cfg["epochs"]) < 1:
        raise ConfigError("epochs must be >= 1")
    seeds = list(cfg["seeds"])
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be non-empty and distinct")
    if not cfg.get("strategies", ["rr"]):
        raise ConfigError("strategies list is empty")
    if not cfg["schedules"]:
        raise ConfigError("schedules list is empty")


def _read_text(path: Path) -> str:
    if path.suffix == ".gz":
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return fh.read()
    return path.read_text(encoding="utf-8")


def build_problem(pcfg: dict, data_dir: str | None = None):
    """Instantiate the configured problem.

    Returns (problem, test dataset or None, description dict).  Logistic
    problems load a LIBSVM file when `dataset` resolves (transparently
    gunzipping, preferring a sibling `<name>.t` companion test file, else a
    seeded holdout split) and otherwise fall back to the synthetic
    generator.
    """
    kind = pcfg.get("kind", "logistic")
    if kind == "quadratic":
        prob = QuadraticSC.random(
            n=int(pcfg.get("n", 100)),
            d=int(pcfg.get("d", 10)),
            seed=int(pcfg.get("seed", 0)),
            eig_lo=float(pcfg.get("eig_lo", 0.31)),
            eig_hi=float(pcfg.get("eig_hi", 0.6)),
            center_scale=float(pcfg.get("center_scale", 1.0)),
        )
        return prob, None, {"kind": "quadratic", "n": prob.n, "d": prob.d}
    if kind != "logistic":
        raise ConfigError(f"unknown problem kind {kind!r}")

    lam = float(pcfg.get("lambda", 0.01))
    source = None
    train = test = None
    ds_path = pcfg.get("dataset")
    if ds_path:
        path = Path(ds_path)
        if not path.exists() and data_dir:
            path = Path(data_dir) / ds_path
        for candidate in (path, path.with_suffix(path.suffix + ".gz")):
            if candidate.exists():
                train = datasets.parse_libsvm(_read_text(candidate))
                source = str(candidate)
                for companion in (
                    candidate.with_suffix(".t"),
                    Path(str(candidate) + ".t"),
                ):
                    if companion.exists():
                        test = datasets.parse_libsvm(_read_text(companion))
                        break
                break
    if train is None:
        syn = pcfg.get("synthetic", {})
        train = datasets.synthetic_classification(
            n=int(syn.get("n", 1000)),
            d=int(syn.get("d", 50)),
            seed=int(syn.get("seed", 0)),
        )
        source = "synthetic"
    if pcfg.get("subsample"):
        train = datasets.subsample(
            train, int(pcfg["subsample"]), int(pcfg.get("subsample_seed", 0))
        )
    if test is None and pcfg.get("test_fraction", 0.2):
        train, test = datasets.train_test_split(
            train, float(pcfg.get("test_fraction", 0.2)), int(pcfg.get("split_seed", 0))
        )
    if pcfg.get("scale", True):
        train, params = datasets.minmax_scale(train)
        if test is not None:
            if test.d < train.d:
                test = datasets.Dataset(rows=test.rows, labels=test.labels, d=train.d)
            elif test.d > train.d:
                params = datasets.ScalingParams(
                    lo=np.concatenate([params.lo, np.zeros(test.d - train.d)]),
                    hi=np.concatenate([params.hi, np.zeros(test.d - train.d)]),
                )
            test, _ = datasets.minmax_scale(test, params)
    if test is not None and test.d != train.d:
        test = datasets.Dataset(rows=test.rows, labels=test.labels, d=max(test.d, train.d))
    prob = LogisticNonconvex(train, lam=lam)
    desc = {"kind": "logistic", "n": prob.n, "d": prob.d, "lambda": lam, "source": source}
    return prob, test, desc


def expand_cells(cfg: dict, n: int) -> list:
    """Cross the strategy list with the schedule grid."""
    cells = []
    for strat in cfg.get("strategies", ["rr"]):
        if strat not in (
            shuffling.RANDOM_RESHUFFLE,
            shuffling.SHUFFLE_ONCE,
            shuffling.INCREMENTAL,
        ):
            raise ConfigError(f"unknown strategy {strat!r}")
        for entry in cfg["schedules"]:
            for sched, alpha, g_over_n in _expand_schedule(entry, n, cfg):
                cells.append(Cell(strat, sched, alpha, g_over_n))
    return cells


def _expand_schedule(entry: dict, n: int, cfg: dict):
    if "preset" in entry:
        params = {k: v for k, v in entry.items() if k != "preset"}
        sched = schedules.preset(
            entry["preset"], None, T=int(cfg["epochs"]), n=n, **params
        )
        if sched.variant == schedules.POLY:
            yield sched, sched.alpha, sched.gamma / n
        else:
            yield sched, 0.0, sched.eta / n
        return
    variant = entry.get("variant")
    if variant == "constant":
        etas = entry.get("eta_over_n")
        for e in np.atleast_1d(etas).tolist():
            if e is None:
                raise ConfigError("constant schedule needs eta_over_n")
            yield schedules.constant(float(e) * n), 0.0, float(e)
    elif variant == "poly":
        alphas = np.atleast_1d(entry.get("alpha", 1.0 / 3.0)).tolist()
        gammas = np.atleast_1d(entry.get("gamma_over_n")).tolist()
        beta = float(entry.get("beta", 0.0))
        for a in alphas:
            for g in gammas:
                if g is None:
                    raise ConfigError("poly schedule needs gamma_over_n")
                yield schedules.poly(float(g) * n, beta, float(a)), float(a), float(g)
    else:
        raise ConfigError(f"unknown schedule variant {variant!r}")


def _initial_point(cfg: dict, d: int) -> np.ndarray:
    init = cfg.get("init", {"kind": "zeros"})
    if isinstance(init, str):
        init = {"kind": init}
    if init.get("kind", "zeros") == "zeros":
        return np.zeros(d)
    if init["kind"] == "randn":
        g = rng.stream(int(init.get("seed", 0)), rng.DOMAIN_INIT)
        return float(init.get("scale", 1.0)) * g.standard_normal(d)
    raise ConfigError(f"unknown init rule {init!r}")


def _execute_one(args):
    problem, test_ds, cell, seed, epochs, w0 = args
    strategy = shuffling.ShuffleStrategy(cell.strategy, seed=seed)
    config = optimizer.OptimizerConfig(
        epochs=epochs, schedule=cell.schedule, strategy=strategy, record_weights=False
    )
    extra = None
    if test_ds is not None:
        extra = lambda w: {"test_accuracy": problem.accuracy(w, test_ds)}
    try:
        result = optimizer.run(problem, config, seed, w0=w0, extra_metrics=extra)
        return cell, seed, result, None
    except DivergenceError as err:
        return cell, seed, err.partial, err.epoch


def _rows_for_run(cell: Cell, seed: int, result) -> list:
    rows = []
    for tr in result.traces:
        rows.append(
            {
                "run_id": cell.run_id(seed),
                "strategy": cell.strategy,
                "alpha": cell.alpha,
                "gamma_over_n": cell.gamma_over_n,
                "seed": seed,
                "epoch": tr.t,
                "eta_t": tr.eta_t,
                "train_loss": tr.f_val,
                "grad_norm_sq": tr.grad_norm_sq,
                "test_accuracy": tr.extras.get("test_accuracy"),
                "dist_sq": tr.dist_sq,
                "wall_ms": tr.wall_ms,
            }
        )
    return rows


def aggregate_rows(rows: list) -> list:
    """Group per-run rows by (strategy, alpha, gamma_over_n, epoch) and emit
    mean and sample standard deviation over seeds.

    Only epochs reached by every seed of a group are aggregated, so each
    aggregate row covers all of the group's configured seeds.
    """
    by_group: dict = {}
    for r in rows:
        key = (r["strategy"], r["alpha"], r["gamma_over_n"])
        by_group.setdefault(key, {}).setdefault(r["seed"], {})[r["epoch"]] = r
    out = []
    for key in sorted(by_group):
        seeds = by_group[key]
        common = min(max(per.keys()) for per in seeds.values())
        for epoch in range(1, common + 1):
            rec = {
                "strategy": key[0],
                "alpha": key[1],
                "gamma_over_n": key[2],
                "epoch": epoch,
                "n_seeds": len(seeds),
            }
            for metric in ("train_loss", "grad_norm_sq", "test_accuracy", "dist_sq"):
                vals = [seeds[s][epoch][metric] for s in sorted(seeds)]
                if any(v is None for v in vals):
                    rec[f"{metric}_mean"] = None
                    rec[f"{metric}_std"] = None
                else:
                    arr = np.array(vals, dtype=float)
                    rec[f"{metric}_mean"] = float(arr.mean())
                    rec[f"{metric}_std"] = (
                        float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
                    )
            out.append(rec)
    return out


def _write_csv(path: Path, columns: list, rows: list) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def run_experiment(cfg: dict, out_dir=None, workers: int = 1, data_dir=None) -> dict:
    """Execute the config's grid and write runs.csv / aggregates.csv /
    manifest.json (and quick-look figures unless disabled) into out_dir."""
    validate_config(cfg)
    out = Path(out_dir or cfg.get("out_dir") or os.environ.get("SHUFFLEGRAD_OUT", "out"))
    out.mkdir(parents=True, exist_ok=True)
    data_dir = data_dir or os.environ.get("SHUFFLEGRAD_DATA")

    problem, test_ds, desc = build_problem(cfg["problem"], data_dir)
    epochs = int(cfg["epochs"])
    seeds = [int(s) for s in cfg["seeds"]]
    cells = expand_cells(cfg, problem.n)
    w0 = _initial_point(cfg, problem.d)

    probe_g = rng.stream(0, rng.DOMAIN_PROBE, counter=9)
    probes = [w0] + [w0 + 0.5 * probe_g.standard_normal(problem.d) for _ in range(8)]
    consts = estimate_constants(problem, probes)

    tasks = []
    for cell in cells:
        cell_seeds = seeds[:1] if cell.strategy == shuffling.INCREMENTAL else seeds
        for seed in cell_seeds:
            tasks.append((problem, test_ds, cell, seed, epochs, w0))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_execute_one, tasks))
    else:
        outcomes = [_execute_one(t) for t in tasks]

    rows, diverged, initials = [], [], {}
    for cell, seed, result, died_at in outcomes:
        if result is not None:
            rows.extend(_rows_for_run(cell, seed, result))
            initials[cell.run_id(seed)] = {
                "train_loss": result.initial_f,
                "grad_norm_sq": result.initial_grad_norm_sq,
                "dist_sq": result.initial_dist_sq,
                **result.initial_extras,
            }
        if died_at is not None:
            diverged.append({"run_id": cell.run_id(seed), "diverged_at": died_at})

    rows.sort(key=lambda r: (r["strategy"], r["alpha"], r["gamma_over_n"], r["seed"], r["epoch"]))
    agg = aggregate_rows(rows)
    _write_csv(out / "runs.csv", RUN_COLUMNS, rows)
    _write_csv(out / "aggregates.csv", AGG_COLUMNS, agg)

    manifest = {
        "config": cfg,
        "config_sha256": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()
        ).hexdigest(),
        "problem": desc,
        "constants": {
            "L_hat": consts.L_hat,
            "theta_hat": consts.theta_hat,
            "sigma_sq_hat": consts.sigma_sq_hat,
            "mu": consts.mu,
            "kappa": consts.kappa,
            "sigma_star_sq": consts.sigma_star_sq,
            "tau": consts.tau,
            "estimated": consts.estimated,
        },
        "schedules": [
            {
                **cell.schedule.to_dict(),
                "strategy": cell.strategy,
                "alpha": cell.alpha,
                "gamma_over_n": cell.gamma_over_n,
                "validity": [
                    {
                        "name": c.name,
                        "requirement": c.requirement,
                        "lhs": c.lhs,
                        "rhs": c.rhs,
                        "passed": c.passed,
                    }
                    for c in schedules.validate(cell.schedule, consts, epochs, problem.n).checks
                ],
            }
            for cell in cells
        ],
        "initial_metrics": initials,
        "diverged": diverged,
    }
    if cfg.get("reference_minimum"):
        f_ref, _ = reference_minimum(problem)
        manifest["f_star_ref"] = f_ref
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    written = [str(out / "runs.csv"), str(out / "aggregates.csv"), str(out / "manifest.json")]
    if cfg.get("figures", True):
        from . import figures

        written += figures.render_aggregates(out / "aggregates.csv", out)
    return {"rows": len(rows), "aggregates": len(agg), "files": written, "diverged": diverged}


def compare_strategies(cfg: dict, out_dir=None, workers: int = 1, data_dir=None) -> dict:
    """Strategy comparison: every strategy shares the same initial point,
    the deterministic incremental order gets exactly one run."""
    cfg = dict(cfg)
    cfg.setdefault("strategies", ["rr", "so", "ig"])
    report = run_experiment(cfg, out_dir=out_dir, workers=workers, data_dir=data_dir)
    return report
