"""Abstract rate machinery: closed-form bounds for two recursion families,
equality-recursion verifiers, elementary-inequality property checks, rate
certificate curves for overlays, and log-log slope fitting.

The two recursions:

- geometric:  Y_{t+1} <= (1 - rho eta_t) Y_t + D eta_t^(q+1), with either a
  constant step eta in (0, 1/rho) or the harmonic step q / (rho (t + beta)).
- averaged:   Y_{t+1} <= Y_t - rho eta_t^m Z_t + eta_t^q D with polynomial
  step gamma / (t + beta)^alpha and a logarithmic cap on Y_t; the closed
  bound controls the running average of Z.

Equality trajectories (running each recursion with equality) dominate every
admissible sequence, so they are the extremal oracles the verifiers use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng

# ---------------------------------------------------------------------------
# Geometric recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricRecursion:
    """Parameters of the contraction recursion.

    step is "constant" (uses eta) or "harmonic" (eta_t = q/(rho (t+beta))).
    The harmonic closed bound needs beta >= max(q - 1, 1): the log estimate
    of the decaying sum fails on beta < 1.
    """

    rho: float
    D: float
    q: int
    step: str
    eta: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.D < 0:
            raise ValueError("D must be nonnegative")
        if self.q < 1 or int(self.q) != self.q:
            raise ValueError("q must be a positive integer")
        if self.step == "constant":
            if not 0 < self.eta < 1.0 / self.rho:
                raise ValueError("constant step needs 0 < eta < 1/rho")
        elif self.step == "harmonic":
            if self.beta < self.q - 1:
                raise ValueError("harmonic step needs beta >= q - 1")
            if self.beta < 1.0:
                raise ValueError("harmonic closed bound needs beta >= 1")
        else:
            raise ValueError(f"unknown step rule {self.step!r}")

    def eta_at(self, t) -> float:
        if self.step == "constant":
            return self.eta
        return self.q / (self.rho * (t + self.beta))


def _falling_product(x, q: int):
    out = x - 0.0
    for j in range(1, q):
        out = out * (x - j)
    return out


def geometric_recursion_bound(p: GeometricRecursion, y1: float, t, form: str = "default"):
    """Closed-form bound on Y_{t+1} after t steps of the recursion.

    Harmonic step: prod(beta..beta-q+1)/prod(t+beta..t+beta-q+1) * Y1
    + q^(q+1) D log(t+beta) / (rho^(q+1) prod(...)).  Constant step: the
    exponential form Y1 exp(-rho eta t) + D eta^q / rho by default, or the
    tighter geometric form with form="geometric".
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ValueError("t must be >= 1")
    if p.step == "harmonic":
        num = _falling_product(p.beta, p.q)
        den = _falling_product(t + p.beta, p.q)
        return num / den * y1 + (
            p.q ** (p.q + 1) * p.D * np.log(t + p.beta)
        ) / (p.rho ** (p.q + 1) * den)
    contraction = 1.0 - p.rho * p.eta
    if form == "geometric":
        decay = contraction**t
        return y1 * decay + p.D * p.eta**p.q * (1.0 - decay) / p.rho
    return y1 * np.exp(-p.rho * p.eta * t) + p.D * p.eta**p.q / p.rho


def iterate_geometric_equality(p: GeometricRecursion, y1: float, T: int) -> np.ndarray:
    """Worst-case trajectory: the recursion run with equality; returns
    Y_2 .. Y_{T+1}."""
    out = np.empty(T)
    y = y1
    for t in range(1, T + 1):
        eta = p.eta_at(t)
        y = (1.0 - p.rho * eta) * y + p.D * eta ** (p.q + 1)
        out[t - 1] = y
    return out


def verify_geometric_recursion(
    p: GeometricRecursion,
    y1: float,
    T: int,
    sequence=None,
    shrink_runs: int = 0,
    seed: int = 0,
) -> dict:
    """Check that trajectories stay below the closed bound up to horizon T.

    Without a sequence the equality trajectory is used; a supplied sequence
    is first tested for recursion admissibility and reported inapplicable if
    it violates it.  shrink_runs adds random admissible sequences (RHS
    multiplied by uniform factors in [0, 1]).  Returns a report dict with
    the minimum relative slack observed.
    """
    ts = np.arange(1, T + 1, dtype=float)
    bound = geometric_recursion_bound(
        p, y1, ts, form="geometric" if p.step == "constant" else "default"
    )

    def min_rel_slack(traj):
        return float(np.min((bound - traj) / np.maximum(1.0, np.abs(bound))))

    if sequence is not None:
        seq = np.asarray(sequence, dtype=float)
        if len(seq) != T + 1:
            raise ValueError("sequence must provide Y_1 .. Y_{T+1}")
        etas = np.array([p.eta_at(t) for t in range(1, T + 1)])
        rhs = (1.0 - p.rho * etas) * seq[:-1] + p.D * etas ** (p.q + 1)
        bad = np.nonzero(seq[1:] > rhs * (1 + 1e-12) + 1e-300)[0]
        if bad.size:
            return {
                "applicable": False,
                "reason": "sequence violates the recursion",
                "first_violation": int(bad[0] + 1),
            }
        return {"applicable": True, "min_rel_slack": min_rel_slack(seq[1:])}

    worst = iterate_geometric_equality(p, y1, T)
    report = {"applicable": True, "min_rel_slack": min_rel_slack(worst)}
    if p.step == "constant" and p.D == 0.0:
        exact = y1 * (1.0 - p.rho * p.eta) ** ts
        report["geometric_identity_gap"] = float(
            np.max(np.abs(worst - exact) / np.maximum(1e-300, exact))
        )
    if shrink_runs:
        g = rng.stream(seed, rng.DOMAIN_PROBE)
        worst_shrunk = np.inf
        for _ in range(shrink_runs):
            y = y1
            traj = np.empty(T)
            u = g.uniform(0.0, 1.0, size=T)
            for t in range(1, T + 1):
                eta = p.eta_at(t)
                y = u[t - 1] * ((1.0 - p.rho * eta) * y + p.D * eta ** (p.q + 1))
                traj[t - 1] = y
            worst_shrunk = min(worst_shrunk, min_rel_slack(traj))
        report["min_rel_slack_shrunk"] = float(worst_shrunk)
    return report


# ---------------------------------------------------------------------------
# Averaged recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AveragedRecursion:
    """Parameters of the averaged recursion; m and q are positive reals with
    q > m, the step is gamma/(t+beta)^alpha, and Y_t <= C + H log(t+theta)."""

    rho: float
    D: float
    m: float
    q: float
    gamma: float
    beta: float
    alpha: float
    C: float
    H: float = 0.0
    theta: float | None = None

    def __post_init__(self):
        if min(self.rho, self.gamma, self.beta, self.alpha) <= 0:
            raise ValueError("rho, gamma, beta, alpha must be positive")
        if not 0 < self.m < self.q:
            raise ValueError("need 0 < m < q")
        if self.alpha * self.m > 0.5 + 1e-15:
            raise ValueError("need alpha * m <= 1/2")
        if self.D < 0 or self.C < 0 or self.H < 0:
            raise ValueError("D, C, H must be nonnegative")
        if self.theta is None:
            object.__setattr__(self, "theta", 1.0 + self.beta)
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        am = self.alpha * self.m
        gate = (1.0 - am) * math.exp(am / (1.0 - am))
        if not 1.0 + self.theta - self.beta > gate:
            raise ValueError(
                f"cap-offset condition fails: 1 + theta - beta = "
                f"{1 + self.theta - self.beta:.6g} <= {gate:.6g}"
            )
        aqm = self.alpha * (self.q - self.m)
        if aqm > 1.0 + 1e-12:
            raise ValueError(
                "alpha (q - m) > 1: the decaying-sum term of the closed bound "
                "is not valid in this regime"
            )

    def eta_at(self, t):
        return self.gamma / (t + self.beta) ** self.alpha

    def cap(self, t):
        return self.C + self.H * np.log(t + self.theta)


def averaged_recursion_bound(p: AveragedRecursion, y1: float, T: int) -> dict:
    """Closed bound on (1/T) sum_{t<=T} Z_t, split into its four terms."""
    if T < 1:
        raise ValueError("T must be >= 1")
    am = p.alpha * p.m
    aqm = p.alpha * (p.q - p.m)
    if abs(aqm - 1.0) <= 1e-12:
        a_T = math.log(T + p.beta) - math.log(p.beta)
    else:
        a_T = (T + p.beta) ** (1.0 - aqm) / (1.0 - aqm)
    gm = p.gamma**p.m
    terms = {
        "start": (1.0 + p.beta) ** am * y1 / (p.rho * gm * T),
        "cap": p.C * (T - 1.0 + p.beta) ** am / (2.0 * p.rho * am * gm * T),
        "log_cap": p.H
        * (T - 1.0 + p.beta) ** am
        * math.log(T + p.theta)
        / (2.0 * p.rho * am * gm * T),
        "drift": p.D * p.gamma ** (p.q - p.m) * a_T / (p.rho * T),
    }
    terms["total"] = sum(terms.values())
    return terms


def iterate_averaged_equality(
    p: AveragedRecursion, y1: float, T: int, policy: str = "crash_end", seed: int = 0
):
    """Adversarial equality trajectory for the averaged recursion.

    Z_t is chosen inside its admissible range (keeping Y nonnegative, under
    the cap, and satisfying the recursion with equality):

    - "max_z":     largest Z every step (Y crashes to 0 each time)
    - "crash_end": smallest admissible Z until the last step, then crash
    - "random":    uniform draw inside the range each step

    Returns (mean of Z_1..Z_T, trajectory max cap violation).
    """
    g = rng.stream(seed, rng.DOMAIN_PROBE, counter=1)
    y = min(y1, float(p.cap(1)))
    z_sum = 0.0
    worst_cap = -np.inf
    for t in range(1, T + 1):
        eta = p.eta_at(t)
        drive = eta**p.q * p.D
        denom = p.rho * eta**p.m
        z_max = (y + drive) / denom
        z_min = max(0.0, (y + drive - float(p.cap(t + 1))) / denom)
        if policy == "max_z":
            z = z_max
        elif policy == "crash_end":
            z = z_max if t == T else z_min
        elif policy == "random":
            z = z_min + (z_max - z_min) * float(g.uniform())
        else:
            raise ValueError(f"unknown policy {policy!r}")
        y = y - denom * z + drive
        worst_cap = max(worst_cap, y - float(p.cap(t + 1)))
        z_sum += z
    return z_sum / T, worst_cap


def verify_averaged_recursion(
    p: AveragedRecursion, y1: float, T: int, policies=("max_z", "crash_end", "random"), seed: int = 0
) -> dict:
    """Run adversarial equality trajectories and compare the average of Z
    against the closed bound.  Returns per-policy relative slack."""
    bound = averaged_recursion_bound(p, y1, T)["total"]
    report = {"bound": bound, "policies": {}}
    for policy in policies:
        avg_z, cap_violation = iterate_averaged_equality(p, y1, T, policy, seed)
        report["policies"][policy] = {
            "avg_z": avg_z,
            "rel_slack": (bound - avg_z) / max(1.0, abs(bound)),
            "cap_violation": cap_violation,
        }
    report["min_rel_slack"] = min(
        v["rel_slack"] for v in report["policies"].values()
    )
    return report


# ---------------------------------------------------------------------------
# Elementary inequalities
# ---------------------------------------------------------------------------


def power_increment_holds(s, nu) -> np.ndarray:
    """(s+1)^nu - s^nu <= 1/(2 s^(1-nu)) for 0 <= nu <= 1/2, s > 0."""
    s = np.asarray(s, dtype=float)
    nu = np.asarray(nu, dtype=float)
    lhs = (s + 1.0) ** nu - s**nu
    rhs = 0.5 / s ** (1.0 - nu)
    return lhs <= rhs * (1 + 1e-12)


def log_ratio_admissible(c: float, theta: float, beta: float) -> bool:
    return (
        c > 0
        and theta > 0
        and beta > 0
        and 1.0 + theta - beta > c * math.exp((1.0 - c) / c)
    )


def log_ratio(t, c: float, theta: float, beta: float):
    t = np.asarray(t, dtype=float)
    return np.log(t + 1.0 + theta) / (t + beta) ** c


@dataclass(frozen=True)
class StepFunction:
    """Nonnegative decreasing piecewise-constant function on [xs[0], inf)."""

    xs: np.ndarray
    levels: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.levels) - 1)
        return self.levels[pos]

    def integral(self, a: float, b: float) -> float:
        edges = np.concatenate([self.xs, [np.inf]])
        total = 0.0
        for k in range(len(self.levels)):
            lo, hi = max(a, edges[k]), min(b, edges[k + 1])
            if hi > lo:
                total += self.levels[k] * (hi - lo)
        return total


def random_step_function(g, a: float, b: float, pieces: int = 6) -> StepFunction:
    cuts = np.sort(g.uniform(a, b, size=pieces - 1))
    xs = np.concatenate([[a], cuts])
    drops = g.uniform(0.0, 1.0, size=pieces)
    levels = np.cumsum(drops[::-1])[::-1]
    return StepFunction(xs=xs, levels=levels)


def sum_integral_bracket(f, t0: int, t: int):
    """(sum_{i=t0+1}^t f(i), integral_{t0}^t f, sum_{i=t0}^{t-1} f(i))."""
    upper_pts = np.arange(t0 + 1, t + 1)
    lower_pts = np.arange(t0, t)
    return (
        float(np.sum(f(upper_pts))),
        f.integral(t0, t),
        float(np.sum(f(lower_pts))),
    )


def elementary_inequalities_report(draws: int = 10_000, seed: int = 0) -> dict:
    """Property sweep over the three support inequalities; returns violation
    counts (all zero when they hold)."""
    g = rng.stream(seed, rng.DOMAIN_PROBE, counter=2)

    s = 10.0 ** g.uniform(-3, 4, size=draws)
    nu = g.uniform(0.0, 0.5, size=draws)
    power_violations = int(np.sum(~power_increment_holds(s, nu)))

    ratio_violations = 0
    for _ in range(draws):
        c = float(g.uniform(0.05, 3.0))
        beta = float(g.uniform(0.1, 20.0))
        theta = beta - 1.0 + c * math.exp((1.0 - c) / c) + float(g.uniform(0.01, 10.0))
        if theta <= 0 or not log_ratio_admissible(c, theta, beta):
            continue
        t1 = float(g.uniform(0.0, 9_999.0))
        t2 = t1 + float(g.uniform(1e-6, 10_000.0 - t1))
        if log_ratio(t2, c, theta, beta) > log_ratio(t1, c, theta, beta) * (1 + 1e-12):
            ratio_violations += 1

    bracket_violations = 0
    for _ in range(draws):
        t0 = int(g.integers(0, 50))
        t = t0 + int(g.integers(1, 60))
        f = random_step_function(g, a=float(t0), b=float(t), pieces=int(g.integers(2, 9)))
        upper_sum, integral, lower_sum = sum_integral_bracket(f, t0, t)
        tol = 1e-9 * max(1.0, abs(integral))
        if upper_sum > integral + tol or integral > lower_sum + tol:
            bracket_violations += 1

    return {
        "power_increment": power_violations,
        "log_ratio_monotone": ratio_violations,
        "sum_integral_bracket": bracket_violations,
        "draws": draws,
    }


# ---------------------------------------------------------------------------
# Rate certificate curves
# ---------------------------------------------------------------------------

#: target kinds: "f_gap" certifies F(w_t) - F*; "avg_grad_norm_sq" certifies
#: the running average (1/T) sum_{t<=T} ||grad F||^2; "f_gap_avg" certifies
#: the gap at the step-size-weighted averaged iterate.
CURVE_TARGETS = {
    "scvx_decay_gap": "f_gap",
    "scvx_const_gap": "f_gap",
    "scvx_const_rr_gap": "f_gap",
    "scvx_const_rr_convex_gap": "f_gap",
    "scvx_decay_rr_convex_gap": "f_gap",
    "ncvx_const_avg_grad": "avg_grad_norm_sq",
    "ncvx_const_rr_avg_grad": "avg_grad_norm_sq",
    "ncvx_cuberoot_const_avg_grad": "avg_grad_norm_sq",
    "ncvx_cuberoot_const_rr_avg_grad": "avg_grad_norm_sq",
    "ncvx_poly_avg_grad": "avg_grad_norm_sq",
    "ncvx_cuberoot_decay_avg_grad": "avg_grad_norm_sq",
    "graddom_decay_gap": "f_gap",
    "graddom_decay_rr_gap": "f_gap",
    "averaged_const_gap": "f_gap_avg",
    "averaged_decay_gap": "f_gap_avg",
    "sgd_poly_avg_grad": "avg_grad_norm_sq",
    "sgd_sqrt_avg_grad": "avg_grad_norm_sq",
}


def _get(c: dict, *names):
    missing = [k for k in names if c.get(k) is None]
    if missing:
        raise ValueError(f"bound curve needs constants: {', '.join(missing)}")
    return [float(c[k]) for k in names]


def bound_curve(curve: str, t, c: dict) -> dict:
    """Evaluate a rate certificate at horizon/epoch t.

    Returns {"total", "terms", "target"}.  Decaying-step certificates are
    genuine per-epoch curves; constant-step ones treat t as the horizon the
    step was tuned for.  Values are for overlays and are never tight.
    """
    t = float(t)
    if t < 1:
        raise ValueError("t must be >= 1")
    terms: dict[str, float] = {}

    if curve == "scvx_decay_gap":
        f0, L, mu, s2, beta = _get(c, "f0_gap", "L", "mu", "sigma_star_sq", "beta")
        den = (t + beta) * (t + beta - 1.0)
        terms["start"] = beta * (beta - 1.0) / den * f0
        terms["noise"] = 216.0 * (L**2 + mu**2) * s2 * math.log(t + beta) / (mu**3 * den)
    elif curve == "scvx_const_gap":
        f0, L, mu, s2 = _get(c, "f0_gap", "L", "mu", "sigma_star_sq")
        terms["start"] = f0 / t**2
        terms["noise"] = 54.0 * (mu**2 + L**2) * s2 * math.log(t) ** 2 / (mu**3 * t**2)
    elif curve == "scvx_const_rr_gap":
        f0, L, mu, s2, n = _get(c, "f0_gap", "L", "mu", "sigma_sq", "n")
        terms["start"] = f0 / (n * t**2)
        terms["noise"] = (
            2.0 * L**2 * s2 * math.log(math.sqrt(n) * t) ** 2 / (mu**3 * n * t**2)
        )
    elif curve == "scvx_const_rr_convex_gap":
        d0, L, mu, s2, n = _get(c, "dist0_sq", "L", "mu", "sigma_star_sq", "n")
        lead = L / (2.0 * n * t**2)
        terms["start"] = lead * d0
        terms["noise"] = lead * 8.0 * L * s2 * math.log(math.sqrt(n) * t) ** 2 / (3.0 * mu**3)
    elif curve == "scvx_decay_rr_convex_gap":
        d0, L, mu, s2, n, beta = _get(
            c, "dist0_sq", "L", "mu", "sigma_star_sq", "n", "beta"
        )
        lead = 2.0 * L / (n * (t + 1.0 / n) * (t + 1.0 / n + 1.0))
        terms["start"] = lead * d0
        terms["noise"] = lead * L * s2 * math.log(t + beta) / (3.0 * mu**3)
    elif curve == "ncvx_const_avg_grad":
        f0, L, s2, eta = _get(c, "f0_gap", "L", "sigma_sq", "eta")
        terms["start"] = 4.0 * f0 / (t * eta)
        terms["noise"] = 6.0 * L**2 * s2 * eta**2
    elif curve == "ncvx_const_rr_avg_grad":
        f0, L, s2, eta, n = _get(c, "f0_gap", "L", "sigma_sq", "eta", "n")
        terms["start"] = 4.0 * f0 / (t * eta)
        terms["noise"] = 4.0 * L**2 * s2 * eta**2 / n
    elif curve == "ncvx_cuberoot_const_avg_grad":
        f0, L, s2, gamma = _get(c, "f0_gap", "L", "sigma_sq", "gamma")
        lead = t ** (-2.0 / 3.0)
        terms["start"] = lead * 4.0 * f0 / gamma
        terms["noise"] = lead * 6.0 * L**2 * s2 * gamma**2
    elif curve == "ncvx_cuberoot_const_rr_avg_grad":
        f0, L, s2, gamma, n = _get(c, "f0_gap", "L", "sigma_sq", "gamma", "n")
        lead = 4.0 / (n ** (1.0 / 3.0) * t ** (2.0 / 3.0))
        terms["start"] = lead * f0 / gamma
        terms["noise"] = lead * L**2 * s2 * gamma**2
    elif curve == "ncvx_poly_avg_grad":
        f0, L, s2, gamma, beta, alpha = _get(
            c, "f0_gap", "L", "sigma_sq", "gamma", "beta", "alpha"
        )
        n = c.get("n")
        D = L**2 * s2 / n if c.get("rr") else 1.5 * L**2 * s2
        if c.get("rr") and n is None:
            raise ValueError("bound curve needs constants: n")
        cap = f0 + D * gamma**3 / ((3.0 * alpha - 1.0) * beta ** (3.0 * alpha - 1.0))
        if abs(alpha - 0.5) <= 1e-12:
            terms["start"] = 4.0 * (1.0 + beta) ** 0.5 * f0 / (gamma * t)
            terms["cap"] = 4.0 * cap * (t - 1.0 + beta) ** 0.5 / (gamma * t)
            terms["noise"] = (
                4.0 * D * gamma**2 * (math.log(t + beta) - math.log(beta)) / t
            )
        else:
            terms["start"] = 4.0 * (1.0 + beta) ** alpha * f0 / (gamma * t)
            terms["cap"] = 2.0 * cap * (t - 1.0 + beta) ** alpha / (alpha * gamma * t)
            terms["noise"] = (
                4.0 * D * gamma**2 * (t + beta) ** (1.0 - 2.0 * alpha)
                / ((1.0 - 2.0 * alpha) * t)
            )
    elif curve == "ncvx_cuberoot_decay_avg_grad":
        f0, L, s2, gamma, beta = _get(c, "f0_gap", "L", "sigma_sq", "gamma", "beta")
        n = c.get("n")
        D = L**2 * s2 / n if c.get("rr") else 1.5 * L**2 * s2
        cap = c.get("cap_C")
        if cap is None:
            cap = f0 + D * gamma**3 / (1.0 + beta)
        terms["start"] = 4.0 * (1.0 + beta) ** (1.0 / 3.0) * f0 / (gamma * t)
        terms["noise"] = 12.0 * D * gamma**2 * (t + beta) ** (1.0 / 3.0) / t
        terms["noise_log"] = (
            6.0 * D * gamma**2 * (t - 1.0 + beta) ** (1.0 / 3.0) * math.log(t + 1.0 + beta) / t
        )
        terms["cap"] = 6.0 * cap * (t - 1.0 + beta) ** (1.0 / 3.0) / (gamma * t)
    elif curve == "graddom_decay_gap":
        f0, L, s2, tau, beta = _get(c, "f0_gap", "L", "sigma_sq", "tau", "beta")
        den = (t + beta - 1.0) * (t + beta)
        terms["start"] = beta * (beta - 1.0) * f0 / den
        terms["noise"] = 768.0 * tau**3 * L**2 * s2 * math.log(t + beta) / den
    elif curve == "graddom_decay_rr_gap":
        f0, L, s2, tau, n, beta = _get(c, "f0_gap", "L", "sigma_sq", "tau", "n", "beta")
        lead = 2.0 / (n * (t + 1.0 / n) * (t + 1.0 + 1.0 / n))
        terms["start"] = lead * f0
        terms["noise"] = lead * 265.0 * tau**3 * L**2 * s2 * math.log(t + beta)
    elif curve == "averaged_const_gap":
        d0, L, s2, gamma, n = _get(c, "dist0_sq", "L", "sigma_star_sq", "gamma", "n")
        lead = 1.0 / (n ** (1.0 / 3.0) * t ** (2.0 / 3.0))
        terms["start"] = lead * d0 / (2.0 * gamma)
        terms["noise"] = lead * gamma**2 * L * s2 / 3.0
    elif curve == "averaged_decay_gap":
        d0, L, s2, gamma, n, beta = _get(
            c, "dist0_sq", "L", "sigma_star_sq", "gamma", "n", "beta"
        )
        lead = 1.0 / (n ** (1.0 / 3.0) * t ** (2.0 / 3.0))
        terms["start"] = lead * d0 / (2.0 * gamma)
        terms["noise"] = lead * gamma**2 * L * s2 * math.log(t + beta) / 3.0
    elif curve == "sgd_poly_avg_grad":
        f0, L, s2, gamma, beta, alpha = _get(
            c, "f0_gap", "L", "sigma_sq", "gamma", "beta", "alpha"
        )
        cap = f0 + L * s2 * gamma**2 / (2.0 * (2.0 * alpha - 1.0) * beta ** (2.0 * alpha - 1.0))
        terms["start"] = 2.0 * (1.0 + beta) ** alpha * f0 / (gamma * t)
        terms["cap"] = cap * (t - 1.0 + beta) ** alpha / (alpha * gamma * t)
        terms["noise"] = L * s2 * gamma * (t + beta) ** (1.0 - alpha) / ((1.0 - alpha) * t)
    elif curve == "sgd_sqrt_avg_grad":
        f0, L, s2, gamma, beta = _get(c, "f0_gap", "L", "sigma_sq", "gamma", "beta")
        cap = f0 + L * s2 * gamma**2 / (2.0 * (1.0 + beta))
        terms["start"] = 2.0 * (1.0 + beta) ** 0.5 * f0 / (gamma * t)
        terms["cap"] = 2.0 * cap * (t - 1.0 + beta) ** 0.5 / (gamma * t)
        terms["noise_log"] = (
            L * gamma * s2 * (t - 1.0 + beta) ** 0.5 * math.log(t + 1.0 + beta) / t
        )
        terms["noise"] = 2.0 * L * gamma * s2 * (t + beta) ** 0.5 / t
    else:
        raise ValueError(f"unknown bound curve {curve!r}")

    return {"total": sum(terms.values()), "terms": terms, "target": CURVE_TARGETS[curve]}


# ---------------------------------------------------------------------------
# Empirical slope fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    window: tuple
    r_squared: float


def fit_loglog_slope(ts, values, window=None) -> SlopeFit:
    """OLS of log(value) on log(t) over the window (defaults to the last
    half).  Values must be strictly positive inside the window."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        window = (ts[len(ts) // 2], ts[-1])
    lo, hi = window
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    mask = (ts >= lo) & (ts <= hi)
    if mask.sum() < 5:
        raise ValueError("need at least 5 points in the fit window")
    if np.any(values[mask] <= 0):
        raise ValueError("nonpositive values in the fit window")
    x = np.log(ts[mask])
    y = np.log(values[mask])
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    return SlopeFit(slope=slope, intercept=intercept, window=(float(lo), float(hi)), r_squared=r2)
