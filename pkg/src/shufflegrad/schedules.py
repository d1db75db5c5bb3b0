"""Per-epoch learning-rate schedules with preset constructors and
machine-checkable validity conditions.

A schedule yields the epoch rate eta_t; the optimizer always applies the
inner step eta_t / n.  Two variants exist: a constant rate and polynomial
decay gamma / (t + beta)^alpha.  Each preset records a provenance tag and
the raw parameters its validity conditions need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .problems import ProblemConstants

CONSTANT = "constant"
POLY = "poly"

GOLDEN_STEP = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Schedule:
    variant: str
    eta: float = 0.0
    gamma: float = 0.0
    beta: float = 0.0
    alpha: float = 0.0
    provenance: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant == CONSTANT:
            if self.eta <= 0:
                raise ConfigError("constant schedule needs eta > 0")
        elif self.variant == POLY:
            if self.gamma <= 0:
                raise ConfigError("poly schedule needs gamma > 0")
            if self.beta < 0:
                raise ConfigError("poly schedule needs beta >= 0")
            if not 0 < self.alpha <= 1:
                raise ConfigError("poly schedule needs alpha in (0, 1]")
        else:
            raise ConfigError(f"unknown schedule variant {self.variant!r}")

    def describe(self) -> str:
        if self.variant == CONSTANT:
            return f"constant eta={self.eta:g}"
        return f"{self.gamma:g}/(t+{self.beta:g})^{self.alpha:g}"

    def to_dict(self) -> dict:
        out = {"variant": self.variant, "provenance": self.provenance}
        if self.variant == CONSTANT:
            out["eta"] = self.eta
        else:
            out.update(gamma=self.gamma, beta=self.beta, alpha=self.alpha)
        return out


def constant(eta: float, provenance: str = "custom", **meta) -> Schedule:
    return Schedule(CONSTANT, eta=eta, provenance=provenance, meta=meta)


def poly(gamma: float, beta: float, alpha: float, provenance: str = "custom", **meta) -> Schedule:
    return Schedule(
        POLY, gamma=gamma, beta=beta, alpha=alpha, provenance=provenance, meta=meta
    )


def eta_at(s: Schedule, t: int) -> float:
    """Epoch rate at 1-based epoch t."""
    if t < 1:
        raise ValueError("epoch index starts at 1")
    if s.variant == CONSTANT:
        return s.eta
    return s.gamma / (t + s.beta) ** s.alpha


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    requirement: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs


@dataclass(frozen=True)
class ValidityReport:
    schedule: Schedule
    checks: tuple
    estimated: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self):
        flag = " (constants estimated)" if self.estimated else ""
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            yield f"[{status}] {c.name}: {c.requirement}  lhs={c.lhs:.6g} rhs={c.rhs:.6g}{flag}"


def _need(consts: ProblemConstants | None, *names):
    if consts is None:
        raise ConfigError(f"preset needs problem constants: {', '.join(names)}")
    missing = [k for k in names if getattr(consts, k) is None]
    if missing:
        raise ConfigError(f"preset needs problem constants: {', '.join(missing)}")


def _need_args(provided: dict, *names):
    missing = [k for k in names if provided.get(k) is None]
    if missing:
        raise ConfigError(f"preset needs arguments: {', '.join(missing)}")


def preset(
    name: str,
    consts: ProblemConstants | None = None,
    T: int | None = None,
    n: int | None = None,
    **params,
) -> Schedule:
    """Build a named schedule from problem constants and the run horizon.

    Presets (epoch rate eta_t, inner step always eta_t/n):

    - scvx_const:            6 log(T) / (mu T), any order
    - scvx_const_rr:         4 log(sqrt(n) T) / (mu T), reshuffled
    - scvx_const_rr_convex:  2 log(sqrt(n) T) / (mu T), reshuffled + convex
    - scvx_decay:            6 / (mu (t + beta)), beta >= max(12 kappa^2 - 1, 1)
    - scvx_decay_rr_convex:  2 / (mu (t + 1 + 1/n))
    - cuberoot_const:        gamma / T^(1/3)
    - cuberoot_const_rr:     gamma n^(1/3) / T^(1/3)
    - eps_target:            sqrt(eps) / (2 L sigma sqrt(3 theta + 2))
    - poly_decay:            gamma / (t + beta)^alpha, alpha in (1/3, 1)
    - cuberoot_decay:        gamma / (t + beta)^(1/3)
    - graddom_decay:         2 / (t + beta)
    - sgd_sqrt_decay:        gamma / (t + beta)^(1/2), per-iteration baseline
    - averaged_cuberoot_decay: gamma n^(1/3) / (t + beta)^(1/3), averaged iterate
    """
    if name == "scvx_const":
        _need(consts, "mu")
        _need_args({"T": T}, "T")
        return constant(6.0 * math.log(T) / (consts.mu * T), name, T=T)
    if name == "scvx_const_rr":
        _need(consts, "mu")
        _need_args({"T": T, "n": n}, "T", "n")
        return constant(
            4.0 * math.log(math.sqrt(n) * T) / (consts.mu * T), name, T=T, n=n
        )
    if name == "scvx_const_rr_convex":
        _need(consts, "mu")
        _need_args({"T": T, "n": n}, "T", "n")
        return constant(
            2.0 * math.log(math.sqrt(n) * T) / (consts.mu * T), name, T=T, n=n
        )
    if name == "scvx_decay":
        _need(consts, "mu", "kappa")
        beta = params.get("beta")
        if beta is None:
            beta = max(12.0 * consts.kappa**2 - 1.0, 1.0)
        return poly(6.0 / consts.mu, beta, 1.0, name)
    if name == "scvx_decay_rr_convex":
        _need(consts, "mu")
        _need_args({"n": n}, "n")
        return poly(2.0 / consts.mu, 1.0 + 1.0 / n, 1.0, name, n=n)
    if name == "cuberoot_const":
        _need_args({"T": T, **params}, "T", "gamma")
        return constant(params["gamma"] / T ** (1.0 / 3.0), name, T=T, base_gamma=params["gamma"])
    if name == "cuberoot_const_rr":
        _need_args({"T": T, "n": n, **params}, "T", "n", "gamma")
        return constant(
            params["gamma"] * n ** (1.0 / 3.0) / T ** (1.0 / 3.0),
            name,
            T=T,
            n=n,
            base_gamma=params["gamma"],
        )
    if name == "eps_target":
        _need(consts, "L_hat")
        _need_args(params, "epsilon")
        eps = params["epsilon"]
        sigma = math.sqrt(consts.sigma_sq_hat)
        if sigma == 0:
            raise ConfigError("eps_target needs sigma_sq_hat > 0")
        return constant(
            math.sqrt(eps)
            / (2.0 * consts.L_hat * sigma * math.sqrt(3.0 * consts.theta_hat + 2.0)),
            name,
            epsilon=eps,
        )
    if name == "poly_decay":
        _need_args(params, "gamma", "beta", "alpha")
        return poly(params["gamma"], params["beta"], params["alpha"], name)
    if name == "cuberoot_decay":
        _need_args(params, "gamma", "beta")
        return poly(params["gamma"], params["beta"], 1.0 / 3.0, name)
    if name == "graddom_decay":
        beta = params.get("beta")
        if beta is None:
            _need(consts, "L_hat")
            beta = max(
                2.0
                * consts.L_hat
                * math.sqrt(2.0 * (3.0 * consts.theta_hat + 2.0))
                - 1.0,
                1.0,
            )
        return poly(2.0, beta, 1.0, name)
    if name == "sgd_sqrt_decay":
        _need_args(params, "gamma", "beta")
        return poly(params["gamma"], params["beta"], 0.5, name)
    if name == "averaged_cuberoot_decay":
        _need_args({"n": n, **params}, "n", "gamma", "beta")
        return poly(
            params["gamma"] * n ** (1.0 / 3.0),
            params["beta"],
            1.0 / 3.0,
            name,
            n=n,
            base_gamma=params["gamma"],
        )
    raise ConfigError(f"unknown schedule preset {name!r}")


def _general_step_cap(consts: ProblemConstants) -> float:
    return 1.0 / (
        consts.L_hat * math.sqrt(2.0 * (3.0 * consts.theta_hat + 2.0))
    )


def _rr_step_cap(consts: ProblemConstants, n: int) -> float:
    return 1.0 / (
        consts.L_hat * math.sqrt(2.0 * (consts.theta_hat / n + 1.0))
    )


def validate(
    s: Schedule, consts: ProblemConstants, T: int, n: int
) -> ValidityReport:
    """Evaluate every validity condition attached to a schedule's provenance.

    Failures are report rows, never exceptions.  Custom schedules only get
    the generic step caps eta_1 <= 1/L and eta_1 <= 1/(2L).
    """
    checks: list[ConditionCheck] = []
    eta1 = eta_at(s, 1)
    name = s.provenance
    L = consts.L_hat

    def add(cname, req, lhs, rhs):
        checks.append(ConditionCheck(cname, req, float(lhs), float(rhs)))

    if name == "scvx_const":
        consts.require("kappa")
        add("horizon", "12 k^2 log(T) <= T", 12.0 * consts.kappa**2 * math.log(T), T)
    elif name == "scvx_const_rr":
        consts.require("mu")
        lhs = (
            8.0
            * L
            * math.sqrt(consts.theta_hat / n + 1.0)
            * math.log(math.sqrt(n) * T)
            / consts.mu**2
        )
        add("horizon", "8 L sqrt(theta/n+1) log(sqrt(n) T) / mu^2 <= T", lhs, T)
    elif name == "scvx_const_rr_convex":
        consts.require("kappa")
        add(
            "horizon",
            "log(sqrt(n) T) <= T/2 min(1, (sqrt(5)-1)/k)",
            math.log(math.sqrt(n) * T),
            0.5 * T * min(1.0, 2.0 * GOLDEN_STEP / consts.kappa),
        )
    elif name == "scvx_decay":
        consts.require("kappa")
        add("offset", "12 k^2 - 1 <= beta", 12.0 * consts.kappa**2 - 1.0, s.beta)
    elif name == "scvx_decay_rr_convex":
        add("smoothness scale", "L <= (sqrt(5)-1)/2", L, GOLDEN_STEP)
    elif name == "cuberoot_const":
        g = s.meta["base_gamma"]
        add(
            "horizon",
            "gamma L sqrt(2(3 theta + 2)) <= T^(1/3)",
            g * L * math.sqrt(2.0 * (3.0 * consts.theta_hat + 2.0)),
            T ** (1.0 / 3.0),
        )
    elif name == "cuberoot_const_rr":
        g = s.meta["base_gamma"]
        add(
            "horizon",
            "gamma L n^(1/3) sqrt(2(theta/n + 1)) <= T^(1/3)",
            g
            * L
            * n ** (1.0 / 3.0)
            * math.sqrt(2.0 * (consts.theta_hat / n + 1.0)),
            T ** (1.0 / 3.0),
        )
    elif name == "eps_target":
        add(
            "accuracy range",
            "epsilon <= 2 sigma^2",
            s.meta["epsilon"],
            2.0 * consts.sigma_sq_hat,
        )
        add("step cap", "eta <= 1/(L sqrt(2(3 theta + 2)))", eta1, _general_step_cap(consts))
    elif name == "poly_decay":
        add("alpha lower", "1/3 <= alpha", 1.0 / 3.0, s.alpha)
        add("alpha upper", "alpha <= 1", s.alpha, 1.0)
        add(
            "first step",
            "gamma L sqrt(2(3 theta + 2)) <= (beta + 1)^alpha",
            s.gamma * L * math.sqrt(2.0 * (3.0 * consts.theta_hat + 2.0)),
            (s.beta + 1.0) ** s.alpha,
        )
    elif name == "cuberoot_decay":
        add(
            "first step",
            "gamma L sqrt(2(3 theta + 2)) <= (beta + 1)^(1/3)",
            s.gamma * L * math.sqrt(2.0 * (3.0 * consts.theta_hat + 2.0)),
            (s.beta + 1.0) ** (1.0 / 3.0),
        )
    elif name == "graddom_decay":
        add(
            "offset",
            "max(2 L sqrt(2(3 theta + 2)) - 1, 1) <= beta",
            max(2.0 * L * math.sqrt(2.0 * (3.0 * consts.theta_hat + 2.0)) - 1.0, 1.0),
            s.beta,
        )
    elif name == "sgd_sqrt_decay":
        add("first step", "gamma/(1+beta)^(1/2) <= 1/L", eta1, 1.0 / L)
    elif name == "averaged_cuberoot_decay":
        g = s.meta["base_gamma"]
        add(
            "offset",
            "max(8 L^3 gamma^3 n - 1, 1) <= beta",
            max(8.0 * L**3 * g**3 * n - 1.0, 1.0),
            s.beta,
        )
    else:
        add("descent step cap", "eta_1 <= 1/L", eta1, 1.0 / L)
        add("distance step cap", "eta_1 <= 1/(2L)", eta1, 0.5 / L)
    return ValidityReport(schedule=s, checks=tuple(checks), estimated=consts.estimated)
