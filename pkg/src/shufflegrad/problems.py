"""Finite-sum objectives exposing per-component value/gradient oracles.

Two concrete problems: nonconvex regularized logistic regression on sparse
classification data, and a strongly convex quadratic with a closed-form
minimizer.  Both are immutable and their oracles are pure, so parallel runs
may share one instance.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .datasets import Dataset


@dataclass(frozen=True)
class ProblemConstants:
    """Numeric smoothness/variance/curvature constants used by schedule
    validity checks, per-epoch audits, and bound-curve evaluation.

    L_hat is always an upper estimate of the component smoothness constant.
    theta_hat/sigma_sq_hat form a pair feasible for the gradient-variance
    inequality variance(w) <= theta * ||grad F(w)||^2 + sigma^2 on the points
    they were fitted on (exact and global for the quadratic).  mu, kappa,
    sigma_star_sq and tau are only present when the minimizer is known.
    """

    L_hat: float
    theta_hat: float
    sigma_sq_hat: float
    mu: float | None = None
    kappa: float | None = None
    sigma_star_sq: float | None = None
    tau: float | None = None
    estimated: bool = True

    def __post_init__(self):
        for name in ("L_hat", "theta_hat", "sigma_sq_hat"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.kappa is not None and self.kappa < 1.0 - 1e-12:
            raise ValueError("condition number below 1")

    def require(self, *names: str) -> None:
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise ValueError(f"missing problem constants: {', '.join(missing)}")


class FiniteSumProblem:
    """Oracle interface for F(w) = (1/n) sum_i f(w; i).

    Subclasses must set n, d and implement comp_value/comp_grad; the default
    full_value/full_grad average the components with numpy's pairwise
    summation.  component_convex marks every f(.; i) convex.
    """

    n: int
    d: int
    component_convex: bool = False

    def comp_value(self, w: np.ndarray, i: int) -> float:
        raise NotImplementedError

    def comp_grad(self, w: np.ndarray, i: int) -> np.ndarray:
        raise NotImplementedError

    def full_value(self, w: np.ndarray) -> float:
        vals = np.array([self.comp_value(w, i) for i in range(self.n)])
        return float(np.mean(vals))

    def full_grad(self, w: np.ndarray) -> np.ndarray:
        grads = np.stack([self.comp_grad(w, i) for i in range(self.n)])
        return grads.mean(axis=0)

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} outside [0, {self.n})")


def _reg_value(w: np.ndarray) -> float:
    return float(np.sum(w * w / (1.0 + w * w)))


def _reg_grad(w: np.ndarray) -> np.ndarray:
    return w / (1.0 + w * w) ** 2


def softplus(z):
    """log(1 + exp(z)) without overflow for large |z|."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


class LogisticNonconvex(FiniteSumProblem):
    """Binary logistic loss with a bounded nonconvex penalty.

    f(w; i) = log(1 + exp(-y_i x_i'w)) + (lam/2) sum_j w_j^2 / (1 + w_j^2).
    The penalty saturates, keeping every component smooth with constant at
    most max_i ||x_i||^2 / 4 + lam.
    """

    def __init__(self, dataset: Dataset, lam: float = 0.01):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        if dataset.n == 0:
            raise ValueError("dataset is empty")
        self.dataset = dataset
        self.lam = lam
        self.n = dataset.n
        self.d = dataset.d
        self.component_convex = lam == 0.0
        self._rows = dataset.rows
        self._y = dataset.labels
        self._x_dense = dataset.dense() if dataset.n * dataset.d <= 5_000_000 else None
        self._row_norms_sq = np.array(
            [float(v @ v) for _, v in dataset.rows]
        )

    # -- component oracles -------------------------------------------------
    def comp_margin(self, w: np.ndarray, i: int) -> float:
        idx, val = self._rows[i]
        return self._y[i] * float(val @ w[idx])

    def comp_value(self, w, i):
        self._check_index(i)
        z = self.comp_margin(w, i)
        return float(softplus(-z)) + 0.5 * self.lam * _reg_value(w)

    def comp_grad(self, w, i):
        self._check_index(i)
        idx, val = self._rows[i]
        z = self._y[i] * float(val @ w[idx])
        g = self.lam * _reg_grad(w)
        g[idx] -= self._y[i] * float(expit(-z)) * val
        return g

    # -- full-batch oracles (vectorized, pairwise-summed means) ------------
    def _margins(self, w):
        if self._x_dense is not None:
            return self._y * (self._x_dense @ w)
        return self._y * np.array([float(v @ w[i]) for i, v in self._rows])

    def full_value(self, w):
        return float(np.mean(softplus(-self._margins(w)))) + 0.5 * self.lam * _reg_value(w)

    def full_grad(self, w):
        coeff = -self._y * expit(-self._margins(w))
        if self._x_dense is not None:
            g = self._x_dense.T @ coeff / self.n
        else:
            g = np.zeros(self.d)
            for c, (idx, val) in zip(coeff, self._rows):
                g[idx] += c * val
            g /= self.n
        return g + self.lam * _reg_grad(w)

    def smoothness_upper_bound(self) -> float:
        return float(np.max(self._row_norms_sq)) / 4.0 + self.lam

    def accuracy(self, w: np.ndarray, test: Dataset) -> float:
        """Fraction of test rows with sign(x'w) == y; ties count as errors."""
        scores = np.array([float(v @ w[i]) for i, v in test.rows])
        pred = np.where(scores > 0, 1.0, np.where(scores < 0, -1.0, 0.0))
        return float(np.mean(pred == test.labels))


class QuadraticSC(FiniteSumProblem):
    """Strongly convex quadratic finite sum f(w; i) = 1/2 (w-a_i)'Q_i(w-a_i).

    Every Q_i is PSD (diagonal storage when built by `random`), the average
    matrix is positive definite, and the minimizer solves the normal
    equations exactly, so curvature constants and the component variance at
    the optimum are available in closed form.
    """

    component_convex = True

    def __init__(self, scales: np.ndarray, centers: np.ndarray):
        scales = np.asarray(scales, dtype=float)
        centers = np.asarray(centers, dtype=float)
        if scales.ndim == 2:
            self.diagonal = True
            n, d = scales.shape
        elif scales.ndim == 3:
            self.diagonal = False
            n, d, d2 = scales.shape
            if d != d2:
                raise ValueError("scale matrices must be square")
        else:
            raise ValueError("scales must be (n, d) diagonals or (n, d, d)")
        if centers.shape != (n, d):
            raise ValueError("centers shape mismatch")
        self.n, self.d = n, d
        self.Q = scales
        self.A = centers

        if self.diagonal:
            self.Q_bar = np.diag(scales.mean(axis=0))
            self._qa_bar = (scales * centers).mean(axis=0)
            comp_L = scales.max(axis=1)
            comp_mu = scales.min(axis=1)
        else:
            self.Q_bar = scales.mean(axis=0)
            self._qa_bar = np.einsum("nij,nj->i", scales, centers) / n
            eigs = np.linalg.eigvalsh(scales)
            comp_L = eigs[:, -1]
            comp_mu = eigs[:, 0]
        if np.any(comp_mu < -1e-12):
            raise ValueError("component scale matrices must be PSD")
        bar_eigs = np.linalg.eigvalsh(self.Q_bar)
        if bar_eigs[0] <= 0:
            raise ValueError("average scale matrix must be positive definite")
        self.mu = float(bar_eigs[0])
        self.L = float(comp_L.max())
        self.kappa = self.L / self.mu
        self.w_star = np.linalg.solve(self.Q_bar, self._qa_bar)
        self._const = 0.5 * float(
            np.mean([self._q_form(self.A[i], i) for i in range(n)])
        )
        self.f_star = self.full_value(self.w_star)
        self.sigma_star_sq = float(
            np.mean([(g := self.comp_grad(self.w_star, i)) @ g for i in range(n)])
        )
        self.tau = 1.0 / (2.0 * self.mu)

    def _q_form(self, v, i):
        if self.diagonal:
            return float(self.Q[i] @ (v * v))
        return float(v @ self.Q[i] @ v)

    def _q_apply(self, v, i):
        if self.diagonal:
            return self.Q[i] * v
        return self.Q[i] @ v

    def comp_value(self, w, i):
        self._check_index(i)
        r = w - self.A[i]
        return 0.5 * self._q_form(r, i)

    def comp_grad(self, w, i):
        self._check_index(i)
        return self._q_apply(w - self.A[i], i)

    def full_value(self, w):
        return 0.5 * float(w @ self.Q_bar @ w) - float(w @ self._qa_bar) + self._const

    def full_grad(self, w):
        return self.Q_bar @ w - self._qa_bar

    def variance_envelope(self):
        """Global (theta, sigma^2) pair dominating the component-gradient
        variance everywhere: variance(w) <= theta ||grad F(w)||^2 + sigma^2.
        """
        if self.diagonal:
            spread = np.max(np.abs(self.Q - self.Q.mean(axis=0)), axis=1)
        else:
            spread = np.array(
                [np.linalg.norm(Qi - self.Q_bar, 2) for Qi in self.Q]
            )
        theta = 2.0 * float(np.max(spread) ** 2) / self.mu**2
        return theta, 2.0 * self.sigma_star_sq

    @classmethod
    def random(
        cls,
        n: int,
        d: int,
        seed: int,
        eig_lo: float = 0.31,
        eig_hi: float = 0.6,
        center_scale: float = 1.0,
    ) -> "QuadraticSC":
        """Diagonal random instance with eigenvalues in [eig_lo, eig_hi],
        hence L <= eig_hi and condition number at most eig_hi / eig_lo."""
        from . import rng

        g = rng.stream(seed, rng.DOMAIN_SYNTHETIC_DATA, counter=1)
        scales = g.uniform(eig_lo, eig_hi, size=(n, d))
        centers = center_scale * g.standard_normal((n, d))
        return cls(scales, centers)


def component_variance(problem: FiniteSumProblem, w: np.ndarray) -> float:
    """Population variance (1/n) sum_i ||grad f(w; i) - grad F(w)||^2."""
    g_bar = problem.full_grad(w)
    total = 0.0
    for i in range(problem.n):
        diff = problem.comp_grad(w, i) - g_bar
        total += float(diff @ diff)
    return total / problem.n


def sigma_star(problem: FiniteSumProblem, w_star: np.ndarray) -> float:
    """Mean squared component-gradient norm at a stationary point.

    Refuses to evaluate when ||grad F(w_star)|| exceeds the scale-aware
    stationarity tolerance 1e-8 * max(1, ||w_star||).
    """
    g = problem.full_grad(w_star)
    res = float(np.linalg.norm(g))
    tol = 1e-8 * max(1.0, float(np.linalg.norm(w_star)))
    if res > tol:
        raise ValueError(
            f"point is not stationary: ||grad F|| = {res:.3e} > {tol:.3e}"
        )
    return float(
        np.mean([(gi := problem.comp_grad(w_star, i)) @ gi for i in range(problem.n)])
    )


def fit_variance_envelope(problem, points, theta: float | None = None):
    """Fit (theta, sigma^2) with variance(w) <= theta g(w) + sigma^2 on the
    given points, where g = ||grad F||^2.

    The slope comes from ordinary least squares clamped to theta >= 0 (or is
    taken as given); the intercept is then the smallest feasible one, i.e.
    the largest residual, clamped to >= 0.
    """
    pts = list(points)
    if not pts:
        raise ValueError("need at least one probe point")
    g = np.array([float(np.linalg.norm(problem.full_grad(w)) ** 2) for w in pts])
    v = np.array([component_variance(problem, w) for w in pts])
    if theta is None:
        gc = g - g.mean()
        denom = float(gc @ gc)
        theta = max(0.0, float(gc @ (v - v.mean()) / denom)) if denom > 0 else 0.0
    sigma_sq = max(0.0, float(np.max(v - theta * g)))
    return theta, sigma_sq


def estimate_constants(problem: FiniteSumProblem, probe_points) -> ProblemConstants:
    """Assemble the constants needed by validity checks and audits.

    Quadratic instances report exact closed-form values; logistic instances
    combine the analytic smoothness bound with a variance pair fitted on the
    probe points (labeled estimated).
    """
    if isinstance(problem, QuadraticSC):
        theta, sigma_sq = problem.variance_envelope()
        return ProblemConstants(
            L_hat=problem.L,
            theta_hat=theta,
            sigma_sq_hat=sigma_sq,
            mu=problem.mu,
            kappa=problem.kappa,
            sigma_star_sq=problem.sigma_star_sq,
            tau=problem.tau,
            estimated=False,
        )
    theta, sigma_sq = fit_variance_envelope(problem, probe_points)
    if isinstance(problem, LogisticNonconvex):
        l_hat = problem.smoothness_upper_bound()
    else:
        l_hat = _lipschitz_probe(problem, probe_points)
    return ProblemConstants(L_hat=l_hat, theta_hat=theta, sigma_sq_hat=sigma_sq)


def _lipschitz_probe(problem, points) -> float:
    pts = list(points)
    best = 0.0
    for a, b in zip(pts, pts[1:]):
        gap = float(np.linalg.norm(a - b))
        if gap == 0:
            continue
        for i in range(problem.n):
            num = float(
                np.linalg.norm(problem.comp_grad(a, i) - problem.comp_grad(b, i))
            )
            best = max(best, num / gap)
    return best


def widen_sigma_floor(consts: ProblemConstants, problem, points) -> ProblemConstants:
    """Raise sigma_sq_hat so the fitted pair stays feasible on new points
    (slope kept fixed so any validity report computed from it still holds)."""
    _, sigma_sq = fit_variance_envelope(problem, points, theta=consts.theta_hat)
    if sigma_sq <= consts.sigma_sq_hat:
        return consts
    return replace(consts, sigma_sq_hat=sigma_sq)


def reference_minimum(
    problem: FiniteSumProblem,
    w0: np.ndarray | None = None,
    max_iters: int = 2000,
    grad_tol: float = 1e-10,
):
    """Best full-gradient-descent value with backtracking line search.

    Used as a reference objective level for problems without a closed-form
    minimizer; reported, never asserted exact.
    """
    w = np.zeros(problem.d) if w0 is None else np.asarray(w0, dtype=float).copy()
    f = problem.full_value(w)
    step = 1.0
    for _ in range(max_iters):
        g = problem.full_grad(w)
        gnorm_sq = float(g @ g)
        if gnorm_sq <= grad_tol**2:
            break
        step *= 2.0
        while step > 1e-18:
            trial = w - step * g
            f_trial = problem.full_value(trial)
            if f_trial <= f - 0.5 * step * gnorm_sq:
                break
            step *= 0.5
        else:
            break
        w, f = w - step * g, f_trial
    return f, w
