"""Long-only portfolio selection against empirical price scenarios.

Two objectives share one simplex machinery: exponential-utility
maximization (equivalently, minimizing the log of the scenario average of
exp(-portfolio value)) and the Markowitz mean-variance trade-off.  The
budget equality of the utility problem is eliminated by switching to
capital weights w with h_i = C0 * w_i / price_i, which turns both
problems into minimization over the probability simplex, solved by
projected gradient with Barzilai-Borwein steps and backtracking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .mem import ConvergenceError, SolverOptions


@dataclass(frozen=True)
class Holdings:
    """Share quantities and the capital that bought them at the budget prices."""

    h: np.ndarray
    capital: float

    def __post_init__(self):
        if np.any(self.h < 0):
            raise ValueError("holdings must be nonnegative (long-only)")
        if self.capital <= 0:
            raise ValueError("capital must be positive")


@dataclass(frozen=True)
class MomentEstimates:
    """Mean vector and covariance of gross returns."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        m = len(self.mu)
        if self.sigma.shape != (m, m):
            raise ValueError("covariance shape does not match mean vector")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if float(np.linalg.eigvalsh(self.sigma).min()) < -1e-10:
            raise ValueError("covariance must be positive semidefinite")


def estimate_moments(returns: np.ndarray) -> MomentEstimates:
    """Sample mean and unbiased (n-1) covariance of the gross-return rows."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 2 or r.shape[0] < 2:
        raise ValueError("need at least two return observations")
    sigma = np.cov(r, rowvar=False, ddof=1)
    return MomentEstimates(mu=r.mean(axis=0), sigma=np.atleast_2d(sigma))


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} by the sorted-threshold rule."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    positive = np.nonzero(u - css / idx > 0)[0]
    # the first entry is positive in exact arithmetic; at extreme input
    # magnitudes rounding can swallow it, and the projection is the top corner
    rho = positive[-1] if positive.size else 0
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _simplex_kkt_residual(w: np.ndarray, grad: np.ndarray) -> float:
    """Scale-normalized KKT violation on the simplex.

    At a minimum the support gradients share one multiplier and the
    off-support ones sit above it; the violation is reported relative to
    max(1, ||grad||_inf) so the stopping rule is insensitive to the
    capital scale of the objective.
    """
    mult = float(w @ grad)
    on = w > 0
    res = float(np.max(np.abs(grad[on] - mult)))
    if not np.all(on):
        res = max(res, float(np.max(np.maximum(mult - grad[~on], 0.0))))
    return res / max(1.0, float(np.max(np.abs(grad))))


def _minimize_on_simplex(value, grad_fn, w0: np.ndarray, opts: SolverOptions):
    """Projected gradient descent on the simplex; returns (w, residual, iterations)."""
    w = project_to_simplex(w0)
    f_val = value(w)
    g = grad_fn(w)
    step = 1.0 / max(1e-12, float(np.linalg.norm(g)))
    best = (w.copy(), np.inf)
    for it in range(1, opts.max_iterations + 1):
        res = _simplex_kkt_residual(w, g)
        if res < best[1]:
            best = (w.copy(), res)
        if res < opts.tolerance:
            return w, res, it - 1
        move = 0.0
        while True:
            w_new = project_to_simplex(w - step * g)
            d = w_new - w
            move = float(d @ d)
            if move == 0.0:
                break
            f_new = value(w_new)
            slack = 1e-14 * max(1.0, abs(f_val))  # rounding-noise floor
            if np.isfinite(f_new) and f_new <= f_val + float(g @ d) + move / (2.0 * step) + slack:
                break
            step *= opts.backtrack_shrink
            if step < 1e-20:
                break
        if move == 0.0 or step < 1e-20:
            break
        g_new = grad_fn(w_new)
        dg = float(d @ (g_new - g))
        step = min(max(move / dg, 1e-12), 1e12) if dg > 0 else step * opts.step_growth
        w, f_val, g = w_new, f_new, g_new
    w, res = best
    raise ConvergenceError(
        f"simplex solver stalled at KKT residual {res:.3e} (> {opts.tolerance:.1e})",
        best=w,
    )


def exp_utility_objective(h: np.ndarray, scenarios: np.ndarray) -> float:
    """ln of the equal-weight scenario average of exp(-<h, S(1)>), max-stabilized."""
    h = np.asarray(h, dtype=float)
    scen = np.asarray(scenarios, dtype=float)
    if scen.ndim != 2 or scen.shape[1] != len(h):
        raise ValueError("scenario matrix does not match holdings length")
    return float(logsumexp(-scen @ h) - np.log(scen.shape[0]))


def optimize_exponential_utility(
    scenarios: np.ndarray,
    prices: np.ndarray,
    capital: float,
    opts: SolverOptions | None = None,
) -> Holdings:
    """Minimize exp_utility_objective over {h >= 0, <h, prices> = capital}."""
    opts = opts or SolverOptions(tolerance=1e-9)
    scen = np.asarray(scenarios, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if scen.ndim != 2 or scen.shape[0] == 0:
        raise ValueError("scenario matrix must be nonempty")
    if np.any(prices <= 0):
        raise ValueError("prices must be positive")
    if capital <= 0:
        raise ValueError("capital must be positive")
    m = len(prices)
    if scen.shape[1] != m:
        raise ValueError("scenario matrix does not match price vector")
    scale = capital / prices  # h = scale * w

    def value(w):
        return exp_utility_objective(scale * w, scen)

    def grad(w):
        weights = softmax(-scen @ (scale * w))
        return -(weights @ scen) * scale

    w, _, _ = _minimize_on_simplex(value, grad, np.full(m, 1.0 / m), opts)
    return Holdings(h=scale * w, capital=float(capital))


def optimize_mean_variance(
    moments: MomentEstimates, gamma: float, opts: SolverOptions | None = None
) -> np.ndarray:
    """Maximize mu'w - gamma/2 w'Sigma w over the simplex; returns the weights.

    gamma = 0 degenerates to a linear program whose solution is the vertex
    of the largest mean (ties broken by lowest index).
    """
    if gamma < 0:
        raise ValueError("risk aversion must be nonnegative")
    opts = opts or SolverOptions(tolerance=1e-9)
    mu, sigma = moments.mu, moments.sigma
    m = len(mu)
    if gamma == 0.0:
        w = np.zeros(m)
        w[int(np.argmax(mu))] = 1.0
        return w

    def value(w):
        return float(-mu @ w + 0.5 * gamma * w @ sigma @ w)

    def grad(w):
        return -mu + gamma * (sigma @ w)

    w, _, _ = _minimize_on_simplex(value, grad, np.full(m, 1.0 / m), opts)
    return w


def portfolio_gross_return(holdings: Holdings, s1: np.ndarray) -> float:
    """Realized gross return <h, S(1)> / C0."""
    s1 = np.asarray(s1, dtype=float)
    if s1.shape != holdings.h.shape:
        raise ValueError("realized price vector does not match holdings")
    return float(holdings.h @ s1 / holdings.capital)
