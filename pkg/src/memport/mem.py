"""Conservative pricing by maximum entropy in the mean.

The inverse problem: find nonnegative increments xi such that A @ xi lands
inside every asset's bid-ask box, where A encodes discounted quantile tail
sums.  The cumulative sums phi = T @ xi are then samples of the derivative
of a concave distortion function, and A @ xi are the conservative prices.

The dual is an unconstrained convex minimization of

    Sigma(lam) = ln Z(A^t lam) + sum_i ((a_i - b_i)/2 * |lam_i| + (a_i + b_i)/2 * lam_i)

with ln Z depending on the reference measure:

    unbounded (xi in [0, inf)^N):  ln Z = sum_j exp(-(A^t lam)_j)
    bounded   (xi in [0, L]^N):    ln Z = sum_j ln(1 + exp(-L (A^t lam)_j))

and the primal recovered in closed form from the minimizer:

    unbounded: xi_j = exp(-(A^t lam)_j)
    bounded:   xi_j = L * sigmoid(-L (A^t lam)_j)

The kink in |lam_i| is removed exactly by splitting lam = p - q with
p, q >= 0, which turns the box term into a_i p_i - b_i q_i; the split
problem is minimized over the nonnegative orthant by a projected
descent method with backtracking line search, scaling the free
coordinates by the dual Hessian (two-metric projection) because boxes
with tiny interior slack make the plain gradient arbitrarily
ill-conditioned.  Optimality is still reported through the
subdifferential of the original nonsmooth dual.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .market_data import BidAskRange, QuantileGrid

MODES = ("unbounded", "bounded")
FEASIBILITY_TOL = 1e-6


class ConvergenceError(RuntimeError):
    """Dual minimization did not reach the residual tolerance.

    Carries the best iterate found; also the signature of an infeasible
    box (the dual may be unbounded below when the box misses the cone
    {A xi : xi >= 0}).
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class IntegrityError(RuntimeError):
    """A converged solution violates an invariant it should satisfy by construction."""


@dataclass(frozen=True)
class MemProblem:
    """Discretized inverse problem: matrices B, T, A = B T and the bid-ask boxes."""

    b_matrix: np.ndarray  # (M, N): e^{-r}/N * q_i(j/N)
    t_matrix: np.ndarray  # (N, N) lower-triangular ones
    a_matrix: np.ndarray  # (M, N): tail sums of b_matrix
    bids: np.ndarray  # (M,)
    asks: np.ndarray  # (M,)
    rate: float
    grid_size: int

    def __post_init__(self):
        m, n = self.b_matrix.shape
        if m == 0 or n == 0:
            raise ValueError("empty discretization")
        if self.a_matrix.shape != (m, n) or self.t_matrix.shape != (n, n):
            raise ValueError("inconsistent matrix shapes")
        if np.any(self.b_matrix < 0) or np.any(self.a_matrix < 0):
            raise ValueError("B and A must be entrywise nonnegative")
        # telescoping identity A[i, k] = sum_{j >= k} B[i, j]
        tails = np.cumsum(self.b_matrix[:, ::-1], axis=1)[:, ::-1]
        if not np.allclose(self.a_matrix, tails, rtol=1e-12, atol=1e-12):
            raise ValueError("A does not match the tail sums of B")
        if np.any(self.bids > self.asks) or np.any(self.bids <= 0):
            raise ValueError("boxes must satisfy 0 < bid <= ask")

    @property
    def n_assets(self) -> int:
        return self.b_matrix.shape[0]


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 10_000
    backtrack_shrink: float = 0.5
    step_growth: float = 1.25
    bound: float | None = None  # L; only used in bounded mode

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (0 < self.backtrack_shrink < 1):
            raise ValueError("backtrack_shrink must be in (0, 1)")
        if self.bound is not None and self.bound <= 0:
            raise ValueError("bound L must be positive")


DEFAULT_BOUND = 100.0


@dataclass(frozen=True)
class MemSolution:
    """Dual multipliers and the primal quantities they generate."""

    lam: np.ndarray  # (M,)
    xi: np.ndarray  # (N,) nonnegative increments
    phi: np.ndarray  # (N,) cumulative sums of xi, nondecreasing
    prices: np.ndarray  # (M,) A @ xi, the conservative prices
    mode: str
    residual: float
    iterations: int
    bound: float | None = None


@dataclass(frozen=True)
class DistortionCurve:
    """Grid samples of the recovered concave distortion g and its derivative.

    levels holds u_j = j/N where gprime[j-1] = g'(1 - u_j); g is sampled on
    v_k = k/N, k = 0..N by a left Riemann sum of g'(1 - .), so g[0] = 0.
    No normalization g(1) = 1 is imposed; g[-1] reports the actual mass.
    """

    levels: np.ndarray  # (N,)
    gprime: np.ndarray  # (N,)
    v: np.ndarray  # (N + 1,)
    g: np.ndarray  # (N + 1,)

    def __post_init__(self):
        if self.g[0] != 0.0:
            raise IntegrityError("g(0) must be exactly 0")
        if np.any(np.diff(self.g) < -1e-12):
            raise IntegrityError("g must be nondecreasing")
        if np.any(np.diff(self.g, n=2) > 1e-12):
            raise IntegrityError("g must be concave on the grid")


def build_discretization(
    grid: QuantileGrid, ranges: Sequence[BidAskRange], rate: float = 0.0
) -> MemProblem:
    """Assemble B[i, j] = e^{-r}/N q_i(j/N), lower-triangular T and A = B T."""
    if not np.isfinite(rate):
        raise ValueError("rate must be finite")
    if len(ranges) != grid.n_assets:
        raise ValueError(f"{len(ranges)} bid-ask ranges for {grid.n_assets} assets")
    n = grid.grid_size
    b = np.exp(-rate) / n * grid.values
    t = np.tril(np.ones((n, n)))
    a = b @ t
    return MemProblem(
        b_matrix=b,
        t_matrix=t,
        a_matrix=a,
        bids=np.array([r.bid for r in ranges], dtype=float),
        asks=np.array([r.ask for r in ranges], dtype=float),
        rate=float(rate),
        grid_size=n,
    )


def _check_mode(mode: str, bound: float | None) -> float | None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "bounded":
        return DEFAULT_BOUND if bound is None else bound
    return None


def _log_z(lam: np.ndarray, problem: MemProblem, mode: str, bound: float | None) -> float:
    t = problem.a_matrix.T @ lam
    if mode == "unbounded":
        with np.errstate(over="ignore"):
            return float(np.exp(-t).sum())
    return float(np.logaddexp(0.0, -bound * t).sum())


def _log_z_grad(lam: np.ndarray, problem: MemProblem, mode: str, bound: float | None) -> np.ndarray:
    return -(problem.a_matrix @ _primal(lam, problem, mode, bound))


def _primal(lam: np.ndarray, problem: MemProblem, mode: str, bound: float | None) -> np.ndarray:
    t = problem.a_matrix.T @ lam
    if mode == "unbounded":
        return np.exp(-t)
    return bound * expit(-bound * t)


def _log_z_hess(lam: np.ndarray, problem: MemProblem, mode: str, bound: float | None) -> np.ndarray:
    """Hessian of ln Z: A diag(curv) A^t with per-column curvature weights."""
    t = problem.a_matrix.T @ lam
    if mode == "unbounded":
        curv = np.exp(-t)
    else:
        s = expit(-bound * t)
        curv = bound * bound * s * (1.0 - s)
    return (problem.a_matrix * curv) @ problem.a_matrix.T


def dual_entropy(lam, problem: MemProblem, mode: str = "unbounded", bound: float | None = None) -> float:
    """Value of the nonsmooth convex dual: ln Z plus the box support function."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (problem.n_assets,):
        raise ValueError(f"lambda must have shape ({problem.n_assets},)")
    bound = _check_mode(mode, bound)
    half_w = (problem.asks - problem.bids) / 2.0
    mid = (problem.asks + problem.bids) / 2.0
    return _log_z(lam, problem, mode, bound) + float(half_w @ np.abs(lam) + mid @ lam)


def dual_gradient(
    lam, problem: MemProblem, mode: str = "unbounded", bound: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Smooth gradient of ln Z plus the per-coordinate box intervals.

    Returns (smooth, boxes) where boxes[i] = (bid_i, ask_i).  The full
    subdifferential at lam is smooth_i + ask_i when lam_i > 0,
    smooth_i + bid_i when lam_i < 0, and smooth_i + [bid_i, ask_i] at 0.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (problem.n_assets,):
        raise ValueError(f"lambda must have shape ({problem.n_assets},)")
    bound = _check_mode(mode, bound)
    smooth = _log_z_grad(lam, problem, mode, bound)
    return smooth, np.column_stack([problem.bids, problem.asks])


def _residual_from_grad(lam: np.ndarray, smooth: np.ndarray, bids: np.ndarray, asks: np.ndarray) -> float:
    target = -smooth  # equals A @ xi(lam)
    res = np.where(
        lam > 0,
        np.abs(target - asks),
        np.where(lam < 0, np.abs(target - bids), np.maximum.reduce([bids - target, target - asks, np.zeros_like(target)])),
    )
    return float(res.max())


def verify_optimality(problem: MemProblem, solution: MemSolution) -> float:
    """Max subdifferential violation of the dual first-order conditions at solution.lam."""
    smooth = _log_z_grad(solution.lam, problem, solution.mode, solution.bound)
    return _residual_from_grad(solution.lam, smooth, problem.bids, problem.asks)


def solve_mem(
    problem: MemProblem, opts: SolverOptions | None = None, mode: str = "unbounded"
) -> MemSolution:
    """Minimize the dual entropy and recover increments, distortion samples and prices.

    Raises ConvergenceError (carrying the best iterate) if the residual
    tolerance is not met within the iteration budget; an infeasible box
    shows up this way, since the dual then has no finite minimizer.
    """
    opts = opts or SolverOptions()
    bound = _check_mode(mode, opts.bound)
    m = problem.n_assets
    a, b = problem.asks, problem.bids

    # split lam = p - q, both nonnegative; objective is then smooth on the orthant
    x = np.zeros(2 * m)

    def objective(x_):
        return _log_z(x_[:m] - x_[m:], problem, mode, bound) + float(a @ x_[:m] - b @ x_[m:])

    def gradient(x_):
        gz = _log_z_grad(x_[:m] - x_[m:], problem, mode, bound)
        return np.r_[gz + a, -gz - b]

    f_val = objective(x)
    grad = gradient(x)

    best_res = np.inf
    best_lam = np.zeros(m)
    stalled = False
    for it in range(1, opts.max_iterations + 1):
        lam = x[:m] - x[m:]
        smooth = grad[:m] - a  # log Z gradient recovered from the split gradient
        res = _residual_from_grad(lam, smooth, b, a)
        if res < best_res:
            best_res, best_lam = res, lam.copy()
        if res < opts.tolerance:
            return _finish(problem, lam, mode, bound, res, it - 1)

        # projected Newton (two-metric) direction: curvature-scale the free
        # coordinates, leave near-active ones on the plain gradient
        eps = min(1e-6, float(np.linalg.norm(x - np.maximum(x - grad, 0.0))))
        free = (x > eps) | (grad < 0)
        # at most one side of each (p_i, q_i) pair may scale by curvature:
        # the pair's rows of the block Hessian are exact negatives, so
        # freeing both makes the reduced system singular (degenerate when
        # bid = ask).  Keep the loaded side, or the steeper one at zero.
        both = free[:m] & free[m:]
        direction = grad.copy()
        if np.any(both):
            keep_p = (x[:m] > x[m:]) | ((x[:m] == x[m:]) & (grad[:m] <= grad[m:]))
            free[:m] &= ~both | keep_p
            free[m:] &= ~both | ~keep_p
            # the dropped side stays put: its lambda move is already carried
            # by the kept side, and a plain gradient step would fight it
            direction[:m][both & ~keep_p] = 0.0
            direction[m:][both & keep_p] = 0.0
        idx = np.flatnonzero(free)
        if idx.size:
            hz = _log_z_hess(lam, problem, mode, bound)
            h2 = np.block([[hz, -hz], [-hz, hz]])[np.ix_(idx, idx)]
            h2[np.diag_indices_from(h2)] += max(1e-12, 1e-10 * float(np.trace(h2)))
            try:
                d_free = np.linalg.solve(h2, grad[idx])
            except np.linalg.LinAlgError:
                d_free = grad[idx]
            if float(d_free @ grad[idx]) > 0:  # keep only descent directions
                direction[idx] = d_free

        # backtracking (Armijo) line search along the projected arc
        alpha = 1.0
        accepted = False
        while alpha >= 1e-20:
            x_new = np.maximum(x - alpha * direction, 0.0)
            dx = x_new - x
            if float(dx @ dx) == 0.0:
                break
            f_new = objective(x_new)
            # the absolute slack keeps the search alive once the decrease
            # drops below the rounding noise of the objective itself
            slack = 1e-13 * max(1.0, abs(f_val))
            if np.isfinite(f_new) and f_new <= f_val + 1e-4 * float(grad @ dx) + slack:
                accepted = True
                break
            alpha *= opts.backtrack_shrink
        if not accepted:
            stalled = True
            break

        # drop the common part of (p, q): leaves lam unchanged, never increases f
        overlap = np.minimum(x_new[:m], x_new[m:])
        x_new[:m] -= overlap
        x_new[m:] -= overlap
        f_new -= float((a - b) @ overlap)

        x, f_val = x_new, f_new
        grad = gradient(x)

    raise ConvergenceError(
        f"dual minimization stalled at residual {best_res:.3e} (> {opts.tolerance:.1e}) "
        f"after {opts.max_iterations} iterations; the bid-ask box may be unreachable "
        f"from the nonnegative cone",
        best=_finish(problem, best_lam, mode, bound, best_res, opts.max_iterations, strict=False),
    )


def _finish(problem, lam, mode, bound, residual, iterations, strict=True) -> MemSolution:
    xi = _primal(lam, problem, mode, bound)
    phi = problem.t_matrix @ xi
    prices = problem.a_matrix @ xi
    sol = MemSolution(
        lam=lam, xi=xi, phi=phi, prices=prices, mode=mode,
        residual=float(residual), iterations=iterations, bound=bound,
    )
    if strict:
        if np.any(xi < 0) or (bound is not None and np.any(xi > bound)):
            raise IntegrityError("increments escaped their admissible range")
        lo = problem.bids - FEASIBILITY_TOL
        hi = problem.asks + FEASIBILITY_TOL
        if np.any(prices < lo) or np.any(prices > hi):
            raise IntegrityError("converged prices fall outside their bid-ask boxes")
    return sol


def conservative_prices(problem: MemProblem, solution: MemSolution) -> np.ndarray:
    """A @ xi*, checked against the closed bid-ask boxes."""
    prices = problem.a_matrix @ solution.xi
    if np.any(prices < problem.bids - FEASIBILITY_TOL) or np.any(prices > problem.asks + FEASIBILITY_TOL):
        raise IntegrityError("prices violate their bid-ask boxes beyond tolerance")
    return prices


def reconstruct_distortion(solution: MemSolution, problem: MemProblem) -> DistortionCurve:
    """Cumulate the derivative samples into the distortion g on the v-grid.

    g(v_k) = (1/N) * sum of gprime(1 - l/N) over l = 0..k-1, i.e. a left
    Riemann sum of g'(1 - .); concavity follows from nondecreasing phi.
    """
    phi = solution.phi
    if np.any(np.diff(phi) < -1e-12):
        raise IntegrityError("distortion derivative samples must be nondecreasing")
    n = problem.grid_size
    # phi[j-1] = g'(1 - j/N) evaluated at u = j/N; the left Riemann sum over
    # v walks the samples from the top level down: g'(1 - l/N) = phi[N-l-1 + 1]
    g = np.concatenate([[0.0], np.cumsum(phi[::-1] / n)])
    v = np.arange(n + 1) / n
    return DistortionCurve(levels=np.arange(1, n + 1) / n, gprime=phi.copy(), v=v, g=g)


def solution_record(problem: MemProblem, solution: MemSolution) -> dict:
    """JSON-ready record of a solve: multipliers, increments, prices and the g curve."""
    curve = reconstruct_distortion(solution, problem)
    return {
        "mode": solution.mode,
        "bound": solution.bound,
        "iterations": solution.iterations,
        "residual": solution.residual,
        "lambda": solution.lam.tolist(),
        "xi": solution.xi.tolist(),
        "phi": solution.phi.tolist(),
        "prices": solution.prices.tolist(),
        "g_levels": curve.v.tolist(),
        "g": curve.g.tolist(),
    }
