"""Acceptance gate: one test per criterion, each printing a verdict line.

Criteria 1-10 run on random instances, hand-derived oracles and the bundled
synthetic fixture.  Criterion 11 needs the original 2000-2016 NYSE OHLC
dataset, which is not redistributable; it runs only when the environment
variable MEMPORT_NYSE_OHLC points at such a CSV and is skipped otherwise.
"""
import json
import os
import time

import numpy as np
import pytest

from memport import (
    MomentEstimates,
    SolverOptions,
    dual_entropy,
    dual_gradient,
    exp_utility_objective,
    optimize_exponential_utility,
    optimize_mean_variance,
    reconstruct_distortion,
    solve_mem,
)
from memport import backtest as bt
from memport import market_data as md
from memport.backtest import BacktestConfig, WindowSpec, build_report, roll_windows, run_backtest
from oracles import oracle_solve_1d, random_problem

RESULTS = []


def verdict(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_dual_solver_matches_1d_oracle():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 51))
        problem, _ = random_problem(rng, 1, n)
        sol = solve_mem(problem)
        _, price_star = oracle_solve_1d(problem.a_matrix[0], problem.bids[0], problem.asks[0])
        worst = max(worst, abs(sol.prices[0] - price_star))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 5.0
    verdict(1, ok, f"50 single-asset instances, max |price - oracle| = {worst:.2e} "
                   f"(< 1e-4), total {elapsed:.2f}s (< 5s)")


def test_criterion_02_pointwise_case():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(3, 50))
        problem, target = random_problem(rng, m, n, pointwise=True)
        sol = solve_mem(problem)
        worst = max(worst, float(np.max(np.abs(sol.prices - target))))
    ok = worst < 1e-6
    verdict(2, ok, f"20 pointwise instances, max ||A xi - y||_inf = {worst:.2e} (< 1e-6)")


def test_criterion_03_feasibility_suite():
    rng = np.random.default_rng(103)
    worst_res, worst_violation, worst_time = 0.0, 0.0, 0.0
    count = 0
    for mode, bound in (("unbounded", None), ("bounded", 100.0)):
        for _ in range(50):
            m = int(rng.integers(1, 6))
            n = int(rng.integers(2, 101))
            problem, _ = random_problem(rng, m, n, mode=mode, bound=bound or 100.0)
            t0 = time.perf_counter()
            sol = solve_mem(problem, SolverOptions(bound=bound), mode)
            worst_time = max(worst_time, time.perf_counter() - t0)
            assert np.all(sol.xi >= 0)
            if mode == "bounded":
                assert np.all(sol.xi <= bound)
            worst_violation = max(
                worst_violation,
                float(np.max(problem.bids - sol.prices, initial=0.0)),
                float(np.max(sol.prices - problem.asks, initial=0.0)),
            )
            worst_res = max(worst_res, sol.residual)
            count += 1
    ok = worst_res < 1e-8 and worst_violation < 1e-6 and worst_time < 1.0
    verdict(3, ok, f"{count} feasible instances: residual <= {worst_res:.2e} (< 1e-8), "
                   f"box violation <= {worst_violation:.2e} (< 1e-6), "
                   f"slowest solve {worst_time:.3f}s (< 1s)")


def test_criterion_04_gradient_finite_differences():
    rng = np.random.default_rng(104)
    h = 1e-6
    worst = 0.0
    for mode, bound in (("unbounded", None), ("bounded", 2.5)):
        problem, _ = random_problem(rng, 3, 25, mode=mode, bound=bound or 1.0)
        for _ in range(50):
            lam = rng.normal(0.0, 0.4, 3)
            lam[np.abs(lam) < 0.01] = 0.01
            smooth, boxes = dual_gradient(lam, problem, mode, bound)
            active = np.where(lam > 0, boxes[:, 1], boxes[:, 0])
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd = (dual_entropy(lam + e, problem, mode, bound)
                      - dual_entropy(lam - e, problem, mode, bound)) / (2 * h)
                expected = smooth[i] + active[i]
                worst = max(worst, abs(fd - expected) / max(1e-7, abs(expected)))
    ok = worst < 1e-5
    verdict(4, ok, f"central differences vs analytic gradient, both modes, "
                   f"max rel err = {worst:.2e} (< 1e-5)")


def test_criterion_05_convexity_probes():
    rng = np.random.default_rng(105)
    problem, _ = random_problem(rng, 4, 30)
    worst_sigma = -np.inf
    for mode, bound in (("unbounded", None), ("bounded", 3.0)):
        for _ in range(200):
            lam1, lam2 = rng.normal(0, 0.5, (2, 4))
            mid = dual_entropy((lam1 + lam2) / 2, problem, mode, bound)
            avg = (dual_entropy(lam1, problem, mode, bound)
                   + dual_entropy(lam2, problem, mode, bound)) / 2
            worst_sigma = max(worst_sigma, mid - avg)
    scen = rng.uniform(0.5, 2.0, (30, 4))
    worst_lnv = -np.inf
    for _ in range(200):
        h1, h2 = rng.uniform(0, 3, (2, 4))
        mid = exp_utility_objective((h1 + h2) / 2, scen)
        avg = (exp_utility_objective(h1, scen) + exp_utility_objective(h2, scen)) / 2
        worst_lnv = max(worst_lnv, mid - avg)
    ok = worst_sigma <= 1e-12 and worst_lnv <= 1e-12
    verdict(5, ok, f"midpoint convexity gaps: dual {worst_sigma:.2e}, "
                   f"ln V {worst_lnv:.2e} (both <= 1e-12)")


def test_criterion_06_distortion_shape():
    rng = np.random.default_rng(106)
    worst_phi, worst_concavity = 0.0, -np.inf
    for mode, bound in (("unbounded", None), ("bounded", 100.0)):
        for _ in range(15):
            m = int(rng.integers(1, 5))
            n = int(rng.integers(3, 80))
            problem, _ = random_problem(rng, m, n, mode=mode, bound=bound or 100.0)
            sol = solve_mem(problem, SolverOptions(bound=bound), mode)
            curve = reconstruct_distortion(sol, problem)
            assert curve.g[0] == 0.0
            worst_phi = max(worst_phi, float(np.max(-np.diff(sol.phi), initial=0.0)))
            worst_concavity = max(worst_concavity, float(np.max(np.diff(curve.g, n=2))))
    ok = worst_phi == 0.0 and worst_concavity <= 1e-12
    verdict(6, ok, f"30 converged solutions: phi decreases by <= {worst_phi:.1e} (0 required), "
                   f"g second differences <= {worst_concavity:.2e} (<= 1e-12), g(0) = 0")


def test_criterion_07_exponential_utility():
    scen = np.array([[1.2, 0.9], [0.8, 1.1]])
    h = optimize_exponential_utility(scen, np.array([1.0, 1.0]), 1.0)
    hand_err = float(np.max(np.abs(h.h - np.array([1.0, 1.0]) * [1 / 3, 2 / 3])))

    rng = np.random.default_rng(107)
    scen2 = rng.uniform(0.5, 2.0, (25, 2))
    prices = np.array([1.3, 0.7])
    h2 = optimize_exponential_utility(scen2, prices, 1.0)
    f_star = exp_utility_objective(h2.h, scen2)
    margin = 0.0
    for t in np.linspace(0.0, 1.0, 1000):
        grid_h = np.array([t / prices[0], (1 - t) / prices[1]])
        margin = max(margin, f_star - exp_utility_objective(grid_h, scen2))
    ok = hand_err < 1e-4 and margin < 1e-6
    verdict(7, ok, f"hand instance |h - (1/3, 2/3)| = {hand_err:.2e} (< 1e-4); "
                   f"grid-oracle margin {margin:.2e} (< 1e-6)")


def test_criterion_08_mean_variance():
    sym = optimize_mean_variance(MomentEstimates(mu=np.full(4, 1.1), sigma=np.eye(4)), 1.0)
    sym_err = float(np.max(np.abs(sym - 0.25)))

    proj = optimize_mean_variance(MomentEstimates(mu=np.array([0.2, 0.1]), sigma=np.eye(2)), 1.0)
    proj_err = float(np.max(np.abs(proj - np.array([0.55, 0.45]))))

    rng = np.random.default_rng(108)
    a = rng.normal(0, 1, (6, 3))
    moments = MomentEstimates(mu=rng.uniform(0.9, 1.3, 3), sigma=a.T @ a / 6)
    gamma = 2.0
    w_star = optimize_mean_variance(moments, gamma)
    obj = lambda w: float(moments.mu @ w - gamma / 2 * w @ moments.sigma @ w)
    best = obj(w_star)
    margin = 0.0
    for i in range(101):
        for j in range(101 - i):
            w = np.array([i, j, 100 - i - j]) / 100.0
            margin = max(margin, obj(w) - best)
    ok = sym_err < 1e-8 and proj_err < 1e-6 and margin < 1e-6
    verdict(8, ok, f"uniform err {sym_err:.2e} (< 1e-8); projection err {proj_err:.2e} "
                   f"(< 1e-6); lattice margin {margin:.2e} (< 1e-6)")


def test_criterion_09_window_arithmetic():
    windows = roll_windows(204, WindowSpec(60, 12))
    ok = len(windows) == 13
    verdict(9, ok, f"204 months / length 60 / step 12 -> {len(windows)} windows (13 required)")


def test_criterion_10_end_to_end_determinism(fixture_csv):
    t0 = time.perf_counter()
    series = md.load_ohlc(fixture_csv)
    dumps = []
    in_box = True
    n_windows = 0
    for jobs in (1, 4, 1):
        config = BacktestConfig(jobs=jobs)
        results = run_backtest(series, config)
        n_windows = len(results)
        for res in results:
            assert res.mem_error is None, res.mem_error
            in_box &= bool(np.all(res.mem_prices >= res.bids - 1e-6))
            in_box &= bool(np.all(res.mem_prices <= res.asks + 1e-6))
        report = build_report(results, {"fixture": "synthetic"})
        dumps.append(json.dumps(report, sort_keys=True))
    elapsed = time.perf_counter() - t0
    identical = dumps[0] == dumps[1] == dumps[2]
    ok = identical and in_box and elapsed < 60.0
    verdict(10, ok, f"{n_windows}-window fixture backtest x3 (jobs 1/4/1): "
                    f"bit-identical={identical}, prices in boxes={in_box}, "
                    f"total {elapsed:.1f}s (< 60s)")


def test_criterion_11_published_dataset_reproduction():
    path = os.environ.get("MEMPORT_NYSE_OHLC")
    if not path:
        RESULTS.append("criterion 11: SKIP - set MEMPORT_NYSE_OHLC to the original "
                       "2000-2016 NYSE OHLC CSV to run the published-table checks")
        pytest.skip("original NYSE dataset not available")
    series = md.load_ohlc(path)
    closes = bt.monthly_close_table(series)
    from datetime import date

    eligible = [i for i, d in enumerate(closes.index) if d <= date(2008, 12, 29)]
    end = eligible[-1]
    in_sample = closes.iloc[end - 59 : end + 1]
    tickers = list(closes.columns)
    t_end = in_sample.index[-1]
    ranges = [md.estimate_bid_ask(series[t], t_end, 30) for t in tickers]
    returns = np.column_stack(
        [md.gross_returns(in_sample[t].to_numpy(dtype=float)) for t in tickers]
    )
    scenarios = md.scenario_prices(returns, in_sample.iloc[-1].to_numpy(dtype=float))
    from memport import build_discretization, empirical_quantile_grid

    problem = build_discretization(empirical_quantile_grid(scenarios, 100), ranges, 0.0)
    sol = solve_mem(problem)
    aapl = tickers.index("AAPL")
    price_ok = abs(sol.prices[aapl] - 11.765) < 5e-3

    results = run_backtest(series, BacktestConfig())
    table = bt.quartile_report(results).rows
    order_ok = all(
        table[f"{obj}/mem"]["median"] > table[f"{obj}/current"]["median"]
        for obj in ("eu", "mv")
    )
    ok = price_ok and order_ok
    verdict(11, ok, f"AAPL 2008-12-29 unbounded price {sol.prices[aapl]:.3f} "
                    f"(published 11.765); mem medians exceed current medians: {order_ok}")
