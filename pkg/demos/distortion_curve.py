"""Recover a concave distortion function from a hand-sized instance.

A single asset with two quantile cells already shows the mechanics: the
dual multiplier pins the price to a face of the bid-ask box, the increments
cumulate into a nondecreasing derivative, and the distortion g comes out
concave with g(0) = 0.  The script prints the whole chain so each quantity
can be checked by hand.
"""
import numpy as np

from memport import (
    BidAskRange,
    QuantileGrid,
    build_discretization,
    dual_entropy,
    reconstruct_distortion,
    solve_mem,
    verify_optimality,
)


def main():
    # quantiles (1, 3) at levels 1/2 and 1: B = (0.5, 1.5), A = (2.0, 1.5)
    grid = QuantileGrid(values=np.array([[1.0, 3.0]]))
    box = BidAskRange(bid=1.5, ask=2.5)
    problem = build_discretization(grid, [box], rate=0.0)
    print("A matrix:", problem.a_matrix[0])
    print(f"bid-ask box: [{box.bid}, {box.ask}]")

    sol = solve_mem(problem)
    print(f"\nlambda* = {sol.lam[0]:.6f}  (positive: the ask face is active)")
    print(f"xi*     = {np.round(sol.xi, 6)}")
    print(f"price   = {sol.prices[0]:.6f}  (pinned at the ask)")
    print(f"dual value at lambda*: {dual_entropy(sol.lam, problem):.6f}")
    print(f"optimality residual:   {verify_optimality(problem, sol):.2e}")

    curve = reconstruct_distortion(sol, problem)
    print("\ndistortion on the grid (no g(1) = 1 normalization is imposed):")
    for v, g in zip(curve.v, curve.g):
        print(f"  g({v:.2f}) = {g:.6f}")
    second = np.diff(curve.g, n=2)
    print(f"second differences: {np.round(second, 12)} (<= 0: concave)")

    # a denser instance shows the curve bending above the diagonal
    rng = np.random.default_rng(5)
    scen = np.sort(np.exp(rng.normal(0.0, 0.25, 500)) * 20.0)
    grid = QuantileGrid(values=scen[np.linspace(0, 499, 100, dtype=int)][None, :])
    problem = build_discretization(grid, [BidAskRange(bid=18.0, ask=19.5)], 0.0)
    sol = solve_mem(problem)
    curve = reconstruct_distortion(sol, problem)
    print(f"\n100-cell instance: price {sol.prices[0]:.4f}, g(1) = {curve.g[-1]:.4f}")
    for k in (10, 25, 50, 75, 100):
        print(f"  g({curve.v[k]:.2f}) = {curve.g[k]:.4f}")


if __name__ == "__main__":
    main()
