"""Hedging error of Y(t) = E[g(W_T) | F_t] with the finite-difference hedge.

The residual Y(T) - Y(0) - sum phi dW should shrink like n^{-1/2}, except
for the linear payoff, where it is pure round-off.
"""
import argparse

import numpy as np

from funcito.derivatives import FDConfig
from funcito.experiments import loglog_slope, rms
from funcito.representation import representation_residual, resolve_martingale
from funcito.simulation import SimulationConfig, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--grid", default="256,1024,4096")
    ap.add_argument("--eps", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    grid = [int(n) for n in args.grid.split(",")]
    cfg = FDConfig(eps_vertical=args.eps)

    batches = {n: simulate(SimulationConfig(steps=n, path_count=args.paths, seed=args.seed)) for n in grid}
    for mid in ["terminal:x", "terminal:x2", "terminal:exp", "doleans"]:
        Y = resolve_martingale(mid)
        res = [representation_residual(Y, batches[n], cfg) for n in grid]
        r = [rms(v) for v in res]
        worst = max(float(np.max(np.abs(v))) for v in res)
        slope = f"{loglog_slope(grid, r):+.3f}" if max(r) > 1e-12 else "floor"
        print(f"{mid:<14}" + "  ".join(f"{v:.3e}" for v in r) + f"   slope {slope}   max|res| {worst:.2e}")


if __name__ == "__main__":
    main()
