"""Vertical derivative of E[H | F_t] against E[D_t H | F_t], per checkpoint and bump size."""
import argparse

from funcito.derivatives import FDConfig
from funcito.representation import lifting_check, resolve_martingale
from funcito.simulation import SimulationConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=100)
    ap.add_argument("--steps", type=int, default=512)
    ap.add_argument("--checkpoints", type=int, default=8)
    args = ap.parse_args()

    sim = SimulationConfig(steps=args.steps, path_count=args.paths, seed=7)
    for mid in ["terminal:x", "terminal:x2", "terminal:exp"]:
        Y = resolve_martingale(mid)
        for eps in (1e-2, 1e-4, 1e-6):
            rep = lifting_check(Y, sim, FDConfig(eps_vertical=eps), args.checkpoints)
            per = " ".join(f"{e:.1e}" for e in rep.per_checkpoint)
            print(f"{mid:<14}eps={eps:<7g}max {rep.max_discrepancy:.2e}  [{per}]")


if __name__ == "__main__":
    main()
