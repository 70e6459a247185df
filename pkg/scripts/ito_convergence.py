"""RMS residual of the discretised functional Ito formula against grid size.

    python3 scripts/ito_convergence.py --paths 1000 --grid 256,1024,4096
"""
import argparse
import time

from funcito.experiments import ExperimentSpec, convergence_study
from funcito.simulation import SimulationConfig

FUNCTIONALS = ["doleans", "smooth:sin", "qv_integral:x", "quadratic_martingale"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--grid", default="256,1024,4096")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--functionals", default=",".join(FUNCTIONALS))
    args = ap.parse_args()
    grid = [int(n) for n in args.grid.split(",")]

    print(f"{'functional':<22}{'mode':<15}" + "".join(f"n={n:<11}" for n in grid) + "slope")
    for fid in args.functionals.split(","):
        for mode in ("instantaneous", "realized"):
            t0 = time.perf_counter()
            spec = ExperimentSpec("ito-check", fid, SimulationConfig(path_count=args.paths, seed=args.seed), qv_mode=mode)
            table = convergence_study(spec, grid)
            slope = "floor" if table.floored else f"{table.slope:+.3f}"
            cells = "".join(f"{r:<13.3e}" for r in table.rms)
            print(f"{fid:<22}{mode:<15}{cells}{slope}   ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
