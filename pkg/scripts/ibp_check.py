"""Both sides of E[Y(T) Z(T)] = E[int phi_Y phi_Z dt] for the test pairs."""
import argparse
import time

from funcito.representation import integration_by_parts_many, resolve_martingale
from funcito.simulation import SimulationConfig

PAIRS = [("terminal:x", "terminal:x"), ("terminal:x2", "terminal:x"), ("terminal:x2", "terminal:x2"), ("doleans", "terminal:x")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=256)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    ms = {m: resolve_martingale(m) for pair in PAIRS for m in pair}
    t0 = time.perf_counter()
    sim = SimulationConfig(steps=args.steps, path_count=args.paths, seed=args.seed)
    results = integration_by_parts_many([(ms[a], ms[b]) for a, b in PAIRS], sim, jet_source="fd")
    print(f"{'pair':<28}{'lhs':>12}{'+-':>10}{'rhs':>12}{'+-':>10}{'z':>7}")
    for (a, b), r in zip(PAIRS, results):
        print(f"{a + ' x ' + b:<28}{r.lhs.mean:12.5f}{r.lhs.stderr:10.5f}{r.rhs.mean:12.5f}{r.rhs.stderr:10.5f}{r.z_score:7.2f}")
    print(f"{args.paths} paths, {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
