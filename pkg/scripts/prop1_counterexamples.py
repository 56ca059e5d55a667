"""Search for task sequences where kappa of two consecutive meta-predictors drops.

With every task colinear and w_0 = 0 the predictor pairs are exactly rank one,
so kappa is infinite at every step. Two generic leading tasks (or a nonzero
w_0) give finite kappa, and then decreases do occur inside the colinear tail.
"""

import argparse

import numpy as np

from spectral_meta import maml
from spectral_meta.tasks import STREAM_MISC, colinear_thetas, rng_for


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    for gamma in (0.25, 0.5, 1.0, 2.0, 4.0):
        for d in (2, 5, 10):
            hits = []
            for seed in range(args.seeds):
                th = colinear_thetas(rng_for(seed, STREAM_MISC, 0, d), d, gamma, args.steps, prefix=2)
                tr = maml.simulate_prop1(th, args.alpha, args.beta)
                bad = tr.violations()
                if bad:
                    i = bad[0]
                    hits.append((seed, i, tr.kappas[i], tr.kappas[i + 1]))
            line = f"gamma={gamma:<5} d={d:<3} decreasing sequences {len(hits)}/{args.seeds}"
            if hits:
                s, i, k0, k1 = hits[0]
                line += f"  e.g. seed {s} step {i}: kappa {k0:.6g} -> {k1:.6g}"
            print(line)
    tr = maml.simulate_prop1(colinear_thetas(rng_for(0, STREAM_MISC), 3, 2.0, args.steps, prefix=1),
                             args.alpha, args.beta)
    print("all colinear, w_0 = 0: kappa finite at", int(np.isfinite(tr.kappas).sum()), "of", len(tr.entries), "steps")


if __name__ == "__main__":
    main()
