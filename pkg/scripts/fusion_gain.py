"""MOTA of the fused network against each sensor tracked on its own."""
import argparse

import numpy as np

from radarfuse.experiments import fusion_gain_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    fused, best = [], []
    for seed in range(args.seeds):
        g = fusion_gain_trial(seed)
        fused.append(g.fused.MOTA)
        best.append(g.best_single)
        singles = " ".join(f"{s}:{r.MOTA:.3f}" for s, r in sorted(g.singles.items()))
        print(f"seed {seed:>3}: fused {g.fused.MOTA:.3f}  singles {singles}")
    print(f"mean MOTA fused {np.mean(fused):.3f}, best single {np.mean(best):.3f}, "
          f"gain {np.mean(fused) - np.mean(best):+.3f}")


if __name__ == "__main__":
    main()
