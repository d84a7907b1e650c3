"""Mean MOTA as the FC slot period varies relative to the sensor period."""
import argparse

import numpy as np

from radarfuse.experiments import RATIOS, rate_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--ratios", type=lambda s: tuple(float(x) for x in s.split(",")), default=RATIOS)
    args = ap.parse_args()
    per = {r: [] for r in args.ratios}
    for seed in range(args.seeds):
        for r, rep in rate_trial(seed, args.ratios).items():
            per[r].append(rep.MOTA)
    print("T_c/T_s  mean MOTA  std")
    for r, v in per.items():
        print(f"{r:>7g}  {np.mean(v):.3f}      {np.std(v):.3f}")


if __name__ == "__main__":
    main()
