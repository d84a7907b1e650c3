"""Calibration error with one wrong track pair, with and without residual masking."""
import argparse

import numpy as np

from radarfuse.experiments import masking_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    masked, unmasked = [], []
    for seed in range(args.seeds):
        out = masking_trial(seed)
        masked += out.masked.values()
        unmasked += out.unmasked.values()
        print(f"seed {seed:>3}: masked {np.median(list(out.masked.values())):.3f} m, "
              f"unmasked {np.median(list(out.unmasked.values())):.3f} m")
    print(f"median position error: masked {np.median(masked):.3f} m, unmasked {np.median(unmasked):.3f} m")


if __name__ == "__main__":
    main()
