"""Per-sensor self-calibration error over many seeds (median and IQR)."""
import argparse
import logging

import numpy as np

from radarfuse.experiments import selfcal_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    pos, ori = {}, {}
    for seed in range(args.seeds):
        rep = selfcal_trial(seed)
        for s, e in rep.sensors.items():
            pos.setdefault(s, []).append(e.position_m)
            ori.setdefault(s, []).append(e.orientation_deg)
        for s in rep.absent:
            pos.setdefault(s, []).append(np.inf)
            ori.setdefault(s, []).append(np.inf)
    print("sensor  pos median (IQR) [m]   ori median (IQR) [deg]")
    for s in sorted(pos):
        if s == 1:
            continue
        p, o = np.array(pos[s]), np.array(ori[s])
        pi, oi = np.subtract(*np.percentile(p, [75, 25])), np.subtract(*np.percentile(o, [75, 25]))
        print(f"{s:>6}  {np.median(p):.3f} ({pi:.3f})          {np.median(o):.3f} ({oi:.3f})")


if __name__ == "__main__":
    main()
