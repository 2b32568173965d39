"""CE on the labeled 2% versus Pseudo-MCL on all training samples, started from that CE model."""

import argparse

import numpy as np

from pairlearn.experiments import run_semi_supervised


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--labeled-fraction", type=float, default=0.02)
    parser.add_argument("--augment-scale", type=float, default=0.3, help="negative disables augmentation pairs")
    args = parser.parse_args()
    aug = None if args.augment_scale < 0 else args.augment_scale
    gains = []
    for seed in range(args.seeds):
        r = run_semi_supervised(seed, labeled_fraction=args.labeled_fraction, augment_scale=aug)
        gains.append(r.gain)
        print(f"seed {seed}: {r.n_labeled} labels  CE {r.acc_baseline:.4f}  Pseudo-MCL {r.acc_semi:.4f}", flush=True)
    print(f"mean gain {np.mean(gains):+.4f}")


if __name__ == "__main__":
    main()
