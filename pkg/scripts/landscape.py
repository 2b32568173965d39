"""Loss surface through the MCL, CE and KCL solutions of one blob task.

Writes alpha,beta,loss rows; the MCL solution sits at (0, 0), CE at (1, 0), KCL at (0, 1).
"""

import argparse
import time

from pairlearn.data import write_surface_csv
from pairlearn.experiments import own_losses, run_landscape
from pairlearn.landscape import GridSpec


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--loss", default="MCL", choices=["MCL", "CE", "KCL"])
    parser.add_argument("--resolution", type=int, default=91)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="surface.csv")
    args = parser.parse_args()
    start = time.perf_counter()
    run = run_landscape(args.seed, loss=args.loss, grid=GridSpec(resolution=args.resolution))
    write_surface_csv(run.surface, args.out)
    for name, value in own_losses(run, args.loss).items():
        print(f"{args.loss} loss at the {name} solution: {value:.6g}")
    print(f"wrote {args.out} in {time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
