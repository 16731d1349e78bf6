"""FGA model vs the no-attention baseline on the grating task, median over seeds."""

import argparse
import json
import logging

from dbfga.experiments import mechanism_check


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--json", help="write the full result here")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    r = mechanism_check(range(args.seeds))
    print(f"fga median val_acc  {r['fga_median']:.4f}")
    print(f"none median val_acc {r['none_median']:.4f}")
    print(f"margin              {r['margin']:+.4f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(r, fh, indent=2)


if __name__ == "__main__":
    main()
