"""Write a synthetic grating image tree usable with ``dbfga --data``.

    python3 scripts/make_gratings.py out/gratings --per-class 50 --size 32
"""

import argparse

from dbfga.data import write_image_tree
from dbfga.synthetic import gratings


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("root")
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fmt", choices=("png", "pgm"), default="png")
    args = p.parse_args()
    ds = gratings(args.per_class, size=args.size, noise=args.noise, seed=args.seed)
    paths = write_image_tree(args.root, ds, args.fmt)
    print(f"wrote {len(paths)} images under {args.root} ({', '.join(ds.class_names)})")


if __name__ == "__main__":
    main()
