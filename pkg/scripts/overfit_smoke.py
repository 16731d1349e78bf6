"""Fit 64 small gratings until training accuracy hits 100%."""

import argparse

from dbfga.experiments import overfit_smoke


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=200)
    args = p.parse_args()
    r = overfit_smoke(seed=args.seed, max_epochs=args.max_epochs)
    print(f"reached={r.reached} epochs={r.epochs} train_acc={r.train_acc:.4f} seconds={r.seconds:.1f}")
    print("losses:", " ".join(f"{v:.4f}" for v in r.losses))


if __name__ == "__main__":
    main()
