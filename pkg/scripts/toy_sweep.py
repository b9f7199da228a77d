"""Trained desk-scale sweep: per-cell toy accuracy, delta vs complete graph, and CR."""
import argparse
import time

from cpattn.sweep import SweepConfig, cell_means, emit_heatmaps, run_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/toy_sweep")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--noise", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    t0 = time.time()
    config = SweepConfig(train=True, epochs=args.epochs, noise=args.noise, seed=args.seed, workers=args.workers)
    records = run_sweep(config)
    emit_heatmaps(records, args.out)
    acc = cell_means(records, "toy_acc")
    delta = cell_means(records, "acc_delta")
    cr = cell_means(records, "cr")
    print(f"{'n':>4} {'m':>4} {'toy_acc':>8} {'delta':>8} {'cr':>7}")
    for key in acc:
        print(f"{key[0]:>4} {key[1]:>4} {acc[key]:8.4f} {delta[key]:+8.4f} {cr[key]:7.4f}")
    print(f"elapsed {time.time() - t0:.1f}s")


if __name__ == "__main__":
    main()
