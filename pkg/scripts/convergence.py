"""Track where the informative patches sit across epochs of redistribution."""
import argparse

from cpattn.attention import ModelConfig
from cpattn.graph import generate_verified_cp_graph
from cpattn.task import make_synthetic_task
from cpattn.trainer import TrainConfig, accuracy, train_toy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--nodes", type=int, default=8)
    ap.add_argument("--core", type=int, default=2)
    ap.add_argument("--informative", default="0,5")
    ap.add_argument("--noise", type=float, default=1.0)
    ap.add_argument("--pooling", choices=("abs", "signed"), default="abs")
    args = ap.parse_args()

    informative = {int(x) for x in args.informative.split(",")}
    hits = 0
    for seed in range(args.seeds):
        g = generate_verified_cp_graph(args.nodes, args.core, seed=seed)
        task = make_synthetic_task(4, 16, sorted(informative), args.noise, seed)
        cfg = TrainConfig(epochs=args.epochs, seed=seed, alpha_pooling=args.pooling)
        state = train_toy(g, task, ModelConfig(), cfg)
        first = next((h["epoch"] for h in state.history if informative <= set(h["core_patch_set"])), None)
        ok = informative <= state.core_patches()
        hits += ok
        acc = accuracy(state.model, task.x_test, task.y_test, state.mask)
        print(f"seed {seed}: core={sorted(state.core_patches())} first_hit_epoch={first} final={'yes' if ok else 'no'} acc={acc:.3f}")
    print(f"{hits}/{args.seeds} runs end with {sorted(informative)} on core nodes")


if __name__ == "__main__":
    main()
