"""``cpattn`` command line."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import attention, graph as graphs, mask as masks
from .errors import CPAttnError, CPGenerationError
from .sweep import SweepConfig, emit_heatmaps, run_sweep
from .task import make_synthetic_task
from .trainer import TrainConfig, accuracy, train_toy

EXIT_OK, EXIT_PARAM, EXIT_PARTIAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _order(arg: str | None) -> tuple[int, ...] | None:
    if arg is None:
        return None
    p = Path(arg)
    return _ints(p.read_text().strip() if p.exists() else arg)


def cmd_generate(args) -> int:
    if args.raw:
        g = graphs.generate_cp_graph(args.nodes, args.core, args.thresholds, args.seed)
    else:
        g = graphs.generate_verified_cp_graph(args.nodes, args.core, args.thresholds, args.seed)
    graphs.save_graph(g, args.out)
    return EXIT_OK


def cmd_measure(args) -> int:
    ip = graphs.independent_probabilities(graphs.load_graph(args.graph))
    print("i_cc,i_cp,i_pp,r_cc,r_cp,r_pp")
    print(",".join(repr(v) for v in ip.as_tuple()))
    return EXIT_OK


def cmd_detect(args) -> int:
    g = graphs.load_graph(args.graph)
    core, score = graphs.detect_core_periphery(g.adjacency, args.restarts, args.seed)
    print("node,label")
    for i, c in enumerate(core):
        print(f"{i},{'core' if c else 'periphery'}")
    print(f"# score={score!r}")
    return EXIT_OK


def cmd_mask(args) -> int:
    g = graphs.load_graph(args.graph)
    m = masks.mask_for_graph(g, args.patches, _order(args.order))
    out = Path(args.out)
    if out.suffix in (".bin", ".cpmask"):
        masks.write_bitset(m, out)
    else:
        masks.write_pbm(m, out)
    if args.bitset:
        masks.write_bitset(m, args.bitset)
    print(f"connection_ratio,{100 * masks.connection_ratio(m):.2f}%")
    return EXIT_OK


def cmd_synth_input(args) -> int:
    task = make_synthetic_task(args.classes, args.patches, args.informative, args.noise, args.seed, args.patch_dim)
    attention.write_tensor(task.x_test[args.index], args.out)
    print(f"label,{int(task.y_test[args.index])}")
    return EXIT_OK


def cmd_importance(args) -> int:
    model = attention.load_checkpoint(args.model)
    g = graphs.load_graph(args.graph)
    raw = attention.read_tensor(args.input)
    m = masks.mask_for_graph(g, model.config.patch_count, _order(args.order))
    batch = attention.embed(model, raw)
    cls = args.class_index
    if cls is None:
        cls = int(np.argmax(attention.toy_vit_forward(batch, model, m)))
    alpha = attention.importance_weights(attention.patch_gradients(model, batch, m, cls))
    print(f"# class={cls}")
    print("patch,alpha")
    for k, a in enumerate(alpha):
        print(f"{k},{a!r}")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    g = graphs.load_graph(args.graph)
    task = make_synthetic_task(args.classes, args.patches, args.informative, args.noise, args.seed, args.patch_dim)
    cfg = attention.ModelConfig(patch_count=args.patches, patch_dim=args.patch_dim, classes=args.classes)
    tcfg = TrainConfig(
        epochs=args.epochs,
        seed=args.seed,
        shuffle_init=args.shuffle_init,
        alpha_pooling=args.alpha_pooling,
        redistribute=not args.no_redistribute,
    )
    state = train_toy(g, task, cfg, tcfg, args.trace)
    if args.save:
        attention.save_checkpoint(state.model, args.save)
    print(f"test_accuracy,{accuracy(state.model, task.x_test, task.y_test, state.mask)!r}")
    print(f"core_patches,{' '.join(str(p) for p in sorted(state.core_patches()))}")
    print(f"order,{','.join(str(p) for p in state.assignment.order)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = SweepConfig(
        max_nodes=args.max_nodes,
        stride=args.stride,
        samples_per_point=args.samples,
        thresholds=args.thresholds,
        patch_count=args.patches,
        seed=args.seed,
        train=args.train,
        include_baseline=True if args.baseline else None,
        epochs=args.epochs,
        noise=args.noise,
        workers=args.workers,
    )
    records = run_sweep(config)
    emit_heatmaps(records, args.out)
    failed = sum(r.status == "failed" for r in records)
    print(f"records,{len(records)}")
    print(f"failed,{failed}")
    return EXIT_PARTIAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cpattn", description="Core-periphery guided sparse attention toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", help="generate a CP graph as JSON")
    s.add_argument("--nodes", type=int, required=True)
    s.add_argument("--core", type=int, required=True)
    s.add_argument("--thresholds", type=_floats, default=graphs.DEFAULT_THRESHOLDS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--raw", action="store_true", help="skip the CP check and seed retries")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("measure", help="print independent probabilities as CSV")
    s.add_argument("--graph", required=True)
    s.set_defaults(func=cmd_measure)

    s = sub.add_parser("detect", help="two-block core/periphery detection")
    s.add_argument("--graph", required=True)
    s.add_argument("--restarts", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("mask", help="export the attention mask (P1 bitmap or CPMASK01 bitset)")
    s.add_argument("--graph", required=True)
    s.add_argument("--patches", type=int, required=True)
    s.add_argument("--order", help="patch order: comma list or file holding one")
    s.add_argument("--out", required=True)
    s.add_argument("--bitset", help="also write the binary bitset here")
    s.set_defaults(func=cmd_mask)

    def task_args(s):
        s.add_argument("--classes", type=int, default=4)
        s.add_argument("--patches", type=int, default=16)
        s.add_argument("--patch-dim", type=int, default=8)
        s.add_argument("--informative", type=_ints, default=(0, 5))
        s.add_argument("--noise", type=float, default=1.0)
        s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("synth-input", help="write one synthetic test example as a raw f64 tensor")
    task_args(s)
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_input)

    s = sub.add_parser("importance", help="print per-patch importance weights as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--order")
    s.add_argument("--class", dest="class_index", type=int, help="default: argmax class")
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("train-toy", help="train the toy model with per-epoch redistribution")
    s.add_argument("--graph", required=True)
    s.add_argument("--epochs", type=int, default=30)
    task_args(s)
    s.add_argument("--trace")
    s.add_argument("--save", help="checkpoint path (manifest written to <path>.json)")
    s.add_argument("--shuffle-init", action="store_true")
    s.add_argument("--alpha-pooling", choices=("abs", "signed"), default="abs")
    s.add_argument("--no-redistribute", action="store_true")
    s.set_defaults(func=cmd_train_toy)

    s = sub.add_parser("sweep", help="sweep the (n, m) grid; writes CSV and SVG heatmaps")
    s.add_argument("--max-nodes", type=int, default=16)
    s.add_argument("--stride", type=int, default=4)
    s.add_argument("--samples", type=int, default=5)
    s.add_argument("--patches", type=int, default=16)
    s.add_argument("--thresholds", type=_floats, default=graphs.DEFAULT_THRESHOLDS)
    s.add_argument("--train", action="store_true")
    s.add_argument("--baseline", action="store_true", help="emit complete-graph diagonal cells")
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--noise", type=float, default=1.0)
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CPAttnError, ValueError) as exc:
        print(f"cpattn {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARAM if not isinstance(exc, CPGenerationError) else EXIT_PARTIAL
    except OSError as exc:
        print(f"cpattn {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
