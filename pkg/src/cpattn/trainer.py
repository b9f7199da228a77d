"""Single-threaded toy trainer with per-epoch patch redistribution."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import (
    EmbeddingBatch,
    ModelConfig,
    ToyViT,
    importance_weights,
    init_toy_vit,
    logit_gradients,
    loss_and_grads,
    predict,
)
from .graph import CPGraph
from .mask import AttentionMask, PatchAssignment, assign_patches, build_mask
from .redistribution import redistribute
from .task import SyntheticTask


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    seed: int = 0
    redistribute: bool = True
    shuffle_init: bool = False
    # how per-example alpha is pooled over an epoch: "abs" (mean |alpha|) or "signed"
    alpha_pooling: str = "abs"


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr, self.beta1, self.beta2, self.eps, self.wd = lr, beta1, beta2, eps, weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            if self.wd:
                update = update + self.wd * params[k]
            params[k] -= self.lr * update


@dataclass
class TrainerState:
    model: ToyViT
    graph: CPGraph
    assignment: PatchAssignment
    mask: AttentionMask
    optimizer: Adam
    rng: np.random.Generator
    epoch: int = 0
    alpha_sum: np.ndarray | None = None
    alpha_count: int = 0
    history: list[dict] = field(default_factory=list)

    @property
    def mean_alpha(self) -> np.ndarray:
        P = self.assignment.patch_count
        if self.alpha_sum is None or self.alpha_count == 0:
            return np.zeros(P)
        return self.alpha_sum / self.alpha_count

    def core_patches(self) -> set[int]:
        return {p for node in range(self.graph.m) for p in self.assignment.patches_of_node[node]}


def init_trainer(
    graph: CPGraph, task: SyntheticTask, model_cfg: ModelConfig, cfg: TrainConfig
) -> TrainerState:
    P = task.patch_count
    model = init_toy_vit(model_cfg, cfg.seed)
    order = None
    if cfg.shuffle_init:
        order = np.random.default_rng(0).permutation(P)
    assignment = assign_patches(P, graph, order)
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 1])
    return TrainerState(model, graph, assignment, build_mask(assignment, graph), opt, rng)


def train_epoch(
    state: TrainerState, task: SyntheticTask, batch_size: int, alpha_pooling: str = "abs"
) -> float:
    """One pass over the training set; accumulates per-example importance.

    Importance is taken w.r.t. the ground-truth logit with the parameters the
    batch is trained on, before the optimizer step.
    """
    if alpha_pooling not in ("abs", "signed"):
        raise ValueError(f"unknown alpha pooling {alpha_pooling!r}")
    x, y = task.x_train, task.y_train
    perm = state.rng.permutation(len(y))
    P = task.patch_count
    state.alpha_sum = np.zeros(P)
    state.alpha_count = 0
    total = 0.0
    for start in range(0, len(y), batch_size):
        idx = perm[start : start + batch_size]
        xb, yb = x[idx], y[idx]
        model = state.model
        emb = xb @ model.params["patch_embed.weight"] + model.params["patch_embed.bias"]
        g = logit_gradients(model, EmbeddingBatch(emb, model.params["cls_token"]), state.mask, yb)
        alpha = importance_weights(g)
        if alpha_pooling == "abs":
            alpha = np.abs(alpha)
        state.alpha_sum += alpha.sum(axis=0)
        state.alpha_count += len(idx)
        loss, grads, _ = loss_and_grads(model, xb, yb, state.mask)
        state.optimizer.step(model.params, grads)
        total += loss * len(idx)
    return total / len(y)


def epoch_step(state: TrainerState) -> TrainerState:
    """Re-assign patches from the epoch's mean importance and rebuild the mask.

    An importance vector with no spread carries no ranking, so the assignment is kept.
    """
    alpha = state.mean_alpha
    if alpha.size == 0 or np.all(alpha == alpha[0]):
        return state
    plan = redistribute(alpha, state.graph, state.assignment.patch_count, state.assignment)
    state.assignment = assign_patches(state.assignment.patch_count, state.graph, plan.new_order)
    state.mask = build_mask(state.assignment, state.graph)
    return state


def accuracy(model: ToyViT, x: np.ndarray, y: np.ndarray, mask: AttentionMask) -> float:
    return float((predict(model, x, mask) == y).mean())


def train_toy(
    graph: CPGraph,
    task: SyntheticTask,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    trace_path: str | Path | None = None,
) -> TrainerState:
    state = init_trainer(graph, task, model_cfg, cfg)
    trace = open(trace_path, "w") if trace_path is not None else None
    try:
        for epoch in range(cfg.epochs):
            loss = train_epoch(state, task, cfg.batch_size, cfg.alpha_pooling)
            alpha = state.mean_alpha
            if cfg.redistribute:
                epoch_step(state)
            state.epoch = epoch + 1
            top5 = sorted(alpha.tolist(), reverse=True)[:5]
            record = {
                "epoch": state.epoch,
                "new_order": state.assignment.order,
                "core_patch_set": sorted(state.core_patches()),
                "mean_alpha_top5": float(np.mean(top5)),
                "loss": float(loss),
            }
            state.history.append(record)
            if trace is not None:
                trace.write(json.dumps(record, separators=(",", ":")) + "\n")
    finally:
        if trace is not None:
            trace.close()
    return state
