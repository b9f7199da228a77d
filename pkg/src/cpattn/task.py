"""Synthetic patch-classification task where only chosen patches carry the label."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class SyntheticTask:
    x_train: np.ndarray  # (N, P, D)
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    informative: tuple[int, ...]
    classes: int
    prototypes: np.ndarray  # (classes, |informative|, D)

    @property
    def patch_count(self) -> int:
        return self.x_train.shape[1]

    @property
    def patch_dim(self) -> int:
        return self.x_train.shape[2]


def make_synthetic_task(
    classes: int,
    patch_count: int,
    informative_set: Iterable[int],
    noise: float,
    seed: int,
    patch_dim: int = 8,
    n_train: int = 512,
    n_test: int = 256,
    shuffle_labels: bool = False,
) -> SyntheticTask:
    """Every patch gets i.i.d. N(0, noise^2) noise; informative patches add a class prototype.

    Prototypes are unit-norm random directions, one per (class, informative patch),
    so the label is linearly decodable from the informative patches alone.
    """
    informative = tuple(sorted(set(int(k) for k in informative_set)))
    if classes < 2:
        raise ParameterError("need at least two classes")
    if not informative:
        raise ParameterError("informative_set must be non-empty")
    if informative[0] < 0 or informative[-1] >= patch_count:
        raise ParameterError("informative patches must index 0..patch_count-1")
    if noise < 0:
        raise ParameterError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    protos = rng.normal(size=(classes, len(informative), patch_dim))
    protos /= np.linalg.norm(protos, axis=-1, keepdims=True)
    protos *= np.sqrt(patch_dim)  # same scale as a unit-variance noise patch

    def draw(count: int) -> tuple[np.ndarray, np.ndarray]:
        y = rng.integers(0, classes, size=count)
        x = noise * rng.normal(size=(count, patch_count, patch_dim))
        x[:, list(informative)] += protos[y]
        return x, y

    x_train, y_train = draw(n_train)
    x_test, y_test = draw(n_test)
    if shuffle_labels:
        y_train = rng.permutation(y_train)
        y_test = rng.permutation(y_test)
    return SyntheticTask(x_train, y_train, x_test, y_test, informative, classes, protos)
