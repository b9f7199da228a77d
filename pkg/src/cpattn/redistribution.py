"""Importance-ranked patch redistribution onto core nodes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .graph import CPGraph
from .mask import PatchAssignment, assign_patches, block_sizes


@dataclass(frozen=True)
class RedistributionPlan:
    old_assignment: PatchAssignment | None
    alpha: np.ndarray
    new_order: tuple[int, ...]
    core_capacity: int
    core_patches: frozenset[int]


def core_capacity(graph: CPGraph, patch_count: int) -> int:
    """Patches held by nodes 0..m-1 under the floor rule."""
    return sum(block_sizes(patch_count, graph.n)[: graph.m])


def rank_patches(alpha: np.ndarray) -> np.ndarray:
    """Patch indices by alpha descending, ties by ascending index."""
    a = np.asarray(alpha, dtype=np.float64)
    return np.lexsort((np.arange(a.size), -a))


def core_fill_order(graph: CPGraph) -> list[int]:
    """Core nodes by degree descending, ties by ascending node index."""
    deg = graph.degrees[: graph.m]
    return [int(i) for i in np.lexsort((np.arange(graph.m), -deg))]


def redistribute(
    alpha, graph: CPGraph, patch_count: int, old_assignment: PatchAssignment | None = None
) -> RedistributionPlan:
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (patch_count,):
        raise ParameterError(f"alpha has length {a.size}, expected {patch_count}")
    if np.isnan(a).any():
        raise ParameterError("alpha contains NaN")
    sizes = block_sizes(patch_count, graph.n)
    ranked = [int(p) for p in rank_patches(a)]
    blocks: list[list[int]] = [[] for _ in range(graph.n)]
    pos = 0
    for node in core_fill_order(graph):
        blocks[node] = ranked[pos : pos + sizes[node]]
        pos += sizes[node]
    K = pos
    for node in range(graph.m, graph.n):
        blocks[node] = ranked[pos : pos + sizes[node]]
        pos += sizes[node]
    new_order = tuple(p for b in blocks for p in b)
    return RedistributionPlan(old_assignment, a.copy(), new_order, K, frozenset(ranked[:K]))


def apply_plan(plan: RedistributionPlan, graph: CPGraph) -> PatchAssignment:
    return assign_patches(len(plan.new_order), graph, plan.new_order)
