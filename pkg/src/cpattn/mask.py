"""Patch-to-node assignment and the attention mask derived from a graph."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConsistencyError, ParameterError
from .graph import CPGraph

BITSET_MAGIC = b"CPMASK01"


def block_sizes(patch_count: int, n: int) -> list[int]:
    """Patches per node: the first ``P mod n`` nodes hold one extra."""
    if n < 1 or patch_count < n:
        raise ParameterError(f"need patch_count >= n >= 1, got P={patch_count}, n={n}")
    base, extra = divmod(patch_count, n)
    return [base + 1 if i < extra else base for i in range(n)]


@dataclass(frozen=True)
class PatchAssignment:
    patch_count: int
    node_of_patch: np.ndarray
    patches_of_node: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return len(self.patches_of_node)

    @property
    def order(self) -> list[int]:
        """The patch order that reproduces this assignment."""
        return [p for block in self.patches_of_node for p in block]

    def counts(self) -> list[int]:
        return [len(b) for b in self.patches_of_node]


def assign_patches(
    patch_count: int, graph: CPGraph | int, order: Sequence[int] | None = None
) -> PatchAssignment:
    """Deal consecutive runs of ``order`` to nodes 0..n-1 under the floor rule."""
    n = graph if isinstance(graph, int) else graph.n
    sizes = block_sizes(patch_count, n)
    if order is None:
        order_arr = np.arange(patch_count)
    else:
        order_arr = np.asarray(order, dtype=np.int64)
        if order_arr.shape != (patch_count,) or not np.array_equal(
            np.sort(order_arr), np.arange(patch_count)
        ):
            raise ParameterError("order must be a permutation of 0..P-1")
    node_of_patch = np.empty(patch_count, dtype=np.int64)
    blocks = []
    start = 0
    for node, size in enumerate(sizes):
        chunk = order_arr[start : start + size]
        node_of_patch[chunk] = node
        blocks.append(tuple(int(p) for p in chunk))
        start += size
    node_of_patch.setflags(write=False)
    return PatchAssignment(patch_count, node_of_patch, tuple(blocks))


@dataclass(frozen=True)
class AttentionMask:
    """(P+1) x (P+1) boolean gate; the classification token sits at index P."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 2:
            raise ParameterError(f"mask must be square with size >= 2, got {b.shape}")
        b = np.ascontiguousarray(b)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def size(self) -> int:
        return self.bits.shape[0]

    @property
    def cls_index(self) -> int:
        return self.size - 1

    @property
    def patch_count(self) -> int:
        return self.size - 1

    def is_valid(self) -> bool:
        """Symmetric, CLS row/column all ones, unit diagonal."""
        b = self.bits
        return bool(
            np.array_equal(b, b.T) and b[-1].all() and b[:, -1].all() and b.diagonal().all()
        )

    @classmethod
    def full(cls, patch_count: int) -> "AttentionMask":
        return cls(np.ones((patch_count + 1, patch_count + 1), dtype=bool))


def build_mask(assignment: PatchAssignment, graph: CPGraph) -> AttentionMask:
    node = assignment.node_of_patch
    if assignment.n != graph.n or node.size and (node.min() < 0 or node.max() >= graph.n):
        raise ConsistencyError(
            f"assignment over {assignment.n} nodes does not match graph with n={graph.n}"
        )
    P = assignment.patch_count
    bits = np.ones((P + 1, P + 1), dtype=bool)
    # a node's neighbourhood includes itself: patches sharing a node always attend
    bits[:P, :P] = (graph.adjacency[np.ix_(node, node)] != 0) | (node[:, None] == node[None, :])
    return AttentionMask(bits)


def mask_for_graph(
    graph: CPGraph, patch_count: int, order: Sequence[int] | None = None
) -> AttentionMask:
    return build_mask(assign_patches(patch_count, graph, order), graph)


def connection_ratio(mask: AttentionMask | np.ndarray) -> float:
    bits = mask.bits if isinstance(mask, AttentionMask) else np.asarray(mask, dtype=bool)
    return int(np.count_nonzero(bits)) / bits.size


# -- export -----------------------------------------------------------------


def write_pbm(mask: AttentionMask, path: str | Path) -> None:
    """Plain (P1) portable bitmap, one text row per mask row; 1 = attended."""
    rows = ["P1", f"{mask.size} {mask.size}"]
    rows += [" ".join("1" if v else "0" for v in row) for row in mask.bits]
    Path(path).write_text("\n".join(rows) + "\n")


def read_pbm(path: str | Path) -> AttentionMask:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ParameterError(f"{path}: not a P1 bitmap")
    w, h = int(tokens[1]), int(tokens[2])
    flat = "".join(tokens[3:])
    if len(flat) != w * h:
        raise ParameterError(f"{path}: expected {w * h} pixels, found {len(flat)}")
    return AttentionMask(np.frombuffer(flat.encode(), dtype=np.uint8).reshape(h, w) == ord("1"))


def mask_to_bytes(mask: AttentionMask) -> bytes:
    """Magic, little-endian u32 side length, then row-major bits packed MSB first."""
    return BITSET_MAGIC + struct.pack("<I", mask.size) + np.packbits(mask.bits.ravel()).tobytes()


def mask_from_bytes(data: bytes) -> AttentionMask:
    if data[:8] != BITSET_MAGIC:
        raise ParameterError("bad mask magic")
    (size,) = struct.unpack("<I", data[8:12])
    payload = np.frombuffer(data[12:], dtype=np.uint8)
    bits = np.unpackbits(payload, count=size * size)
    if bits.size != size * size:
        raise ParameterError("truncated mask payload")
    return AttentionMask(bits.reshape(size, size).astype(bool))


def write_bitset(mask: AttentionMask, path: str | Path) -> None:
    Path(path).write_bytes(mask_to_bytes(mask))


def read_bitset(path: str | Path) -> AttentionMask:
    return mask_from_bytes(Path(path).read_bytes())
