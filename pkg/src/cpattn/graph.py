"""Core-periphery graphs: generation, block measures, detection and the (n, m) grid."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CPGenerationError, ParameterError

DEFAULT_THRESHOLDS = (0.1, 0.45, 0.9)
DEFAULT_SAMPLES = 5
MAX_CP_RETRIES = 16


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CPGraph:
    """Undirected labeled graph. Nodes ``0..m-1`` are core, the rest periphery."""

    n: int
    m: int
    adjacency: np.ndarray
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS
    seed: int = 0
    kind: str = "cp"

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.shape != (self.n, self.n):
            raise ParameterError(f"adjacency shape {a.shape} does not match n={self.n}")
        if not 1 <= self.m <= self.n:
            raise ParameterError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        a = (a != 0).astype(np.uint8)
        if not np.array_equal(a, a.T):
            raise ParameterError("adjacency must be symmetric")
        if a.diagonal().any():
            raise ParameterError("adjacency must have a zero diagonal")
        object.__setattr__(self, "adjacency", _frozen(a))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))

    @property
    def is_core(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[: self.m] = True
        return mask

    @property
    def labels(self) -> list[str]:
        return ["core" if i < self.m else "periphery" for i in range(self.n)]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    def with_labels(self, m: int) -> "CPGraph":
        return CPGraph(self.n, m, self.adjacency, self.thresholds, self.seed, self.kind)

    # -- serialization -------------------------------------------------
    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "thresholds": list(self.thresholds),
            "seed": self.seed,
            "kind": self.kind,
            "edges": [list(e) for e in self.edges()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CPGraph":
        try:
            n, m = int(obj["n"]), int(obj["m"])
            thresholds = tuple(float(t) for t in obj["thresholds"])
            seed = int(obj["seed"])
            edges = obj["edges"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed graph file: {exc}") from exc
        if len(thresholds) != 3:
            raise ParameterError("thresholds must have three entries")
        adj = np.zeros((n, n), dtype=np.uint8)
        for e in edges:
            i, j = int(e[0]), int(e[1])
            if not 0 <= i < j < n:
                raise ParameterError(f"edge {e} violates 0 <= i < j < n")
            adj[i, j] = adj[j, i] = 1
        return cls(n, m, adj, thresholds, seed, obj.get("kind", "cp"))


def save_graph(graph: CPGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph.to_json(), separators=(",", ":")) + "\n")


def load_graph(path: str | Path) -> CPGraph:
    return CPGraph.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class IPMeasures:
    i_cc: float
    i_cp: float
    i_pp: float
    r_cc: float
    r_cp: float
    r_pp: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.i_cc, self.i_cp, self.i_pp, self.r_cc, self.r_cp, self.r_pp)


@dataclass(frozen=True, order=True)
class SearchPoint:
    n: int
    m: int
    sample_index: int = 0


# ---------------------------------------------------------------------------
# generation


def _check_thresholds(thresholds: Sequence[float]) -> tuple[float, float, float]:
    if len(thresholds) != 3:
        raise ParameterError("thresholds must be a (p_cc, p_cp, p_pp) triple")
    t = tuple(float(x) for x in thresholds)
    for x in t:
        if not 0.0 <= x <= 1.0:
            raise ParameterError(f"threshold {x} outside [0, 1]")
    return t  # type: ignore[return-value]


def pair_draws(n: int, seed: int) -> np.ndarray:
    """Symmetric n x n matrix of uniform [0, 1) draws, one per unordered pair.

    The stream depends only on (n, seed), so edge sets are monotone in the thresholds.
    """
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    upper = np.triu(u, k=1)
    return upper + upper.T


def block_thresholds(n: int, m: int, thresholds: Sequence[float]) -> np.ndarray:
    p_cc, p_cp, p_pp = thresholds
    core = np.arange(n) < m
    t = np.full((n, n), p_pp)
    t[np.ix_(core, core)] = p_cc
    t[np.ix_(core, ~core)] = p_cp
    t[np.ix_(~core, core)] = p_cp
    return t


def generate_cp_graph(
    n: int, m: int, thresholds: Sequence[float] = DEFAULT_THRESHOLDS, seed: int = 0
) -> CPGraph:
    """Wire each pair independently: edge iff its uniform draw >= the block threshold."""
    if n < 2 or not 1 <= m <= n:
        raise ParameterError(f"need 2 <= n and 1 <= m <= n, got n={n}, m={m}")
    t = _check_thresholds(thresholds)
    adj = pair_draws(n, seed) >= block_thresholds(n, m, t)
    np.fill_diagonal(adj, False)
    return CPGraph(n, m, adj.astype(np.uint8), t, int(seed), "cp")


def generate_verified_cp_graph(
    n: int,
    m: int,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    seed: int = 0,
    retries: int = MAX_CP_RETRIES,
) -> CPGraph:
    """Generate with ``seed + offset`` until the sample passes :func:`is_cp`."""
    for offset in range(retries):
        g = generate_cp_graph(n, m, thresholds, seed + offset)
        if is_cp(independent_probabilities(g)):
            return g
    raise CPGenerationError(
        f"no CP sample for n={n}, m={m}, thresholds={tuple(thresholds)} after {retries} seeds"
    )


def generate_baseline(kind: str, n: int, seed: int = 0, **params) -> CPGraph:
    """Classic generators used as non-CP references.

    ``kind`` is ``"complete"``, ``"erdos_renyi"`` (param ``p``) or
    ``"watts_strogatz"`` (params ``k``, ``beta``).
    """
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    half = (n + 1) // 2
    if kind == "complete":
        adj = np.ones((n, n), dtype=np.uint8)
        np.fill_diagonal(adj, 0)
        return CPGraph(n, n, adj, (0.0, 0.0, 0.0), int(seed), "complete")
    if kind == "erdos_renyi":
        p = float(params.get("p", 0.5))
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"p must be in [0, 1], got {p}")
        # same per-pair stream as the CP generator, one shared threshold
        t = 1.0 - p
        adj = pair_draws(n, seed) >= t
        np.fill_diagonal(adj, False)
        return CPGraph(n, half, adj.astype(np.uint8), (t, t, t), int(seed), "erdos_renyi")
    if kind == "watts_strogatz":
        k = int(params.get("k", 2))
        beta = float(params.get("beta", 0.0))
        if k % 2 or not 0 <= k < n:
            raise ParameterError(f"k must be even with 0 <= k < n, got k={k}, n={n}")
        if not 0.0 <= beta <= 1.0:
            raise ParameterError(f"beta must be in [0, 1], got {beta}")
        adj = _watts_strogatz(n, k, beta, np.random.default_rng(seed))
        return CPGraph(n, half, adj, (0.0, 0.0, 0.0), int(seed), "watts_strogatz")
    raise ParameterError(f"unknown baseline kind {kind!r}")


def _watts_strogatz(n: int, k: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    adj = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        for d in range(1, k // 2 + 1):
            j = (i + d) % n
            adj[i, j] = adj[j, i] = 1
    if beta == 0.0:
        return adj
    # rewire each lattice edge (i, i+d) with probability beta, avoiding loops and duplicates
    for d in range(1, k // 2 + 1):
        for i in range(n):
            j = (i + d) % n
            if rng.random() >= beta or not adj[i, j]:
                continue
            free = np.flatnonzero(adj[i] == 0)
            free = free[free != i]
            if free.size == 0:
                continue
            w = int(rng.choice(free))
            adj[i, j] = adj[j, i] = 0
            adj[i, w] = adj[w, i] = 1
    return adj


# ---------------------------------------------------------------------------
# measures


def block_counts(graph: CPGraph) -> dict[str, tuple[int, int]]:
    """(edges, pairs) per block, diagonal excluded."""
    n, m = graph.n, graph.m
    a = graph.adjacency.astype(np.int64)
    e_cc = int(a[:m, :m].sum()) // 2
    e_cp = int(a[:m, m:].sum())
    e_pp = int(a[m:, m:].sum()) // 2
    q = n - m
    return {
        "cc": (e_cc, m * (m - 1) // 2),
        "cp": (e_cp, m * q),
        "pp": (e_pp, q * (q - 1) // 2),
    }


def independent_probabilities(graph: CPGraph) -> IPMeasures:
    counts = block_counts(graph)
    raw = [e / p if p else 0.0 for e, p in (counts["cc"], counts["cp"], counts["pp"])]
    total = sum(raw)
    norm = [x / total for x in raw] if total > 0 else [0.0, 0.0, 0.0]
    return IPMeasures(*raw, *norm)


def is_cp(measures: IPMeasures) -> bool:
    return measures.i_cc > measures.i_cp > measures.i_pp


# ---------------------------------------------------------------------------
# Borgatti-Everett detection


def _pattern_stats(adj: np.ndarray, core: np.ndarray) -> tuple[int, int]:
    """(pairs touching a core node, edges touching a core node) for one labeling."""
    n = adj.shape[0]
    c = int(core.sum())
    q = n - c
    pairs = n * (n - 1) // 2 - q * (q - 1) // 2
    per = ~core
    e_pp = int(adj[np.ix_(per, per)].sum()) // 2
    edges = int(adj.sum()) // 2
    return pairs, edges - e_pp


def _be_correlation(total_pairs: int, total_edges: int, pattern_pairs: int, hits: int) -> float:
    """Pearson correlation of binary pair vectors from integer sufficient statistics."""
    N, E, S, H = total_pairs, total_edges, pattern_pairs, hits
    num = N * H - E * S
    den_a = N * E - E * E
    den_p = N * S - S * S
    if den_a == 0 or den_p == 0:
        return float("-inf")
    den = den_a * den_p
    if num > 0 and num * num == den:
        return 1.0
    if num < 0 and num * num == den:
        return -1.0
    return num / math.sqrt(den)


def be_score(adjacency: np.ndarray, core: np.ndarray) -> float:
    """Correlation between the adjacency and the ideal pattern for ``core`` labels."""
    adj = (np.asarray(adjacency) != 0).astype(np.int64)
    core = np.asarray(core, dtype=bool)
    n = adj.shape[0]
    S, H = _pattern_stats(adj, core)
    return _be_correlation(n * (n - 1) // 2, int(adj.sum()) // 2, S, H)


def _hill_climb(adj: np.ndarray, core: np.ndarray) -> tuple[np.ndarray, float]:
    n = adj.shape[0]
    N = n * (n - 1) // 2
    E = int(adj.sum()) // 2
    core = core.copy()
    S, H = _pattern_stats(adj, core)
    score = _be_correlation(N, E, S, H)
    while True:
        per = ~core
        c = int(core.sum())
        to_per = adj @ per.astype(np.int64)  # neighbours of each node in the periphery
        best, best_i, best_sh = score, -1, (S, H)
        for i in range(n):
            if core[i]:
                # i leaves the core: its pairs with periphery nodes stop touching a core
                q_after = n - c + 1
                S2 = N - q_after * (q_after - 1) // 2
                H2 = H - int(to_per[i])
            else:
                q_after = n - c - 1
                S2 = N - q_after * (q_after - 1) // 2
                H2 = H + int(to_per[i])
            s2 = _be_correlation(N, E, S2, H2)
            if s2 > best + 1e-15:
                best, best_i, best_sh = s2, i, (S2, H2)
        if best_i < 0:
            return core, score
        core[best_i] = not core[best_i]
        score = best
        S, H = best_sh


def detect_core_periphery(
    adjacency: np.ndarray, restarts: int = 8, seed: int = 0
) -> tuple[np.ndarray, float]:
    """Core/periphery labels maximizing the two-block pattern correlation.

    Steepest-ascent single-node flips from ``restarts`` random labelings; the
    best local optimum wins (first one on ties). Returns a boolean core mask
    and its correlation.
    """
    adj = (np.asarray(adjacency) != 0).astype(np.int64)
    n = adj.shape[0]
    if adj.shape != (n, n) or not np.array_equal(adj, adj.T) or adj.diagonal().any():
        raise ParameterError("adjacency must be square, symmetric, zero diagonal")
    if n < 3:
        raise ParameterError("detection needs n >= 3")
    off = adj[np.triu_indices(n, k=1)]
    if off.all():
        return np.ones(n, dtype=bool), 0.0
    if not off.any():
        return np.zeros(n, dtype=bool), 0.0
    rng = np.random.default_rng(seed)
    best_core, best_score = None, float("-inf")
    for _ in range(restarts):
        start = rng.random(n) < 0.5
        core, score = _hill_climb(adj, start)
        if score > best_score:
            best_core, best_score = core, score
    assert best_core is not None
    return best_core, float(best_score)


def exhaustive_core_periphery(adjacency: np.ndarray) -> tuple[np.ndarray, float]:
    """Brute force over all 2^n labelings. Reference for small n only."""
    adj = (np.asarray(adjacency) != 0).astype(np.int64)
    n = adj.shape[0]
    best_core, best = np.zeros(n, dtype=bool), float("-inf")
    for code in range(1 << n):
        core = np.array([(code >> i) & 1 for i in range(n)], dtype=bool)
        s = be_score(adj, core)
        if s > best:
            best_core, best = core, s
    return best_core, best


# ---------------------------------------------------------------------------
# search space


def grid_pairs(max_nodes: int, stride: int) -> list[tuple[int, int]]:
    if max_nodes < 2 or stride < 1:
        raise ParameterError("need max_nodes >= 2 and stride >= 1")
    return [
        (n, m)
        for n in range(stride, max_nodes + 1, stride)
        for m in range(stride, n, stride)
    ]


def enumerate_search_space(
    max_nodes: int, stride: int, samples: int = DEFAULT_SAMPLES
) -> list[SearchPoint]:
    """All (n, m, sample) points with n, m multiples of ``stride`` and m < n <= max_nodes."""
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    return [SearchPoint(n, m, s) for n, m in grid_pairs(max_nodes, stride) for s in range(samples)]


__all__ = [
    "CPGraph",
    "IPMeasures",
    "SearchPoint",
    "DEFAULT_THRESHOLDS",
    "generate_cp_graph",
    "generate_verified_cp_graph",
    "generate_baseline",
    "independent_probabilities",
    "is_cp",
    "be_score",
    "detect_core_periphery",
    "exhaustive_core_periphery",
    "enumerate_search_space",
    "grid_pairs",
    "save_graph",
    "load_graph",
    "block_counts",
    "pair_draws",
]
