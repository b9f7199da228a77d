"""Grid sweep over (total nodes, core nodes), CSV serialization and SVG heatmaps."""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attention import ModelConfig
from .errors import CPGenerationError, ParameterError
from .graph import (
    DEFAULT_THRESHOLDS,
    SearchPoint,
    enumerate_search_space,
    generate_baseline,
    generate_verified_cp_graph,
    independent_probabilities,
    is_cp,
)
from .mask import connection_ratio, mask_for_graph
from .task import make_synthetic_task
from .trainer import TrainConfig, accuracy, train_toy

CSV_HEADER = ["n", "m", "sample", "cr", "r_cc", "r_cp", "r_pp", "is_cp", "toy_acc", "acc_delta", "status"]
HEATMAP_METRICS = {
    "toy_acc": "toy accuracy (proxy)",
    "acc_delta": "toy accuracy delta vs complete graph (proxy)",
    "cr": "connection ratio",
}


@dataclass(frozen=True)
class SweepRecord:
    n: int
    m: int
    sample_index: int
    cr: float | None
    r_cc: float | None
    r_cp: float | None
    r_pp: float | None
    is_cp: bool
    toy_accuracy: float | None = None
    accuracy_delta: float | None = None
    status: str = "ok"  # ok | failed | baseline

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.n, self.m, self.sample_index)


@dataclass(frozen=True)
class SweepConfig:
    max_nodes: int = 16
    stride: int = 4
    samples_per_point: int = 5
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS
    patch_count: int = 16
    seed: int = 0
    train: bool = False
    include_baseline: bool | None = None  # defaults to ``train``
    classes: int = 4
    informative: tuple[int, ...] = (0, 5)
    noise: float = 1.0
    epochs: int = 30
    patch_dim: int = 8
    model: ModelConfig | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.max_nodes < 2 or self.stride < 1 or self.samples_per_point < 1:
            raise ParameterError("need max_nodes >= 2, stride >= 1, samples >= 1")
        if self.patch_count < self.max_nodes:
            raise ParameterError("patch_count must be >= max_nodes so every node holds a patch")
        if self.model is not None and self.model.patch_count != self.patch_count:
            raise ParameterError("model.patch_count must equal patch_count")

    @property
    def baseline(self) -> bool:
        return self.train if self.include_baseline is None else self.include_baseline

    def model_config(self) -> ModelConfig:
        if self.model is not None:
            return self.model
        return ModelConfig(patch_count=self.patch_count, patch_dim=self.patch_dim, classes=self.classes)


def derive_seed(*parts: int) -> int:
    """63-bit seed derived from integer parts; independent streams per work item."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0] >> 1)


def _train_seed(config: SweepConfig, sample: int) -> int:
    # shared across cells so CP runs and the complete-graph run see the same data and init
    return derive_seed(config.seed, 0xC0FFEE, sample)


def _train_accuracy(config: SweepConfig, graph, sample: int) -> float:
    seed = _train_seed(config, sample)
    mc = config.model_config()
    task = make_synthetic_task(mc.classes, config.patch_count, config.informative, config.noise, seed, mc.patch_dim)
    state = train_toy(graph, task, mc, TrainConfig(epochs=config.epochs, seed=seed))
    return accuracy(state.model, task.x_test, task.y_test, state.mask)


def _run_point(config: SweepConfig, point: SearchPoint) -> SweepRecord:
    n, m, s = point.n, point.m, point.sample_index
    try:
        graph = generate_verified_cp_graph(n, m, config.thresholds, derive_seed(config.seed, n, m, s))
    except CPGenerationError:
        return SweepRecord(n, m, s, None, None, None, None, False, status="failed")
    ip = independent_probabilities(graph)
    cr = connection_ratio(mask_for_graph(graph, config.patch_count))
    acc = _train_accuracy(config, graph, s) if config.train else None
    return SweepRecord(n, m, s, cr, ip.r_cc, ip.r_cp, ip.r_pp, is_cp(ip), acc)


def _run_baseline(config: SweepConfig, sample: int) -> tuple[int, float | None]:
    graph = generate_baseline("complete", config.patch_count, seed=config.seed)
    acc = _train_accuracy(config, graph, sample) if config.train else None
    return sample, acc


def _worker(args):
    kind, config, item = args
    if kind == "point":
        return _run_point(config, item)
    return _run_baseline(config, item)


def worker_count(config: SweepConfig) -> int:
    env = os.environ.get("CPATTN_WORKERS")
    if env:
        try:
            width = int(env)
        except ValueError as exc:
            raise ParameterError(f"CPATTN_WORKERS must be an integer, got {env!r}") from exc
    else:
        width = config.workers or 1
    if width < 1:
        raise ParameterError("worker count must be >= 1")
    return width


def run_sweep(config: SweepConfig) -> list[SweepRecord]:
    """Evaluate every grid point and replicate; records come back sorted by (n, m, sample)."""
    points = enumerate_search_space(config.max_nodes, config.stride, config.samples_per_point)
    jobs = [("point", config, p) for p in points]
    if config.baseline:
        jobs += [("baseline", config, s) for s in range(config.samples_per_point)]
    width = worker_count(config)
    if width == 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=width) as pool:
            results = list(pool.map(_worker, jobs, chunksize=max(1, len(jobs) // (8 * width))))
    records = [r for r in results if isinstance(r, SweepRecord)]
    if config.baseline:
        base_acc = dict(r for r in results if isinstance(r, tuple))
        # every block of a complete graph is full, so any split with non-empty blocks gives 1/3 each
        complete_ip = independent_probabilities(generate_baseline("complete", 4).with_labels(2))
        for n in range(config.stride, config.max_nodes + 1, config.stride):
            if n < 2:
                continue
            for s in range(config.samples_per_point):
                acc = base_acc[s]
                records.append(
                    SweepRecord(
                        n, n, s, 1.0, complete_ip.r_cc, complete_ip.r_cp, complete_ip.r_pp,
                        False, acc, 0.0 if acc is not None else None, "baseline",
                    )
                )
        records = [
            replace(r, accuracy_delta=r.toy_accuracy - base_acc[r.sample_index])
            if r.status == "ok" and r.toy_accuracy is not None
            else r
            for r in records
        ]
    return sorted(records, key=lambda r: r.key)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: Iterable[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(
            _fmt(v)
            for v in (
                r.n, r.m, r.sample_index, r.cr, r.r_cc, r.r_cp, r.r_pp, r.is_cp,
                r.toy_accuracy, r.accuracy_delta, r.status,
            )
        )
    return buf.getvalue()


def records_from_csv(text: str) -> list[SweepRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ParameterError(f"unexpected CSV header {rows[0] if rows else None}")

    def num(s: str) -> float | None:
        return float(s) if s else None

    out = []
    for row in rows[1:]:
        n, m, s, cr, rcc, rcp, rpp, iscp, acc, delta, status = row
        out.append(
            SweepRecord(
                int(n), int(m), int(s), num(cr), num(rcc), num(rcp), num(rpp),
                iscp == "true", num(acc), num(delta), status,
            )
        )
    return out


# ---------------------------------------------------------------------------
# heatmaps


def cell_means(records: Sequence[SweepRecord], metric: str) -> dict[tuple[int, int], float | None]:
    attr = {"toy_acc": "toy_accuracy", "acc_delta": "accuracy_delta"}.get(metric, metric)
    acc: dict[tuple[int, int], list[float]] = {}
    for r in records:
        v = getattr(r, attr)
        acc.setdefault((r.n, r.m), [])
        if v is not None:
            acc[(r.n, r.m)].append(v)
    return {k: (float(np.mean(v)) if v else None) for k, v in sorted(acc.items())}


def heatmap_svg(cells: dict[tuple[int, int], float | None], title: str, cell: int = 24) -> str:
    """Rows are total nodes n (top = smallest), columns core nodes m; darker = larger."""
    ns = sorted({n for n, _ in cells})
    ms = sorted({m for _, m in cells})
    vals = [v for v in cells.values() if v is not None]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 0.0)
    left, top = 48, 36
    width = left + cell * len(ms) + 8
    height = top + cell * len(ns) + 24
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="4" y="14" font-size="11" font-family="monospace">{title}</text>',
        f'<text x="4" y="28" font-size="9" font-family="monospace">min {lo:.4g} max {hi:.4g}</text>',
    ]
    for i, n in enumerate(ns):
        y = top + i * cell
        out.append(f'<text x="2" y="{y + cell * 0.7:.1f}" font-size="9" font-family="monospace">{n}</text>')
        for j, m in enumerate(ms):
            if (n, m) not in cells:
                continue
            x = left + j * cell
            v = cells[(n, m)]
            if v is None:
                fill = "none"
            else:
                frac = 0.5 if hi == lo else (v - lo) / (hi - lo)
                g = int(round(255 * (1.0 - frac)))
                fill = f"rgb({g},{g},{g})"
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" '
                f'stroke="#888" stroke-width="0.5"><title>n={n} m={m} value={v}</title></rect>'
            )
    for j, m in enumerate(ms):
        x = left + j * cell + 2
        out.append(f'<text x="{x}" y="{height - 8}" font-size="9" font-family="monospace">{m}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_heatmaps(records: Sequence[SweepRecord], out_dir: str | Path) -> list[Path]:
    if not records:
        raise ParameterError("no records to render")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "sweep.csv"
        csv_path.write_text(records_to_csv(records))
        written.append(csv_path)
        for metric, title in HEATMAP_METRICS.items():
            path = out / f"heatmap_{metric}.svg"
            path.write_text(heatmap_svg(cell_means(records, metric), title))
            written.append(path)
    except OSError as exc:
        raise OSError(f"failed writing sweep output under {out}: {exc}") from exc
    return written
