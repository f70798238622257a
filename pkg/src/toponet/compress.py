"""L1 unstructured pruning and cortical-sheet downsampling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ._fileio import atomic_open
from .sheet import CorticalSheet, project, unproject
from .topoloss import resize_bilinear, round_half_up

if TYPE_CHECKING:
    from .training import EvalTask, Model


def prune_fraction_for_reduction(n: float) -> float:
    """Fraction of weights to zero so that ``1/n`` of them survive."""
    if not n > 1:
        raise ValueError(f"reduction factor must exceed 1, got {n}")
    return (100.0 - 100.0 / n) / 100.0


@dataclass(frozen=True)
class PruneReport:
    layer_name: str
    fraction_pruned: float
    threshold: float
    zeros_before: int
    zeros_after: int


def l1_prune(weights, fraction: float, layer_name: str = "") -> tuple[np.ndarray, PruneReport]:
    """Zero the ``floor(fraction * size)`` smallest-magnitude entries.

    Ties are resolved by flat index, lower first.  Survivors keep their exact
    values.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    W = np.array(weights, dtype=np.float64)
    flat = W.reshape(-1)
    k = int(math.floor(fraction * flat.size))
    zeros_before = int(np.count_nonzero(flat == 0))
    order = np.argsort(np.abs(flat), kind="stable")
    drop = order[:k]
    threshold = float(np.abs(flat[drop[-1]])) if k else 0.0
    flat[drop] = 0.0
    report = PruneReport(
        layer_name=layer_name,
        fraction_pruned=k / flat.size if flat.size else 0.0,
        threshold=threshold,
        zeros_before=zeros_before,
        zeros_after=int(np.count_nonzero(flat == 0)),
    )
    return W, report


@dataclass(frozen=True)
class CompressedLayer:
    reduced_sheet: CorticalSheet
    h: int
    w: int
    keep_ratio: float

    @property
    def param_count(self) -> int:
        s = self.reduced_sheet
        return s.h * s.w * s.d

    @property
    def original_param_count(self) -> int:
        return self.h * self.w * self.reduced_sheet.d


def reduced_extents(h: int, w: int, keep_ratio: float) -> tuple[int, int]:
    scale = math.sqrt(keep_ratio)
    return max(1, round_half_up(h * scale)), max(1, round_half_up(w * scale))


def downsample_layer(sheet: CorticalSheet, keep_ratio: float) -> CompressedLayer:
    """Store the sheet at ``~sqrt(keep_ratio)`` resolution per axis."""
    if not 0.0 < keep_ratio <= 1.0:
        raise ValueError(f"keep_ratio must lie in (0, 1], got {keep_ratio}")
    hh, ww = reduced_extents(sheet.h, sheet.w, keep_ratio)
    small = resize_bilinear(sheet.numpy(), hh, ww)
    return CompressedLayer(CorticalSheet(small), sheet.h, sheet.w, keep_ratio)


def reconstruct_layer(c: CompressedLayer) -> CorticalSheet:
    """Upsample the stored sheet back to its original extents."""
    return CorticalSheet(resize_bilinear(c.reduced_sheet.numpy(), c.h, c.w))


@dataclass(frozen=True)
class CurvePoint:
    method: str
    level: float
    param_ratio: float
    performance: float
    performance_delta: float


CURVE_HEADER = ("method", "level", "param_ratio", "performance", "performance_delta")


def compression_curve(
    model: "Model", task: "EvalTask", method: str, levels: Sequence[float]
) -> list[CurvePoint]:
    """Accuracy change as penalized layers lose a growing share of their weights.

    ``level`` is the fraction of penalized-layer parameters removed.  Pruning
    zeroes ``prune_fraction_for_reduction(1 / (1 - level))`` of each layer;
    downsampling keeps ``1 - level`` of each sheet's area, so both methods
    target the same effective parameter count.
    """
    from .training import evaluate

    if method not in ("prune", "downsample"):
        raise ValueError(f"unknown compression method {method!r}")
    if list(levels) != sorted(levels):
        raise ValueError("levels must be sorted ascending")
    if any(not 0.0 <= lv < 1.0 for lv in levels):
        raise ValueError("levels must lie in [0, 1)")
    base = evaluate(model, task)
    names = model.spec.penalized
    total = sum(model.weights[n].size for n in names)
    rows = []
    for level in levels:
        if level == 0:
            rows.append(CurvePoint(method, 0.0, 1.0, base, 0.0))
            continue
        new = dict(model.weights)
        kept = 0
        for name in names:
            kind = model.spec.kind(name)
            if method == "prune":
                frac = prune_fraction_for_reduction(1.0 / (1.0 - level))
                new[name], rep = l1_prune(model.weights[name], frac, name)
                kept += new[name].size - rep.zeros_after
            else:
                comp = downsample_layer(project(model.weights[name], kind), 1.0 - level)
                new[name] = unproject(reconstruct_layer(comp), kind).numpy()
                kept += comp.param_count
        perf = evaluate(model.with_weights(new), task)
        rows.append(CurvePoint(method, float(level), kept / total, perf, perf - base))
    return rows


def write_curve_csv(path, rows: Sequence[CurvePoint]) -> None:
    with atomic_open(path, "w") as f:
        w = csv.writer(f)
        w.writerow(CURVE_HEADER)
        for r in rows:
            w.writerow([r.method, repr(r.level), repr(r.param_ratio), repr(r.performance), repr(r.performance_delta)])
