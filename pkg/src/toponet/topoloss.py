"""TopoLoss: cosine similarity between a cortical sheet and its blurred copy.

Blurring is a bilinear downsample by ``phi`` along each sheet axis followed by
a bilinear upsample back to full size.  Both resizes are fixed linear maps, so
the whole loss is differentiable through :mod:`toponet.autograd`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import NumericError
from .sheet import CorticalSheet


@dataclass(frozen=True)
class TopoConfig:
    phi_h: float = 3.0
    phi_w: float = 3.0
    tau: float = 0.0
    target_layers: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("phi_h", "phi_w", "tau"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.phi_h < 1 or self.phi_w < 1:
            raise ValueError("blur factors must be >= 1")
        if not self.tau >= 0:
            raise ValueError("tau must be >= 0")
        object.__setattr__(self, "target_layers", tuple(self.target_layers))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@lru_cache(maxsize=256)
def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``R[n_out, n_in]`` for 1D linear interpolation with half-pixel centres.

    Output sample ``t`` reads source coordinate
    ``s = (t + 0.5) * n_in / n_out - 0.5`` clamped to ``[0, n_in - 1]``.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("extents must be positive")
    R = np.zeros((n_out, n_in))
    for t in range(n_out):
        s = (t + 0.5) * (n_in / n_out) - 0.5
        s = min(max(s, 0.0), n_in - 1.0)
        i0 = int(math.floor(s))
        i1 = min(i0 + 1, n_in - 1)
        frac = s - i0
        R[t, i0] += 1.0 - frac
        R[t, i1] += frac
    R.setflags(write=False)
    return R


def resize_bilinear(X, h_out: int, w_out: int) -> Tensor:
    """Bilinear resize of ``X[h, w]`` (or ``X[h, w, d]`` slice-wise) to ``h_out x w_out``."""
    X = X if isinstance(X, Tensor) else Tensor(X)
    h, w = X.shape[:2]
    return ag.separable_map(X, interpolation_matrix(h, h_out), interpolation_matrix(w, w_out))


def blur(X, phi_h: float = 3.0, phi_w: float = 3.0) -> Tensor:
    """Down-then-up bilinear resize; acts on the first two axes of ``X``."""
    if phi_h < 1 or phi_w < 1:
        raise ValueError("blur factors must be >= 1")
    X = X if isinstance(X, Tensor) else Tensor(X)
    h, w = X.shape[:2]
    hs = max(1, round_half_up(h / phi_h))
    ws = max(1, round_half_up(w / phi_w))
    # compose the two resizes into one fixed map per axis
    left = interpolation_matrix(hs, h) @ interpolation_matrix(h, hs)
    right = interpolation_matrix(ws, w) @ interpolation_matrix(w, ws)
    return ag.separable_map(X, left, right)


def topo_loss(sheet: CorticalSheet, cfg: TopoConfig | None = None) -> Tensor:
    """Negative mean over depth slices of cos(slice, blur(slice)).

    Slices where either the slice or its blur has zero norm add nothing to the
    sum but still count in the denominator.
    """
    cfg = cfg or TopoConfig()
    C = sheet.data
    B = blur(C, cfg.phi_h, cfg.phi_w)
    c2 = np.einsum("hwd,hwd->d", C.data, C.data)
    b2 = np.einsum("hwd,hwd->d", B.data, B.data)
    live = np.flatnonzero((c2 > 0) & (b2 > 0))
    if live.size == 0:
        raise NumericError("topo loss undefined: every sheet slice has zero norm")
    C_live = ag.take(C, live, axis=2)
    B_live = ag.take(B, live, axis=2)
    dot = ag.sum(C_live * B_live, axis=(0, 1))
    norms = ag.sqrt(ag.sum(C_live * C_live, axis=(0, 1)) * ag.sum(B_live * B_live, axis=(0, 1)))
    return ag.sum(dot / norms) * (-1.0 / sheet.d)


def total_loss(training_loss: Tensor, sheets: Sequence[CorticalSheet], cfg: TopoConfig) -> Tensor:
    """``training_loss + tau * mean(topo_loss over sheets)``; returns the input unchanged at tau 0."""
    if not np.isfinite(training_loss.data).all():
        raise NumericError("training loss is not finite")
    if cfg.tau == 0 or not sheets:
        return training_loss
    topo = topo_loss(sheets[0], cfg)
    for s in sheets[1:]:
        topo = topo + topo_loss(s, cfg)
    return training_loss + topo * (cfg.tau / len(sheets))
