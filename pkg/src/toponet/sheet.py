"""Cortical sheets: layer weights laid out on a 2D grid of units.

A linear layer ``W[o, i]`` becomes a sheet ``C[h, w, i]`` with ``h * w == o``;
a conv layer ``W[c_out, c_in, k, k]`` becomes ``C[h, w, c_in * k * k]``.
Output unit ``u`` sits at grid position ``(u // w, u % w)``.  Projection and
unprojection are pure reshapes, so gradients flow through them unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DimensionError


@dataclass(frozen=True)
class Linear:
    o: int
    i: int

    def __post_init__(self):
        if self.o < 1 or self.i < 1:
            raise DimensionError(f"extents must be positive: {self}")

    @property
    def n_units(self) -> int:
        return self.o

    @property
    def depth(self) -> int:
        return self.i

    @property
    def weight_shape(self) -> tuple[int, int]:
        return (self.o, self.i)


@dataclass(frozen=True)
class Conv:
    c_out: int
    c_in: int
    k: int

    def __post_init__(self):
        if self.c_out < 1 or self.c_in < 1 or self.k < 1:
            raise DimensionError(f"extents must be positive: {self}")

    @property
    def n_units(self) -> int:
        return self.c_out

    @property
    def depth(self) -> int:
        return self.c_in * self.k * self.k

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.c_out, self.c_in, self.k, self.k)


LayerKind = Union[Linear, Conv]


def factorize_near_square(o: int) -> tuple[int, int]:
    """Factor pair ``(h, w)`` of ``o`` with minimal ``|h - w|`` and ``h <= w``."""
    if o < 1:
        raise ValueError(f"need a positive unit count, got {o}")
    h = math.isqrt(o)
    while o % h:
        h -= 1
    return h, o // h


@dataclass(frozen=True)
class CorticalSheet:
    """Weights arranged as ``data[h, w, d]``; ``data`` may carry a gradient tape."""

    data: Tensor

    def __post_init__(self):
        if not isinstance(self.data, Tensor):
            object.__setattr__(self, "data", Tensor(self.data))
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise DimensionError(f"sheet data must be a non-empty 3D array, got {self.data.shape}")

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data.numpy()

    def positions(self) -> np.ndarray:
        """Grid coordinates ``(row, col)`` of every unit, in unit order."""
        u = np.arange(self.h * self.w)
        return np.stack([u // self.w, u % self.w], axis=1)


def project_linear(W) -> CorticalSheet:
    W = W if isinstance(W, Tensor) else Tensor(W)
    if W.ndim != 2:
        raise DimensionError(f"linear weights must be 2D, got {W.shape}")
    o, i = W.shape
    h, w = factorize_near_square(o)
    return CorticalSheet(ag.reshape(W, (h, w, i)))


def project_conv(W) -> CorticalSheet:
    W = W if isinstance(W, Tensor) else Tensor(W)
    if W.ndim != 4:
        raise DimensionError(f"conv weights must be 4D, got {W.shape}")
    c_out, c_in, k, _ = W.shape
    h, w = factorize_near_square(c_out)
    return CorticalSheet(ag.reshape(W, (h, w, c_in * k * k)))


def project(W, kind: LayerKind) -> CorticalSheet:
    if tuple((W if isinstance(W, Tensor) else np.asarray(W)).shape) != kind.weight_shape:
        raise DimensionError(f"weights of shape {W.shape} do not match {kind}")
    return project_linear(W) if isinstance(kind, Linear) else project_conv(W)


def unproject(sheet: CorticalSheet, kind: LayerKind) -> Tensor:
    """Inverse of :func:`project` for a sheet whose extents agree with ``kind``."""
    if sheet.h * sheet.w != kind.n_units or sheet.d != kind.depth:
        raise DimensionError(f"sheet {sheet.shape} is inconsistent with {kind}")
    return ag.reshape(sheet.data, kind.weight_shape)
