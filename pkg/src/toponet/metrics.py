"""Measurements on trained sheets and their responses.

Effective dimensionality, correlation-vs-distance smoothness, Welch-t
selectivity maps, windowed SSIM between maps, and the power-law/exponential
integration-window fit.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import minimize

from ._fileio import atomic_open
from .errors import DimensionError, FitError, InsufficientDataError, NumericError


# --------------------------------------------------------------------------
# effective dimensionality


def eigenspectrum(features) -> np.ndarray:
    """Covariance eigenvalues of ``features[n_samples, n_units]``, descending, clamped at 0."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientDataError("need a 2D feature matrix with at least 2 samples")
    X = X - X.mean(axis=0)
    cov = X.T @ X / (X.shape[0] - 1)
    lam = np.linalg.eigvalsh(cov)[::-1]
    return np.clip(lam, 0.0, None)


def effective_dimensionality_from_spectrum(lambdas) -> float:
    lam = np.asarray(lambdas, dtype=np.float64)
    if np.any(lam < 0):
        raise ValueError("eigenvalues must be non-negative")
    sq = np.sum(lam**2)
    if sq == 0:
        raise NumericError("zero spectrum")
    return float(np.sum(lam) ** 2 / sq)


def effective_dimensionality(features) -> float:
    """``(sum lambda)^2 / sum lambda^2`` over the feature covariance spectrum."""
    return effective_dimensionality_from_spectrum(eigenspectrum(features))


# --------------------------------------------------------------------------
# smoothness


@dataclass(frozen=True)
class SmoothnessCurve:
    bin_centers: np.ndarray
    bin_means: np.ndarray
    smoothness: float


def pairwise_correlation_vs_distance(
    sheet_positions, unit_responses, n_bins: int = 10
) -> SmoothnessCurve:
    """Bin unit-pair response correlations by their distance on the sheet.

    ``unit_responses`` is ``[n_stimuli, n_units]``.  Pairs involving a unit
    with zero response variance are dropped.  Bins split ``(0, max distance]``
    into ``n_bins`` equal widths; empty bins are omitted from the curve.
    """
    pos = np.asarray(sheet_positions, dtype=np.float64)
    R = np.asarray(unit_responses, dtype=np.float64)
    if R.ndim != 2 or pos.shape != (R.shape[1], 2):
        raise DimensionError(f"positions {pos.shape} do not match responses {R.shape}")
    if R.shape[0] < 3:
        raise InsufficientDataError("need at least 3 stimuli")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")

    Z = R - R.mean(axis=0)
    sd = np.sqrt(np.sum(Z**2, axis=0))
    alive = np.flatnonzero(sd > 0)
    Z = Z[:, alive] / sd[alive]
    corr = np.clip(Z.T @ Z, -1.0, 1.0)
    iu, ju = np.triu_indices(alive.size, k=1)
    r = corr[iu, ju]
    p = pos[alive]
    dist = np.hypot(*(p[iu] - p[ju]).T)
    if dist.size == 0 or dist.max() == 0:
        raise InsufficientDataError("no unit pairs at positive distance")

    edges = np.linspace(0.0, dist.max(), n_bins + 1)
    # right-closed bins over (0, max]
    which = np.clip(np.searchsorted(edges, dist, side="left") - 1, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    sums = np.bincount(which, weights=r, minlength=n_bins)
    keep = counts > 0
    if keep.sum() < 2:
        raise InsufficientDataError("fewer than 2 non-empty distance bins")
    centers = 0.5 * (edges[:-1] + edges[1:])[keep]
    means = sums[keep] / counts[keep]
    return SmoothnessCurve(centers, means, float(means.max() - means.min()))


def smoothness(sheet_positions, unit_responses, n_bins: int = 10) -> float:
    return pairwise_correlation_vs_distance(sheet_positions, unit_responses, n_bins).smoothness


def grid_positions(h: int, w: int) -> np.ndarray:
    u = np.arange(h * w)
    return np.stack([u // w, u % w], axis=1)


# --------------------------------------------------------------------------
# selectivity


@dataclass(frozen=True)
class GroupStats:
    mu: float
    sigma: float
    n: int

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.n < 2:
            raise InsufficientDataError("a group needs at least 2 samples")

    @classmethod
    def from_samples(cls, samples) -> "GroupStats":
        x = np.asarray(samples, dtype=np.float64)
        return cls(float(x.mean()), float(x.std(ddof=1)), int(x.size))


def selectivity_t(target: GroupStats, other: GroupStats) -> float:
    """Welch t statistic of ``target`` against ``other``."""
    se2 = target.sigma**2 / target.n + other.sigma**2 / other.n
    if se2 == 0:
        raise NumericError("both groups have zero variance")
    return float((target.mu - other.mu) / np.sqrt(se2))


def selectivity_map(target_responses, other_responses, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Per-unit Welch t for ``[n_c, n_units]`` vs ``[n_o, n_units]`` responses.

    Units whose responses have zero variance in both groups and equal means get
    ``t = 0``; with unequal means the statistic is undefined and raises.
    """
    A = np.asarray(target_responses, dtype=np.float64)
    B = np.asarray(other_responses, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionError(f"response matrices {A.shape} and {B.shape} disagree")
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise InsufficientDataError("each group needs at least 2 samples")
    diff = A.mean(axis=0) - B.mean(axis=0)
    se2 = A.var(axis=0, ddof=1) / A.shape[0] + B.var(axis=0, ddof=1) / B.shape[0]
    flat = se2 == 0
    if np.any(flat & (diff != 0)):
        raise NumericError("zero-variance unit with differing group means")
    t = np.zeros_like(diff)
    t[~flat] = diff[~flat] / np.sqrt(se2[~flat])
    return t.reshape(shape) if shape is not None else t


# --------------------------------------------------------------------------
# structural similarity


def structural_similarity(map_a, map_b, win: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all ``win x win`` windows; data range is max-min over both maps."""
    a = np.asarray(map_a, dtype=np.float64)
    b = np.asarray(map_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(f"maps must share a 2D shape, got {a.shape} and {b.shape}")
    if min(a.shape) < win:
        raise DimensionError(f"maps must be at least {win}x{win}")
    data_range = max(a.max(), b.max()) - min(a.min(), b.min())
    if data_range == 0:
        raise NumericError("both maps are the same constant")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    wa = sliding_window_view(a, (win, win))
    wb = sliding_window_view(b, (win, win))
    n = win * win
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    # unbiased local (co)variances
    var_a = (np.sum(wa**2, axis=(-2, -1)) - n * mu_a**2) / (n - 1)
    var_b = (np.sum(wb**2, axis=(-2, -1)) - n * mu_b**2) / (n - 1)
    cov = (np.sum(wa * wb, axis=(-2, -1)) - n * mu_a * mu_b) / (n - 1)
    ssim = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(ssim.mean())


# --------------------------------------------------------------------------
# temporal integration window


@dataclass(frozen=True)
class IntegrationFit:
    a: float
    b: float
    c: float
    residual: float


def integration_window(delta, a: float, b: float, c: float) -> np.ndarray:
    """``c * (delta + 1)^-a + (1 - c) * exp(-b * delta)``; equals 1 at ``delta = 0``."""
    d = np.asarray(delta, dtype=np.float64)
    return c * (d + 1.0) ** (-a) + (1.0 - c) * np.exp(-b * d)


_BOUNDS = np.array([[0.0, 10.0], [0.0, 10.0], [0.0, 1.0]])
_AB_GRID = (0.0, 1.0, 2.0, 3.0)
_C_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def _clamp(p) -> np.ndarray:
    return np.clip(p, _BOUNDS[:, 0], _BOUNDS[:, 1])


def _nelder_mead(f, x0):
    return minimize(
        f,
        x0,
        method="Nelder-Mead",
        bounds=_BOUNDS,
        options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000},
    )


def fit_integration_window(deltas, thetas) -> IntegrationFit:
    """Least-squares fit of ``(a, b, c)`` by Nelder-Mead from 16 grid starts.

    Starts cover ``a, b in {0, 1, 2, 3}``; each start takes the ``c`` from
    ``{0, .25, .5, .75, 1}`` with the lowest initial residual.  Parameters are
    clamped to ``a, b in [0, 10]`` and ``c in [0, 1]``.
    """
    d = np.asarray(deltas, dtype=np.float64)
    y = np.asarray(thetas, dtype=np.float64)
    if d.shape != y.shape or d.ndim != 1:
        raise DimensionError("deltas and thetas must be 1D and equally long")
    if d.size < 4:
        raise InsufficientDataError("need at least 4 points")
    if np.any(d < 0) or not np.any(d == 0):
        raise ValueError("deltas must be non-negative and include 0")
    if np.any(y < 0) or np.any(y > 1.05):
        raise ValueError("thetas must lie in [0, 1.05]")

    def sse(p) -> float:
        a, b, c = _clamp(p)
        r = integration_window(d, a, b, c) - y
        return float(r @ r)

    best: tuple[float, np.ndarray] | None = None
    for a0, b0 in itertools.product(_AB_GRID, _AB_GRID):
        c0 = min(_C_GRID, key=lambda c: sse((a0, b0, c)))
        x0 = np.array([a0, b0, c0])
        start_sse = sse(x0)
        res = _nelder_mead(sse, x0)
        # a collapsed simplex can stall short of the minimum; restart once
        res = _nelder_mead(sse, res.x) if np.isfinite(res.fun) else res
        cand = (float(res.fun), _clamp(res.x)) if np.isfinite(res.fun) else None
        if cand is None or cand[0] > start_sse:
            cand = (start_sse, x0)
        if not np.isfinite(cand[0]):
            continue
        if best is None or cand[0] < best[0]:
            best = cand
    if best is None:
        raise FitError("integration-window fit diverged from every start")
    a, b, c = best[1]
    return IntegrationFit(float(a), float(b), float(c), best[0])


def read_theta_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``delta,theta`` CSV."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"delta", "theta"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'delta,theta'")
        rows = [(float(r["delta"]), float(r["theta"])) for r in reader]
    arr = np.array(rows, dtype=np.float64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def write_theta_csv(path, deltas, thetas) -> None:
    with atomic_open(path, "w") as f:
        w = csv.writer(f)
        w.writerow(["delta", "theta"])
        for d, t in zip(deltas, thetas):
            w.writerow([repr(float(d)), repr(float(t))])
