"""Error and edge-preservation metrics.

All distances are in domain units (the lattice spans [0, 1] per axis) unless
a ``scale`` is passed; ``scale=n`` turns them into pixel units on an n x n grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .lattice import LatticeError, LatticeField


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Deduplicated edge locations, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 2)
        if pts.size and (np.any(pts < 0.0) or np.any(pts > 1.0)):
            raise ValueError("edge points must lie in [0, 1]^p")
        pts = np.unique(pts, axis=0) if pts.shape[0] else pts
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def _check_dims(estimates, truth):
    for est in estimates:
        if est.dims != truth.dims:
            raise LatticeError(f"dims mismatch: {est.dims} vs {truth.dims}")


def _as_list(estimates) -> list[LatticeField]:
    if isinstance(estimates, LatticeField):
        return [estimates]
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    return estimates


def remse(estimates: Union[LatticeField, Sequence[LatticeField]], truth: LatticeField) -> float:
    """Root of the replication-averaged *summed* squared error over the lattice."""
    estimates = _as_list(estimates)
    _check_dims(estimates, truth)
    sse = [float(np.sum((e.values - truth.values) ** 2)) for e in estimates]
    return math.sqrt(float(np.mean(sse)))


def rmse(estimates: Union[LatticeField, Sequence[LatticeField]], truth: LatticeField) -> float:
    """Per-point version of :func:`remse`: the inner sum is divided by the lattice size."""
    estimates = _as_list(estimates)
    return remse(estimates, truth) / math.sqrt(truth.size)


def psnr(estimate: LatticeField, truth: LatticeField, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for an exact match."""
    _check_dims([estimate], truth)
    mse = float(np.mean((estimate.values - truth.values) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def local_linear_gradient(field: LatticeField, bandwidth: int = 2) -> np.ndarray:
    """Gradient magnitude of the least-squares plane fitted in each (2b+1)^2 window.

    Values are in intensity per domain unit; pixels whose window leaves the
    grid get NaN.
    """
    if field.p != 2:
        raise LatticeError(f"edge detection supports 2-D fields only, got p={field.p}")
    b = int(bandwidth)
    if b < 1:
        raise ValueError("bandwidth must be >= 1")
    grid = field.grid
    w = grid - grid.flat[0]
    k = np.arange(-b, b + 1, dtype=np.float64)
    ones = np.ones_like(k)
    norm = float(np.sum(k * k)) * (2 * b + 1)
    grads = []
    for axis, n in enumerate(field.dims):
        kernel = np.outer(k, ones) if axis == 0 else np.outer(ones, k)
        grads.append(ndimage.correlate(w, kernel / norm, mode="constant") * n)
    mag = np.hypot(*grads)
    out = np.full(field.dims, np.nan)
    if all(n > 2 * b for n in field.dims):
        out[b:-b, b:-b] = mag[b:-b, b:-b]
    return out


def detect_edges(field: LatticeField, bandwidth: int = 2, threshold: Union[float, str] = "auto") -> EdgeSet:
    """Pixels whose local-plane gradient magnitude exceeds ``threshold``.

    ``"auto"`` uses the mean plus two standard deviations of the magnitudes
    over all interior pixels.
    """
    mag = local_linear_gradient(field, bandwidth)
    inner = mag[np.isfinite(mag)]
    if inner.size == 0:
        return EdgeSet(np.zeros((0, 2)))
    if threshold == "auto":
        thr = float(inner.mean() + 2.0 * inner.std())
    else:
        thr = float(threshold)
    floor = 1e-9 * (float(np.ptp(field.values)) + 1.0) * max(field.dims)
    hits = np.argwhere(np.nan_to_num(mag, nan=-np.inf) > max(thr, floor))
    coords = (hits + 1.0) / np.asarray(field.dims, dtype=np.float64)
    return EdgeSet(coords)


def _directed_mean(src: np.ndarray, dst: np.ndarray) -> float:
    dist, _ = cKDTree(dst).query(src, k=1)
    return float(np.mean(dist))


def d_kq(detected: EdgeSet, reference: EdgeSet, scale: float = 1.0) -> float:
    """Symmetric mean nearest-neighbour distance between two edge sets.

    Half the mean distance from each detected point to the reference set
    plus half the mean distance from each reference point to the detected
    set. Not a metric (no triangle inequality).
    """
    if len(detected) == 0 or len(reference) == 0:
        raise UndefinedMetricError("d_kq is undefined for an empty edge set")
    a, b = detected.points, reference.points
    return scale * (0.5 * _directed_mean(a, b) + 0.5 * _directed_mean(b, a))


# ---------------------------------------------------------------------------
# report tables


def mean_and_se(values: Iterable[float]) -> tuple[float, float]:
    v = np.asarray(list(values), dtype=np.float64)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def format_report(rows: list[dict], columns: Sequence[str], delimiter: str = "\t",
                  group_by: Sequence[str] = ()) -> str:
    """Delimited table of per-replication rows followed by mean and SE rows.

    Numeric columns not in ``group_by`` are summarised per group; the
    ``replication`` cell of summary rows reads ``mean`` or ``se``.
    """
    out = [delimiter.join(columns)]
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row.get(g) for g in group_by), []).append(row)

    def cell(v):
        if isinstance(v, float):
            return format(v, ".6g")
        return str(v)

    for key, members in groups.items():
        for row in members:
            out.append(delimiter.join(cell(row.get(c, "")) for c in columns))
        summary = {"mean": {}, "se": {}}
        for c in columns:
            vals = [r.get(c) for r in members]
            if c in group_by:
                summary["mean"][c] = summary["se"][c] = vals[0]
            elif c != "replication" and all(isinstance(v, (int, float)) for v in vals):
                m, se = mean_and_se(vals)
                summary["mean"][c], summary["se"][c] = m, se
        for label in ("mean", "se"):
            summary[label]["replication"] = label
            out.append(delimiter.join(cell(summary[label].get(c, "")) for c in columns))
    return "\n".join(out) + "\n"
