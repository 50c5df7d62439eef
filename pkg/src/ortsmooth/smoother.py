"""Jump-preserving estimators built on a tree partition.

``leaf_mean_estimate`` replaces every value by the mean of its leaf.
``local_weighted_estimate`` averages only over points that share the leaf
*and* lie in the cubic window of half-width ``h_n`` around the target, each
weighted by a patch similarity score

    SS(x, u) = exp(-kappa_n * ||B(u) - B(x)||^2 / (n h_n)^2)

where ``B(.)`` is the window of intensities centred on a point. Patch offsets
that fall outside the lattice for either centre are left out of the distance;
the ``(n h_n)^2`` scale is kept fixed.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from .lattice import LatticeError, LatticeField, PointSet
from .tree import LeafPartition, TreeConfig, grow_tree

SIGMA_FLOOR = 1e-6
R_N_PER_VARIANCE = 1e-4
MAD_TO_SD = 0.6745


def _lattice_n(dims) -> int:
    return max(dims)


def window_radius(dims, h_n: float) -> tuple[int, ...]:
    """Per-axis reach of the closed window ``|k / n_j| <= h_n`` in lattice steps."""
    return tuple(int(math.floor(h_n * n + 1e-9)) for n in dims)


def default_min_leaf(dims, h_n: float) -> int:
    """Leaf floor for noisy data: ``ceil(N^(2/3))`` or the window volume if larger.

    With ``r_n = 1e-4 sigma^2`` the gain test alone never stops a noise-only
    node on lattices of practical size, so leaf size is bounded from below.
    An ``N^(2/3)`` floor lets leaves grow in points while their share of the
    domain still shrinks as the lattice is refined, and keeps them several
    windows wide so the local estimator is not starved of neighbours.
    """
    window = int(np.prod([2 * r + 1 for r in window_radius(dims, h_n)]))
    n2 = int(np.prod(dims)) ** 2
    k = max(1, round(n2 ** (1.0 / 3.0)))
    while k ** 3 < n2:
        k += 1
    while k > 1 and (k - 1) ** 3 >= n2:
        k -= 1
    return max(window, k)


@dataclass(frozen=True)
class SmootherConfig:
    """Estimator settings.

    ``None`` fields resolve at run time: ``h_n`` to ``3/n`` (``n`` the largest
    grid side), ``sigma`` to :func:`estimate_sigma`, ``r_n`` to
    ``1e-4 * sigma^2`` and ``min_leaf`` to :func:`default_min_leaf`. The
    resolved ``r_n`` and ``min_leaf`` override those in ``tree``.
    """

    r_n: Optional[float] = None
    h_n: Optional[float] = None
    kappa_n: float = 5.0
    sigma: Optional[float] = None
    estimator: Literal["leaf_mean", "local_weighted"] = "leaf_mean"
    min_leaf: Optional[int] = None
    tree: TreeConfig = field(default_factory=TreeConfig)

    def __post_init__(self):
        if self.h_n is not None and not 0 < self.h_n <= 0.5:
            raise ValueError("h_n must lie in (0, 0.5]")
        if not self.kappa_n > 0:
            raise ValueError("kappa_n must be positive")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.r_n is not None and not self.r_n > 0:
            raise ValueError("r_n must be positive")
        if self.estimator not in ("leaf_mean", "local_weighted"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.min_leaf is not None and self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")

    def resolve(self, field: LatticeField) -> "SmootherConfig":
        """Copy with every run-time default filled in for ``field``."""
        h_n = self.h_n if self.h_n is not None else min(3.0 / _lattice_n(field.dims), 0.5)
        sigma = self.sigma if self.sigma is not None else estimate_sigma(field)
        r_n = self.r_n if self.r_n is not None else R_N_PER_VARIANCE * sigma ** 2
        min_leaf = self.min_leaf if self.min_leaf is not None else default_min_leaf(field.dims, h_n)
        tree = replace(self.tree, r_n=r_n, min_leaf=min_leaf)
        return replace(self, h_n=h_n, sigma=sigma, r_n=r_n, min_leaf=min_leaf, tree=tree)


def leaf_mean_estimate(field: LatticeField, partition: LeafPartition) -> LatticeField:
    """Every point gets the average of the observations in its leaf."""
    if partition.dims != field.dims:
        raise LatticeError("partition was built on a different lattice")
    ids = partition.leaf_id
    w = field.values
    # offset by one member per leaf so constant leaves reproduce exactly
    _, first = np.unique(ids, return_index=True)
    ref = w[first]
    counts = np.bincount(ids, minlength=partition.leaf_count)
    shift = np.bincount(ids, weights=w - ref[ids], minlength=partition.leaf_count) / counts
    out = (ref + shift)[ids]
    return field.with_values(np.clip(out, w.min(), w.max()))


def neighborhood(field: LatticeField, center: int, h_n: float) -> PointSet:
    """Lattice points within Chebyshev distance ``h_n`` of ``center``, clipped to the grid."""
    if not 0 <= center < field.size:
        raise LatticeError(f"flat index {center} outside the lattice")
    pos = np.unravel_index(int(center), field.dims)
    ranges = [
        range(max(0, i - r), min(n, i + r + 1))
        for i, r, n in zip(pos, window_radius(field.dims, h_n), field.dims)
    ]
    grid = np.meshgrid(*[np.arange(r.start, r.stop) for r in ranges], indexing="ij")
    flat = np.ravel_multi_index(tuple(g.ravel() for g in grid), field.dims)
    return PointSet(np.sort(flat), field.dims)


def patch_distance2(field: LatticeField, a: int, b: int, h_n: float) -> float:
    """Squared L2 distance between the windows centred at ``a`` and ``b``.

    Only offsets inside the lattice for both centres contribute.
    """
    pa = np.array(np.unravel_index(int(a), field.dims))
    pb = np.array(np.unravel_index(int(b), field.dims))
    grid = field.grid
    total = 0.0
    for off in itertools.product(*[range(-r, r + 1) for r in window_radius(field.dims, h_n)]):
        qa, qb = pa + off, pb + off
        if np.all((qa >= 0) & (qa < field.dims)) and np.all((qb >= 0) & (qb < field.dims)):
            d = grid[tuple(qa)] - grid[tuple(qb)]
            total += d * d
    return total


def similarity_score(field: LatticeField, a: int, b: int, h_n: float, kappa_n: float) -> float:
    for i in (a, b):
        if not 0 <= i < field.size:
            raise LatticeError(f"flat index {i} outside the lattice")
    scale = (_lattice_n(field.dims) * h_n) ** 2
    return math.exp(-kappa_n * patch_distance2(field, a, b, h_n) / scale)


def _box_sum(a: np.ndarray, radius: tuple[int, ...]) -> np.ndarray:
    """Sum of ``a`` over the closed box of the given per-axis radius, zero outside."""
    out = a
    for axis, r in enumerate(radius):
        if r == 0:
            continue
        n = out.shape[axis]
        pad = [(0, 0)] * out.ndim
        pad[axis] = (r + 1, r)
        cs = np.cumsum(np.pad(out, pad), axis=axis)
        hi = np.take(cs, np.arange(2 * r + 1, 2 * r + 1 + n), axis=axis)
        lo = np.take(cs, np.arange(0, n), axis=axis)
        out = hi - lo
    return out


def _shift_slices(delta, dims):
    """Slices selecting points x (dst) and x + delta (src) that are both on the grid."""
    dst, src = [], []
    for d, n in zip(delta, dims):
        dst.append(slice(max(0, -d), min(n, n - d)))
        src.append(slice(max(0, d), min(n, n + d)))
    return tuple(dst), tuple(src)


def local_weighted_estimate(
    field: LatticeField,
    partition: LeafPartition,
    cfg: SmootherConfig,
    threads: int = 1,
) -> LatticeField:
    """Similarity-weighted average over the leaf-window intersection of each point.

    Work is organised by window offset: for each offset the patch distances of
    all point pairs at that offset come from one box sum. Contributions are
    accumulated in a fixed offset order whatever ``threads`` is.
    """
    if partition.dims != field.dims:
        raise LatticeError("partition was built on a different lattice")
    h_n = cfg.h_n if cfg.h_n is not None else min(3.0 / _lattice_n(field.dims), 0.5)
    dims = field.dims
    radius = window_radius(dims, h_n)
    scale = (_lattice_n(dims) * h_n) ** 2
    grid = field.grid
    leaves = partition.leaf_id.reshape(dims)
    offsets = list(itertools.product(*[range(-r, r + 1) for r in radius]))

    def contribution(delta):
        if not any(delta):
            return None
        dst, src = _shift_slices(delta, dims)
        diff = grid[src] - grid[dst]
        d2 = np.zeros(dims)
        d2[dst] = diff * diff
        dist = _box_sum(d2, radius)[dst]
        weight = np.exp(-cfg.kappa_n * dist / scale)
        weight[leaves[src] != leaves[dst]] = 0.0
        return dst, weight, weight * diff

    num = np.zeros(dims)
    den = np.ones(dims)  # the centre always contributes SS = 1 and zero offset
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        step = max(1, threads)
        for start in range(0, len(offsets), step):
            batch = offsets[start:start + step]
            parts = pool.map(contribution, batch) if pool else map(contribution, batch)
            for part in parts:
                if part is None:
                    continue
                dst, weight, wdiff = part
                den[dst] += weight
                num[dst] += wdiff
    finally:
        if pool is not None:
            pool.shutdown()
    out = grid + num / den
    w = field.values
    return field.with_values(np.clip(out, w.min(), w.max()))


def estimate_sigma(field: LatticeField) -> float:
    """Noise s.d. from the median absolute first difference along the first axis."""
    grid = field.grid
    if grid.shape[0] < 2:
        raise LatticeError("need at least two points along the first axis to estimate sigma")
    d = np.abs(np.diff(grid, axis=0)).ravel()
    return max(float(np.median(d)) / (MAD_TO_SD * math.sqrt(2.0)), SIGMA_FLOOR)


def denoise(field: LatticeField, cfg: SmootherConfig = SmootherConfig(), threads: int = 1):
    """Grow the tree on ``field`` and apply the configured estimator.

    Returns ``(estimate, partition)``.
    """
    cfg = cfg.resolve(field)
    partition = grow_tree(field, cfg.tree, threads=threads)
    if cfg.estimator == "leaf_mean":
        est = leaf_mean_estimate(field, partition)
    else:
        est = local_weighted_estimate(field, partition, cfg, threads=threads)
    return est, partition
