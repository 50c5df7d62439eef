"""Scalar fields sampled on an equally spaced lattice over [0, 1]^p.

A lattice point with 1-based multi-index ``(i_1, ..., i_p)`` sits at the
coordinate ``(i_1/n_1, ..., i_p/n_p)``. Values are stored flat in row-major
(C) order, so the first axis varies slowest and a 2-D field is a stack of
image scanlines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class LatticeError(ValueError):
    """Raised for out-of-range indices or coordinates."""


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Immutable p-dimensional grid of float64 intensities.

    Parameters
    ----------
    dims : sequence of int
        Grid size along each axis.
    values : array_like
        Either a flat array of length ``prod(dims)`` in row-major order or
        an array already shaped ``dims``.
    """

    dims: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise LatticeError(f"dims must be positive integers, got {self.dims!r}")
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if vals.size != int(np.prod(dims)):
            raise LatticeError(
                f"values has {vals.size} entries, expected {int(np.prod(dims))} for dims {dims}"
            )
        if not np.all(np.isfinite(vals)):
            raise LatticeError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, arr) -> "LatticeField":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr)

    @property
    def p(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def grid(self) -> np.ndarray:
        """Read-only view of the values shaped ``dims``."""
        return self.values.reshape(self.dims)

    def with_values(self, values) -> "LatticeField":
        return LatticeField(self.dims, values)

    def coords(self, indices=None) -> np.ndarray:
        """Coordinates of the given flat indices (all points by default), shape (m, p)."""
        if indices is None:
            indices = np.arange(self.size)
        multi = np.unravel_index(np.asarray(indices, dtype=np.intp), self.dims)
        n = np.asarray(self.dims, dtype=np.float64)
        return (np.stack(multi, axis=-1) + 1.0) / n


@dataclass(frozen=True, eq=False)
class PointSet:
    """Sorted set of flat lattice indices belonging to a field of shape ``dims``."""

    indices: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).reshape(-1)
        dims = tuple(int(d) for d in self.dims)
        total = int(np.prod(dims))
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= total):
            raise LatticeError("indices must be strictly increasing and inside the lattice")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def of(cls, field: LatticeField, indices=None) -> "PointSet":
        if indices is None:
            return cls(np.arange(field.size), field.dims)
        return cls(np.unique(np.asarray(indices, dtype=np.intp)), field.dims)

    def __len__(self) -> int:
        return self.indices.size

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, i) -> bool:
        k = np.searchsorted(self.indices, i)
        return bool(k < self.indices.size and self.indices[k] == i)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PointSet)
            and self.dims == other.dims
            and np.array_equal(self.indices, other.indices)
        )

    @property
    def empty(self) -> bool:
        return self.indices.size == 0


def index_to_coord(field: LatticeField, flat_index: int) -> np.ndarray:
    """Domain coordinate of one lattice point, each component in (0, 1]."""
    flat_index = int(flat_index)
    if not 0 <= flat_index < field.size:
        raise LatticeError(f"flat index {flat_index} outside [0, {field.size})")
    return field.coords([flat_index])[0]


def coord_to_nearest_index(field: LatticeField, x: Sequence[float]) -> int:
    """Flat index of the lattice point closest to ``x`` in Euclidean distance.

    The lattice is a product grid, so the nearest point is found per axis;
    exact ties (``x`` midway between two grid lines) go to the lower grid line,
    which is also the smaller flat index.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != field.p:
        raise LatticeError(f"expected a {field.p}-dimensional coordinate, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise LatticeError(f"coordinate {x.tolist()} outside [0, 1]^{field.p}")
    multi = []
    for xj, nj in zip(x, field.dims):
        t = xj * nj - 1.0  # 0-based continuous position
        lo = int(np.floor(t))
        # compare distances in domain units so the tie rule is exact
        cands = [k for k in (lo, lo + 1) if 0 <= k < nj] or [0]
        best = min(cands, key=lambda k: (abs((k + 1) / nj - xj), k))
        multi.append(best)
    return int(np.ravel_multi_index(tuple(multi), field.dims))
