"""Oblique regression trees on lattice fields.

A node is a set of lattice points. It is split by a hyperplane
``alpha . z <= c`` into a left and right child when the best impurity gain
found exceeds the threshold ``r_n``; growth stops once every node is a leaf.

The search for the best hyperplane runs in three stages, each sweeping every
threshold between consecutive distinct projections of the node's points:

1. the p coordinate axes (so the tree is never worse than CART),
2. ``n_random_dirs`` directions drawn uniformly on the unit sphere,
3. ``refine_steps`` rounds of coordinate perturbation around the best
   direction so far, halving the perturbation each round from 0.5.

Candidates with equal gain are resolved in favour of the earliest stage and
candidate index, so the outcome never depends on evaluation order. Random
directions for node ``i`` come from a Philox stream keyed by ``(seed, i)``;
node ids are heap positions (root 0, children ``2i+1``/``2i+2``), so a node's
split is a pure function of its members and id.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .lattice import LatticeError, LatticeField, PointSet

GAIN_FLOOR = -1e-12
_SWEEP_BUDGET = 1 << 21  # max projected values held at once during a sweep


class InvalidSplitError(ValueError):
    """A split leaves one side of the node empty."""


def canonical_direction(alpha) -> np.ndarray:
    """Unit vector with its first nonzero component positive."""
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    norm = math.sqrt(float(np.dot(a, a)))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("direction must be a finite nonzero vector")
    a = a / norm
    nz = np.flatnonzero(a)
    if a[nz[0]] < 0:
        a = -a
    return a + 0.0  # drop negative zeros


def project(coords: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Projections ``coords @ alpha`` for one direction (1-D alpha) or many (p x D).

    Written as an explicit sum over axes rather than a BLAS product so that the
    batched sweep and the later single-direction partition produce bit-identical
    values, which keeps every threshold strictly between its two neighbours.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim == 1:
        out = coords[:, 0] * alpha[0]
        for j in range(1, coords.shape[1]):
            out = out + coords[:, j] * alpha[j]
        return out
    out = coords[:, 0, None] * alpha[0][None, :]
    for j in range(1, coords.shape[1]):
        out = out + coords[:, j, None] * alpha[j][None, :]
    return out


@dataclass(frozen=True, eq=False)
class SplitRule:
    """Hyperplane split: left child ``alpha . z <= c``, right child ``alpha . z > c``."""

    alpha: np.ndarray
    c: float

    def __post_init__(self):
        a = np.array(self.alpha, dtype=np.float64).reshape(-1)
        c = float(self.c)
        norm = math.sqrt(float(np.dot(a, a)))
        if norm == 0.0 or not math.isfinite(norm) or not math.isfinite(c):
            raise ValueError("split needs a finite nonzero direction and finite threshold")
        if abs(norm - 1.0) > 1e-12:
            a, c = a / norm, c / norm
        if a[np.flatnonzero(a)[0]] < 0:
            raise ValueError("alpha must be in canonical form (first nonzero component > 0)")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "c", c)

    def goes_left(self, coords: np.ndarray) -> np.ndarray:
        return project(coords, self.alpha) <= self.c

    def __eq__(self, other):
        return (
            isinstance(other, SplitRule)
            and self.c == other.c
            and np.array_equal(self.alpha, other.alpha)
        )

    def __repr__(self):
        return f"SplitRule(alpha={self.alpha.tolist()}, c={self.c!r})"


@dataclass(frozen=True)
class NodeStats:
    count: int
    sum: float
    sum_sq: float

    @classmethod
    def of(cls, values) -> "NodeStats":
        v = np.asarray(values, dtype=np.float64)
        return cls(int(v.size), float(v.sum()), float(np.dot(v, v)))

    @property
    def mean(self) -> float:
        return self.sum / self.count

    @property
    def sse(self) -> float:
        return max(self.sum_sq - self.sum * self.sum / self.count, 0.0)


@dataclass(frozen=True)
class TreeConfig:
    """Tree growth parameters.

    ``n_random_dirs=None`` picks 64 directions for p = 2 and 128 for p >= 3
    (none for p = 1, where the only direction is the axis).
    """

    r_n: float = 1e-6
    min_leaf: int = 1
    n_random_dirs: Optional[int] = None
    refine_steps: int = 20
    max_leaves: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not (self.r_n > 0 and math.isfinite(self.r_n)):
            raise ValueError(f"r_n must be positive, got {self.r_n}")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.n_random_dirs is not None and self.n_random_dirs < 0:
            raise ValueError("n_random_dirs must be >= 0")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be >= 0")
        if self.max_leaves is not None and self.max_leaves < 1:
            raise ValueError("max_leaves must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def random_dirs_for(self, p: int) -> int:
        if p == 1:
            return 0
        if self.n_random_dirs is not None:
            return self.n_random_dirs
        return 64 if p == 2 else 128


class SplitRecord(NamedTuple):
    node_id: int
    rule: SplitRule
    gain: float


def node_rng(seed: int, node_id: int) -> np.random.Generator:
    """Counter-based (Philox) stream owned by one tree node."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, node_id])))


# ---------------------------------------------------------------------------
# gains


def simplified_gain(left: NodeStats, right: NodeStats) -> float:
    """Gain of a split from child summaries: ``nL nR / n^2 * (mean_L - mean_R)^2``."""
    if left.count < 1 or right.count < 1:
        raise InvalidSplitError("both children need at least one point")
    n = left.count + right.count
    d = left.mean - right.mean
    return left.count * right.count / (n * n) * d * d


def _sse(v: np.ndarray) -> float:
    return float(np.sum((v - v.mean()) ** 2))


def impurity_gain(field: LatticeField, node: PointSet, split: SplitRule) -> float:
    """Drop in within-node SSE from splitting, divided by the node size."""
    if len(node) == 0:
        raise InvalidSplitError("node is empty")
    idx = node.indices
    w = field.values[idx]
    left = split.goes_left(field.coords(idx))
    if left.all() or not left.any():
        raise InvalidSplitError("split leaves a child empty")
    g = (_sse(w) - _sse(w[left]) - _sse(w[~left])) / idx.size
    if g < 0.0:
        if g < GAIN_FLOOR * max(1.0, _sse(w)):
            raise ArithmeticError(f"negative impurity gain {g}")
        g = 0.0
    return g


# ---------------------------------------------------------------------------
# split search


class _Best:
    __slots__ = ("gain", "alpha", "c")

    def __init__(self):
        self.gain = -math.inf
        self.alpha = None
        self.c = None


def _sweep(coords, wc, total, dirs, min_leaf, best: _Best) -> bool:
    """Scan every threshold of every direction (columns of ``dirs``).

    Updates ``best`` in place when a strictly larger gain is found and reports
    whether it did.
    """
    m = coords.shape[0]
    ks = np.arange(1, m, dtype=np.float64)[:, None]
    lo, hi = min_leaf - 1, m - min_leaf  # rows of the cumulative sums that are admissible
    if hi <= lo:
        return False
    ks = ks[lo:hi]
    weight = ks * (m - ks) / (float(m) * m)
    chunk = max(1, _SWEEP_BUDGET // m)
    improved = False
    for start in range(0, dirs.shape[1], chunk):
        block = dirs[:, start:start + chunk]
        proj = project(coords, block)
        order = np.argsort(proj, axis=0)
        ps = np.take_along_axis(proj, order, axis=0)
        cs = np.cumsum(wc[order], axis=0)[lo:hi]
        diff = cs / ks - (total - cs) / (m - ks)
        gains = weight * diff * diff
        distinct = ps[lo + 1:hi + 1] > ps[lo:hi]
        gains[~distinct] = -np.inf
        rows = np.argmax(gains, axis=0)
        col_best = gains[rows, np.arange(gains.shape[1])]
        j = int(np.argmax(col_best))
        g = float(col_best[j])
        if g > best.gain:
            r = int(rows[j])
            a, b = float(ps[lo + r, j]), float(ps[lo + r + 1, j])
            c = 0.5 * (a + b)
            if not a <= c < b:
                c = a
            best.gain, best.alpha, best.c = g, block[:, j].copy(), c
            improved = True
    return improved


def _search(coords, values, min_leaf, n_random, refine_steps, rng) -> Optional[tuple[np.ndarray, float, float]]:
    m, p = coords.shape
    if m < 2 * min_leaf:
        return None
    wc = values - values.mean()
    total = float(wc.sum())
    best = _Best()
    axes = np.eye(p)
    if not np.any(wc != 0.0):
        # every candidate has zero gain; the first admissible axis split wins the tie
        for j in range(p):
            _sweep(coords, wc, total, axes[:, j:j + 1], min_leaf, best)
            if best.alpha is not None and best.gain > -math.inf:
                break
    else:
        _sweep(coords, wc, total, axes, min_leaf, best)
        if n_random > 0:
            raw = rng.standard_normal((n_random, p))
            dirs = np.stack([canonical_direction(r) for r in raw if np.any(r != 0)], axis=1)
            _sweep(coords, wc, total, dirs, min_leaf, best)
        if best.alpha is not None and p > 1:
            scale = 0.5
            for _ in range(refine_steps):
                cands = []
                for j in range(p):
                    for sign in (1.0, -1.0):
                        a = best.alpha.copy()
                        a[j] += sign * scale
                        if np.any(a != 0.0):
                            cands.append(canonical_direction(a))
                if cands:
                    _sweep(coords, wc, total, np.stack(cands, axis=1), min_leaf, best)
                scale *= 0.5
    if best.alpha is None or best.gain == -math.inf:
        return None
    return best.alpha, best.c, max(best.gain, 0.0)


def best_split(
    field: LatticeField,
    node: PointSet,
    cfg: TreeConfig,
    rng: Optional[np.random.Generator] = None,
) -> Optional[tuple[SplitRule, float]]:
    """Best hyperplane split of ``node`` found by the staged search.

    Returns ``None`` when no split leaves ``min_leaf`` points on both sides.
    ``rng`` defaults to the stream of the root node for ``cfg.seed``.
    """
    if rng is None:
        rng = node_rng(cfg.seed, 0)
    idx = node.indices
    found = _search(
        field.coords(idx), field.values[idx], cfg.min_leaf,
        cfg.random_dirs_for(field.p), cfg.refine_steps, rng,
    )
    if found is None:
        return None
    alpha, c, gain = found
    return SplitRule(alpha, c), gain


# ---------------------------------------------------------------------------
# growth


@dataclass(frozen=True, eq=False)
class LeafPartition:
    """Leaves of a grown tree.

    ``leaf_id[i]`` is the leaf of flat lattice index ``i``; leaves are numbered
    in order of their first member in scanline order. ``leaf_reason`` records
    why each leaf stopped ("gain", "size" or "max_leaves") and ``leaf_gain`` the
    best gain seen when it did (NaN when no search ran or no split was
    admissible).
    """

    dims: tuple[int, ...]
    leaf_id: np.ndarray
    leaf_count: int
    leaf_stats: list[NodeStats]
    split_log: list[SplitRecord]
    leaf_node: np.ndarray
    leaf_reason: list[str]
    leaf_gain: np.ndarray
    r_n: float = math.nan
    min_leaf: int = 1
    rules: dict = field(default_factory=dict, repr=False)

    def members(self, leaf: int) -> np.ndarray:
        return np.flatnonzero(self.leaf_id == leaf)

    def leaf_sizes(self) -> np.ndarray:
        return np.bincount(self.leaf_id, minlength=self.leaf_count)

    def ancestors(self, leaf: int) -> list[tuple[SplitRule, bool]]:
        """Half-spaces bounding a leaf, root first, as ``(rule, is_left_side)``."""
        path = []
        node = int(self.leaf_node[leaf])
        while node > 0:
            parent = (node - 1) // 2
            path.append((self.rules[parent], node == 2 * parent + 1))
            node = parent
        return path[::-1]

    def inside(self, leaf: int, coords: np.ndarray) -> np.ndarray:
        """Whether each coordinate row satisfies every ancestor half-space of ``leaf``."""
        coords = np.atleast_2d(coords)
        ok = np.ones(coords.shape[0], dtype=bool)
        for rule, left in self.ancestors(leaf):
            side = rule.goes_left(coords)
            ok &= side if left else ~side
        return ok


def locate_leaf(partition: LeafPartition, flat_index: int) -> int:
    i = int(flat_index)
    if not 0 <= i < partition.leaf_id.size:
        raise LatticeError(f"flat index {i} outside [0, {partition.leaf_id.size})")
    return int(partition.leaf_id[i])


def _finalize(field, leaves, rules, log, r_n, min_leaf) -> LeafPartition:
    leaves = sorted(leaves, key=lambda lf: int(lf[1][0]))
    leaf_id = np.empty(field.size, dtype=np.int64)
    stats, nodes, reasons, gains = [], [], [], []
    for k, (node_id, members, reason, gain) in enumerate(leaves):
        leaf_id[members] = k
        stats.append(NodeStats.of(field.values[members]))
        nodes.append(node_id)
        reasons.append(reason)
        gains.append(gain)
    leaf_id.setflags(write=False)
    return LeafPartition(
        dims=field.dims,
        leaf_id=leaf_id,
        leaf_count=len(leaves),
        leaf_stats=stats,
        split_log=log,
        leaf_node=np.array(nodes, dtype=object),
        leaf_reason=reasons,
        leaf_gain=np.array(gains, dtype=np.float64),
        r_n=r_n,
        min_leaf=min_leaf,
        rules=rules,
    )


def grow_tree(field: LatticeField, cfg: TreeConfig, threads: int = 1) -> LeafPartition:
    """Recursively split the whole lattice until every node is a leaf.

    The frontier is processed largest node first (ties by node id). With
    ``threads > 1`` the splits of the next few frontier nodes are searched
    concurrently, but they are accepted in the same order as a serial run, so
    the result does not depend on ``threads``.
    """
    coords = field.coords()
    values = field.values
    n_random = cfg.random_dirs_for(field.p)
    min_leaf = cfg.min_leaf

    def search(node_id, members):
        return _search(coords[members], values[members], min_leaf, n_random,
                       cfg.refine_steps, node_rng(cfg.seed, node_id))

    heap = [(-field.size, 0, np.arange(field.size))]
    leaves, rules, log = [], {}, []
    cache: dict[int, object] = {}
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while heap:
            neg_size, node_id, members = heapq.heappop(heap)
            if members.size < 2 * min_leaf:
                leaves.append((node_id, members, "size", math.nan))
                continue
            if cfg.max_leaves is not None and len(leaves) + len(heap) + 1 >= cfg.max_leaves:
                leaves.append((node_id, members, "max_leaves", math.nan))
                continue
            if node_id in cache:
                found = cache.pop(node_id)
            elif pool is not None:
                ahead = [e for e in heapq.nsmallest(threads - 1, heap) if e[2].size >= 2 * min_leaf]
                batch = [(node_id, members)] + [(e[1], e[2]) for e in ahead if e[1] not in cache]
                results = list(pool.map(lambda nm: search(*nm), batch))
                for (nid, _), res in zip(batch[1:], results[1:]):
                    cache[nid] = res
                found = results[0]
            else:
                found = search(node_id, members)
            if found is None:
                leaves.append((node_id, members, "gain", math.nan))
                continue
            alpha, c, gain = found
            if gain <= cfg.r_n:
                leaves.append((node_id, members, "gain", gain))
                continue
            rule = SplitRule(alpha, c)
            left = rule.goes_left(coords[members])
            rules[node_id] = rule
            log.append(SplitRecord(node_id, rule, gain))
            lm, rm = members[left], members[~left]
            heapq.heappush(heap, (-lm.size, 2 * node_id + 1, lm))
            heapq.heappush(heap, (-rm.size, 2 * node_id + 2, rm))
    finally:
        if pool is not None:
            pool.shutdown()
    return _finalize(field, leaves, rules, log, cfg.r_n, min_leaf)


def audit_leaves(field: LatticeField, partition: LeafPartition, cfg: TreeConfig) -> list[int]:
    """Leaves that violate the stopping rule when their split search is re-run.

    A leaf is sound if it is below ``2 * min_leaf`` points, was stopped by
    ``max_leaves``, or its best gain is at most ``r_n``.
    """
    bad = []
    sizes = partition.leaf_sizes()
    for k in range(partition.leaf_count):
        if partition.leaf_reason[k] in ("size", "max_leaves"):
            if partition.leaf_reason[k] == "size" and sizes[k] >= 2 * cfg.min_leaf:
                bad.append(k)
            continue
        node = PointSet(partition.members(k), field.dims)
        res = best_split(field, node, cfg, node_rng(cfg.seed, int(partition.leaf_node[k])))
        if res is not None and res[1] > cfg.r_n:
            bad.append(k)
    return bad


# ---------------------------------------------------------------------------
# split log text format: "node_id alpha_1 ... alpha_p c gain" per line


def format_split_log(records: Iterable[SplitRecord]) -> str:
    lines = []
    for rec in records:
        nums = [*rec.rule.alpha.tolist(), rec.rule.c, rec.gain]
        lines.append(" ".join([str(int(rec.node_id))] + [format(v, ".17g") for v in nums]))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_split_log(text: str) -> list[SplitRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 4:
            raise ValueError(f"split log line {lineno}: expected node id, alpha, c and gain")
        nums = [float(x) for x in parts[1:]]
        records.append(SplitRecord(int(parts[0]), SplitRule(np.array(nums[:-2]), nums[-2]), nums[-1]))
    return records


def partition_from_split_log(field: LatticeField, records: Iterable[SplitRecord]) -> np.ndarray:
    """Replay recorded splits on ``field``'s lattice; returns leaf node id per point."""
    coords = field.coords()
    node_of = np.zeros(field.size, dtype=object)
    for rec in records:
        members = np.flatnonzero(node_of == rec.node_id)
        if members.size == 0:
            raise ValueError(f"split log refers to empty or unknown node {rec.node_id}")
        left = rec.rule.goes_left(coords[members])
        node_of[members[left]] = 2 * rec.node_id + 1
        node_of[members[~left]] = 2 * rec.node_id + 2
    return node_of
