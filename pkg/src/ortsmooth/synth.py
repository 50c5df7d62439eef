"""Synthetic piecewise-continuous surfaces and seeded Gaussian noise.

A surface is ``f(z) = g(z) + delta_l`` on convex region ``l`` and
``g(z) + delta_0`` outside every listed region, where each region is an
intersection of closed half-spaces ``a . z <= b``. Points on a shared boundary
belong to the first listed region that contains them.

Spec files
----------
Plain text, one directive per line, ``#`` starts a comment::

    base zero                      # or: base linear c0 c1 .. cp
                                   # or: base quadratic c0 c1 .. cp d1 .. dp
    background 0.0                 # delta_0
    region 1.0                     # opens a region with jump delta_l
    0.0 -1.0 -0.2                  # half-space a_1 .. a_p b  (a . z <= b)
    ...
    end

``linear`` means ``c0 + sum c_j z_j``; ``quadratic`` adds ``sum d_j z_j^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import LatticeField

BOUNDARY_TOL = 1e-12

HalfSpace = tuple[np.ndarray, float]


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")


@dataclass
class PiecewiseSpec:
    regions: list[list[HalfSpace]] = field(default_factory=list)
    jumps: list[float] = field(default_factory=list)
    base: tuple[str, tuple[float, ...]] = ("zero", ())
    background_jump: float = 0.0

    def __post_init__(self):
        if len(self.regions) != len(self.jumps):
            raise ValueError("need exactly one jump per region")
        self.regions = [[(np.asarray(a, dtype=np.float64), float(b)) for a, b in reg]
                        for reg in self.regions]
        self.jumps = [float(d) for d in self.jumps]
        kind, coeffs = self.base
        if kind not in ("zero", "linear", "quadratic"):
            raise ValueError(f"unknown base function {kind!r}")
        self.base = (kind, tuple(float(c) for c in coeffs))

    @property
    def p(self) -> int | None:
        for reg in self.regions:
            for a, _ in reg:
                return a.size
        return None

    def base_value(self, coords: np.ndarray) -> np.ndarray:
        kind, c = self.base
        if kind == "zero":
            return np.zeros(coords.shape[0])
        p = coords.shape[1]
        if kind == "linear":
            if len(c) != p + 1:
                raise ValueError(f"linear base needs {p + 1} coefficients")
            return c[0] + coords @ np.asarray(c[1:])
        if len(c) != 2 * p + 1:
            raise ValueError(f"quadratic base needs {2 * p + 1} coefficients")
        return c[0] + coords @ np.asarray(c[1:p + 1]) + (coords ** 2) @ np.asarray(c[p + 1:])

    def region_of(self, coords: np.ndarray) -> np.ndarray:
        """Index of the first closed region containing each point, -1 for background."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        out = np.full(coords.shape[0], -1, dtype=np.int64)
        for l, reg in enumerate(self.regions):
            inside = np.ones(coords.shape[0], dtype=bool)
            for a, b in reg:
                inside &= coords @ a <= b + BOUNDARY_TOL
            out[(out < 0) & inside] = l
        return out

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        jumps = np.append(np.asarray(self.jumps, dtype=np.float64), self.background_jump)
        return self.base_value(coords) + jumps[self.region_of(coords)]


def render(spec: PiecewiseSpec, dims: Sequence[int]) -> LatticeField:
    """Noise-free surface sampled at every lattice point of a ``dims`` grid."""
    dims = tuple(int(d) for d in dims)
    proto = LatticeField(dims, np.zeros(int(np.prod(dims))))
    return proto.with_values(spec.evaluate(proto.coords()))


def region_labels(spec: PiecewiseSpec, dims: Sequence[int]) -> np.ndarray:
    """Region index (background = -1) of every lattice point, flat."""
    proto = LatticeField(tuple(dims), np.zeros(int(np.prod(dims))))
    return spec.region_of(proto.coords())


def overlapping_points(spec: PiecewiseSpec, n_samples: int = 10_000, seed: int = 0) -> int:
    """Number of uniform random points strictly inside two or more regions."""
    p = spec.p
    if p is None:
        return 0
    pts = np.random.default_rng(seed).random((n_samples, p))
    count = np.zeros(n_samples, dtype=np.int64)
    for reg in spec.regions:
        inside = np.ones(n_samples, dtype=bool)
        for a, b in reg:
            inside &= pts @ a < b - BOUNDARY_TOL
        count += inside
    return int(np.sum(count > 1))


def simplex_halfspaces(vertices) -> list[HalfSpace]:
    """Facets of the simplex spanned by p + 1 vertices, as ``a . z <= b`` with unit ``a``."""
    v = np.asarray(vertices, dtype=np.float64)
    k, p = v.shape
    if k != p + 1:
        raise ValueError(f"a {p}-simplex needs {p + 1} vertices, got {k}")
    out = []
    for skip in range(k):
        face = np.delete(v, skip, axis=0)
        normal = np.linalg.svd(face[1:] - face[0])[2][-1]
        b = float(normal @ face[0])
        if normal @ v[skip] > b:
            normal, b = -normal, -b
        out.append((normal, b))
    return out


TRIANGLE_VERTICES = ((0.2, 0.2), (0.8, 0.2), (0.5, 0.8))
TETRAHEDRON_VERTICES = ((0.2, 0.2, 0.2), (0.8, 0.2, 0.2), (0.5, 0.8, 0.2), (0.5, 0.45, 0.8))


def triangle_spec() -> PiecewiseSpec:
    """Unit-intensity triangle on a zero background."""
    return PiecewiseSpec([simplex_halfspaces(TRIANGLE_VERTICES)], [1.0])


def tetrahedron_spec() -> PiecewiseSpec:
    """Unit-intensity tetrahedron with its base face in the plane z = 0.2."""
    return PiecewiseSpec([simplex_halfspaces(TETRAHEDRON_VERTICES)], [1.0])


def two_region_spec(alpha=(1.0, 2.0), c: float = 1.3, low: float = 0.0, high: float = 1.0) -> PiecewiseSpec:
    """Two constant regions separated by the hyperplane ``alpha . z = c``.

    The closed side ``alpha . z <= c`` takes ``high``.
    """
    a = np.asarray(alpha, dtype=np.float64)
    return PiecewiseSpec([[(a, float(c))]], [high], background_jump=low)


PRESETS = {
    "triangle": triangle_spec,
    "tetrahedron": tetrahedron_spec,
    "two-region": two_region_spec,
}


def add_noise(field: LatticeField, noise: NoiseModel) -> LatticeField:
    """Add i.i.d. N(0, sigma^2) noise drawn from a Philox stream keyed by ``noise.seed``.

    Draw ``i`` always lands on flat index ``i``, so the result depends only on
    ``(field, seed, sigma)``.
    """
    if noise.sigma == 0:
        return field
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(noise.seed)))
    return field.with_values(field.values + noise.sigma * gen.standard_normal(field.size))


# ---------------------------------------------------------------------------
# text format


def format_spec(spec: PiecewiseSpec) -> str:
    kind, coeffs = spec.base
    lines = [" ".join(["base", kind, *(repr(c) for c in coeffs)]),
             f"background {spec.background_jump!r}"]
    for reg, d in zip(spec.regions, spec.jumps):
        lines.append(f"region {d!r}")
        for a, b in reg:
            lines.append(" ".join(repr(float(x)) for x in [*a, b]))
        lines.append("end")
    return "\n".join(lines) + "\n"


def parse_spec(text: str) -> PiecewiseSpec:
    base = ("zero", ())
    background = 0.0
    regions, jumps = [], []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if current is not None:
                if head == "end":
                    if not current:
                        raise ValueError("region has no half-spaces")
                    regions.append(current)
                    current = None
                else:
                    nums = [float(x) for x in line.split()]
                    if len(nums) < 2:
                        raise ValueError("half-space needs a_1 .. a_p b")
                    current.append((np.asarray(nums[:-1]), nums[-1]))
            elif head == "base":
                if not rest:
                    raise ValueError("base needs a kind")
                base = (rest[0], tuple(float(x) for x in rest[1:]))
            elif head == "background":
                background = float(rest[0])
            elif head == "region":
                jumps.append(float(rest[0]))
                current = []
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"spec line {lineno}: {exc}") from None
    if current is not None:
        raise ValueError("unterminated region block (missing 'end')")
    dims = {a.size for reg in regions for a, _ in reg}
    if len(dims) > 1:
        raise ValueError(f"half-spaces disagree on dimension: {sorted(dims)}")
    return PiecewiseSpec(regions, jumps, base, background)
