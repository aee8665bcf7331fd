"""Exact geometry of shifted dyadic cubes.

All corner arithmetic uses :class:`fractions.Fraction`, so containment,
tiling, and distance comparisons are exact.  A cube is indexed by a scale
``k`` (side ``2**-k``), an integer corner vector ``m``, and a shift vector
``omega`` with entries in ``{0, 1, 2}``.  Axis ``i`` of the cube spans::

    [2**-k * (m_i + s*omega_i/3), 2**-k * (m_i + 1 + s*omega_i/3))

where ``s = +1`` at odd scales and ``-1`` at even scales.  Alternating the
shift orientation makes consecutive scales of each shifted family nest
exactly (children tile their parent), while the central thirds of the three
shifted families still tile space at every scale.  A scale-independent
orientation would leave same-family cubes at consecutive scales partially
overlapping, so no stopping-time recursion could descend through them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

__all__ = [
    "Box",
    "DyadicCube",
    "CubePoset",
    "shift_sign",
    "cube_box",
    "third_dilate",
    "concentric_dilate",
    "children",
    "parent",
    "box_gap_sq",
    "whitney_decompose",
]

SHIFT_CHOICES = (0, 1, 2)


def shift_sign(k: int) -> int:
    """Orientation of the one-third shift at scale ``k`` (+1 odd, -1 even)."""
    return 1 if k % 2 else -1


@dataclass(frozen=True)
class Box:
    """Half-open axis-parallel box with exact rational corners."""

    lower: tuple[Fraction, ...]
    upper: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper):
            raise ValueError("corner dimension mismatch")
        for lo, hi in zip(self.lower, self.upper):
            if lo >= hi:
                raise ValueError("empty box: lower corner must be below upper")

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> tuple[Fraction, ...]:
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))

    @property
    def center(self) -> tuple[Fraction, ...]:
        return tuple((lo + hi) / 2 for lo, hi in zip(self.lower, self.upper))

    def volume(self) -> Fraction:
        v = Fraction(1)
        for s in self.sides:
            v *= s
        return v

    def contains_point(self, x: Sequence[Fraction]) -> bool:
        return all(lo <= xi < hi for lo, xi, hi in zip(self.lower, x, self.upper))

    def contains_box(self, other: "Box") -> bool:
        return all(
            lo <= olo and ohi <= hi
            for lo, hi, olo, ohi in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def intersects(self, other: "Box") -> bool:
        return all(
            max(lo, olo) < min(hi, ohi)
            for lo, hi, olo, ohi in zip(self.lower, self.upper, other.lower, other.upper)
        )


@dataclass(frozen=True)
class DyadicCube:
    """Shifted dyadic cube of side ``2**-k``."""

    k: int
    m: tuple[int, ...]
    omega: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.m) != len(self.omega):
            raise ValueError("m and omega dimension mismatch")
        if not self.m:
            raise ValueError("dimension must be at least one")
        if any(w not in SHIFT_CHOICES for w in self.omega):
            raise ValueError("shift entries must lie in {0, 1, 2}")

    @property
    def n(self) -> int:
        return len(self.m)

    @property
    def side(self) -> Fraction:
        return Fraction(2) ** (-self.k)

    def box(self) -> Box:
        return cube_box(self)


def cube_box(c: DyadicCube) -> Box:
    """Exact corner box of a shifted dyadic cube."""
    scale = Fraction(2) ** (-c.k)
    s = shift_sign(c.k)
    lower = tuple(scale * (mi + Fraction(s * wi, 3)) for mi, wi in zip(c.m, c.omega))
    upper = tuple(lo + scale for lo in lower)
    return Box(lower, upper)


def _as_box(q: DyadicCube | Box) -> Box:
    return q if isinstance(q, Box) else cube_box(q)


def third_dilate(q: DyadicCube | Box) -> Box:
    """Concentric central third of a cube or box."""
    return concentric_dilate(q, Fraction(1, 3))


def concentric_dilate(q: DyadicCube | Box, factor: Fraction | int) -> Box:
    """Box with the same center and sides scaled by ``factor`` (> 0, exact)."""
    factor = Fraction(factor)
    if factor <= 0:
        raise ValueError("dilation factor must be positive")
    box = _as_box(q)
    lower = []
    upper = []
    for lo, hi in zip(box.lower, box.upper):
        c = (lo + hi) / 2
        half = (hi - lo) * factor / 2
        lower.append(c - half)
        upper.append(c + half)
    return Box(tuple(lower), tuple(upper))


def children(c: DyadicCube) -> list[DyadicCube]:
    """The ``2**n`` scale ``k+1`` cubes of the same shifted family tiling ``c``."""
    s = shift_sign(c.k)
    base = tuple(2 * mi + s * wi for mi, wi in zip(c.m, c.omega))
    kids = []
    for offs in itertools.product((0, 1), repeat=c.n):
        kids.append(DyadicCube(c.k + 1, tuple(b + e for b, e in zip(base, offs)), c.omega))
    return kids


def parent(c: DyadicCube) -> DyadicCube:
    """The scale ``k-1`` cube of the same family containing ``c``."""
    s = shift_sign(c.k - 1)
    m = tuple((mi - s * wi) // 2 for mi, wi in zip(c.m, c.omega))
    up = DyadicCube(c.k - 1, m, c.omega)
    if not cube_box(up).contains_box(cube_box(c)):
        raise AssertionError("parent does not contain child")
    return up


def box_gap_sq(a: Box, b: Box) -> Fraction:
    """Squared Euclidean distance between two boxes, exact."""
    total = Fraction(0)
    for alo, ahi, blo, bhi in zip(a.lower, a.upper, b.lower, b.upper):
        gap = max(blo - ahi, alo - bhi, Fraction(0))
        total += gap * gap
    return total


def cube_containing_point(x: Sequence[Fraction], k: int, omega: tuple[int, ...]) -> DyadicCube:
    """The unique scale-``k`` cube of family ``omega`` containing ``x``."""
    scale = Fraction(2) ** (-k)
    s = shift_sign(k)
    m = []
    for xi, wi in zip(x, omega):
        t = xi / scale - Fraction(s * wi, 3)
        m.append(t.numerator // t.denominator)
    c = DyadicCube(k, tuple(m), omega)
    if not cube_box(c).contains_point(x):
        raise AssertionError("point landed outside its computed cube")
    return c


class CubePoset:
    """Finite collection of cubes/boxes ordered by inclusion of central thirds.

    ``q1 <= q2`` holds when the central third of ``q1`` sits inside the
    central third of ``q2``.  The poset also carries a rank function; the
    structural checks confirm that inclusion is graded by it (every covering
    step changes the rank by exactly one) and that rank-zero elements are the
    maximal ones.
    """

    def __init__(self, elements: Sequence[DyadicCube | Box], ranks: Sequence[int]):
        if len(elements) != len(ranks):
            raise ValueError("one rank per element required")
        self.elements = list(elements)
        self.ranks = list(ranks)
        self._thirds = [third_dilate(e) for e in elements]

    def __len__(self) -> int:
        return len(self.elements)

    def leq(self, i: int, j: int) -> bool:
        """Whether element ``i`` precedes ``j`` (third of i inside third of j)."""
        return self._thirds[j].contains_box(self._thirds[i])

    def covers(self, i: int, j: int) -> bool:
        """Whether ``j`` covers ``i``: i < j with nothing strictly between."""
        if i == j or not self.leq(i, j):
            return False
        for t in range(len(self.elements)):
            if t in (i, j):
                continue
            if self.leq(i, t) and self.leq(t, j) and not self.leq(j, t):
                return False
        return True

    def check_graded(self) -> list[str]:
        """Structural violations of the graded-poset axioms (empty if sound)."""
        bad: list[str] = []
        size = len(self.elements)
        for i in range(size):
            for j in range(size):
                if i == j:
                    continue
                if self.leq(i, j) and self.leq(j, i):
                    bad.append(f"elements {i} and {j} have identical thirds")
                elif self.leq(i, j) and self.ranks[i] <= self.ranks[j]:
                    bad.append(
                        f"rank not compatible: {i} (rank {self.ranks[i]}) "
                        f"below {j} (rank {self.ranks[j]})"
                    )
        for i in range(size):
            for j in range(size):
                if i != j and self.covers(i, j) and self.ranks[i] != self.ranks[j] + 1:
                    bad.append(
                        f"cover {j} -> {i} jumps rank {self.ranks[j]} -> {self.ranks[i]}"
                    )
        for i in range(size):
            if self.ranks[i] == 0:
                continue
            if not any(
                self.leq(i, j) for j in range(size) if j != i and self.ranks[j] == 0
            ):
                bad.append(f"element {i} (rank {self.ranks[i]}) below no rank-0 element")
        return bad


def whitney_decompose(
    open_cells,
    omega: tuple[int, ...],
    grid,
) -> list[DyadicCube]:
    """Maximal dyadic cubes of family ``omega`` contained in a grid open set.

    ``open_cells`` is a boolean cell mask on ``grid`` (the open set is the
    union of the flagged cells, all other space counts as complement).  The
    returned cubes are pairwise disjoint, their union is exactly the open
    set, and each one's parent meets the complement.  Since the triple of a
    cube contains its parent, the concentric ``3``-dilate of every returned
    cube meets the complement, hence so does any larger dilate such as
    ``4 * sqrt(n)``.
    """
    import numpy as np

    mask = np.asarray(open_cells, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError("open set mask must match the grid shape")
    if mask.ndim != len(omega):
        raise ValueError("shift dimension must match the grid dimension")
    if not mask.any():
        return []

    # Pyramid of per-cube counts of flagged cells, one level per scale.
    # A cube is inside the open set iff its count equals its cell capacity;
    # out-of-domain cells never contribute, so cubes poking past the domain
    # can never be selected (the exterior counts as complement).
    counts = {grid.kappa: mask.astype(np.int64)}
    offsets = {grid.kappa: tuple(grid.cell_origin_index(grid.kappa, omega))}
    k = grid.kappa
    while k > grid.coarsest_scale(omega):
        counts[k - 1], offsets[k - 1] = _coarsen_counts(
            counts[k], offsets[k], k, omega, grid
        )
        k -= 1

    top = grid.coarsest_scale(omega)
    out: list[DyadicCube] = []
    stack = [
        (top, idx)
        for idx in itertools.product(*(range(s) for s in counts[top].shape))
        if counts[top][idx] > 0
    ]
    while stack:
        k, idx = stack.pop()
        cnt = counts[k][idx]
        if cnt == 0:
            continue
        if cnt == (1 << ((grid.kappa - k) * grid.n)):
            m = tuple(o + i for o, i in zip(offsets[k], idx))
            out.append(DyadicCube(k, m, omega))
            continue
        if k == grid.kappa:
            continue
        m = tuple(o + i for o, i in zip(offsets[k], idx))
        for kid in children(DyadicCube(k, m, omega)):
            kidx = tuple(mi - o for mi, o in zip(kid.m, offsets[k + 1]))
            if all(0 <= i < s for i, s in zip(kidx, counts[k + 1].shape)):
                stack.append((k + 1, kidx))
    out.sort(key=lambda c: (c.k, c.m))
    return out


def _coarsen_counts(fine, fine_offset, k_fine, omega, grid):
    """Sum scale-``k_fine`` cube counts into their scale ``k_fine - 1`` parents."""
    import numpy as np

    n = fine.ndim
    s = shift_sign(k_fine - 1)
    par_lo = []
    par_hi = []
    for ax in range(n):
        lo_child = fine_offset[ax]
        hi_child = fine_offset[ax] + fine.shape[ax] - 1
        # child index m decomposes as 2*mp + s*omega + e with e in {0,1}
        par_lo.append((lo_child - s * omega[ax] - 1) // 2)
        par_hi.append((hi_child - s * omega[ax]) // 2)
    shape = tuple(hi - lo + 1 for lo, hi in zip(par_lo, par_hi))
    coarse = np.zeros(shape, dtype=np.int64)
    for offs in itertools.product((0, 1), repeat=n):
        # child index along axis ax for parent slot p: 2*p + s*omega + e
        slices_c = []
        slices_f = []
        ok = True
        for ax in range(n):
            first_child = 2 * par_lo[ax] + s * omega[ax] + offs[ax]
            start = first_child - fine_offset[ax]
            idx = np.arange(shape[ax]) * 2 + start
            valid = (idx >= 0) & (idx < fine.shape[ax])
            if not valid.any():
                ok = False
                break
            slices_c.append(np.flatnonzero(valid))
            slices_f.append(idx[valid])
        if not ok:
            continue
        coarse[np.ix_(*slices_c)] += fine[np.ix_(*slices_f)]
    return coarse, tuple(par_lo)


def enumerate_cubes(
    k: int,
    omega: tuple[int, ...],
    window: Box,
) -> Iterable[DyadicCube]:
    """All scale-``k`` cubes of family ``omega`` meeting a window box."""
    scale = Fraction(2) ** (-k)
    s = shift_sign(k)
    ranges = []
    for ax in range(window.n):
        off = Fraction(s * omega[ax], 3)
        lo = window.lower[ax] / scale - off
        hi = window.upper[ax] / scale - off
        first = lo.numerator // lo.denominator - 1
        last = hi.numerator // hi.denominator + 1
        ranges.append(range(first, last + 1))
    for m in itertools.product(*ranges):
        c = DyadicCube(k, tuple(m), omega)
        if cube_box(c).intersects(window):
            yield c
