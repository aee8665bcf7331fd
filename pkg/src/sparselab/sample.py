"""Sampled functions on uniform grids over a dyadic box domain.

The domain is ``[-2**K, 2**K)**n`` split into cells of width ``2**-kappa``;
samples live at cell centers.  Cell centers have odd numerators over
``2**(kappa+1)`` while shifted-cube corners are thirds of dyadic rationals,
so a center can never land on a corner: membership of cells in cubes is
exact, and every cube with ``-K <= k <= kappa`` holds exactly
``2**((kappa-k)*n)`` cells per its volume.  Functions are extended by zero
outside the domain; averages over boxes poking past the boundary integrate
that extension while normalizing by the full box volume.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .dyadic import Box, DyadicCube, cube_box, shift_sign, third_dilate

__all__ = [
    "GridSpec",
    "GridFunction",
    "ExponentPair",
    "average_p",
    "make_corpus",
    "save_grid_function",
    "load_grid_function",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over ``[-2**K, 2**K)**n`` with spacing ``2**-kappa``."""

    n: int
    K: int
    kappa: int

    def __post_init__(self) -> None:
        if self.n not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")
        if self.kappa < 0 or self.K + self.kappa < 0:
            raise ValueError("grid resolution must not be coarser than the domain")

    @property
    def N(self) -> int:
        """Number of cells per axis."""
        return 2 ** (self.K + self.kappa + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def h(self) -> Fraction:
        return Fraction(1, 2**self.kappa)

    @property
    def halfwidth(self) -> Fraction:
        return Fraction(2**self.K)

    def domain(self) -> Box:
        lo = -self.halfwidth
        hi = self.halfwidth
        return Box((lo,) * self.n, (hi,) * self.n)

    def central_half(self) -> Box:
        lo = -self.halfwidth / 2
        hi = self.halfwidth / 2
        return Box((lo,) * self.n, (hi,) * self.n)

    def centers(self) -> np.ndarray:
        """Cell-center coordinates along one axis as floats."""
        h = float(self.h)
        return (np.arange(self.N) + 0.5) * h - float(self.halfwidth)

    def center_fraction(self, i: int) -> Fraction:
        return (2 * i + 1) * self.h / 2 - self.halfwidth

    def freqs(self) -> np.ndarray:
        """Discrete frequencies along one axis, FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=float(self.h))

    def cell_range(self, lo: Fraction, hi: Fraction) -> tuple[int, int]:
        """Index range ``[i0, i1)`` of cells whose centers lie in ``[lo, hi)``."""
        # center_i = (2i+1)h/2 - L >= lo  <=>  i >= (lo+L)/h - 1/2
        t0 = (lo + self.halfwidth) / self.h - Fraction(1, 2)
        t1 = (hi + self.halfwidth) / self.h - Fraction(1, 2)
        i0 = -((-t0.numerator) // t0.denominator)  # ceil
        i1 = -((-t1.numerator) // t1.denominator)
        return max(i0, 0), min(max(i1, 0), self.N)

    def box_cell_ranges(self, box: Box) -> tuple[tuple[int, int], ...]:
        if box.n != self.n:
            raise ValueError("box dimension does not match the grid")
        return tuple(self.cell_range(lo, hi) for lo, hi in zip(box.lower, box.upper))

    def box_cell_count(self, box: Box) -> int:
        count = 1
        for i0, i1 in self.box_cell_ranges(box):
            count *= max(i1 - i0, 0)
        return count

    def box_flat_cells(self, box: Box) -> np.ndarray:
        """Flat indices of in-domain cells whose centers lie in ``box``."""
        ranges = self.box_cell_ranges(box)
        axes = [np.arange(i0, i1) for i0, i1 in ranges]
        if any(a.size == 0 for a in axes):
            return np.empty(0, dtype=np.int64)
        if self.n == 1:
            return axes[0].astype(np.int64)
        return (axes[0][:, None] * self.N + axes[1][None, :]).ravel().astype(np.int64)

    def cell_origin_index(self, k: int, omega: tuple[int, ...]) -> tuple[int, ...]:
        """Index ``m`` of the scale-``k`` cube holding cell 0, per axis."""
        if k != self.kappa:
            raise ValueError("origin index is defined at the cell scale")
        s = shift_sign(k)
        out = []
        for w in omega:
            t = Fraction(1, 2) - self.N // 2 - Fraction(s * w, 3)
            out.append(t.numerator // t.denominator)
        return tuple(out)

    def coarsest_scale(self, omega: tuple[int, ...]) -> int:
        return -(self.K + 2)


class GridFunction:
    """Complex samples at the cell centers of a :class:`GridSpec`."""

    def __init__(self, spec: GridSpec, values: np.ndarray, name: str = ""):
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != spec.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {spec.shape}")
        values = values.copy()
        values.setflags(write=False)
        self.spec = spec
        self.values = values
        self.name = name

    @classmethod
    def zeros(cls, spec: GridSpec, name: str = "") -> "GridFunction":
        return cls(spec, np.zeros(spec.shape, dtype=np.complex128), name)

    @classmethod
    def from_callable(
        cls, spec: GridSpec, fn: Callable[..., np.ndarray], name: str = ""
    ) -> "GridFunction":
        c = spec.centers()
        if spec.n == 1:
            vals = fn(c)
        else:
            vals = fn(c[:, None], c[None, :])
        return cls(spec, np.broadcast_to(vals, spec.shape), name)

    @classmethod
    def indicator(cls, spec: GridSpec, box: Box, amplitude: complex = 1.0,
                  name: str = "") -> "GridFunction":
        vals = np.zeros(spec.shape, dtype=np.complex128)
        sl = tuple(slice(i0, i1) for i0, i1 in spec.box_cell_ranges(box))
        vals[sl] = amplitude
        return cls(spec, vals, name)

    def with_values(self, values: np.ndarray, name: str | None = None) -> "GridFunction":
        return GridFunction(self.spec, values, self.name if name is None else name)

    def support_box(self) -> Box | None:
        """Smallest cell-aligned box containing all nonzero cells."""
        nz = np.nonzero(np.abs(self.values) > 0)
        if nz[0].size == 0:
            return None
        h = self.spec.h
        L = self.spec.halfwidth
        lower = []
        upper = []
        for ax in range(self.spec.n):
            lower.append(int(nz[ax].min()) * h - L)
            upper.append((int(nz[ax].max()) + 1) * h - L)
        return Box(tuple(lower), tuple(upper))

    def lp_norm(self, p: float) -> float:
        a = np.abs(self.values)
        if math.isinf(p):
            return float(a.max(initial=0.0))
        hn = float(self.spec.h) ** self.spec.n
        return float((hn * np.sum(a**p)) ** (1.0 / p))

    def restrict_box(self, box: Box) -> "GridFunction":
        vals = np.zeros(self.spec.shape, dtype=np.complex128)
        sl = tuple(slice(i0, i1) for i0, i1 in self.spec.box_cell_ranges(box))
        vals[sl] = self.values[sl]
        return GridFunction(self.spec, vals, self.name)

    def restrict_cells(self, flat_cells: np.ndarray) -> "GridFunction":
        vals = np.zeros(self.spec.N**self.spec.n, dtype=np.complex128)
        flat = self.values.ravel()
        vals[flat_cells] = flat[flat_cells]
        return GridFunction(self.spec, vals.reshape(self.spec.shape), self.name)


@dataclass(frozen=True)
class ExponentPair:
    """Lebesgue exponent pair ``1 <= r <= s <= inf`` with derived duals."""

    r: float
    s: float

    def __post_init__(self) -> None:
        if not (1 <= self.r <= self.s):
            raise ValueError("exponents violate 1 <= r <= s")

    @staticmethod
    def _dual(p: float) -> float:
        if math.isinf(p):
            return 1.0
        if p == 1:
            return math.inf
        return p / (p - 1)

    @property
    def r_prime(self) -> float:
        return self._dual(self.r)

    @property
    def s_prime(self) -> float:
        return self._dual(self.s)

    @property
    def schur_p(self) -> float:
        """Exponent ``p`` with ``1/s + 1 = 1/p + 1/r`` (Young-type relation).

        ``inv == 0`` (the (1, inf) corner) means ``p = inf``: the kernel-sup
        bound.  Since r <= s forces ``inv >= 0``, this never raises, but the
        guard stays as a tripwire for future exponent relaxations.
        """
        inv = 1.0 + (0.0 if math.isinf(self.s) else 1.0 / self.s) - 1.0 / self.r
        if inv < 0:
            raise ValueError("no admissible Schur exponent for this pair")
        return math.inf if inv == 0 else 1.0 / inv


def _region_cells_and_volume(
    f: GridFunction, region: DyadicCube | Box | np.ndarray
) -> tuple[np.ndarray, float]:
    spec = f.spec
    if isinstance(region, DyadicCube):
        region = cube_box(region)
    if isinstance(region, Box):
        if any(s < spec.h for s in region.sides):
            raise ValueError("subgrid cube")
        cells = spec.box_flat_cells(region)
        vol = float(region.volume())
        return cells, vol
    cells = np.asarray(region, dtype=np.int64)
    vol = cells.size * float(spec.h) ** spec.n
    return cells, vol


def average_p(
    f: GridFunction, region: DyadicCube | Box | np.ndarray, p: float
) -> float:
    """p-average ``(|Q|**-1 * integral_Q |f|**p)**(1/p)`` over a cube, box,
    or explicit cell set; ``p = inf`` gives the cell max."""
    cells, vol = _region_cells_and_volume(f, region)
    a = np.abs(f.values.ravel()[cells])
    if math.isinf(p):
        return float(a.max(initial=0.0))
    if vol <= 0:
        raise ValueError("region has no volume")
    hn = float(f.spec.h) ** f.spec.n
    return float((hn * np.sum(a**p) / vol) ** (1.0 / p))


def _smooth_bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=np.float64)
    inside = np.abs(t) < 1
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def make_corpus(spec: GridSpec, seed: int, count: int) -> list[GridFunction]:
    """Deterministic mix of bumps, cube indicators, sign combs, and windowed
    band-limited noise, all supported inside the central half of the domain."""
    rng = np.random.default_rng(seed)
    half = spec.central_half()
    out: list[GridFunction] = []
    kinds = ("bump", "indicator", "comb", "bandnoise")
    for idx in range(count):
        kind = kinds[idx % len(kinds)]
        amp = float(rng.uniform(0.5, 2.0))
        if kind == "bump":
            c = rng.uniform(-float(spec.halfwidth) / 4, float(spec.halfwidth) / 4, spec.n)
            w = rng.uniform(float(spec.halfwidth) / 8, float(spec.halfwidth) / 4, spec.n)
            if spec.n == 1:
                fn = lambda x: amp * _smooth_bump((x - c[0]) / w[0])
            else:
                fn = lambda x, y: amp * (
                    _smooth_bump((x - c[0]) / w[0]) * _smooth_bump((y - c[1]) / w[1])
                )
            gf = GridFunction.from_callable(spec, fn, f"bump_{idx:02d}")
        elif kind == "indicator":
            gf = GridFunction.indicator(
                spec, _random_cell_box(rng, spec, half), amp, f"indicator_{idx:02d}"
            )
        elif kind == "comb":
            box = _random_cell_box(rng, spec, half)
            signs = rng.choice([-1.0, 1.0], size=spec.shape)
            vals = np.zeros(spec.shape, dtype=np.complex128)
            sl = tuple(slice(i0, i1) for i0, i1 in spec.box_cell_ranges(box))
            vals[sl] = amp * signs[sl]
            gf = GridFunction(spec, vals, f"comb_{idx:02d}")
        else:
            cutoff = 2 ** int(rng.integers(2, max(3, spec.kappa - 1)))
            vals = _band_noise(rng, spec, cutoff)
            window = GridFunction.from_callable(
                spec,
                (lambda x: _smooth_bump(x / (float(spec.halfwidth) / 2)))
                if spec.n == 1
                else (
                    lambda x, y: _smooth_bump(x / (float(spec.halfwidth) / 2))
                    * _smooth_bump(y / (float(spec.halfwidth) / 2))
                ),
            ).values.real
            vals = vals * window
            peak = np.abs(vals).max()
            if peak > 0:
                vals = vals * (amp / peak)
            gf = GridFunction(spec, vals, f"bandnoise_{idx:02d}")
        out.append(gf)
    return out


def _random_cell_box(rng: np.random.Generator, spec: GridSpec, within: Box) -> Box:
    """Random cell-aligned box with dyadic side, inside ``within``."""
    h = spec.h
    max_cells = int((within.upper[0] - within.lower[0]) / h)
    side_cells = 2 ** int(rng.integers(0, max(1, int(math.log2(max_cells)))))
    lower = []
    upper = []
    for ax in range(spec.n):
        lo_cell, hi_cell = spec.cell_range(within.lower[ax], within.upper[ax])
        start = int(rng.integers(lo_cell, max(hi_cell - side_cells, lo_cell) + 1))
        lower.append(start * h - spec.halfwidth)
        upper.append((start + side_cells) * h - spec.halfwidth)
    return Box(tuple(lower), tuple(upper))


def _band_noise(rng: np.random.Generator, spec: GridSpec, cutoff: float) -> np.ndarray:
    xi = spec.freqs()
    if spec.n == 1:
        mask = np.abs(xi) <= cutoff
        coef = (rng.standard_normal(spec.N) + 1j * rng.standard_normal(spec.N)) * mask
        vals = np.fft.ifft(coef)
    else:
        ax = np.abs(xi)
        mask = np.sqrt(ax[:, None] ** 2 + ax[None, :] ** 2) <= cutoff
        coef = (
            rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
        ) * mask
        vals = np.fft.ifft2(coef)
    return vals.real


def save_grid_function(path, f: GridFunction) -> None:
    """Write the plain-text header ``n K kappa`` then interleaved float64
    real/imaginary parts of the samples in row-major order."""
    flat = f.values.ravel()
    buf = np.empty(2 * flat.size, dtype=np.float64)
    buf[0::2] = flat.real
    buf[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(f"{f.spec.n} {f.spec.K} {f.spec.kappa}\n".encode("ascii"))
        fh.write(buf.tobytes())


def load_grid_function(path) -> GridFunction:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3:
            raise ValueError("malformed grid function header")
        n, K, kappa = (int(t) for t in header)
        spec = GridSpec(n, K, kappa)
        buf = np.frombuffer(fh.read(), dtype=np.float64)
    expected = 2 * spec.N**spec.n
    if buf.size != expected:
        raise ValueError(f"payload holds {buf.size} floats, expected {expected}")
    vals = (buf[0::2] + 1j * buf[1::2]).reshape(spec.shape)
    return GridFunction(spec, vals)
