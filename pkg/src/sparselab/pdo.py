"""Grid realizations of symbol operators and their frequency/space pieces.

Quadrature convention: with samples at cell centers and discrete frequencies
``xi_k = 2 pi k / (N h)`` the forward transform is
``fhat(xi) = (2 pi)**-n * h**n * sum_x f(x) exp(-i xi x)`` and the operator is

    T f(x) = sum_xi a(x, xi) fhat(xi) exp(i xi x) dxi**n.

With this pairing the constant symbol reproduces ``f`` exactly on the grid
(discrete orthogonality), so identity probes have no quadrature floor.  The
kernel of a piece is ``K(x, z) = (2 pi)**-n * sum_xi a(x, xi) m(xi)
exp(i xi z) dxi**n`` and applications contract ``K(x, x - y) f(y) h**n`` over
the periodic grid.  Inputs must be supported in the central half of the
domain so that periodic wraparound never reaches the support ("wraparound
risk" otherwise).

Frequency truncation: band pieces are summed up to ``J = kappa + 3`` by
default, the smallest truncation whose low-pass plateau covers every
discrete frequency (``2**(J-1) >= pi * 2**kappa``); the telescoping identity
``sum_j psi_j = psi0(2**-J .)`` then makes the band decomposition of the
full operator exact on the grid.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sample import GridFunction, GridSpec
from .symbol import LocalizedAmplitude, SymbolClass

__all__ = [
    "CutoffFamily",
    "PieceIndex",
    "KernelSlice",
    "OperatorHandle",
    "default_cutoffs",
    "default_truncation",
    "default_nu",
    "cutoff_eval",
    "apply",
    "lp_piece_apply",
    "spatial_piece_apply",
    "kernel_slice",
    "apply_localized",
    "symbol_operator",
    "band_operator",
    "piece_operator",
    "localized_operator",
    "kernel_matrix",
]


def _exp_ratio(t: np.ndarray) -> np.ndarray:
    """Smooth step g(t)/(g(t)+g(1-t)) with g(t) = exp(-1/t) for t > 0."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    g1 = np.exp(-1.0 / tm)
    g2 = np.exp(-1.0 / (1.0 - tm))
    out[mid] = g1 / (g1 + g2)
    return out


@dataclass(frozen=True)
class CutoffFamily:
    """Radial Littlewood-Paley cutoffs built from a smooth transition step.

    ``psi0`` equals 1 for ``|xi| <= 1/2`` and 0 for ``|xi| >= 1``;
    ``psi = psi0(./2) - psi0`` lives on the annulus ``1/2 <= |xi| <= 2``;
    ``psi_j = psi(2**(1-j) .)`` lives on ``2**(j-2) <= |xi| <= 2**j``.
    """

    name: str = "exp_step"

    def psi0(self, radius: np.ndarray) -> np.ndarray:
        r = np.abs(np.asarray(radius, dtype=np.float64))
        return _exp_ratio(2.0 * (1.0 - r))

    def psi(self, radius: np.ndarray) -> np.ndarray:
        r = np.asarray(radius, dtype=np.float64)
        return self.psi0(r / 2.0) - self.psi0(r)

    def band(self, j: int, radius: np.ndarray) -> np.ndarray:
        if j < 0:
            raise ValueError("band index must be nonnegative")
        if j == 0:
            return self.psi0(radius)
        return self.psi(np.asarray(radius, dtype=np.float64) * 2.0 ** (1 - j))

    def window(self, j: int, ell: int, nu: float, radius: np.ndarray) -> np.ndarray:
        """Spatial window of the (j, ell) piece: dyadic shell for ell >= 1,
        core ball at ell = 0; summing ell = 0..L gives psi0(2**(j nu - L - 1) .)."""
        r = np.asarray(radius, dtype=np.float64)
        if ell == 0:
            return self.psi0(r * 2.0 ** (j * nu - 1.0))
        return self.psi(r * 2.0 ** (j * nu - ell))


def default_cutoffs() -> CutoffFamily:
    return CutoffFamily()


def cutoff_eval(fam: CutoffFamily, j: int, xi) -> np.ndarray:
    """Band cutoff ``psi_j`` evaluated at frequency points (radial)."""
    if isinstance(xi, tuple):
        r = np.sqrt(sum(np.asarray(c, dtype=np.float64) ** 2 for c in xi))
    else:
        r = np.abs(np.asarray(xi, dtype=np.float64))
    return fam.band(j, r)


def default_truncation(spec: GridSpec) -> int:
    """Smallest J whose low-pass plateau covers all grid frequencies.

    The largest frequency radius is ``sqrt(n) * pi * 2**kappa`` so we need
    ``2**(J-1)`` at least that; J = kappa + 3 in 1D, kappa + 4 in 2D.
    """
    top = math.sqrt(spec.n) * math.pi * 2.0**spec.kappa
    j = spec.kappa + 2
    while 2.0 ** (j - 1) < top:
        j += 1
    return j


def default_nu(rho: float) -> float:
    """Spatial decomposition rate: just under the declared rho, in [0, 1)."""
    return min(max(rho - 0.05, 0.0), 0.95)


@dataclass(frozen=True)
class PieceIndex:
    """Index of one frequency-and-space piece of an operator."""

    j: int
    ell: int
    nu: float

    def __post_init__(self) -> None:
        if self.j < 0 or self.ell < 0:
            raise ValueError("piece indices must be nonnegative")
        if not (0 <= self.nu < 1):
            raise ValueError("spatial rate nu must lie in [0, 1)")


@dataclass(frozen=True)
class KernelSlice:
    """One x-row of a piece kernel sampled on the periodic z-grid."""

    x: float
    z: np.ndarray
    values: np.ndarray
    idx: PieceIndex | None
    windowed: bool


@dataclass(frozen=True)
class OperatorHandle:
    """Callable operator with optional dense-matrix access for oracles."""

    name: str
    spec: GridSpec
    apply_fn: Callable[[GridFunction], GridFunction]
    matrix_fn: Callable[[], np.ndarray] | None = None
    local_radius: float | None = None
    linear: bool = True

    def __call__(self, f: GridFunction) -> GridFunction:
        return self.apply_fn(f)

    def matrix(self) -> np.ndarray:
        if self.matrix_fn is None:
            raise ValueError(f"operator {self.name} has no dense form")
        return self.matrix_fn()


# ---------------------------------------------------------------------------
# transforms


def _phase(spec: GridSpec) -> np.ndarray:
    """exp(-i xi_k c_0) along one axis (samples sit at cell centers)."""
    xi = spec.freqs()
    c0 = float(spec.center_fraction(0))
    return np.exp(-1j * xi * c0)


def _guard_support(f: GridFunction) -> None:
    sb = f.support_box()
    if sb is not None and not f.spec.central_half().contains_box(sb):
        raise ValueError("wraparound risk: support leaves the central half of the domain")


def forward_transform(f: GridFunction) -> np.ndarray:
    """Discrete ``(2 pi)**-n integral f exp(-i xi x) dx`` on the frequency grid."""
    spec = f.spec
    h = float(spec.h)
    ph = _phase(spec)
    if spec.n == 1:
        return (2.0 * np.pi) ** -1 * h * ph * np.fft.fft(f.values)
    fh = np.fft.fft2(f.values)
    return (2.0 * np.pi) ** -2 * h**2 * (ph[:, None] * ph[None, :]) * fh


def inverse_eval(spec: GridSpec, g: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_xi g(xi) exp(i xi x) dxi**n`` at all cell centers."""
    N = spec.N
    dxi = 2.0 * np.pi / (N * float(spec.h))
    ph = _phase(spec)
    if spec.n == 1:
        return dxi * N * np.fft.ifft(g * np.conj(ph))
    return dxi**2 * N**2 * np.fft.ifft2(g * np.conj(ph[:, None] * ph[None, :]))


def _freq_coords(spec: GridSpec) -> tuple[np.ndarray, ...]:
    xi = spec.freqs()
    if spec.n == 1:
        return (xi,)
    return (xi[:, None], xi[None, :])


def _freq_radius(spec: GridSpec) -> np.ndarray:
    xi = spec.freqs()
    if spec.n == 1:
        return np.abs(xi)
    return np.sqrt(xi[:, None] ** 2 + xi[None, :] ** 2)


def _z_coords(spec: GridSpec) -> tuple[np.ndarray, ...]:
    """Physical offsets of the periodic z-grid, FFT ordering."""
    h = float(spec.h)
    t = np.fft.fftfreq(spec.N, d=1.0 / spec.N) * h  # t*h with wrap to negatives
    if spec.n == 1:
        return (t,)
    return (t[:, None], t[None, :])


def _z_radius(spec: GridSpec) -> np.ndarray:
    z = _z_coords(spec)
    if spec.n == 1:
        return np.abs(z[0])
    return np.sqrt(z[0] ** 2 + z[1] ** 2)


# ---------------------------------------------------------------------------
# application paths


_DIRECT_BLOCK = 128
_DENSE_LIMIT = 4096


def _apply_multiplier(f: GridFunction, mult: np.ndarray) -> GridFunction:
    g = forward_transform(f) * mult
    return f.with_values(inverse_eval(f.spec, g))


def _apply_direct(a: SymbolClass, f: GridFunction, mult: np.ndarray | None) -> GridFunction:
    """Blocked literal quadrature; reference path for cross-checks."""
    spec = f.spec
    if spec.n == 2 and not a.x_independent and spec.N > 64:
        raise ValueError("direct 2D quadrature is limited to 64 cells per axis")
    fh = forward_transform(f)
    if mult is not None:
        fh = fh * mult
    dxi = 2.0 * np.pi / (spec.N * float(spec.h))
    c = spec.centers()
    xi = spec.freqs()
    out = np.empty(spec.shape, dtype=np.complex128)
    if spec.n == 1:
        fhd = fh * dxi
        for lo in range(0, spec.N, _DIRECT_BLOCK):
            hi = min(lo + _DIRECT_BLOCK, spec.N)
            xb = c[lo:hi][:, None]
            amp = a.eval((np.broadcast_to(xb, (hi - lo, spec.N)),), (xi[None, :],))
            out[lo:hi] = (amp * np.exp(1j * xi[None, :] * xb)) @ fhd
        return f.with_values(out)
    fhd = (fh * dxi**2).ravel()
    flat_xi1 = np.broadcast_to(xi[:, None], (spec.N, spec.N)).ravel()
    flat_xi2 = np.broadcast_to(xi[None, :], (spec.N, spec.N)).ravel()
    for i in range(spec.N):
        x1 = np.broadcast_to(c[i], (spec.N, flat_xi1.size))
        x2 = np.broadcast_to(c[:, None], (spec.N, flat_xi1.size))
        amp = a.eval((x1, x2), (flat_xi1[None, :], flat_xi2[None, :]))
        phase = np.exp(1j * (flat_xi1[None, :] * c[i] + flat_xi2[None, :] * c[:, None]))
        out[i] = (amp * phase) @ fhd
    return f.with_values(out)


def _apply_symbol_mult(
    a: SymbolClass, f: GridFunction, mult: np.ndarray | None, method: str
) -> GridFunction:
    """Apply ``a(x, D)`` with an optional extra frequency multiplier."""
    spec = f.spec
    _guard_support(f)
    if method == "direct":
        return _apply_direct(a, f, mult)
    if a.x_independent:
        amp = a.eval(_coord_zeros(spec), _freq_coords(spec))
        m = amp if mult is None else amp * mult
        return _apply_multiplier(f, m)
    if a.separable:
        xf = a.x_factor(_center_coords(spec)) if a.x_factor is not None else 1.0
        if a.xi_factor is not None:
            base = np.asarray(a.xi_factor(_freq_coords(spec)), dtype=np.complex128)
        else:
            base = np.ones(spec.shape, dtype=np.complex128)
        m = base if mult is None else base * mult
        g = _apply_multiplier(f, m)
        return f.with_values(np.asarray(xf) * g.values)
    return _apply_direct(a, f, mult)


def _center_coords(spec: GridSpec) -> tuple[np.ndarray, ...]:
    c = spec.centers()
    if spec.n == 1:
        return (c,)
    return (c[:, None], c[None, :])


def _coord_zeros(spec: GridSpec) -> tuple[np.ndarray, ...]:
    return (np.zeros(1),) * spec.n


def apply(a: SymbolClass, f: GridFunction, method: str = "auto") -> GridFunction:
    """Full operator ``a(x, D) f`` by quadrature over all grid frequencies."""
    if method not in ("auto", "fft", "direct"):
        raise ValueError("method must be auto, fft, or direct")
    if method == "fft" and not (a.x_independent or a.separable):
        raise ValueError("fft path requires an x-independent or separable symbol")
    return _apply_symbol_mult(a, f, None, "direct" if method == "direct" else "auto")


def lp_piece_apply(
    a: SymbolClass, fam: CutoffFamily, j: int, f: GridFunction, method: str = "auto"
) -> GridFunction:
    """Frequency band piece: the symbol is multiplied by ``psi_j``."""
    mult = fam.band(j, _freq_radius(f.spec))
    return _apply_symbol_mult(a, f, mult, "direct" if method == "direct" else "auto")


# ---------------------------------------------------------------------------
# kernel rows and windowed pieces

_row_cache: dict = {}
_row_lock = threading.Lock()


def _kernel_row(
    a: SymbolClass, spec: GridSpec, mult: np.ndarray | None, x_index: tuple[int, ...]
) -> np.ndarray:
    """Kernel row K(x_i, z) on the periodic z-grid (FFT ordering)."""
    c = spec.centers()
    if spec.n == 1:
        xc = (np.full(spec.N, c[x_index[0]]),)
        amp = a.eval(xc, _freq_coords(spec))
    else:
        x1 = np.full(spec.shape, c[x_index[0]])
        x2 = np.full(spec.shape, c[x_index[1]])
        amp = a.eval((x1, x2), _freq_coords(spec))
    if mult is not None:
        amp = amp * mult
    N = spec.N
    dxi = 2.0 * np.pi / (N * float(spec.h))
    scale = (dxi / (2.0 * np.pi)) ** spec.n * N**spec.n
    if spec.n == 1:
        return scale * np.fft.ifft(amp)
    return scale * np.fft.ifft2(amp)


def _window_values(fam: CutoffFamily, idx: PieceIndex, spec: GridSpec) -> np.ndarray:
    return fam.window(idx.j, idx.ell, idx.nu, _z_radius(spec))


def _correlate_rows(
    a: SymbolClass,
    spec: GridSpec,
    mult: np.ndarray | None,
    window: np.ndarray | None,
    f: GridFunction,
) -> GridFunction:
    """Contract windowed kernel rows against f; fast convolution when the
    kernel row shape does not depend on x (x-independent or separable)."""
    h = float(spec.h)
    if a.x_independent or a.separable:
        if a.x_independent:
            base = a.eval(_coord_zeros(spec), _freq_coords(spec))
        elif a.xi_factor is not None:
            base = np.asarray(a.xi_factor(_freq_coords(spec)), dtype=np.complex128)
        else:
            base = np.ones(spec.shape, dtype=np.complex128)
        amp = base if mult is None else base * mult
        N = spec.N
        dxi = 2.0 * np.pi / (N * h)
        scale = (dxi / (2.0 * np.pi)) ** spec.n * N**spec.n
        row = scale * (np.fft.ifft(amp) if spec.n == 1 else np.fft.ifft2(amp))
        if window is not None:
            row = row * window
        if spec.n == 1:
            out = h * np.fft.ifft(np.fft.fft(row) * np.fft.fft(f.values))
        else:
            out = h**2 * np.fft.ifft2(np.fft.fft2(row) * np.fft.fft2(f.values))
        if not a.x_independent and a.x_factor is not None:
            out = np.asarray(a.x_factor(_center_coords(spec))) * out
        return f.with_values(out)
    N = spec.N
    out = np.empty(spec.shape, dtype=np.complex128)
    if spec.n == 1:
        idx = np.arange(N)
        fv = f.values
        for i in range(N):
            row = _kernel_row(a, spec, mult, (i,))
            if window is not None:
                row = row * window
            out[i] = h * np.dot(row, fv[(i - idx) % N])
        return f.with_values(out)
    if N > 64:
        raise ValueError("x-dependent windowed 2D pieces are limited to 64 cells per axis")
    i2 = np.arange(N)
    fv = f.values
    for i in range(N):
        for j2 in range(N):
            row = _kernel_row(a, spec, mult, (i, j2))
            if window is not None:
                row = row * window
            shifted = fv[np.ix_((i - i2) % N, (j2 - i2) % N)]
            out[i, j2] = h**2 * np.sum(row * shifted)
    return f.with_values(out)


def spatial_piece_apply(
    a: SymbolClass, fam: CutoffFamily, idx: PieceIndex, f: GridFunction
) -> GridFunction:
    """Piece with frequency band ``j`` and dyadic spatial window ``ell``."""
    _guard_support(f)
    mult = fam.band(idx.j, _freq_radius(f.spec))
    window = _window_values(fam, idx, f.spec)
    return _correlate_rows(a, f.spec, mult, window, f)


def kernel_slice(
    a: SymbolClass,
    fam: CutoffFamily,
    idx: PieceIndex,
    x: float | tuple[float, ...],
    spec: GridSpec,
    windowed: bool = True,
) -> KernelSlice:
    """Windowed kernel row of the (j, ell) piece at the cell center nearest x."""
    if isinstance(x, tuple):
        if spec.n != len(x):
            raise ValueError("point dimension mismatch")
        xs = x
    else:
        xs = (float(x),)
    c = spec.centers()
    x_index = tuple(int(np.clip(np.argmin(np.abs(c - xi)), 0, spec.N - 1)) for xi in xs)
    key = ("slice", id(a), fam.name, idx, x_index, spec, windowed)
    with _row_lock:
        hit = _row_cache.get(key)
    if hit is not None:
        return hit
    mult = fam.band(idx.j, _freq_radius(spec))
    row = _kernel_row(a, spec, mult, x_index)
    if windowed:
        row = row * _window_values(fam, idx, spec)
    if spec.n == 1:
        z = _z_coords(spec)[0]
        order = np.argsort(z)
        sl = KernelSlice(
            x=float(c[x_index[0]]), z=z[order], values=row[order], idx=idx, windowed=windowed
        )
    else:
        sl = KernelSlice(
            x=float(c[x_index[0]]), z=_z_radius(spec), values=row, idx=idx, windowed=windowed
        )
    with _row_lock:
        _row_cache[key] = sl
    return sl


def full_kernel_row(
    a: SymbolClass, spec: GridSpec, x_index: tuple[int, ...], window_radius: float | None = None
) -> np.ndarray:
    """Row of the full (all grid frequencies) kernel, optionally windowed by
    ``psi0(z / window_radius`` scale); FFT z-ordering."""
    row = _kernel_row(a, spec, None, x_index)
    if window_radius is not None:
        fam = CutoffFamily()
        row = row * fam.psi0(_z_radius(spec) / window_radius)
    return row


def apply_localized(atilde: LocalizedAmplitude, f: GridFunction) -> GridFunction:
    """Operator of the window-localized amplitude ``a(x, xi) psi0(2**-ell1 (x-y))``.

    No support guard here: the kernel reach is exactly 2**ell1, so the
    periodic evaluation is the intended one for any input (constants
    included) as long as the reach stays below half the domain.
    """
    spec = f.spec
    if 2.0**atilde.ell1 > float(spec.halfwidth):
        raise ValueError("wraparound risk: the localization radius exceeds half the domain")
    fam = CutoffFamily()
    window = fam.psi0(_z_radius(spec) * 2.0**-atilde.ell1)
    return _correlate_rows(atilde.symbol, spec, None, window, f)


# ---------------------------------------------------------------------------
# dense forms and handles


def kernel_matrix(
    a: SymbolClass,
    spec: GridSpec,
    mult: np.ndarray | None = None,
    window: np.ndarray | None = None,
) -> np.ndarray:
    """Dense matrix M with (T f)_i = sum_j M[i, j] f_j; 1D only."""
    if spec.n != 1:
        raise ValueError("dense kernels are only materialized in dimension one")
    if spec.N > _DENSE_LIMIT:
        raise ValueError("dense kernel too large")
    N = spec.N
    h = float(spec.h)
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    if a.x_independent:
        row = _kernel_row(a, spec, mult, (0,))
        if window is not None:
            row = row * window
        return h * row[idx]
    M = np.empty((N, N), dtype=np.complex128)
    for i in range(N):
        row = _kernel_row(a, spec, mult, (i,))
        if window is not None:
            row = row * window
        M[i] = h * row[idx[i]]
    return M


def symbol_operator(a: SymbolClass, spec: GridSpec) -> OperatorHandle:
    return OperatorHandle(
        name=f"{a.family}(m={a.m})",
        spec=spec,
        apply_fn=lambda f: apply(a, f),
        matrix_fn=(lambda: kernel_matrix(a, spec)) if spec.n == 1 else None,
    )


def band_operator(a: SymbolClass, fam: CutoffFamily, j: int, spec: GridSpec) -> OperatorHandle:
    mult = fam.band(j, _freq_radius(spec))
    return OperatorHandle(
        name=f"{a.family}(m={a.m})^({j})",
        spec=spec,
        apply_fn=lambda f: lp_piece_apply(a, fam, j, f),
        matrix_fn=(lambda: kernel_matrix(a, spec, mult)) if spec.n == 1 else None,
    )


def piece_operator(
    a: SymbolClass, fam: CutoffFamily, idx: PieceIndex, spec: GridSpec
) -> OperatorHandle:
    mult = fam.band(idx.j, _freq_radius(spec))
    window = _window_values(fam, idx, spec)
    outer = 2.0 ** (idx.ell - idx.j * idx.nu + 1) if idx.ell >= 1 else 2.0 ** (1 - idx.j * idx.nu)
    return OperatorHandle(
        name=f"{a.family}(m={a.m})^({idx.j},{idx.ell})",
        spec=spec,
        apply_fn=lambda f: spatial_piece_apply(a, fam, idx, f),
        matrix_fn=(lambda: kernel_matrix(a, spec, mult, window)) if spec.n == 1 else None,
        local_radius=outer,
    )


def localized_operator(atilde: LocalizedAmplitude, spec: GridSpec) -> OperatorHandle:
    fam = CutoffFamily()
    window = fam.psi0(_z_radius(spec) * 2.0**-atilde.ell1)
    a = atilde.symbol
    return OperatorHandle(
        name=f"{a.family}(m={a.m})~ell1={atilde.ell1}",
        spec=spec,
        apply_fn=lambda f: apply_localized(atilde, f),
        matrix_fn=(lambda: kernel_matrix(a, spec, None, window)) if spec.n == 1 else None,
        local_radius=2.0**atilde.ell1,
    )
