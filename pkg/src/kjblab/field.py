"""Periodic fields on the flat torus C^n / (Z + iZ)^n, n in {1, 2}.

Grid axes are ordered ``(x1, y1, x2, y2)`` with ``z_k = x_k + i y_k``; every
axis has N samples of spacing 1/N.  The reference Kähler form is the flat
identity, so the reference volume is 1 and every integral against
``omega^n`` is a plain grid mean.

Top-degree forms are handled as densities relative to ``omega^n``.  The
mixed discriminant ``mixed_top`` follows the convention ``MD(I, I) = n!``;
divide by ``n!`` to get an ``omega^n`` density (see :func:`wedge_density`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatch


@dataclass(frozen=True)
class GridSpec:
    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.n)

    @property
    def size(self) -> int:
        return self.N ** (2 * self.n)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def coords(self) -> list[np.ndarray]:
        """Meshgrid coordinates ``[x1, y1, (x2, y2)]`` on [0, 1)."""
        x = np.arange(self.N) / self.N
        return list(np.meshgrid(*([x] * (2 * self.n)), indexing="ij"))

    @cached_property
    def _symbols(self) -> "_Symbols":
        return _Symbols.build(self)


class _Symbols:
    """Fourier multipliers for d/dz_k and d^2/dz_i dzbar_j on one grid."""

    @classmethod
    def build(cls, grid: GridSpec) -> "_Symbols":
        self = cls()
        N = grid.N
        k_full = 2.0 * np.pi * np.fft.fftfreq(N, d=1.0 / N)
        # odd derivatives drop the Nyquist mode so real fields stay real; pure
        # second derivatives keep it, otherwise that mode would be invisible to
        # the metric and the critical equation would have no discrete solution
        k = k_full.copy()
        k[N // 2] = 0.0

        def axis(v, a):
            shp = [1] * (2 * grid.n)
            shp[a] = N
            return v.reshape(shp)

        odd = [axis(k, a) for a in range(2 * grid.n)]
        sq = [axis(k_full ** 2, a) for a in range(2 * grid.n)]
        # d/dz = (d/dx - i d/dy) / 2  ->  (i kx + ky) / 2
        self.dz = [0.5 * (1j * odd[2 * i] + odd[2 * i + 1]) for i in range(grid.n)]
        # d/dz_i d/dzbar_j  ->  -s_i conj(s_j) off the diagonal, -(kx^2 + ky^2) / 4 on it
        self.hess = [[-0.25 * (sq[2 * i] + sq[2 * i + 1]) if i == j else -self.dz[i] * np.conj(self.dz[j])
                      for j in range(grid.n)] for i in range(grid.n)]
        # bound on the largest eigenvalue of the (negated) Hessian symbol matrix
        self.max_symbol = float(sum(np.max(np.abs(self.hess[i][i])) for i in range(grid.n)))
        return self


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _freeze(v))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        return cls(grid, fn(*grid.coords()))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatch(f"{self.grid} vs {other.grid}")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def osc(self) -> float:
        return float(np.max(self.values) - np.min(self.values))


@dataclass(frozen=True, eq=False)
class HermitianField:
    grid: GridSpec
    matrices: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=complex)
        n = self.grid.n
        if m.shape != self.grid.shape + (n, n):
            raise ValueError(f"matrices shape {m.shape} does not match grid {self.grid}")
        if self.check:
            err = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2)))) if m.size else 0.0
            if err > 1e-12 * max(1.0, float(np.max(np.abs(m)))):
                raise ValueError(f"matrices are not Hermitian (defect {err:.3e})")
        object.__setattr__(self, "matrices", _freeze(m))

    @classmethod
    def constant(cls, grid: GridSpec, A) -> "HermitianField":
        A = np.asarray(A, dtype=complex).reshape(grid.n, grid.n)
        return cls(grid, np.broadcast_to(A, grid.shape + A.shape))

    @classmethod
    def identity(cls, grid: GridSpec) -> "HermitianField":
        return cls.constant(grid, np.eye(grid.n))

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.matrices[..., i, j]

    def trace(self) -> ScalarField:
        return ScalarField(self.grid, trace_array(self.matrices))

    def __add__(self, other: "HermitianField") -> "HermitianField":
        _same_grid(self.grid, other.grid)
        return HermitianField(self.grid, self.matrices + other.matrices, check=False)

    def __sub__(self, other: "HermitianField") -> "HermitianField":
        _same_grid(self.grid, other.grid)
        return HermitianField(self.grid, self.matrices - other.matrices, check=False)

    def scale(self, s) -> "HermitianField":
        s = s.values if isinstance(s, ScalarField) else s
        s = np.asarray(s)
        if s.ndim:
            s = s[..., None, None]
        return HermitianField(self.grid, self.matrices * s, check=False)


def _same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise GridMismatch(f"{a} vs {b}")


# ---------------------------------------------------------------------------
# spectral calculus on raw arrays; the field-level API wraps these

def dz_array(grid: GridSpec, f: np.ndarray) -> list[np.ndarray]:
    """Complex gradient ``[df/dz_1, ..., df/dz_n]`` of a real array."""
    fh = sfft.fftn(f)
    return [sfft.ifftn(s * fh) for s in grid._symbols.dz]


def hessian_array(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """``f_{i jbar}`` as an array of shape ``grid.shape + (n, n)``."""
    n = grid.n
    fh = sfft.fftn(f)
    sym = grid._symbols.hess
    out = np.empty(grid.shape + (n, n), dtype=complex)
    for i in range(n):
        out[..., i, i] = np.real(sfft.ifftn(sym[i][i] * fh))
        for j in range(i + 1, n):
            e = sfft.ifftn(sym[i][j] * fh)
            out[..., i, j] = e
            out[..., j, i] = np.conj(e)
    return out


def hessian_adjoint(grid: GridSpec, coeff: np.ndarray) -> np.ndarray:
    """Adjoint of ``w -> sum_ij coeff[..., i, j] * w_{i jbar}`` in the mean pairing.

    ``coeff`` must make the contraction real (e.g. ``coeff[i, j] = c * M[j, i]``
    with M Hermitian and c real); the result is the real field q with
    ``mean(q w) = mean(sum_ij coeff_ij w_{i jbar})`` for every real w.
    """
    n = grid.n
    sym = grid._symbols.hess
    acc = np.zeros(grid.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            acc += sym[i][j] * sfft.fftn(coeff[..., i, j])
    return np.real(sfft.ifftn(acc))


def solve_hessian_trace(grid: GridSpec, rhs: np.ndarray) -> np.ndarray:
    """Mean-zero u with ``sum_i u_{i ibar} = rhs`` (rhs must have zero mean)."""
    sym = sum(grid._symbols.hess[i][i] for i in range(grid.n))
    rh = sfft.fftn(rhs)
    sym = np.array(np.broadcast_to(sym, grid.shape))
    mask = np.abs(sym) > 0
    uh = np.zeros_like(rh)
    uh[mask] = rh[mask] / sym[mask]
    return np.real(sfft.ifftn(uh))


def outer_gradient(grid: GridSpec, f: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
    """Hermitized rank-one field ``(df (x) conj dg + dg (x) conj df) / 2``."""
    df = dz_array(grid, f)
    dg = df if g is None else dz_array(grid, g)
    n = grid.n
    out = np.empty(grid.shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            out[..., i, j] = 0.5 * (df[i] * np.conj(dg[j]) + dg[i] * np.conj(df[j]))
    return out


def mixed_top_array(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    n = A.shape[-1]
    if n == 1:
        return np.real(A[..., 0, 0])
    # n = 2 closed form of tr A tr B - tr(AB); strided np.trace is slow on (..., 2, 2) blocks
    return np.real(A[..., 0, 0] * B[..., 1, 1] + A[..., 1, 1] * B[..., 0, 0]
                   - A[..., 0, 1] * B[..., 1, 0] - A[..., 1, 0] * B[..., 0, 1])


def wedge_density(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """omega^n density of ``alpha_A ^ alpha_B`` (n=2) or of ``alpha_A`` (n=1)."""
    n = A.shape[-1]
    return mixed_top_array(A, B) / math.factorial(n)


# ---------------------------------------------------------------------------
# public field operations

def complex_hessian(f: ScalarField) -> HermitianField:
    return HermitianField(f.grid, hessian_array(f.grid, f.values), check=False)


def integrate(density: ScalarField) -> float:
    """Integral against the reference volume form (total volume 1)."""
    return float(np.mean(density.values))


def mixed_top(A: HermitianField, B: HermitianField | None = None) -> ScalarField:
    """Pointwise mixed discriminant, ``MD(I, I) = n!``.

    n=1 returns the single entry of A (B is ignored); n=2 returns
    ``tr A tr B - tr(AB)``.
    """
    if A.grid.n == 1:
        return ScalarField(A.grid, mixed_top_array(A.matrices))
    if B is None:
        raise ValueError("n=2 mixed_top needs two Hermitian fields")
    _same_grid(A.grid, B.grid)
    return ScalarField(A.grid, mixed_top_array(A.matrices, B.matrices))


def gradient_pairing(f: ScalarField, g: ScalarField, B: HermitianField | None = None) -> ScalarField:
    """Density of ``sqrt(-1) df ^ dbar g ^ beta_B`` in the ``mixed_top`` convention."""
    _same_grid(f.grid, g.grid)
    P = outer_gradient(f.grid, f.values, g.values)
    if f.grid.n == 1:
        return ScalarField(f.grid, mixed_top_array(P))
    if B is None:
        raise ValueError("n=2 gradient_pairing needs a Hermitian field")
    _same_grid(f.grid, B.grid)
    return ScalarField(f.grid, mixed_top_array(P, B.matrices))


# ---------------------------------------------------------------------------
# pointwise small-matrix kernels (n <= 2, closed form)

def det_array(M: np.ndarray) -> np.ndarray:
    if M.shape[-1] == 1:
        return np.real(M[..., 0, 0])
    return np.real(M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0])


def inv_array(M: np.ndarray, det: np.ndarray | None = None) -> np.ndarray:
    if det is None:
        det = det_array(M)
    if M.shape[-1] == 1:
        return 1.0 / M
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 1, 1] = M[..., 0, 0]
    out[..., 0, 1] = -M[..., 0, 1]
    out[..., 1, 0] = -M[..., 1, 0]
    return out / det[..., None, None]


def eigvalsh_array(M: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of Hermitian 1x1 / 2x2 blocks."""
    if M.shape[-1] == 1:
        return np.real(M[..., 0, :])
    a = np.real(M[..., 0, 0])
    d = np.real(M[..., 1, 1])
    b = np.abs(M[..., 0, 1])
    mid = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    return np.stack([mid - rad, mid + rad], axis=-1)


def trace_product(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Re tr(A B) per point."""
    if A.shape[-1] == 1:
        return np.real(A[..., 0, 0] * B[..., 0, 0])
    return np.real(A[..., 0, 0] * B[..., 0, 0] + A[..., 0, 1] * B[..., 1, 0]
                   + A[..., 1, 0] * B[..., 0, 1] + A[..., 1, 1] * B[..., 1, 1])


def trace_array(M: np.ndarray) -> np.ndarray:
    if M.shape[-1] == 1:
        return np.real(M[..., 0, 0])
    return np.real(M[..., 0, 0] + M[..., 1, 1])
