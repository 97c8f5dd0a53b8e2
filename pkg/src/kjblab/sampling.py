"""Band-limited random potentials, the single source of random test states."""

from __future__ import annotations

import numpy as np

from . import field as tf
from .field import GridSpec, ScalarField


def band_limited(grid: GridSpec, rng: np.random.Generator, cutoff: int | None = None) -> np.ndarray:
    """Real mean-zero field with Gaussian Fourier coefficients for 0 < |k|_inf <= cutoff.

    Coefficients are damped by ``1 / (1 + |k|^2)``; the default cutoff is N/4.
    """
    N = grid.N
    cutoff = N // 4 if cutoff is None else cutoff
    k = np.fft.fftfreq(N, d=1.0 / N)
    ks = np.meshgrid(*([k] * (2 * grid.n)), indexing="ij")
    kmax = np.max(np.abs(np.stack(ks)), axis=0)
    k2 = sum(kk * kk for kk in ks)
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coef *= (kmax <= cutoff) / (1.0 + k2)
    coef.flat[0] = 0.0
    f = np.real(np.fft.ifftn(coef))
    s = np.max(np.abs(f))
    return f / s if s > 0 else f


def random_potential(grid: GridSpec, rng: np.random.Generator, amplitude: float = 0.5,
                     cutoff: int | None = None) -> ScalarField:
    """Random potential whose metric has smallest eigenvalue exactly ``1 - amplitude``.

    Requires ``0 <= amplitude < 1`` so the result is Kähler.
    """
    if not 0.0 <= amplitude < 1.0:
        raise ValueError("amplitude must lie in [0, 1)")
    f = band_limited(grid, rng, cutoff)
    lo = float(tf.eigvalsh_array(tf.hessian_array(grid, f))[..., 0].min())
    if lo >= 0 or amplitude == 0.0:
        return ScalarField.zeros(grid)
    return ScalarField(grid, f * (amplitude / -lo))


def random_twist_potential(grid: GridSpec, rng: np.random.Generator, chi0: np.ndarray,
                           fraction: float = 0.5, cutoff: int | None = None) -> ScalarField:
    """psi with chi0 + dd^c psi keeping the sign of a definite chi0.

    The Hessian of psi is scaled to ``fraction`` of the smallest |eigenvalue|
    of chi0, so a negative definite chi0 stays negative definite.
    """
    chi0 = np.atleast_2d(np.asarray(chi0, dtype=complex))
    gap = float(np.min(np.abs(np.linalg.eigvalsh(chi0))))
    f = band_limited(grid, rng, cutoff)
    e = tf.eigvalsh_array(tf.hessian_array(grid, f))
    big = float(max(-e[..., 0].min(), e[..., -1].max()))
    if big == 0 or gap == 0:
        return ScalarField.zeros(grid)
    return ScalarField(grid, f * (fraction * gap / big))
