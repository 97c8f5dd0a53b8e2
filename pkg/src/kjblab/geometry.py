"""Kähler states, the twisting form chi, and pointwise curvature-type quantities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import field as tf
from .errors import NotApplicable, NotKahler
from .field import GridSpec, HermitianField, ScalarField

log = logging.getLogger(__name__)

NEGATIVE_DEFINITE = "negative-definite"
NEGATIVE_SEMIDEFINITE = "negative-semidefinite"
POSITIVE_DEFINITE = "positive-definite"
POSITIVE_SEMIDEFINITE = "positive-semidefinite"
INDEFINITE = "indefinite"


@dataclass(frozen=True, eq=False)
class TwistData:
    """chi = chi0 + sqrt(-1) d dbar psi, plus the parameters beta and alpha.

    ``alpha`` is supplied by the user; it only feeds the admissibility
    warning for beta.
    """

    chi0: np.ndarray
    psi: ScalarField | None = None
    beta: float = 0.0
    alpha: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        chi0 = np.atleast_2d(np.asarray(self.chi0, dtype=complex))
        if chi0.shape[0] != chi0.shape[1]:
            raise ValueError("chi0 must be square")
        if np.max(np.abs(chi0 - chi0.conj().T)) > 1e-12:
            raise ValueError("chi0 must be Hermitian")
        chi0.setflags(write=False)
        object.__setattr__(self, "chi0", chi0)
        if self.psi is not None and self.psi.grid.n != chi0.shape[0]:
            raise ValueError("psi grid dimension does not match chi0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        n = chi0.shape[0]
        if not self.beta < (n + 1) / n * self.alpha:
            log.warning("beta=%g outside [0, (n+1)/n * alpha) = [0, %g)", self.beta, (n + 1) / n * self.alpha)

    @property
    def n(self) -> int:
        return self.chi0.shape[0]

    def with_beta(self, beta: float) -> "TwistData":
        return TwistData(self.chi0, self.psi, beta, self.alpha)

    def chi(self, grid: GridSpec) -> HermitianField:
        if self.psi is not None and self.psi.grid != grid:
            raise ValueError(f"twist potential lives on {self.psi.grid}, asked for {grid}")
        key = ("chi", grid)
        if key not in self._cache:
            m = np.broadcast_to(self.chi0, grid.shape + self.chi0.shape).copy()
            if self.psi is not None:
                m += tf.hessian_array(grid, self.psi.values)
            self._cache[key] = HermitianField(grid, m, check=False)
        return self._cache[key]

    def chi_eigs(self, grid: GridSpec) -> np.ndarray:
        key = ("eig", grid)
        if key not in self._cache:
            self._cache[key] = tf.eigvalsh_array(self.chi(grid).matrices)
        return self._cache[key]

    def sign_class(self, grid: GridSpec, tol: float = 1e-12) -> str:
        e = self.chi_eigs(grid)
        lo, hi = float(e.min()), float(e.max())
        if hi < -tol:
            return NEGATIVE_DEFINITE
        if hi <= tol:
            return NEGATIVE_SEMIDEFINITE
        if lo > tol:
            return POSITIVE_DEFINITE
        if lo >= -tol:
            return POSITIVE_SEMIDEFINITE
        return INDEFINITE


@dataclass(frozen=True, eq=False)
class KahlerState:
    phi: ScalarField
    hess: HermitianField
    metric: HermitianField
    det: ScalarField
    inverse: HermitianField
    eigvals: np.ndarray
    min_eig: float

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid


def make_state(phi: ScalarField, twist: TwistData | None = None) -> KahlerState:
    """Assemble omega_phi = omega + sqrt(-1) d dbar phi and certify positivity.

    Raises :class:`NotKahler` at the grid point of the smallest eigenvalue
    when the metric is not positive definite.
    """
    grid = phi.grid
    H = tf.hessian_array(grid, phi.values)
    g = H + np.eye(grid.n)
    eig = tf.eigvalsh_array(g)
    lo = eig[..., 0]
    idx = np.unravel_index(np.argmin(lo), lo.shape)
    if not lo[idx] > 0:
        raise NotKahler(idx, lo[idx])
    det = tf.det_array(g)
    inv = tf.inv_array(g, det)
    return KahlerState(
        phi=phi,
        hess=HermitianField(grid, H, check=False),
        metric=HermitianField(grid, g, check=False),
        det=ScalarField(grid, det),
        inverse=HermitianField(grid, inv, check=False),
        eigvals=eig,
        min_eig=float(lo[idx]),
    )


def c_zero(twist: TwistData, grid: GridSpec) -> float:
    """n [chi] . Omega^{n-1} / Omega^n, by quadrature (= tr chi0)."""
    return float(np.mean(tf.trace_array(twist.chi(grid).matrices)))


def c_beta(twist: TwistData, grid: GridSpec | None = None) -> float:
    if grid is None:
        grid = twist.psi.grid if twist.psi is not None else None
    if grid is None:
        return float(np.real(np.trace(twist.chi0))) - twist.beta
    return c_zero(twist, grid) - twist.beta


def trace_chi(state: KahlerState, twist: TwistData) -> ScalarField:
    """tr_{omega_phi} chi = g^{i jbar} chi_{i jbar}."""
    chi = twist.chi(state.grid).matrices
    tr = tf.trace_product(state.inverse.matrices, chi)
    return ScalarField(state.grid, tr)


def trace_chi_wedge(state: KahlerState, twist: TwistData) -> ScalarField:
    """n chi ^ omega_phi^{n-1} / omega_phi^n through the mixed discriminant."""
    chi = twist.chi(state.grid).matrices
    n = state.grid.n
    num = n * tf.wedge_density(chi, state.metric.matrices if n > 1 else None)
    return ScalarField(state.grid, num / state.det.values)


def h_tilde(state: KahlerState, twist: TwistData) -> ScalarField:
    """Residual tr chi - c_beta - beta * omega^n / omega_phi^n of the critical equation."""
    cb = c_beta(twist, state.grid)
    return trace_chi(state, twist) - cb - twist.beta / state.det.values


def ricci(state: KahlerState) -> HermitianField:
    """Ric(omega_phi) = -d dbar log det g_phi (the reference metric is flat)."""
    logdet = np.log(state.det.values)
    return HermitianField(state.grid, -tf.hessian_array(state.grid, logdet), check=False)


@dataclass(frozen=True)
class RicciBounds:
    inf: float
    sup: float

    def in_upper_class(self, C: float) -> bool:
        """sup Ric <= C."""
        return self.sup <= C

    def in_lower_class(self, C: float) -> bool:
        """inf Ric >= C."""
        return self.inf >= C


def ricci_bounds(state: KahlerState) -> RicciBounds:
    # eigenvalues of Ric relative to omega_phi: those of g^{-1} Ric
    R = ricci(state).matrices
    n = state.grid.n
    if n == 1:
        e = np.real(R[..., 0, 0]) / state.det.values
        return RicciBounds(float(e.min()), float(e.max()))
    # generalized problem R v = lambda g v via the Cholesky-free 2x2 formula
    ginv = state.inverse.matrices
    A = ginv @ R
    tr = tf.trace_array(A)
    det = np.real(tf.det_array(A))
    disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    return RicciBounds(float((0.5 * tr - disc).min()), float((0.5 * tr + disc).max()))


def ellipticity_field(state: KahlerState, twist: TwistData) -> np.ndarray:
    """Pointwise smallest eigenvalue of -chi + beta (omega^n / omega_phi^n) g_phi."""
    chi = twist.chi(state.grid).matrices
    M = -chi + (twist.beta / state.det.values)[..., None, None] * state.metric.matrices
    return tf.eigvalsh_array(M)[..., 0]


def ellipticity_margin(state: KahlerState, twist: TwistData) -> tuple[float, tuple]:
    e = ellipticity_field(state, twist)
    idx = np.unravel_index(np.argmin(e), e.shape)
    return float(e[idx]), tuple(int(i) for i in idx)


@dataclass(frozen=True)
class ConeReport:
    variant: str
    kappa: int
    c_beta: float
    cone_margin: float
    ellipticity_margin: float

    @property
    def cone_ok(self) -> bool:
        return self.cone_margin > 0

    @property
    def elliptic(self) -> bool:
        return self.ellipticity_margin > 0


CONE_VARIANTS = ("theorem", "proof")


def cone_condition(state: KahlerState, twist: TwistData, variant: str = "theorem") -> ConeReport:
    """Margins of (-kappa c_beta omega + (n-1) chi) ^ omega^{n-2} > 0.

    ``variant="theorem"`` uses kappa = 1 and ``variant="proof"`` uses
    kappa = n; both forms appear as hypotheses of the convergence result.
    """
    if variant not in CONE_VARIANTS:
        raise ValueError(f"unknown cone variant {variant!r}")
    grid = state.grid
    n = grid.n
    if n == 1:
        raise NotApplicable("cone condition is vacuous for n = 1")
    kappa = 1 if variant == "theorem" else n
    cb = c_beta(twist, grid)
    chi = twist.chi(grid).matrices
    # for n = 2 the omega^{n-2} factor is 1 and the form is a plain (1,1)-form
    M = -kappa * cb * np.eye(n) + (n - 1) * chi
    margin = float(tf.eigvalsh_array(M)[..., 0].min())
    ell, _ = ellipticity_margin(state, twist)
    return ConeReport(variant, kappa, cb, margin, ell)


def volume_check(state: KahlerState) -> float:
    """|det - prod(eigenvalues)|_inf; a consistency certificate."""
    return float(np.max(np.abs(state.det.values - np.prod(state.eigvals, axis=-1))))
