"""The energy functional family on potentials, with its variation formulas.

All values are per unit volume (the reference volume is 1).  The twisted
K-energy replaces Ric(omega) by chi and the average scalar curvature by
``c0 = tr chi0``; on the flat torus the literal K-energy reduces to the
entropy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import field as tf
from .errors import NotCritical
from .field import ScalarField
from .geometry import KahlerState, TwistData, c_beta, c_zero, h_tilde, make_state, trace_chi


def _P(state: KahlerState, u: np.ndarray | None = None) -> np.ndarray:
    return tf.outer_gradient(state.grid, state.phi.values if u is None else u)


def _ref_and_metric_pairings(state: KahlerState, P: np.ndarray) -> list[np.ndarray]:
    """omega^n densities of sqrt(-1) P ^ omega^i ^ omega_phi^{n-1-i}, i = 0..n-1."""
    n = state.grid.n
    if n == 1:
        return [np.real(P[..., 0, 0])]
    eye = np.broadcast_to(np.eye(n), P.shape)
    return [tf.wedge_density(P, state.metric.matrices), tf.wedge_density(P, eye)]


def aubin_i(state: KahlerState) -> float:
    """(1/V) int phi (omega^n - omega_phi^n)."""
    return float(np.mean(state.phi.values * (1.0 - state.det.values)))


def aubin_i_gradient_form(state: KahlerState) -> float:
    """Same functional written as a sum of gradient pairings."""
    return float(sum(np.mean(d) for d in _ref_and_metric_pairings(state, _P(state))))


def aubin_j(state: KahlerState) -> float:
    n = state.grid.n
    dens = _ref_and_metric_pairings(state, _P(state))
    return float(sum((i + 1) / (n + 1) * np.mean(d) for i, d in enumerate(dens)))


def d_functional(state: KahlerState) -> float:
    return state.phi.mean() - aubin_j(state)


def j_chi(state: KahlerState, twist: TwistData) -> float:
    """-(1/V) sum_i C(n, i+1) int phi chi ^ omega^{n-1-i} ^ (dd^c phi)^i."""
    n = state.grid.n
    chi = twist.chi(state.grid).matrices
    phi = state.phi.values
    if n == 1:
        dens = np.real(chi[..., 0, 0])
    else:
        eye = np.broadcast_to(np.eye(n), chi.shape)
        dens = (math.comb(2, 1) * tf.wedge_density(chi, eye)
                + math.comb(2, 2) * tf.wedge_density(chi, state.hess.matrices))
    return float(-np.mean(phi * dens))


def entropy(state: KahlerState) -> float:
    d = state.det.values
    return float(np.mean(d * np.log(d)))


def frakJ(state: KahlerState, twist: TwistData) -> float:
    return c_zero(twist, state.grid) * d_functional(state) + j_chi(state, twist)


def frakJ_beta(state: KahlerState, twist: TwistData) -> float:
    J = aubin_j(state)
    return c_zero(twist, state.grid) * (state.phi.mean() - J) + j_chi(state, twist) + twist.beta * J


def k_twisted(state: KahlerState, twist: TwistData) -> float:
    return entropy(state) + frakJ(state, twist)


def e_beta(state: KahlerState, twist: TwistData) -> float:
    H = h_tilde(state, twist).values
    return float(np.mean(H * H * state.det.values))


def jbeta_of(phi: ScalarField, twist: TwistData) -> float:
    return frakJ_beta(make_state(phi), twist)


def ebeta_of(phi: ScalarField, twist: TwistData) -> float:
    return e_beta(make_state(phi), twist)


# ---------------------------------------------------------------------------
# variations

def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def _grad(state: KahlerState, f: np.ndarray) -> np.ndarray:
    """(df/dz_1, ..., df/dz_n) stacked on the last axis."""
    return np.stack(tf.dz_array(state.grid, f), axis=-1)


def _raise(state: KahlerState, du: np.ndarray) -> np.ndarray:
    """b = Ginv du, so u^{jbar} = b_j and u^i = conj(b_i)."""
    return np.einsum("...ij,...j->...i", state.inverse.matrices, du)


def grad_norm_sq(state: KahlerState, u: np.ndarray) -> np.ndarray:
    """|du|^2_{omega_phi} = g^{i jbar} u_i u_jbar."""
    du = _grad(state, u)
    return np.real(np.einsum("...i,...i->...", np.conj(du), _raise(state, du)))


def chi_grad_pairing(state: KahlerState, twist: TwistData, u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
    """chi_{i jbar} u^i v^{jbar} (real part)."""
    chi = twist.chi(state.grid).matrices
    bu = _raise(state, _grad(state, u))
    bv = bu if v is None else _raise(state, _grad(state, v))
    return np.real(np.einsum("...i,...ij,...j->...", np.conj(bu), chi, bv))


def chi_hessian_pairing(state: KahlerState, twist: TwistData, u: np.ndarray) -> np.ndarray:
    """u^{i jbar} chi_{i jbar} = tr(Ginv U Ginv chi)."""
    chi = twist.chi(state.grid).matrices
    Gi = state.inverse.matrices
    U = tf.hessian_array(state.grid, u)
    return np.real(np.einsum("...ab,...bc,...cd,...da->...", Gi, U, Gi, chi))


def laplacian_phi(state: KahlerState, u: np.ndarray) -> np.ndarray:
    """Delta_phi u = g^{i jbar} u_{i jbar}."""
    U = tf.hessian_array(state.grid, u)
    return tf.trace_product(state.inverse.matrices, U)


def first_variation_jbeta(state: KahlerState, twist: TwistData, u) -> float:
    """(1/V) int u [c_beta omega_phi^n - n chi ^ omega_phi^{n-1} + beta omega^n]."""
    n = state.grid.n
    chi = twist.chi(state.grid).matrices
    wedge = n * tf.wedge_density(chi, state.metric.matrices if n > 1 else None)
    bracket = c_beta(twist, state.grid) * state.det.values - wedge + twist.beta
    return float(np.mean(_vals(u) * bracket))


def second_variation_jbeta(state: KahlerState, twist: TwistData, u, a, include_beta: bool = True) -> float:
    """Second derivative of the functional along phi + t u + t^2 a / 2.

    ``include_beta=False`` drops the ``beta * int a omega^n`` term that the
    direct differentiation of the first variation produces.
    """
    u, a = _vals(u), _vals(a)
    det = state.det.values
    coeff = c_beta(twist, state.grid) - trace_chi(state, twist).values
    val = np.mean((a - grad_norm_sq(state, u)) * coeff * det)
    val -= np.mean(chi_grad_pairing(state, twist, u) * det)
    if include_beta:
        val += twist.beta * np.mean(a)
    return float(val)


def first_variation_ebeta(state: KahlerState, twist: TwistData, u) -> float:
    """Derivative of E_beta along u: int (2 H dH(u) + H^2 Delta_phi u) omega_phi^n.

    Exact chain rule of the discrete functional (no integration by parts).
    """
    u = _vals(u)
    H = h_tilde(state, twist).values
    det = state.det.values
    lap = laplacian_phi(state, u)
    dH = -chi_hessian_pairing(state, twist, u) + twist.beta * lap / det
    return float(np.mean((2.0 * H * dH + H * H * lap) * det))


def first_variation_ebeta_integrated(state: KahlerState, twist: TwistData, u) -> float:
    """Integrated-by-parts form 2 int chi(du, dH) omega_phi^n - 2 beta int <dH, du>_phi omega^n.

    Equal to :func:`first_variation_ebeta` in the continuum; on the grid the
    product rule holds only up to aliasing, so the two agree to spectral
    accuracy on well-resolved fields only.
    """
    u = _vals(u)
    H = h_tilde(state, twist).values
    chi = twist.chi(state.grid).matrices
    dH = _grad(state, H)
    du = _grad(state, u)
    bu = _raise(state, du)
    bH = _raise(state, dH)
    t1 = np.real(np.einsum("...i,...ij,...j->...", np.conj(bu), chi, bH)) * state.det.values
    t2 = np.real(np.einsum("...i,...i->...", np.conj(bu), dH))
    return float(2.0 * np.mean(t1) - 2.0 * twist.beta * np.mean(t2))


def second_variation_ebeta(state: KahlerState, twist: TwistData, u, v, crit_tol: float = 1e-8) -> float:
    """Bilinear second derivative of E_beta at a critical state: 2 int dH(u) dH(v) omega_phi^n.

    Terms carrying a factor of H drop out because H vanishes at a critical
    state; the remaining form is exact for the discrete functional.
    """
    H = h_tilde(state, twist)
    if H.sup() > crit_tol:
        raise NotCritical(f"sup|H| = {H.sup():.3e} exceeds {crit_tol:.1e}")
    det = state.det.values

    def dH(w):
        w = _vals(w)
        return -chi_hessian_pairing(state, twist, w) + twist.beta * laplacian_phi(state, w) / det

    return float(2.0 * np.mean(dH(u) * dH(v) * det))


# ---------------------------------------------------------------------------
# report

@dataclass
class FunctionalReport:
    I: float
    J: float
    D: float
    j_chi: float
    entropy: float
    k_twisted: float
    frakJ: float
    frakJ_beta: float
    E_beta: float
    c_beta: float
    consistency: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update({f"consistency.{k}": v for k, v in d.pop("consistency").items()})
        return d

    def csv_header(self) -> list[str]:
        return list(self.to_dict())

    def csv_row(self) -> list[float]:
        return list(self.to_dict().values())


def functional_report(state: KahlerState, twist: TwistData) -> FunctionalReport:
    n = state.grid.n
    I = aubin_i(state)
    J = aubin_j(state)
    fJ = frakJ(state, twist)
    fJb = fJ + twist.beta * J
    ent = entropy(state)
    k = ent + fJ
    rep = FunctionalReport(
        I=I, J=J, D=state.phi.mean() - J, j_chi=j_chi(state, twist), entropy=ent,
        k_twisted=k, frakJ=fJ, frakJ_beta=fJb, E_beta=e_beta(state, twist),
        c_beta=c_beta(twist, state.grid),
    )
    rep.consistency = {
        "I_dual": abs(I - aubin_i_gradient_form(state)),
        "decomposition": abs(k - (ent - twist.beta * J + fJb)),
        "IJ_lower": I / (n + 1) - J,
        "IJ_upper": J - n * I / (n + 1),
    }
    return rep
