"""Geodesics of the L^2 metric on potentials, computed as discrete path-energy minimizers.

A path is K+1 potentials at uniform times on [0, 1].  Its energy is

    E = sum_k dt * mean(((phi_{k+1} - phi_k) / dt)^2 * det g(m_k)),

with ``m_k`` the midpoint potential of segment k.  Interior nodes are the
linear path plus corrections in the dealiased band ``|k|_inf < N/3``,
optimized by L-BFGS-B; the geodesic equation ``phi'' = |d phi'|^2_phi`` is
then certified by central differences at the interior nodes.  The certificate
includes the spatial truncation of the nonlinear term, so it only decreases
under refinement in K while that truncation stays below the time error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from . import field as tf
from .errors import NoConvergence, NotGeodesic, NotKahler, PositivityLoss
from .field import GridSpec, ScalarField
from .functionals import e_beta, first_variation_jbeta, frakJ_beta
from .geometry import NEGATIVE_DEFINITE, NEGATIVE_SEMIDEFINITE, TwistData, make_state
from .report import CheckResult

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Path:
    """Potentials at uniform times ``T * k / K``, k = 0..K."""

    nodes: list[ScalarField]
    T: float = 1.0
    _states: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        g = self.nodes[0].grid
        if any(p.grid != g for p in self.nodes):
            raise ValueError("path nodes live on different grids")

    @property
    def K(self) -> int:
        return len(self.nodes) - 1

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def grid(self) -> GridSpec:
        return self.nodes[0].grid

    def state(self, k: int):
        if k not in self._states:
            self._states[k] = make_state(self.nodes[k])
        return self._states[k]

    def stack(self) -> np.ndarray:
        return np.stack([p.values for p in self.nodes])

    @classmethod
    def linear(cls, phi0: ScalarField, phi1: ScalarField, K: int, T: float = 1.0) -> "Path":
        s = np.linspace(0.0, 1.0, K + 1)
        return cls([ScalarField(phi0.grid, (1 - a) * phi0.values + a * phi1.values) for a in s], T)


@dataclass
class GeodesicResult:
    path: Path
    energy: float
    distance: float
    length: float
    speeds: np.ndarray
    speed_variance: float
    residual_sup: float
    residual_l2: float
    iterations: int = 0
    gradient_sup: float = 0.0
    retried: bool = False
    residual_band_sup: float = math.nan

    def summary(self) -> dict:
        return {
            "K": self.path.K, "energy": self.energy, "distance": self.distance, "length": self.length,
            "speed_variance": self.speed_variance, "residual_sup": self.residual_sup,
            "residual_l2": self.residual_l2, "residual_band_sup": self.residual_band_sup,
            "iterations": self.iterations,
            "gradient_sup": self.gradient_sup, "retried": self.retried,
        }


# ---------------------------------------------------------------------------
# batched metric data over a stack of potentials

class _Batch:
    """det g and g^{-1} for a stack of potentials, first axis = path index."""

    def __init__(self, grid: GridSpec, phis: np.ndarray):
        self.grid = grid
        axes = tuple(range(1, 2 * grid.n + 1))
        self.axes = axes
        n = grid.n
        Fh = sfft.fftn(phis, axes=axes)
        sym = grid._symbols.hess
        H = np.empty(phis.shape + (n, n), dtype=complex)
        for i in range(n):
            H[..., i, i] = np.real(sfft.ifftn(sym[i][i] * Fh, axes=axes))
            for j in range(i + 1, n):
                e = sfft.ifftn(sym[i][j] * Fh, axes=axes)
                H[..., i, j] = e
                H[..., j, i] = np.conj(e)
        g = H + np.eye(n)
        self.min_eig = tf.eigvalsh_array(g)[..., 0]
        self.det = tf.det_array(g)
        self.inv = tf.inv_array(g, self.det)

    def det_adjoint(self, f: np.ndarray) -> np.ndarray:
        """Adjoint of w -> d(det g)[w] = det tr(g^{-1} w_{i jbar}) applied to f, per path index."""
        n = self.grid.n
        sym = self.grid._symbols.hess
        acc = np.zeros(f.shape, dtype=complex)
        w = f * self.det
        for i in range(n):
            for j in range(n):
                acc += sym[i][j] * sfft.fftn(w * self.inv[..., j, i], axes=self.axes)
        return np.real(sfft.ifftn(acc, axes=self.axes))


def path_energy(path: Path) -> float:
    P = path.stack()
    dt = path.dt
    v = np.diff(P, axis=0) / dt
    b = _Batch(path.grid, 0.5 * (P[1:] + P[:-1]))
    return float(dt * np.sum(np.mean(v * v * b.det, axis=tuple(range(1, v.ndim)))))


def _energy_and_gradient(P: np.ndarray, grid: GridSpec, dt: float):
    """Energy and its mean-pairing gradient with respect to the interior nodes."""
    v = np.diff(P, axis=0) / dt
    b = _Batch(grid, 0.5 * (P[1:] + P[:-1]))
    red = tuple(range(1, v.ndim))
    E = float(dt * np.sum(np.mean(v * v * b.det, axis=red)))
    vd = v * b.det
    adj = b.det_adjoint(v * v)
    G = 2.0 * (vd[:-1] - vd[1:]) + 0.5 * dt * (adj[:-1] + adj[1:])
    return E, G, b


# ---------------------------------------------------------------------------
# certificates

def geodesic_residual(path: Path, dealiased: bool = False) -> np.ndarray:
    """phi'' - |d phi'|^2 at interior nodes by central differences, shape (K-1,) + grid.

    With ``dealiased`` the residual is projected onto the band the solver
    optimizes in, which removes the out-of-band part of the nonlinear term.
    """
    P = path.stack()
    dt = path.dt
    acc = (P[2:] - 2.0 * P[1:-1] + P[:-2]) / (dt * dt)
    vel = (P[2:] - P[:-2]) / (2.0 * dt)
    out = np.empty_like(acc)
    for j in range(acc.shape[0]):
        out[j] = acc[j] - carre_du_champ(path.state(j + 1), vel[j])
    return _filter(_dealias_filter(path.grid), out) if dealiased else out


def carre_du_champ(state, v: np.ndarray) -> np.ndarray:
    """|dv|^2_phi evaluated as tr g^{-1} (Hess(v^2) / 2 - v Hess v).

    Equal to :func:`grad_norm_sq` for smooth v, but built from the same
    second-derivative operator as the energy gradient, so the residual of a
    discrete critical path carries only the time-truncation error.
    """
    grid = state.grid
    B = 0.5 * tf.hessian_array(grid, v * v) - v[..., None, None] * tf.hessian_array(grid, v)
    return tf.trace_product(state.inverse.matrices, B)


def segment_speeds(path: Path) -> np.ndarray:
    P = path.stack()
    v = np.diff(P, axis=0) / path.dt
    b = _Batch(path.grid, 0.5 * (P[1:] + P[:-1]))
    return np.sqrt(np.mean(v * v * b.det, axis=tuple(range(1, v.ndim))))


def certify(path: Path, iterations: int = 0, gradient_sup: float = 0.0, retried: bool = False) -> GeodesicResult:
    for k in range(path.K + 1):
        try:
            path.state(k)
        except Exception as exc:
            raise PositivityLoss(k, exc) from exc
    E = path_energy(path)
    s = segment_speeds(path)
    mean_s = float(np.mean(s))
    var = float(np.std(s) / mean_s) if mean_s > 0 else 0.0
    if path.K >= 2:
        r = geodesic_residual(path)
        band = _filter(_dealias_filter(path.grid), r)
        rsup, rl2, rband = float(np.max(np.abs(r))), float(np.sqrt(np.mean(r * r))), float(np.max(np.abs(band)))
    else:
        rsup = rl2 = rband = 0.0
    return GeodesicResult(path, E, math.sqrt(max(E, 0.0)), float(np.sum(s) * path.dt), s, var, rsup, rl2,
                          iterations, gradient_sup, retried, rband)


# ---------------------------------------------------------------------------
# solver

class _Infeasible(Exception):
    def __init__(self, node: int, eig: float):
        self.node = node
        self.eig = eig


def geodesic_segment(phi0: ScalarField, phi1: ScalarField, K: int = 16, tol: float = 1e-7,
                     max_iter: int = 20000, warm: Path | None = None) -> GeodesicResult:
    """Minimize the path energy over interior nodes with fixed endpoints.

    ``tol`` bounds the sup norm of the scaled gradient, which approximates
    ``det g * (phi'' - |d phi'|^2)`` pointwise.  Without a ``warm`` path,
    even K >= 16 starts from the K/2 solution interpolated in time (cold
    starts from the linear path can drift toward the cone boundary and
    stall).  Failed starts fall back to the linear path, and finally to the
    linear path with halved descent steps; :class:`PositivityLoss` is
    raised if that last attempt leaves the Kähler cone.
    """
    if K < 8:
        raise ValueError("K must be >= 8")
    grid = phi0.grid
    if phi1.grid != grid:
        raise ValueError("endpoints live on different grids")
    for k, p in ((0, phi0), (K, phi1)):
        try:
            make_state(p)
        except Exception as exc:
            raise PositivityLoss(k, exc) from exc
    dt = 1.0 / K
    if warm is None or warm.K != K:
        warm = _coarse_start(phi0, phi1, K, tol, max_iter)
    attempts = ([warm] if warm is not None else []) + [Path.linear(phi0, phi1, K)]
    for i, start in enumerate(attempts):
        try:
            res = _solve(phi0, phi1, start, K, dt, tol, max_iter, step_scale=1.0)
            res.retried = i > 0
            return res
        except (_Infeasible, NoConvergence) as exc:
            log.info("geodesic solve from start %d failed (%s); retrying", i, exc)
    try:
        res = _solve(phi0, phi1, Path.linear(phi0, phi1, K), K, dt, tol, max_iter, step_scale=0.5)
    except _Infeasible as exc:
        raise PositivityLoss(exc.node, f"min eigenvalue {exc.eig:.3e}") from None
    res.retried = True
    return res


def _coarse_start(phi0, phi1, K: int, tol: float, max_iter: int) -> Path | None:
    """The K/2 geodesic resampled at K + 1 nodes by a cubic spline in time, or None."""
    if K < 16 or K % 2:
        return None
    try:
        coarse = geodesic_segment(phi0, phi1, K // 2, tol, max_iter)
    except (NoConvergence, PositivityLoss):
        return None
    spline = CubicSpline(np.linspace(0.0, 1.0, K // 2 + 1), coarse.path.stack(), axis=0)
    nodes = spline(np.linspace(0.0, 1.0, K + 1))
    nodes[0], nodes[-1] = phi0.values, phi1.values
    start = Path([ScalarField(phi0.grid, p) for p in nodes])
    try:
        for k in range(1, K):
            start.state(k)
    except NotKahler:
        return None
    return start


def _dealias_filter(grid: GridSpec) -> np.ndarray:
    """Mask of the Fourier modes with |k|_inf < N / 3 (triple products of them do not alias)."""
    k = np.abs(np.fft.fftfreq(grid.N, d=1.0 / grid.N))
    ks = np.meshgrid(*([k] * (2 * grid.n)), indexing="ij")
    return np.max(np.stack(ks), axis=0) < grid.N / 3


def _filter(mask: np.ndarray, X: np.ndarray) -> np.ndarray:
    axes = tuple(range(X.ndim - mask.ndim, X.ndim))
    return np.real(sfft.ifftn(sfft.fftn(X, axes=axes) * mask, axes=axes))


def _solve(phi0, phi1, start: Path, K: int, dt: float, tol: float, max_iter: int,
           step_scale: float) -> GeodesicResult:
    grid = phi0.grid
    shape = (K - 1,) + grid.shape
    M = grid.size
    ends = (phi0.values, phi1.values)
    # objective scaled so its x-gradient is G / (2 dt); the optimizer works in y = x / sigma.
    # L-BFGS-B makes its first step unit length in y, so sigma ~ dt keeps that step inside the
    # cone and puts the diagonal of the Hessian (about 2 / dt^2 in x) near 1
    scale = M / (2.0 * dt)
    sigma = dt * step_scale
    big = [None]
    # interior nodes are the linear path plus corrections in the dealiased band, where the
    # grid mean of the cubic energy density is exact; outside it the energy has spurious
    # negative curvature at the Nyquist modes and the minimizer drifts out of the cone
    lin = Path.linear(phi0, phi1, K).stack()[1:-1]
    band = _dealias_filter(grid)

    def assemble(y):
        return np.concatenate([ends[0][None], lin + _filter(band, sigma * y.reshape(shape)), ends[1][None]])

    def fun(y):
        E, G, b = _energy_and_gradient(assemble(y), grid, dt)
        lo = b.min_eig.reshape(K, -1).min(axis=1)
        if not np.all(lo > 0):
            # a large finite value makes the line search backtrack
            if big[0] is None:
                big[0] = 1e6 * (abs(E) + 1.0)
            return big[0] * scale, np.zeros_like(y)
        return E * scale, (sigma / (2.0 * dt) * _filter(band, G)).ravel()

    y0 = _filter(band, np.stack([p.values for p in start.nodes[1:-1]]) - lin).ravel() / sigma
    res = minimize(fun, y0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "maxfun": 4 * max_iter, "gtol": sigma * tol, "ftol": 0.0,
                            "maxcor": 20})
    P = assemble(res.x)
    _, G, b = _energy_and_gradient(P, grid, dt)
    gsup = float(np.max(np.abs(_filter(band, G)))) / (2.0 * dt) if G.size else 0.0
    lo = b.min_eig.reshape(K, -1).min(axis=1)
    if not np.all(lo > 0):
        k = int(np.argmin(lo))
        raise _Infeasible(k + 1, float(lo[k]))
    if gsup > tol and not _stalled_at_roundoff(res, gsup, tol):
        raise NoConvergence(f"gradient sup {gsup:.3e} > tol {tol:.1e} after {res.nit} iterations, "
                            f"min metric eigenvalue {float(lo.min()):.3e} ({res.message})")
    path = Path([ScalarField(grid, p) for p in P])
    return certify(path, int(res.nit), gsup)


def _stalled_at_roundoff(res, gsup: float, tol: float) -> bool:
    # L-BFGS-B stops early when the energy no longer decreases in floating
    # point; accept that only within a factor 10 of the requested tolerance
    msg = str(res.message)
    return ("ABNORMAL" in msg or "REDUCTION OF F" in msg) and gsup <= 10.0 * tol


# ---------------------------------------------------------------------------
# checks along geodesics

def _has_nonpositive_chi(twist: TwistData, grid: GridSpec) -> bool:
    return twist.sign_class(grid) in (NEGATIVE_DEFINITE, NEGATIVE_SEMIDEFINITE)


def convexity_probe(result: GeodesicResult, twist: TwistData, residual_tol: float = 1e-2) -> CheckResult:
    """Second differences of J_beta along the nodes are >= -(10 residual + 1e-8).

    Raises :class:`NotGeodesic` if the residual exceeds ``residual_tol``.
    When chi is not <= 0 the result is reported with ``hypothesis=False``.
    """
    if result.residual_sup > residual_tol:
        raise NotGeodesic(f"residual {result.residual_sup:.3e} exceeds {residual_tol:.1e}")
    path = result.path
    J = np.array([frakJ_beta(path.state(k), twist) for k in range(path.K + 1)])
    d2 = J[2:] - 2.0 * J[1:-1] + J[:-2]
    tol = 10.0 * result.residual_sup + 1e-8
    worst = int(np.argmin(d2)) if d2.size else 0
    lhs = float(-d2[worst]) if d2.size else 0.0
    return CheckResult(
        name="convexity", anchor="J_beta is convex along geodesics when chi <= 0",
        lhs=lhs, rhs=0.0, tolerance=tol, passed=bool(lhs <= tol),
        detail={"worst_node": worst + 1, "hypothesis": _has_nonpositive_chi(twist, path.grid),
                "second_differences": d2.tolist()},
    )


def f_beta_estimate(result: GeodesicResult, twist: TwistData, residual_tol: float = 1e-2) -> float:
    """End slope mean(rho' (c_beta - tr chi + beta / det) det) at the final node.

    rho' is the one-sided difference into the last node; the value equals
    :func:`first_variation_jbeta` in the direction rho'.
    """
    if result.residual_sup > residual_tol:
        raise NotGeodesic(f"residual {result.residual_sup:.3e} exceeds {residual_tol:.1e}")
    path = result.path
    rho_dot = (path.nodes[-1].values - path.nodes[-2].values) / path.dt
    return first_variation_jbeta(path.state(path.K), twist, rho_dot)


def bridge_inequality_check(phi0: ScalarField, phi1: ScalarField, twist: TwistData, K: int = 16,
                            tol: float = 1e-7, result: GeodesicResult | None = None) -> CheckResult:
    """J_beta(phi1) - J_beta(phi0) <= d(phi0, phi1) * sqrt(E_beta(phi1))."""
    if result is None:
        result = geodesic_segment(phi0, phi1, K, tol)
    s0, s1 = make_state(phi0), make_state(phi1)
    lhs = frakJ_beta(s1, twist) - frakJ_beta(s0, twist)
    rhs = result.distance * math.sqrt(e_beta(s1, twist))
    slack = 10.0 * result.residual_sup + 1e-8
    return CheckResult(
        name="bridge_inequality", anchor="J_beta difference bounded by distance times sqrt(E_beta)",
        lhs=float(lhs), rhs=float(rhs), tolerance=slack, passed=bool(lhs <= rhs + slack),
        detail={"distance": result.distance, "residual": result.residual_sup},
    )


def npc_midpoint_check(x: ScalarField, y: ScalarField, z: ScalarField, K: int = 16,
                       tol: float = 1e-7) -> CheckResult:
    """d(x, m)^2 <= d(x, y)^2 / 2 + d(x, z)^2 / 2 - d(y, z)^2 / 4, m the midpoint of [y, z]."""
    if K % 2:
        raise ValueError("K must be even to have a midpoint node")
    yz = geodesic_segment(y, z, K, tol)
    m = yz.path.nodes[K // 2]
    xy = geodesic_segment(x, y, K, tol)
    xz = geodesic_segment(x, z, K, tol)
    xm = geodesic_segment(x, m, K, tol)
    lhs = xm.distance ** 2
    rhs = 0.5 * xy.distance ** 2 + 0.5 * xz.distance ** 2 - 0.25 * yz.distance ** 2
    res = max(r.residual_sup for r in (yz, xy, xz, xm))
    slack = 10.0 * res + 1e-7
    return CheckResult(
        name="npc_midpoint", anchor="nonpositive curvature: midpoint comparison inequality",
        lhs=float(lhs), rhs=float(rhs), tolerance=slack, passed=bool(lhs <= rhs + slack),
        detail={"d_xy": xy.distance, "d_xz": xz.distance, "d_yz": yz.distance, "d_xm": xm.distance,
                "max_residual": res},
    )


# ---------------------------------------------------------------------------
# rays anchored on flow trajectories

@dataclass
class RayReport:
    times: list[float]
    distances: list[float]
    cauchy: list[float]
    f_beta: list[float]
    min_jbeta: list[float]
    e_beta_over_t2: list[float]
    terminal_e_beta: float
    critical_value: float
    checks: list[CheckResult]

    def summary(self) -> dict:
        return {
            "times": self.times, "distances": self.distances, "cauchy": self.cauchy, "f_beta": self.f_beta,
            "min_jbeta": self.min_jbeta, "e_beta_over_t2": self.e_beta_over_t2,
            "terminal_e_beta": self.terminal_e_beta, "critical_value": self.critical_value,
        }


def ray_from_flow(trace, phi_seed: ScalarField, twist: TwistData, K: int = 16, tol: float = 1e-7,
                  max_segments: int | None = None) -> tuple[list[GeodesicResult], RayReport]:
    """Geodesic segments from ``phi_seed`` to the flow snapshots, with ray certificates.

    The trace must come from a converged flow started at ``phi_seed`` with
    snapshots.  Reports the sup-norm Cauchy differences of the unit initial
    directions, the end slopes (<= 1e-6), the minimum of J_beta along each
    segment (>= critical value - 1e-6), the terminal E_beta (<= final
    residual^2) and E_beta / t^2 (no new highs after the first segment).
    """
    from .flow import CONVERGED

    if trace.status != CONVERGED:
        raise ValueError("ray construction needs a converged flow")
    snaps = [(t, p) for t, p in trace.snapshots if t > 0]
    if max_segments is not None and len(snaps) > max_segments:
        idx = np.unique(np.round(np.geomspace(1, len(snaps), max_segments)).astype(int) - 1)
        snaps = [snaps[i] for i in idx]
    crit_state = make_state(snaps[-1][1]) if snaps else make_state(phi_seed)
    crit = frakJ_beta(crit_state, twist)
    results, times, dists, dirs, fb, mins, e_t2 = [], [], [], [], [], [], []
    for t, phi in snaps:
        r = geodesic_segment(phi_seed, phi, K, tol)
        results.append(r)
        times.append(float(t))
        dists.append(r.distance)
        d = (r.path.nodes[1].values - r.path.nodes[0].values) / r.path.dt
        dirs.append(d / r.distance if r.distance > 0 else np.zeros_like(d))
        # slope per unit length at the far end
        fb.append(f_beta_estimate(r, twist, residual_tol=math.inf) / r.distance if r.distance > 0 else 0.0)
        mins.append(min(frakJ_beta(r.path.state(k), twist) for k in range(K + 1)))
        e_t2.append(e_beta(r.path.state(K), twist) / (t * t))
    cauchy = [float(np.max(np.abs(b - a))) for a, b in zip(dirs, dirs[1:])]
    term_e = e_beta(crit_state, twist)
    checks = [
        CheckResult("ray_f_beta", "end slope of J_beta along the ray is <= 0",
                    float(max(fb, default=0.0)), 0.0, 1e-6, bool(max(fb, default=0.0) <= 1e-6)),
        CheckResult("ray_lower_bound", "J_beta bounded below along the ray",
                    float(crit - min(mins, default=crit)), 0.0, 1e-6, bool(min(mins, default=crit) >= crit - 1e-6),
                    {"critical_value": crit}),
        CheckResult("ray_terminal_energy", "E_beta at the ray end is at the residual^2 level",
                    float(term_e), float(trace.final_residual ** 2), 0.0, bool(term_e <= trace.final_residual ** 2)),
        CheckResult("ray_effective_envelope", "E_beta / t^2 along the ray has no new highs",
                    float(_new_high(e_t2)), 0.0, 1e-12, bool(_new_high(e_t2) <= 1e-12)),
    ]
    rep = RayReport(times, dists, cauchy, fb, mins, e_t2, term_e, crit, checks)
    return results, rep


def _new_high(seq) -> float:
    """Largest amount by which an entry exceeds the maximum of the earlier ones."""
    worst = 0.0
    for i in range(1, len(seq)):
        worst = max(worst, seq[i] - max(seq[:i]))
    return worst
