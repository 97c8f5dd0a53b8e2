"""Negative gradient flow of J_beta: d phi / dt = H (the critical-equation residual).

Time stepping is explicit Euler with halving on rejection and doubling on
success, capped by the stability limit of the linearized operator

    L u = [-g^{k jbar} g^{i lbar} chi_{k lbar} + beta (omega^n / omega_phi^n) g^{i jbar}] u_{i jbar}.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import field as tf
from .errors import DegenerateConstant, Diverged, NotApplicable, NotElliptic, NotKahler, StepRejected
from .field import GridSpec, ScalarField
from .functionals import e_beta, frakJ_beta
from .geometry import (
    CONE_VARIANTS, NEGATIVE_DEFINITE, KahlerState, TwistData, c_beta, ellipticity_margin, h_tilde,
    make_state,
)
from .report import CheckResult

log = logging.getLogger(__name__)

CONVERGED = "Converged"
BUDGET = "Budget"
MIN_DT = 1e-12

TRACE_COLUMNS = ("t", "J_beta", "E_beta", "min_dot", "max_dot", "pos_margin", "ellip_margin",
                 "eig_margin", "A_max", "osc_phi")


@dataclass(frozen=True)
class FlowConfig:
    """Stepping parameters.

    ``dt0 = None`` starts at the stability cap.  ``dt_fraction`` is the
    fraction of the explicit-Euler stability limit used as the cap; halving
    it is the refinement used for the gradient-flow identity.
    ``snapshot_every`` (in steps) stores potentials for ray construction.
    ``adaptive=False`` keeps dt at ``dt0`` (no cap, no doubling) and still
    halves on rejection; it gives runs with matched times.
    """

    dt0: float | None = None
    tol_residual: float = 1e-8
    max_steps: int = 100_000
    record_every: int = 1
    cone_variant: str = "theorem"
    dt_fraction: float = 0.8
    snapshot_every: int | None = None
    adaptive: bool = True

    def __post_init__(self):
        if self.dt0 is not None and not self.dt0 > 0:
            raise ValueError("dt0 must be > 0")
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be > 0")
        if self.max_steps < 0 or self.record_every < 1:
            raise ValueError("max_steps must be >= 0 and record_every >= 1")
        if self.cone_variant not in CONE_VARIANTS:
            raise ValueError(f"cone_variant must be one of {CONE_VARIANTS}")
        if not 0 < self.dt_fraction <= 1:
            raise ValueError("dt_fraction must lie in (0, 1]")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if not self.adaptive and self.dt0 is None:
            raise ValueError("a fixed-step run needs dt0")


@dataclass
class FlowTrace:
    """Append-only record of the monitors, one row per recorded step."""

    rows: list[tuple] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)
    snapshots: list[tuple[float, ScalarField]] = field(default_factory=list)
    status: str | None = None
    n_steps: int = 0
    final_residual: float = math.nan
    rejections: int = 0
    initial_min_dot: float = math.nan
    initial_max_dot: float = math.nan

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def __len__(self) -> int:
        return len(self.rows)

    def summary(self) -> dict:
        return {
            "status": self.status, "steps": self.n_steps, "final_residual": self.final_residual,
            "records": len(self.rows), "rejections": self.rejections,
            "final_J_beta": self.rows[-1][1] if self.rows else None,
            "final_E_beta": self.rows[-1][2] if self.rows else None,
        }


# ---------------------------------------------------------------------------
# stepping

def linearization_coefficients(state: KahlerState, twist: TwistData) -> np.ndarray:
    """Coefficient matrix a^{i jbar} of L, stored as ``A[..., j, i]`` like the inverse metric."""
    Gi = state.inverse.matrices
    chi = twist.chi(state.grid).matrices
    return -Gi @ chi @ Gi + (twist.beta / state.det.values)[..., None, None] * Gi


def stable_dt(state: KahlerState, twist: TwistData, fraction: float = 0.8) -> float:
    """``fraction`` of the explicit-Euler limit 2 / (max eig(a) * max |symbol|)."""
    a = float(tf.eigvalsh_array(linearization_coefficients(state, twist))[..., -1].max())
    if a <= 0:
        return math.inf
    return fraction * 2.0 / (a * state.grid._symbols.max_symbol)


def step(state: KahlerState, twist: TwistData, dt: float) -> KahlerState:
    """One explicit Euler step ``phi + dt * H``.

    Raises :class:`NotElliptic` if the entry state is not elliptic and
    :class:`StepRejected` if the result loses positivity or ellipticity.
    """
    margin, idx = ellipticity_margin(state, twist)
    if not margin > 0:
        raise NotElliptic(margin, idx)
    return _advance(state, twist, dt, h_tilde(state, twist))


def _advance(state: KahlerState, twist: TwistData, dt: float, H: ScalarField) -> KahlerState:
    try:
        new = make_state(ScalarField(state.grid, state.phi.values + dt * H.values))
    except (NotKahler, ValueError) as exc:
        raise StepRejected(f"dt={dt:.3e}: {exc}") from exc
    margin, _ = ellipticity_margin(new, twist)
    if not margin > 0:
        raise StepRejected(f"dt={dt:.3e}: ellipticity margin {margin:.3e}")
    return new


# ---------------------------------------------------------------------------
# monitors

def monitor_a(state: KahlerState, twist: TwistData) -> float:
    """max of tr((-chi)^{-1} g_phi); NaN unless chi is negative definite."""
    if twist.sign_class(state.grid) != NEGATIVE_DEFINITE:
        return math.nan
    key = ("neg_inv", state.grid)
    if key not in twist._cache:
        twist._cache[key] = tf.inv_array(-twist.chi(state.grid).matrices)
    neg_inv = twist._cache[key]
    return float(tf.trace_product(neg_inv, state.metric.matrices).max())


EIGEN_BOUND_VARIANTS = ("derived", "literal")


def eigen_bound_denominator(min_dot0: float, cb: float, variant: str = "derived") -> float:
    """Denominator of the lower bound g_phi >= -chi / denominator.

    ``derived`` is ``-c_beta - min phi_dot(0)``, which follows from the flow
    equation and the maximum principle; ``literal`` is
    ``min phi_dot(0) - c_beta``.
    """
    if variant == "derived":
        return -cb - min_dot0
    if variant == "literal":
        return min_dot0 - cb
    raise ValueError(f"unknown eigen-bound variant {variant!r}")


def eigen_margin(state: KahlerState, twist: TwistData, denom: float) -> float:
    """Smallest eigenvalue of g_phi + chi / denom over the grid."""
    chi = twist.chi(state.grid).matrices
    return float(tf.eigvalsh_array(state.metric.matrices + chi / denom)[..., 0].min())


def _record(trace: FlowTrace, t: float, state: KahlerState, twist: TwistData, H: ScalarField, denom: float):
    ell, _ = ellipticity_margin(state, twist)
    eig = eigen_margin(state, twist, denom) if denom > 0 and twist.sign_class(state.grid) == NEGATIVE_DEFINITE \
        else math.nan
    trace.rows.append((
        float(t), frakJ_beta(state, twist), e_beta(state, twist),
        float(H.values.min()), float(H.values.max()), state.min_eig, ell, eig,
        monitor_a(state, twist), state.phi.osc(),
    ))


# ---------------------------------------------------------------------------
# driver

class _Kernel:
    """Raw-array evaluation of the per-step quantities.

    Mirrors :func:`h_tilde`, :func:`ellipticity_margin`, ``make_state``'s
    positivity test and :func:`stable_dt` with closed-form 1x1 / 2x2
    algebra and real FFTs; the driver materializes a :class:`KahlerState`
    only when recording.
    """

    def __init__(self, grid: GridSpec, twist: TwistData, fraction: float):
        self.grid = grid
        self.cb = c_beta(twist, grid)
        self.beta = twist.beta
        self.fraction = fraction
        half = grid.N // 2 + 1
        self.axes = tuple(range(2 * grid.n))
        sym = grid._symbols.hess
        chi = twist.chi(grid).matrices
        # the real and imaginary parts of each symbol are even, so each part maps real to real
        self.s00 = np.real(sym[0][0])[..., :half]
        self.c00 = np.real(chi[..., 0, 0])
        if grid.n == 2:
            self.s11 = np.real(sym[1][1])[..., :half]
            self.s01r = np.real(sym[0][1])[..., :half]
            self.s01i = np.imag(sym[0][1])[..., :half]
            self.c11 = np.real(chi[..., 1, 1])
            self.cr = np.real(chi[..., 0, 1])
            self.ci = np.imag(chi[..., 0, 1])
        else:
            self.ell = float((self.beta - self.c00).min())

    def _inv(self, F):
        return sfft.irfftn(F, s=self.grid.shape, axes=self.axes)

    def evaluate(self, phi: np.ndarray):
        """Return ``(min_eig, ellipticity margin, H, dt cap)``; H and cap are None on failure."""
        F = sfft.rfftn(phi)
        beta = self.beta
        if self.grid.n == 1:
            g = 1.0 + self._inv(self.s00 * F)
            lo = float(g.min())
            if not lo > 0:
                return lo, self.ell, None, None
            H = (self.c00 - beta) / g - self.cb
            amax = float(((beta - self.c00) / (g * g)).max())
            return lo, self.ell, H, _cap(amax, self.grid, self.fraction)
        # metric [[a, b], [conj b, d]] with b = br + i bi
        a = 1.0 + self._inv(self.s00 * F)
        d = 1.0 + self._inv(self.s11 * F)
        br = self._inv(self.s01r * F)
        bi = self._inv(self.s01i * F)
        b2 = br * br + bi * bi
        lo = float(_min_eig2(a, d, b2).min())
        if not lo > 0:
            return lo, math.nan, None, None
        det = a * d - b2
        r = beta / det
        # ellipticity matrix M = -chi + (beta / det) g
        m00, m11 = r * a - self.c00, r * d - self.c11
        mr, mi = r * br - self.cr, r * bi - self.ci
        m2 = mr * mr + mi * mi
        ell = float(_min_eig2(m00, m11, m2).min())
        if not ell > 0:
            return lo, ell, None, None
        H = (d * self.c00 + a * self.c11 - 2.0 * (br * self.cr + bi * self.ci)) / det - self.cb - r
        # L's coefficients g^{-1} M g^{-1}: trace tr(M g^{-2}), determinant det M / det^2
        tr = (m00 * (d * d + b2) + m11 * (a * a + b2) - 2.0 * (a + d) * (mr * br + mi * bi)) / (det * det)
        dt_ = (m00 * m11 - m2) / (det * det)
        amax = float((0.5 * tr + np.sqrt(np.maximum(0.25 * tr * tr - dt_, 0.0))).max())
        return lo, ell, H, _cap(amax, self.grid, self.fraction)


def _min_eig2(a, d, b2):
    """Smallest eigenvalue of the Hermitian [[a, b], [conj b, d]] given |b|^2."""
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b2)


def _cap(a: float, grid: GridSpec, fraction: float) -> float:
    return math.inf if a <= 0 else fraction * 2.0 / (a * grid._symbols.max_symbol)


def _try_state(phi: ScalarField) -> KahlerState | None:
    try:
        return make_state(phi)
    except NotKahler:
        return None


def run(phi0: ScalarField, twist: TwistData, config: FlowConfig = FlowConfig()) -> tuple[FlowTrace, KahlerState]:
    """Integrate until sup|H| < tol_residual (Converged) or max_steps (Budget).

    Raises :class:`NotElliptic` if the initial state is not elliptic and
    :class:`Diverged` (carrying the partial trace) if dt underflows.
    """
    state = make_state(phi0)
    grid = state.grid
    margin, idx = ellipticity_margin(state, twist)
    if not margin > 0:
        raise NotElliptic(margin, idx)
    kernel = _Kernel(grid, twist, config.dt_fraction)
    trace = FlowTrace()
    Hf = h_tilde(state, twist)
    trace.initial_min_dot = float(Hf.values.min())
    trace.initial_max_dot = float(Hf.values.max())
    denom = eigen_bound_denominator(trace.initial_min_dot, kernel.cb)
    _record(trace, 0.0, state, twist, Hf, denom)
    trace.steps.append(0)
    trace.dts.append(0.0)
    if config.snapshot_every is not None:
        trace.snapshots.append((0.0, state.phi))

    phi = np.array(phi0.values)
    H = Hf.values
    cap = stable_dt(state, twist, config.dt_fraction)
    dt = config.dt0 if config.dt0 is not None else cap
    t = 0.0
    k = 0
    last_snap = 0
    while True:
        res = float(np.max(np.abs(H)))
        if res < config.tol_residual:
            trace.status = CONVERGED
            break
        if k >= config.max_steps:
            trace.status = BUDGET
            break
        if config.adaptive:
            dt = min(dt, cap)
        while True:
            trial = phi + dt * H
            lo, ell, H_new, cap_new = kernel.evaluate(trial)
            if H_new is not None and ell > 0:
                break
            trace.rejections += 1
            log.debug("step %d rejected at dt=%.3e (min eig %.3e, ellipticity %.3e)", k, dt, lo, ell)
            dt *= 0.5
            if dt < MIN_DT:
                trace.n_steps = k
                trace.final_residual = res
                trace.status = "Diverged"
                raise Diverged(f"time step underflow at step {k}, t={t:.6g}", trace)
        phi, H, cap = trial, H_new, cap_new
        t += dt
        k += 1
        done = float(np.max(np.abs(H))) < config.tol_residual or k >= config.max_steps
        if k % config.record_every == 0 or done:
            state = make_state(ScalarField(grid, phi))
            _record(trace, t, state, twist, ScalarField(grid, H), denom)
            trace.steps.append(k)
            trace.dts.append(dt)
        if config.snapshot_every is not None and (k % config.snapshot_every == 0 or done):
            trace.snapshots.append((t, ScalarField(grid, phi)))
            last_snap = k
        if config.adaptive:
            dt *= 2.0
    trace.n_steps = k
    trace.final_residual = float(np.max(np.abs(H)))
    state = make_state(ScalarField(grid, phi))
    if config.snapshot_every is not None and last_snap != k:
        trace.snapshots.append((t, state.phi))
    return trace, state


# ---------------------------------------------------------------------------
# exact oracle and checks

def linear_oracle_n1(twist: TwistData, grid: GridSpec | None = None) -> ScalarField:
    """Mean-zero solution of the n = 1 critical equation chi = c_beta omega_phi + beta omega.

    For n = 1 the equation is linear: ``1 + phi_{z zbar} = (chi - beta) / c_beta``.
    """
    if twist.n != 1:
        raise NotApplicable("the linear oracle exists only for n = 1")
    if grid is None:
        if twist.psi is None:
            raise ValueError("grid is required when the twist has no potential")
        grid = twist.psi.grid
    cb = c_beta(twist, grid)
    if cb == 0:
        raise DegenerateConstant("c_beta = 0: the critical equation has no solution")
    chi = np.real(twist.chi(grid).matrices[..., 0, 0])
    rhs = (chi - twist.beta) / cb - 1.0
    rhs = rhs - rhs.mean()
    return ScalarField(grid, tf.solve_hessian_trace(grid, rhs))


def oracle_residual(phi: ScalarField, twist: TwistData) -> float:
    """sup |chi - c_beta omega_phi - beta omega| (n = 1 densities)."""
    g = phi.grid
    chi = np.real(twist.chi(g).matrices[..., 0, 0])
    dens = 1.0 + np.real(tf.hessian_array(g, phi.values)[..., 0, 0])
    return float(np.max(np.abs(chi - c_beta(twist, g) * dens - twist.beta)))


def lipschitz_estimate(trace: FlowTrace) -> float:
    """Largest recorded rate of change of min/max phi_dot."""
    t = trace.times
    if len(t) < 2:
        return 0.0
    dt = np.diff(t)
    rates = [np.abs(np.diff(trace.column(c))) / dt for c in ("min_dot", "max_dot")]
    return float(max(r.max() for r in rates))


def maximum_principle_check(trace: FlowTrace, slack: float = 1e-6, lipschitz: float | None = None) -> CheckResult:
    """min phi_dot(0) <= phi_dot(t) <= max phi_dot(0) at all recorded times.

    Tolerance is ``slack + 10 * dt * lipschitz``; pass ``lipschitz=0`` for
    the bare slack.
    """
    if not len(trace):
        raise ValueError("empty trace")
    lo0, hi0 = trace.column("min_dot")[0], trace.column("max_dot")[0]
    if lipschitz is None:
        lipschitz = lipschitz_estimate(trace)
    tol = slack + 10.0 * max(trace.dts) * lipschitz
    below = lo0 - trace.column("min_dot")
    above = trace.column("max_dot") - hi0
    viol = np.maximum(below, above)
    worst = int(np.argmax(viol))
    return CheckResult(
        name="maximum_principle", anchor="maximum principle for phi_dot along the flow",
        lhs=float(viol[worst]), rhs=0.0, tolerance=tol, passed=bool(viol[worst] <= tol),
        detail={"worst_index": worst, "worst_time": float(trace.times[worst]),
                "min_dot0": float(lo0), "max_dot0": float(hi0)},
    )


def eigen_bound_check(trace: FlowTrace, twist: TwistData, variant: str = "derived",
                      tol: float = 1e-8) -> CheckResult:
    """g_phi >= -chi / denominator at every snapshot of the trace.

    Raises :class:`NotApplicable` unless chi is negative definite and the
    denominator is positive.
    """
    if not trace.snapshots:
        raise ValueError("eigen_bound_check needs flow snapshots")
    grid = trace.snapshots[0][1].grid
    if twist.sign_class(grid) != NEGATIVE_DEFINITE:
        raise NotApplicable("eigenvalue lower bound needs chi negative definite")
    cb = c_beta(twist, grid)
    denom = eigen_bound_denominator(trace.initial_min_dot, cb, variant)
    if not denom > 0:
        raise NotApplicable(f"denominator {denom:.6g} is not positive")
    margins = np.array([eigen_margin(make_state(phi), twist, denom) for _, phi in trace.snapshots])
    worst = int(np.argmin(margins))
    return CheckResult(
        name=f"eigen_bound_{variant}", anchor="lower bound of the second derivatives along the flow",
        lhs=float(-margins[worst]), rhs=0.0, tolerance=tol, passed=bool(margins[worst] >= -tol),
        detail={"worst_snapshot": worst, "worst_time": float(trace.snapshots[worst][0]),
                "denominator": denom, "variant": variant},
    )


def energy_dissipation_check(trace: FlowTrace, slack: float = 1e-9) -> CheckResult:
    """J_beta non-increasing between records up to ``slack * (1 + |J|)``."""
    J = trace.column("J_beta")
    if len(J) < 2:
        return CheckResult("energy_dissipation", "J_beta decreases along its negative gradient flow",
                           0.0, 0.0, slack, True, {"records": len(J)})
    rise = np.diff(J) - slack * (1.0 + np.abs(J[:-1]))
    worst = int(np.argmax(rise))
    inc = float(J[worst + 1] - J[worst])
    return CheckResult(
        name="energy_dissipation", anchor="J_beta decreases along its negative gradient flow",
        lhs=inc, rhs=0.0, tolerance=float(slack * (1.0 + abs(J[worst]))), passed=bool(rise[worst] <= 0),
        detail={"worst_index": worst, "records": len(J)},
    )


def gradient_flow_identity(phi0: ScalarField, twist: TwistData, steps: int = 2000, fraction: float = 0.5,
                           rel_tol: float = 0.01, floor: float = 1e-14) -> CheckResult:
    """dJ_beta/dt = -E_beta, checked by Richardson extrapolation over two fixed-step runs.

    Runs ``steps`` steps at dt and ``2 * steps`` at dt / 2 with every step
    recorded, forms central differences of J_beta at the shared times, and
    extrapolates both the derivative and E_beta to remove the O(dt) error of
    Euler stepping.  Times where E_beta is below ``floor`` are skipped
    because the J differences there are at roundoff level.
    """
    dt = stable_dt(make_state(phi0), twist, fraction)
    coarse, _ = run(phi0, twist, FlowConfig(dt0=dt, adaptive=False, max_steps=steps, tol_residual=1e-300))
    fine, _ = run(phi0, twist, FlowConfig(dt0=0.5 * dt, adaptive=False, max_steps=2 * steps, tol_residual=1e-300))
    if coarse.rejections or fine.rejections:
        raise StepRejected("fixed-step runs for the identity check were rejected; lower fraction")
    Jc, Ec = coarse.column("J_beta"), coarse.column("E_beta")
    Jf, Ef = fine.column("J_beta"), fine.column("E_beta")
    k = np.arange(1, len(Jc) - 1)
    Dc = (Jc[k + 1] - Jc[k - 1]) / (2.0 * dt)
    Df = (Jf[2 * k + 1] - Jf[2 * k - 1]) / dt
    D = 2.0 * Df - Dc
    E = 2.0 * Ef[2 * k] - Ec[k]
    mask = E > floor
    rel = np.where(mask, np.abs(D + E) / np.where(mask, E, 1.0), 0.0)
    worst = int(np.argmax(rel))
    mono = max(energy_dissipation_check(coarse).lhs, energy_dissipation_check(fine).lhs)
    return CheckResult(
        name="gradient_flow_identity", anchor="the flow is the negative gradient of J_beta",
        lhs=float(rel[worst]), rhs=0.0, tolerance=rel_tol, passed=bool(rel[worst] <= rel_tol),
        detail={"dt": dt, "steps": steps, "matched_times": int(mask.sum()),
                "worst_time": float(k[worst] * dt), "max_J_increase": mono},
    )
