"""Scenario configs (JSON) and the runner that turns one into report files.

Schema (every section optional except ``grid``; unknown keys are rejected)::

    {
      "task": "functionals" | "flow" | "geodesic" | "verify" | "verify-all",
      "grid": {"n": 1 | 2, "N": power of two >= 8},
      "seed": non-negative integer,
      "twist": {"chi0": diagonal list or n x n real matrix, "chi0_imag": n x n matrix,
                "psi": {"fraction": float, "cutoff": int} | null, "psi_file": path,
                "beta": float >= 0, "alpha": float > 0},
      "potential": {"amplitude": float in [0, 1), "cutoff": int},
      "functionals": {"samples": int},
      "flow": {"dt0", "tol_residual", "max_steps", "record_every", "cone_variant",
               "dt_fraction", "snapshot_every", "oracle": bool, "gate_cone": bool},
      "geodesic": {"K": int, "tol": float, "amplitude": float, "cutoff": int},
      "verify": {"groups": [names], plus any VerifySettings field},
      "output": directory
    }

Random draws are keyed by ``(seed, stream)`` so every output is a function
of the config alone.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import flow as fl
from . import geodesics as geo
from . import plotting, snapshot
from .errors import ConfigError, LabError, NotApplicable, NotElliptic
from .field import GridSpec, ScalarField
from .functionals import frakJ_beta, e_beta, functional_report
from .geometry import TwistData, cone_condition, ellipticity_margin, make_state
from .report import CheckResult, emit_report
from .sampling import random_potential, random_twist_potential
from .verify import Battery, VerifySettings

log = logging.getLogger(__name__)

TASKS = ("functionals", "flow", "geodesic", "verify")
_ALIASES = {"verify-all": "verify"}

# random streams; never renumber
_TWIST, _SAMPLES, _FLOW, _GEODESIC = 0, 1, 6, 8

_TOP = {"task", "grid", "seed", "twist", "potential", "functionals", "flow", "geodesic", "verify", "output"}
_SECTIONS = {
    "grid": {"n", "N"},
    "twist": {"chi0", "chi0_imag", "psi", "psi_file", "beta", "alpha"},
    "psi": {"fraction", "cutoff"},
    "potential": {"amplitude", "cutoff"},
    "functionals": {"samples"},
    "flow": {"dt0", "tol_residual", "max_steps", "record_every", "cone_variant", "dt_fraction", "snapshot_every",
             "oracle", "gate_cone"},
    "geodesic": {"K", "tol", "amplitude", "cutoff"},
    "verify": {"groups"} | {f.name for f in dataclasses.fields(VerifySettings)} - {"n", "N", "seed"},
}


@dataclass(frozen=True)
class Scenario:
    task: str
    grid: GridSpec
    seed: int
    twist: TwistData
    amplitude: float = 0.5
    cutoff: int | None = None
    params: dict = field(default_factory=dict)
    output: str | None = None
    config: dict = field(default_factory=dict)


def _check_keys(d, allowed: set, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")
    return d


def _num(d: dict, key: str, default, where: str, kind=float, lo=None, hi=None, lo_open=False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not float(v).is_integer()):
        raise ConfigError(f"{where}.{key} must be a{'n integer' if kind is int else ' number'}")
    v = kind(v)
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{where}.{key} must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v >= hi:
        raise ConfigError(f"{where}.{key} must be < {hi}")
    return v


def _matrix(v, n: int, where: str) -> np.ndarray:
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be numeric") from None
    if a.ndim == 1 and a.size == n:
        return np.diag(a)
    if a.shape == (n, n):
        return a
    raise ConfigError(f"{where} must be a length-{n} diagonal or an {n} x {n} matrix")


def parse(config: dict, task: str | None = None, base: Path | None = None) -> Scenario:
    """Validate a config mapping; ``task`` (from the CLI verb) must agree with any task in the file."""
    _check_keys(config, _TOP, "config")
    ctask = config.get("task")
    if ctask is not None:
        ctask = _ALIASES.get(ctask, ctask)
        if ctask not in TASKS:
            raise ConfigError(f"unknown task {config['task']!r}")
    if task is not None:
        task = _ALIASES.get(task, task)
        if ctask is not None and ctask != task:
            raise ConfigError(f"config task {ctask!r} does not match the command {task!r}")
    task = task or ctask
    if task is None:
        raise ConfigError("no task given")
    if "grid" not in config:
        raise ConfigError("config needs a grid section")
    gd = _check_keys(config["grid"], _SECTIONS["grid"], "grid")
    n = _num(gd, "n", None, "grid", int)
    N = _num(gd, "N", None, "grid", int)
    if n is None or N is None:
        raise ConfigError("grid needs n and N")
    try:
        grid = GridSpec(n, N)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    seed = _num(config, "seed", 0, "config", int, lo=0)

    td = _check_keys(config.get("twist", {}), _SECTIONS["twist"], "twist")
    chi0 = _matrix(td.get("chi0", [-1.0] * n), n, "twist.chi0").astype(complex)
    if "chi0_imag" in td:
        chi0 = chi0 + 1j * _matrix(td["chi0_imag"], n, "twist.chi0_imag")
    beta = _num(td, "beta", 0.0, "twist", lo=0.0)
    alpha = _num(td, "alpha", 1.0, "twist", lo=0.0, lo_open=True)
    if "psi" in td and "psi_file" in td:
        raise ConfigError("twist takes psi or psi_file, not both")
    psi = None
    if td.get("psi_file") is not None:
        path = Path(td["psi_file"])
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            psi = snapshot.load(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"twist.psi_file: {exc}") from None
        if not isinstance(psi, ScalarField) or psi.grid != grid:
            raise ConfigError("twist.psi_file must hold a scalar field on the configured grid")
    elif td.get("psi") is not None:
        pd = _check_keys(td["psi"], _SECTIONS["psi"], "twist.psi")
        frac = _num(pd, "fraction", 0.5, "twist.psi", lo=0.0, hi=1.0)
        cut = _num(pd, "cutoff", None, "twist.psi", int, lo=1)
        rng = np.random.default_rng([seed, _TWIST])
        psi = random_twist_potential(grid, rng, chi0, frac, cut)
    try:
        twist = TwistData(chi0, psi, beta, alpha)
    except ValueError as exc:
        raise ConfigError(f"twist: {exc}") from None

    pd = _check_keys(config.get("potential", {}), _SECTIONS["potential"], "potential")
    amplitude = _num(pd, "amplitude", 0.5, "potential", lo=0.0, hi=1.0)
    cutoff = _num(pd, "cutoff", None, "potential", int, lo=1)

    params = _task_params(task, config, grid)
    out = config.get("output")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output must be a string")
    return Scenario(task, grid, seed, twist, amplitude, cutoff, params, out, config)


def _task_params(task: str, config: dict, grid: GridSpec) -> dict:
    for other in ("functionals", "flow", "geodesic", "verify"):
        if other in config:
            _check_keys(config[other], _SECTIONS[other], other)
    d = config.get(task, {})
    if task == "functionals":
        return {"samples": _num(d, "samples", 10, "functionals", int, lo=1)}
    if task == "flow":
        try:
            cfg = fl.FlowConfig(
                dt0=_num(d, "dt0", None, "flow", lo=0.0, lo_open=True),
                tol_residual=_num(d, "tol_residual", 1e-8, "flow", lo=0.0, lo_open=True),
                max_steps=_num(d, "max_steps", 100_000, "flow", int, lo=0),
                record_every=_num(d, "record_every", 10, "flow", int, lo=1),
                cone_variant=d.get("cone_variant", "theorem"),
                dt_fraction=_num(d, "dt_fraction", 0.8, "flow", lo=0.0, lo_open=True),
                snapshot_every=_num(d, "snapshot_every", None, "flow", int, lo=1),
            )
        except ValueError as exc:
            raise ConfigError(f"flow: {exc}") from None
        flags = {}
        for key, default in (("oracle", grid.n == 1), ("gate_cone", True)):
            v = d.get(key, default)
            if not isinstance(v, bool):
                raise ConfigError(f"flow.{key} must be true or false")
            flags[key] = v
        return {"config": cfg, **flags}
    if task == "geodesic":
        K = _num(d, "K", 16, "geodesic", int, lo=8)
        return {"K": K, "tol": _num(d, "tol", 1e-7, "geodesic", lo=0.0, lo_open=True),
                "amplitude": _num(d, "amplitude", None, "geodesic", lo=0.0, hi=1.0),
                "cutoff": _num(d, "cutoff", None, "geodesic", int, lo=1)}
    # verify
    overrides = {k: v for k, v in d.items() if k != "groups"}
    groups = d.get("groups")
    if groups is not None:
        if not isinstance(groups, list) or any(not isinstance(g, str) or g not in Battery.GROUPS for g in groups):
            raise ConfigError(f"verify.groups must list names from {sorted(Battery.GROUPS)}")
    for k in ("chi0", "refine_K"):
        if k in overrides:
            overrides[k] = tuple(overrides[k])
    return {"groups": groups, "overrides": overrides}


def load(path: str | Path, task: str | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse(data, task, base=path.parent)


def shipped(name: str) -> Path:
    """Path of a config shipped with the package (``name`` without ``.json``)."""
    ref = resources.files("kjblab") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise ConfigError(f"no shipped scenario named {name!r}")
    return Path(str(ref))


def shipped_names() -> list[str]:
    d = resources.files("kjblab") / "scenarios"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


# ---------------------------------------------------------------------------
# tasks

def _initial(sc: Scenario, stream: int) -> ScalarField:
    return random_potential(sc.grid, np.random.default_rng([sc.seed, stream]), sc.amplitude, sc.cutoff)


def _functionals(sc: Scenario, out: Path):
    rng = np.random.default_rng([sc.seed, _SAMPLES])
    header = ("sample", "amplitude", "I", "J", "D", "j_chi", "entropy", "k_twisted", "frakJ", "frakJ_beta",
              "E_beta", "c_beta", "I_dual_error", "decomposition_error")
    rows, dec, dual, lo, hi = [], [], [], [], []
    n = sc.grid.n
    for i in range(sc.params["samples"]):
        amp = float(rng.uniform(0.05, 0.95)) if i else sc.amplitude
        phi = random_potential(sc.grid, rng, amp, sc.cutoff)
        if i == 0:
            snapshot.save(out / "sample_000.field", phi)
        r = functional_report(make_state(phi), sc.twist)
        c = r.consistency
        rows.append((i, amp, r.I, r.J, r.D, r.j_chi, r.entropy, r.k_twisted, r.frakJ, r.frakJ_beta, r.E_beta,
                     r.c_beta, c["I_dual"], c["decomposition"]))
        dec.append(c["decomposition"])
        dual.append(c["I_dual"])
        lo.append(r.I / (n + 1) - r.J - 1e-12 * (1 + abs(r.I)))
        hi.append(r.J - n * r.I / (n + 1) - 1e-12 * (1 + abs(r.I)))
    checks = [
        CheckResult("k_energy_decomposition", "twisted K-energy splits into entropy, -beta J and J_beta",
                    max(dec), 0.0, 1e-10, max(dec) <= 1e-10),
        CheckResult("aubin_i_dual_formula", "two expressions of Aubin's I agree", max(dual), 0.0, 1e-10,
                    max(dual) <= 1e-10),
        CheckResult("i_j_equivalence", "I / (n+1) <= J <= n I / (n+1)", max(max(lo), max(hi)), 0.0, 0.0,
                    max(lo) <= 0 and max(hi) <= 0),
    ]
    return checks, {"functionals": (header, rows)}, {}


def _cone_extra(sc: Scenario, state, variant: str) -> dict:
    if sc.grid.n == 1:
        return {}
    rep = cone_condition(state, sc.twist, variant)
    return {"cone": dataclasses.asdict(rep) | {"cone_ok": rep.cone_ok, "elliptic": rep.elliptic}}


def _flow(sc: Scenario, out: Path):
    p = sc.params
    cfg: fl.FlowConfig = p["config"]
    oracle = fl.linear_oracle_n1(sc.twist, sc.grid) if p["oracle"] else None
    phi0 = _initial(sc, _FLOW)
    snapshot.save(out / "phi0.field", phi0)
    if sc.twist.psi is not None:
        snapshot.save(out / "psi.field", sc.twist.psi)
    st0 = make_state(phi0)
    # ellipticity is a precondition of the scheme, the cone condition only of its convergence theory
    margin, idx = ellipticity_margin(st0, sc.twist)
    if not margin > 0:
        raise NotElliptic(margin, idx)
    extra = _cone_extra(sc, st0, cfg.cone_variant)
    if extra and p["gate_cone"] and not extra["cone"]["cone_ok"]:
        raise NotApplicable(f"cone condition ({cfg.cone_variant} variant) fails: margin "
                            f"{extra['cone']['cone_margin']:.6g}")
    trace, state = fl.run(phi0, sc.twist, cfg)
    snapshot.save(out / "final.field", state.phi)
    checks = [
        CheckResult("flow_converged", "the flow converges to a critical metric", trace.final_residual,
                    cfg.tol_residual, 0.0, trace.status == fl.CONVERGED, trace.summary()),
        fl.energy_dissipation_check(trace),
        fl.maximum_principle_check(trace, slack=1e-6, lipschitz=0.0),
    ]
    if cfg.snapshot_every is not None:
        try:
            checks.append(fl.eigen_bound_check(trace, sc.twist, "derived"))
        except NotApplicable as exc:
            extra["eigen_bound"] = str(exc)
    if oracle is not None:
        ores = fl.oracle_residual(oracle, sc.twist)
        diff = state.phi.values - state.phi.mean() - (oracle.values - oracle.mean())
        dsup = float(np.max(np.abs(diff)))
        checks += [
            CheckResult("oracle_residual", "spectral solution of the linear critical equation", ores, 0.0, 1e-12,
                        ores <= 1e-12),
            CheckResult("oracle_equivalence", "flow limit equals the critical metric up to a constant", dsup, 0.0,
                        1e-6, dsup <= 1e-6),
        ]
    plotting.plot_flow_trace(trace, out / "flow.png")
    header = ("step", "dt") + fl.TRACE_COLUMNS
    rows = [(s, dt) + tuple(r) for s, dt, r in zip(trace.steps, trace.dts, trace.rows)]
    extra["flow"] = trace.summary()
    return checks, {"trace": (header, rows)}, extra


def _geodesic(sc: Scenario, out: Path):
    p = sc.params
    rng = np.random.default_rng([sc.seed, _GEODESIC])
    amp = p["amplitude"] if p["amplitude"] is not None else sc.amplitude
    cut = p["cutoff"] if p["cutoff"] is not None else sc.cutoff
    a = random_potential(sc.grid, rng, amp, cut)
    b = random_potential(sc.grid, rng, amp, cut)
    r = geo.geodesic_segment(a, b, p["K"], p["tol"])
    path = r.path
    for k in (0, path.K // 2, path.K):
        snapshot.save(out / f"node_{k:03d}.field", path.nodes[k])
    res = geo.geodesic_residual(path)
    node_res = [math.nan] + [float(np.max(np.abs(x))) for x in res] + [math.nan]
    rows = [(k, k * path.dt, frakJ_beta(path.state(k), sc.twist), e_beta(path.state(k), sc.twist), node_res[k])
            for k in range(path.K + 1)]
    seg = [(k, (k + 0.5) * path.dt, float(s)) for k, s in enumerate(r.speeds)]
    checks = [
        geo.convexity_probe(r, sc.twist),
        geo.bridge_inequality_check(a, b, sc.twist, p["K"], p["tol"], result=r),
        CheckResult("speed_constancy", "geodesics have constant speed", r.speed_variance, 0.0, 1e-3,
                    r.speed_variance <= 1e-3),
    ]
    plotting.plot_geodesic(r, out / "geodesic.png")
    tables = {"nodes": (("node", "s", "J_beta", "E_beta", "residual_sup"), rows),
              "segments": (("segment", "s_mid", "speed"), seg)}
    return checks, tables, {"geodesic": r.summary()}


def _verify(sc: Scenario, out: Path):
    p = sc.params
    # the battery draws its own psi; the config contributes chi0 and the psi fraction
    td = sc.config.get("twist", {})
    base = {"beta": sc.twist.beta, "alpha": sc.twist.alpha,
            "chi0": tuple(map(tuple, np.real(sc.twist.chi0).tolist()))}
    if "psi" in td:
        base["psi_fraction"] = 0.0 if td["psi"] is None else float(td["psi"].get("fraction", 0.5))
    try:
        settings = VerifySettings(n=sc.grid.n, N=sc.grid.N, seed=sc.seed, **{**base, **p["overrides"]})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"verify: {exc}") from None
    b = Battery(settings)
    checks = b.run(p["groups"])
    if "refinement" in b.notes:
        ref = b.notes["refinement"]
        plotting.plot_refinement(ref["K"], ref["residual_sup"], out / "refinement.png")
    rows = [(c.name, int(c.passed), c.lhs, c.rhs, c.tolerance, c.anchor) for c in checks]
    return checks, {"checks": (("name", "pass", "lhs", "rhs", "tolerance", "anchor"), rows)}, {"notes": b.notes}


_RUNNERS = {"functionals": _functionals, "flow": _flow, "geodesic": _geodesic, "verify": _verify}


def run_scenario(sc: Scenario, out_dir: str | Path | None = None) -> tuple[int, dict]:
    """Run one scenario and write its artifacts; returns ``(exit status, summary)``.

    Status is 0 when every check passes, 2 when a check fails and 1 when the
    task raised; errors are reported as a structured record in summary.json.
    """
    out = Path(out_dir or sc.output or f"kjblab-{sc.task}")
    out.mkdir(parents=True, exist_ok=True)
    head = {"task": sc.task, "grid": {"n": sc.grid.n, "N": sc.grid.N}, "seed": sc.seed}
    try:
        checks, tables, extra = _RUNNERS[sc.task](sc, out)
    except LabError as exc:
        log.info("%s: %s", exc.code, exc)
        return 1, _error_report(out, head, exc.to_dict(), getattr(exc, "trace", None))
    except (ValueError, ArithmeticError) as exc:
        log.info("%s: %s", type(exc).__name__, exc)
        return 1, _error_report(out, head, {"error": type(exc).__name__, "message": str(exc)}, None)
    plotting.plot_checks(checks, out / "checks.png")
    summary = emit_report(out, checks, tables, {**head, "status": "ok", **extra})
    return (0 if summary["all_pass"] else 2), summary


def _error_report(out: Path, head: dict, err: dict, trace) -> dict:
    tables = None
    if trace is not None and len(trace):
        rows = [(s, dt) + tuple(r) for s, dt, r in zip(trace.steps, trace.dts, trace.rows)]
        tables = {"trace": (("step", "dt") + fl.TRACE_COLUMNS, rows)}
    return emit_report(out, [], tables, {**head, "status": "error", "all_pass": False, "error": err})

