"""Command-line scenario runner.

    rotorkit <subcommand> --config run.yaml [--out DIR] [--seed N] [--jmax J] [--quiet]

Subcommands: spectrum, align, orient2c, echo, kicked, emdiagram, optimize.
Exit status: 0 on success, 1 for configuration errors, 2 for numerical
failures (truncation watchdog, positivity or step-size aborts).
"""
import argparse
import hashlib
import json
import logging
import math
from pathlib import Path
import sys
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
import yaml

from . import __version__
from . import control, scenarios
from .basis import build_basis
from .classical import InertiaSpec, em_diagram, quantum_overlay
from .dynamics import (Drive, PositivityError, QuantumState, StepSizeError, TruncationError,
                       free_energies, load_state, save_state, thermal_state)
from .hamiltonian import RotorSpec, cos_product, direction_cosine, j_squared
from .observables import detect_features
from .pulses import GaussianEnvelope, HalfCycleTHz, KickTrain, Ramp, TwoColor

log = logging.getLogger("rotorkit")

SUBCOMMANDS = ("spectrum", "align", "orient2c", "echo", "kicked", "emdiagram", "optimize")
ALIGN_COLUMNS = ("t_ps", "cos_z", "cos2_x", "cos2_y", "cos2_z", "energy", "j2",
                 "sumrule_residual")
FLOAT_FMT = "%.12g"


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Configuration schema

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)


class RotorConfig(_Strict):
    B: float
    A: Optional[float] = None
    C: Optional[float] = None
    units: Literal["rad/ps", "cm-1", "GHz"] = "rad/ps"
    mu0: float = 0.0
    alpha_par: float = 0.0
    alpha_perp: float = 0.0
    beta_par: float = 0.0
    beta_perp: float = 0.0
    centrifugal_D: float = 0.0
    spin_weights: dict = Field(default_factory=lambda: {"even": 1.0, "odd": 1.0})

    def build(self):
        kw = dict(mu0=self.mu0, alpha_par=self.alpha_par, alpha_perp=self.alpha_perp,
                  beta_par=self.beta_par, beta_perp=self.beta_perp,
                  spin_weights=dict(self.spin_weights))
        if self.A is None and self.C is None:
            return RotorSpec.linear(self.B, self.units, centrifugal_D=self.centrifugal_D, **kw)
        if self.A is None or self.C is None:
            raise ValueError("give both A and C for a non-linear rotor")
        return RotorSpec.from_constants(self.A, self.B, self.C, self.units, **kw)


class BasisConfig(_Strict):
    j_max: int = Field(20, ge=0, le=128)
    top: Optional[Literal["linear", "prolate", "oblate", "spherical", "asymmetric"]] = None


class InitialConfig(_Strict):
    kind: Literal["pure", "thermal", "file"] = "pure"
    state: Tuple[int, int, int] = (0, 0, 0)
    temperature: float = Field(0.0, ge=0.0)
    path: Optional[str] = None


class KickCfg(_Strict):
    type: Literal["kick"]
    P: float
    t0: float = 0.0

    def build(self):
        return scenarios.kick(self.P, self.t0)


class KickTrainCfg(_Strict):
    type: Literal["kick_train"]
    period: float = Field(gt=0)
    count: int = Field(ge=1)
    P: float
    t0: float = 0.0

    def build(self):
        return KickTrain(self.period, self.count, self.P, self.t0)


class GaussianCfg(_Strict):
    type: Literal["gaussian"]
    t0: float
    fwhm: float = Field(gt=0)
    peak: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    phases: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    mode: Literal["averaged", "resonant"] = "averaged"
    omega: float = 0.0

    def build(self):
        return GaussianEnvelope(self.t0, self.fwhm, self.peak, self.phases, self.mode, self.omega)


class RampCfg(_Strict):
    type: Literal["ramp"]
    rise: float = Field(ge=0)
    hold: float = Field(ge=0)
    fall: float = Field(ge=0)
    strength: float
    t0: float = 0.0
    axis: Literal["X", "Y", "Z"] = "Z"
    mode: Literal["averaged", "resonant"] = "averaged"
    omega: float = 0.0

    def build(self):
        return Ramp(self.rise, self.hold, self.fall, self.strength, self.t0, self.axis,
                    self.mode, self.omega)


class TwoColorCfg(_Strict):
    type: Literal["two_color"]
    t0: float
    fwhm: float = Field(gt=0)
    E1: float = Field(ge=0)
    E2: float = Field(ge=0)
    phi: float = 0.0

    def build(self):
        return TwoColor(self.t0, self.fwhm, self.E1, self.E2, self.phi)


class THzCfg(_Strict):
    type: Literal["thz"]
    amplitude: float
    duration: float = Field(gt=0)
    t0: float = 0.0
    axis: Literal["X", "Y", "Z"] = "Z"
    zero_area: bool = False

    def build(self):
        return HalfCycleTHz(self.amplitude, self.duration, self.t0, self.axis, self.zero_area)


PulseCfg = Annotated[Union[KickCfg, KickTrainCfg, GaussianCfg, RampCfg, TwoColorCfg, THzCfg],
                     Field(discriminator="type")]


class DynamicsConfig(_Strict):
    t_start: float = 0.0
    t_end: float = 10.0
    n_points: int = Field(201, ge=2)
    method: Literal["auto", "schrodinger", "lvn", "lindblad"] = "auto"
    scheme: Literal["midpoint", "magnus4"] = "midpoint"
    max_step: Optional[float] = Field(None, gt=0)
    resolution: int = Field(400, ge=1)
    watchdog: Optional[float] = Field(1e-6, gt=0)
    dephasing_rate: float = Field(0.0, ge=0)
    thermalization_rate: float = Field(0.0, ge=0)
    tol: float = Field(1e-9, gt=0)
    keep_isotropic: bool = True
    checkpoints: List[float] = Field(default_factory=list)

    @field_validator("t_end")
    @classmethod
    def _order(cls, v, info):
        if v <= info.data.get("t_start", 0.0):
            raise ValueError("t_end must exceed t_start")
        return v

    def grid(self):
        return np.linspace(self.t_start, self.t_end, self.n_points)

    def unitary_kw(self):
        return dict(max_step=self.max_step, resolution=self.resolution, watchdog=self.watchdog,
                    scheme=self.scheme)


class ObservablesConfig(_Strict):
    cadence: int = Field(1, ge=1)
    features: bool = True
    rel_prominence: float = Field(0.1, gt=0)


class OutputConfig(_Strict):
    dir: str = "out"
    prefix: str = ""


class Orient2cConfig(_Strict):
    t0: float = 0.0
    fwhm: float = Field(0.2, gt=0)
    E1: float = Field(1.0, ge=0)
    E2: float = Field(1.0, ge=0)
    n_phi: int = Field(25, ge=2)
    t_probe: float = 1.0


class EchoConfig(_Strict):
    P: float = 0.5
    tau_fraction: float = Field(0.12, gt=0)
    window: Tuple[float, float] = (1.8, 2.2)
    span: float = Field(2.5, gt=0)
    n_points: int = Field(601, ge=3)


class KickedConfig(_Strict):
    P: float = 1.0
    resonant_count: int = Field(20, ge=1)
    count: int = Field(100, ge=1)
    resonant_factor: float = Field(1.0, gt=0)
    detuned_factor: float = Field(1.1847, gt=0)


class EMConfig(_Strict):
    inertia: Tuple[float, float, float]
    J: List[float] = Field(default_factory=lambda: [1.0])
    overlay_jmax: Optional[int] = Field(None, ge=0, le=40)


class ParameterCfg(_Strict):
    name: str
    low: float
    high: float


class ObjectiveCfg(_Strict):
    kind: Literal["expectation_at_time", "target_fidelity", "time_window_average"]
    observable: Literal["cos_z", "cos2_z", "j2"] = "cos2_z"
    time: Optional[float] = None
    window: Optional[Tuple[float, float]] = None
    samples: int = Field(21, ge=2)
    j_opt: int = Field(1, ge=0)


class OptimizeConfig(_Strict):
    parameters: List[ParameterCfg]
    template: List[dict]
    objective: ObjectiveCfg
    penalty: float = Field(0.0, ge=0)
    method: Literal["simplex", "population"] = "simplex"
    budget: int = Field(100, ge=1)
    popsize: int = Field(8, ge=1)
    x0: Optional[List[float]] = None


class RunConfig(_Strict):
    scenario: Optional[str] = None
    seed: int = 0
    rotor: RotorConfig
    basis: BasisConfig = BasisConfig()
    initial: InitialConfig = InitialConfig()
    pulses: List[PulseCfg] = Field(default_factory=list)
    dynamics: DynamicsConfig = DynamicsConfig()
    observables: ObservablesConfig = ObservablesConfig()
    output: OutputConfig = OutputConfig()
    orient2c: Optional[Orient2cConfig] = None
    echo: Optional[EchoConfig] = None
    kicked: Optional[KickedConfig] = None
    emdiagram: Optional[EMConfig] = None
    optimize: Optional[OptimizeConfig] = None


def _format_validation(err):
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def load_config(path, overrides=None):
    """Parse and validate a YAML run file; ``ConfigError`` names the key."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML syntax error{where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    for key, value in (overrides or {}).items():
        section, _, name = key.partition(".")
        if name:
            raw.setdefault(section, {})
            if not isinstance(raw[section], dict):
                raise ConfigError(f"{section}: expected a mapping")
            raw[section][name] = value
        else:
            raw[section] = value
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def config_hash(cfg):
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Output

def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return FLOAT_FMT % float(v)


def _clean(obj):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(FLOAT_FMT % v) if math.isfinite(v) else str(v)
    return obj


class Output:
    def __init__(self, cfg, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prefix = cfg.output.prefix
        self.header = f"# rotorkit {__version__} config_sha256={config_hash(cfg)}"
        self.plots = []
        self.files = []

    def path(self, name):
        return self.dir / f"{self.prefix}{name}"

    def csv(self, name, columns, rows, plot=None):
        p = self.path(name)
        with open(p, "w", newline="\n") as fh:
            fh.write(self.header + "\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append(p.name)
        if plot:
            self.plots.append({"file": p.name, **plot})
        return p

    def json(self, name, payload):
        p = self.path(name)
        p.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        self.files.append(p.name)
        return p

    def finish(self, summary):
        summary = {"version": __version__, "config_sha256": self.header.split("=")[1],
                   **summary}
        self.json("summary.json", summary)
        self.json("plots.json", {"plots": self.plots})


# ---------------------------------------------------------------------------
# Shared builders

def _setup(cfg):
    try:
        spec = cfg.rotor.build()
    except ValueError as exc:
        raise ConfigError(f"rotor: {exc}") from None
    top = cfg.basis.top or spec.top.value
    try:
        basis = build_basis(top, cfg.basis.j_max)
    except ValueError as exc:
        raise ConfigError(f"basis: {exc}") from None
    return spec, basis


def _initial_state(cfg, spec, basis):
    if cfg.initial.kind == "file":
        if not cfg.initial.path:
            raise ConfigError("initial.path: required for kind 'file'")
        try:
            return load_state(cfg.initial.path, basis)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"initial.path: {exc}") from None
    if cfg.initial.kind == "thermal":
        return thermal_state(spec, basis, cfg.initial.temperature)
    return QuantumState.basis_state(basis, tuple(cfg.initial.state))


def _propagation_kw(cfg, method):
    d = cfg.dynamics
    if method == "lindblad":
        return dict(tol=d.tol, watchdog=d.watchdog)
    return d.unitary_kw()


def _resolve_method(cfg, state):
    d = cfg.dynamics
    if d.method != "auto":
        return d.method
    if d.dephasing_rate or d.thermalization_rate:
        return "lindblad"
    return "schrodinger" if state.is_pure else "lvn"


# ---------------------------------------------------------------------------
# Subcommands

def cmd_spectrum(cfg, out):
    spec, basis = _setup(cfg)
    E, _ = free_energies(spec, basis)
    scale = max(1.0, float(np.abs(E).max()))
    rows = []
    for j in range(basis.j_max + 1):
        shell = np.sort(E[basis.j == j])
        levels, counts = [], []
        for e in shell:
            if levels and e - levels[-1] <= 1e-9 * scale:
                counts[-1] += 1
            else:
                levels.append(e)
                counts.append(1)
        rows += [(j, e, c) for e, c in zip(levels, counts)]
    out.csv("spectrum.csv", ("j", "energy_radps", "degeneracy"), rows,
            plot={"kind": "levels", "x": "j", "y": "energy_radps"})
    out.finish({"scenario": "spectrum", "levels": len(rows), "dim": basis.dim,
                "ground_energy": min(r[1] for r in rows)})


def _snap_checkpoints(cfg, grid):
    """Map requested checkpoint times onto grid times (they must coincide up
    to rounding of the grid)."""
    out = []
    tol = 1e-9 * (grid[-1] - grid[0])
    for c in cfg.dynamics.checkpoints:
        i = int(np.argmin(np.abs(grid - c)))
        if abs(grid[i] - c) > tol:
            raise ConfigError(f"dynamics.checkpoints: t={c} is not a grid time")
        out.append(float(grid[i]))
    return out


def cmd_align(cfg, out):
    spec, basis = _setup(cfg)
    state = _initial_state(cfg, spec, basis)
    pulses = [p.build() for p in cfg.pulses]
    method = _resolve_method(cfg, state)
    grid = cfg.dynamics.grid()
    diss = ()
    if method == "lindblad":
        drive = Drive.from_pulses(spec, basis, pulses, cfg.dynamics.keep_isotropic)
        rho_eq = thermal_state(spec, basis, cfg.initial.temperature) \
            if cfg.dynamics.thermalization_rate else None
        diss = scenarios.dissipators(drive, cfg.dynamics.dephasing_rate,
                                     cfg.dynamics.thermalization_rate, rho_eq)
    kw = _propagation_kw(cfg, method)
    checkpoints = _snap_checkpoints(cfg, grid)
    if checkpoints:
        if method == "lindblad":
            raise ConfigError("dynamics.checkpoints: not supported with the Lindblad method")
        kw["checkpoints"] = checkpoints
    traj = scenarios.alignment_run(spec, state, pulses, grid, method, diss,
                                   cfg.dynamics.keep_isotropic, **kw)
    for i, c in enumerate(checkpoints):
        p = out.path(f"state_{i:03d}.npz")
        save_state(traj.states[c], p)
        out.files.append(p.name)
    r = traj.records
    resid = r["cos2_x"] + r["cos2_y"] + r["cos2_z"] - 1.0
    sel = slice(None, None, cfg.observables.cadence)
    cols = [traj.times, r["cos_z"], r["cos2_x"], r["cos2_y"], r["cos2_z"], r["energy"],
            r["j2"], resid]
    rows = zip(*(np.asarray(c)[sel] for c in cols))
    out.csv("align.csv", ALIGN_COLUMNS, rows,
            plot={"kind": "line", "x": "t_ps", "y": ["cos2_z", "cos2_x", "cos2_y"]})
    summary = {
        "scenario": "align", "method": method,
        "final": {k: float(r[k][-1]) for k in ("cos_z", "cos2_z", "energy", "j2")},
        "max_cos2_z": float(np.max(r["cos2_z"])),
        "t_max_cos2_z": float(traj.times[int(np.argmax(r["cos2_z"]))]),
        "max_sumrule_residual": float(np.max(np.abs(resid))),
    }
    if checkpoints:
        summary["checkpoints"] = {f"state_{i:03d}.npz": c for i, c in enumerate(checkpoints)}
    if cfg.observables.features:
        feats = detect_features((traj.times, r["cos2_z"]),
                                rel_prominence=cfg.observables.rel_prominence)
        summary["features"] = [{"t": f.time, "value": f.value, "kind": f.kind,
                                "prominence": f.prominence} for f in feats]
    out.finish(summary)


def cmd_orient2c(cfg, out):
    spec, basis = _setup(cfg)
    oc = cfg.orient2c or Orient2cConfig()
    state = _initial_state(cfg, spec, basis)
    phis = np.linspace(0.0, 2.0 * math.pi, oc.n_phi)
    cz, c2 = scenarios.two_color_sweep(spec, state, phis, oc.t0, oc.fwhm, oc.E1, oc.E2,
                                       oc.t_probe, workers=scenarios.worker_count(),
                                       **cfg.dynamics.unitary_kw())
    out.csv("orient2c.csv", ("phi", "cos_z", "cos2_z"), zip(phis, cz, c2),
            plot={"kind": "line", "x": "phi", "y": ["cos_z"]})
    i = int(np.argmax(np.abs(cz)))
    out.finish({"scenario": "orient2c", "t_probe": oc.t_probe, "best_phi": float(phis[i]),
                "max_abs_cos_z": float(abs(cz[i]))})


def cmd_echo(cfg, out):
    spec, basis = _setup(cfg)
    ec = cfg.echo or EchoConfig()
    state = _initial_state(cfg, spec, basis)
    tau = ec.tau_fraction * spec.revival_period
    grid = np.linspace(0.0, ec.span * tau, ec.n_points)
    kw = cfg.dynamics.unitary_kw()
    sig = scenarios.echo_signals(spec, state, ec.P, tau, grid, ec.window,
                                 workers=scenarios.worker_count(), **kw)
    rep = sig.report
    out.csv("echo.csv", ("t_ps", "s12", "s1", "s2", "residual"),
            zip(grid, sig.s12, sig.s1, sig.s2, rep.residual),
            plot={"kind": "line", "x": "t_ps", "y": ["residual", "s12", "s1"]})
    out.finish({"scenario": "echo", "tau": tau, "window_ps": list(rep.window),
                "echo_time": rep.echo_time, "echo_amplitude": rep.echo_amplitude,
                "control_amplitude": rep.control_amplitude, "ratio": rep.ratio,
                "features": [{"t": f.time, "kind": f.kind, "prominence": f.prominence}
                             for f in rep.features]})


def cmd_kicked(cfg, out):
    spec, basis = _setup(cfg)
    kc = cfg.kicked or KickedConfig()
    state = _initial_state(cfg, spec, basis)
    kw = cfg.dynamics.unitary_kw()
    Tr = spec.revival_period
    runs = ((kc.resonant_factor * Tr, kc.resonant_count), (kc.detuned_factor * Tr, kc.count))
    res, det = scenarios.ordered_map(
        lambda r: scenarios.kicked_series(spec, state, kc.P, r[0], r[1], **kw),
        runs, scenarios.worker_count())
    for name, series in (("kicked_resonant.csv", res), ("kicked_detuned.csv", det)):
        out.csv(name, ("kick", "j2"), zip(np.arange(1, len(series) + 1), series),
                plot={"kind": "line", "x": "kick", "y": ["j2"]})
    out.finish({"scenario": "kicked", "periods_ps": [r[0] for r in runs],
                "final_j2_resonant": float(res[-1]), "final_j2_detuned": float(det[-1]),
                "resonant_over_detuned": float(res[-1] / det[kc.resonant_count - 1])
                if kc.count >= kc.resonant_count else None,
                "detuned_max_over_min": float(det.max() / det.min())})


def cmd_emdiagram(cfg, out):
    ec = cfg.emdiagram
    if ec is None:
        raise ConfigError("emdiagram: section required for this subcommand")
    try:
        inertia = InertiaSpec(*ec.inertia)
    except ValueError as exc:
        raise ConfigError(f"emdiagram.inertia: {exc}") from None
    rows = em_diagram(inertia, ec.J)
    out.csv("emdiagram.csv", ("J", "E_min", "E_sep", "E_max"), rows,
            plot={"kind": "band", "x": "J", "y": ["E_min", "E_sep", "E_max"]})
    summary = {"scenario": "emdiagram", "rows": len(rows)}
    if ec.overlay_jmax is not None:
        if inertia.is_linear:
            raise ConfigError("emdiagram.overlay_jmax: needs a non-linear top")
        q = quantum_overlay(inertia, ec.overlay_jmax)
        out.csv("em_quantum.csv", ("j", "J", "E"), ((int(a), b, c) for a, b, c in q),
                plot={"kind": "scatter", "x": "J", "y": ["E"]})
        summary["quantum_levels"] = len(q)
    out.finish(summary)


def _substitute(obj, params):
    if isinstance(obj, str) and obj.startswith("$"):
        name = obj[1:]
        if name not in params:
            raise ConfigError(f"optimize.template: unknown parameter reference {obj!r}")
        return params[name]
    if isinstance(obj, dict):
        return {k: _substitute(v, params) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_substitute(v, params) for v in obj]
    return obj


class _PulseList(_Strict):
    pulses: List[PulseCfg]


def build_problem(cfg):
    oc = cfg.optimize
    if oc is None:
        raise ConfigError("optimize: section required for this subcommand")
    spec, basis = _setup(cfg)
    state = _initial_state(cfg, spec, basis)
    params = [control.Parameter(p.name, p.low, p.high) for p in oc.parameters]
    mid = {p.name: 0.5 * (p.low + p.high) for p in oc.parameters}
    try:
        _PulseList.model_validate({"pulses": _substitute(oc.template, mid)})
    except ValidationError as exc:
        raise ConfigError("optimize.template." + _format_validation(exc)) from None

    def build_pulses(p):
        pl = _PulseList.model_validate({"pulses": _substitute(oc.template, p)})
        return [x.build() for x in pl.pulses]

    ops = {"cos_z": lambda: direction_cosine(basis, "Z"),
           "cos2_z": lambda: cos_product(basis, "Z", "Z"),
           "j2": lambda: j_squared(basis)}
    ob = oc.objective
    if ob.kind == "target_fidelity":
        target, _ = control.projected_target(basis, ops[ob.observable](), ob.j_opt)
        objective = control.Objective(ob.kind, time=ob.time, target=target)
    else:
        objective = control.Objective(ob.kind, time=ob.time, op=ops[ob.observable](),
                                      window=ob.window, samples=ob.samples)
    return control.ControlProblem(spec, basis, state, build_pulses, params, objective,
                                  oc.penalty, cfg.dynamics.t_start, cfg.dynamics.unitary_kw())


def cmd_optimize(cfg, out):
    try:
        problem = build_problem(cfg)
    except ValueError as exc:
        raise ConfigError(f"optimize: {exc}") from None
    oc = cfg.optimize
    res = control.optimize(problem, oc.method, oc.budget, cfg.seed, x0=oc.x0,
                           popsize=oc.popsize, workers=scenarios.worker_count())
    names = [p.name for p in problem.parameters]
    out.csv("history.csv", ("eval", *names, "value", "best"),
            ((h.index, *h.params, h.value, h.best) for h in res.history),
            plot={"kind": "line", "x": "eval", "y": ["value", "best"]})
    out.finish({"scenario": "optimize", "method": res.method, "seed": cfg.seed,
                "best_params": res.params, "best_value": res.value,
                "evaluations": res.n_evaluations, "budget_exhausted": res.budget_exhausted})


COMMANDS = {
    "spectrum": cmd_spectrum, "align": cmd_align, "orient2c": cmd_orient2c, "echo": cmd_echo,
    "kicked": cmd_kicked, "emdiagram": cmd_emdiagram, "optimize": cmd_optimize,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="rotorkit", description="Rigid-rotor scenario runner")
    ap.add_argument("--version", action="version", version=f"rotorkit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run file")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jmax", type=int, default=None, help="override basis.j_max")
        p.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jmax is not None:
        overrides["basis.j_max"] = args.jmax
    try:
        cfg = load_config(args.config, overrides)
        out = Output(cfg, args.out or cfg.output.dir)
        log.info("running %s -> %s", args.command, out.dir)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (TruncationError, PositivityError, StepSizeError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # physical inconsistencies caught while building the model
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %s", ", ".join(out.files))
    return 0


if __name__ == "__main__":
    sys.exit(main())
