"""Scenario files: parsing, default resolution, serialization and execution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from . import probing
from .averaged import (
    AveragedSystem,
    averaged_equilibrium,
    is_hurwitz,
    jacobian_at,
    simulate_averaged,
    theorem_bias,
)
from .dynamics import GRAD2, SONES, GainConfig, Grad2State, SonesState, default_dt, entry_time, simulate
from .errors import FrequencyError, InvalidArgumentError, ScenarioError
from .filters import FilterGains
from .levelset import level_set_grid, write_grid_csv
from .maps import BUILTIN_MAPS, PolynomialMap
from .probing import ProbingConfig


@dataclass(frozen=True)
class MapSpec:
    builtin: str | None = None
    theta_star: tuple[float, ...] | None = None
    terms: tuple[tuple[tuple[int, ...], float], ...] | None = None

    def build(self) -> PolynomialMap:
        if self.builtin is not None:
            if self.builtin not in BUILTIN_MAPS:
                raise ScenarioError(f"unknown builtin map {self.builtin!r}; known: {sorted(BUILTIN_MAPS)}")
            return BUILTIN_MAPS[self.builtin](list(self.theta_star))
        return PolynomialMap.from_terms(len(self.terms[0][0]), self.terms)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.builtin is not None:
            out["builtin"] = self.builtin
        if self.theta_star is not None:
            out["theta_star"] = list(self.theta_star)
        if self.terms is not None:
            out["terms"] = [{"exponents": list(e), "coeff": c} for e, c in self.terms]
        return out


@dataclass(frozen=True)
class LevelSetRequest:
    order: int = 0
    axis: int = 1  # 1-based
    bounds: tuple[float, float, float, float] = (-1.0, 3.0, 0.0, 4.0)
    resolution: int = 201
    path: str = "levelset.csv"


@dataclass(frozen=True)
class Outputs:
    trajectory_csv: str | None = None
    summary_json: str | None = None
    averaged_csv: str | None = None
    equilibrium_json: str | None = None
    hurwitz_json: str | None = None
    levelset: LevelSetRequest | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    loop: str
    map: MapSpec
    probing: ProbingConfig
    gains: GainConfig
    initial: Any  # SonesState or Grad2State
    duration: float
    dt: float
    sample_interval: float
    theta_star: tuple[float, ...] | None
    theta_band: float = 0.05
    lambda_band: float = 0.02
    averaged_dt: float = 0.05
    outputs: Outputs = field(default_factory=Outputs)

    def build_map(self) -> PolynomialMap:
        return self.map.build()


def _floats(value, name: str, n: int | None = None) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{name} must be a list of numbers") from exc
    if n is not None and len(out) != n:
        raise ScenarioError(f"{name} has {len(out)} entries, expected {n}")
    return out


def _matrix(value, name: str, p: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (p, p):
        raise ScenarioError(f"{name} must be a {p}x{p} matrix, got shape {arr.shape}")
    return arr


def _frac_str(w: Fraction) -> str:
    return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse TOML scenario text and resolve every default.

    Frequencies are validated eagerly (full conditions for the Newton loop,
    Hessian-only conditions for the gradient loop).
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{name}: {exc}") from exc
    try:
        return _resolve(doc, name)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"{name}: missing or malformed entry {exc}") from exc
    except FrequencyError:
        raise
    except InvalidArgumentError as exc:
        raise ScenarioError(f"{name}: {exc}") from exc


def _resolve(doc: dict, default_name: str) -> Scenario:
    loop = doc.get("loop", SONES)
    if loop not in (SONES, GRAD2):
        raise ScenarioError(f"loop must be {SONES!r} or {GRAD2!r}, got {loop!r}")

    m = doc["map"]
    if "builtin" in m:
        if "theta_star" not in m:
            raise ScenarioError("builtin maps need theta_star")
        map_spec = MapSpec(builtin=m["builtin"], theta_star=_floats(m["theta_star"], "map.theta_star"))
    elif "terms" in m:
        terms = tuple((tuple(int(e) for e in r["exponents"]), float(r["coeff"])) for r in m["terms"])
        if not terms:
            raise ScenarioError("map.terms is empty")
        map_spec = MapSpec(terms=terms)
    else:
        raise ScenarioError("map needs either 'builtin' or 'terms'")
    h = map_spec.build()
    p = h.dimension

    pr = doc["probing"]
    freqs = tuple(probing.as_fraction(w) for w in pr["frequencies"])
    axis = int(pr.get("axis", 1))
    cfg = ProbingConfig(_floats(pr["amplitudes"], "probing.amplitudes", p), freqs, axis - 1)
    if cfg.p != p:
        raise ScenarioError(f"probing has {cfg.p} frequencies, map has dimension {p}")
    probing.require_valid(cfg.frequencies, probing.FULL if loop == SONES else probing.HESSIAN_ONLY)

    gd = doc.get("gains", {})
    gains = GainConfig(
        _floats(gd.get("K", [0.02] * p), "gains.K", p),
        FilterGains(
            float(gd.get("omega_l", 1.0)), float(gd.get("omega_h", 1.0)), float(gd.get("omega_r", 1.0))
        ),
        float(gd.get("delta", 1.0)),
    )

    ini = doc.get("initial", {})
    theta0 = np.array(_floats(ini.get("theta", [0.0] * p), "initial.theta", p))
    H0 = np.array(_floats(ini.get("H", [0.0] * p), "initial.H", p))
    eta0 = float(ini.get("eta", 0.0))
    if loop == SONES:
        T0 = _matrix(ini["T"], "initial.T", p) if "T" in ini else -50.0 * np.eye(p)
        Lam0 = _matrix(ini["Lambda"], "initial.Lambda", p) if "Lambda" in ini else np.linalg.inv(T0)
        initial = SonesState(theta0, H0, Lam0, T0, eta0)
    else:
        initial = Grad2State(theta0, H0, eta0)

    sim = doc.get("simulation", {})
    duration = float(sim.get("duration", 300.0))
    dt = float(sim["dt"]) if "dt" in sim else default_dt(cfg)
    sample_interval = float(sim.get("sample_interval", 0.01))
    if duration <= 0 or dt <= 0 or sample_interval < dt:
        raise ScenarioError("need duration > 0, dt > 0 and sample_interval >= dt")

    an = doc.get("analysis", {})
    theta_star = an.get("theta_star", map_spec.theta_star)
    theta_star = None if theta_star is None else _floats(theta_star, "analysis.theta_star", p)

    out = doc.get("outputs", {})
    ls = out.get("levelset")
    levelset = None
    if ls is not None:
        levelset = LevelSetRequest(
            int(ls.get("order", 0)),
            int(ls.get("axis", 1)),
            _floats(ls.get("bounds", [-1.0, 3.0, 0.0, 4.0]), "outputs.levelset.bounds", 4),
            int(ls.get("resolution", 201)),
            str(ls.get("path", "levelset.csv")),
        )
    outputs = Outputs(
        out.get("trajectory_csv"),
        out.get("summary_json"),
        out.get("averaged_csv"),
        out.get("equilibrium_json"),
        out.get("hurwitz_json"),
        levelset,
    )
    return Scenario(
        name=str(doc.get("name", default_name)),
        loop=loop,
        map=map_spec,
        probing=cfg,
        gains=gains,
        initial=initial,
        duration=duration,
        dt=dt,
        sample_interval=sample_interval,
        theta_star=theta_star,
        theta_band=float(an.get("theta_band", 0.05)),
        lambda_band=float(an.get("lambda_band", 0.02)),
        averaged_dt=float(an.get("averaged_dt", 0.05)),
        outputs=outputs,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), name=path.stem)


def bundled_scenario_text(name: str = "paper_fig3") -> str:
    return resources.files("sones.scenarios").joinpath(f"{name}.toml").read_text()


def bundled_scenario(name: str = "paper_fig3") -> Scenario:
    return parse_scenario(bundled_scenario_text(name), name=name)


def scenario_to_dict(s: Scenario) -> dict:
    cfg, g, ini = s.probing, s.gains, s.initial
    doc: dict[str, Any] = {
        "name": s.name,
        "loop": s.loop,
        "map": s.map.to_dict(),
        "probing": {
            "amplitudes": list(cfg.amplitudes),
            "frequencies": [_frac_str(w) for w in cfg.frequencies],
            "axis": cfg.axis + 1,
        },
        "gains": {
            "K": list(g.K),
            "omega_l": g.filters.omega_l,
            "omega_h": g.filters.omega_h,
            "omega_r": g.filters.omega_r,
            "delta": g.delta,
        },
        "initial": {"theta": ini.theta.tolist(), "H": ini.H.tolist(), "eta": ini.eta},
        "simulation": {"duration": s.duration, "dt": s.dt, "sample_interval": s.sample_interval},
        "analysis": {
            "theta_band": s.theta_band,
            "lambda_band": s.lambda_band,
            "averaged_dt": s.averaged_dt,
        },
    }
    if s.loop == SONES:
        doc["initial"]["T"] = ini.T.tolist()
        doc["initial"]["Lambda"] = ini.Lam.tolist()
    if s.theta_star is not None:
        doc["analysis"]["theta_star"] = list(s.theta_star)
    o = s.outputs
    outs = {
        k: v
        for k, v in (
            ("trajectory_csv", o.trajectory_csv),
            ("summary_json", o.summary_json),
            ("averaged_csv", o.averaged_csv),
            ("equilibrium_json", o.equilibrium_json),
            ("hurwitz_json", o.hurwitz_json),
        )
        if v is not None
    }
    if o.levelset is not None:
        ls = o.levelset
        outs["levelset"] = {
            "order": ls.order,
            "axis": ls.axis,
            "bounds": list(ls.bounds),
            "resolution": ls.resolution,
            "path": ls.path,
        }
    if outs:
        doc["outputs"] = outs
    return doc


def serialize_scenario(s: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(s))


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    return scenario_to_dict(a) == scenario_to_dict(b)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _need_theta_star(s: Scenario) -> np.ndarray:
    if s.theta_star is None:
        raise ScenarioError("this output needs analysis.theta_star (the declared inflection point)")
    return np.array(s.theta_star)


def _json_complex(values) -> list:
    return [[float(v.real), float(v.imag)] for v in values]


def trajectory_summary(s: Scenario, traj) -> dict:
    summary: dict[str, Any] = {
        "name": s.name,
        "loop": s.loop,
        "t_final": float(traj.t[-1]),
        "samples": int(traj.t.size),
        "theta_hat_final": traj.theta_hat[-1].tolist(),
    }
    if s.loop == SONES:
        summary["Lambda_final"] = traj.Lam[-1].tolist()
        summary["T_hat_final"] = traj.T_hat[-1].tolist()
    if s.theta_star is not None:
        theta_star = np.array(s.theta_star)
        theta_err = np.max(np.abs(traj.theta_hat - theta_star), axis=1)
        summary["theta_error_final"] = float(theta_err[-1])
        summary["theta_entry_time"] = entry_time(traj.t, theta_err, s.theta_band)
        summary["theta_band"] = s.theta_band
        if s.loop == SONES:
            T = AveragedSystem(s.build_map(), theta_star, s.probing, s.gains).T
            lam_err = np.max(np.abs(traj.Lam - np.linalg.inv(T)), axis=(1, 2))
            summary["Lambda_error_final"] = float(lam_err[-1])
            summary["Lambda_entry_time"] = entry_time(traj.t, lam_err, s.lambda_band)
            summary["lambda_band"] = s.lambda_band
    return summary


def equilibrium_report(s: Scenario) -> dict:
    h = s.build_map()
    theta_star = _need_theta_star(s)
    system = AveragedSystem(h, theta_star, s.probing, s.gains)
    eq = averaged_equilibrium(h, theta_star, s.probing, s.gains)
    bias_theta, bias_eta = theorem_bias(h, theta_star, s.probing)
    product = (eq.T + system.T) @ (eq.Lam + system.T_inv)
    return {
        "theta_tilde": eq.theta.tolist(),
        "H_hat": eq.H.tolist(),
        "Lambda_tilde": eq.Lam.tolist(),
        "T_tilde": eq.T.tolist(),
        "eta_tilde": eq.eta,
        "theorem_theta_bias": bias_theta.tolist(),
        "theorem_eta_bias": bias_eta,
        "product_identity_error": float(np.max(np.abs(product - np.eye(s.probing.p)))),
        "residual": float(np.max(np.abs(system(0.0, eq.flatten())))),
    }


def hurwitz_report(s: Scenario) -> dict:
    h = s.build_map()
    theta_star = _need_theta_star(s)
    system = AveragedSystem(h, theta_star, s.probing, s.gains)
    eq = averaged_equilibrium(h, theta_star, s.probing, s.gains)
    J = jacobian_at(lambda x: system(0.0, x), eq.flatten())
    ok, eig = is_hurwitz(J)
    return {
        "dimension": int(J.shape[0]),
        "hurwitz": ok,
        "max_real_part": float(np.max(eig.real)),
        "eigenvalues": _json_complex(sorted(eig, key=lambda z: (z.real, z.imag))),
    }


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_scenario(s: Scenario, out_dir=".", averaged: bool = False) -> dict[str, Path]:
    """Run a resolved scenario and write the requested outputs under ``out_dir``.

    Returns a mapping from output kind to the written path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    o = s.outputs
    written: dict[str, Path] = {}
    h = s.build_map()
    hurwitz = hurwitz_report(s) if o.hurwitz_json is not None and s.loop == SONES else None

    if o.levelset is not None:
        ls = o.levelset
        grid = level_set_grid(h, ls.order, ls.axis - 1, ls.bounds, ls.resolution)
        written["levelset"] = out_dir / ls.path
        write_grid_csv(grid, written["levelset"])

    if averaged:
        if s.loop != SONES:
            raise ScenarioError("averaged runs are defined for the Newton loop only")
        traj = simulate_averaged(
            h, _need_theta_star(s), s.probing, s.gains, s.initial, s.duration, s.averaged_dt, s.sample_interval
        )
        written["averaged_csv"] = out_dir / (o.averaged_csv or f"{s.name}_averaged.csv")
        traj.write_csv(written["averaged_csv"])
        written["equilibrium_json"] = out_dir / (o.equilibrium_json or f"{s.name}_equilibrium.json")
        _write_json(written["equilibrium_json"], equilibrium_report(s))
    else:
        traj = simulate(h, s.probing, s.gains, s.initial, s.duration, s.dt, s.sample_interval, s.loop)
        written["trajectory_csv"] = out_dir / (o.trajectory_csv or f"{s.name}.csv")
        traj.write_csv(written["trajectory_csv"])
        summary = trajectory_summary(s, traj)
        if hurwitz is not None:
            summary["hurwitz"] = hurwitz
        written["summary_json"] = out_dir / (o.summary_json or f"{s.name}_summary.json")
        _write_json(written["summary_json"], summary)

    if hurwitz is not None:
        written["hurwitz_json"] = out_dir / o.hurwitz_json
        _write_json(written["hurwitz_json"], hurwitz)
    return written


def with_overrides(s: Scenario, **changes) -> Scenario:
    return replace(s, **changes)
