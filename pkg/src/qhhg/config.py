"""Scenario configuration files (JSON) with strict key checking."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .fock_basis import ModeSet
from .hamiltonian import CouplingSet, experimental_couplings, explicit_couplings, plateau_couplings
from .propagator import PropagatorConfig

__all__ = ["ConfigError", "ScenarioConfig", "WignerSpec", "load_config", "parse_config", "shipped_configs"]

TOP_KEYS = {
    "alpha0_sq",
    "modes",
    "coupling_mode",
    "tau_grid",
    "epsilon",
    "observables",
    "output_dir",
    # optional extras
    "name",
    "heavy",
    "solver",
    "pulse",
    "validate",
}
REQUIRED = {"alpha0_sq", "modes", "coupling_mode", "tau_grid"}
OBSERVABLE_KEYS = {"distributions", "mandel", "purity", "quadratures", "wigner", "probes"}
TAU_KEYS = {"start", "stop", "count", "mirror"}
WIGNER_KEYS = {"mode", "tau", "re", "im"}
SOLVER_KEYS = {"method", "krylov_dim", "step_tol", "max_step"}
VALIDATE_KEYS = {"tolerance_factor"}
PULSE_KEYS = {
    "gaussian": {"type", "E0", "tau_p", "omega", "mode_scale", "grid", "taus"},
    "samples": {"type", "times", "values", "omega", "mode_scale", "grid", "taus"},
    "spec": {"type", "frequencies", "amplitudes_re", "amplitudes_im", "mode_scale", "carrier", "taus"},
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(where, "expected a JSON object")
    for k in section:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}" if where else k, "unknown key")


def _number(d: dict, key: str, where: str, cast=float):
    try:
        v = cast(d[key])
    except KeyError:
        raise ConfigError(f"{where}.{key}", "missing") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"not a number: {d[key]!r}") from None
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(f"{where}.{key}", "must be finite")
    return v


@dataclass(frozen=True)
class WignerSpec:
    mode: int
    tau: float
    re: tuple[float, float, int]
    im: tuple[float, float, int]


@dataclass
class ScenarioConfig:
    alpha0_sq: float
    modes: tuple[int, ...]
    coupling_mode: dict
    tau_grid: dict
    epsilon: float = 1e-8
    observables: dict = field(default_factory=dict)
    output_dir: str | None = None
    name: str = "scenario"
    heavy: bool = False
    solver: dict = field(default_factory=dict)
    pulse: dict | None = None
    validate: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def alpha0(self) -> complex:
        return complex(math.sqrt(self.alpha0_sq))

    @property
    def mode_set(self) -> ModeSet:
        return ModeSet(self.modes)

    def taus(self) -> np.ndarray:
        g = self.tau_grid
        t = np.linspace(g["start"], g["stop"], g["count"])
        if g.get("mirror"):
            t = np.unique(np.concatenate([-t, t]))
        return t

    def couplings(self) -> CouplingSet:
        (kind, params), = self.coupling_mode.items()
        if kind == "plateau":
            return plateau_couplings(params["p"], self.alpha0, self.mode_set)
        if kind == "experimental":
            return experimental_couplings(
                params["h"], params["reference"], self.alpha0, params.get("chi_reference"), params.get("p", 1.0)
            )
        return explicit_couplings(params["chi"])

    def propagator(self) -> PropagatorConfig:
        s = dict(self.solver)
        if s.get("max_step") is None:
            s.pop("max_step", None)
        return PropagatorConfig(**s)

    def wigner_spec(self) -> WignerSpec | None:
        w = self.observables.get("wigner")
        if not w:
            return None
        return WignerSpec(int(w["mode"]), float(w["tau"]), tuple(w["re"]), tuple(w["im"]))

    @property
    def probes(self) -> list[float]:
        return [float(p) for p in self.observables.get("probes", [])]

    @property
    def tolerance_factor(self) -> float:
        return float(self.validate.get("tolerance_factor", 1.0))


def _parse_coupling(raw, modes: tuple[int, ...]) -> dict:
    where = "coupling_mode"
    if not isinstance(raw, dict) or len(raw) != 1:
        raise ConfigError(where, "exactly one of plateau, experimental, explicit is required")
    (kind, params), = raw.items()
    if kind == "plateau":
        _check_keys(params, {"p"}, f"{where}.plateau")
        p = _number(params, "p", f"{where}.plateau")
        if not p > 0:
            raise ConfigError(f"{where}.plateau.p", "must be positive")
        return {"plateau": {"p": p}}
    if kind == "experimental":
        _check_keys(params, {"h", "reference", "p", "chi_reference"}, f"{where}.experimental")
        if "h" not in params or not isinstance(params["h"], dict):
            raise ConfigError(f"{where}.experimental.h", "expected an object order -> height")
        try:
            h = {int(k): float(v) for k, v in params["h"].items()}
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.experimental.h", "orders must be integers, heights numbers") from None
        ref = _number(params, "reference", f"{where}.experimental", int)
        if ref not in h:
            raise ConfigError(f"{where}.experimental.reference", f"order {ref} has no height")
        if any(not v > 0 for v in h.values()):
            raise ConfigError(f"{where}.experimental.h", "heights must be positive")
        if sorted(h) != sorted(modes):
            raise ConfigError(f"{where}.experimental.h", f"orders {sorted(h)} do not match modes {list(modes)}")
        out = {"h": h, "reference": ref, "p": float(params.get("p", 1.0))}
        if params.get("chi_reference") is not None:
            out["chi_reference"] = _number(params, "chi_reference", f"{where}.experimental")
        return {"experimental": out}
    if kind == "explicit":
        _check_keys(params, {"chi"}, f"{where}.explicit")
        try:
            chi = {int(k): float(v) for k, v in params["chi"].items()}
        except (KeyError, AttributeError, TypeError, ValueError):
            raise ConfigError(f"{where}.explicit.chi", "expected an object order -> chi") from None
        if sorted(chi) != sorted(modes):
            raise ConfigError(f"{where}.explicit.chi", f"orders {sorted(chi)} do not match modes {list(modes)}")
        return {"explicit": {"chi": chi}}
    raise ConfigError(where, f"unknown coupling mode {kind!r}")


def parse_config(raw: dict) -> ScenarioConfig:
    _check_keys(raw, TOP_KEYS, "")
    for k in REQUIRED:
        if k not in raw:
            raise ConfigError(k, "missing")
    alpha0_sq = _number(raw, "alpha0_sq", "")
    if not alpha0_sq > 0:
        raise ConfigError("alpha0_sq", "must be positive")
    try:
        modes = tuple(int(n) for n in raw["modes"])
        ModeSet(modes)
    except (TypeError, ValueError) as exc:
        raise ConfigError("modes", str(exc)) from None
    coupling = _parse_coupling(raw["coupling_mode"], modes)

    tg = raw["tau_grid"]
    _check_keys(tg, TAU_KEYS, "tau_grid")
    tau_grid = {
        "start": _number(tg, "start", "tau_grid"),
        "stop": _number(tg, "stop", "tau_grid"),
        "count": _number(tg, "count", "tau_grid", int),
        "mirror": bool(tg.get("mirror", False)),
    }
    if tau_grid["count"] < 2:
        raise ConfigError("tau_grid.count", "must be at least 2")
    if tau_grid["stop"] <= tau_grid["start"]:
        raise ConfigError("tau_grid.stop", "must exceed start")

    epsilon = float(raw.get("epsilon", 1e-8))
    if not 0 < epsilon < 1:
        raise ConfigError("epsilon", "must lie in (0, 1)")

    obs = raw.get("observables", {})
    _check_keys(obs, OBSERVABLE_KEYS, "observables")
    if obs.get("wigner"):
        w = obs["wigner"]
        _check_keys(w, WIGNER_KEYS, "observables.wigner")
        for k in WIGNER_KEYS:
            if k not in w:
                raise ConfigError(f"observables.wigner.{k}", "missing")
        if int(w["mode"]) != 0 and int(w["mode"]) not in modes:
            raise ConfigError("observables.wigner.mode", f"mode {w['mode']} is not configured")
        for axis in ("re", "im"):
            if len(w[axis]) != 3 or int(w[axis][2]) < 2:
                raise ConfigError(f"observables.wigner.{axis}", "expected [start, stop, count>=2]")
    for p in obs.get("probes", []):
        if not 0 < float(p) < 1:
            raise ConfigError("observables.probes", f"fractions must lie in (0, 1), got {p}")

    pulse = raw.get("pulse")
    if pulse is not None:
        if not isinstance(pulse, dict) or pulse.get("type") not in PULSE_KEYS:
            raise ConfigError("pulse.type", f"expected one of {sorted(PULSE_KEYS)}")
        _check_keys(pulse, PULSE_KEYS[pulse["type"]], "pulse")
        if pulse["type"] == "gaussian" and "tau_p" not in pulse:
            raise ConfigError("pulse.tau_p", "missing")
        for sub in ("grid", "taus"):
            if sub in pulse:
                _check_keys(pulse[sub], {"start", "stop", "count"}, f"pulse.{sub}")

    solver = raw.get("solver", {})
    _check_keys(solver, SOLVER_KEYS, "solver")
    validate = raw.get("validate", {})
    _check_keys(validate, VALIDATE_KEYS, "validate")
    if "tolerance_factor" in validate and not float(validate["tolerance_factor"]) >= 1.0:
        raise ConfigError("validate.tolerance_factor", "must be >= 1")

    cfg = ScenarioConfig(
        alpha0_sq=alpha0_sq,
        modes=modes,
        coupling_mode=coupling,
        tau_grid=tau_grid,
        epsilon=epsilon,
        observables=dict(obs),
        output_dir=raw.get("output_dir"),
        name=str(raw.get("name", "scenario")),
        heavy=bool(raw.get("heavy", False)),
        solver=dict(solver),
        pulse=pulse,
        validate=dict(validate),
        raw=raw,
    )
    try:
        cfg.propagator()
        cfg.couplings()
    except (TypeError, ValueError) as exc:
        key = "solver" if isinstance(exc, TypeError) else "coupling_mode"
        raise ConfigError(key, str(exc)) from None
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    return parse_config(raw)


def shipped_configs() -> dict[str, Path]:
    """Reference configurations bundled with the package, by file stem."""
    root = resources.files("qhhg") / "configs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def to_jsonable(cfg: ScenarioConfig) -> dict[str, Any]:
    return json.loads(json.dumps(cfg.raw))
