"""Orchestration of evolve / wigner / parametric runs and their output files."""

from __future__ import annotations

import logging
import math
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import io
from .config import ScenarioConfig, to_jsonable
from .observables import mandel_q, moments, photon_distribution, purity, quadratures, reduced_density, wigner, wigner_grid
from .parametric import (
    PulseSpec,
    fit_gaussian_pulse,
    fit_pulse,
    fundamental_field,
    harmonic_envelope,
    harmonic_field,
    predict,
)
from .propagator import StreamingEvolution

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "qhhg.manifest/1"
HEAVY_SECTOR_WARNING = 2
# amplitudes held in memory at once; longer grids are evolved block by block
MEMORY_BUDGET = 2**30


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class _Outputs:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name


def _evolve(cfg: ScenarioConfig, taus, threads: int, dump_dir: Path | None = None) -> StreamingEvolution:
    hook = None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

        def hook(M, H):
            H.dump(dump_dir / f"matrix_M{M}.txt")

    if len(cfg.modes) > HEAVY_SECTOR_WARNING:
        log.warning("%d harmonic modes: sector dimensions grow quickly", len(cfg.modes))
    return StreamingEvolution(
        cfg.alpha0, cfg.mode_set, cfg.couplings(), taus, cfg.epsilon, cfg.propagator(), threads, hook, MEMORY_BUDGET
    )


def depletion_probes(taus, mean0, fractions) -> list[dict]:
    """First times at which ``<A^dag A>`` falls to ``fraction`` of its initial value.

    Located by linear interpolation between grid points; ``tau`` is None when
    the level is never reached.
    """
    taus = np.asarray(taus, dtype=float)
    mean0 = np.asarray(mean0, dtype=float)
    start = int(np.argmin(np.abs(taus)))
    out = []
    for f in fractions:
        target = f * mean0[start]
        tau = None
        for j in range(start + 1, len(taus)):
            if mean0[j] <= target:
                a, b = mean0[j - 1], mean0[j]
                tau = float(taus[j - 1] + (target - a) * (taus[j] - taus[j - 1]) / (b - a))
                break
        out.append({"fraction": float(f), "tau": tau})
    return out


def snapshot_observables(state, modes, want_rho: bool) -> dict:
    obs = {"mean": {}, "second": {}, "mandel": {}, "purity": {}, "quad": {}, "dist": {}}
    for m in modes:
        d = photon_distribution(state, m)
        mean, second = moments(d)
        obs["dist"][m] = d.probabilities
        obs["mean"][m] = mean
        obs["second"][m] = second
        obs["mandel"][m] = mandel_q(d) if mean > 0 else float("nan")
        if want_rho:
            rho = reduced_density(state, m)
            obs["purity"][m] = purity(rho)
            obs["quad"][m] = quadratures(rho)
    return obs


def run_scenario(
    cfg: ScenarioConfig,
    output_dir=None,
    threads: int = 1,
    dump_matrices: bool = False,
    command: str = "evolve",
) -> dict:
    """Evolve the configured scenario and write the requested observable files."""
    started = _now()
    t0 = time.perf_counter()
    out = _Outputs(Path(output_dir or cfg.output_dir or "output"))
    taus = cfg.taus()
    flags = cfg.observables
    dump_dir = out.root / "matrices" if dump_matrices else None
    result = _evolve(cfg, taus, threads, dump_dir)
    labels = cfg.mode_set.labels
    want_rho = bool(flags.get("purity") or flags.get("quadratures"))
    dist_flag = flags.get("distributions")
    if dist_flag is True:
        idx = list(range(len(taus)))
    elif dist_flag:
        idx = sorted({int(np.argmin(np.abs(taus - float(t)))) for t in dist_flag})
    else:
        idx = []
    keep = set(idx)
    series, weighted_total, norms = [], [], []
    for j, state in enumerate(result):
        obs = snapshot_observables(state, labels, want_rho)
        if j not in keep:
            obs["dist"] = None
        series.append(obs)
        weighted_total.append(state.expect_weighted_number())
        norms.append(state.norm_squared())

    cols = {}
    for m in labels:
        cols[f"n_{m}"] = [s["mean"][m] for s in series]
    for m in cfg.modes:
        cols[f"weighted_{m}"] = [m * s["mean"][m] for s in series]
    cols["N"] = weighted_total
    cols["norm"] = norms
    io.write_timeseries(out.path("means.csv"), taus, cols)
    io.write_timeseries(
        out.path("second_moments.csv"), taus, {f"m2_{m}": [s["second"][m] for s in series] for m in labels}
    )
    if flags.get("mandel"):
        io.write_timeseries(out.path("mandel.csv"), taus, {f"q_{m}": [s["mandel"][m] for s in series] for m in labels})
    if flags.get("purity"):
        io.write_timeseries(
            out.path("purity.csv"), taus, {f"purity_{m}": [s["purity"][m] for s in series] for m in labels}
        )
    if flags.get("quadratures"):
        qcols = {}
        for m in labels:
            qcols[f"x_{m}"] = [s["quad"][m][0] for s in series]
            qcols[f"y_{m}"] = [s["quad"][m][1] for s in series]
        io.write_timeseries(out.path("quadratures.csv"), taus, qcols)
    if idx:
        for m in labels:
            io.write_distribution(
                out.path(f"distribution_mode{m}.csv"),
                [series[j]["dist"][m] for j in idx],
                tau=[taus[j] for j in idx],
            )

    probes = []
    if cfg.probes:
        probes = depletion_probes(taus, cols["n_0"], cfg.probes)
        hit = [p for p in probes if p["tau"] is not None]
        if hit:
            exact = _evolve(cfg, [p["tau"] for p in hit], threads)
            for p, state in zip(hit, exact):
                obs = snapshot_observables(state, labels, False)
                p["n_0"] = obs["mean"][0]
                p["weighted"] = {str(m): m * obs["mean"][m] for m in cfg.modes}
                kind, params = next(iter(cfg.coupling_mode.items()))
                if kind == "experimental":
                    ref = params["reference"]
                    p["ratios"] = {
                        str(m): (m * obs["mean"][m]) / (ref * obs["mean"][ref]) for m in cfg.modes if m != ref
                    }
                    p["heights"] = {str(m): params["h"][m] for m in cfg.modes if m != ref}
        rows = []
        for p in probes:
            rows.append([p["fraction"], p["tau"] if p["tau"] is not None else float("nan")])
        io.write_csv(out.path("probes.csv"), ["fraction", "tau"], rows)

    if cfg.wigner_spec() is not None:
        _write_wigner(cfg, threads, out)

    if dump_dir is not None:
        out.files.extend(f"matrices/matrix_M{M}.txt" for M in sorted(result.dimensions))

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config": to_jsonable(cfg),
        "started": started,
        "finished": _now(),
        "wall_seconds": time.perf_counter() - t0,
        "sector_dimensions": {str(M): d for M, d in sorted(result.dimensions.items())},
        "retained_probability": float(sum(abs(c) ** 2 for c in result.weights.values())),
        "solver": result.stats.as_dict(),
        "probes": probes,
        "outputs": out.files + ["manifest.json"],
    }
    io.write_json_atomic(out.root / "manifest.json", manifest)
    return manifest


def _write_wigner(cfg: ScenarioConfig, threads: int, out: _Outputs) -> str:
    spec = cfg.wigner_spec()
    res = _evolve(cfg, [spec.tau], threads)
    (state,) = res
    rho = reduced_density(state, spec.mode)
    W = wigner(rho, wigner_grid(spec.re, spec.im))
    name = f"wigner_mode{spec.mode}.csv"
    io.write_wigner(out.path(name), W)
    return name


def run_wigner(cfg: ScenarioConfig, output_dir=None, threads: int = 1) -> dict:
    if cfg.wigner_spec() is None:
        from .config import ConfigError

        raise ConfigError("observables.wigner", "required by the wigner subcommand")
    started = _now()
    out = _Outputs(Path(output_dir or cfg.output_dir or "output"))
    _write_wigner(cfg, threads, out)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": "wigner",
        "config": to_jsonable(cfg),
        "started": started,
        "finished": _now(),
        "outputs": out.files + ["manifest.json"],
    }
    io.write_json_atomic(out.root / "manifest.json", manifest)
    return manifest


def build_pulse(spec: dict) -> PulseSpec:
    """Pulse from a config block: ``gaussian``, ``samples`` or a stored ``spec``."""
    from .config import ConfigError

    kind = spec.get("type")
    if kind == "spec":
        return PulseSpec.from_dict(spec)
    grid = spec.get("grid")
    if not grid:
        raise ConfigError("pulse.grid", "missing frequency grid {start, stop, count}")
    freqs = np.linspace(grid["start"], grid["stop"], int(grid["count"]))
    scale = spec.get("mode_scale", "sqrt")
    if kind == "gaussian":
        return fit_gaussian_pulse(
            float(spec.get("E0", 1.0)), float(spec["tau_p"]), freqs, float(spec.get("omega", 1.0)), scale
        )
    if kind == "samples":
        return fit_pulse(spec["times"], spec["values"], freqs, scale, float(spec.get("omega", 1.0)))
    raise ConfigError("pulse.type", f"unknown pulse type {kind!r}")


def envelope_peak(taus, envelope) -> float:
    """Parabolic refinement of the maximum of a sampled envelope."""
    env = np.asarray(envelope, dtype=float)
    j = int(np.argmax(env))
    if 0 < j < len(env) - 1:
        y0, y1, y2 = env[j - 1], env[j], env[j + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        return float(taus[j] + shift * (taus[j + 1] - taus[j]))
    return float(taus[j])


def run_parametric(cfg: ScenarioConfig, output_dir=None) -> dict:
    """Parametric predictions and, with a pulse block, waveform tables."""
    started = _now()
    out = _Outputs(Path(output_dir or cfg.output_dir or "output"))
    taus = cfg.taus()
    couplings = cfg.couplings()
    cols = {}
    for n in cfg.modes:
        pred = predict(taus, n, couplings, cfg.alpha0)
        cols[f"beta_re_{n}"] = pred.beta.real
        cols[f"beta_im_{n}"] = pred.beta.imag
        cols[f"nbar_{n}"] = pred.nbar
        cols[f"weighted_{n}"] = pred.weighted
    io.write_timeseries(out.path("parametric.csv"), taus, cols)

    pulse_info = None
    if cfg.pulse:
        pulse = build_pulse(cfg.pulse)
        io.write_json_atomic(out.path("pulse_spec.json"), pulse.to_dict())
        ptaus = cfg.pulse.get("taus")
        wt = np.linspace(ptaus["start"], ptaus["stop"], int(ptaus["count"])) if ptaus else taus
        fields = {"E_fundamental": fundamental_field(pulse, wt)}
        peaks = {}
        for n in cfg.modes:
            fields[f"E_{n}"] = harmonic_field(pulse, n, couplings[n], wt)
            env = np.abs(harmonic_envelope(pulse, n, couplings[n], wt))
            # a discrete grid makes the envelope periodic in 2 pi / (n d omega)
            spacing = float(np.min(np.diff(pulse.frequencies))) if len(pulse.frequencies) > 1 else np.inf
            positive = (wt > 0) & (wt < math.pi / (n * spacing))
            if np.any(env[positive] > 0):
                peaks[str(n)] = envelope_peak(wt[positive], env[positive])
            else:
                peaks[str(n)] = None
        io.write_timeseries(out.path("waveforms.csv"), wt, fields)
        pulse_info = {"fit_residual": pulse.residual, "envelope_peaks": peaks}
        if cfg.pulse.get("type") == "gaussian":
            tp = float(cfg.pulse["tau_p"])
            pulse_info["expected_peaks"] = {str(n): tp / math.sqrt(2 * n) for n in cfg.modes}

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": "parametric",
        "config": to_jsonable(cfg),
        "started": started,
        "finished": _now(),
        "pulse": pulse_info,
        "outputs": out.files + ["manifest.json"],
    }
    io.write_json_atomic(out.root / "manifest.json", manifest)
    return manifest
