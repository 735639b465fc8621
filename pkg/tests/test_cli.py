import json
import math

import numpy as np
import pytest

from qhhg import cli, io
from qhhg.config import ConfigError, parse_config, shipped_configs
from qhhg.propagator import PropagationError

BASE = {
    "name": "tiny",
    "alpha0_sq": 20.0,
    "modes": [3],
    "coupling_mode": {"plateau": {"p": 0.5}},
    "tau_grid": {"start": 0.0, "stop": 4.0, "count": 9},
    "observables": {
        "distributions": True,
        "mandel": True,
        "purity": True,
        "quadratures": True,
        "probes": [0.98, 0.95],
        "wigner": {"mode": 3, "tau": 4.0, "re": [-2, 2, 9], "im": [-2, 2, 9]},
    },
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_evolve_outputs_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert run("evolve", "--config", write(tmp_path, BASE), "--output", out, "--dump-matrices") == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["schema"].startswith("qhhg.manifest/")
    assert manifest["config"] == BASE
    listed = set(manifest["outputs"])
    on_disk = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}
    assert listed == on_disk
    assert {"means.csv", "mandel.csv", "purity.csv", "quadratures.csv", "probes.csv", "wigner_mode3.csv"} <= listed
    assert any(name.startswith("matrices/") for name in listed)
    assert set(manifest["sector_dimensions"]) == {n.split("_M")[1][:-4] for n in listed if n.startswith("matrices/")}
    header, data = io.read_csv(out / "means.csv")
    assert header == ["tau", "n_0", "n_3", "weighted_3", "N", "norm"]
    assert data.shape == (9, 6)
    probes = manifest["probes"]
    assert [p["fraction"] for p in probes] == [0.98, 0.95]
    for p in probes:
        assert p["n_0"] == pytest.approx(p["fraction"] * data[0, 1], rel=1e-3)
    header, dist = io.read_csv(out / "distribution_mode3.csv")
    assert header == ["tau", "photon_number", "probability"]


def test_runs_are_bit_identical(tmp_path):
    cfg = write(tmp_path, BASE)
    assert run("evolve", "--config", cfg, "--output", tmp_path / "a") == 0
    assert run("evolve", "--config", cfg, "--output", tmp_path / "b", "--threads", "0") == 0
    for name in json.loads((tmp_path / "a" / "manifest.json").read_text())["outputs"]:
        if name.endswith(".csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize(
    "mutate,key",
    [
        (lambda c: c.update(colour="red"), "colour"),
        (lambda c: c["observables"].update(spectra=True), "observables.spectra"),
        (lambda c: c.pop("modes"), "modes"),
        (lambda c: c.update(alpha0_sq=-1), "alpha0_sq"),
        (lambda c: c["tau_grid"].update(count=1), "tau_grid.count"),
        (lambda c: c.update(coupling_mode={"plateau": {"p": 1}, "explicit": {"chi": {"3": 1}}}), "coupling_mode"),
        (lambda c: c.update(coupling_mode={"explicit": {"chi": {"5": 0.1}}}), "coupling_mode.explicit.chi"),
        (lambda c: c["coupling_mode"]["plateau"].update(q=1), "coupling_mode.plateau.q"),
        (lambda c: c["observables"]["wigner"].update(mode=7), "observables.wigner.mode"),
        (lambda c: c.update(epsilon=2.0), "epsilon"),
    ],
)
def test_config_errors_name_the_key(tmp_path, capsys, mutate, key):
    cfg = json.loads(json.dumps(BASE))
    mutate(cfg)
    assert run("evolve", "--config", write(tmp_path, cfg), "--output", tmp_path / "o") == 1
    assert f"config error: {key}" in capsys.readouterr().err
    with pytest.raises(ConfigError) as exc:
        parse_config(cfg)
    assert exc.value.key == key


def test_missing_and_malformed_files(tmp_path):
    assert run("evolve", "--config", tmp_path / "nope.json") == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("evolve", "--config", bad) == 1


def test_mirror_grid():
    cfg = parse_config(dict(BASE, tau_grid={"start": 0, "stop": 2, "count": 5, "mirror": True}))
    np.testing.assert_allclose(cfg.taus(), [-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2])


def test_solver_failure_exit_code(tmp_path, monkeypatch, capsys):
    from qhhg import propagator

    def boom(*a, **k):
        raise PropagationError("step size underflow")

    monkeypatch.setattr(propagator, "_evolve_sector", boom)
    assert run("evolve", "--config", write(tmp_path, BASE), "--output", tmp_path / "o") == 2
    assert "sector M=" in capsys.readouterr().err


def test_validate_zero_coupling_passes(tmp_path, capsys):
    cfg = dict(BASE, coupling_mode={"explicit": {"chi": {"3": 0.0}}})
    assert run("validate", "--config", write(tmp_path, cfg), "--output", tmp_path / "v") == 0
    report = json.loads((tmp_path / "v" / "validate.json").read_text())
    assert report["passed"]
    statuses = {c["status"] for c in report["checks"]}
    assert statuses == {"pass", "skip"}
    text = capsys.readouterr().out
    assert "expected" in text and "tolerance" in text


def test_validate_loose_tolerance_marks_pass_loose(tmp_path):
    cfg = dict(BASE, validate={"tolerance_factor": 3.0})
    assert run("validate", "--config", write(tmp_path, cfg), "--output", tmp_path / "v") == 0
    report = json.loads((tmp_path / "v" / "validate.json").read_text())
    assert {c["status"] for c in report["checks"]} == {"pass (loose)"}


def test_validate_failure_exit_code(tmp_path):
    cfg = dict(BASE, solver={"krylov_dim": 4, "step_tol": 1e-2})
    assert run("validate", "--config", write(tmp_path, cfg), "--output", tmp_path / "v") == 3
    report = json.loads((tmp_path / "v" / "validate.json").read_text())
    assert not report["passed"]
    assert any(c["status"] == "fail" for c in report["checks"])


def test_parametric_tables(tmp_path):
    cfg = dict(
        BASE,
        modes=[3, 5],
        pulse={
            "type": "gaussian",
            "tau_p": 20.0,
            "mode_scale": "narrowband",
            "grid": {"start": 0.02, "stop": 2.0, "count": 100},
            "taus": {"start": -30, "stop": 30, "count": 1201},
        },
    )
    cfg.pop("observables")
    out = tmp_path / "p"
    assert run("parametric", "--config", write(tmp_path, cfg), "--output", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for n in ("3", "5"):
        assert manifest["pulse"]["envelope_peaks"][n] == pytest.approx(20 / math.sqrt(2 * int(n)), rel=1e-3)
    header, data = io.read_csv(out / "parametric.csv")
    w3, w5 = data[:, header.index("weighted_3")], data[:, header.index("weighted_5")]
    np.testing.assert_allclose(w3, w5, rtol=1e-12)
    from qhhg.parametric import PulseSpec

    spec = PulseSpec.from_dict(json.loads((out / "pulse_spec.json").read_text()))
    assert len(spec.frequencies) == 100


def test_parametric_zero_pulse(tmp_path):
    t = list(np.linspace(-5, 5, 41))
    cfg = dict(BASE, pulse={"type": "samples", "times": t, "values": [0.0] * 41,
                            "grid": {"start": 0.5, "stop": 2.0, "count": 4}})
    out = tmp_path / "z"
    assert run("parametric", "--config", write(tmp_path, cfg), "--output", out) == 0
    _, data = io.read_csv(out / "waveforms.csv")
    assert not np.any(data[:, 1:])


def test_wigner_subcommand(tmp_path):
    out = tmp_path / "w"
    assert run("wigner", "--config", write(tmp_path, BASE), "--output", out) == 0
    header, data = io.read_csv(out / "wigner_mode3.csv")
    assert header == ["re_alpha", "im_alpha", "w"] and data.shape == (81, 3)
    cfg = dict(BASE, observables={})
    assert run("wigner", "--config", write(tmp_path, cfg), "--output", out) == 1


def test_shipped_configs_parse():
    from qhhg.config import load_config

    configs = shipped_configs()
    assert {"desk_plateau_3_5", "plateau_3_15", "heights_19_21"} <= set(configs)
    for name, path in configs.items():
        cfg = load_config(path)
        assert cfg.heavy == (cfg.alpha0_sq >= 500), name


def test_block_evolution_gives_same_tables(tmp_path, monkeypatch):
    from qhhg import scenario

    cfg = write(tmp_path, BASE)
    assert run("evolve", "--config", cfg, "--output", tmp_path / "a") == 0
    monkeypatch.setattr(scenario, "MEMORY_BUDGET", 1)
    assert run("evolve", "--config", cfg, "--output", tmp_path / "b") == 0
    for name in ("means.csv", "mandel.csv", "purity.csv", "quadratures.csv"):
        _, a = io.read_csv(tmp_path / "a" / name)
        _, b = io.read_csv(tmp_path / "b" / name)
        np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-12)


def test_plateau_run_has_quadratic_onset(tmp_path):
    out = tmp_path / "plateau"
    assert run("evolve", "--config", shipped_configs()["desk_plateau_3_5"], "--output", out) == 0
    header, data = io.read_csv(out / "means.csv")
    t, y = data[:, 0], data[:, header.index("weighted_3")]
    m = t <= 4
    r = y[m] - np.polyval(np.polyfit(t[m], y[m], 2), t[m])
    assert 1 - r @ r / np.sum((y[m] - y[m].mean()) ** 2) > 0.999
