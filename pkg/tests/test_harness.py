import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from quditbell.harness import (
    ConfigError,
    DecayFitError,
    ResultIntegrityError,
    UnknownTableError,
    compare,
    fit_decay,
    get_table,
    load_config,
    load_result,
    parse_config,
    report,
    run,
)
from quditbell.harness.cli import main

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def prep_config(tmp_path, name="p", **extra):
    raw = {
        "experiment": "chsh-prep",
        "amplitudes_G": [25],
        "t2_us": [2.4, 10],
        "output": {"directory": str(tmp_path), "name": name},
    }
    raw.update(extra)
    return parse_config(raw)


@pytest.fixture(scope="module")
def prep_result(tmp_path_factory):
    d = tmp_path_factory.mktemp("prep")
    run(prep_config(d))
    return d / "p.json"


# --- configuration ----------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert len(cfg.config_hash()) == 64


def test_config_errors_are_collected():
    with pytest.raises(ConfigError) as err:
        parse_config({"experiment": "chsh-prep", "amplitudes_G": [], "t2_us": [-1], "bogus": 1, "workers": 0})
    text = str(err.value)
    for fragment in ("amplitudes_G", "t2_us", "bogus", "workers"):
        assert fragment in text
    with pytest.raises(ConfigError):
        parse_config({"experiment": "nope"})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "chsh-prep", "amplitudes_G": [10], "model": {"not_a_param": 1}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "chsh-prep", "amplitudes_G": [10], "propagation": {"mode": "fast"}})


def test_config_hash_tracks_content():
    a = parse_config({"experiment": "chsh-prep", "amplitudes_G": [10, 20]})
    b = parse_config({"experiment": "chsh-prep", "amplitudes_G": [10.0, 20.0]})
    c = parse_config({"experiment": "chsh-prep", "amplitudes_G": [10, 25]})
    assert a.config_hash() == b.config_hash() != c.config_hash()


# --- runs and integrity -----------------------------------------------------


def test_result_files(prep_result):
    meta = json.loads(prep_result.read_text())
    csv_text = prep_result.with_suffix(".csv").read_text()
    first = csv_text.splitlines()[0]
    assert first == f"# schema_version=1 experiment=chsh-prep config_hash={meta['config_hash']}"
    assert csv_text.splitlines()[1] == "B1_G,T2e_us,fidelity,duration_ns"
    assert len(meta["rows"]) == 2 and meta["seed"] == 0
    assert abs(meta["rows"][0]["fidelity"] - 0.9383) < 0.03


def test_run_is_deterministic_across_workers(tmp_path, prep_result):
    run(prep_config(tmp_path, workers=2))
    assert (tmp_path / "p.csv").read_bytes() == prep_result.with_suffix(".csv").read_bytes()


def test_report_matches_published_table(prep_result):
    text = report([prep_result])
    assert "Total flagged cells: 0" in text
    assert "0.9383" in text


def test_report_flags_perturbed_cell(prep_result):
    meta = load_result(prep_result)
    meta["rows"][0]["fidelity"] += 0.05
    cmp = compare(meta)
    assert cmp.n_flagged == 1
    assert "FLAG" in cmp.to_markdown()


def test_report_refuses_hash_mismatch(prep_result, tmp_path):
    with pytest.raises(ResultIntegrityError):
        report([prep_result], expected_hash="0" * 64)
    # a CSV edited after writing no longer matches its checksum
    for suffix in (".json", ".csv"):
        (tmp_path / f"p{suffix}").write_text(prep_result.with_suffix(suffix).read_text())
    csv = tmp_path / "p.csv"
    csv.write_text(csv.read_text().replace("0.93", "0.95"))
    with pytest.raises(ResultIntegrityError):
        load_result(tmp_path / "p.json")
    # a config edited after writing no longer matches the recorded hash
    meta = json.loads(prep_result.read_text())
    meta["config"]["amplitudes_G"] = [30.0]
    (tmp_path / "p.json").write_text(json.dumps(meta))
    with pytest.raises(ResultIntegrityError):
        load_result(tmp_path / "p.json")


def test_unknown_table():
    with pytest.raises(UnknownTableError):
        get_table("no-such-table")


# --- decay fitting ----------------------------------------------------------


def test_fit_decay_round_trip():
    tau = np.linspace(0, 4, 15)
    y = 0.8 * np.exp(-2 * tau / 2.4)
    fit = fit_decay(tau, y)
    assert abs(fit.T2_us / 2.4 - 1) < 1e-3 and abs(fit.M0 / 0.8 - 1) < 1e-3


def test_fit_decay_noise_monte_carlo():
    rng = np.random.default_rng(0)
    tau = np.linspace(0, 5, 20)
    clean = np.exp(-2 * tau / 2.0)
    hits = 0
    for _ in range(1000):
        y = clean * (1 + 0.05 * rng.normal(size=tau.size))
        hits += abs(fit_decay(tau, y).T2_us / 2.0 - 1) < 0.10
    assert hits >= 950


def test_fit_decay_rejects_degenerate_data():
    with pytest.raises(DecayFitError):
        fit_decay([0, 1, 2, 3], [1, 1, 1, 1])
    with pytest.raises(DecayFitError):
        fit_decay([1, 1, 1], [1.0, 0.9, 0.8])
    with pytest.raises(DecayFitError):
        fit_decay([0, 1], [1.0, 0.5])


# --- command line -----------------------------------------------------------


def test_cli_run_and_report(tmp_path, capsys):
    cfg = {"experiment": "chsh-prep", "amplitudes_G": [25], "t2_us": [2.4], "output": {"directory": "x", "name": "c"}}
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "out"
    assert main(["run", str(path), "--output-dir", str(out)]) == 0
    assert (out / "c.csv").exists() and (out / "c.json").exists()
    capsys.readouterr()
    assert main(["report", str(out / "c.json"), "-o", str(tmp_path / "r.md")]) == 0
    assert "Total flagged cells: 0" in (tmp_path / "r.md").read_text()
    assert main(["report", str(out / "c.json"), "--expect-hash", "f" * 64]) == 2
    assert main(["report", str(out / "c.json"), "--table", "nope"]) == 2


def test_cli_invalid_config_writes_nothing(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    out = tmp_path / "out"
    path.write_text(yaml.safe_dump({"experiment": "chsh-prep", "amplitudes_G": [], "output": {"directory": str(out)}}))
    assert main(["run", str(path)]) == 2
    assert "amplitudes_G" in capsys.readouterr().err
    assert not out.exists()


def test_cli_level_diagram_and_fit(tmp_path, capsys):
    assert main(["level-diagram", "--points", "5", "--max-field", "0.5", "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "level_diagram_dimer.csv").read_text().splitlines()
    assert any(l.startswith("Bz_T,E1_rad_per_ns") for l in lines)
    data = tmp_path / "decay.csv"
    tau = np.linspace(0, 4, 10)
    data.write_text("tau_us,amplitude\n" + "".join(f"{t},{np.exp(-t)}\n" for t in tau))
    capsys.readouterr()
    assert main(["fit-decay", str(data)]) == 0
    assert json.loads(capsys.readouterr().out)["T2_us"] == pytest.approx(2.0, rel=1e-6)
    flat = tmp_path / "flat.csv"
    flat.write_text("tau_us,amplitude\n0,1\n1,1\n2,1\n")
    assert main(["fit-decay", str(flat)]) == 2
    assert main(["fit-decay", str(tmp_path / "missing.csv")]) == 2
