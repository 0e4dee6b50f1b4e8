import json
import subprocess
import sys

import pytest

from mmfbar.cli import ENV_OUT_DIR, main
from mmfbar.io import load_mbvd_params, parse_touchstone
from mmfbar.mbvd import derived_metrics


def _run(tmp_path, *argv, out="out"):
    return main([*argv, "--out-dir", str(tmp_path / out)])


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_simulate_writes_csv_modes_and_manifest(tmp_path, capsys):
    assert _run(tmp_path, "simulate", "--from", "5e9", "--to", "80e9", "--points", "2001") == 0
    out = tmp_path / "out"
    assert set(_files(out)) == {"admittance.csv", "modes.json", "manifest.json"}
    csv = (out / "admittance.csv").read_text().splitlines()
    assert csv[0] == "freq_hz,re,im,quantity" and len(csv) == 2002
    labels = [m["label"] for m in json.loads((out / "modes.json").read_text())["modes"]]
    assert labels[:2] == ["S1", "S3"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    assert [o["file"] for o in manifest["outputs"]] == ["admittance.csv", "modes.json"]
    assert manifest["inputs"][0]["path"] == "mmfbar.data/materials.json"
    assert "S1:" in capsys.readouterr().out


def test_synth_then_fit_round_trip(tmp_path):
    assert _run(tmp_path, "synth", "--fs", "21.4e9", "--k2", "0.07", "--q", "62", "--c0", "1e-13") == 0
    synth = tmp_path / "out"
    assert _run(tmp_path, "fit", "--input", str(synth / "synth.s1p"), out="fit") == 0
    fitted = load_mbvd_params((tmp_path / "fit" / "mbvd.json").read_text())
    truth = load_mbvd_params((synth / "mbvd.json").read_text())
    (a,), (b,) = fitted.branches, truth.branches
    for x, y in [(a.r_m, b.r_m), (a.l_m, b.l_m), (a.c_m, b.c_m), (fitted.c_0, truth.c_0)]:
        assert x == pytest.approx(y, rel=0.01)
    (m,) = derived_metrics(fitted)
    assert m.f_s == pytest.approx(21.4e9, rel=1e-3)
    assert m.k2 == pytest.approx(0.07, abs=0.002)
    report = json.loads((tmp_path / "fit" / "fit_report.json").read_text())
    assert report["converged"] is True


def test_synth_fit_with_config(tmp_path):
    cfg = tmp_path / "fit.json"
    cfg.write_text(json.dumps({"mode_windows_hz": [[19e9, 24e9], [50e9, 60e9]], "seed": 3}))
    args = ["--fs", "21.4e9", "--fs", "55.4e9", "--k2", "0.07", "--k2", "0.04", "--q", "62", "--q", "19"]
    assert _run(tmp_path, "synth", *args, "--c0", "175e-15", "--rs", "3", "--ls", "50e-12",
                "--from", "5e9", "--to", "70e9", "--points", "6501") == 0
    assert _run(tmp_path, "fit", "--input", str(tmp_path / "out" / "synth.s1p"), "--config", str(cfg), out="fit") == 0
    p = load_mbvd_params((tmp_path / "fit" / "mbvd.json").read_text())
    assert p.r_s == pytest.approx(3, rel=0.01) and p.l_s == pytest.approx(50e-12, rel=0.01)


def test_fit_failure_exit_code(tmp_path, capsys):
    assert _run(tmp_path, "synth", "--fs", "21.4e9", "--k2", "0.07", "--q", "62", "--c0", "1e-13") == 0
    cfg = tmp_path / "fit.json"
    cfg.write_text(json.dumps({"mode_windows_hz": [[8e9, 12e9]]}))
    code = _run(tmp_path, "fit", "--input", str(tmp_path / "out" / "synth.s1p"), "--config", str(cfg), out="fit")
    assert code == 2
    assert "no resonance in window" in capsys.readouterr().err


def test_malformed_s2p_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.s2p"
    bad.write_text("# GHZ S RI R 50\n1 0 0 0 0 0 0 0 0\n2 0 0 0\n")
    assert _run(tmp_path, "convert", "--input", str(bad), "--output", "bad.csv") == 1
    err = capsys.readouterr().err
    assert "line 3" in err
    assert not (tmp_path / "out" / "bad.csv").exists()


def test_convert_round_trips(tmp_path):
    src = tmp_path / "d.s2p"
    src.write_text("# GHZ S RI R 50\n1 0.2 0 0.8 0 0.8 0 0.2 0\n2 0.3 0.1 0.7 0 0.7 0 0.3 0.1\n")
    assert _run(tmp_path, "convert", "--input", str(src), "--output", "d.csv") == 0
    assert _run(tmp_path, "convert", "--input", str(tmp_path / "out" / "d.csv"), "--output", "d.s1p") == 0
    doc = parse_touchstone((tmp_path / "out" / "d.s1p").read_text())
    assert len(doc) == 2
    assert _run(tmp_path, "convert", "--input", str(src), "--output", "e.s2p") == 0
    assert parse_touchstone((tmp_path / "out" / "e.s2p").read_text()).allclose(parse_touchstone(src.read_text()))
    assert _run(tmp_path, "convert", "--input", str(src), "--output", "e.s1p") == 1


def test_modes_bodeq_sweep_survey(tmp_path):
    assert _run(tmp_path, "synth", "--fs", "21.4e9", "--k2", "0.07", "--q", "62", "--c0", "1e-13") == 0
    s1p = str(tmp_path / "out" / "synth.s1p")
    assert _run(tmp_path, "modes", "--input", s1p, out="m") == 0
    assert len(json.loads((tmp_path / "m" / "modes.json").read_text())["modes"]) == 1
    assert _run(tmp_path, "bodeq", "--input", s1p, "--smooth-window", "5", out="b") == 0
    assert (tmp_path / "b" / "bodeq.csv").read_text().startswith("freq_hz,q_raw,q_smoothed\n")
    model = str(tmp_path / "out" / "mbvd.json")
    assert _run(tmp_path, "bodeq", "--model", model, "--from", "15e9", "--to", "30e9", "--points", "301", out="b2") == 0
    assert _run(tmp_path, "sweep", "--parameter", "layers[0,2].thickness", "--values", "30e-9,40e-9",
                "--from", "5e9", "--to", "80e9", "--points", "1001", out="s") == 0
    rows = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "value,label,f_s_hz,f_p_hz,k2,q_p,fom" and len(rows) >= 3
    extra = tmp_path / "lit.csv"
    extra.write_text("label,frequency_hz,k2,q,technology\nother,30e9,0.05,50,AlN\n")
    assert _run(tmp_path, "survey", "--input", str(extra), out="v") == 0
    ranked = json.loads((tmp_path / "v" / "survey.json").read_text())["entries"]
    assert [e["fom_display"] for e in ranked] == ["4.34", "2.50", "0.76"]


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["simulate", "--bogus"],
        ["simulate", "--from", "5e9"],
        ["bodeq", "--smooth-window", "4", "--input", "x.s1p"],
        ["bodeq"],
        ["synth", "--fs", "1e9", "--k2", "0.0", "--q", "10", "--c0", "1e-13"],
        ["synth", "--fs", "1e9", "--fs", "2e9", "--k2", "0.1", "--q", "10", "--c0", "1e-13"],
        ["fit", "--input", "does-not-exist.s1p"],
        ["simulate", "--from", "5e9", "--to", "1e9", "--points", "11"],
        ["convert", "--input", "x.txt", "--output", "../escape.csv"],
    ],
)
def test_invalid_input_exit_one(tmp_path, argv, capsys):
    (tmp_path / "x.txt").write_text("")
    argv = [a.replace("x.txt", str(tmp_path / "x.txt")) for a in argv]
    assert _run(tmp_path, *argv) == 1
    assert capsys.readouterr().err


def test_output_confined_to_out_dir(tmp_path):
    src = tmp_path / "d.s1p"
    src.write_text("# GHZ S RI R 50\n1 0.2 0\n")
    for name in ["../escape.csv", "/tmp/abs.csv", "sub/dir.csv"]:
        assert _run(tmp_path, "convert", "--input", str(src), "--output", name) == 1
    assert not (tmp_path / "escape.csv").exists()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["d.s1p"]


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUT_DIR, str(tmp_path / "env"))
    assert main(["survey"]) == 0
    assert (tmp_path / "env" / "survey.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--from", "5e9", "--to", "80e9", "--points", "2001"],
        ["synth", "--fs", "21.4e9", "--k2", "0.07", "--q", "62", "--c0", "1e-13", "--noise-db", "-40", "--seed", "4"],
    ],
)
def test_byte_identical_reruns(tmp_path, argv):
    for k in range(3):
        assert _run(tmp_path, *argv, out=f"run{k}") == 0
    first = _files(tmp_path / "run0")
    assert _files(tmp_path / "run1") == first == _files(tmp_path / "run2")


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mmfbar", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("mmfbar ")
    r = subprocess.run([sys.executable, "-m", "mmfbar", "nope"], capture_output=True, text=True)
    assert r.returncode == 1 and "usage" in r.stderr
