from __future__ import annotations

import csv
import filecmp
import json
import os

import pytest

from lorenz_cocycles.cli import main
from lorenz_cocycles.config import load_config
from lorenz_cocycles.experiment import load_built

SMALL = "[measure]\nproduct_samples = 400\nn_truncation = 12\n[experiment]\ntrials = 4\nn_iterates = 3000\nperturb_directions = 6\nperturb_halvings = 2\n"


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


def test_build_writes_validated_artifacts(tmp_path, small_cfg):
    out = tmp_path / "o"
    assert run("build", "--config", small_cfg, "--out", out) == 0
    doc = json.loads((out / "system.json").read_text())
    assert doc["schema_version"] == 1 and doc["scheme"]["coverage"] >= 0.99
    assert doc["provenance"]["config_hash"] == load_config(small_cfg).hash()
    b = load_built(load_config(small_cfg).with_overrides(output_dir=str(out)))
    assert b.scheme.coverage >= 0.99
    with open(out / "density.csv") as fh:
        assert next(csv.reader(fh)) == ["bin_left", "bin_right", "weight"]


def test_rho_half_is_config_error(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[lorenz]\nrho = 0.5\n")
    assert run("build", "--config", p, "--out", tmp_path / "o") == 2
    assert "expansion bound" in capsys.readouterr().err


def test_missing_config_file_is_config_error(tmp_path):
    assert run("build", "--config", tmp_path / "nope.ini") == 2


def test_typicality_needs_build(tmp_path, small_cfg):
    assert run("typicality", "--config", small_cfg, "--out", tmp_path / "empty") == 2


def test_global_flags_before_or_after_command(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("--config", small_cfg, "--out", a, "build") == 0
    assert run("build", "--config", small_cfg, "--out", b) == 0
    assert filecmp.cmp(a / "scheme.csv", b / "scheme.csv", shallow=False)


def test_byte_identical_reruns_and_thread_independence(tmp_path, small_cfg):
    dirs = []
    for name, threads in (("r1", 1), ("r2", 1), ("r3", 2)):
        out = tmp_path / name
        assert run("build", "--config", small_cfg, "--out", out) == 0
        assert run("typicality", "--config", small_cfg, "--out", out, "--threads", threads) == 0
        assert run("perturb", "--config", small_cfg, "--out", out) == 0
        assert run("spectrum", "--config", small_cfg, "--out", out, "--d", 3, "--trial", 1) == 0
        assert run("density", "--config", small_cfg, "--out", out) == 0
        dirs.append(out)
    names = sorted(os.listdir(dirs[0]))
    assert {"scheme.csv", "density.csv", "typicality.json", "trials.csv", "perturbation.csv", "product_density.csv"} <= set(names)
    for other in dirs[1:]:
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], other, names, shallow=False)
        assert not mismatch and not errors


def test_typicality_report(tmp_path, small_cfg):
    out = tmp_path / "t"
    run("build", "--config", small_cfg, "--out", out)
    assert run("typicality", "--config", small_cfg, "--out", out) == 0
    rep = json.loads((out / "typicality.json").read_text())
    assert rep["schema_version"] == 1
    for d in ("2", "3"):
        r = rep["per_dimension"][d]
        assert 0.0 <= r["fraction_simple"] <= 1.0 and r["trials"] == 4
    with open(out / "trials.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0])[:4] == ["seed", "d", "trial", "lambda_1"]
    # a single trial rerun reproduces its row exactly
    cfg = tmp_path / "one.ini"
    cfg.write_text("[experiment]\ntrials = 3\nn_iterates = 3000\nd_list = 3\n")
    out2 = tmp_path / "t2"
    run("build", "--config", cfg, "--out", out2)
    run("typicality", "--config", cfg, "--out", out2)
    with open(out2 / "trials.csv") as fh:
        again = list(csv.DictReader(fh))
    want = [r for r in rows if r["d"] == "3" and r["trial"] == "2"][0]
    got = again[2]
    assert {k: v for k, v in got.items() if v} == {k: v for k, v in want.items() if v and k in got}


def test_degenerate_control_epsilon_zero(tmp_path):
    p = tmp_path / "eps0.ini"
    p.write_text("[cocycle]\nepsilon = 0\n[experiment]\ntrials = 1\nn_iterates = 2000\nd_list = 2, 3\n")
    out = tmp_path / "e"
    run("build", "--config", p, "--out", out)
    assert run("typicality", "--config", p, "--out", out) == 0
    rep = json.loads((out / "typicality.json").read_text())
    assert rep["per_dimension"]["2"]["fraction_simple"] == 0.0
    assert rep["per_dimension"]["3"]["fraction_simple"] == 0.0


def test_perturbation_zero_size_stays_degenerate(tmp_path, small_cfg):
    out = tmp_path / "p"
    run("build", "--config", small_cfg, "--out", out)
    assert run("perturb", "--config", small_cfg, "--out", out) == 0
    rep = json.loads((out / "perturbation.json").read_text())
    assert rep["schema_version"] == 1
    assert rep["by_halving"]["-1"]["fraction_regained"] == 0.0
    assert rep["by_halving"]["0"]["fraction_regained"] > 0.5


def test_spectrum_json(tmp_path, small_cfg):
    out = tmp_path / "s"
    run("build", "--config", small_cfg, "--out", out)
    assert run("spectrum", "--config", small_cfg, "--out", out) == 0
    doc = json.loads((out / "spectrum.json").read_text())
    assert doc["schema_version"] == 1 and {"exponents", "half_widths", "time_scale", "n_used", "simple", "min_gap", "mean_T"} <= set(doc)


def test_spectrum_from_saved_generator(tmp_path, small_cfg):
    from lorenz_cocycles.cocycle import sample_fiber_bunched

    out = tmp_path / "g"
    run("build", "--config", small_cfg, "--out", out)
    g = tmp_path / "gen.json"
    g.write_text(sample_fiber_bunched(4, 2, 1, 0.3).to_json())
    assert run("spectrum", "--config", small_cfg, "--out", out, "--generator", g) == 0
    assert len(json.loads((out / "spectrum.json").read_text())["exponents"]) == 2


def test_verify_default_passes(tmp_path, small_cfg):
    out = tmp_path / "v"
    run("build", "--config", small_cfg, "--out", out)
    assert run("verify", "--config", small_cfg, "--out", out, "--skip-determinism") == 0
    doc = json.loads((out / "verify.json").read_text())
    assert doc["passed"] and doc["schema_version"] == 1


def test_verify_rho_070_fails(tmp_path, capsys):
    p = tmp_path / "r.ini"
    p.write_text("[lorenz]\nrho = 0.70\n")
    out = tmp_path / "v"
    assert run("verify", "--config", p, "--out", out, "--skip-typicality", "--skip-determinism") == 1
    doc = json.loads((out / "verify.json").read_text())
    failed = [c for c in doc["checks"] if not c["passed"]]
    assert any(c["name"].startswith("C4") and c["observed"] == pytest.approx(1.4) for c in failed)


def test_verify_tampered_scheme_fails(tmp_path, small_cfg):
    out = tmp_path / "x"
    run("build", "--config", small_cfg, "--out", out)
    lines = (out / "scheme.csv").read_text().splitlines()
    f = lines[3].split(",")
    f[1] = repr(float(f[1]) - 0.01)
    lines[3] = ",".join(f)
    (out / "scheme.csv").write_text("\n".join(lines) + "\n")
    assert run("verify", "--config", small_cfg, "--out", out, "--skip-typicality", "--skip-determinism") == 1
    doc = json.loads((out / "verify.json").read_text())
    bad = [c for c in doc["checks"] if not c["passed"]]
    assert any("overlaps" in c["detail"] for c in bad)


def test_config_template(capsys):
    assert run("config-template") == 0
    text = capsys.readouterr().out
    for s in ("[lorenz]", "[inducing]", "[measure]", "[cocycle]", "[experiment]"):
        assert s in text
