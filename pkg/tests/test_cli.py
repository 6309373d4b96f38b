import json
import shutil

import numpy as np
import pandas as pd
import pytest
import yaml

from redistsim import io as rio
from redistsim.cli import main
from redistsim.errors import ConfigError
from redistsim.plotting import boxplot, histogram
from redistsim.synthetic import write_instance

FILES = [rio.PLANS_LONG, rio.PLANS_WIDE, rio.SIDECAR, rio.STATS, rio.REPORT, rio.REPORT_TXT]


@pytest.fixture(scope="module")
def instance(tmp_path_factory):
    root = tmp_path_factory.mktemp("inst")
    cfg = write_instance(root, 10, 10, 4, 0.05, counties=(5, 5), seed=3, nsims=300, nchains=2)
    assert main(["simulate", "--config", str(cfg)]) == 0
    return cfg, root / "run"


def simulate_tiny(*argv):
    """Tiny runs may fail convergence checks (exit 1) but must still write every artifact."""
    rc = main(["simulate", *argv])
    assert rc in (0, 1)
    return rc


def copy_run(run, dest):
    shutil.copytree(run, dest)
    return dest


def test_simulate_writes_all_files(instance):
    _, run = instance
    for name in FILES:
        assert (run / name).stat().st_size > 0
    stats = rio.read_stats(run / rio.STATS)
    assert len(stats) == (600 + 1) * 4
    assert (stats.loc[stats["draw"] == "enacted", "chain"] == "").all()


def test_missing_attributes_no_outputs(tmp_path, capsys):
    cfg = write_instance(tmp_path, 4, 4, 2, 0.05, nsims=10)
    (tmp_path / "attributes.csv").unlink()
    assert main(["simulate", "--config", str(cfg)]) != 0
    assert not (tmp_path / "run").exists()
    assert "attributes" in capsys.readouterr().err


@pytest.mark.parametrize("key, value, path", [
    ("ndists", "four", "ndists"),
    ("pop_tol", 3, "pop_tol"),
    ("sampler", {"nsims": -5}, "sampler.nsims"),
])
def test_config_error_names_field(tmp_path, capsys, key, value, path):
    cfg = write_instance(tmp_path, 4, 4, 2, 0.05, nsims=10)
    raw = yaml.safe_load(cfg.read_text())
    raw[key] = value
    cfg.write_text(yaml.safe_dump(raw))
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert path in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


def test_diagnose_converged(instance, tmp_path):
    _, run = instance
    run = copy_run(run, tmp_path / "r")
    assert main(["diagnose", str(run)]) == 0


def test_diagnose_flags_corrupted_row(instance, tmp_path, capsys):
    _, run = instance
    run = copy_run(run, tmp_path / "r")
    lines = (run / rio.PLANS_WIDE).read_text().splitlines()
    # row 3 is the second simulated draw
    fields = lines[3].split(",")
    draw = fields[0]
    fields[2:] = [str(1 + (i % 10 + i // 10) % 4) for i in range(100)]
    lines[3] = ",".join(fields)
    (run / rio.PLANS_WIDE).write_text("\n".join(lines) + "\n")
    assert main(["diagnose", str(run)]) != 0
    assert f"draw {draw} violates" in capsys.readouterr().out


def test_single_chain_strict(tmp_path):
    cfg = write_instance(tmp_path, 6, 6, 3, 0.05, nsims=40, nchains=1)
    assert main(["simulate", "--config", str(cfg), "--strict"]) == 1
    assert (tmp_path / "run" / rio.STATS).exists()
    assert main(["diagnose", str(tmp_path / "run"), "--strict"]) == 1
    assert main(["diagnose", str(tmp_path / "run")]) == 0


def test_summarize_reproduces_stats(instance, tmp_path):
    _, run = instance
    out = tmp_path / "s.csv"
    assert main(["summarize", str(run), "--stats-out", str(out)]) == 0
    assert out.read_bytes() == (run / rio.STATS).read_bytes()


def test_missing_run_dir(tmp_path):
    assert main(["summarize", str(tmp_path / "nope")]) == 2


def test_boxplot_one_box_per_district(instance, tmp_path):
    _, run = instance
    stats = rio.read_stats(run / rio.STATS)
    res = boxplot(stats, "e_dem", tmp_path / "b.svg")
    assert res["boxes"] == 4 and res["draws"] == 600
    enacted = np.sort(stats.loc[stats["draw"] == "enacted", "e_dem"].to_numpy(float))
    assert list(res["references"]) == ["enacted"]
    np.testing.assert_array_equal(res["references"]["enacted"], enacted)
    assert (tmp_path / "b.svg").read_text().lstrip().startswith("<?xml")


def test_histogram_counts(instance, tmp_path):
    _, run = instance
    stats = rio.read_stats(run / rio.STATS)
    res = histogram(stats, "comp_edge", tmp_path / "h.svg", bins=20)
    assert res["counts"].sum() == 600
    assert len(res["edges"]) == 21
    assert len(res["references"]) == 1


def test_plot_unknown_column(instance, tmp_path):
    _, run = instance
    stats = rio.read_stats(run / rio.STATS)
    with pytest.raises(ConfigError):
        boxplot(stats, "nope", tmp_path / "x.svg")
    rc = main(["plot", str(run / rio.STATS), "--column", "nope", "--out", str(tmp_path / "x.svg")])
    assert rc == 2 and not (tmp_path / "x.svg").exists()


def test_plot_command(instance, tmp_path):
    _, run = instance
    for kind in ("boxplot", "histogram"):
        out = tmp_path / f"{kind}.svg"
        assert main(["plot", str(run / rio.STATS), "--kind", kind, "--column", "plan_dev",
                     "--out", str(out)]) == 0
        assert out.exists()


def test_validate_map(instance, capsys):
    cfg, _ = instance
    assert main(["validate-map", "--config", str(cfg)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["reference:enacted:plan_dev"] <= 0.05


def test_seed_override(tmp_path):
    cfg = write_instance(tmp_path, 5, 5, 2, 0.1, nsims=20, seed=1)
    simulate_tiny("--config", str(cfg), "--out", str(tmp_path / "a"))
    simulate_tiny("--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "1")
    simulate_tiny("--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "2")
    a, b, c = (pd.read_csv(tmp_path / d / rio.PLANS_WIDE, dtype=str) for d in "abc")
    assert a.equals(b)
    assert not a.equals(c)
    assert json.loads((tmp_path / "c" / rio.SIDECAR).read_text())["meta"]["config"]["sampler"]["seed"] == 2


def test_worker_count_byte_identical(tmp_path):
    cfg = write_instance(tmp_path, 6, 6, 3, 0.05, nsims=40, seed=9)
    codes = {simulate_tiny("--config", str(cfg), "--out", str(tmp_path / f"w{w}"), "--workers", str(w))
             for w in (1, 3)}
    assert len(codes) == 1
    for name in FILES:
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()


def test_thin_config(tmp_path):
    cfg = write_instance(tmp_path, 5, 5, 2, 0.1, nsims=40)
    raw = yaml.safe_load(cfg.read_text())
    raw["sampler"]["thin"] = 10
    cfg.write_text(yaml.safe_dump(raw))
    simulate_tiny("--config", str(cfg))
    e, _ = rio.read_ensemble(tmp_path / "run")
    chains = e.chain[~e.reference]
    assert e.n_sims == 10 and set(np.unique(chains)) == {1, 2}
