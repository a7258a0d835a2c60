import json

import numpy as np
import pytest

from wcr.cli import (EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, ConfigError, load_config, main,
                     preset_names)
from wcr.levy_sim import SnapshotDataset
from wcr.model_eval import FitReport

SMALL = {
    "name": "small",
    "dim": 1,
    "alpha": 1.5,
    "model": {"drift_basis": {"kind": "poly", "degree": 3}, "drift": [[0, 1, 0, -1]],
              "sigma": [1], "xi": [1]},
    "dataset": {"n": 600, "times": {"start": 0.0, "stop": 0.4, "step": 0.1}, "dt": 0.01,
                "seed": 3, "sampler": {"bounding": "clip", "radius": 30}},
    "fit": {"t_min": 0.1, "t_max": 0.3, "kernels": {"M": 12, "groups": [{"width": 0.5}]}},
    "evaluate": {"times": [0.4]},
}


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_presets_cover_experiments():
    names = set(preset_names())
    need = {"paper-1d-a", "paper-1d-b", "paper-1d-c", "paper-2d-independent", "paper-2d-mixed",
            "paper-2d-sombrero", "paper-3d-sombrero", "paper-5d-independent", "paper-5d-coupled",
            "paper-trig", "paper-gbm", "paper-gbm-levy", "mixed-width-a", "mixed-width-b",
            "zero-noise"}
    need |= {f"nonpoly-order-{k}" for k in range(6, 11)}
    need |= {f"robust-{k}-{p}" for k in ("additive", "multiplicative") for p in (0, 5, 10, 20)}
    assert need <= names
    for n in names:
        cfg = load_config(n)
        assert cfg.truth is not None and cfg.fit_layout.size > 0


def test_preset_1d_c_protocol():
    cfg = load_config("paper-1d-c")
    assert cfg.dataset["n"] == 10000
    from wcr.cli import _times
    assert np.allclose(_times(cfg.dataset["times"]), np.arange(19) * 0.1)


def test_simulate_is_byte_identical(tmp_path, small_cfg):
    assert main(["simulate", small_cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["simulate", small_cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert main(["simulate", small_cfg, "--out", str(tmp_path / "c"), "--threads", "3"]) == EXIT_OK
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


def test_seed_flag_and_env(tmp_path, small_cfg, monkeypatch):
    main(["simulate", small_cfg, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("WCR_SEED", "99")
    main(["simulate", small_cfg, "--out", str(tmp_path / "b")])
    main(["simulate", small_cfg, "--out", str(tmp_path / "c"), "--seed", "99"])
    a, b, c = ((tmp_path / f"{k}.csv").read_bytes() for k in "abc")
    assert a != b and b == c
    monkeypatch.setenv("WCR_SEED", "x")
    assert main(["simulate", small_cfg, "--out", str(tmp_path / "d")]) == EXIT_USAGE


def test_zero_noise_preset_is_deterministic_flow(tmp_path):
    assert main(["simulate", "zero-noise", "--out", str(tmp_path / "z")]) == EXIT_OK
    ds = SnapshotDataset.load(tmp_path / "z")
    x0 = ds.snapshots[0][:, 0]
    for l, t in enumerate(ds.times):
        # closed-form flow of x' = x - x^3
        exact = x0 * np.exp(t) / np.sqrt(1 + x0**2 * (np.exp(2 * t) - 1))
        assert np.max(np.abs(ds.snapshots[l][:, 0] - exact)) < 2e-3


def test_fit_and_evaluate_pipeline(tmp_path, small_cfg, capsys):
    stem = tmp_path / "d"
    assert main(["simulate", small_cfg, "--out", str(stem)]) == EXIT_OK
    rep_path = tmp_path / "rep.json"
    assert main(["fit", small_cfg, "--data", str(stem), "--out", str(rep_path)]) == EXIT_OK
    rep = FitReport.load(rep_path)
    assert rep.extra["train_times"] == [0.1, 0.2, 0.3]
    assert rep.mre is not None and rep.residual is not None
    again = tmp_path / "rep2.json"
    main(["fit", small_cfg, "--data", str(stem), "--out", str(again)])
    a, b = json.loads(rep_path.read_text()), json.loads(again.read_text())
    assert a["zeta"] == b["zeta"]
    out = tmp_path / "ev"
    assert main(["evaluate", str(rep_path), "--config", small_cfg, "--data", str(stem),
                 "--out", str(out)]) == EXIT_OK
    metrics = json.loads((out / "metrics.json").read_text())
    assert len(metrics["wd1"]) == 1 and len(metrics["wd1_noise_floor"]) == 1
    assert (out / "hist_t0.4_x1.csv").exists()
    # times absent from the dataset are simulated from the truth model
    assert main(["evaluate", str(rep_path), "--config", small_cfg, "--data", str(stem),
                 "--out", str(out), "--times", "0.45"]) == EXIT_OK


def test_reproduce_and_sweep(tmp_path, small_cfg, capsys):
    assert main(["reproduce", small_cfg, "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "r" / "report.json").exists() and (tmp_path / "r" / "metrics.json").exists()
    assert main(["sweep", small_cfg, "--taus", "0", "0.1"]) == EXIT_OK
    assert "tau 0.1" in capsys.readouterr().out


def test_usage_errors(tmp_path, small_cfg):
    assert main(["simulate", "no-such-preset"]) == EXIT_USAGE
    assert main(["evaluate", str(tmp_path / "missing.json")]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 1,\n "model": }')
    assert main(["simulate", str(bad)]) == EXIT_USAGE
    with pytest.raises(ConfigError, match="line 2"):
        load_config(str(bad))


def test_empty_snapshot_is_a_clean_error(tmp_path, small_cfg):
    meta = {"dim": 1, "times": [0.1, 0.2], "counts": [2, 0], "alpha": 1.5, "seed": 0}
    (tmp_path / "e.json").write_text(json.dumps(meta))
    (tmp_path / "e.csv").write_text("snapshot_index,x1\n0,0.1\n0,0.2\n")
    assert main(["fit", small_cfg, "--data", str(tmp_path / "e")]) == EXIT_USAGE


def test_dimension_mismatch(tmp_path, small_cfg):
    ds = SnapshotDataset([0.1, 0.2, 0.3], [np.zeros((4, 2))] * 3)
    ds.save(tmp_path / "two")
    assert main(["fit", small_cfg, "--data", str(tmp_path / "two")]) == EXIT_USAGE


def test_numerical_failure_exit_code(tmp_path):
    cfg = json.loads(json.dumps(SMALL))
    cfg["model"]["drift"] = [[0, 0, 0, 50.0]]
    cfg["dataset"]["init_mean"] = 5.0
    path = tmp_path / "blow.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", str(path), "--out", str(tmp_path / "x")]) == EXIT_NUMERICAL
