"""Command-line surface: config parsing, subcommands, exit codes."""

import json
import warnings

import numpy as np
import pytest

from drol.cli import build_env, main, parse_config_file
from drol.oracles import interval_distortion


def _write_config(path, **overrides):
    base = dict(
        env="bandit3", k=4, alpha=0.5, steps=120, batch_size=64,
        actor_hidden="16,16", critic_hidden="16,16", n_critics=2,
        lr="1e-3", metrics_interval=60, seed=0, dataset_size=1500,
    )
    base.update(overrides)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def test_parse_config_file_coercion(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# a comment line\n"
        "k = 8\n"
        "alpha = 0.25  # trailing comment\n"
        "actor_hidden = 32, 32\n"
        "env_weights = 0.0, 1.0\n"
        "actor_mode = pointwise\n"
        "d_z = none\n"
        "\n"
    )
    values = parse_config_file(cfg)
    assert values["k"] == 8
    assert values["alpha"] == 0.25
    assert values["actor_hidden"] == (32, 32)
    assert values["env_weights"] == (0.0, 1.0)
    assert values["actor_mode"] == "pointwise"
    assert values["d_z"] is None


def test_parse_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warp_speed = 9\n")
    with pytest.raises(KeyError):
        parse_config_file(cfg)


def test_parse_config_rejects_bare_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("just words\n")
    with pytest.raises(ValueError):
        parse_config_file(cfg)


def test_build_env_presets_and_overrides():
    env = build_env({"env": "bandit3"})
    assert env.n_modes == 3
    np.testing.assert_allclose(env.centers, [-1.5, 0.0, 1.5])
    env = build_env({"env": "bandit3", "env_gap": 2.0})
    np.testing.assert_allclose(env.centers, [-2.0, 0.0, 2.0])
    env = build_env({"env": "grid_nav", "env_width": 3.0})
    assert env.kind == "grid_nav"
    assert env.width == 3.0
    with pytest.raises(ValueError):
        build_env({"env": "mystery"})


def test_train_command_writes_artifacts(tmp_path):
    cfg = _write_config(tmp_path / "run.cfg")
    out = tmp_path / "out"
    code = main(["train", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    assert (out / "metrics.csv").exists()
    assert (out / "checkpoint.bin").exists()
    resolved = (out / "config_resolved.txt").read_text()
    assert "k = 4" in resolved
    header, *rows = (out / "metrics.csv").read_text().splitlines()
    assert header.startswith("step,bc_loss")
    assert len(rows) == 2  # steps 60 and 120


def test_train_reruns_are_byte_identical(tmp_path):
    cfg = _write_config(tmp_path / "run.cfg")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert main(["train", "--config", str(cfg), "--out", str(out_b)]) == 0
    assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
    assert (out_a / "checkpoint.bin").read_bytes() == (out_b / "checkpoint.bin").read_bytes()


def test_flags_override_config(tmp_path):
    cfg = _write_config(tmp_path / "run.cfg", steps=60)
    out = tmp_path / "out"
    code = main([
        "train", "--config", str(cfg), "--out", str(out),
        "--k", "2", "--seed", "9", "--actor-mode", "pointwise",
    ])
    assert code == 0
    resolved = (out / "config_resolved.txt").read_text()
    assert "k = 2" in resolved
    assert "seed = 9" in resolved
    assert "actor_mode = pointwise" in resolved


def test_halted_run_exits_nonzero(tmp_path):
    cfg = _write_config(
        tmp_path / "run.cfg", lr="1e200", alpha=0, n_critics=0,
        steps=40, dataset_size=300,
    )
    out = tmp_path / "out"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        code = main(["train", "--config", str(cfg), "--out", str(out)])
    assert code == 1
    assert (out / "divergence.json").exists()
    assert (out / "checkpoint_lastgood.bin").exists()


def test_sweep_command(tmp_path):
    cfg = _write_config(tmp_path / "run.cfg", steps=40, metrics_interval=40,
                        dataset_size=600)
    out = tmp_path / "out"
    code = main([
        "sweep", "--config", str(cfg), "--out", str(out),
        "--k-list", "1,2", "--seeds", "0",
    ])
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("k,seed,status")


def test_oracle_command_tables(tmp_path):
    out = tmp_path / "out"
    code = main(["oracle", "--out", str(out)])
    assert code == 0
    for name in ("quantizer.csv", "per_interval.csv", "coverage.csv",
                 "tether.csv"):
        assert (out / name).exists()
    for line in (out / "quantizer.csv").read_text().splitlines()[1:]:
        m, k, _, alloc, distortion, quadrature = line.split(",")
        if m == k:
            assert alloc == "|".join(["1"] * int(m))
            np.testing.assert_allclose(
                float(distortion), interval_distortion(1, 0.3), rtol=1e-12
            )
        np.testing.assert_allclose(
            float(quadrature), float(distortion), rtol=2e-4
        )


def test_trace_command(tmp_path):
    cfg = _write_config(tmp_path / "run.cfg", steps=100, dataset_size=800)
    out = tmp_path / "out"
    code = main(["trace", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    trace = json.loads((out / "trace.json").read_text())
    assert trace["k"] == 4
    assert trace["steps"][0] == 0
    assert trace["steps"][-1] == 100
    assert len(trace["winners"]) == len(trace["steps"])
    assert trace["handoff_events"] >= 0
    assert len(trace["actions"]) == 32


def test_missing_out_flag_is_an_error():
    with pytest.raises(SystemExit):
        main(["train"])


def test_unknown_command_is_an_error():
    with pytest.raises(SystemExit):
        main(["frobnicate", "--out", "x"])
