import json
import subprocess
import sys

import pytest

from hybridclock.cli import main
from hybridclock.runner import (
    OUTPUT_ENV,
    SUMMARY_HEADER,
    ConfigError,
    ExperimentConfig,
    fringe_check,
    load_config,
    oracle_checks,
    parse_config,
    point_seed,
    run_experiment,
    simulate_grid,
)

SMALL = {
    "kind": "t-sweep",
    "grid": {"t_tilde": [0.05, 0.1], "n_atoms": [1000], "nu": [0, 1]},
    "trajectories": 3,
    "cycles": 400,
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    return path


def test_defaults(tmp_path):
    cfg = load_config(write(tmp_path, {"kind": "t-sweep"}))
    assert cfg.trajectories == 32 and cfg.cycles == 10000 and cfg.cycles_per_block == 10
    assert cfg.loop_mode == "open-loop-residual" and cfg.seed == 0
    assert cfg.points() == [("coherent-seeded", 0, 10000, 0.0, 0.1)]


def test_grid_product():
    cfg = parse_config(json.dumps(SMALL))
    assert len(cfg.points()) == 4


@pytest.mark.parametrize(
    "text, needle",
    [
        ('{"kind": "t-sweep", "grid": {"n_atoms": [-5]}}', "grid.n_atoms[0]"),
        ('{"kind": "t-sweep", "grid": {"t_tilde": [0.1, 0]}}', "grid.t_tilde[1]"),
        ('{"kind": "t-sweep", "grid": {"nu": [-1]}}', "grid.nu[0]"),
        ('{"kind": "t-sweep", "grid": {"mode": ["sideways"]}}', "grid.mode[0]"),
        ('{"kind": "orbit"}', "kind"),
        ('{"kind": "t-sweep", "colour": 1}', "colour"),
        ('{"kind": "t-sweep", "cycles": 10, "cycles_per_block": 10}', "cycles_per_block"),
        ('{"kind": "t-sweep",\n "trajectories": }', "line 2"),
        ('{"kind": "validate-oracle", "grid": {"n_atoms": [500]}}', "grid.n_atoms"),
    ],
)
def test_config_errors_name_the_field(text, needle):
    with pytest.raises(ConfigError, match=needle.replace("[", r"\[").replace("]", r"\]")):
        parse_config(text)


def test_duplicate_key_last_wins_with_warning():
    cfg = parse_config('{"kind": "t-sweep", "seed": 1, "seed": 5}')
    assert cfg.seed == 5
    assert any("seed" in w for w in cfg.warnings)


def test_point_seed_distinct_and_stable():
    a = point_seed(0, ("coherent-seeded", 1, 1000, 0.0, 0.1), 0)
    assert a == point_seed(0, ("coherent-seeded", 1, 1000, 0.0, 0.1), 0)
    assert a != point_seed(0, ("coherent-seeded", 1, 1000, 0.0, 0.1), 1)
    assert a != point_seed(1, ("coherent-seeded", 1, 1000, 0.0, 0.1), 0)


def test_threads_do_not_change_results():
    cfg = parse_config(json.dumps(SMALL))
    one = [r.point for r in simulate_grid(cfg, threads=1)]
    four = [r.point for r in simulate_grid(cfg, threads=4)]
    assert one == four


def _outputs(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.suffix == ".csv"}


def test_simulate_reproducible_bytes(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    runs = []
    for i in range(2):
        out = tmp_path / f"out{i}"
        cfgpath = write(tmp_path, {**SMALL, "output_dir": str(out)}, f"c{i}.json")
        assert main(["simulate", str(cfgpath)]) == 0
        runs.append(_outputs(out))
    assert runs[0] == runs[1]
    assert "summary.csv" in runs[0] and "analytic.csv" in runs[0]
    summary = runs[0]["summary.csv"].decode().splitlines()
    assert summary[0] == ",".join(SUMMARY_HEADER) and len(summary) == 5
    sims = [k for k in runs[0] if k.startswith("sim_")]
    assert len(sims) == 2
    assert runs[0][sims[0]].decode().splitlines()[0] == "t_tilde,inv_sigma2_tilde,std_error,n_traj,n_cycles"


def test_output_env_override(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv(OUTPUT_ENV, str(target))
    cfgpath = write(tmp_path, {**SMALL, "output_dir": str(tmp_path / "ignored")})
    assert main(["analytic", str(cfgpath)]) == 0
    assert (target / "analytic.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_duplicate_key_logged(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    out = tmp_path / "o"
    text = json.dumps({**SMALL, "output_dir": str(out)})[:-1] + ', "seed": 2, "seed": 3}'
    assert main(["analytic", str(write(tmp_path, text))]) == 0
    assert "WARNING" in (out / "run.log").read_text()


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = write(tmp_path, '{"kind": "t-sweep", "grid": {"n_atoms": [-3]}}')
    assert main(["simulate", str(path)]) == 2
    assert "grid.n_atoms[0]" in capsys.readouterr().err
    assert main(["simulate", str(tmp_path / "missing.json")]) == 2


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = ExperimentConfig(kind="t-sweep", output_dir=str(blocker / "sub"))
    with pytest.raises(ConfigError):
        run_experiment(cfg, "analytic")


def test_validate_oracle_command(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    cfg = write(tmp_path, {"kind": "validate-oracle", "grid": {"n_atoms": [60], "squeezing": [0.5]}})
    assert main(["validate-oracle", str(cfg)]) == 0
    assert (tmp_path / "oracle_checks.csv").exists()
    assert "jx2" in (tmp_path / "oracle_moments.csv").read_text()


def test_spectrum_check_command(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    cfg = write(tmp_path, {"kind": "spectrum-check", "spectrum": {"n_samples": 2**16, "seeds": 20}})
    assert main(["spectrum-check", str(cfg)]) == 0
    assert (tmp_path / "spectrum_checks.csv").exists()


def test_oracle_check_set():
    names = {c.name for c in oracle_checks(60, 0.5)}
    assert {"norm", "pmf_total", "jy_var", "jx_mean", "pmf_mean", "pmf_variance"} <= names
    assert fringe_check(0.3).passed


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hybridclock", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout


def test_default_samples_per_cycle():
    assert parse_config('{"kind": "n-sweep"}').samples_per_cycle == 64


def test_sql_slope_of_n_sweep():
    import numpy as np

    ns = [1000, 3162, 10000, 31623]
    cfg = parse_config(json.dumps({"kind": "n-sweep", "grid": {"n_atoms": ns}, "trajectories": 8, "cycles": 4000}))
    inv = [1 / r.point.sigma2_tilde for r in simulate_grid(cfg)]
    assert np.polyfit(np.log(ns), np.log(inv), 1)[0] == pytest.approx(1.0, abs=0.05)


def test_validate_oracle_squeezing_set(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    cfg = write(tmp_path, {"kind": "validate-oracle", "grid": {"n_atoms": [60], "squeezing": [0.3, 0.5, 1.0]}})
    assert main(["validate-oracle", str(cfg)]) == 0


def test_grid_order_does_not_change_points():
    forward = parse_config(json.dumps(SMALL))
    reverse = parse_config(json.dumps({**SMALL, "grid": {"t_tilde": [0.1, 0.05], "n_atoms": [1000], "nu": [1, 0]}}))
    a = {(r.nu, r.t_tilde): r.point for r in simulate_grid(forward)}
    b = {(r.nu, r.t_tilde): r.point for r in simulate_grid(reverse)}
    assert a == b


@pytest.mark.parametrize("name", ["t_sweep", "n_sweep", "feedback_noise", "oracle", "spectrum"])
def test_shipped_configs_load(name):
    from pathlib import Path

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / f"{name}.json")
    assert cfg.points()
