import yaml

from wasep.cli import main
from wasep.harness import ExperimentConfig, save_experiment_config


def test_rates_validate(capsys):
    assert main(["rates", "validate", "--preset", "beta_env", "--beta", "0.2"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out


def test_rates_validate_on_small_torus(capsys):
    assert main(["rates", "validate", "--preset", "beta_env", "--n", "3"]) == 0


def test_coeffs(capsys):
    assert main(["coeffs", "--preset", "ssep", "--grid", "5"]) == 0
    out = capsys.readouterr().out
    assert "alpha0 = 0.5" in out
    assert "einstein relation" in out


def test_adjoint_check(capsys):
    assert main(["adjoint", "check", "--preset", "beta_env", "--n", "4"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_adjoint_residual_csv(tmp_path, capsys):
    out = tmp_path / "resid.csv"
    code = main(
        [
            "adjoint", "residual", "--preset", "ssep",
            "--n-list", "16,32", "--times", "0,0.01", "--mesh", "64",
            "--out", str(out),
        ]
    )
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "n,t,max_residual,bound"
    assert len(lines) == 1 + 2 * 2


def test_pde_solve_writes_trajectory(tmp_path):
    out = tmp_path / "traj.csv"
    code = main(
        [
            "pde", "solve", "--kind", "burgers", "--preset", "ssep",
            "--n", "32", "--times", "0.01", "--out", str(out),
        ]
    )
    assert code == 0
    assert out.read_text().startswith("t,site,value")


def test_exact_check(capsys):
    assert main(["exact", "check", "--preset", "ssep", "--n", "4"]) == 0
    out = capsys.readouterr().out
    assert out.count("[ok]") >= 5
    assert "=> PASS" in out


def test_scaling_report(capsys):
    assert main(["scaling", "--d", "1", "--n", "128", "--eps-rule", "n_pow:-0.4"]) == 0
    assert main(["scaling", "--d", "1", "--n", "128", "--eps-rule", "n_pow:-0.2"]) == 1


def test_simulate_command(tmp_path):
    config = {
        "spec": {"preset": "ssep", "d": 1},
        "n": 16,
        "d": 1,
        "epsilon_rule": "n_pow:-0.5",
        "initial_profile": {"alpha": 0.5, "v0": {"name": "cos_k", "k": 1}},
        "snapshot_times": [0.01],
        "replicas": 3,
        "seed": 4,
    }
    cfg_path = tmp_path / "sim.yaml"
    cfg_path.write_text(yaml.safe_dump(config))
    outdir = tmp_path / "simout"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(outdir)]) == 0
    snapshots = (outdir / "snapshots.csv").read_text().strip().splitlines()
    assert snapshots[0] == "replica,t,site,occupancy"
    assert len(snapshots) == 1 + 3 * 1 * 16
    assert (outdir / "mean_occupancy.csv").exists()


def test_experiment_run_and_report(tmp_path, capsys):
    config = ExperimentConfig(
        spec={"preset": "ssep", "d": 1},
        n=16,
        d=1,
        epsilon_rule="n_pow:-0.5",
        v0={"name": "cos_k", "k": 1, "amplitude": 1.0},
        snapshot_times=(0.01,),
        replicas=30,
        seed=3,
        allow_marginal_scaling=True,
        burgers_mesh=64,
        test_functions=({"name": "const", "value": 1.0},),
    )
    cfg_path = tmp_path / "exp.yaml"
    save_experiment_config(config, cfg_path)
    outdir = tmp_path / "expout"
    assert main(["experiment", "run", "--config", str(cfg_path), "--out", str(outdir)]) == 0
    assert (outdir / "manifest.yaml").exists()
    capsys.readouterr()
    assert main(["experiment", "report", "--run", str(outdir), "--sigmas", "4.0"]) == 0
    assert "PASS" in capsys.readouterr().out
