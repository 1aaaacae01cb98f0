"""End-to-end runs of every command-line verb in temporary directories."""
import numpy as np
import pytest
import yaml

import ctxnas.harness as harness
from ctxnas.cli import main
from ctxnas.oracles import write_portable

TASK = "syn1:0:d20"

SMALL = {
    "oracle": {"family_seed": 1},
    "search": {"n_meta": 2, "n_search_meta": 3, "n_search_adapt": 4,
               "candidates": 4},
    "encoder": {"latent_dim": 3, "hidden": [8, 8]},
    "controller": {"hidden": [8, 8]},
    "evaluator": {"hidden": [8, 8]},
}


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return str(path)


@pytest.fixture()
def bench_file(tmp_path):
    rng = np.random.default_rng(7)
    payload = rng.uniform(0.0, 100.0, size=(2, 15625, 14)).astype("<f4")
    path = tmp_path / "bench.ctb"
    write_portable(path, ["alpha", "beta"], ["a", "b", "c", "d", "e"], payload)
    return path


def lines(path):
    return path.read_text().splitlines()


def test_meta_train_then_adapt(tmp_path, cfg_file, capsys):
    meta = tmp_path / "meta"
    assert main(["meta-train", "--config", cfg_file, "--seed", "3",
                 "--out", str(meta)]) == 0
    assert "checkpoint written" in capsys.readouterr().out
    ckpt = meta / "checkpoint"
    assert ckpt.is_dir()

    adapt = tmp_path / "adapt"
    assert main(["adapt", "--config", cfg_file, "--seed", "4", "--task", TASK,
                 "--checkpoint", str(ckpt), "--budget", "6",
                 "--out", str(adapt)]) == 0
    out = capsys.readouterr().out
    assert "best architecture" in out and "reward=" in out
    assert len(lines(adapt / "metrics.csv")) == 7  # header + 6 evaluations


def test_adapt_budget_below_seed_count_fails(tmp_path, cfg_file, capsys):
    code = main(["adapt", "--config", cfg_file, "--task", TASK,
                 "--budget", "0", "--out", str(tmp_path / "run")])
    assert code == 2
    assert "seed networks" in capsys.readouterr().err


def test_sfs_mode_ignores_the_checkpoint(tmp_path, cfg_file):
    # from-scratch ablation must not read the checkpoint, even a broken path
    assert main(["adapt", "--config", cfg_file, "--task", TASK,
                 "--mode", "sfs", "--checkpoint", str(tmp_path / "missing"),
                 "--budget", "5", "--out", str(tmp_path / "run")]) == 0


def test_adapt_is_deterministic_via_cli(tmp_path, cfg_file):
    for name in ("a", "b"):
        assert main(["adapt", "--config", cfg_file, "--seed", "11",
                     "--task", TASK, "--budget", "6",
                     "--out", str(tmp_path / name)]) == 0
    for f in ("metrics.csv", "latents.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_baseline_verb_writes_trace(tmp_path, cfg_file, capsys):
    out = tmp_path / "rs"
    assert main(["baseline", "--config", cfg_file, "--algo", "random",
                 "--task", TASK, "--budget", "8", "--out", str(out)]) == 0
    assert "best reward" in capsys.readouterr().out
    assert len(lines(out / "metrics.csv")) == 9


def test_baseline_rea_accepts_its_knobs(tmp_path, cfg_file):
    assert main(["baseline", "--config", cfg_file, "--algo", "rea",
                 "--task", TASK, "--budget", "10", "--population", "4",
                 "--tournament", "2", "--out", str(tmp_path / "rea")]) == 0


def test_campaign_verb(tmp_path, cfg_file):
    out = tmp_path / "camp"
    assert main(["campaign", "--config", cfg_file, "--algo", "random",
                 "--task", TASK, "--trials", "3", "--budget", "6",
                 "--out", str(out)]) == 0
    assert (out / "summary.json").exists()
    assert (out / "sorted_final.csv").exists()


def test_campaign_verb_reports_failures(tmp_path, cfg_file, monkeypatch):
    original = harness.run_trial

    def flaky(cfg, manifest, trial, trial_dir):
        if trial == 0:
            raise RuntimeError("boom")
        return original(cfg, manifest, trial, trial_dir)

    monkeypatch.setattr(harness, "run_trial", flaky)
    code = main(["campaign", "--config", cfg_file, "--algo", "random",
                 "--task", TASK, "--trials", "3", "--budget", "6",
                 "--out", str(tmp_path / "camp")])
    assert code == 1
    assert (tmp_path / "camp" / "failures.csv").exists()


def test_compare_verb(tmp_path, cfg_file, capsys):
    for algo in ("random", "rea"):
        main(["campaign", "--config", cfg_file, "--algo", algo, "--task", TASK,
              "--trials", "2", "--budget", "8", "--population", "4",
              "--out", str(tmp_path / algo)])
    capsys.readouterr()
    table = tmp_path / "table.csv"
    assert main(["compare", str(tmp_path / "random"), str(tmp_path / "rea"),
                 "--ks", "2,4", "--out", str(table)]) == 0
    out = capsys.readouterr().out
    assert "oracle-max" in out and "best@2" in out
    assert lines(table)[0] == "algorithm,mode,trials,final_mean,final_std," \
                              "final_median,best@2,best@4"
    assert len(lines(table)) == 4  # header, two algorithms, oracle ceiling

    assert main(["compare", str(tmp_path / "random"), "--no-oracle-row"]) == 0
    assert "oracle-max" not in capsys.readouterr().out


def test_ingest_check_accepts_a_valid_file(bench_file, capsys):
    assert main(["ingest-check", str(bench_file)]) == 0
    out = capsys.readouterr().out
    assert "OK: 2 datasets, 15625 architectures, 12 epochs per curve" in out
    assert "alpha: max final val acc" in out


def test_ingest_check_rejects_corruption(bench_file, capsys):
    raw = bytearray(bench_file.read_bytes())
    raw[-5] ^= 0xFF
    bench_file.write_bytes(bytes(raw))
    assert main(["ingest-check", str(bench_file)]) == 1
    assert "FAIL" in capsys.readouterr().err


def test_oracle_file_shortcut_selects_the_tabular_oracle(tmp_path, bench_file, capsys):
    out = tmp_path / "rs"
    assert main(["baseline", "--oracle-file", str(bench_file),
                 "--algo", "random", "--task", "alpha", "--budget", "5",
                 "--out", str(out)]) == 0
    assert "best reward" in capsys.readouterr().out
    assert len(lines(out / "metrics.csv")) == 6


def test_verb_is_required():
    with pytest.raises(SystemExit):
        main([])
