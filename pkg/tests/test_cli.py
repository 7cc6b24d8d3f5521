import csv
import json
import shutil
import subprocess
import sys

import pytest

import matpg.evolution as evolution
from matpg.cli import (
    build_parser,
    discover,
    directional_claims,
    env_check,
    latest_checkpoint,
    load_config_file,
    main,
    resolve_specs,
    ConfigFileError,
)

SMALL = {
    "tasks": [0, 1],
    "generations": 4,
    "agents": 12,
    "checkpoint_every": 2,
    "evolution": {
        "train_episodes_per_task": 1,
        "valid_episodes_per_task": 2,
        "validation_frequency": 2,
        "mutation": {"init_program_size": 3},
    },
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL, indent=2))
    return path


def train(config, out, *extra):
    return main(["train", "--config", str(config), "--out", str(out), *extra])


def run_dir(out, algo="matpg", selection="lexicase", tasks="0-1", seed=7):
    return out / f"{algo}_{selection}" / tasks / str(seed)


def test_train_writes_seed_scoped_outputs(config, tmp_path, capsys):
    out = tmp_path / "res"
    assert train(config, out, "--algo", "matpg", "--selection", "lexicase", "--seed", "7") == 0
    d = run_dir(out)
    assert capsys.readouterr().out.strip() == str(d)
    for name in ("manifest.json", "stats.csv", "validation.csv", "checkpoints/last.json",
                 "champion/agent.dot", "champion/programs.txt", "champion/agent.json"):
        assert (d / name).exists(), name
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["tasks"] == [0, 1]
    assert manifest["config"]["evolution"]["n_agents"] == 12
    assert manifest["config"]["evolution"]["selection"]["method"] == "lexicase"
    assert len(manifest["engine_hash"]) == 40


def test_rerun_gives_identical_files(config, tmp_path):
    out = tmp_path / "res"
    train(config, out, "--seed", "7")
    first = {p.name: p.read_bytes() for p in run_dir(out).glob("*.csv")}
    train(config, out, "--seed", "7", "--workers", "2")
    assert first == {p.name: p.read_bytes() for p in run_dir(out).glob("*.csv")}


def test_precedence_flag_over_file_over_default(config):
    args = build_parser().parse_args(["train", "--config", str(config), "--agents", "30"])
    spec, = resolve_specs(args)
    assert spec.evolution.n_agents == 30
    assert spec.evolution.n_generations == 4
    assert spec.evolution.valid_episodes_per_task == 2
    assert spec.evolution.selection.elite_proportion == 0.05
    assert spec.tasks == [0, 1] and spec.seed == 0


def test_algo_sets_population_split(config):
    for algo, n_maple in (("maple", 12), ("matpg", 8)):
        args = build_parser().parse_args(["train", "--config", str(config), "--algo", algo])
        spec, = resolve_specs(args)
        assert spec.evolution.n_maple == n_maple


def test_seeds_flag_expands(config):
    args = build_parser().parse_args(["train", "--config", str(config), "--seeds", "3,4,5"])
    assert [s.seed for s in resolve_specs(args)] == [3, 4, 5]


def test_config_errors_are_line_anchored(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "tasks": [0, 1],\n  "evolution": {\n    "n_agnets": 5\n  }\n}\n')
    with pytest.raises(ConfigFileError, match=r"bad.json:4: .*n_agnets"):
        load_config_file(bad)
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "bad.json:4" in capsys.readouterr().err

    bad.write_text('{\n  "tasks": [0, 1],\n  "colour": 1\n}\n')
    with pytest.raises(ConfigFileError, match=r"bad.json:3: unknown key 'colour'"):
        load_config_file(bad)
    bad.write_text('{\n  "tasks": [0, 1]\n  "seed": 1\n}\n')
    with pytest.raises(ConfigFileError, match=r"bad.json:3:"):
        load_config_file(bad)
    bad.write_text('{\n  "environment": {\n    "center_interval": [0.9, 0.1]\n  }\n}\n')
    with pytest.raises(ConfigFileError, match=r"bad.json:3:"):
        load_config_file(bad)


def test_bad_task_ids_exit_nonzero(config, tmp_path, capsys):
    assert train(config, tmp_path, "--tasks", "0,9") == 2
    assert "unknown task id 9" in capsys.readouterr().err


def test_resume_after_interrupt_matches_full_run(config, tmp_path, monkeypatch):
    full, part = tmp_path / "full", tmp_path / "part"
    assert train(config, full, "--seed", "7") == 0
    original = evolution.run_generation
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise KeyboardInterrupt
        return original(*args, **kwargs)

    monkeypatch.setattr(evolution, "run_generation", flaky)
    assert train(config, part, "--seed", "7") == 130
    assert latest_checkpoint(run_dir(part)).name == "gen_00002.json"
    monkeypatch.setattr(evolution, "run_generation", original)
    assert train(config, part, "--seed", "7", "--resume") == 0
    for name in ("stats.csv", "validation.csv", "checkpoints/last.json", "champion/programs.txt"):
        assert (run_dir(full) / name).read_bytes() == (run_dir(part) / name).read_bytes(), name


def test_resume_rejects_changed_config(config, tmp_path, capsys):
    train(config, tmp_path, "--seed", "7")
    assert train(config, tmp_path, "--seed", "7", "--agents", "15", "--resume") == 2
    assert "different config" in capsys.readouterr().err


def test_export_is_deterministic(config, tmp_path):
    out = tmp_path / "res"
    train(config, out, "--seed", "7")
    ckpt = run_dir(out) / "checkpoints" / "last.json"
    for name in ("a", "b"):
        assert main(["export", str(ckpt), "--out", str(tmp_path / name)]) == 0
    for f in ("agent.dot", "programs.txt", "agent.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert (tmp_path / "a" / "programs.txt").read_bytes() == \
        (run_dir(out) / "champion" / "programs.txt").read_bytes()


def test_export_of_maple_champion(config, tmp_path):
    out = tmp_path / "res"
    train(config, out, "--algo", "maple", "--seed", "7")
    d = run_dir(out, algo="maple")
    dot = (d / "champion" / "agent.dot").read_text()
    listing = (d / "champion" / "programs.txt").read_text()
    assert "shape=box" not in dot and dot.count("shape=ellipse") == 1
    programs = [l for l in listing.splitlines() if l.startswith("p")]
    assert len(programs) == dot.count("A0 -> A0")


def test_export_of_fresh_random_root(config, tmp_path):
    from matpg.evolution import EvolutionConfig, init_state, save_checkpoint

    state = init_state(EvolutionConfig(n_agents=6, mutation={"init_program_size": 4}), 6, 2)
    ckpt = save_checkpoint(state, tmp_path / "fresh.json")
    root = state.matpg[0]
    assert main(["export", str(ckpt), "--root", str(root), "--out", str(tmp_path / "x"), "--exact"]) == 0
    assert (tmp_path / "x" / "agent.dot").read_text().startswith("digraph")
    assert main(["export", str(ckpt), "--root", "99999", "--out", str(tmp_path / "y")]) == 2


def test_corrupt_checkpoint_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "store": ')
    assert main(["export", str(bad)]) == 2
    assert main(["validate", str(bad)]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_validate_writes_report(config, tmp_path):
    out = tmp_path / "res"
    train(config, out, "--seed", "7")
    assert main(["validate", str(run_dir(out))]) == 0
    report = json.loads((run_dir(out) / "champion" / "validation.json").read_text())
    assert set(report["tasks"]) == {"REACH", "BRAKE"}
    rows = list(csv.DictReader((run_dir(out) / "validation.csv").open()))
    final = {r["task"]: r for r in rows if int(r["gen"]) == report["generation"]}
    assert float(final["combined"]["champion_score"]) == report["combined"]


def test_analyze_two_configs(config, tmp_path, capsys):
    out = tmp_path / "res"
    for selection in ("lexicase", "tournament"):
        train(config, out, "--selection", selection, "--seeds", "1,2,3")
    capsys.readouterr()
    assert main(["analyze", str(out)]) == 0
    text = capsys.readouterr().out
    assert "alpha_corr=0.05" in text and "matpg_tournament" in text
    rows = list(csv.DictReader((out / "significance.csv").open()))
    assert len(rows) == 1 and rows[0]["config"] == "matpg_tournament"
    for name in ("difficulty.csv", "final_scores.csv", "analysis.txt"):
        assert (out / name).exists()


def test_analyze_identical_sets_give_zero_effect(config, tmp_path):
    out = tmp_path / "res"
    train(config, out, "--seeds", "1,2")
    shutil.copytree(out / "matpg_lexicase", out / "maple_lexicase")
    assert main(["analyze", str(out)]) == 0
    row, = csv.DictReader((out / "significance.csv").open())
    assert float(row["d"]) == 0.0 and float(row["p"]) == 1.0 and row["significant"] == "no"


def test_analyze_four_configs_and_gaps(config, tmp_path):
    out = tmp_path / "res"
    train(config, out, "--seeds", "1,2")
    base = out / "matpg_lexicase"
    for name in ("matpg_tournament", "maple_lexicase", "maple_tournament"):
        shutil.copytree(base, out / name)
    shutil.rmtree(out / "maple_tournament" / "0-1" / "2")
    assert main(["analyze", str(out)]) == 0
    rows = list(csv.DictReader((out / "significance.csv").open()))
    assert len(rows) == 2  # maple_tournament has a single seed left
    assert all(float(r["alpha_corr"]) == pytest.approx(0.05 / 3) for r in rows)
    text = (out / "analysis.txt").read_text()
    assert "missing run maple_tournament/0-1/2" in text
    assert "fewer than two seeds" in text


def test_analyze_without_runs(tmp_path, capsys):
    assert main(["analyze", str(tmp_path)]) == 1
    assert main(["analyze", str(tmp_path / "nope")]) == 2


def test_directional_claims_counts(config, tmp_path):
    out = tmp_path / "res"
    train(config, out, "--seeds", "1,2")
    shutil.copytree(out / "matpg_lexicase", out / "maple_tournament")
    shutil.copytree(out / "matpg_lexicase", out / "matpg_tournament")
    claims = directional_claims(discover(out), "0-1")
    assert claims.seeds == ["1", "2"] and claims.wins == 2
    assert claims.dominated == 0 and set(claims.task_medians) == {"REACH", "BRAKE"}


def test_env_check_smoke():
    res = env_check([0, 4], [0], n_agents=12, n_generations=3, episodes=2,
                    evo={"mutation": {"init_program_size": 3}, "validation_frequency": 10})
    assert res.raw.shape == (2, 2) and len(res.difficulty) == 2
    assert all(res.normalized[i, i] == 1.0 for i in range(2) if res.raw[i, i] != 0)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "matpg", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "env-check" in proc.stdout
