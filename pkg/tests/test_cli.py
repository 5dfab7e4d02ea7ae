import csv
import json
import shutil

import pytest

from scenecluster.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from scenecluster.pipeline import (
    ConfigError,
    archetype_schedule,
    config_from_dict,
    file_sha256,
    load_config,
    meta_path,
)
from scenecluster.scene_model import Archetype, load_lane_map, load_tracks, project_to_lanes
from scenecluster.scene_model.synthetic import successor_chains

SMALL = {
    "seed": 42,
    "synthetic": {"count": 100},
    "train": {"epochs": 20, "batch_size": 32},
    "sweep": {"scenes": 5},
}

CORE_ARTIFACTS = ["graphs.jsonl", "checkpoint.json", "emb.csv", "labels.csv"]


def write_config(directory, data):
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "pipeline.json"
    path.write_text(json.dumps(data))
    return path


def digest(workdir):
    return {p.name: file_sha256(p) for p in sorted(workdir.iterdir()) if not p.name.endswith(".meta.json")}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = write_config(root, SMALL)
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    return cfg, root / "work"


def test_run_produces_artifacts(small_run):
    _, work = small_run
    for name in CORE_ARTIFACTS + ["scenes.jsonl", "augmented.jsonl", "history.csv", "sweep.csv", "stats.csv",
                                  "cars_plot.svg", "sweep_plot.svg", "kdist.csv", "archetypes.csv", "map.json"]:
        assert (work / name).exists(), name


def test_rerun_skips_and_keeps_hashes(small_run, capsys):
    cfg, work = small_run
    before = digest(work)
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    assert "nothing (all up to date)" in capsys.readouterr().out
    assert digest(work) == before


def test_forced_rerun_is_bit_identical(small_run, tmp_path):
    cfg, work = small_run
    other = write_config(tmp_path, SMALL)
    assert main(["run", "--config", str(other)]) == EXIT_OK
    fresh = digest(tmp_path / "work")
    original = digest(work)
    for name in CORE_ARTIFACTS + ["sweep.csv", "history.csv"]:
        assert fresh[name] == original[name], name


def test_meta_records_provenance(small_run):
    _, work = small_run
    meta = json.loads((work / "train.meta.json").read_text())
    assert meta["seed"] == 42
    assert meta["stage"] == "train"
    assert len(meta["config_hash"]) == 64
    assert meta["inputs"]["graphs"]["sha256"] == file_sha256(work / "graphs.jsonl")
    assert meta["outputs"]["checkpoint"]["sha256"] == file_sha256(work / "checkpoint.json")
    assert "version" in meta and "rng" in meta


def test_stage_replay_reproduces_output(small_run, tmp_path):
    cfg, work = small_run
    copy = tmp_path / "work"
    shutil.copytree(work, copy)
    before = file_sha256(copy / "emb.csv")
    inputs = {k: file_sha256(copy / k) for k in ("checkpoint.json", "graphs.jsonl")}
    assert main(["embed", "--config", str(cfg), "--workdir", str(copy), "--force"]) == EXIT_OK
    assert file_sha256(copy / "emb.csv") == before
    # stages never rewrite their inputs
    assert inputs == {k: file_sha256(copy / k) for k in inputs}


def test_config_change_reruns_stage(small_run, tmp_path, capsys):
    _, work = small_run
    copy = tmp_path / "work"
    shutil.copytree(work, copy)
    changed = write_config(tmp_path, {**SMALL, "cluster": {"eps": 0.3}, "paths": {"workdir": "work"}})
    assert main(["cluster", "--config", str(changed)]) == EXIT_OK
    assert json.loads(meta_path(load_config(changed), "cluster").read_text())["summary"]["eps"] == 0.3
    capsys.readouterr()
    assert main(["cluster", "--config", str(changed)]) == EXIT_OK
    assert "cluster: up to date" in capsys.readouterr().out


def test_corrupt_map_names_build_graphs(small_run, tmp_path, capsys):
    cfg, work = small_run
    copy = tmp_path / "work"
    shutil.copytree(work, copy)
    bad = tmp_path / "bad_map.json"
    bad.write_text("{ not json")
    code = main(["build-graphs", "--config", str(cfg), "--workdir", str(copy), "--map", str(bad), "--force"])
    assert code == EXIT_STAGE
    assert "build-graphs" in capsys.readouterr().err


def test_suggest_eps(small_run, capsys):
    cfg, _ = small_run
    assert main(["cluster", "--config", str(cfg), "--suggest-eps"]) == EXIT_OK
    assert "suggested eps" in capsys.readouterr().out


def test_gradcheck_command(tmp_path):
    cfg = write_config(tmp_path, {"seed": 1, "gradcheck": {"instances": 3}})
    assert main(["gradcheck", "--config", str(cfg)]) == EXIT_OK
    report = json.loads((tmp_path / "work" / "gradcheck.json").read_text())
    assert len(report["errors"]) == 3 and report["max_relative_error"] < 1e-4


# ---------------------------------------------------------------- synth

def test_synth_four_scenes(tmp_path):
    cfg = write_config(tmp_path, {"synthetic": {"count": 4}})
    assert main(["synth", "--config", str(cfg)]) == EXIT_OK
    with open(tmp_path / "work" / "archetypes.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert sorted(r["archetype"] for r in rows) == sorted(a.value for a in Archetype)
    assert len(load_tracks(tmp_path / "work" / "tracks.csv")) == 4


def test_synth_same_seed_same_files(tmp_path):
    for d in ("a", "b"):
        cfg = write_config(tmp_path / d, {"seed": 5, "synthetic": {"count": 12}})
        assert main(["synth", "--config", str(cfg)]) == EXIT_OK
    for name in ("tracks.csv", "archetypes.csv", "map.json"):
        assert file_sha256(tmp_path / "a" / "work" / name) == file_sha256(tmp_path / "b" / "work" / name)


def test_synth_jam_chain_on_successor_chain(tmp_path):
    cfg = write_config(tmp_path, {"synthetic": {"count": 8, "mix": {"JamChain": 1.0}}})
    assert main(["synth", "--config", str(cfg)]) == EXIT_OK
    lane_map = load_lane_map(tmp_path / "work" / "map.json")
    chains = [set(c) for c in successor_chains(lane_map)]
    for s in load_tracks(tmp_path / "work" / "tracks.csv"):
        assert len(s) >= 5
        lanes = {project_to_lanes(e, lane_map)[0][0].lane_id for e in s.entities}
        assert any(lanes <= c for c in chains)


def test_archetype_schedule():
    equal = archetype_schedule({a.value: 1 for a in Archetype}, 8)
    assert equal == list(Archetype) * 2
    skewed = archetype_schedule({"JamChain": 3, "Sparse": 1}, 8)
    assert skewed.count(Archetype.JamChain) == 6 and skewed.count(Archetype.Sparse) == 2


# ---------------------------------------------------------------- config errors

@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"train": {"epochs": -1}},
    {"train": {"epoch": 3}},
    {"augment": {"p_entity": 2}},
    {"cluster": {"eps": 0}},
    {"synthetic": {"mix": {"Nope": 1}}},
    {"seed": "x"},
    [1, 2],
])
def test_config_errors_exit_2(tmp_path, data):
    cfg = write_config(tmp_path, data)
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG


def test_missing_and_invalid_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG


def test_missing_input_is_stage_failure(tmp_path, capsys):
    cfg = write_config(tmp_path, {})
    assert main(["train", "--config", str(cfg)]) == EXIT_STAGE
    assert "stage train failed" in capsys.readouterr().err


def test_seed_precedence(tmp_path):
    cfg = config_from_dict({"seed": 3, "train": {"seed": 9}}, tmp_path)
    assert (cfg.seed, cfg.train.seed, cfg.augment.rng_seed) == (3, 9, 3)
    cfg = config_from_dict({"seed": 3}, tmp_path, seed=11)
    assert (cfg.train.seed, cfg.augment.rng_seed) == (11, 11)


def test_relative_paths_resolve_against_config_dir(tmp_path):
    cfg = config_from_dict({"paths": {"workdir": "out", "map": "m.json"}}, tmp_path)
    assert cfg.workdir == tmp_path / "out"
    assert cfg.path("map") == tmp_path / "m.json"
    assert cfg.path("graphs") == tmp_path / "out" / "graphs.jsonl"
    with pytest.raises(ConfigError):
        config_from_dict({"paths": {"nope": "x"}}, tmp_path)
