import contextlib
import io
import json
from pathlib import Path

import pytest

from hedonia import cli


def run(*argv, env_out=None):
    """Call the CLI in-process; returns (exit code, run directory or None)."""
    out = io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
        try:
            code = cli.main([str(a) for a in argv])
        except SystemExit as exc:  # argparse usage errors
            code = exc.code
    text = out.getvalue().strip()
    return code, Path(text) if text else None


def tree_bytes(d: Path, skip=("run.json",)):
    return {str(p.relative_to(d)): p.read_bytes()
            for p in sorted(d.rglob("*")) if p.is_file() and p.name not in skip}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = root / "runs"
    common = ("--out", out)
    code, synth = run("synth", "--n-streets", 200, "--seed", 7, "--image-side", 16, *common)
    assert code == 0
    code, ingest = run("ingest", "--transactions", synth / "transactions.csv", *common)
    assert code == 0
    code, feats = run("features", "--streets", ingest / "streets.csv", "--segments",
                      synth / "segments.csv", "--pois", synth / "pois.csv", *common)
    assert code == 0
    code, split = run("split", "--streets", feats / "streets.csv", "--seed", 1, *common)
    assert code == 0
    train_args = ("train", "--streets", feats / "streets.csv", "--manifest", synth / "manifest.csv",
                  "--split", split / "split.csv", "--image-side", 16, "--epochs", 2, *common)
    code, hybrid = run(*train_args, "--model", "hybrid")
    assert code == 0
    code, smap = run("score-map", "--run", hybrid, "--manifest", synth / "manifest.csv",
                     "--anchors", feats / "anchors.csv", *common)
    assert code == 0
    return dict(root=root, out=out, synth=synth, ingest=ingest, feats=feats, split=split,
                hybrid=hybrid, smap=smap, train_args=train_args)


def test_run_directories_are_named_by_hash(pipeline):
    for name in ("synth", "ingest", "features", "split", "train", "score-map"):
        key = {"features": "feats", "train": "hybrid", "score-map": "smap"}.get(name, name)
        d = pipeline[key]
        meta = json.loads((d / "run.json").read_text())
        assert d.name == f"{name}-{meta['config_hash']}"
        assert meta["command"] == name and "total" in meta["timings_seconds"]


def test_synth_twice_is_byte_identical(pipeline, tmp_path):
    code, again = run("synth", "--n-streets", 200, "--seed", 7, "--image-side", 16, "--out", tmp_path)
    assert code == 0 and again.name == pipeline["synth"].name
    assert tree_bytes(again) == tree_bytes(pipeline["synth"])


def test_no_silent_overwrite(pipeline):
    code, _ = run("synth", "--n-streets", 200, "--seed", 7, "--image-side", 16,
                  "--out", pipeline["out"])
    assert code == 2
    assert (pipeline["synth"] / "manifest.csv").exists()


def test_hybrid_train_outputs(pipeline):
    d = pipeline["hybrid"]
    for name in ("visual.hdnw", "linear.json", "report.txt", "normalization.json",
                 "predictions_validation.csv", "predictions_test.csv"):
        assert (d / name).exists(), name
    assert "vis" in (d / "report.txt").read_text()


def test_score_map_one_entry_per_imaged_street(pipeline):
    doc = json.loads((pipeline["smap"] / "score_map.geojson").read_text())
    manifest = (pipeline["synth"] / "manifest.csv").read_text().splitlines()[1:]
    valid = [ln for ln in manifest if ln.endswith(",1")]
    assert len(doc["features"]) == len(valid)
    assert doc["properties"]["config_hash"] == pipeline["smap"].name.rsplit("-", 1)[1]
    skipped = (pipeline["smap"] / "skipped.csv").read_text().splitlines()
    assert len(skipped) - 1 == len(manifest) - len(valid)


def test_rank_and_evaluate(pipeline, tmp_path):
    code, rank = run("rank", "--scores", pipeline["smap"] / "scores.csv", "--k", 3, "--out", tmp_path)
    assert code == 0
    lines = (rank / "ranking.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and len(lines) == 2 + 6
    code, ev = run("evaluate", "--run", pipeline["hybrid"], "--out", tmp_path)
    assert code == 0
    table = (ev / "metrics.tsv").read_text().splitlines()
    assert table[1] == "fold\tn\tmse\tr2" and [r.split("\t")[0] for r in table[2:]] == ["validation", "test"]


def test_repeat_train_reproduces_files(pipeline, tmp_path):
    args = list(pipeline["train_args"])
    args[args.index("--out") + 1] = tmp_path
    code, d = run(*args, "--model", "hybrid")
    assert code == 0 and d.name == pipeline["hybrid"].name
    assert tree_bytes(d) == tree_bytes(pipeline["hybrid"])


def test_config_file_and_flag_precedence(pipeline, tmp_path, monkeypatch):
    conf = tmp_path / "run.conf"
    conf.write_text("# synthetic city\nn-streets = 60\nseed = 3\nimage_side = 8\n")
    monkeypatch.setenv("HEDONIA_SEED", "4")
    cfg = cli.resolve_config("synth", {"config": str(conf), "seed": None, "n_streets": "70"})
    assert (cfg["n_streets"], cfg["seed"], cfg["image_side"]) == (70, 4, 8)
    cfg = cli.resolve_config("synth", {"config": str(conf), "seed": "9"})
    assert cfg["seed"] == 9 and cfg["epochs"] == 80 and cfg["learning_rate"] == 0.001
    code, d = run("synth", "--config", conf, "--out", tmp_path / "o")
    meta = json.loads((d / "run.json").read_text())
    assert code == 0 and meta["seed"] == 4 and meta["config"]["n_streets"] == 60


def test_changed_image_changes_hash(pipeline, tmp_path):
    import shutil

    copy = tmp_path / "synth"
    shutil.copytree(pipeline["synth"], copy)
    cfg = {**cli.resolve_config("train", {"streets": str(pipeline["feats"] / "streets.csv"),
                                          "manifest": str(copy / "manifest.csv"),
                                          "split": str(pipeline["split"] / "split.csv")})}
    before = cli.config_hash("train", cfg)
    img = next((copy / "images").iterdir())
    img.write_bytes(img.read_bytes() + b"\0")
    assert cli.config_hash("train", cfg) != before


@pytest.mark.parametrize("argv,code", [
    (("train", "--streets", "nope.csv", "--manifest", "m", "--split", "s"), 2),
    (("rank",), 2),
    (("synth", "--n-streets", "abc"), 2),
    (("synth", "--n-streets", "10"), 2),
])
def test_config_errors(argv, code, tmp_path):
    assert run(*argv, "--out", tmp_path)[0] == code


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("transaction_id,street_id,price\nx,y,1\n")
    assert run("ingest", "--transactions", bad, "--out", tmp_path)[0] == 3
    assert not any(tmp_path.glob("ingest-*"))  # failed runs leave nothing behind


def test_ablate_random_depth4_has_six_rows(pipeline, tmp_path):
    code, d = run("ablate", "--streets", pipeline["feats"] / "streets.csv", "--manifest",
                  pipeline["synth"] / "manifest.csv", "--depths", 4, "--seeds", 0,
                  "--split-mode", "random", "--epochs", 1, "--image-side", 16, "--out", tmp_path)
    assert code == 0
    lines = (d / "ablation.tsv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    rows = [ln for ln in lines[2:] if not ln.startswith("#")]
    assert lines[1].split("\t") == ["model", "mse_d4", "r2_d4"] and len(rows) == 6
