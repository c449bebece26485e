import csv
import json
import os
import shutil

import numpy as np
import pytest

from aok.cli import load_run_config, main
from aok.io import read_cohort, read_mask_2d, write_mask_2d, write_manifest, SegCase, SegManifest
from aok.core import Mask2D


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    rc = main(["synth", "--out", str(out), "--seed", "0"])
    assert rc == 0
    run = json.loads((out / "run.json").read_text())
    run["cv"] = {"k": 5, "seed": 0, "repetitions": 1, "stratified": True}
    run["forest"] = {"n_trees": 15}
    (out / "run.json").write_text(json.dumps(run, indent=2))
    return out


def test_synth_outputs(synth_dir):
    assert (synth_dir / "cohort.csv").exists()
    assert (synth_dir / "effects.json").exists()
    cohort = read_cohort(synth_dir / "cohort.csv")
    assert len(cohort) == 81
    ann = sorted(os.listdir(synth_dir / "annotations"))
    assert len(ann) == 81
    assert ann[0] == "S0001.json"


def test_synth_seed_changes_output(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["synth", "--out", str(a), "--seed", "1"]) == 0
    assert main(["synth", "--out", str(b), "--seed", "2"]) == 0
    assert (a / "cohort.csv").read_text() != (b / "cohort.csv").read_text()


def test_load_run_config_resolves_and_validates(synth_dir):
    cfg = load_run_config(synth_dir / "run.json")
    assert os.path.isabs(cfg.cohort_path)
    assert cfg.learner == "forest"
    assert cfg.cv.k == 5
    assert cfg.sets == ("A", "B", "C", "D", "F")


def test_load_run_config_bad_learner(tmp_path, synth_dir):
    doc = json.loads((synth_dir / "run.json").read_text())
    doc["learner"] = "xgboost"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(Exception, match="learner"):
        load_run_config(p)


def test_ingest(synth_dir, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["ingest", "--config", str(synth_dir / "run.json"),
               "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "ingest.json").read_text())
    assert doc["n_cases"] == 81
    assert doc["n_complete_occlusion"] == 49
    assert doc["n_partial_occlusion"] == 32
    assert doc["violations"] == {}
    assert doc["annotations"]["present"] == 81
    assert 0.0 <= doc["missing_fraction"]["age"] < 0.5


def test_geom_csv(synth_dir, tmp_path):
    out = tmp_path / "out"
    rc = main(["geom", "--config", str(synth_dir / "run.json"),
               "--out", str(out)])
    assert rc == 0
    with open(out / "geometry.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 81
    head = rows[0]
    for col in ("case_id", "agg_height_mm", "volume_cm3", "nsi", "ipr"):
        assert col in head
    assert float(rows[0]["volume_cm3"]) > 0


def test_select_keeps_migraines(synth_dir, tmp_path):
    out = tmp_path / "out"
    rc = main(["select", "--config", str(synth_dir / "run.json"),
               "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "selection.json").read_text())
    selected = [
        e["condition"]
        for e in doc["prevalence"]["conditions"]
        if e["kept_stage2"]
    ]
    assert "Migraines" in selected
    assert "Hypertension" not in selected
    assert "condition=Migraines" in doc["selected_clinical"]
    assert doc["selected_imaging"]


def test_select_idempotent(synth_dir, tmp_path):
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    for out in (out1, out2):
        assert main(["select", "--config", str(synth_dir / "run.json"),
                     "--out", str(out)]) == 0
    assert (out1 / "selection.json").read_bytes() == (out2 / "selection.json").read_bytes()


def test_eval_report(synth_dir, tmp_path):
    out = tmp_path / "out"
    rc = main(["eval", "--config", str(synth_dir / "run.json"),
               "--out", str(out), "--sets", "B,F"])
    assert rc == 0
    text = (out / "report.txt").read_text()
    assert "Accuracy" in text
    assert "%" in text
    doc = json.loads((out / "report.json").read_text())
    assert set(doc["report"]) == {"B", "F"}
    for block in doc["report"].values():
        assert "weighted_f1" in block
    out2 = tmp_path / "out2"
    assert main(["eval", "--config", str(synth_dir / "run.json"),
                 "--out", str(out2), "--sets", "B,F"]) == 0
    assert (out / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_eval_unknown_set(synth_dir, tmp_path):
    rc = main(["eval", "--config", str(synth_dir / "run.json"),
               "--out", str(tmp_path / "o"), "--sets", "Z"])
    assert rc == 2


def test_dice_identical_masks(tmp_path):
    rng = np.random.default_rng(0)
    base = tmp_path / "seg"
    os.makedirs(base / "masks", exist_ok=True)
    cases = []
    for i in range(3):
        vox = rng.random((32, 32)) > 0.6
        mask = Mask2D(voxels=vox, spacing_mm=(0.5, 0.5))
        rel = f"masks/c{i}.pgm"
        write_mask_2d(base / rel, mask)
        cases.append(SegCase(f"c{i}", rel, rel, "fold0", rel))
    write_manifest(base / "manifest.json",
                   SegManifest(cases=tuple(cases), base_dir=str(base)))
    out = tmp_path / "out"
    rc = main(["dice", "--manifest", str(base / "manifest.json"),
               "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "dice.json").read_text())
    assert doc["mean"] == pytest.approx(1.0)
    assert doc["n"] == 3
    assert all(v == pytest.approx(1.0) for v in doc["per_case"].values())


def test_dice_requires_predictions(tmp_path):
    base = tmp_path / "seg"
    os.makedirs(base / "masks", exist_ok=True)
    vox = np.ones((8, 8), dtype=bool)
    write_mask_2d(base / "masks/c0.pgm", Mask2D(vox, (1.0, 1.0)))
    cases = (SegCase("c0", "masks/c0.pgm", "masks/c0.pgm", "fold0"),)
    write_manifest(base / "manifest.json",
                   SegManifest(cases=cases, base_dir=str(base)))
    rc = main(["dice", "--manifest", str(base / "manifest.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 2


def test_missing_config_path_is_exit_2(tmp_path):
    rc = main(["ingest", "--config", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 2


def test_config_error_names_key(tmp_path, capsys):
    doc = {"paths": {"cohort": "missing.csv", "annotations": "nowhere"}}
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    rc = main(["ingest", "--config", str(p), "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "paths." in err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify"])
    assert exc.value.code == 2


def test_outputs_only_under_out(synth_dir, tmp_path, monkeypatch):
    out = tmp_path / "only"
    monkeypatch.chdir(tmp_path)
    before = set(os.listdir(tmp_path))
    assert main(["select", "--config", str(synth_dir / "run.json"),
                 "--out", str(out)]) == 0
    after = set(os.listdir(tmp_path))
    assert after - before == {"only"}
