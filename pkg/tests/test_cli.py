import csv
import hashlib
import json

import numpy as np
import pytest

from volterra_rff.cli import main
from volterra_rff.iq import read_manifest
from volterra_rff.volterra.featio import read_features

SMALL_NET = {"n_cbs_blocks": 2, "widths": [4, 8], "fc_hidden": 16}


def write_cfg(path, **sections):
    cfg = {"sim": {"n_devices": 3, "n_signals": 10, "seed": 5}, "net": SMALL_NET,
           "train": {"epochs": 5, "batch_size": 8}}
    for k, v in sections.items():
        cfg[k] = {**cfg.get(k, {}), **v}
    path.write_text(json.dumps(cfg))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(root / "cfg.json")
    assert run("gen-dataset", "--config", cfg, "--out", root / "data") == 0
    assert run("extract", "--config", cfg, "--manifest", root / "data" / "manifest.csv", "--out", root / "feat") == 0
    return root, cfg


def test_synth_ref(tmp_path):
    assert run("synth-ref", "--out", tmp_path) == 0
    assert (tmp_path / "reference.rfiq").stat().st_size == 24 + 8 * 8192
    assert (tmp_path / "resolved_config.json").is_file()


def test_gen_dataset_counts(corpus):
    root, _ = corpus
    m = read_manifest(root / "data" / "manifest.csv")
    assert len(m) == 30
    assert sorted(set(m.labels().tolist())) == [0, 1, 2]
    assert len(list((root / "data").rglob("*.rfiq"))) == 30


def test_gen_dataset_channel_flag(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", sim={"n_devices": 2, "n_signals": 2})
    assert run("gen-dataset", "--config", cfg, "--channel", "multipath", "--out", tmp_path / "d") == 0
    m = read_manifest(tmp_path / "d" / "manifest.csv")
    assert {e.channel for e in m.entries} == {"multipath"}


def test_gen_dataset_rerun_same_hash(tmp_path, corpus):
    root, cfg = corpus
    assert run("gen-dataset", "--config", cfg, "--out", tmp_path) == 0
    assert digest(tmp_path / "manifest.csv") == digest(root / "data" / "manifest.csv")


def test_extract_outputs(corpus):
    root, _ = corpus
    fs = read_features(root / "feat" / "features.feat")
    assert len(fs) == 30 and fs.dim == 15
    summary = json.loads((root / "feat" / "extract_summary.json").read_text())
    assert summary["failed"] == 0
    assert set(summary["nmse_db"]) >= {"mean", "median", "p5", "p95"}
    with open(root / "feat" / "nmse.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 30


def test_extract_parallel_matches_serial(tmp_path, corpus):
    root, _ = corpus
    cfg = write_cfg(tmp_path / "p.json", extract={"workers": 4})
    assert run("extract", "--config", cfg, "--manifest", root / "data" / "manifest.csv", "--out", tmp_path) == 0
    assert (tmp_path / "features.feat").read_bytes() == (root / "feat" / "features.feat").read_bytes()


def test_in_model_corpus_fits_tightly(tmp_path):
    in_model = {"dc_max": 0.0, "gain": [1, 1], "phase_rad": [0, 0], "cfo_hz": [0, 0], "phase_noise_max": 0.0}
    cfg = write_cfg(tmp_path / "c.json", sim={"n_devices": 3, "n_signals": 4, "snr_db": None, "sampler": in_model},
                    ridge={"lambda_rel": 1e-9})
    assert run("gen-dataset", "--config", cfg, "--out", tmp_path / "d") == 0
    assert run("extract", "--config", cfg, "--manifest", tmp_path / "d" / "manifest.csv", "--out", tmp_path / "f") == 0
    summary = json.loads((tmp_path / "f" / "extract_summary.json").read_text())
    assert summary["nmse_db"]["mean"] < -60


def test_extract_failure_ceiling(tmp_path, corpus):
    root, cfg = corpus
    data = tmp_path / "data"
    assert run("gen-dataset", "--config", cfg, "--out", data) == 0
    victim = next(data.rglob("*.rfiq"))
    victim.write_bytes(b"junk")
    assert run("extract", "--config", cfg, "--manifest", data / "manifest.csv", "--out", tmp_path / "f") == 4
    summary = json.loads((tmp_path / "f" / "extract_summary.json").read_text())
    assert summary["failed"] == 1 and summary["extracted"] == 29


def test_train_eval_and_repeatability(tmp_path, corpus):
    root, cfg = corpus
    feats = root / "feat" / "features.feat"
    assert run("train", "--config", cfg, "--features", feats, "--out", tmp_path / "t") == 0
    lines = (tmp_path / "t" / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 5
    assert json.loads(lines[0])["epoch"] == 1
    ckpt = tmp_path / "t" / "model.cvnn"
    assert run("eval", "--config", cfg, "--features", feats, "--checkpoint", ckpt, "--out", tmp_path / "e1") == 0
    assert run("eval", "--config", cfg, "--features", feats, "--checkpoint", ckpt, "--out", tmp_path / "e2") == 0
    a = (tmp_path / "e1" / "confusion.csv").read_bytes()
    assert a == (tmp_path / "e2" / "confusion.csv").read_bytes()
    cm = np.loadtxt(tmp_path / "e1" / "confusion.csv", delimiter=",")
    assert cm.shape == (3, 3) and cm.sum() == 30


def test_crossval_shape(tmp_path, corpus):
    root, cfg = corpus
    assert run("crossval", "--config", cfg, "--features", root / "feat" / "features.feat", "-k", 5,
               "--out", tmp_path) == 0
    res = json.loads((tmp_path / "crossval.json").read_text())
    assert res["k"] == 5 and len(res["accuracies"]) == 5
    assert set(res["summary"]) >= {"mean", "min", "max"}
    assert np.loadtxt(tmp_path / "confusion.csv", delimiter=",").sum() == 30


def test_class_count_mismatch_exits_2(tmp_path, corpus):
    root, _ = corpus
    cfg = write_cfg(tmp_path / "c.json", net={"n_classes": 5})
    assert run("train", "--config", cfg, "--features", root / "feat" / "features.feat", "--out", tmp_path) == 2


def test_pca_export(tmp_path, corpus):
    root, cfg = corpus
    assert run("pca-export", "--config", cfg, "--features", root / "feat" / "features.feat", "-k", 3,
               "--out", tmp_path) == 0
    with open(tmp_path / "pca.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["label", "pc1", "pc2", "pc3"]
    assert len(rows) == 31
    meta = json.loads((tmp_path / "pca.json").read_text())
    assert len(meta["explained_variance_ratio"]) == 3 and meta["separability"] > 0


def test_error_exit_codes(tmp_path):
    assert run("extract", "--manifest", tmp_path / "missing.csv", "--out", tmp_path) == 3
    (tmp_path / "bad.json").write_text('{"nope": 1}')
    assert run("synth-ref", "--config", tmp_path / "bad.json", "--out", tmp_path) == 2
    with pytest.raises(SystemExit) as exc:
        run("no-such-command")
    assert exc.value.code == 2
