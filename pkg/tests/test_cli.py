"""End-to-end command-line workflows on a tiny checkpoint."""

import csv
import json

import numpy as np
import pytest

from chemlm.cli import main

CORPUS = [
    "CCO", "CCN", "CCCC", "CCCCC", "c1ccccc1", "CC(=O)O",
    "C1CCCC1", "CCOC", "CCCO", "CCCN", "CC(C)C", "OCCO",
]


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.smi"
    corpus.write_text("".join(f"{s}\n" for s in CORPUS))
    config = root / "config.json"
    config.write_text(json.dumps({
        "model": {"preset": "tiny", "capacity": 32},
        "pretrain": {"use_validation_split": False, "capacity": 32,
                     "learning_rate": 1e-3},
    }))
    ckpt = root / "model.ckpt"
    rc = main([
        "pretrain", "--config", str(config), "--corpus", str(corpus),
        "--output", str(ckpt), "--epochs", "3", "--max-steps", "4",
        "--batch-size", "6", "--seed", "1",
    ])
    assert rc == 0
    assert ckpt.exists()
    return root


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------------------
# pretrain


def test_pretrain_writes_metrics(workdir):
    rows = _read_csv(workdir / "model.ckpt.metrics.csv")
    assert rows[0] == ["step", "epoch", "loss_total", "loss_mlm",
                       "loss_eq", "loss_physchem", "val_loss"]
    assert len(rows) == 1 + 4  # header + one row per step


def test_pretrain_missing_corpus(tmp_path, capsys):
    rc = main(["pretrain", "--corpus", str(tmp_path / "nope.smi"),
               "--output", str(tmp_path / "m.ckpt"), "--preset", "tiny"])
    assert rc == 1
    assert "usage error" in capsys.readouterr().err


def test_pretrain_bad_config_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    corpus = tmp_path / "c.smi"
    corpus.write_text("CCO\nCCN\n")
    rc = main(["pretrain", "--config", str(bad), "--corpus", str(corpus),
               "--output", str(tmp_path / "m.ckpt")])
    assert rc == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_pretrain_unknown_preset(tmp_path, capsys):
    corpus = tmp_path / "c.smi"
    corpus.write_text("CCO\nCCN\n")
    rc = main(["pretrain", "--corpus", str(corpus),
               "--output", str(tmp_path / "m.ckpt"), "--preset", "huge"])
    assert rc == 1


def test_pretrain_reports_skipped(tmp_path, capsys):
    corpus = tmp_path / "c.smi"
    corpus.write_text("CCO\nCCN\nCCC\nCCCC\nnot_a_molecule\n")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": {"preset": "tiny"},
        "pretrain": {"use_validation_split": False},
    }))
    rc = main(["pretrain", "--config", str(cfg), "--corpus", str(corpus),
               "--output", str(tmp_path / "m.ckpt"), "--max-steps", "1",
               "--epochs", "1", "--batch-size", "4"])
    captured = capsys.readouterr()
    assert rc == 0
    assert "skipped 1 unparseable" in captured.err
    assert "1 skipped" in captured.out


def test_pretrain_all_unparseable(tmp_path, capsys):
    corpus = tmp_path / "c.smi"
    corpus.write_text("xx\nyy\n")
    rc = main(["pretrain", "--corpus", str(corpus), "--preset", "tiny",
               "--output", str(tmp_path / "m.ckpt")])
    assert rc == 2


# ---------------------------------------------------------------------------
# embed


def test_embed_roundtrip(workdir, tmp_path):
    out = tmp_path / "emb.csv"
    rc = main(["embed", "--checkpoint", str(workdir / "model.ckpt"),
               "--input", str(workdir / "corpus.smi"), "--output", str(out)])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[0][0] == "smiles"
    assert rows[0][1:] == [f"dim_{i}" for i in range(8)]  # tiny hidden=8
    assert len(rows) == 1 + len(CORPUS)
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    assert np.all(np.isfinite(values))


def test_embed_bad_smiles_has_provenance(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.smi"
    bad.write_text("CCO\nC1CC\n")
    rc = main(["embed", "--checkpoint", str(workdir / "model.ckpt"),
               "--input", str(bad), "--output", str(tmp_path / "e.csv")])
    assert rc == 2
    assert ":2:" in capsys.readouterr().err


def test_embed_missing_checkpoint(tmp_path, capsys):
    smi = tmp_path / "a.smi"
    smi.write_text("CCO\n")
    rc = main(["embed", "--checkpoint", str(tmp_path / "none.ckpt"),
               "--input", str(smi), "--output", str(tmp_path / "e.csv")])
    assert rc == 1


def test_embed_corrupt_checkpoint(tmp_path, capsys):
    fake = tmp_path / "fake.ckpt"
    fake.write_bytes(b"garbage bytes, not a checkpoint")
    smi = tmp_path / "a.smi"
    smi.write_text("CCO\n")
    rc = main(["embed", "--checkpoint", str(fake),
               "--input", str(smi), "--output", str(tmp_path / "e.csv")])
    assert rc == 2


# ---------------------------------------------------------------------------
# screen


def test_screen_benchmark_dir(workdir, tmp_path):
    bench = tmp_path / "bench"
    for target in ("kinase", "protease"):
        sub = bench / target
        sub.mkdir(parents=True)
        (sub / "actives.smi").write_text(
            "CCO\nCCN\nCCC\nCCOC\nCCCO\nCCCN\nCCCC\nOCCO\n"
        )
        (sub / "decoys.smi").write_text(
            "c1ccccc1\nCc1ccccc1\nc1ccncc1\nCC(=O)O\nC1CCCC1\nCC(C)C\n"
        )
    out = tmp_path / "screen.csv"
    rc = main(["screen", "--checkpoint", str(workdir / "model.ckpt"),
               "--benchmark", str(bench), "--output", str(out),
               "--queries", "3", "--repetitions", "4"])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[0] == ["target", "auroc_mean", "auroc_std",
                       "bedroc_mean", "bedroc_std"]
    assert [r[0] for r in rows[1:]] == ["kinase", "protease"]
    for r in rows[1:]:
        assert 0.0 <= float(r[1]) <= 1.0


def test_screen_empty_benchmark(workdir, tmp_path):
    rc = main(["screen", "--checkpoint", str(workdir / "model.ckpt"),
               "--benchmark", str(tmp_path), "--output",
               str(tmp_path / "s.csv")])
    assert rc == 2


# ---------------------------------------------------------------------------
# qsar


def _write_qsar_csv(path, with_fold=False):
    lines = ["smiles,label,fold" if with_fold else "smiles,label"]
    for i, s in enumerate(CORPUS):
        label = int(i % 2 == 0)
        fold = f",fold{i % 2}" if with_fold else ""
        lines.append(f"{s},{label}{fold}")
    path.write_text("\n".join(lines) + "\n")


def test_qsar_svm_classification(workdir, tmp_path, capsys):
    data = tmp_path / "qsar.csv"
    _write_qsar_csv(data)
    out = tmp_path / "qsar_out.csv"
    rc = main(["qsar", "--checkpoint", str(workdir / "model.ckpt"),
               "--data", str(data), "--output", str(out),
               "--mode", "svm", "--folds", "2", "--C", "1.0"])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[0] == ["fold", "n_test", "metric", "value"]
    assert [r[0] for r in rows[1:]] == ["fold0", "fold1", "mean", "std"]
    assert all(r[2] == "auroc" for r in rows[1:])
    assert "auroc" in capsys.readouterr().out


def test_qsar_svm_regression_with_folds(workdir, tmp_path):
    data = tmp_path / "qsar.csv"
    _write_qsar_csv(data, with_fold=True)
    out = tmp_path / "qsar_out.csv"
    rc = main(["qsar", "--checkpoint", str(workdir / "model.ckpt"),
               "--data", str(data), "--output", str(out),
               "--mode", "svm", "--task", "regression", "--epsilon", "0.05"])
    assert rc == 0
    rows = _read_csv(out)
    assert all(r[2] == "rmse" for r in rows[1:])
    assert float(rows[-2][3]) >= 0.0  # mean rmse


def test_qsar_finetune_mode(workdir, tmp_path):
    data = tmp_path / "qsar.csv"
    _write_qsar_csv(data)
    out = tmp_path / "qsar_ft.csv"
    rc = main(["qsar", "--checkpoint", str(workdir / "model.ckpt"),
               "--data", str(data), "--output", str(out),
               "--mode", "finetune", "--freeze-encoder", "--epochs", "2",
               "--folds", "2", "--learning-rate", "0.01"])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[-2][0] == "mean" and rows[-1][0] == "std"


def test_qsar_single_fold_rejected(workdir, tmp_path):
    data = tmp_path / "qsar.csv"
    lines = ["smiles,label,fold"] + [f"{s},1,only" for s in CORPUS]
    data.write_text("\n".join(lines) + "\n")
    rc = main(["qsar", "--checkpoint", str(workdir / "model.ckpt"),
               "--data", str(data), "--output", str(tmp_path / "o.csv")])
    assert rc == 2


# ---------------------------------------------------------------------------
# descriptors / canonicalize / enumerate


def test_descriptors_csv(workdir, tmp_path):
    out = tmp_path / "desc.csv"
    rc = main(["descriptors", "--input", str(workdir / "corpus.smi"),
               "--output", str(out)])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[0][0] == "smiles"
    assert "MolWt" in rows[0] and len(rows[0]) == 17
    ccO = rows[1]  # first corpus line is CCO
    assert ccO[0] == "CCO"
    molwt = float(ccO[rows[0].index("MolWt")])
    assert molwt == pytest.approx(46.069, abs=0.01)


def test_descriptors_unknown_set(workdir, tmp_path):
    rc = main(["descriptors", "--input", str(workdir / "corpus.smi"),
               "--output", str(tmp_path / "d.csv"), "--set", "NOPE"])
    assert rc == 2


def test_canonicalize_stdout(tmp_path, capsys):
    smi = tmp_path / "in.smi"
    smi.write_text("OCC\nCCO\nC(C)O\n")
    rc = main(["canonicalize", "--input", str(smi)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert len(set(lines)) == 1  # all spellings of ethanol agree


def test_canonicalize_to_file(tmp_path):
    smi = tmp_path / "in.smi"
    smi.write_text("c1ccccc1\n")
    out = tmp_path / "out.smi"
    rc = main(["canonicalize", "--input", str(smi), "--output", str(out)])
    assert rc == 0
    assert out.read_text().strip() == "c1ccccc1"


def test_enumerate_seeded(tmp_path, capsys):
    smi = tmp_path / "in.smi"
    smi.write_text("CC(C)CO\nc1ccncc1\n")
    rc = main(["enumerate", "--input", str(smi), "--count", "3", "--seed", "7"])
    assert rc == 0
    first = capsys.readouterr().out
    assert len(first.strip().splitlines()) == 6
    rc = main(["enumerate", "--input", str(smi), "--count", "3", "--seed", "7"])
    assert rc == 0
    assert capsys.readouterr().out == first


def test_enumerate_spellings_parse_back(tmp_path, capsys):
    from chemlm.chem import canonical_smiles, parse_smiles

    smi = tmp_path / "in.smi"
    smi.write_text("CC(C)CO\n")
    rc = main(["enumerate", "--input", str(smi), "--count", "5"])
    assert rc == 0
    reference = canonical_smiles(parse_smiles("CC(C)CO"))
    for line in capsys.readouterr().out.strip().splitlines():
        assert canonical_smiles(parse_smiles(line)) == reference


# ---------------------------------------------------------------------------
# analyze-similarity


def test_analyze_similarity(workdir, tmp_path):
    groups = tmp_path / "groups.json"
    groups.write_text(json.dumps({
        "alcohols": ["CCO", "CCCO", "OCCO"],
        "amines": ["CCN", "CCCN"],
    }))
    out = tmp_path / "sims.csv"
    rc = main(["analyze-similarity", "--checkpoint", str(workdir / "model.ckpt"),
               "--groups", str(groups), "--output", str(out)])
    assert rc == 0
    rows = _read_csv(out)
    assert rows[0] == ["group", "n_members", "mean_cosine"]
    got = {r[0]: (int(r[1]), float(r[2])) for r in rows[1:]}
    assert got["alcohols"][0] == 3 and got["amines"][0] == 2
    for _, value in got.values():
        assert -1.0 <= value <= 1.0


def test_analyze_similarity_bad_groups(workdir, tmp_path, capsys):
    bad = tmp_path / "groups.json"
    bad.write_text(json.dumps(["not", "a", "dict"]))
    rc = main(["analyze-similarity", "--checkpoint", str(workdir / "model.ckpt"),
               "--groups", str(bad), "--output", str(tmp_path / "s.csv")])
    assert rc == 2
    rc = main(["analyze-similarity", "--checkpoint", str(workdir / "model.ckpt"),
               "--groups", str(tmp_path / "missing.json"),
               "--output", str(tmp_path / "s.csv")])
    assert rc == 1


# ---------------------------------------------------------------------------
# parser behavior


def test_unknown_command_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_missing_required_argument(capsys):
    assert main(["embed", "--input", "x.smi", "--output", "y.csv"]) == 1


def test_threads_flag_accepted(tmp_path, capsys):
    smi = tmp_path / "in.smi"
    smi.write_text("CCO\n")
    assert main(["--threads", "2", "canonicalize", "--input", str(smi)]) == 0
    capsys.readouterr()
