"""Pretraining machinery: example construction, Adam, the loop, checkpoints."""

import random

import numpy as np
import pytest

from chemlm.checkpoint import (
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from chemlm.chem import canonical_smiles, parse_smiles
from chemlm.descriptors import named_set
from chemlm.model import ModelError, init_model, tiny_config
from chemlm.nn import Tensor
from chemlm.tokenizer import SPECIAL_TOKENS, TokenSequence, Vocabulary, encode_single
from chemlm.training import (
    METRIC_COLUMNS,
    AdamState,
    PretrainConfig,
    TrainingError,
    adam_step,
    build_example,
    evaluate_tasks,
    init_adam,
    make_masked_example,
    make_pair_example,
    permute_input,
    prepare_corpus,
    pretrain,
    write_metrics_csv,
)

SMALL_CORPUS = ["CCO", "CCN", "CCCC", "c1ccccc1", "CC(=O)O", "C1CCCC1"]


def quick_config(**kw):
    base = dict(
        batch_size=4,
        epochs=10**9,
        max_steps=6,
        learning_rate=1e-3,
        capacity=48,
        use_validation_split=False,
    )
    base.update(kw)
    return PretrainConfig(**base)


# ---------------------------------------------------------------------------
# Masking


def test_masking_statistics(vocab):
    seq = encode_single("CCCCCCCCCCCCCCCCCCCC", vocab, capacity=32)
    rng = np.random.Generator(np.random.PCG64(0))
    first_content = len(SPECIAL_TOKENS)
    n_content = sum(1 for i in range(seq.length) if seq.ids[i] >= first_content)
    chosen_total = 0
    kinds = {"mask": 0, "random": 0, "keep": 0}
    draws = 3000
    for _ in range(draws):
        masked, positions, labels = make_masked_example(seq, vocab, rng, 0.15)
        chosen_total += len(positions)
        for pos, label in zip(positions, labels):
            assert int(seq.ids[pos]) == label
            got = int(masked.ids[pos])
            if got == vocab.mask_id:
                kinds["mask"] += 1
            elif got == label:
                kinds["keep"] += 1
            else:
                kinds["random"] += 1
                assert got >= first_content
    fraction = chosen_total / (draws * n_content)
    assert 0.14 <= fraction <= 0.16
    total = sum(kinds.values())
    assert abs(kinds["mask"] / total - 0.8) < 0.02
    assert abs(kinds["random"] / total - 0.1) < 0.02
    assert abs(kinds["keep"] / total - 0.1) < 0.02


def test_masking_never_touches_specials(vocab):
    seq = encode_single("CCO", vocab, capacity=16)
    rng = np.random.Generator(np.random.PCG64(1))
    special_positions = {
        i for i in range(seq.length) if seq.ids[i] < len(SPECIAL_TOKENS)
    }
    for _ in range(200):
        masked, positions, _ = make_masked_example(seq, vocab, rng, 0.15)
        assert not special_positions.intersection(positions)
        for i in special_positions:
            assert masked.ids[i] == seq.ids[i]
        assert len(positions) >= 1  # redraws until something is chosen


def test_masking_requires_content(vocab):
    ids = np.array([vocab.cls_id, vocab.sep_id], dtype=np.int64)
    seq = TokenSequence(ids, np.zeros(2, np.int64), np.ones(2, np.int64), 2)
    rng = np.random.Generator(np.random.PCG64(2))
    with pytest.raises(TrainingError):
        make_masked_example(seq, vocab, rng, 0.15)


def test_masking_leaves_input_intact(vocab):
    seq = encode_single("CCCCCC", vocab, capacity=16)
    before = seq.ids.copy()
    rng = np.random.Generator(np.random.PCG64(3))
    make_masked_example(seq, vocab, rng, 0.15)
    assert np.array_equal(seq.ids, before)


# ---------------------------------------------------------------------------
# Pairs


def _entries(smiles, with_targets=False):
    dset = named_set("ALL_IMPLEMENTED")
    train, _, _, _, _ = prepare_corpus(smiles, dset, use_split=False)
    return train


def test_pair_labels_balanced_and_correct():
    entries = _entries(SMALL_CORPUS)
    rng = np.random.Generator(np.random.PCG64(4))
    chem_rng = random.Random(4)
    labels = []
    for _ in range(600):
        anchor = entries[int(rng.integers(len(entries)))]
        a, b, label = make_pair_example(anchor, entries, rng, chem_rng)
        labels.append(label)
        same = canonical_smiles(parse_smiles(b)) == anchor.canonical
        assert same == (label == 1)
        assert canonical_smiles(parse_smiles(a)) == anchor.canonical
    assert 0.44 < np.mean(labels) < 0.56


def test_pair_permute_flag_controls_spelling():
    entries = _entries(SMALL_CORPUS)
    rng = np.random.Generator(np.random.PCG64(5))
    chem_rng = random.Random(5)
    canonicals = {e.canonical for e in entries}
    for _ in range(100):
        anchor = entries[int(rng.integers(len(entries)))]
        a, b, label = make_pair_example(anchor, entries, rng, chem_rng, permute=False)
        assert a == anchor.canonical
        if label == 0:
            assert b in canonicals and b != anchor.canonical
        else:
            # positives stay enumerated so the pair is not a string copy
            assert canonical_smiles(parse_smiles(b)) == anchor.canonical


def test_pair_needs_two_molecules():
    entries = _entries(["CCO", "OCC"])  # same molecule twice
    rng = np.random.Generator(np.random.PCG64(6))
    with pytest.raises(TrainingError):
        make_pair_example(entries[0], entries, rng, random.Random(6))


def test_permute_input_helper():
    mol = parse_smiles("c1ccccc1O")
    assert permute_input(mol, False, random.Random(0)) == canonical_smiles(mol)
    spelled = permute_input(mol, True, random.Random(0))
    assert canonical_smiles(parse_smiles(spelled)) == canonical_smiles(mol)


# ---------------------------------------------------------------------------
# build_example


def test_build_example_all_tasks(vocab):
    entries = _entries(SMALL_CORPUS)
    cfg = quick_config()
    rng = np.random.Generator(np.random.PCG64(7))
    ex = build_example(entries[0], entries, cfg, vocab, rng, random.Random(7))
    ids = ex.sequence.ids[: ex.sequence.length]
    assert int(np.sum(ids == vocab.sep_id)) == 2  # pair layout
    assert ex.eq_label in (0, 1)
    assert ex.physchem_target.shape == (16,)
    assert ex.mask_positions and len(ex.mask_positions) == len(ex.mask_labels)


def test_build_example_single_when_eq_off(vocab):
    entries = _entries(SMALL_CORPUS)
    cfg = quick_config(smiles_eq=False)
    rng = np.random.Generator(np.random.PCG64(8))
    ex = build_example(entries[0], entries, cfg, vocab, rng, random.Random(8))
    ids = ex.sequence.ids[: ex.sequence.length]
    assert int(np.sum(ids == vocab.sep_id)) == 1
    assert ex.eq_label is None


# ---------------------------------------------------------------------------
# Adam


def _adam_cfg(lr=0.1):
    return PretrainConfig(learning_rate=lr, use_validation_split=False)


def test_adam_skips_gradientless_params():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    params = {"w": p}
    opt = init_adam(params)
    adam_step(params, opt, _adam_cfg())
    assert np.array_equal(p.data, [1.0, 2.0])
    assert opt.t == 1


def test_adam_first_step_is_signed_lr():
    # with m-hat = g and v-hat = g*g the first update is lr * g / (|g| + eps)
    g = np.array([0.5, -2.0, 1e-12])
    p = Tensor(np.zeros(3), requires_grad=True)
    p.grad = g.copy()
    params = {"w": p}
    opt = init_adam(params)
    cfg = _adam_cfg(lr=0.1)
    adam_step(params, opt, cfg)
    expected = -cfg.learning_rate * g / (np.abs(g) + cfg.epsilon)
    assert np.allclose(p.data, expected, atol=1e-12)


def test_adam_two_steps_match_hand_computation():
    cfg = _adam_cfg(lr=0.05)
    g1 = np.array([[0.3, -0.7], [1.1, 0.0]])
    g2 = np.array([[-0.2, 0.4], [0.9, -1.3]])
    p = Tensor(np.ones((2, 2)), requires_grad=True)
    params = {"w": p}
    opt = init_adam(params)

    theta = np.ones((2, 2))
    m = np.zeros((2, 2))
    v = np.zeros((2, 2))
    for t, g in ((1, g1), (2, g2)):
        p.grad = g.copy()
        adam_step(params, opt, cfg)
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**t)
        vhat = v / (1 - cfg.beta2**t)
        theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.epsilon)
        assert np.allclose(p.data, theta, atol=1e-12)
    assert opt.t == 2


# ---------------------------------------------------------------------------
# Corpus preparation


def test_prepare_corpus_reports_skips():
    dset = named_set("ALL_IMPLEMENTED")
    train, val, test, normalizer, skipped = prepare_corpus(
        ["CCO", "not_a_molecule", "", "  ", "C1CC"], dset, use_split=False
    )
    assert [e.smiles for e in train] == ["CCO"]
    assert val == [] and test == []
    bad = {s for s, _ in skipped}
    assert bad == {"not_a_molecule", "C1CC"}
    assert all(msg for _, msg in skipped)


def test_prepare_corpus_targets_normalized():
    dset = named_set("ALL_IMPLEMENTED")
    train, _, _, normalizer, _ = prepare_corpus(
        SMALL_CORPUS, dset, use_split=False
    )
    assert normalizer is not None
    for e in train:
        assert e.target.shape == (16,)
        assert np.all(e.target >= 0.0) and np.all(e.target <= 1.0)


def test_prepare_corpus_single_molecule_gets_flat_target():
    dset = named_set("ALL_IMPLEMENTED")
    train, _, _, normalizer, _ = prepare_corpus(["CCO"], dset, use_split=False)
    assert normalizer is None
    assert np.all(train[0].target == 0.5)


def test_prepare_corpus_split_deterministic_and_partitioned():
    dset = named_set("SIMPLE")
    corpus = [f"{'C' * n}O" for n in range(1, 41)]
    a = prepare_corpus(corpus, dset, use_split=True)
    b = prepare_corpus(corpus, dset, use_split=True)
    for ga, gb in zip(a[:3], b[:3]):
        assert [e.canonical for e in ga] == [e.canonical for e in gb]
    sizes = tuple(len(g) for g in a[:3])
    assert sum(sizes) == len(corpus)
    assert sizes[0] > sizes[1] and sizes[0] > sizes[2]  # train dominates


def test_prepare_corpus_empty_raises():
    dset = named_set("SIMPLE")
    with pytest.raises(TrainingError):
        prepare_corpus(["", "nope"], dset, use_split=False)


# ---------------------------------------------------------------------------
# Config validation


def test_config_rejects_no_tasks():
    with pytest.raises(TrainingError):
        PretrainConfig(masked_lm=False, smiles_eq=False, physchem=False)


def test_config_rejects_bad_fraction():
    with pytest.raises(TrainingError):
        PretrainConfig(mask_fraction=0.0)
    with pytest.raises(TrainingError):
        PretrainConfig(mask_fraction=1.0)


def test_config_rejects_bad_batch():
    with pytest.raises(TrainingError):
        PretrainConfig(batch_size=0)


def test_pretrain_rejects_vocab_mismatch():
    cfg = quick_config()
    with pytest.raises(TrainingError):
        pretrain(SMALL_CORPUS, cfg, tiny_config(vocab_size=41))


def test_pretrain_rejects_descriptor_mismatch():
    cfg = quick_config()
    with pytest.raises(TrainingError):
        pretrain(SMALL_CORPUS, cfg, tiny_config(descriptor_count=3))


def test_pretrain_rejects_single_molecule_for_eq():
    cfg = quick_config()
    with pytest.raises(TrainingError):
        pretrain(["CCO", "OCC"], cfg, tiny_config())


# ---------------------------------------------------------------------------
# The loop


def test_pretrain_deterministic_across_runs():
    cfg = quick_config(max_steps=4)
    first = pretrain(SMALL_CORPUS, cfg, tiny_config())
    second = pretrain(SMALL_CORPUS, cfg, tiny_config())
    for name, tensor in first.state.params.items():
        assert np.array_equal(tensor.data, second.state.params[name].data), name
    assert first.metrics == second.metrics


def test_pretrain_seed_changes_outcome():
    base = pretrain(SMALL_CORPUS, quick_config(max_steps=4), tiny_config())
    other = pretrain(
        SMALL_CORPUS, quick_config(max_steps=4, seed=9), tiny_config()
    )
    diffs = sum(
        not np.array_equal(t.data, other.state.params[n].data)
        for n, t in base.state.params.items()
    )
    assert diffs > 0


def test_pretrain_task_gating_freezes_unused_heads():
    cfg = quick_config(max_steps=4, smiles_eq=False, physchem=False)
    res = pretrain(SMALL_CORPUS, cfg, tiny_config())
    init = init_model(tiny_config())
    touched, frozen = [], []
    for name, tensor in res.state.params.items():
        same = np.array_equal(tensor.data, init.params[name].data)
        if name.startswith(("eq.", "phys.")):
            frozen.append(same)
        elif name.startswith("mlm.") or "embedding" in name:
            touched.append(same)
    assert all(frozen)
    assert not all(touched)


def test_pretrain_metrics_rows():
    cfg = quick_config(max_steps=5)
    res = pretrain(SMALL_CORPUS, cfg, tiny_config())
    rows = [m for m in res.metrics if m["loss_total"] != ""]
    assert len(rows) == 5
    assert [r["step"] for r in rows] == [1, 2, 3, 4, 5]
    for row in rows:
        assert set(row) == set(METRIC_COLUMNS)
        parts = [row["loss_mlm"], row["loss_eq"], row["loss_physchem"]]
        assert all(isinstance(p, float) for p in parts)
        assert abs(row["loss_total"] - np.mean(parts)) <= 1e-12
        assert row["val_loss"] == ""


def test_pretrain_validation_rows_present_when_split_on():
    corpus = [f"{'C' * n}O" for n in range(1, 41)]
    cfg = PretrainConfig(
        batch_size=64, epochs=2, learning_rate=1e-3, capacity=64,
        use_validation_split=True,
    )
    res = pretrain(corpus, cfg, tiny_config())
    val_rows = [m for m in res.metrics if m["val_loss"] != ""]
    n_train, n_val, n_test = res.split_sizes
    assert n_train + n_val + n_test == len(corpus)
    if n_val:
        assert len(val_rows) == 2  # one per epoch
        assert all(isinstance(r["val_loss"], float) for r in val_rows)


def test_pretrain_checkpoint_callback_schedule():
    calls = []
    cfg = quick_config(max_steps=5, checkpoint_interval=2)
    pretrain(
        SMALL_CORPUS,
        cfg,
        tiny_config(),
        on_checkpoint=lambda step, result: calls.append(step),
    )
    assert calls == [2, 4, 5]


def test_pretrain_checkpoint_end_only_by_default():
    calls = []
    pretrain(
        SMALL_CORPUS,
        quick_config(max_steps=3),
        tiny_config(),
        on_checkpoint=lambda step, result: calls.append(step),
    )
    assert calls == [3]


def test_pretrain_nonfinite_loss_raises():
    # poison a weight mid-run through the checkpoint hook; the next
    # step must fail loudly instead of averaging NaNs into the log
    def poison(step, result):
        first = next(iter(result.state.params.values()))
        first.data[...] = np.nan

    cfg = quick_config(max_steps=4, checkpoint_interval=1)
    with pytest.raises(FloatingPointError):
        pretrain(SMALL_CORPUS, cfg, tiny_config(), on_checkpoint=poison)


def test_pretrain_respects_max_steps_mid_epoch():
    cfg = quick_config(max_steps=1, batch_size=2)
    res = pretrain(SMALL_CORPUS, cfg, tiny_config())
    rows = [m for m in res.metrics if m["loss_total"] != ""]
    assert len(rows) == 1


def test_write_metrics_csv(tmp_path):
    res = pretrain(SMALL_CORPUS, quick_config(max_steps=2), tiny_config())
    path = tmp_path / "metrics.csv"
    write_metrics_csv(res.metrics, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(METRIC_COLUMNS)
    assert len(lines) == 1 + len(res.metrics)


# ---------------------------------------------------------------------------
# Evaluation


def test_evaluate_tasks_keys_follow_flags():
    cfg = quick_config(max_steps=2)
    res = pretrain(SMALL_CORPUS, cfg, tiny_config())
    entries = _entries(SMALL_CORPUS)
    full = evaluate_tasks(res.state, cfg, entries, res.vocab, seed=1)
    assert set(full) == {"mask_accuracy", "eq_accuracy", "physchem_mse"}
    assert 0.0 <= full["mask_accuracy"] <= 1.0
    assert 0.0 <= full["eq_accuracy"] <= 1.0
    assert full["physchem_mse"] >= 0.0
    only_mlm = quick_config(max_steps=2, smiles_eq=False, physchem=False)
    res2 = pretrain(SMALL_CORPUS, only_mlm, tiny_config())
    assert set(evaluate_tasks(res2.state, only_mlm, entries, res2.vocab)) == {
        "mask_accuracy"
    }


def test_evaluate_tasks_deterministic():
    cfg = quick_config(max_steps=2)
    res = pretrain(SMALL_CORPUS, cfg, tiny_config())
    entries = _entries(SMALL_CORPUS)
    a = evaluate_tasks(res.state, cfg, entries, res.vocab, seed=3)
    b = evaluate_tasks(res.state, cfg, entries, res.vocab, seed=3)
    assert a == b


# ---------------------------------------------------------------------------
# Checkpoints


def test_checkpoint_roundtrip_and_byte_identity(tmp_path):
    cfg = quick_config(max_steps=3)
    res = pretrain(SMALL_CORPUS, cfg, tiny_config())
    path = tmp_path / "model.ckpt"
    save_checkpoint(
        path,
        res.state,
        pretrain_config=cfg,
        vocab=res.vocab,
        descriptor_set=res.descriptor_set,
        normalizer=res.normalizer,
    )
    bundle = load_checkpoint(path)
    assert bundle.state.config == res.state.config
    for name, tensor in res.state.params.items():
        assert np.array_equal(
            bundle.state.params[name].data, tensor.data
        ), name
    assert bundle.pretrain_config == cfg
    assert bundle.descriptor_set.members == res.descriptor_set.members
    for got, want in zip(bundle.normalizer.samples, res.normalizer.samples):
        assert np.array_equal(got, want)

    again = tmp_path / "again.ckpt"
    save_checkpoint(
        again,
        bundle.state,
        pretrain_config=bundle.pretrain_config,
        vocab=bundle.vocab,
        descriptor_set=bundle.descriptor_set,
        normalizer=bundle.normalizer,
    )
    assert path.read_bytes() == again.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"definitely not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    cfg = quick_config(max_steps=1)
    res = pretrain(SMALL_CORPUS, cfg, tiny_config())
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, res.state, vocab=res.vocab)
    raw = path.read_bytes()
    clipped = tmp_path / "clipped.ckpt"
    clipped.write_bytes(raw[: len(raw) - 64])
    with pytest.raises(CheckpointError):
        load_checkpoint(clipped)
