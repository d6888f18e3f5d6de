"""Self-supervised pretraining: example construction and the Adam loop.

Examples are built from a SMILES corpus: token masking for the masked
language task, positive/negative string pairs for the equivalence task,
and CDF-normalized descriptor targets for the regression task. One
shared input stream feeds all active tasks (pair encoding replaces the
single encoding whenever the equivalence task is on).
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

import numpy as np

from .chem import (
    Molecule,
    SmilesError,
    canonical_smiles,
    parse_smiles,
    random_smiles,
)
from .descriptors import (
    DescriptorSet,
    Normalizer,
    compute_descriptors,
    fit_normalizer,
    named_set,
    normalize,
)
from .model import (
    ModelConfig,
    ModelState,
    _mlm_logits,
    forward,
    init_model,
    masked_lm_loss,
    physchem_head,
    physchem_loss,
    smiles_eq_loss,
    total_loss,
    zero_gradients,
)
from .nn import Tensor
from .tokenizer import (
    SPECIAL_TOKENS,
    TokenSequence,
    Vocabulary,
    encode_pair,
    encode_single,
)


class TrainingError(ValueError):
    """Bad pretraining configuration or unusable example."""


@dataclass(frozen=True)
class PretrainConfig:
    masked_lm: bool = True
    smiles_eq: bool = True
    physchem: bool = True
    permute_inputs: bool = True
    mask_fraction: float = 0.15
    batch_size: int = 16
    epochs: int = 1
    max_steps: int | None = None
    learning_rate: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    checkpoint_interval: int = 0  # optimizer steps; 0 = end of run only
    capacity: int = 128
    descriptor_set: str = "ALL_IMPLEMENTED"
    use_validation_split: bool = True
    truncate: bool = True

    def __post_init__(self):
        if not (self.masked_lm or self.smiles_eq or self.physchem):
            raise TrainingError("at least one task flag must be set")
        if not 0.0 < self.mask_fraction < 1.0:
            raise TrainingError("mask_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise TrainingError("batch_size/epochs out of range")


@dataclass
class TrainingExample:
    sequence: TokenSequence
    mask_positions: list[int] | None = None
    mask_labels: list[int] | None = None
    eq_label: int | None = None
    physchem_target: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Example construction


def make_masked_example(
    seq: TokenSequence,
    vocab: Vocabulary,
    rng: np.random.Generator,
    fraction: float = 0.15,
):
    """Mask content positions (never specials) with the 80/10/10 recipe.

    Each content position is selected independently with probability
    ``fraction``; the draw repeats until at least one position is
    selected. Returns (masked sequence, positions, original ids).
    """
    ids = seq.ids.copy()
    first_content = len(SPECIAL_TOKENS)
    content = [i for i in range(seq.length) if int(ids[i]) >= first_content]
    if not content:
        raise TrainingError("sequence has no content tokens to mask")
    while True:
        chosen = [i for i in content if rng.random() < fraction]
        if chosen:
            break
    labels = [int(ids[i]) for i in chosen]
    for i in chosen:
        roll = rng.random()
        if roll < 0.8:
            ids[i] = vocab.mask_id
        elif roll < 0.9:
            ids[i] = int(rng.integers(first_content, len(vocab)))
        # else: leave the original token in place
    masked = TokenSequence(ids, seq.segment_ids, seq.attention_mask, seq.length)
    return masked, chosen, labels


def permute_input(mol: Molecule, flag: bool, rng: random.Random) -> str:
    """Random spelling when ``flag`` is on, canonical spelling otherwise."""
    return random_smiles(mol, rng) if flag else canonical_smiles(mol)


@dataclass
class CorpusEntry:
    smiles: str
    mol: Molecule
    canonical: str
    target: np.ndarray | None = None  # normalized descriptors


def make_pair_example(
    anchor: CorpusEntry,
    corpus: list[CorpusEntry],
    rng: np.random.Generator,
    chem_rng: random.Random,
    permute: bool = True,
):
    """(a, b, label): b is a synonymous permutation (label 1) or a
    different corpus molecule (label 0), with equal probability."""
    if not any(e.canonical != anchor.canonical for e in corpus):
        raise TrainingError("corpus needs >= 2 distinct molecules for pairs")
    a = random_smiles(anchor.mol, chem_rng) if permute else anchor.canonical
    if rng.random() < 0.5:
        return a, random_smiles(anchor.mol, chem_rng), 1
    while True:
        other = corpus[int(rng.integers(len(corpus)))]
        if other.canonical != anchor.canonical:
            b = random_smiles(other.mol, chem_rng) if permute else other.canonical
            return a, b, 0


def build_example(
    entry: CorpusEntry,
    corpus: list[CorpusEntry],
    cfg: PretrainConfig,
    vocab: Vocabulary,
    rng: np.random.Generator,
    chem_rng: random.Random,
) -> TrainingExample:
    if cfg.smiles_eq:
        a, b, label = make_pair_example(
            entry, corpus, rng, chem_rng, cfg.permute_inputs
        )
        seq = encode_pair(a, b, vocab, cfg.capacity, truncate=cfg.truncate)
    else:
        a = (
            random_smiles(entry.mol, chem_rng)
            if cfg.permute_inputs
            else entry.canonical
        )
        label = None
        seq = encode_single(a, vocab, cfg.capacity, truncate=cfg.truncate)
    example = TrainingExample(seq, eq_label=label)
    if cfg.masked_lm:
        masked, positions, labels = make_masked_example(
            seq, vocab, rng, cfg.mask_fraction
        )
        example.sequence = masked
        example.mask_positions = positions
        example.mask_labels = labels
    if cfg.physchem:
        example.physchem_target = entry.target
    return example


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam(params: dict) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        v={k: np.zeros_like(p.data) for k, p in params.items()},
    )


def adam_step(params: dict, opt: AdamState, cfg: PretrainConfig) -> None:
    """Standard bias-corrected Adam; parameters without gradients stay put."""
    opt.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    correct1 = 1.0 - b1**opt.t
    correct2 = 1.0 - b2**opt.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = opt.m[name]
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / correct1) / (np.sqrt(v / correct2) + cfg.epsilon)
        p.data -= cfg.learning_rate * update.astype(p.data.dtype, copy=False)


# ---------------------------------------------------------------------------
# Corpus handling


def _split_of(canonical: str) -> str:
    """Deterministic 80/5/15 split by hashing the canonical spelling."""
    digest = hashlib.sha256(canonical.encode("utf-8")).digest()
    bucket = int.from_bytes(digest[:4], "little") % 100
    if bucket < 80:
        return "train"
    if bucket < 85:
        return "val"
    return "test"


def prepare_corpus(
    smiles_list,
    dset: DescriptorSet,
    use_split: bool = True,
    normalizer_seed: int = 0,
):
    """Parse, split, and attach normalized descriptor targets.

    Returns (train entries, val entries, test entries, normalizer,
    skipped list of (smiles, error)).
    """
    entries: list[CorpusEntry] = []
    skipped: list[tuple[str, str]] = []
    for s in smiles_list:
        s = s.strip()
        if not s:
            continue
        try:
            mol = parse_smiles(s)
            entries.append(CorpusEntry(s, mol, canonical_smiles(mol)))
        except SmilesError as exc:
            skipped.append((s, str(exc)))
    if not entries:
        raise TrainingError("no parseable molecules in the corpus")
    if use_split:
        buckets = {"train": [], "val": [], "test": []}
        for e in entries:
            buckets[_split_of(e.canonical)].append(e)
        train, val, test = buckets["train"], buckets["val"], buckets["test"]
        if not train:
            raise TrainingError("corpus split produced an empty training set")
    else:
        train, val, test = entries, [], []
    vectors = [compute_descriptors(e.mol, dset) for e in train]
    normalizer = (
        fit_normalizer(vectors, seed=normalizer_seed) if len(vectors) >= 2 else None
    )
    for group in (train, val, test):
        for e in group:
            vec = compute_descriptors(e.mol, dset)
            e.target = (
                normalize(vec, normalizer)
                if normalizer is not None
                else np.full(len(dset), 0.5)
            )
    return train, val, test, normalizer, skipped


# ---------------------------------------------------------------------------
# Loop


@dataclass
class TrainResult:
    state: ModelState
    metrics: list[dict]
    vocab: Vocabulary
    descriptor_set: DescriptorSet
    normalizer: Normalizer | None
    skipped: list[tuple[str, str]]
    split_sizes: tuple[int, int, int]


METRIC_COLUMNS = (
    "step",
    "epoch",
    "loss_total",
    "loss_mlm",
    "loss_eq",
    "loss_physchem",
    "val_loss",
)


def _batch_losses(
    state: ModelState, cfg: PretrainConfig, examples: list[TrainingExample]
):
    """Forward a batch and return (ordered task-name/loss pairs, total)."""
    output = forward(state, [ex.sequence for ex in examples])
    parts: list[tuple[str, Tensor]] = []
    if cfg.masked_lm:
        positions = []
        labels = []
        for b, ex in enumerate(examples):
            positions.extend((b, p) for p in ex.mask_positions)
            labels.extend(ex.mask_labels)
        parts.append(
            ("loss_mlm", masked_lm_loss(state, output, positions, labels))
        )
    if cfg.smiles_eq:
        parts.append(
            (
                "loss_eq",
                smiles_eq_loss(state, output, [ex.eq_label for ex in examples]),
            )
        )
    if cfg.physchem:
        targets = np.stack([ex.physchem_target for ex in examples])
        parts.append(("loss_physchem", physchem_loss(state, output, targets)))
    return parts, total_loss([t for _, t in parts])


def pretrain(
    corpus,
    cfg: PretrainConfig,
    model_cfg: ModelConfig,
    dtype=np.float32,
    on_checkpoint=None,
) -> TrainResult:
    """Run the multi-task loop; deterministic for a fixed seed.

    ``corpus`` is an iterable of SMILES strings. ``on_checkpoint`` (if
    given) is called with (step, TrainResult-so-far) at the configured
    interval and once at the end.
    """
    vocab = Vocabulary()
    if model_cfg.vocab_size != len(vocab):
        raise TrainingError("model vocab size does not match the vocabulary")
    dset = named_set(cfg.descriptor_set)
    if cfg.physchem and model_cfg.descriptor_count != len(dset):
        raise TrainingError("model descriptor count does not match the set")

    train, val, _test, normalizer, skipped = prepare_corpus(
        corpus, dset, use_split=cfg.use_validation_split, normalizer_seed=cfg.seed
    )
    if cfg.smiles_eq and len({e.canonical for e in train}) < 2:
        raise TrainingError("corpus needs >= 2 distinct molecules for pairs")

    root = np.random.SeedSequence(cfg.seed)
    ss_order, ss_example, ss_chem, ss_val = root.spawn(4)
    rng_order = np.random.Generator(np.random.PCG64(ss_order))
    rng_example = np.random.Generator(np.random.PCG64(ss_example))
    chem_rng = random.Random(int(ss_chem.generate_state(1)[0]))

    state = init_model(model_cfg, dtype)
    opt = init_adam(state.params)
    metrics: list[dict] = []
    result = TrainResult(
        state,
        metrics,
        vocab,
        dset,
        normalizer,
        skipped,
        (len(train), len(val), len(_test)),
    )

    step = 0
    done = False
    for epoch in range(cfg.epochs):
        order = rng_order.permutation(len(train))
        for lo in range(0, len(order), cfg.batch_size):
            batch_ids = order[lo : lo + cfg.batch_size]
            examples = [
                build_example(
                    train[i], train, cfg, vocab, rng_example, chem_rng
                )
                for i in batch_ids
            ]
            parts, total = _batch_losses(state, cfg, examples)
            if not np.isfinite(total.data):
                raise FloatingPointError(
                    f"non-finite training loss at step {step}"
                )
            zero_gradients(state)
            total.backward()
            adam_step(state.params, opt, cfg)
            step += 1
            row = {
                "step": step,
                "epoch": epoch,
                "loss_total": float(total.data),
                "loss_mlm": "",
                "loss_eq": "",
                "loss_physchem": "",
                "val_loss": "",
            }
            for name, tensor in parts:
                row[name] = float(tensor.data)
            metrics.append(row)
            if (
                on_checkpoint is not None
                and cfg.checkpoint_interval > 0
                and step % cfg.checkpoint_interval == 0
            ):
                on_checkpoint(step, result)
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
        if val:
            rng_v = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([cfg.seed, 7, epoch]))
            )
            chem_v = random.Random(cfg.seed * 1_000_003 + epoch)
            val_examples = [
                build_example(e, train, cfg, vocab, rng_v, chem_v) for e in val
            ]
            losses = []
            for lo in range(0, len(val_examples), cfg.batch_size):
                _, vtotal = _batch_losses(
                    state, cfg, val_examples[lo : lo + cfg.batch_size]
                )
                losses.append(float(vtotal.data))
            metrics.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "loss_total": "",
                    "loss_mlm": "",
                    "loss_eq": "",
                    "loss_physchem": "",
                    "val_loss": float(np.mean(losses)),
                }
            )
        if done:
            break
    if on_checkpoint is not None:
        on_checkpoint(step, result)
    return result


# ---------------------------------------------------------------------------
# Evaluation helpers (used by the overfit acceptance check)


def evaluate_tasks(
    state: ModelState,
    cfg: PretrainConfig,
    entries: list[CorpusEntry],
    vocab: Vocabulary,
    seed: int = 0,
) -> dict:
    """Task metrics on a fixed, seeded example set built from ``entries``.

    Returns masked-token accuracy, equivalence accuracy, and descriptor
    MSE for whichever tasks are enabled.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    chem_rng = random.Random(seed)
    examples = [
        build_example(e, entries, cfg, vocab, rng, chem_rng) for e in entries
    ]
    output = forward(state, [ex.sequence for ex in examples])
    out: dict = {}
    if cfg.masked_lm:
        positions = []
        labels = []
        for b, ex in enumerate(examples):
            positions.extend((b, p) for p in ex.mask_positions)
            labels.extend(ex.mask_labels)
        logits = _mlm_logits(state, output, positions)
        out["mask_accuracy"] = float(
            np.mean(np.argmax(logits.data, axis=-1) == np.asarray(labels))
        )
    if cfg.smiles_eq:
        logits = (
            output.pooled_output @ state.p("eq.weight") + state.p("eq.bias")
        )
        pred = np.argmax(logits.data, axis=-1)
        truth = np.asarray([ex.eq_label for ex in examples])
        out["eq_accuracy"] = float(np.mean(pred == truth))
    if cfg.physchem:
        pred = physchem_head(state, output).data
        targets = np.stack([ex.physchem_target for ex in examples])
        out["physchem_mse"] = float(np.mean((pred - targets) ** 2))
    return out


def write_metrics_csv(metrics: list[dict], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in metrics:
            writer.writerow(row)
