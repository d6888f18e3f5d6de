"""Command-line interface: pretraining, embedding, screening, QSAR, chem utils.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Heavy imports happen inside the command handlers so that ``--threads``
can pin the BLAS thread count before numpy is loaded.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep our code map
        raise UsageError(message)


def _read_smiles_lines(path) -> list[tuple[int, str]]:
    """Non-empty lines as (lineno, first whitespace-separated token)."""
    try:
        with open(path) as fh:
            out = []
            for lineno, line in enumerate(fh, start=1):
                token = line.split()
                if token:
                    out.append((lineno, token[0]))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if not out:
        raise DataError(f"{path}: no molecules found")
    return out


class DataError(Exception):
    pass


def _parse_all(path, entries):
    """Parse every line, failing with file/line provenance."""
    from .chem import SmilesError, parse_smiles

    mols = []
    for lineno, smiles in entries:
        try:
            mols.append(parse_smiles(smiles))
        except SmilesError as exc:
            raise DataError(f"{path}:{lineno}: {smiles!r}: {exc}") from None
    return mols


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_bundle(path):
    from .checkpoint import load_checkpoint

    return load_checkpoint(path)


def _embedder(bundle, strategy):
    from .model import embed

    def run(smiles_list):
        return embed(
            bundle.state, list(smiles_list), strategy=strategy, vocab=bundle.vocab
        )

    return run


# ---------------------------------------------------------------------------
# Commands


def cmd_pretrain(args) -> int:
    import numpy as np

    from .checkpoint import save_checkpoint
    from .model import ModelConfig, paper_config, small_config, tiny_config
    from .training import PretrainConfig, pretrain, write_metrics_csv

    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read {args.config}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}: invalid JSON: {exc}")
        if not isinstance(file_cfg, dict):
            raise DataError(f"{args.config}: top level must be an object")

    model_section = dict(file_cfg.get("model", {}))
    preset = args.preset or model_section.pop("preset", "small")
    presets = {"tiny": tiny_config, "small": small_config, "paper": paper_config}
    if preset not in presets:
        raise UsageError(f"unknown preset {preset!r}; choose from {sorted(presets)}")
    try:
        model_cfg = presets[preset](**model_section)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{args.config}: bad model section: {exc}")

    pre_section = dict(file_cfg.get("pretrain", {}))
    overrides = {
        "seed": args.seed,
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "max_steps": args.max_steps,
        "checkpoint_interval": args.checkpoint_interval,
    }
    pre_section.update({k: v for k, v in overrides.items() if v is not None})
    try:
        pre_cfg = PretrainConfig(**pre_section)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad pretraining configuration: {exc}")

    corpus = [s for _, s in _read_smiles_lines(args.corpus)]

    def on_checkpoint(step, result):
        path = f"{args.output}.step{step:06d}" if step else args.output
        save_checkpoint(
            path,
            result.state,
            pre_cfg,
            result.vocab,
            result.descriptor_set,
            result.normalizer,
        )

    result = pretrain(
        corpus,
        pre_cfg,
        model_cfg,
        on_checkpoint=on_checkpoint if pre_cfg.checkpoint_interval else None,
    )
    save_checkpoint(
        args.output,
        result.state,
        pre_cfg,
        result.vocab,
        result.descriptor_set,
        result.normalizer,
    )
    metrics_path = args.metrics or f"{args.output}.metrics.csv"
    write_metrics_csv(result.metrics, metrics_path)
    if result.skipped:
        print(
            f"skipped {len(result.skipped)} unparseable molecules",
            file=sys.stderr,
        )
    train_n, val_n, test_n = result.split_sizes
    print(
        f"wrote {args.output} ({train_n} train / {val_n} val / {test_n} test "
        f"molecules, {len(result.skipped)} skipped); metrics in {metrics_path}"
    )
    return 0


def cmd_embed(args) -> int:
    bundle = _load_bundle(args.checkpoint)
    entries = _read_smiles_lines(args.input)
    _parse_all(args.input, entries)  # fail with provenance before embedding
    smiles = [s for _, s in entries]
    vectors = _embedder(bundle, args.strategy)(smiles)
    d = vectors.shape[1]
    rows = [
        [s] + [f"{v:.8g}" for v in vec] for s, vec in zip(smiles, vectors)
    ]
    _write_csv(args.output, ["smiles"] + [f"dim_{i}" for i in range(d)], rows)
    print(f"wrote {len(rows)} embeddings of width {d} to {args.output}")
    return 0


def cmd_screen(args) -> int:
    from .evalbench import load_screening_dir, run_screen, write_screen_csv

    bundle = _load_bundle(args.checkpoint)
    embedder = _embedder(bundle, args.strategy)
    datasets = load_screening_dir(args.benchmark)
    results = []
    for ds in datasets:
        results.append(
            run_screen(
                ds,
                embedder,
                n_queries=args.queries,
                repetitions=args.repetitions,
                seed=args.seed,
                fusion=args.fusion,
            )
        )
    write_screen_csv(results, args.output)
    print(f"wrote {len(results)} targets to {args.output}")
    return 0


def _assign_folds(labels, k, seed, stratify):
    """Seeded round-robin fold labels, per class when stratifying."""
    import numpy as np

    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(labels)
    folds = [""] * n
    if stratify:
        classes = sorted(set(float(v) for v in labels))
        groups = [
            [i for i, v in enumerate(labels) if float(v) == c] for c in classes
        ]
    else:
        groups = [list(range(n))]
    counter = 0
    for group in groups:
        for idx in rng.permutation(group):
            folds[int(idx)] = f"fold{counter % k}"
            counter += 1
    return folds


def cmd_qsar(args) -> int:
    import numpy as np

    from .evalbench import auroc
    from .qsar import (
        decision_function,
        finetune,
        finetune_predict,
        predict,
        read_qsar_csv,
        rmse,
        svm_fit_classify,
        svm_fit_regress,
    )

    bundle = _load_bundle(args.checkpoint)
    dataset = read_qsar_csv(args.data)
    folds = dataset.folds or _assign_folds(
        dataset.labels, args.folds, args.seed, args.task == "classification"
    )
    fold_names = []
    for f in folds:
        if f not in fold_names:
            fold_names.append(f)
    if len(fold_names) < 2:
        raise DataError(f"{args.data}: needs at least two folds, got {fold_names}")

    metric_name = "auroc" if args.task == "classification" else "rmse"
    embedder = _embedder(bundle, args.strategy)
    values = []
    rows = []
    x_all = None
    if args.mode == "svm":
        x_all = embedder(dataset.smiles)
    labels = np.asarray(dataset.labels)
    for fold in fold_names:
        test_idx = [i for i, f in enumerate(folds) if f == fold]
        train_idx = [i for i, f in enumerate(folds) if f != fold]
        if not test_idx or not train_idx:
            raise DataError(f"{args.data}: fold {fold!r} leaves an empty split")
        y_test = labels[test_idx]
        if args.mode == "svm":
            x_tr, x_te = x_all[train_idx], x_all[test_idx]
            if args.task == "classification":
                machine = svm_fit_classify(x_tr, labels[train_idx], C=args.C)
                score = decision_function(machine, x_te)
                value = auroc(score, y_test.astype(int))
            else:
                machine = svm_fit_regress(
                    x_tr, labels[train_idx], C=args.C, epsilon=args.epsilon
                )
                value = rmse(predict(machine, x_te), y_test)
        else:
            tr_smiles = [dataset.smiles[i] for i in train_idx]
            tr_y = labels[train_idx]
            n_val = max(1, len(tr_smiles) // 5)
            rng = np.random.Generator(np.random.PCG64(args.seed))
            order = rng.permutation(len(tr_smiles))
            val_pos, tr_pos = order[:n_val], order[n_val:]
            result = finetune(
                bundle.state,
                [tr_smiles[i] for i in tr_pos],
                tr_y[tr_pos],
                [tr_smiles[i] for i in val_pos],
                tr_y[val_pos],
                task=args.task,
                lr=args.learning_rate,
                epochs=args.epochs,
                freeze_encoder=args.freeze_encoder,
                seed=args.seed,
                vocab=bundle.vocab,
            )
            out = finetune_predict(
                result, [dataset.smiles[i] for i in test_idx], bundle.vocab
            )
            if args.task == "classification":
                value = auroc(out, y_test.astype(int))
            else:
                value = rmse(out, y_test)
        values.append(value)
        rows.append([fold, len(test_idx), metric_name, f"{value:.6f}"])
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    rows.append(["mean", "", metric_name, f"{mean:.6f}"])
    rows.append(["std", "", metric_name, f"{std:.6f}"])
    _write_csv(args.output, ["fold", "n_test", "metric", "value"], rows)
    print(
        f"{args.mode}/{args.task}: {metric_name} = {mean:.4f} ± {std:.4f} "
        f"over {len(fold_names)} folds -> {args.output}"
    )
    return 0


def cmd_descriptors(args) -> int:
    from .descriptors import compute_descriptors, named_set

    dset = named_set(args.set)
    entries = _read_smiles_lines(args.input)
    mols = _parse_all(args.input, entries)
    rows = []
    for (lineno, smiles), mol in zip(entries, mols):
        vec = compute_descriptors(mol, dset)
        rows.append([smiles] + [f"{v:.8g}" for v in vec.values])
    _write_csv(args.output, ["smiles"] + list(dset.members), rows)
    print(f"wrote {len(rows)} rows x {len(dset)} descriptors to {args.output}")
    return 0


def cmd_canonicalize(args) -> int:
    from .chem import canonical_smiles

    entries = _read_smiles_lines(args.input)
    mols = _parse_all(args.input, entries)
    lines = [canonical_smiles(m) for m in mols]
    _emit_lines(lines, args.output)
    return 0


def cmd_enumerate(args) -> int:
    import random

    from .chem import enumerate_smiles

    entries = _read_smiles_lines(args.input)
    mols = _parse_all(args.input, entries)
    rng = random.Random(args.seed)
    lines = []
    for mol in mols:
        lines.extend(enumerate_smiles(mol, args.count, rng))
    _emit_lines(lines, args.output)
    return 0


def _emit_lines(lines, output):
    text = "\n".join(lines) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze_similarity(args) -> int:
    from .evalbench import pairwise_similarity_analysis

    bundle = _load_bundle(args.checkpoint)
    try:
        with open(args.groups) as fh:
            groups = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {args.groups}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.groups}: invalid JSON: {exc}")
    if not isinstance(groups, dict) or not all(
        isinstance(v, list) for v in groups.values()
    ):
        raise DataError(
            f"{args.groups}: expected an object mapping group names to SMILES lists"
        )
    sims = pairwise_similarity_analysis(groups, _embedder(bundle, args.strategy))
    rows = [
        [name, len(groups[name]), f"{value:.6f}"] for name, value in sims.items()
    ]
    _write_csv(args.output, ["group", "n_members", "mean_cosine"], rows)
    print(f"wrote {len(rows)} groups to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="chemlm",
        description="Multi-task molecular language model toolkit.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="BLAS thread count (default 1, which keeps runs deterministic)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="pretrain a model on a SMILES corpus")
    p.add_argument("--config", help="JSON config: {'model': {...}, 'pretrain': {...}}")
    p.add_argument("--corpus", required=True, help="SMILES file, one per line")
    p.add_argument("--output", required=True, help="checkpoint file to write")
    p.add_argument("--metrics", help="metrics CSV (default <output>.metrics.csv)")
    p.add_argument("--preset", choices=["tiny", "small", "paper"])
    p.add_argument("--seed", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--checkpoint-interval", type=int, dest="checkpoint_interval")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("embed", help="write molecule embeddings as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="SMILES file")
    p.add_argument("--output", required=True)
    p.add_argument(
        "--strategy", choices=["pooled", "mean_sequence"], default="pooled"
    )
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("screen", help="run retrieval screens over a benchmark dir")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--benchmark", required=True, help="dir of <target>/{actives,decoys}.smi")
    p.add_argument("--output", required=True)
    p.add_argument("--fusion", choices=["max", "mean"], default="max")
    p.add_argument("--queries", type=int, default=5)
    p.add_argument("--repetitions", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--strategy", choices=["pooled", "mean_sequence"], default="pooled"
    )
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("qsar", help="property prediction from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV: smiles,label[,fold]")
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=["svm", "finetune"], default="svm")
    p.add_argument(
        "--task", choices=["classification", "regression"], default="classification"
    )
    p.add_argument("--freeze-encoder", action="store_true", dest="freeze_encoder")
    p.add_argument("--folds", type=int, default=5, help="fold count when the CSV has none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C", type=float, default=5.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--learning-rate", type=float, default=3e-5, dest="learning_rate")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument(
        "--strategy", choices=["pooled", "mean_sequence"], default="pooled"
    )
    p.set_defaults(func=cmd_qsar)

    p = sub.add_parser("descriptors", help="compute descriptor values as CSV")
    p.add_argument("--input", required=True, help="SMILES file")
    p.add_argument("--output", required=True)
    p.add_argument("--set", default="ALL_IMPLEMENTED", help="named descriptor set")
    p.set_defaults(func=cmd_descriptors)

    p = sub.add_parser("canonicalize", help="canonical SMILES, one per line")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="default: stdout")
    p.set_defaults(func=cmd_canonicalize)

    p = sub.add_parser("enumerate", help="random synonymous SMILES spellings")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="default: stdout")
    p.add_argument("--count", type=int, default=10, help="spellings per molecule")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser(
        "analyze-similarity", help="per-group mean pairwise cosine similarity"
    )
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--groups", required=True, help="JSON: {group: [SMILES, ...]}")
    p.add_argument("--output", required=True)
    p.add_argument(
        "--strategy", choices=["pooled", "mean_sequence"], default="pooled"
    )
    p.set_defaults(func=cmd_analyze_similarity)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # Pin BLAS threads before numpy's first import.
    if "--threads" in argv:
        try:
            threads = argv[argv.index("--threads") + 1]
            int(threads)
        except (IndexError, ValueError):
            threads = None
    else:
        threads = "1"
    if threads is not None and "numpy" not in sys.modules:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = getattr(exc, "filename", None)
        detail = f"{name}: {exc.strerror}" if name else str(exc)
        print(f"usage error: {detail}", file=sys.stderr)
        return 1
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, ValueError) as exc:
        # Our domain errors all derive from ValueError.
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
