"""Virtual-screening harness: query ranking, AUROC/BEDROC, similarity analysis.

A screen scores every pool molecule by its best (or mean) cosine
similarity to a handful of query embeddings, then summarizes retrieval
quality with AUROC and the early-recognition metric BEDROC.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .chem import canonical_smiles, parse_smiles


class EvalError(ValueError):
    """Bad screening input (degenerate labels, zero embeddings, ...)."""


@dataclass(frozen=True)
class ScreeningDataset:
    target: str
    actives: tuple[str, ...]
    decoys: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "actives", tuple(self.actives))
        object.__setattr__(self, "decoys", tuple(self.decoys))
        if len(self.actives) < 6:
            raise EvalError(
                f"target {self.target!r}: needs >= 6 actives, got {len(self.actives)}"
            )
        active_keys = {canonical_smiles(parse_smiles(s)) for s in self.actives}
        for s in self.decoys:
            if canonical_smiles(parse_smiles(s)) in active_keys:
                raise EvalError(
                    f"target {self.target!r}: decoy {s!r} is also an active"
                )


@dataclass
class ScreenResult:
    target: str
    auroc_values: np.ndarray = field(repr=False)
    bedroc_values: np.ndarray = field(repr=False)

    @property
    def auroc_mean(self) -> float:
        return float(np.mean(self.auroc_values))

    @property
    def auroc_std(self) -> float:
        return float(np.std(self.auroc_values, ddof=1))

    @property
    def bedroc_mean(self) -> float:
        return float(np.mean(self.bedroc_values))

    @property
    def bedroc_std(self) -> float:
        return float(np.std(self.bedroc_values, ddof=1))


# ---------------------------------------------------------------------------
# Scoring and metrics


def _unit_rows(vectors: np.ndarray, names, what: str) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise EvalError(f"{what} embeddings must be 2-D, got {vectors.shape}")
    norms = np.linalg.norm(vectors, axis=1)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        i = int(bad[0])
        label = names[i] if names is not None else f"index {i}"
        raise EvalError(f"zero-norm {what} embedding for {label}")
    return vectors / norms[:, None]


def rank_pool(
    query_embeddings: np.ndarray,
    pool_embeddings: np.ndarray,
    fusion: str = "max",
    query_names=None,
    pool_names=None,
) -> np.ndarray:
    """Cosine similarity of each pool row to the queries, fused per row."""
    if fusion not in ("max", "mean"):
        raise EvalError(f"unknown fusion {fusion!r}; use 'max' or 'mean'")
    q = _unit_rows(query_embeddings, query_names, "query")
    p = _unit_rows(pool_embeddings, pool_names, "pool")
    sims = q @ p.T  # (n_queries, n_pool)
    fused = sims.max(axis=0) if fusion == "max" else sims.mean(axis=0)
    return fused


def _split_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvalError("scores and labels must be 1-D and equal length")
    positive = labels == 1
    n_pos = int(positive.sum())
    if n_pos == 0 or n_pos == scores.size:
        raise EvalError("labels must contain both actives and decoys")
    return scores, positive, n_pos


def _midranks(scores: np.ndarray) -> np.ndarray:
    """Ascending 1-based ranks with ties assigned their group average."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with mid-rank tie handling."""
    scores, positive, n_pos = _split_labels(scores, labels)
    n_neg = scores.size - n_pos
    ranks = _midranks(scores)
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def bedroc(scores, labels, alpha: float = 20.0) -> float:
    """Early-recognition metric; exponential weight on top-ranked actives.

    Ranks are 1 = best; ties keep stable input order.
    """
    if alpha <= 0:
        raise EvalError("alpha must be positive")
    scores, positive, n_pos = _split_labels(scores, labels)
    n = scores.size
    order = np.argsort(-scores, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.arange(1, n + 1)
    r = ranks[positive]
    ra = n_pos / n
    rie = np.sum(np.exp(-alpha * r / n)) / (
        ra * (1.0 - np.exp(-alpha)) / (np.expm1(alpha / n))
    )
    factor = ra * np.sinh(alpha / 2.0) / (
        np.cosh(alpha / 2.0) - np.cosh(alpha / 2.0 - alpha * ra)
    )
    return float(rie * factor + 1.0 / (1.0 - np.exp(alpha * (1.0 - ra))))


# ---------------------------------------------------------------------------
# Screening protocol


def run_screen(
    dataset: ScreeningDataset,
    embedder,
    n_queries: int = 5,
    repetitions: int = 50,
    seed: int = 0,
    fusion: str = "max",
) -> ScreenResult:
    """Repeated query-retrieval screen.

    Each repetition draws ``n_queries`` actives (without replacement) as
    queries; the pool is the remaining actives plus every decoy.
    ``embedder`` maps a list of SMILES to an (N, d) array.
    """
    if len(dataset.actives) <= n_queries:
        raise EvalError(
            f"target {dataset.target!r}: needs more than {n_queries} actives"
        )
    molecules = list(dataset.actives) + list(dataset.decoys)
    vectors = np.asarray(embedder(molecules), dtype=np.float64)
    if vectors.shape[0] != len(molecules):
        raise EvalError("embedder returned the wrong number of rows")
    n_act = len(dataset.actives)
    rng = np.random.Generator(np.random.PCG64(seed))
    aurocs = np.empty(repetitions)
    bedrocs = np.empty(repetitions)
    for rep in range(repetitions):
        query_idx = rng.choice(n_act, size=n_queries, replace=False)
        mask = np.zeros(len(molecules), dtype=bool)
        mask[:n_act] = True
        is_query = np.zeros(len(molecules), dtype=bool)
        is_query[query_idx] = True
        pool_idx = np.nonzero(~is_query)[0]
        scores = rank_pool(
            vectors[query_idx],
            vectors[pool_idx],
            fusion=fusion,
            query_names=[molecules[i] for i in query_idx],
            pool_names=[molecules[i] for i in pool_idx],
        )
        labels = mask[pool_idx].astype(np.int64)
        aurocs[rep] = auroc(scores, labels)
        bedrocs[rep] = bedroc(scores, labels)
    return ScreenResult(dataset.target, aurocs, bedrocs)


def pairwise_similarity_analysis(groups: dict, embedder) -> dict:
    """Mean cosine similarity over unordered distinct pairs, per group."""
    out = {}
    for name, members in groups.items():
        members = list(members)
        if len(members) < 2:
            raise EvalError(f"group {name!r} needs >= 2 members")
        vectors = _unit_rows(
            np.asarray(embedder(members), dtype=np.float64), members, "group"
        )
        sims = vectors @ vectors.T
        idx = np.triu_indices(len(members), k=1)
        out[name] = float(sims[idx].mean())
    return out


# ---------------------------------------------------------------------------
# Directory and CSV interface


def _read_smi(path: str) -> list[str]:
    out = []
    with open(path) as fh:
        for line in fh:
            token = line.split()
            if token:
                out.append(token[0])
    return out


def load_screening_dir(root: str) -> list[ScreeningDataset]:
    """Each subdirectory is a target holding actives.smi and decoys.smi."""
    datasets = []
    for name in sorted(os.listdir(root)):
        sub = os.path.join(root, name)
        if not os.path.isdir(sub):
            continue
        actives = os.path.join(sub, "actives.smi")
        decoys = os.path.join(sub, "decoys.smi")
        if not (os.path.exists(actives) and os.path.exists(decoys)):
            raise EvalError(
                f"target directory {sub!r} must hold actives.smi and decoys.smi"
            )
        datasets.append(
            ScreeningDataset(name, _read_smi(actives), _read_smi(decoys))
        )
    if not datasets:
        raise EvalError(f"no target directories under {root!r}")
    return datasets


def write_screen_csv(results: list[ScreenResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["target", "auroc_mean", "auroc_std", "bedroc_mean", "bedroc_std"]
        )
        for r in results:
            writer.writerow(
                [
                    r.target,
                    f"{r.auroc_mean:.6f}",
                    f"{r.auroc_std:.6f}",
                    f"{r.bedroc_mean:.6f}",
                    f"{r.bedroc_std:.6f}",
                ]
            )
