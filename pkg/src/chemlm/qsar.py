"""Property prediction on learned embeddings: RBF-kernel SVMs and finetuning.

The SVM path treats the encoder as a fixed featurizer; the finetune path
attaches a fresh one-unit head to the pooled output and (optionally)
updates the encoder jointly.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .evalbench import auroc as classification_auroc
from .model import ModelState, forward
from .nn import Tensor
from .tokenizer import Vocabulary, encode_single
from .training import AdamState, PretrainConfig, adam_step, init_adam


class QsarError(ValueError):
    """Bad QSAR input (labels, folds, or solver preconditions)."""


@dataclass
class QsarDataset:
    smiles: list[str]
    labels: np.ndarray
    folds: list[str] | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if len(self.smiles) != self.labels.size:
            raise QsarError("smiles/label count mismatch")
        if self.folds is not None and len(self.folds) != len(self.smiles):
            raise QsarError("smiles/fold count mismatch")

    def fold_names(self) -> list[str]:
        if self.folds is None:
            return []
        seen: list[str] = []
        for f in self.folds:
            if f not in seen:
                seen.append(f)
        return seen


def read_qsar_csv(path) -> QsarDataset:
    """Rows of ``smiles,label[,fold]`` with a header line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise QsarError(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        if header[:2] != ["smiles", "label"]:
            raise QsarError(
                f"{path}: header must start with 'smiles,label', got {header!r}"
            )
        has_fold = len(header) > 2 and header[2] == "fold"
        smiles, labels, folds = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise QsarError(f"{path}:{lineno}: expected smiles,label")
            smiles.append(row[0].strip())
            try:
                labels.append(float(row[1]))
            except ValueError:
                raise QsarError(
                    f"{path}:{lineno}: label {row[1]!r} is not a number"
                ) from None
            if has_fold:
                folds.append(row[2].strip())
    return QsarDataset(smiles, np.asarray(labels), folds if has_fold else None)


# ---------------------------------------------------------------------------
# RBF-kernel SVM via sequential minimal optimization


@dataclass
class KernelMachine:
    kind: str  # "svc" or "svr"
    support_vectors: np.ndarray = field(repr=False)
    dual_coef: np.ndarray = field(repr=False)  # y_i*alpha_i (svc) / alpha-alpha* (svr)
    bias: float
    gamma: float
    C: float
    epsilon: float | None = None


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d2 = np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)
    return np.exp(-gamma * d2)


def _default_gamma(x: np.ndarray) -> float:
    var = float(np.var(x))
    d = x.shape[1]
    return 1.0 / (d * var) if var > 0 else 1.0 / d


def _smo_solve(Q, p, y, C, tol=1e-3, max_iter=None):
    """Minimize 1/2 a'Qa + p'a subject to y'a = 0, 0 <= a <= C.

    Maximal-violating-pair working-set selection; returns (alpha, bias)
    with the decision convention f(x) = sum coef_i K_i(x) + bias.
    """
    n = p.size
    alpha = np.zeros(n)
    grad = p.copy()
    if max_iter is None:
        max_iter = 100 * n
    it = 0
    while True:
        minus_yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            break
        i = int(np.nonzero(up)[0][np.argmax(minus_yg[up])])
        j = int(np.nonzero(low)[0][np.argmin(minus_yg[low])])
        if minus_yg[i] - minus_yg[j] <= tol:
            break
        if it >= max_iter:
            warnings.warn(
                f"SMO hit the {max_iter}-iteration cap before reaching "
                f"tolerance {tol}",
                RuntimeWarning,
                stacklevel=3,
            )
            break
        it += 1
        old_i, old_j = alpha[i], alpha[j]
        quad = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
        if quad <= 0:
            quad = 1e-12
        delta = (minus_yg[i] - minus_yg[j]) / quad
        # Move along the feasible direction d_i = y_i, d_j = -y_j.
        alpha[i] = old_i + y[i] * delta
        alpha[j] = old_j - y[j] * delta
        # Clip back to the box while keeping y'a constant.
        sum_if_same = old_i + old_j
        diff_if_mixed = old_i - old_j
        if y[i] == y[j]:
            alpha[i] = min(max(alpha[i], 0.0), C)
            alpha[j] = sum_if_same - alpha[i]
            if alpha[j] < 0.0 or alpha[j] > C:
                alpha[j] = min(max(alpha[j], 0.0), C)
                alpha[i] = sum_if_same - alpha[j]
        else:
            alpha[i] = min(max(alpha[i], 0.0), C)
            alpha[j] = alpha[i] - diff_if_mixed
            if alpha[j] < 0.0 or alpha[j] > C:
                alpha[j] = min(max(alpha[j], 0.0), C)
                alpha[i] = alpha[j] + diff_if_mixed
        grad += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
    # Bias from the KKT conditions: free vectors pin it exactly,
    # otherwise take the midpoint of the feasible interval.
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        upper = ((alpha >= C) & (y < 0)) | ((alpha <= 0) & (y > 0))
        lower = ((alpha >= C) & (y > 0)) | ((alpha <= 0) & (y < 0))
        hi = float(np.min(yg[upper])) if upper.any() else 0.0
        lo = float(np.max(yg[lower])) if lower.any() else 0.0
        rho = 0.5 * (hi + lo)
    return alpha, -rho


def svm_fit_classify(
    x: np.ndarray,
    y,
    C: float = 5.0,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int | None = None,
) -> KernelMachine:
    """C-SVC with an RBF kernel; labels must be 0/1."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise QsarError("x must be (n, d) with one label per row")
    if not np.isin(y, (0, 1)).all():
        raise QsarError("classification labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise QsarError("training labels contain a single class")
    if gamma is None:
        gamma = _default_gamma(x)
    sign = np.where(y == 1, 1.0, -1.0)
    K = rbf_kernel(x, x, gamma)
    Q = (sign[:, None] * sign[None, :]) * K
    alpha, bias = _smo_solve(Q, -np.ones(x.shape[0]), sign, C, tol, max_iter)
    sv = alpha > 1e-12
    return KernelMachine(
        "svc", x[sv].copy(), (sign * alpha)[sv], bias, gamma, C
    )


def svm_fit_regress(
    x: np.ndarray,
    y,
    C: float = 5.0,
    epsilon: float = 0.1,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int | None = None,
) -> KernelMachine:
    """Epsilon-insensitive SVR with an RBF kernel."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise QsarError("x must be (n, d) with one target per row")
    if epsilon < 0:
        raise QsarError("epsilon must be nonnegative")
    if gamma is None:
        gamma = _default_gamma(x)
    n = x.shape[0]
    K = rbf_kernel(x, x, gamma)
    # Doubled problem: variables (a, a*) with signs (+1, -1).
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    Q = np.block([[K, -K], [-K, K]]) * 1.0
    p = np.concatenate([epsilon - y, epsilon + y])
    alpha, bias = _smo_solve(Q, p, sign, C, tol, max_iter)
    coef = alpha[:n] - alpha[n:]
    sv = np.abs(coef) > 1e-12
    if not sv.any():
        # Every residual sits inside the epsilon tube; keep one vector so
        # prediction still has a defined shape.
        sv[0] = True
        coef[0] = 0.0
    return KernelMachine(
        "svr", x[sv].copy(), coef[sv], bias, gamma, C, epsilon
    )


def decision_function(machine: KernelMachine, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    K = rbf_kernel(x, machine.support_vectors, machine.gamma)
    return K @ machine.dual_coef + machine.bias


def predict(machine: KernelMachine, x: np.ndarray) -> np.ndarray:
    """0/1 labels for a classifier, real values for a regressor."""
    value = decision_function(machine, x)
    if machine.kind == "svc":
        return (value >= 0.0).astype(np.int64)
    return value


def rmse(predicted, truth) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.mean((predicted - truth) ** 2)))


# ---------------------------------------------------------------------------
# Head finetuning


@dataclass
class FinetuneResult:
    state: ModelState
    head_weight: Tensor
    head_bias: Tensor
    task: str
    best_epoch: int
    history: list[dict]


def _pooled(state: ModelState, smiles: list[str], vocab: Vocabulary, batch_size=32):
    """Pooled embeddings as Tensors, one forward pass per mini-batch."""
    outs = []
    capacity = state.config.capacity
    for lo in range(0, len(smiles), batch_size):
        chunk = smiles[lo : lo + batch_size]
        seqs = [encode_single(s, vocab, capacity) for s in chunk]
        outs.append(forward(state, seqs).pooled_output)
    if len(outs) == 1:
        return outs[0]
    out = outs[0]
    for t in outs[1:]:
        out = nn.concat_rows(out, t)
    return out


def _head_loss(z: Tensor, y: np.ndarray, task: str) -> Tensor:
    if task == "regression":
        diff = z + Tensor(-y.astype(z.data.dtype))
        return (diff * diff).mean()
    # Binary cross-entropy on the single logit:
    #   mean(log(1 + e^z) - y*z); fine for the modest logits seen here.
    soft = nn.log1p_exp(z)
    return (soft - z * Tensor(y.astype(z.data.dtype))).mean()


def finetune(
    state: ModelState,
    train_smiles: list[str],
    train_y,
    val_smiles: list[str],
    val_y,
    task: str = "classification",
    lr: float = 3e-5,
    epochs: int = 20,
    batch_size: int = 16,
    freeze_encoder: bool = False,
    seed: int = 0,
    vocab: Vocabulary | None = None,
) -> FinetuneResult:
    """Attach a fresh one-unit head and train; keep the best-validation epoch.

    With ``freeze_encoder`` only the head moves (encoder embeddings are
    computed once and reused); otherwise encoder and head update jointly.
    Zero epochs returns the untrained head as a baseline.
    """
    if task not in ("classification", "regression"):
        raise QsarError(f"unknown task {task!r}")
    train_y = np.asarray(train_y, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64)
    if task == "classification" and not (
        np.isin(train_y, (0, 1)).all() and np.isin(val_y, (0, 1)).all()
    ):
        raise QsarError("classification labels must be 0 or 1")
    vocab = vocab or Vocabulary()
    rng = np.random.Generator(np.random.PCG64(seed))
    d = state.config.hidden
    dtype = state.dtype
    work = state.clone()
    head_w = Tensor(
        rng.uniform(-0.02, 0.02, size=(d, 1)).astype(dtype), requires_grad=True
    )
    head_b = Tensor(np.zeros((1,), dtype=dtype), requires_grad=True)

    trainable = {"head.weight": head_w, "head.bias": head_b}
    if not freeze_encoder:
        trainable.update(work.params)
    opt = init_adam(trainable)
    opt_cfg = PretrainConfig(learning_rate=lr, seed=seed)

    frozen_train = frozen_val = None
    if freeze_encoder:
        frozen_train = _pooled(work, train_smiles, vocab).data.copy()
        frozen_val = _pooled(work, val_smiles, vocab).data.copy()

    def logits(smiles, cached) -> Tensor:
        pooled = Tensor(cached) if cached is not None else _pooled(work, smiles, vocab)
        return (pooled @ head_w + head_b).reshape(-1)

    def val_loss() -> float:
        return float(_head_loss(logits(val_smiles, frozen_val), val_y, task).data)

    best = {
        "epoch": 0,
        "val": val_loss() if len(val_smiles) else np.inf,
        "params": {k: t.data.copy() for k, t in trainable.items()},
    }
    history = [{"epoch": 0, "val_loss": best["val"]}]
    n = len(train_smiles)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            batch_smiles = [train_smiles[i] for i in idx]
            cached = frozen_train[idx] if frozen_train is not None else None
            loss = _head_loss(logits(batch_smiles, cached), train_y[idx], task)
            for t in trainable.values():
                t.grad = None
            loss.backward()
            adam_step(trainable, opt, opt_cfg)
        v = val_loss() if len(val_smiles) else np.inf
        history.append({"epoch": epoch, "val_loss": v})
        # without a validation set the last epoch is the best available
        if v < best["val"] or not val_smiles:
            best = {
                "epoch": epoch,
                "val": v,
                "params": {k: t.data.copy() for k, t in trainable.items()},
            }
    for k, t in trainable.items():
        t.data = best["params"][k]
    return FinetuneResult(work, head_w, head_b, task, best["epoch"], history)


def finetune_predict(
    result: FinetuneResult, smiles: list[str], vocab: Vocabulary | None = None
) -> np.ndarray:
    """Raw head outputs: logits for classification, values for regression."""
    vocab = vocab or Vocabulary()
    pooled = _pooled(result.state, smiles, vocab)
    return (pooled @ result.head_weight + result.head_bias).data.reshape(-1)
