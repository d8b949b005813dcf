"""Linear-kernel SVM trained by sequential minimal optimization.

The dual problem  max W(a) = sum(a) - 1/2 a'Qa,  Q_ij = y_i y_j x_i.x_j,
subject to 0 <= a_i <= C and sum(a_i y_i) = 0, is solved by repeatedly
optimizing the maximal violating pair (Keerthi-style working-set rule):
i maximizes -y G over I_up, j minimizes it over I_low, and the pair is
updated analytically with clipping to the box. The gap m(a) - M(a) is the
KKT violation; training stops when it falls below tol.

Multiclass is one-vs-one with majority voting. Cross-validation refits
data-dependent feature vocabularies on every training split.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Hashable, Sequence

import numpy as np

from .corpus import Chunk
from .errors import ConvergenceError
from .features import FeaturePlan, space_feature_names, vectorize_chunks

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 1000

_MODEL_MAGIC = "varieties-svm v1"


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    C: float
    alphas: np.ndarray | None
    labels: tuple[Hashable, Hashable]  # (positive, negative)
    feature_names: tuple[str, ...] | None = None
    objective_path: tuple[float, ...] = ()
    kkt_gap: float = 0.0

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    def decision(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != self.weights.shape:
            raise ValueError(f"dimension mismatch: model {self.dim}, input {x.shape}")
        return float(self.weights @ x + self.bias)


def _smo(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    """Core pair-update loop. Returns (alpha, bias, objective trace, gap)."""
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 1/2 a'Qa - sum(a)
    trace = []

    def objective() -> float:
        # W(a) = sum(a) - 1/2 a'Qa, and a'Qa = a.(G + 1)
        return float(0.5 * alpha.sum() - 0.5 * alpha @ G)

    trace.append(objective())
    gap = np.inf
    pos = y > 0
    for _ in range(max_iter):
        yG = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0.0))
        low = (pos & (alpha > 0.0)) | (~pos & (alpha < C))
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        j = int(np.flatnonzero(low)[np.argmin(yG[low])])
        gap = yG[i] - yG[j]
        if gap <= tol:
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step = gap / max(eta, 1e-12)
        headroom_i = C - alpha[i] if y[i] > 0 else alpha[i]
        headroom_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(step, headroom_i, headroom_j)
        # land exactly on the box boundary when the step is clipped there
        if step >= headroom_i:
            alpha[i] = C if y[i] > 0 else 0.0
        else:
            alpha[i] += y[i] * step
        if step >= headroom_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        else:
            alpha[j] -= y[j] * step
        G += y * step * (K[:, i] - K[:, j])
        obj = objective()
        if obj < trace[-1] - 1e-9 * max(1.0, abs(obj)):
            raise AssertionError(
                f"dual objective decreased: {trace[-1]} -> {obj}"
            )
        trace.append(obj)
    else:
        raise ConvergenceError(
            f"SMO did not reach tol={tol} within {max_iter} iterations "
            f"(KKT gap {gap:.3e})"
        )

    # admissible bias lies in [m(a), M(a)]; take the midpoint
    yG = -y * G
    up = (pos & (alpha < C)) | (~pos & (alpha > 0.0))
    low = (pos & (alpha > 0.0)) | (~pos & (alpha < C))
    m = yG[up].max() if up.any() else 0.0
    M = yG[low].min() if low.any() else 0.0
    bias = 0.5 * (m + M)
    return alpha, float(bias), tuple(trace), float(max(gap, 0.0))


def train_binary(
    X: Sequence[Sequence[float]] | np.ndarray,
    labels: Sequence[Hashable],
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    feature_names: Sequence[str] | None = None,
) -> SvmModel:
    """Train a binary linear SVM; the lexicographically smaller label is the
    positive class."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array of example vectors")
    distinct = sorted(set(labels), key=repr)
    if len(distinct) != 2:
        raise ValueError(f"need exactly 2 classes, got {distinct}")
    positive, negative = distinct
    y = np.array([1.0 if lab == positive else -1.0 for lab in labels])
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and labels disagree in length")

    K = X @ X.T
    alpha, bias, trace, gap = _smo(K, y, C, tol, max_iter=max_passes * max(len(y), 10))
    weights = (alpha * y) @ X
    model = SvmModel(
        weights=weights,
        bias=bias,
        C=C,
        alphas=alpha,
        labels=(positive, negative),
        feature_names=tuple(feature_names) if feature_names is not None else None,
        objective_path=trace,
        kkt_gap=gap,
    )
    return model


def predict(model: SvmModel, x: np.ndarray) -> tuple[Hashable, float]:
    """(label, raw decision value); the boundary itself goes to the positive
    class."""
    value = model.decision(x)
    return (model.labels[0] if value >= 0 else model.labels[1]), value


def dual_objective(model: SvmModel, X: np.ndarray, labels: Sequence[Hashable]) -> float:
    """W(a) recomputed from stored alphas (for verification)."""
    if model.alphas is None:
        raise ValueError("model carries no dual coefficients")
    X = np.asarray(X, dtype=float)
    y = np.array([1.0 if lab == model.labels[0] else -1.0 for lab in labels])
    Q = (y[:, None] * X) @ (y[:, None] * X).T
    a = model.alphas
    return float(a.sum() - 0.5 * a @ Q @ a)


# ---------------------------------------------------------------------------
# one-vs-one multiclass


@dataclass
class OvoEnsemble:
    models: dict[tuple[Hashable, Hashable], SvmModel]
    label_order: tuple[Hashable, ...]


def train_multiclass(
    X: np.ndarray,
    labels: Sequence[Hashable],
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    feature_names: Sequence[str] | None = None,
) -> OvoEnsemble:
    X = np.asarray(X, dtype=float)
    order = tuple(sorted(set(labels), key=repr))
    if len(order) < 2:
        raise ValueError("need at least 2 classes")
    labels = list(labels)
    models = {}
    for a_idx in range(len(order)):
        for b_idx in range(a_idx + 1, len(order)):
            pair = (order[a_idx], order[b_idx])
            rows = [i for i, lab in enumerate(labels) if lab in pair]
            models[pair] = train_binary(
                X[rows],
                [labels[i] for i in rows],
                C=C,
                tol=tol,
                max_passes=max_passes,
                feature_names=feature_names,
            )
    return OvoEnsemble(models=models, label_order=order)


def predict_multiclass(ensemble: OvoEnsemble, x: np.ndarray) -> Hashable:
    """Majority vote; ties broken by the largest sum of winning decision
    magnitudes, then by fixed label order."""
    votes: dict[Hashable, int] = {lab: 0 for lab in ensemble.label_order}
    magnitude: dict[Hashable, float] = {lab: 0.0 for lab in ensemble.label_order}
    for model in ensemble.models.values():
        winner, value = predict(model, x)
        votes[winner] += 1
        magnitude[winner] += abs(value)
    rank = {lab: i for i, lab in enumerate(ensemble.label_order)}
    return max(
        ensemble.label_order,
        key=lambda lab: (votes[lab], magnitude[lab], -rank[lab]),
    )


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class CvReport:
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float
    confusion: np.ndarray  # rows: true label, cols: predicted
    label_order: tuple[Hashable, ...]
    seed: int

    @property
    def evaluated(self) -> int:
        return int(self.confusion.sum())


def stratified_folds(
    labels: Sequence[Hashable], folds: int, seed: int
) -> list[list[int]]:
    """Deterministic stratified fold assignment: per-class shuffle, then
    round-robin dealing."""
    rng = Random(seed)
    by_label: dict[Hashable, list[int]] = {}
    for idx, lab in enumerate(labels):
        by_label.setdefault(lab, []).append(idx)
    assignment: list[list[int]] = [[] for _ in range(folds)]
    offset = 0
    for lab in sorted(by_label, key=repr):
        indices = by_label[lab]
        rng.shuffle(indices)
        for pos, idx in enumerate(indices):
            assignment[(pos + offset) % folds].append(idx)
        offset += len(indices)
    return assignment


def cross_validate(
    chunks: Sequence[Chunk],
    labels: Sequence[Hashable],
    plan: FeaturePlan,
    folds: int = 10,
    seed: int = 0,
    C: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
) -> CvReport:
    """Stratified k-fold CV. Feature vocabularies (top-k trigrams, positional
    pairs) are re-selected on each training split to avoid leakage."""
    if len(chunks) != len(labels):
        raise ValueError("chunks and labels disagree in length")
    if len(chunks) < folds:
        raise ValueError(f"cannot make {folds} folds from {len(chunks)} chunks")
    counts: dict[Hashable, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    if len(set(counts.values())) > 1:
        summary = ", ".join(
            f"{lab!r}: {counts[lab]}" for lab in sorted(counts, key=repr)
        )
        warnings.warn(f"classes are not balanced ({summary})", stacklevel=2)
    order = tuple(sorted(counts, key=repr))
    index_of = {lab: i for i, lab in enumerate(order)}
    confusion = np.zeros((len(order), len(order)), dtype=int)
    fold_acc = []
    assignment = stratified_folds(labels, folds, seed)
    multiclass = len(order) > 2
    for test_idx in assignment:
        test_set = set(test_idx)
        train_idx = [i for i in range(len(chunks)) if i not in test_set]
        train_chunks = [chunks[i] for i in train_idx]
        spaces = plan.fit(train_chunks)
        names = space_feature_names(spaces)
        X_train = vectorize_chunks(train_chunks, spaces)
        y_train = [labels[i] for i in train_idx]
        X_test = vectorize_chunks([chunks[i] for i in test_idx], spaces)
        if multiclass:
            ensemble = train_multiclass(
                X_train, y_train, C=C, tol=tol, feature_names=names
            )
            predictions = [predict_multiclass(ensemble, x) for x in X_test]
        else:
            model = train_binary(X_train, y_train, C=C, tol=tol, feature_names=names)
            predictions = [predict(model, x)[0] for x in X_test]
        hits = 0
        for idx, pred in zip(test_idx, predictions):
            true = labels[idx]
            confusion[index_of[true], index_of[pred]] += 1
            hits += int(pred == true)
        fold_acc.append(hits / len(test_idx))
    return CvReport(
        fold_accuracies=tuple(fold_acc),
        mean_accuracy=float(np.mean(fold_acc)),
        confusion=confusion,
        label_order=order,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# interpretation and persistence


def rank_features(model: SvmModel) -> list[tuple[str, float]]:
    """(feature name, signed weight) sorted by |weight| descending; ties keep
    input order."""
    names = (
        list(model.feature_names)
        if model.feature_names is not None
        else [f"f{i}" for i in range(model.dim)]
    )
    order = np.argsort(-np.abs(model.weights), kind="stable")
    return [(names[i], float(model.weights[i])) for i in order]


def save_model(model: SvmModel, path: str | Path) -> None:
    names = (
        list(model.feature_names)
        if model.feature_names is not None
        else [f"f{i}" for i in range(model.dim)]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_MODEL_MAGIC}\n")
        fh.write(f"dim\t{model.dim}\n")
        fh.write(f"C\t{model.C!r}\n")
        fh.write(f"labels\t{model.labels[0]}\t{model.labels[1]}\n")
        for name, weight in zip(names, model.weights):
            fh.write(f"{name}\t{float(weight)!r}\n")
        fh.write(f"bias\t{float(model.bias)!r}\n")


def load_model(path: str | Path) -> SvmModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a {_MODEL_MAGIC} file")
    dim = int(lines[1].split("\t")[1])
    C = float(lines[2].split("\t")[1])
    _, pos_label, neg_label = lines[3].split("\t")
    weight_lines = lines[4 : 4 + dim]
    if len(weight_lines) != dim or not lines[4 + dim].startswith("bias\t"):
        raise ValueError(f"{path}: expected {dim} weight lines followed by bias")
    names = []
    weights = np.zeros(dim)
    for k, line in enumerate(weight_lines):
        name, _, value = line.rpartition("\t")
        names.append(name)
        weights[k] = float(value)
    bias = float(lines[4 + dim].split("\t")[1])
    return SvmModel(
        weights=weights,
        bias=bias,
        C=C,
        alphas=None,
        labels=(pos_label, neg_label),
        feature_names=tuple(names),
    )
