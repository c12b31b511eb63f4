"""Scoring (accuracy, confusion matrix, G-mean) and cross-validated grid search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .classifier import dissimilarities, restrict
from .dataset import (
    GroupedDataset,
    SplitSpec,
    scale_apply,
    scale_fit,
    split,
)
from .kernels import KernelSpec, assemble_dense_q
from .solvers import DrmHyperParams

DECADES = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
POLY_DEGREES = (2, 3, 4, 5, 8, 10)

# CV protocol constants: leave-one-out up to this many training examples,
# stratified k-fold beyond; the CV pool is subsampled past the cap.
LOOCV_MAX_N = 300
CV_FOLDS = 5
CV_SUBSAMPLE_CAP = 3000


class MetricError(ValueError):
    """Raised when a metric is undefined for the given inputs."""


@dataclass
class ConfusionMatrix:
    """g x g count matrix; counts[i, j] = truth class i predicted as class j.

    Classes are indexed by position in ``labels`` (original label values).
    """

    counts: np.ndarray
    labels: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def binary_counts(self, positive_label) -> tuple[int, int, int, int]:
        """(TP, FN, FP, TN) treating ``positive_label`` as the positive class."""
        if self.counts.shape[0] != 2:
            raise MetricError("binary counts require a 2-class confusion matrix")
        pos = int(np.nonzero(self.labels == positive_label)[0][0])
        neg = 1 - pos
        c = self.counts
        return int(c[pos, pos]), int(c[pos, neg]), int(c[neg, pos]), int(c[neg, neg])


def accuracy(preds, truth) -> float:
    """Fraction of matching labels."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape or preds.size == 0:
        raise MetricError("predictions and truth must be equal-length, non-empty")
    return float(np.mean(preds == truth))


def confusion(preds, truth, labels=None) -> ConfusionMatrix:
    """Count matrix over the union of observed labels (or an explicit order)."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape or preds.size == 0:
        raise MetricError("predictions and truth must be equal-length, non-empty")
    if labels is None:
        labels = np.unique(np.concatenate([truth, preds]))
    else:
        labels = np.asarray(labels)
    index = {v: i for i, v in enumerate(labels.tolist())}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(truth.tolist(), preds.tolist()):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(counts=counts, labels=labels)


def g_mean(cm: ConfusionMatrix, positive_label=None) -> float:
    """sqrt(TP/(TP+FN) * TN/(TN+FP)) for a binary confusion matrix.

    The minority class (fewer actual examples) is positive by default.
    """
    if cm.counts.shape[0] != 2:
        raise MetricError("G-mean requires a binary confusion matrix")
    row_sums = cm.counts.sum(axis=1)
    if positive_label is None:
        positive_label = cm.labels[int(np.argmin(row_sums))]
    tp, fn, fp, tn = cm.binary_counts(positive_label)
    if tp + fn == 0 or tn + fp == 0:
        raise MetricError("G-mean undefined: a class has no actual examples")
    return math.sqrt((tp / (tp + fn)) * (tn / (tn + fp)))


@dataclass(frozen=True)
class GridCell:
    """One hyperparameter configuration."""

    kernel: KernelSpec
    alpha: float
    beta: float
    scaled: bool

    def sort_key(self):
        # deterministic tie order: smaller beta, then smaller alpha,
        # then linear < rbf < poly, then kernel parameter, then unscaled first
        kernel_order = {"linear": 0, "rbf": 1, "poly": 2}[self.kernel.family]
        kparam = self.kernel.gamma if self.kernel.family == "rbf" else float(
            self.kernel.degree
        )
        return (self.beta, self.alpha, kernel_order, kparam, self.scaled)


@dataclass(frozen=True)
class Grid:
    """Candidate kernels and hyperparameter values for the CV sweep."""

    kernel_families: tuple[str, ...] = ("linear", "rbf", "poly")
    rbf_gammas: tuple[float, ...] = DECADES
    poly_degrees: tuple[int, ...] = POLY_DEGREES
    alphas: tuple[float, ...] = DECADES
    betas: tuple[float, ...] = DECADES
    scaling: tuple[bool, ...] = (True,)

    def __post_init__(self):
        if not self.kernel_families or not self.alphas or not self.betas:
            raise ValueError("grid must be nonempty")
        if any(b <= 0 for b in self.betas):
            raise ValueError("all beta candidates must be > 0")

    def kernel_specs(self) -> list[KernelSpec]:
        specs = []
        for fam in self.kernel_families:
            if fam == "linear":
                specs.append(KernelSpec(family="linear"))
            elif fam == "rbf":
                specs.extend(KernelSpec(family="rbf", gamma=g) for g in self.rbf_gammas)
            elif fam == "poly":
                specs.extend(
                    KernelSpec(family="poly", degree=d) for d in self.poly_degrees
                )
            else:
                raise ValueError(f"unknown kernel family {fam!r}")
        return specs

    def cells(self) -> list[GridCell]:
        return [
            GridCell(kernel=ks, alpha=a, beta=b, scaled=s)
            for s in self.scaling
            for ks in self.kernel_specs()
            for a in self.alphas
            for b in self.betas
        ]


@dataclass
class CvRow:
    cell: GridCell
    mean_metric: float
    std_metric: float
    folds: int
    failed: bool = False


@dataclass
class CvResult:
    """Full CV table plus the selected cell (max mean metric, deterministic ties)."""

    rows: list[CvRow]
    selected: CvRow
    metric: str

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("kernel,kernel_param,alpha,beta,scaled,mean_metric,std_metric\n")
            for row in self.rows:
                ks = row.cell.kernel
                kparam = (
                    ks.gamma
                    if ks.family == "rbf"
                    else (ks.degree if ks.family == "poly" else "")
                )
                fh.write(
                    f"{ks.family},{kparam},{row.cell.alpha:g},{row.cell.beta:g},"
                    f"{int(row.cell.scaled)},{row.mean_metric!r},{row.std_metric!r}\n"
                )


class _FoldContext:
    """Per-(kernel, fold) slices of the precomputed full kernel matrix."""

    def __init__(self, K_full, H_full, labels, train_idx, test_idx, original_labels):
        # regroup the training indices so class blocks are contiguous
        order = np.argsort(labels[train_idx], kind="stable")
        tr = train_idx[order]
        self.sizes = np.bincount(labels[tr], minlength=len(original_labels) + 1)[1:]
        self.offsets = np.concatenate(([0], np.cumsum(self.sizes)))
        self.K = K_full[np.ix_(tr, tr)]
        self.Kx = K_full[np.ix_(tr, test_idx)]
        self.H = H_full[tr]
        self.truth = original_labels[labels[test_idx] - 1]
        self.original_labels = original_labels
        self._alpha = None
        self._M_alpha = None

    def q_plus_beta(self, alpha: float, beta: float) -> np.ndarray:
        if self._alpha != alpha:
            blocks = [
                self.K[lo:hi, lo:hi] / max(hi - lo, 1)
                for lo, hi in zip(self.offsets[:-1], self.offsets[1:])
            ]
            self._M_alpha = assemble_dense_q(self.K, self.H, blocks, alpha)
            self._alpha = alpha
        M = self._M_alpha.copy()
        M[np.diag_indices_from(M)] += beta
        return M

    def predict(self, alpha: float, beta: float) -> np.ndarray:
        cho = scipy.linalg.cho_factor(
            self.q_plus_beta(alpha, beta), lower=True, check_finite=False
        )
        W = scipy.linalg.cho_solve(cho, self.Kx, check_finite=False)
        # vectorized deltas over the test batch, sharing one K @ W product
        KW = self.K @ W
        g = len(self.sizes)
        deltas = np.empty((g, W.shape[1]))
        wKw = np.einsum("ij,ij->j", W, KW)
        for i in range(g):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            Wi = W[lo:hi]
            wiKwi = np.einsum("ij,ij->j", Wi, self.K[lo:hi, lo:hi] @ Wi)
            wKwi = np.einsum("ij,ij->j", W, self.K[:, lo:hi] @ Wi)
            # (w - wi)' K (w - wi) = w'Kw - 2 w'Kwi + wi'Kwi
            deltas[i] = (
                wiKwi
                + (wKw - 2.0 * wKwi + wiKwi)
                - 2.0 * np.einsum("ij,ij->j", Wi, self.Kx[lo:hi])
            )
        pred_cls = np.argmin(deltas, axis=0) + 1
        return self.original_labels[pred_cls - 1]


def _metric_value(preds, truth, metric: str, labels) -> float:
    if metric == "accuracy":
        return accuracy(preds, truth)
    if metric == "gmean":
        return g_mean(confusion(preds, truth, labels=labels))
    raise ValueError(f"unknown metric {metric!r}")


def default_split_spec(n: int, seed: int = 0) -> SplitSpec:
    """LOOCV for small training sets, stratified k-fold beyond."""
    if n <= LOOCV_MAX_N:
        return SplitSpec(mode="loo", seed=seed)
    return SplitSpec(mode="kfold", k=CV_FOLDS, seed=seed, stratified=True)


def grid_search(
    train: GroupedDataset,
    grid: Grid,
    split_spec: SplitSpec | None = None,
    metric: str = "accuracy",
    seed: int = 0,
) -> CvResult:
    """Cross-validated sweep over all grid cells.

    The kernel matrix is computed once per (kernel, scaling) pair on the CV
    pool and sliced per fold; each cell is then a batched closed-form solve.
    Failing cells score 0 with a flag instead of aborting the sweep. CV pools
    larger than the subsample cap are subsampled (stratified, seeded).
    """
    if metric not in ("accuracy", "gmean"):
        raise ValueError(f"unknown metric {metric!r}")
    pool = train
    if pool.n > CV_SUBSAMPLE_CAP:
        rng = np.random.default_rng(seed)
        keep = []
        for i in range(pool.g):
            idx = np.arange(pool.n)[pool.class_slice(i + 1)]
            m = max(1, int(round(CV_SUBSAMPLE_CAP * len(idx) / pool.n)))
            keep.append(rng.choice(idx, size=min(m, len(idx)), replace=False))
        pool = pool.subset(np.sort(np.concatenate(keep)))
    if split_spec is None:
        split_spec = default_split_spec(pool.n, seed=seed)
    folds = split(pool, split_spec)

    features_by_scaled = {False: pool.features}
    if any(grid.scaling):
        features_by_scaled[True] = scale_apply(scale_fit(pool), pool.features)

    rows = []
    for scaled in sorted(set(grid.scaling)):
        feats = features_by_scaled[scaled]
        view = GroupedDataset(
            features=feats,
            labels=pool.labels,
            group_offsets=pool.group_offsets,
            group_sizes=pool.group_sizes,
            original_labels=pool.original_labels,
            permutation=pool.permutation,
        )
        for ks in grid.kernel_specs():
            K_full = kernels.compute_K(ks, view)
            H_full = kernels.compute_H(ks, view)
            contexts = [
                _FoldContext(
                    K_full, H_full, pool.labels, tr_idx, te_idx, pool.original_labels
                )
                for tr_idx, te_idx in folds
            ]
            for alpha in grid.alphas:
                for beta in grid.betas:
                    cell = GridCell(kernel=ks, alpha=alpha, beta=beta, scaled=scaled)
                    fold_outputs = []
                    failed = False
                    for ctx in contexts:
                        try:
                            fold_outputs.append((ctx.predict(alpha, beta), ctx.truth))
                        except (scipy.linalg.LinAlgError, ValueError):
                            failed = True
                            break
                    if failed:
                        rows.append(CvRow(cell, 0.0, 0.0, len(folds), failed=True))
                        continue
                    try:
                        if split_spec.mode == "loo":
                            # singleton test sets: pool the predictions
                            preds = np.concatenate([p for p, _ in fold_outputs])
                            truth = np.concatenate([t for _, t in fold_outputs])
                            mean = _metric_value(
                                preds, truth, metric, pool.original_labels
                            )
                            std = 0.0
                        else:
                            scores = [
                                _metric_value(p, t, metric, pool.original_labels)
                                for p, t in fold_outputs
                            ]
                            mean = float(np.mean(scores))
                            std = float(np.std(scores))
                        rows.append(CvRow(cell, mean, std, len(folds)))
                    except MetricError:
                        rows.append(CvRow(cell, 0.0, 0.0, len(folds), failed=True))
    best = max(rows, key=lambda r: (r.mean_metric, _neg_key(r.cell)))
    return CvResult(rows=rows, selected=best, metric=metric)


def _neg_key(cell: GridCell):
    # max() prefers the *largest* secondary key, so negate the tie order
    beta, alpha, korder, kparam, scaled = cell.sort_key()
    return (-beta, -alpha, -korder, -kparam, not scaled)


def loocv_score(preds, truth, metric: str) -> float:
    if metric == "accuracy":
        return accuracy(preds, truth)
    return g_mean(confusion(preds, truth))
