"""Data ingestion: parsing, grouping by class, scaling, and splitting.

The training matrix is stored column-wise: features are rows, examples are
columns, and columns of one class are contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    """Raised on malformed input data."""


@dataclass(frozen=True)
class GroupedDataset:
    """Training data with contiguous class blocks.

    features: (p, n) dense matrix, one example per column.
    labels: contiguous class ids 1..g, one per column, non-decreasing.
    group_offsets: start column of each class block.
    group_sizes: number of columns per class.
    original_labels: original label value of each class id (index k -> class k+1).
    permutation: column order applied to the input, so
        ``input_features[:, permutation] == features``.
    """

    features: np.ndarray
    labels: np.ndarray
    group_offsets: np.ndarray
    group_sizes: np.ndarray
    original_labels: np.ndarray
    permutation: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def p(self) -> int:
        return self.features.shape[0]

    @property
    def g(self) -> int:
        return len(self.group_sizes)

    def class_slice(self, i: int) -> slice:
        """Column slice of class i (1-based)."""
        if not 1 <= i <= self.g:
            raise IndexError(f"class {i} out of range 1..{self.g}")
        start = self.group_offsets[i - 1]
        return slice(start, start + self.group_sizes[i - 1])

    def subset(self, idx: np.ndarray) -> "GroupedDataset":
        """Dataset restricted to the given columns (regrouped)."""
        idx = np.asarray(idx, dtype=np.intp)
        raw_labels = self.original_labels[self.labels[idx] - 1]
        return group_by_label(self.features[:, idx], raw_labels)


@dataclass(frozen=True)
class ScalingTransform:
    """Per-feature divisors: infinity norm of each feature row on the training set."""

    divisors: np.ndarray


@dataclass(frozen=True)
class SplitSpec:
    """Train/test split specification.

    mode: "holdout", "kfold", or "loo".
    """

    mode: str = "kfold"
    fraction: float = 0.2
    k: int = 5
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.mode not in ("holdout", "kfold", "loo"):
            raise DatasetError(f"unknown split mode {self.mode!r}")
        if self.mode == "holdout" and not 0.0 < self.fraction < 1.0:
            raise DatasetError("holdout fraction must be in (0, 1)")
        if self.mode == "kfold" and self.k < 2:
            raise DatasetError("k-fold requires k >= 2")


def parse_libsvm(text: str | bytes) -> tuple[np.ndarray, np.ndarray]:
    """Parse LIBSVM-format text into a dense (p, n) matrix and label vector.

    Lines are ``<label> <idx>:<val> ...`` with 1-based, strictly ascending
    indices. Absent indices are zero; p is the largest index seen.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    labels: list[int] = []
    columns: list[list[tuple[int, float]]] = []
    max_idx = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            label = int(float(parts[0]))
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: bad label {parts[0]!r}") from exc
        entries = []
        prev = 0
        for tok in parts[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                val = float(val_s)
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: bad entry {tok!r}") from exc
            if idx <= prev:
                raise DatasetError(
                    f"line {lineno}: indices must be 1-based and ascending (got {idx})"
                )
            prev = idx
            entries.append((idx, val))
            max_idx = max(max_idx, idx)
        labels.append(label)
        columns.append(entries)
    if not labels:
        raise DatasetError("empty input")
    features = np.zeros((max_idx, len(columns)))
    for j, entries in enumerate(columns):
        for idx, val in entries:
            features[idx - 1, j] = val
    if not np.all(np.isfinite(features)):
        raise DatasetError("non-finite feature value")
    return features, np.asarray(labels, dtype=np.int64)


def parse_csv(
    text: str | bytes, label_column: int = 0, has_header: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Parse numeric CSV into a dense (p, n) matrix and label vector.

    CSV rows are examples; they become columns of the returned matrix.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    lines = text.splitlines()
    if has_header and lines:
        lines = lines[1:]
    for lineno, line in enumerate(lines, start=2 if has_header else 1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
            if not 0 <= label_column < width:
                raise DatasetError(f"label column {label_column} out of range")
        elif len(cells) != width:
            raise DatasetError(f"line {lineno}: ragged row ({len(cells)} != {width})")
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: non-numeric cell") from exc
        labels.append(int(values[label_column]))
        rows.append([v for i, v in enumerate(values) if i != label_column])
    if not rows:
        raise DatasetError("empty input")
    features = np.asarray(rows).T
    if not np.all(np.isfinite(features)):
        raise DatasetError("non-finite feature value")
    return features, np.asarray(labels, dtype=np.int64)


def group_by_label(features: np.ndarray, labels: np.ndarray) -> GroupedDataset:
    """Permute columns so classes are contiguous, remapping labels to 1..g.

    Class ids follow ascending order of the original labels; within a class,
    the original column order is kept (stable sort).
    """
    features = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[1] != labels.shape[0]:
        raise DatasetError("features/labels shape mismatch")
    if not np.all(np.isfinite(features)):
        raise DatasetError("non-finite feature value")
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise DatasetError("need at least 2 distinct classes")
    perm = np.argsort(labels, kind="stable")
    new_labels = np.searchsorted(uniq, labels[perm]) + 1
    sizes = np.bincount(new_labels)[1:]
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return GroupedDataset(
        features=np.ascontiguousarray(features[:, perm]),
        labels=new_labels.astype(np.int64),
        group_offsets=offsets.astype(np.intp),
        group_sizes=sizes.astype(np.intp),
        original_labels=uniq,
        permutation=perm.astype(np.intp),
    )


def scale_fit(train: GroupedDataset) -> ScalingTransform:
    """Fit per-feature infinity-norm divisors on training data.

    All-zero feature rows get divisor 1 so the feature count is preserved.
    """
    div = np.abs(train.features).max(axis=1)
    div = np.where(div > 0, div, 1.0)
    return ScalingTransform(divisors=div)


def scale_apply(transform: ScalingTransform, matrix: np.ndarray) -> np.ndarray:
    """Divide each feature row by its training divisor."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[0] != transform.divisors.shape[0]:
        raise DatasetError(
            f"expected {transform.divisors.shape[0]} features, got {matrix.shape[0]}"
        )
    return matrix / transform.divisors[:, None]


def split(ds: GroupedDataset, spec: SplitSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Produce (train_idx, test_idx) pairs of column indices, deterministic in seed."""
    n = ds.n
    rng = np.random.default_rng(spec.seed)
    if spec.mode == "loo":
        all_idx = np.arange(n)
        return [
            (np.delete(all_idx, i), np.array([i], dtype=np.intp)) for i in range(n)
        ]
    if spec.stratified:
        class_indices = [np.arange(n)[ds.class_slice(i + 1)] for i in range(ds.g)]
        for idx in class_indices:
            rng.shuffle(idx)
    else:
        order = rng.permutation(n)
        class_indices = [order]
    if spec.mode == "holdout":
        train_parts, test_parts = [], []
        for idx in class_indices:
            n_test = int(round(spec.fraction * len(idx)))
            if spec.stratified:
                n_test = min(n_test, len(idx) - 1)  # keep >=1 train example per class
            test_parts.append(idx[:n_test])
            train_parts.append(idx[n_test:])
        return [
            (np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts)))
        ]
    # k-fold
    if spec.stratified and spec.k > min(ds.group_sizes):
        raise DatasetError(
            f"stratified {spec.k}-fold infeasible: smallest class has "
            f"{min(ds.group_sizes)} examples"
        )
    fold_of = np.empty(n, dtype=np.intp)
    for idx in class_indices:
        fold_of[idx] = np.arange(len(idx)) % spec.k
    all_idx = np.arange(n)
    folds = []
    for f in range(spec.k):
        test = all_idx[fold_of == f]
        train = all_idx[fold_of != f]
        folds.append((train, test))
    return folds
