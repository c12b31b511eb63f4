"""Class decisions from solved weights, and the end-to-end fit/predict model.

For a solved weight vector w*, the dissimilarity of the test example to
class i is

    delta_i = (w*|Ci)' K (w*|Ci) + (w*|~Ci)' K (w*|~Ci) - 2 (w*|Ci)' Kx,

where w*|Ci zeroes all entries outside the class-i block. The predicted
class is the argmin, ties broken toward the lowest class index.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels, solvers
from .dataset import GroupedDataset, ScalingTransform, group_by_label, scale_apply
from .kernels import KernelSpec, QOperator, build_operator, compute_Kx
from .solvers import DrmHyperParams, SolverConfig, SolverReport


def restrict(w: np.ndarray, class_i: int, group_sizes: np.ndarray) -> np.ndarray:
    """Copy of w with entries outside the class-i block zeroed (1-based i)."""
    group_sizes = np.asarray(group_sizes)
    if not 1 <= class_i <= len(group_sizes):
        raise IndexError(f"class {class_i} out of range 1..{len(group_sizes)}")
    offsets = np.concatenate(([0], np.cumsum(group_sizes)))
    out = np.zeros_like(np.asarray(w, dtype=np.float64))
    lo, hi = offsets[class_i - 1], offsets[class_i]
    out[lo:hi] = w[lo:hi]
    return out


def dissimilarities(
    w: np.ndarray, op: QOperator, Kx: np.ndarray, group_sizes: np.ndarray
) -> np.ndarray:
    """Per-class dissimilarity scores.

    Uses K w|~Ci = K w - K w|Ci, so the cost is one shared K matvec plus one
    per class.
    """
    w = np.asarray(w, dtype=np.float64)
    group_sizes = np.asarray(group_sizes)
    offsets = np.concatenate(([0], np.cumsum(group_sizes)))
    kw = op.k_matvec(w)
    deltas = np.empty(len(group_sizes))
    for i in range(len(group_sizes)):
        wi = restrict(w, i + 1, group_sizes)
        kwi = op.k_matvec(wi)
        wbar = w - wi
        deltas[i] = wi @ kwi + wbar @ (kw - kwi) - 2.0 * (wi @ Kx)
    return deltas


@dataclass
class Prediction:
    """One classified example: original label, per-class scores, solver effort."""

    label: int
    deltas: np.ndarray
    iterations: int
    converged: bool


@dataclass
class DrmModel:
    """Trained model: grouped data plus kernel, hyperparameters, and solver setup.

    Immutable after construction; prediction methods are reentrant. The Q
    operator and (for the closed form) the Cholesky factor of Q + beta*I are
    built lazily once and shared across all predictions.
    """

    data: GroupedDataset
    kernel: KernelSpec
    params: DrmHyperParams
    config: SolverConfig
    scaling: ScalingTransform | None = None
    _op: QOperator | None = field(default=None, repr=False)
    _cho: object = field(default=None, repr=False)

    @property
    def op(self) -> QOperator:
        if self._op is None:
            need_dense = self.config.method == "closed_form"
            self._op = build_operator(
                self.kernel, self.data, self.params.alpha, prefer_linear=not need_dense
            )
        return self._op

    def _cho_factor(self):
        if self._cho is None:
            op = self.op
            M = op.Q.copy()
            M[np.diag_indices_from(M)] += self.params.beta
            self._cho = scipy.linalg.cho_factor(M, lower=True)
        return self._cho

    def _solve(self, Kx: np.ndarray) -> SolverReport:
        if self.config.method == "closed_form":
            w = scipy.linalg.cho_solve(self._cho_factor(), Kx)
            return SolverReport(w=w, iterations=0, termination="one_shot")
        return solvers.solve(self.op, Kx, self.params, self.config)

    def _prepare(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[:, None]
        if X.shape[0] != self.data.p:
            raise ValueError(
                f"expected {self.data.p} features, got {X.shape[0]}"
            )
        if self.scaling is not None:
            X = scale_apply(self.scaling, X)
        return X

    def predict_one(self, x: np.ndarray) -> Prediction:
        """Classify a single example (scaling applied internally)."""
        x = self._prepare(x)
        Kx = compute_Kx(self.kernel, self.data, x)
        if Kx.ndim == 2:
            Kx = Kx[:, 0]
        report = self._solve(Kx)
        deltas = dissimilarities(report.w, self.op, Kx, self.data.group_sizes)
        cls = int(np.argmin(deltas)) + 1
        return Prediction(
            label=int(self.data.original_labels[cls - 1]),
            deltas=deltas,
            iterations=report.iterations,
            converged=report.converged,
        )

    def predict_batch(self, X: np.ndarray) -> list[Prediction]:
        """Classify the columns of X; identical to per-column predict_one calls.

        The closed-form route batches all right-hand sides through one shared
        factorization, which changes cost but not results.
        """
        X = self._prepare(X)
        Kx_all = kernels.gram(self.kernel, self.data.features, X)
        if self.config.method == "closed_form":
            W = scipy.linalg.cho_solve(self._cho_factor(), Kx_all)
            reports = [
                SolverReport(w=W[:, j], iterations=0, termination="one_shot")
                for j in range(X.shape[1])
            ]
        else:
            reports = [
                solvers.solve(self.op, Kx_all[:, j], self.params, self.config)
                for j in range(X.shape[1])
            ]
        preds = []
        for j, report in enumerate(reports):
            deltas = dissimilarities(
                report.w, self.op, Kx_all[:, j], self.data.group_sizes
            )
            cls = int(np.argmin(deltas)) + 1
            preds.append(
                Prediction(
                    label=int(self.data.original_labels[cls - 1]),
                    deltas=deltas,
                    iterations=report.iterations,
                    converged=report.converged,
                )
            )
        return preds


def fit(
    features: np.ndarray,
    labels: np.ndarray,
    kernel: KernelSpec,
    params: DrmHyperParams,
    config: SolverConfig | None = None,
    scale: bool = False,
) -> DrmModel:
    """Group the data (fitting the scaler first if requested) and build a model."""
    from .dataset import scale_fit

    ds = group_by_label(features, labels)
    scaling = None
    if scale:
        scaling = scale_fit(ds)
        ds = GroupedDataset(
            features=scale_apply(scaling, ds.features),
            labels=ds.labels,
            group_offsets=ds.group_offsets,
            group_sizes=ds.group_sizes,
            original_labels=ds.original_labels,
            permutation=ds.permutation,
        )
    return DrmModel(
        data=ds,
        kernel=kernel,
        params=params,
        config=config or SolverConfig(),
        scaling=scaling,
    )


# --- persistence: model.json manifest + train.bin (column-major f64 LE) ---


def _train_bytes(ds: GroupedDataset) -> bytes:
    return np.asfortranarray(ds.features, dtype="<f8").tobytes(order="F")


def save_model(model: DrmModel, manifest_path, train_path) -> None:
    """Write model.json and train.bin. The manifest carries a SHA-256 of train.bin."""
    blob = _train_bytes(model.data)
    manifest = {
        "format": "drm-model-v1",
        "byte_order": "little",
        "dtype": "float64",
        "storage_order": "column-major",
        "p": int(model.data.p),
        "n": int(model.data.n),
        "group_sizes": [int(s) for s in model.data.group_sizes],
        "original_labels": [int(v) for v in model.data.original_labels],
        "kernel": {
            "family": model.kernel.family,
            "gamma": model.kernel.gamma,
            "degree": model.kernel.degree,
            "coef0": model.kernel.coef0,
            "scale": model.kernel.scale,
        },
        "alpha": model.params.alpha,
        "beta": model.params.beta,
        "solver": {
            "method": model.config.method,
            "eps": model.config.eps,
            "max_iter": model.config.max_iter,
            "c_strategy": model.config.c_strategy,
            "c_value": model.config.c_value,
            "apg_b0": model.config.apg_b0,
            "apg_eta": model.config.apg_eta,
            "apg_backtracking": model.config.apg_backtracking,
        },
        "scaling_divisors": (
            None
            if model.scaling is None
            else [float(v) for v in model.scaling.divisors]
        ),
        "train_bin_sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(train_path, "wb") as fh:
        fh.write(blob)
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


class ModelLoadError(ValueError):
    """Raised when the manifest or training blob is invalid or corrupted."""


def load_model(manifest_path, train_path) -> DrmModel:
    """Load and validate a saved model; the blob hash must match the manifest."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "drm-model-v1":
        raise ModelLoadError(f"unknown manifest format {manifest.get('format')!r}")
    with open(train_path, "rb") as fh:
        blob = fh.read()
    if hashlib.sha256(blob).hexdigest() != manifest["train_bin_sha256"]:
        raise ModelLoadError("train.bin content hash mismatch (corrupted model?)")
    p, n = manifest["p"], manifest["n"]
    if len(blob) != 8 * p * n:
        raise ModelLoadError(f"train.bin has {len(blob)} bytes, expected {8 * p * n}")
    features = np.frombuffer(blob, dtype="<f8").reshape((p, n), order="F")
    sizes = np.asarray(manifest["group_sizes"], dtype=np.intp)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.intp)
    labels = np.repeat(np.arange(1, len(sizes) + 1), sizes)
    ds = GroupedDataset(
        features=np.ascontiguousarray(features),
        labels=labels.astype(np.int64),
        group_offsets=offsets,
        group_sizes=sizes,
        original_labels=np.asarray(manifest["original_labels"], dtype=np.int64),
        permutation=np.arange(n, dtype=np.intp),
    )
    kv = manifest["kernel"]
    kernel = KernelSpec(
        family=kv["family"],
        gamma=kv["gamma"],
        degree=kv["degree"],
        coef0=kv["coef0"],
        scale=kv["scale"],
    )
    sv = manifest["solver"]
    config = SolverConfig(
        method=sv["method"],
        eps=sv["eps"],
        max_iter=sv["max_iter"],
        c_strategy=sv["c_strategy"],
        c_value=sv["c_value"],
        apg_b0=sv["apg_b0"],
        apg_eta=sv["apg_eta"],
        apg_backtracking=sv["apg_backtracking"],
    )
    scaling = None
    if manifest["scaling_divisors"] is not None:
        scaling = ScalingTransform(
            divisors=np.asarray(manifest["scaling_divisors"], dtype=np.float64)
        )
    return DrmModel(
        data=ds,
        kernel=kernel,
        params=DrmHyperParams(alpha=manifest["alpha"], beta=manifest["beta"]),
        config=config,
        scaling=scaling,
    )
