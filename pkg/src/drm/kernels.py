"""Kernel-space quantities and the matrix-free system operator.

The quadratic term of the model is driven by Q = K + alpha*(H - B), where
K is the kernel Gram matrix, H its diagonal, and B the block-diagonal
matrix of per-class Gram blocks divided by the class size. Q is exposed as
an operator with three backends:

* dense: Q assembled explicitly (any kernel);
* linear: linear kernel, never materializing K, cost O(p*n) per matvec;
* factorized: like linear but driven by a user-supplied factor G with
  K ~= G^T G.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import GroupedDataset

_FAMILIES = ("linear", "rbf", "poly")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    rbf: k(x, y) = exp(-gamma * ||x - y||^2)
    poly: k(x, y) = (scale * x'y + coef0)^degree
    """

    family: str = "linear"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "rbf" and self.gamma <= 0:
            raise ValueError("rbf gamma must be > 0")
        if self.family == "poly" and self.degree < 1:
            raise ValueError("poly degree must be >= 1")

    def short(self) -> str:
        if self.family == "rbf":
            return f"rbf(gamma={self.gamma:g})"
        if self.family == "poly":
            return f"poly(degree={self.degree})"
        return "linear"


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    """Evaluate k(x, y) for a single pair of vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(gram(spec, x[:, None], y[:, None])[0, 0])


def gram(spec: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Gram matrix [k(X[:,i], Y[:,j])] for column-wise example matrices."""
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} vs {Y.shape[0]}")
    inner = X.T @ Y
    if spec.family == "linear":
        return inner
    if spec.family == "poly":
        return (spec.scale * inner + spec.coef0) ** spec.degree
    # rbf
    sqx = np.einsum("ij,ij->j", X, X)
    sqy = np.einsum("ij,ij->j", Y, Y)
    d2 = np.maximum(sqx[:, None] + sqy[None, :] - 2.0 * inner, 0.0)
    return np.exp(-spec.gamma * d2)


def compute_K(spec: KernelSpec, ds: GroupedDataset) -> np.ndarray:
    """Kernel matrix of the training examples, symmetrized."""
    K = gram(spec, ds.features, ds.features)
    return 0.5 * (K + K.T)


def compute_H(spec: KernelSpec, ds: GroupedDataset) -> np.ndarray:
    """Diagonal of K as a vector: k(x_i, x_i)."""
    if spec.family == "rbf":
        return np.ones(ds.n)
    sq = np.einsum("ij,ij->j", ds.features, ds.features)
    if spec.family == "linear":
        return sq
    return (spec.scale * sq + spec.coef0) ** spec.degree


def compute_B(spec: KernelSpec, ds: GroupedDataset) -> list[np.ndarray]:
    """Per-class blocks B^i = K^i / n_i (never assembled into an n x n matrix)."""
    blocks = []
    for i in range(ds.g):
        cols = ds.features[:, ds.class_slice(i + 1)]
        Ki = gram(spec, cols, cols)
        blocks.append(0.5 * (Ki + Ki.T) / cols.shape[1])
    return blocks


def compute_Kx(spec: KernelSpec, ds: GroupedDataset, x: np.ndarray) -> np.ndarray:
    """Vector [k(x, x_1), ..., k(x, x_n)], in grouped column order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != ds.p:
        raise ValueError(f"expected {ds.p} features, got {x.shape[0]}")
    out = gram(spec, ds.features, x)
    return out[:, 0] if out.shape[1] == 1 else out


def assemble_dense_q(
    K: np.ndarray, H: np.ndarray, B: list[np.ndarray], alpha: float
) -> np.ndarray:
    """Explicit Q = K + alpha*(diag(H) - blockdiag(B))."""
    Q = K.copy()
    if alpha != 0.0:
        Q[np.diag_indices_from(Q)] += alpha * H
        off = 0
        for blk in B:
            m = blk.shape[0]
            Q[off : off + m, off : off + m] -= alpha * blk
            off += m
    return Q


class QOperator:
    """Symmetric PSD operator v -> (K + alpha*H - alpha*B) v.

    Subclasses provide ``k_matvec`` (Kv), ``h_vector`` (diagonal of K) and
    ``b_matvec`` (Bv); the Q matvec is shared. All backends are immutable
    after construction and reentrant.
    """

    backend = "abstract"

    def __init__(self, n: int, group_sizes: np.ndarray, alpha: float):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.n = n
        self.alpha = float(alpha)
        self.group_sizes = np.asarray(group_sizes, dtype=np.intp)
        self.group_offsets = np.concatenate(
            ([0], np.cumsum(self.group_sizes)[:-1])
        ).astype(np.intp)

    def k_matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def b_matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def h_vector(self) -> np.ndarray:
        raise NotImplementedError

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Q v."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise ValueError(f"expected length {self.n}, got {v.shape[0]}")
        out = self.k_matvec(v)
        if self.alpha != 0.0:
            hv = (
                self.h_vector * v
                if v.ndim == 1
                else self.h_vector[:, None] * v
            )
            out = out + self.alpha * (hv - self.b_matvec(v))
        return out

    def trace_k(self) -> float:
        return float(np.sum(self.h_vector))

    def gershgorin_bound(self) -> float:
        """Cheap certified upper bound on sigma_max(Q): Tr(K) + alpha*max_i K_ii."""
        return self.trace_k() + self.alpha * float(np.max(self.h_vector))


class DenseQOperator(QOperator):
    """Backend holding Q (and K) explicitly; works for any kernel."""

    backend = "dense"

    def __init__(
        self,
        K: np.ndarray,
        H: np.ndarray,
        B: list[np.ndarray],
        group_sizes: np.ndarray,
        alpha: float,
    ):
        super().__init__(K.shape[0], group_sizes, alpha)
        self.K = K
        self._H = np.asarray(H, dtype=np.float64)
        self.B = B
        self.Q = assemble_dense_q(K, self._H, B, alpha)

    @classmethod
    def from_dataset(
        cls, spec: KernelSpec, ds: GroupedDataset, alpha: float
    ) -> "DenseQOperator":
        return cls(
            compute_K(spec, ds),
            compute_H(spec, ds),
            compute_B(spec, ds),
            ds.group_sizes,
            alpha,
        )

    @property
    def h_vector(self) -> np.ndarray:
        return self._H

    def k_matvec(self, v: np.ndarray) -> np.ndarray:
        return self.K @ v

    def b_matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(np.asarray(v, dtype=np.float64))
        for off, m, blk in zip(self.group_offsets, self.group_sizes, self.B):
            out[off : off + m] = blk @ v[off : off + m]
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise ValueError(f"expected length {self.n}, got {v.shape[0]}")
        return self.Q @ v

    def gershgorin_bound(self) -> float:
        k_bound = min(float(np.trace(self.K)), float(np.max(np.sum(np.abs(self.K), axis=1))))
        return k_bound + self.alpha * float(np.max(self._H))


class FactorQOperator(QOperator):
    """Matrix-free backend for K = G^T G with an (r, n) factor G.

    Kv, Bv and Hv cost O(r*n); K is never formed.
    """

    backend = "factorized"

    def __init__(self, G: np.ndarray, group_sizes: np.ndarray, alpha: float):
        G = np.ascontiguousarray(np.asarray(G, dtype=np.float64))
        if not np.all(np.isfinite(G)):
            raise ValueError("factor contains non-finite values")
        super().__init__(G.shape[1], group_sizes, alpha)
        self.G = G
        self._H = np.einsum("ij,ij->j", G, G)

    @property
    def h_vector(self) -> np.ndarray:
        return self._H

    def k_matvec(self, v: np.ndarray) -> np.ndarray:
        return self.G.T @ (self.G @ v)

    def b_matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = np.empty_like(v)
        for off, m in zip(self.group_offsets, self.group_sizes):
            Gi = self.G[:, off : off + m]
            out[off : off + m] = Gi.T @ (Gi @ v[off : off + m]) / m
        return out


class LinearQOperator(FactorQOperator):
    """Linear-kernel backend: the data matrix A itself is the factor."""

    backend = "linear"

    def __init__(self, ds: GroupedDataset, alpha: float):
        super().__init__(ds.features, ds.group_sizes, alpha)


def make_factor_operator(
    G: np.ndarray, group_sizes: np.ndarray, alpha: float
) -> FactorQOperator:
    """Operator for a user-supplied low-rank factor G with K ~= G^T G."""
    return FactorQOperator(G, group_sizes, alpha)


def build_operator(
    spec: KernelSpec, ds: GroupedDataset, alpha: float, prefer_linear: bool = True
) -> QOperator:
    """Pick the linear backend for the linear kernel, dense otherwise."""
    if spec.family == "linear" and prefer_linear:
        return LinearQOperator(ds, alpha)
    return DenseQOperator.from_dataset(spec, ds, alpha)


def sigma_max_estimate(
    op: QOperator, tol: float = 1e-3, max_iter: int = 200
) -> tuple[float, bool]:
    """Upper estimate of sigma_max(Q) via power iteration on the matvec.

    Returns (c, certified). On convergence the Rayleigh estimate is inflated
    by (1 + 2*tol) so c >= sigma_max with margin. If max_iter is hit the
    certified Gershgorin-style bound is returned instead with
    certified=False.
    """
    v = np.ones(op.n) / np.sqrt(op.n)
    lam = 0.0
    for _ in range(max_iter):
        qv = op.matvec(v)
        lam_new = float(v @ qv)
        norm = np.linalg.norm(qv)
        if norm == 0.0:
            return 0.0, True  # Q is (numerically) zero
        v = qv / norm
        if abs(lam_new - lam) <= 0.01 * tol * max(abs(lam_new), 1e-300):
            return lam_new * (1.0 + 2.0 * tol), True
        lam = lam_new
    return op.gershgorin_bound(), False
