"""Solvers for the regularized quadratic f(w) = 1/2 w'Qw - w'Kx + beta/2 ||w||^2.

Four routes to the unique minimizer:

* closed form: one SPD solve of (Q + beta*I) w = Kx;
* gd: gradient descent with exact line search;
* ppa: proximal-point iteration w+ = (Kx - Qw + c*w)/(beta + c), c >= sigma_max(Q);
* apg: accelerated proximal gradient with Nesterov momentum and optional
  Lipschitz backtracking.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .kernels import QOperator, assemble_dense_q, sigma_max_estimate

_METHODS = ("closed_form", "gd", "ppa", "apg")


@dataclass(frozen=True)
class DrmHyperParams:
    """Model hyperparameters: scatter weight alpha >= 0, ridge weight beta > 0."""

    alpha: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


@dataclass(frozen=True)
class SolverConfig:
    """Iterative-solver configuration.

    c_strategy: "power_iteration", "gershgorin", or "fixed"; "fixed" reads
    ``c_value``. APG uses ``apg_b0`` (initial Lipschitz guess; None picks
    beta + mean diagonal of Q), ``apg_eta`` (backtracking factor) and
    ``apg_backtracking``.
    """

    method: str = "closed_form"
    eps: float = 1e-5
    max_iter: int = 150
    c_strategy: str = "power_iteration"
    c_value: float | None = None
    apg_b0: float | None = None
    apg_eta: float = 2.0
    apg_backtracking: bool = True

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.c_strategy not in ("power_iteration", "gershgorin", "fixed"):
            raise ValueError(f"unknown c strategy {self.c_strategy!r}")
        if self.c_strategy == "fixed" and (self.c_value is None or self.c_value <= 0):
            raise ValueError("fixed c strategy requires a positive c value")
        if self.apg_eta <= 1:
            raise ValueError("apg eta must be > 1")


@dataclass
class SolverReport:
    """Solve outcome: final weights, iteration trace, and termination reason."""

    w: np.ndarray
    iterations: int
    termination: str  # "tolerance", "max_iter", or "one_shot"
    objective_trace: list[float] = field(default_factory=list)
    step_norm_trace: list[float] = field(default_factory=list)
    elapsed_ns_trace: list[int] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination in ("tolerance", "one_shot")

    def trace_rows(self):
        """Rows (iteration, objective, step_norm, elapsed_ns) for CSV export."""
        for i, (f, s, t) in enumerate(
            zip(self.objective_trace, self.step_norm_trace, self.elapsed_ns_trace)
        ):
            yield i, f, s, t

    def write_trace_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,objective,step_norm,elapsed_ns\n")
            for i, f, s, t in self.trace_rows():
                fh.write(f"{i},{f!r},{s!r},{t}\n")


def objective(op: QOperator, Kx: np.ndarray, beta: float, w: np.ndarray) -> float:
    """f(w), via one Q matvec."""
    qw = op.matvec(w)
    return _objective_from_qw(qw, Kx, beta, w)


def _objective_from_qw(qw, Kx, beta, w) -> float:
    return float(0.5 * (w @ qw) - w @ Kx + 0.5 * beta * (w @ w))


def gradient(op: QOperator, Kx: np.ndarray, beta: float, w: np.ndarray) -> np.ndarray:
    """(Q + beta*I) w - Kx, via one Q matvec."""
    return op.matvec(w) + beta * w - Kx


def resolve_c(op: QOperator, config: SolverConfig) -> float:
    """Upper bound c >= sigma_max(Q) per the configured strategy."""
    if config.c_strategy == "fixed":
        return float(config.c_value)
    if config.c_strategy == "gershgorin":
        return op.gershgorin_bound()
    c, certified = sigma_max_estimate(op)
    if not certified:
        # sigma_max_estimate already fell back to the Gershgorin-style bound
        return c
    return c


def solve_closed_form(
    K: np.ndarray,
    H: np.ndarray,
    B: list[np.ndarray],
    Kx: np.ndarray,
    params: DrmHyperParams,
) -> SolverReport:
    """Direct solve of (K + alpha*H - alpha*B + beta*I) w = Kx via Cholesky.

    Kx may be a matrix of stacked right-hand-side columns; the factorization
    is shared across them.
    """
    M = assemble_dense_q(K, H, B, params.alpha)
    M[np.diag_indices_from(M)] += params.beta
    t0 = time.perf_counter_ns()
    try:
        cho = scipy.linalg.cho_factor(M, lower=True, check_finite=True)
        w = scipy.linalg.cho_solve(cho, Kx)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"closed-form factorization failed: {exc}") from exc
    elapsed = time.perf_counter_ns() - t0
    return SolverReport(
        w=w,
        iterations=0,
        termination="one_shot",
        objective_trace=[],
        step_norm_trace=[],
        elapsed_ns_trace=[elapsed],
    )


def solve_gd(
    op: QOperator,
    Kx: np.ndarray,
    params: DrmHyperParams,
    config: SolverConfig,
    w0: np.ndarray | None = None,
) -> SolverReport:
    """Gradient descent with the exact line-search step
    d = g'g / g'(Q + beta*I)g.

    One Q matvec per iteration: Qw is tracked incrementally via
    Q w+ = Qw - d*Qg.
    """
    beta = params.beta
    w = np.zeros(op.n) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    qw = op.matvec(w)
    report = SolverReport(w=w, iterations=0, termination="max_iter")
    t_start = time.perf_counter_ns()
    for t in range(config.max_iter):
        g = qw + beta * w - Kx
        gg = float(g @ g)
        report.objective_trace.append(_objective_from_qw(qw, Kx, beta, w))
        if gg == 0.0:
            # exactly stationary: w is the unique minimizer
            report.step_norm_trace.append(0.0)
            report.elapsed_ns_trace.append(time.perf_counter_ns() - t_start)
            report.iterations = t
            report.termination = "tolerance"
            break
        qg = op.matvec(g)
        d = gg / float(g @ qg + beta * gg)
        w = w - d * g
        qw = qw - d * qg
        step = d * math.sqrt(gg)
        report.step_norm_trace.append(step)
        report.elapsed_ns_trace.append(time.perf_counter_ns() - t_start)
        if step <= config.eps:
            report.iterations = t + 1
            report.termination = "tolerance"
            break
    else:
        report.iterations = config.max_iter
    report.w = w
    return report


def solve_ppa(
    op: QOperator,
    Kx: np.ndarray,
    params: DrmHyperParams,
    config: SolverConfig,
    w0: np.ndarray | None = None,
) -> SolverReport:
    """Proximal-point iteration w+ = (Kx - Qw + c*w)/(beta + c).

    One Q matvec per iteration; the objective trace is monotone
    non-increasing whenever c >= sigma_max(Q).
    """
    beta = params.beta
    c = resolve_c(op, config)
    w = np.zeros(op.n) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    report = SolverReport(w=w, iterations=0, termination="max_iter")
    t_start = time.perf_counter_ns()
    for t in range(config.max_iter):
        qw = op.matvec(w)
        report.objective_trace.append(_objective_from_qw(qw, Kx, beta, w))
        w_next = (Kx - qw + c * w) / (beta + c)
        step = float(np.linalg.norm(w_next - w))
        w = w_next
        report.step_norm_trace.append(step)
        report.elapsed_ns_trace.append(time.perf_counter_ns() - t_start)
        if step <= config.eps:
            report.iterations = t + 1
            report.termination = "tolerance"
            break
    else:
        report.iterations = config.max_iter
    report.w = w
    return report


def solve_apg(
    op: QOperator,
    Kx: np.ndarray,
    params: DrmHyperParams,
    config: SolverConfig,
    w0: np.ndarray | None = None,
) -> SolverReport:
    """Accelerated proximal gradient with Nesterov momentum.

    With backtracking on, b is multiplied by eta until
    g'Qg <= (b - beta) ||g||^2 at the lookahead point; with backtracking
    off the caller must supply apg_b0 >= sigma_max(Q) + beta.
    """
    beta = params.beta
    w = np.zeros(op.n) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    v = w.copy()
    d = 1.0
    if config.apg_b0 is not None:
        b = float(config.apg_b0)
    else:
        # cheap Lipschitz seed: beta + mean diagonal of Q (trace/n of K + alpha*(H-B)
        # is dominated by the K part; H's mean serves as its proxy)
        b = beta + float(np.mean(op.h_vector)) * (1.0 + op.alpha)
    if b <= 0:
        raise ValueError("apg b0 must be > 0")
    report = SolverReport(w=w, iterations=0, termination="max_iter")
    t_start = time.perf_counter_ns()
    for t in range(config.max_iter):
        qv = op.matvec(v)
        report.objective_trace.append(objective(op, Kx, beta, w))
        g = qv + beta * v - Kx
        if config.apg_backtracking:
            gg = float(g @ g)
            if gg > 0.0:
                qg = op.matvec(g)
                gqg = float(g @ qg)
                while gqg > (b - beta) * gg:
                    b *= config.apg_eta
        w_next = v - g / b
        d_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * d * d))
        v = w_next + ((d - 1.0) / d_next) * (w_next - w)
        step = float(np.linalg.norm(w_next - w))
        w, d = w_next, d_next
        report.step_norm_trace.append(step)
        report.elapsed_ns_trace.append(time.perf_counter_ns() - t_start)
        if step <= config.eps:
            report.iterations = t + 1
            report.termination = "tolerance"
            break
    else:
        report.iterations = config.max_iter
    report.w = w
    return report


_ITERATIVE = {"gd": solve_gd, "ppa": solve_ppa, "apg": solve_apg}


def solve(
    op: QOperator,
    Kx: np.ndarray,
    params: DrmHyperParams,
    config: SolverConfig,
    w0: np.ndarray | None = None,
) -> SolverReport:
    """Dispatch on config.method. The closed form requires a dense backend."""
    if config.method == "closed_form":
        from .kernels import DenseQOperator

        if not isinstance(op, DenseQOperator):
            raise ValueError("closed-form solve needs the dense backend")
        return solve_closed_form(op.K, op.h_vector, op.B, Kx, params)
    return _ITERATIVE[config.method](op, Kx, params, config, w0=w0)
