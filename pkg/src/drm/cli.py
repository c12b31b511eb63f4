"""Command-line front end: train / predict / cv / bench.

All outputs are CSV so results diff and plot without the toolkit. Every
subcommand is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluation, kernels, solvers
from .classifier import DrmModel, fit, load_model, save_model
from .dataset import (
    DatasetError,
    SplitSpec,
    group_by_label,
    parse_csv,
    parse_libsvm,
)
from .evaluation import Grid, grid_search
from .kernels import KernelSpec, build_operator
from .solvers import DrmHyperParams, SolverConfig


class CliError(Exception):
    pass


def _read_data(path: str, fmt: str, label_col: int, has_header: bool):
    text = Path(path).read_text()
    if fmt == "libsvm":
        return parse_libsvm(text)
    if fmt == "csv":
        return parse_csv(text, label_column=label_col, has_header=has_header)
    raise CliError(f"unknown format {fmt!r}")


def _kernel_from_args(args) -> KernelSpec:
    if args.kernel == "linear":
        return KernelSpec(family="linear")
    if args.kernel == "rbf":
        return KernelSpec(family="rbf", gamma=args.gamma)
    if args.kernel == "poly":
        return KernelSpec(family="poly", degree=args.degree, coef0=args.coef0)
    raise CliError(f"unknown kernel {args.kernel!r}")


_SOLVER_NAMES = {"closed": "closed_form", "gd": "gd", "ppa": "ppa", "apg": "apg"}


def _parse_c_strategy(value: str) -> tuple[str, float | None]:
    if value == "power":
        return "power_iteration", None
    if value == "gershgorin":
        return "gershgorin", None
    if value.startswith("fixed:"):
        return "fixed", float(value.split(":", 1)[1])
    raise CliError(f"unknown c-strategy {value!r}")


def default_solver_method(n: int) -> str:
    """closed form is the default up to moderate n; PPA beyond."""
    return "closed_form" if n <= 2000 else "ppa"


def _solver_config_from_args(args, n: int) -> SolverConfig:
    method = _SOLVER_NAMES[args.solver] if args.solver else default_solver_method(n)
    c_strategy, c_value = _parse_c_strategy(args.c_strategy)
    return SolverConfig(
        method=method,
        eps=args.eps,
        max_iter=args.max_iter,
        c_strategy=c_strategy,
        c_value=c_value,
    )


def cmd_train(args) -> int:
    features, labels = _read_data(args.data, args.format, args.label_col, args.has_header)
    if args.beta <= 0:
        raise CliError("--beta must be > 0")
    if args.alpha < 0:
        raise CliError("--alpha must be >= 0")
    model = fit(
        features,
        labels,
        kernel=_kernel_from_args(args),
        params=DrmHyperParams(alpha=args.alpha, beta=args.beta),
        config=_solver_config_from_args(args, features.shape[1]),
        scale=args.scale,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json", out / "train.bin")
    ds = model.data
    sizes = " ".join(str(int(s)) for s in ds.group_sizes)
    print(f"n={ds.n} p={ds.p} g={ds.g} group_sizes=[{sizes}]")
    print(f"model written to {out}")
    return 0


def cmd_predict(args) -> int:
    model_dir = Path(args.model)
    model = load_model(model_dir / "model.json", model_dir / "train.bin")
    if args.solver:
        model.config = SolverConfig(
            method=_SOLVER_NAMES[args.solver],
            eps=model.config.eps,
            max_iter=model.config.max_iter,
            c_strategy=model.config.c_strategy,
            c_value=model.config.c_value,
        )
    header = "index,label," + ",".join(
        f"delta_{int(v)}" for v in model.data.original_labels
    ) + ",iterations\n"
    text = Path(args.data).read_text()
    if not text.strip():
        Path(args.out).write_text(header)
        return 0
    if args.format == "libsvm":
        features, _ = parse_libsvm(text)
        # pad if the test set never reaches the model's feature count
        if features.shape[0] < model.data.p:
            pad = np.zeros((model.data.p - features.shape[0], features.shape[1]))
            features = np.vstack([features, pad])
    else:
        features, _ = parse_csv(text, label_column=args.label_col, has_header=args.has_header)
    if features.shape[0] != model.data.p:
        raise CliError(
            f"feature dimension mismatch: model expects p={model.data.p}, "
            f"test data has p={features.shape[0]}"
        )
    preds = model.predict_batch(features)
    with open(args.out, "w") as fh:
        fh.write(header)
        for j, pr in enumerate(preds):
            deltas = ",".join(repr(float(d)) for d in pr.deltas)
            fh.write(f"{j},{pr.label},{deltas},{pr.iterations}\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _grid_from_file(path: str) -> Grid:
    values: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"grid file line not key=value: {line!r}")
        key, val = line.split("=", 1)
        values[key.strip()] = val.strip()

    def floats(key, default):
        if key not in values:
            return default
        return tuple(float(v) for v in values[key].split(","))

    kwargs = {}
    if "kernels" in values:
        kwargs["kernel_families"] = tuple(v.strip() for v in values["kernels"].split(","))
    kwargs["rbf_gammas"] = floats("gammas", Grid.rbf_gammas)
    if "degrees" in values:
        kwargs["poly_degrees"] = tuple(int(v) for v in values["degrees"].split(","))
    kwargs["alphas"] = floats("alphas", Grid.alphas)
    kwargs["betas"] = floats("betas", Grid.betas)
    if "scaled" in values:
        kwargs["scaling"] = tuple(bool(int(v)) for v in values["scaled"].split(","))
    return Grid(**kwargs)


def cmd_cv(args) -> int:
    features, labels = _read_data(args.data, args.format, args.label_col, args.has_header)
    ds = group_by_label(features, labels)
    grid = _grid_from_file(args.grid_file) if args.grid_file else Grid()
    spec = evaluation.default_split_spec(min(ds.n, evaluation.CV_SUBSAMPLE_CAP), seed=args.seed)
    result = grid_search(ds, grid, split_spec=spec, metric=args.metric, seed=args.seed)
    result.write_csv(args.out)
    best = result.selected
    print(
        f"best cell: kernel={best.cell.kernel.short()} alpha={best.cell.alpha:g} "
        f"beta={best.cell.beta:g} scaled={int(best.cell.scaled)} "
        f"mean_{args.metric}={best.mean_metric:.4f} std={best.std_metric:.4f}"
    )
    print(f"table written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    features, labels = _read_data(args.data, args.format, args.label_col, args.has_header)
    n_total = features.shape[1]
    sizes = [int(s) for s in args.sizes.split(",")]
    for s in sizes:
        if s > n_total:
            raise CliError(f"size {s} exceeds available examples ({n_total})")
    solver_names = [s.strip() for s in args.solvers.split(",")]
    for s in solver_names:
        if s not in ("gd", "ppa", "apg"):
            raise CliError(f"bench supports gd/ppa/apg, got {s!r}")
    kernel = _kernel_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = DrmHyperParams(alpha=args.alpha, beta=args.beta)
    rng = np.random.default_rng(args.seed)
    summary_rows = []
    for size in sizes:
        idx = rng.choice(n_total, size=size, replace=False)
        ds = group_by_label(features[:, idx], labels[idx])
        op = build_operator(kernel, ds, params.alpha)
        x = features[:, int(rng.integers(n_total))]
        Kx = kernels.compute_Kx(kernel, ds, x)
        for name in solver_names:
            config = _solver_config_from_args(args, ds.n)
            config = SolverConfig(
                method=name,
                eps=config.eps,
                max_iter=config.max_iter,
                c_strategy=config.c_strategy,
                c_value=config.c_value,
            )
            per_iter_times = []
            iteration_counts = []
            for rep in range(args.repeats):
                t0 = time.perf_counter_ns()
                report = solvers.solve(op, Kx, params, config)
                elapsed = time.perf_counter_ns() - t0
                iters = max(report.iterations, 1)
                per_iter_times.append(elapsed / iters)
                iteration_counts.append(report.iterations)
                report.write_trace_csv(out / f"trace_{name}_n{size}_rep{rep}.csv")
            summary_rows.append(
                (
                    name,
                    size,
                    float(np.median(per_iter_times)),
                    int(np.median(iteration_counts)),
                )
            )
    with open(out / "summary.csv", "w") as fh:
        fh.write("solver,n,median_per_iter_ns,median_iterations\n")
        for name, size, t, it in summary_rows:
            fh.write(f"{name},{size},{t!r},{it}\n")
    print(f"bench results written to {out}")
    return 0


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="input data file")
    p.add_argument("--format", choices=["libsvm", "csv"], default="libsvm")
    p.add_argument("--label-col", type=int, default=0)
    p.add_argument("--has-header", action="store_true")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=["linear", "rbf", "poly"], default="linear")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--coef0", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", choices=["closed", "gd", "ppa", "apg"], default=None)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=150)
    p.add_argument("--c-strategy", default="power")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drm",
        description="Discriminative regression machine classifier toolkit",
    )
    parser.add_argument("--config", help="flat key=value file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model and write model.json/train.bin")
    _add_data_flags(p_train)
    _add_model_flags(p_train)
    _add_solver_flags(p_train)
    p_train.add_argument("--scale", action="store_true")
    p_train.add_argument("--out", required=True, help="output model directory")
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="classify examples with a saved model")
    p_pred.add_argument("model", help="model directory (model.json + train.bin)")
    _add_data_flags(p_pred)
    p_pred.add_argument("--solver", choices=["closed", "gd", "ppa", "apg"], default=None)
    p_pred.add_argument("--out", required=True, help="output predictions CSV")
    p_pred.set_defaults(func=cmd_predict)

    p_cv = sub.add_parser("cv", help="cross-validated hyperparameter sweep")
    _add_data_flags(p_cv)
    p_cv.add_argument("--grid-file", default=None)
    p_cv.add_argument("--metric", choices=["accuracy", "gmean"], default="accuracy")
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--out", required=True, help="output CV table CSV")
    p_cv.set_defaults(func=cmd_cv)

    p_bench = sub.add_parser("bench", help="solver timing and convergence traces")
    _add_data_flags(p_bench)
    _add_model_flags(p_bench)
    _add_solver_flags(p_bench)
    p_bench.add_argument("--solvers", default="gd,ppa,apg")
    p_bench.add_argument("--sizes", required=True, help="comma-separated subset sizes")
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Prepend config-file values as flags so CLI flags override them."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    injected = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if val.lower() in ("true", "1") and key in ("has-header", "scale"):
            injected.append(f"--{key}")
        elif val.lower() in ("false", "0") and key in ("has-header", "scale"):
            continue
        else:
            injected.extend([f"--{key}", val])
    # insert after the subcommand so argparse routes them correctly
    for j, tok in enumerate(argv):
        if tok in ("train", "predict", "cv", "bench"):
            return argv[: j + 1] + injected + argv[j + 1 :]
    return argv + injected


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
