"""
Command-line surface.

Every subcommand reads an optional JSON config (``--config``), merges the
given flags on top and validates the result before computing anything.
Outputs are CSV tables (plus a JSON verdict file for the studies). Errors go
to stderr as ``ERROR:<category>:<message>`` with exit code 1 for validation
problems and 2 for numerical failures.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from nestedkrig import __version__
from nestedkrig.aggregated_process import (
    c_agg_matrix,
    conditional_mean,
    fit_aggregated_process,
    k_agg_matrix,
    sample_paths,
)
from nestedkrig.config import RunConfig, build_config
from nestedkrig.datasets import (
    coordinate_columns,
    five_point_setup,
    load_dataset,
    make_design,
    points_frame,
    regular_grid,
    synthetic_values,
    write_frame,
)
from nestedkrig.diagnostics import bounds_report, exact_mse
from nestedkrig.errors import ArgumentError, ConfigError, NestedKrigError
from nestedkrig.experiments import (
    ExperimentReport,
    NonConsistencyConfig,
    run_consistency,
    run_nonconsistency,
)
from nestedkrig.gp_core import fit_full, predict_full_batch
from nestedkrig.kernels import KernelSpec, PointSet, kernel_matrix
from nestedkrig.nested_aggregator import nested_predict_batch
from nestedkrig.submodels import (
    Partition,
    SubmodelBank,
    fit_submodels,
    make_partition,
    predict_submodels,
)
from nestedkrig.variance_aggregators import AggregationMethod, aggregate_variance_based

LOGGER = logging.getLogger(__name__)

CONSISTENCY_SIZES = [10, 20, 40, 80, 160]
NONCONSISTENCY_SIZES = [50, 100, 200, 400, 800]


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's exit 2."""

    def error(self, message: str) -> NoReturn:
        raise ArgumentError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ===== PARSER =====


def _common_parent() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    group = parent.add_argument_group("general")
    group.add_argument("--config", help="JSON run configuration; flags override it")
    group.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    group.add_argument("--verbose", action="store_true", help="extra output columns, INFO logs")
    kernel = parent.add_argument_group("kernel")
    kernel.add_argument("--kernel", help="squared_exponential, matern12, matern32, matern52")
    kernel.add_argument("--lengthscale", type=_float_list, help="scalar or comma list")
    kernel.add_argument("--variance", type=float, help="process variance k(x,x)")
    kernel.add_argument("--dim", type=int, help="input dimension")
    return parent


def _model_parent() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    group = parent.add_argument_group("data and submodels")
    group.add_argument("--data", help="CSV with header: coordinates then value")
    group.add_argument("--partition", help="contiguous, random or nearest")
    group.add_argument("--p", type=int, help="number of groups (default ceil(sqrt(n)))")
    group.add_argument("--partition-file", help='JSON {"groups": [[indices]...]}')
    group.add_argument("--seed", type=int, help="seed for partitions and sampling")
    group.add_argument("--method", help="poe, gpoe, bcm, rbcm or nested")
    grid = parent.add_argument_group("grid")
    grid.add_argument("--grid-min", type=float)
    grid.add_argument("--grid-max", type=float)
    grid.add_argument("--grid-count", type=int, help="points per axis")
    return parent


def _sample_parent() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    group = parent.add_argument_group("sampling")
    group.add_argument("--count", type=int, help="number of sample paths")
    group.add_argument("--conditional", action="store_true", default=None)
    group.add_argument("--sample-method", choices=("chol", "eigh"))
    return parent


def _experiment_parent() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    group = parent.add_argument_group("study")
    group.add_argument("--n", type=_int_list, help="comma list of design sizes")
    group.add_argument("--x0", type=_float_list, help="target point (adversarial design)")
    group.add_argument("--xbar", type=_float_list, help="cluster center")
    group.add_argument("--r", type=float, help="cluster radius")
    group.add_argument("--delta-exponent", type=float)
    group.add_argument("--gap-factor", type=float)
    group.add_argument("--retention", type=float)
    group.add_argument("--ratio", type=float)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nestedkrig", description="Nested Kriging aggregation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    common = _common_parent()
    model = _model_parent()
    sampling = _sample_parent()
    study = _experiment_parent()

    def add(
        name: str,
        helptext: str,
        parents: Sequence[argparse.ArgumentParser],
        outdir: bool = False,
        aliases: Sequence[str] = (),
    ) -> None:
        cmd = sub.add_parser(name, help=helptext, parents=list(parents), aliases=list(aliases))
        if outdir:
            cmd.add_argument("--outdir", dest="out", help="output directory")
        else:
            cmd.add_argument("--out", dest="out", help="output CSV")
        cmd.set_defaults(handler=name)

    add("predict", "aggregate predictions on a grid", [common, model])
    add(
        "demo",
        "five-point illustration: samples, covariances, bounds",
        [common, model, sampling],
        outdir=True,
        aliases=["demo-figure1"],
    )
    add("covariance-report", "k_A against k on grid pairs", [common, model])
    add("bounds-report", "error gaps and their bounds on a grid", [common, model])
    add("consistency", "sup-grid nested MSE on densifying designs", [common, model, study])
    add("nonconsistency", "adversarial design against a variance rule", [common, model, study])
    add("sample", "draw paths of the aggregated process", [common, model, sampling])
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    def get(name: str) -> Any:
        return getattr(args, name, None)

    lengthscale = get("lengthscale")
    if lengthscale is not None and len(lengthscale) == 1:
        lengthscale = lengthscale[0]
    seed = get("seed")
    return {
        "kernel": {
            "family": get("kernel"),
            "lengthscale": lengthscale,
            "variance": get("variance"),
            "dim": get("dim"),
        },
        "data": {"path": get("data")} if get("data") else None,
        "partition": {
            "strategy": get("partition"),
            "p": get("p"),
            "seed": seed,
            "path": get("partition_file"),
        },
        "method": get("method"),
        "grid": {"min": get("grid_min"), "max": get("grid_max"), "count": get("grid_count")},
        "sample": {
            "count": get("count"),
            "seed": seed,
            "conditional": get("conditional"),
            "method": get("sample_method"),
        },
        "experiment": {
            "x0": get("x0"),
            "xbar": get("xbar"),
            "r": get("r"),
            "n_values": get("n"),
            "delta_exponent": get("delta_exponent"),
            "gap_factor": get("gap_factor"),
            "retention": get("retention"),
            "ratio": get("ratio"),
            "grid_count": get("grid_count"),
        },
        "output": get("out"),
    }


# ===== PROBLEM SETUP =====


def _problem(config: RunConfig) -> Tuple[KernelSpec, PointSet, np.ndarray, Partition]:
    """Data, kernel and partition; the five-point illustration when no data is given."""
    spec = config.spec
    data = config.data
    if data is None:
        setup = five_point_setup()
        if spec.dim != 1:
            raise ConfigError("without data the five-point illustration needs dim=1")
        X, y, default_partition = setup.X, setup.y, setup.partition
    elif data.path is not None:
        X, y = load_dataset(data.path)
        default_partition = None
    else:
        syn = data.synthetic
        assert syn is not None
        X = make_design(syn.n, spec.dim, syn.design, syn.seed, syn.lower, syn.upper)
        y = synthetic_values(syn.function, X, spec, syn.seed)
        default_partition = None
    if X.shape[1] != spec.dim:
        raise ConfigError(f"data has {X.shape[1]} coordinates, kernel dim is {spec.dim}")

    part = config.partition
    n = X.shape[0]
    if part.path is not None:
        try:
            text = Path(part.path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read partition file: {exc}") from exc
        partition = Partition.from_json(text, n)
    elif default_partition is not None and part.p is None:
        partition = default_partition
    else:
        p = part.p if part.p is not None else int(math.ceil(math.sqrt(n)))
        partition = make_partition(n, p, part.strategy, seed=part.seed, X=X)
    return spec, X, y, partition


def _grid(config: RunConfig, dim: int) -> PointSet:
    g = config.grid
    return regular_grid(g.min, g.max, g.count, dim)


def _bank(config: RunConfig) -> SubmodelBank:
    spec, X, y, partition = _problem(config)
    return fit_submodels(spec, X, y, partition)


def _output(config: RunConfig, default: str) -> Path:
    return Path(config.output if config.output is not None else default)


def _pairs_frame(grid: PointSet, dim: int, values: Dict[str, np.ndarray]) -> pd.DataFrame:
    """Long table over all grid pairs (i, j), i-major."""
    m = grid.shape[0]
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    cols = coordinate_columns(dim)
    frame = pd.DataFrame(grid[ii.ravel()], columns=cols)
    prime = pd.DataFrame(grid[jj.ravel()], columns=[f"{c}_prime" for c in cols])
    extra = pd.DataFrame({name: v.ravel() for name, v in values.items()})
    return pd.concat([frame, prime, extra], axis=1)


def _paths_frame(grid: PointSet, dim: int, paths: np.ndarray) -> pd.DataFrame:
    samples = pd.DataFrame(
        paths.T, columns=[f"sample_{i + 1}" for i in range(paths.shape[0])]
    )
    return pd.concat([points_frame(grid, dim), samples], axis=1)


def _write_report(report: ExperimentReport, path: Path) -> None:
    write_frame(report.to_frame(), path)
    with open(path.with_suffix(".json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.verdicts_json())


# ===== COMMANDS =====


def cmd_predict(config: RunConfig, verbose: bool) -> None:
    bank = _bank(config)
    spec = bank.spec
    grid = _grid(config, spec.dim)
    method = config.aggregation(AggregationMethod.NESTED)
    frame = points_frame(grid, spec.dim)
    if method is AggregationMethod.NESTED:
        means, variances = nested_predict_batch(bank, grid)
        frame["mean"] = means
        frame["variance"] = variances
    else:
        aggs = [aggregate_variance_based(bank, method, x) for x in grid]
        frame["mean"] = [a.mean for a in aggs]
        frame["mse"] = [
            exact_mse(a.effective_weights, x, spec, bank.X) for a, x in zip(aggs, grid)
        ]
    if verbose:
        preds = [predict_submodels(bank, x) for x in grid]
        for k in range(bank.p):
            frame[f"M_{k + 1}"] = [pr.means[k] for pr in preds]
            frame[f"v_{k + 1}"] = [pr.vars[k] for pr in preds]
    write_frame(frame, _output(config, "predictions.csv"))


def cmd_demo(config: RunConfig, verbose: bool) -> None:
    setup = five_point_setup()
    outdir = _output(config, "demo_out")
    bank = fit_submodels(setup.spec, setup.X, setup.y, setup.partition)
    model = fit_aggregated_process(bank)
    grid = _grid(config, 1)
    sample = config.sample

    prior_paths = sample_paths(model, grid, sample.count, sample.seed, method=sample.method)
    write_frame(_paths_frame(grid, 1, prior_paths), outdir / "samples.csv")
    cond_paths = sample_paths(
        model,
        grid,
        sample.count,
        sample.seed,
        conditional=True,
        fX=setup.y,
        method=sample.method,
    )
    write_frame(_paths_frame(grid, 1, cond_paths), outdir / "conditional_samples.csv")

    full = fit_full(setup.spec, setup.X, setup.y)
    means, variances = nested_predict_batch(bank, grid)
    full_means, full_vars = predict_full_batch(full, grid)
    pred = points_frame(grid, 1)
    pred["mean"] = means
    pred["variance"] = variances
    pred["full_mean"] = full_means
    pred["full_variance"] = full_vars
    write_frame(pred, outdir / "prediction.csv")

    kA = k_agg_matrix(model, grid, grid)
    k = kernel_matrix(setup.spec, grid, grid)
    write_frame(_pairs_frame(grid, 1, {"k_agg": kA}), outdir / "kA_grid.csv")
    write_frame(_pairs_frame(grid, 1, {"diff": kA - k}), outdir / "kA_minus_k.csv")
    write_frame(bounds_report(bank, grid), outdir / "bounds.csv")
    LOGGER.info("demo outputs written to %s", outdir)


def cmd_covariance_report(config: RunConfig, verbose: bool) -> None:
    bank = _bank(config)
    spec = bank.spec
    model = fit_aggregated_process(bank)
    grid = _grid(config, spec.dim)
    kA = k_agg_matrix(model, grid, grid)
    k = kernel_matrix(spec, grid, grid)
    values = {"k": k, "k_agg": kA, "diff": kA - k}
    if verbose:
        values["c_agg"] = c_agg_matrix(model, grid, grid)
    write_frame(_pairs_frame(grid, spec.dim, values), _output(config, "covariance_report.csv"))


def cmd_bounds_report(config: RunConfig, verbose: bool) -> None:
    bank = _bank(config)
    frame = bounds_report(bank, _grid(config, bank.spec.dim))
    write_frame(frame, _output(config, "bounds_report.csv"))


def cmd_consistency(config: RunConfig, verbose: bool) -> None:
    spec = config.spec
    exp = config.experiment
    report = run_consistency(
        spec,
        _grid(config, spec.dim),
        exp.n_values or CONSISTENCY_SIZES,
        partition_rule=config.partition.strategy,
        seed=config.partition.seed,
        p=config.partition.p,
    )
    _write_report(report, _output(config, "consistency.csv"))


def cmd_nonconsistency(config: RunConfig, verbose: bool) -> None:
    exp = config.experiment
    cfg = NonConsistencyConfig(
        spec=config.spec,
        x0=np.asarray(exp.x0),
        xbar=np.asarray(exp.xbar),
        r=exp.r,
        n_values=tuple(exp.n_values or NONCONSISTENCY_SIZES),
        method=config.aggregation(AggregationMethod.POE),
        delta_exponent=exp.delta_exponent,
        gap_factor=exp.gap_factor,
        retention=exp.retention,
        ratio=exp.ratio,
        grid_count=exp.grid_count,
    )
    _write_report(run_nonconsistency(cfg), _output(config, "nonconsistency.csv"))


def cmd_sample(config: RunConfig, verbose: bool) -> None:
    bank = _bank(config)
    spec = bank.spec
    model = fit_aggregated_process(bank)
    grid = _grid(config, spec.dim)
    sample = config.sample
    paths = sample_paths(
        model,
        grid,
        sample.count,
        sample.seed,
        conditional=sample.conditional,
        fX=bank.y if sample.conditional else None,
        method=sample.method,
    )
    frame = _paths_frame(grid, spec.dim, paths)
    if verbose and sample.conditional:
        frame["conditional_mean"] = conditional_mean(model, grid, bank.y)
    write_frame(frame, _output(config, "samples.csv"))


COMMANDS: Dict[str, Callable[[RunConfig, bool], None]] = {
    "predict": cmd_predict,
    "demo": cmd_demo,
    "covariance-report": cmd_covariance_report,
    "bounds-report": cmd_bounds_report,
    "consistency": cmd_consistency,
    "nonconsistency": cmd_nonconsistency,
    "sample": cmd_sample,
}


# ===== ENTRY POINTS =====


def configure_logging(level: str, verbose: bool = False) -> None:
    name = level.upper()
    if name not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ArgumentError(f"unknown log level {level!r}")
    if verbose and name == "WARNING":
        name = "INFO"
    logger = logging.getLogger("nestedkrig")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
    logger.handlers = [handler]
    logger.setLevel(name)
    logger.propagate = False


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; return the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level, args.verbose)
        config = build_config(args.config, _overrides(args))
        COMMANDS[args.handler](config, args.verbose)
    except NestedKrigError as exc:
        print(f"ERROR:{exc.category}:{exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"ERROR:numerical:{exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ERROR:io:{exc}", file=sys.stderr)
        return 1
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_command(argv)
