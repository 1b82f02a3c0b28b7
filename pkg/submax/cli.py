import json
import sys
import typing as t
from collections import abc
from pathlib import Path

import click
import typer

from submax import SubmaxError, UnderTargetError
from submax.algorithms import Algorithm, RunRecord, run_algorithm
from submax.experiments import DEFAULT_MASTER_SEED, TrialConfig, run_trials
from submax.matrix import MASK64, GaussianMatrix, gen_gaussian
from submax.overlap import (
    DEFAULT_DELTA,
    DEFAULT_RESOLUTION,
    critical_alpha1,
    critical_alpha2,
    f_overlap,
    overlap_exponent_numeric,
    region_grid,
)
from submax.verify import Suite, run_suite

submax_cli = typer.Typer(add_completion=False, no_args_is_help=True)

THREADS_ENVVAR = "SUBMAX_THREADS"
VERIFY_FAILED = 2


def _emit(payload: dict[str, t.Any]) -> None:
    print(json.dumps(payload))


def _diagnostic(msg: str) -> None:
    print(msg, file=sys.stderr)


@submax_cli.command(name="gen", short_help="Generate a seeded Gaussian matrix.")
def gen(
    n: int = typer.Option(..., "--n", min=1),
    m: int = typer.Option(None, "--m", min=1, help="Column count, defaults to n."),
    seed: int = typer.Option(..., "--seed", min=0, max=MASK64),
    out: Path = typer.Option(None, "--out", dir_okay=False),
    threads: int = typer.Option(1, "--threads", min=1, envvar=THREADS_ENVVAR, help="Unused."),
) -> None:
    """
    Generate an `n x m` standard normal matrix and print its regeneration descriptor.

    If `out` is provided, a `.json` suffix writes the descriptor; any other suffix writes the
    entries as headerless CSV.

    NOTE: Any existing file at `out` will be overwritten.
    NOTE: `--threads` is accepted for parity with the batch commands; generation is sequential.
    """
    matrix = gen_gaussian(n, m if m is not None else n, seed)
    descriptor = matrix.to_descriptor()

    if out is not None:
        if out.suffix.lower() == ".json":
            out.write_text(json.dumps(descriptor))
        else:
            matrix.to_csv(out)
        _diagnostic(f"Wrote {out}")

    _emit(descriptor)


@submax_cli.command(name="run", short_help="Run a single search.")
def run(
    alg: Algorithm = typer.Option(..., "--alg", case_sensitive=False),
    n: int = typer.Option(None, "--n", min=1),
    k: int = typer.Option(..., "--k", min=1),
    seed: int = typer.Option(None, "--seed", min=0, max=MASK64),
    theta: float = typer.Option(None, "--theta", help="Greedy threshold, defaults to theta_n."),
    matrix_path: Path = typer.Option(None, "--matrix", exists=True, dir_okay=False),
    threads: int = typer.Option(1, "--threads", min=1, envvar=THREADS_ENVVAR, help="Unused."),
) -> None:
    """
    Run one algorithm and print the result as JSON.

    The matrix is either regenerated from `--n` and `--seed`, or loaded from a headerless CSV with
    `--matrix`. When both `--matrix` and `--n` are given they must agree.

    NOTE: A greedy clique smaller than `k` is still reported, with a warning on standard error.

    `--threads` is accepted for parity with the batch commands; a single run is sequential.
    """
    if matrix_path is not None:
        matrix = GaussianMatrix.from_csv(matrix_path)
        if n is not None and n != matrix.n:
            raise click.BadParameter(
                f"--n {n} does not match the {matrix.n} rows of {matrix_path}", param_hint="--n"
            )
        seed = None
    elif n is None or seed is None:
        raise click.UsageError("Either --matrix or both --n and --seed are required.")
    else:
        matrix = gen_gaussian(n, n, seed)

    try:
        record = run_algorithm(alg, matrix, k, theta=theta)
    except UnderTargetError as e:
        _diagnostic(f"Warning: {e}")
        record = t.cast(RunRecord, e.result)

    _emit(record.to_dict(matrix.n, k, seed))


@submax_cli.command(name="sweep", short_help="Run a batch of seeded trials.")
def sweep(
    alg: Algorithm = typer.Option(..., "--alg", case_sensitive=False),
    n: int = typer.Option(..., "--n", min=3),
    k: int = typer.Option(..., "--k", min=1),
    trials: int = typer.Option(..., "--trials", min=1),
    seed: int = typer.Option(DEFAULT_MASTER_SEED, "--seed", min=0, max=MASK64),
    theta: float = typer.Option(None, "--theta"),
    csv_path: Path = typer.Option(None, "--csv", dir_okay=False),
    threads: int = typer.Option(1, "--threads", min=1, envvar=THREADS_ENVVAR),
    verbose: bool = typer.Option(False, "--verbose"),
) -> None:
    """
    Run `trials` independent trials and print the aggregate statistics as JSON.

    Trial `t` uses the matrix seeded by the `t`-th seed derived from `--seed`; the output does not
    depend on `--threads`. Per-trial records are written to `--csv` if provided.

    NOTE: Any existing file at `--csv` will be overwritten.
    """
    cfg = TrialConfig(alg=alg, n=n, k=k, trials=trials, master_seed=seed, theta_override=theta)
    trial_stats = run_trials(cfg, threads=threads, verbose=verbose)

    if csv_path is not None:
        trial_stats.to_csv(csv_path)
        _diagnostic(f"Wrote {csv_path}")

    _emit(trial_stats.to_dict())


@submax_cli.command(name="ogp-region", short_help="Rasterize the achievable overlap region.")
def ogp_region(
    alpha: float = typer.Option(..., "--alpha", min=0),
    res: int = typer.Option(DEFAULT_RESOLUTION, "--res"),
    out: Path = typer.Option(None, "--out", dir_okay=False),
) -> None:
    """
    Evaluate the overlap exponent on a `res x res` grid and print the region summary as JSON.

    If `out` is provided, the exponent grid is written there as headerless CSV along with a `.json`
    sidecar holding the summary.
    """
    grid = region_grid(alpha, res)
    if out is not None:
        grid.to_csv(out)
        _diagnostic(f"Wrote {out} and {out.with_suffix('.json')}")

    _emit(grid.summary())


@submax_cli.command(name="ogp-critical", short_help="Compute the critical overlap levels.")
def ogp_critical() -> None:
    """Print the region-connectivity threshold `alpha1` and the overlap gap onset `alpha2`."""
    _emit({"alpha1": critical_alpha1(), "alpha2": critical_alpha2()})


@submax_cli.command(name="ogp-exponent", short_help="Evaluate the pair-count exponent.")
def ogp_exponent(
    n: float = typer.Option(..., "--n"),
    k: int = typer.Option(..., "--k", min=2),
    alpha: float = typer.Option(..., "--alpha", min=0),
    y1: float = typer.Option(..., "--y1", min=0, max=1),
    y2: float = typer.Option(..., "--y2", min=0, max=1),
    delta: float = typer.Option(DEFAULT_DELTA, "--delta"),
) -> None:
    """Print the finite-n exponent alongside its limiting value `f(alpha, y1, y2)`."""
    exponent = overlap_exponent_numeric(n, k, alpha, y1, y2, delta)
    _emit({"exponent": exponent, "f": f_overlap(alpha, y1, y2)})


@submax_cli.command(name="verify", short_help="Run a verification suite.")
def verify(
    suite: Suite = typer.Option(..., "--suite", case_sensitive=False),
    seed: int = typer.Option(DEFAULT_MASTER_SEED, "--seed", min=0, max=MASK64),
    threads: int = typer.Option(1, "--threads", min=1, envvar=THREADS_ENVVAR),
) -> None:
    """
    Run the selected suite and print its pass/fail report as JSON.

    The exit code is 2 if any check fails.
    """
    report = run_suite(suite, seed=seed, threads=threads)
    _emit(report.to_dict())

    if not report.passed:
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        _diagnostic(f"Suite '{suite.value}' failed: {failed}")
        raise typer.Exit(code=VERIFY_FAILED)


def main(argv: abc.Sequence[str] | None = None) -> int:
    """
    Invoke the CLI with the provided arguments and return its exit code.

    Usage and package errors are reported on standard error with exit code 1.
    """
    command = typer.main.get_command(submax_cli)
    args = list(argv) if argv is not None else sys.argv[1:]
    try:
        rv = command.main(args=args, prog_name="submax", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        _diagnostic("Aborted!")
        return 1
    except SubmaxError as e:
        _diagnostic(f"Error: {e}")
        return 1

    return rv if isinstance(rv, int) else 0


def run_cli() -> None:  # pragma: no cover
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":  # pragma: no cover
    run_cli()
