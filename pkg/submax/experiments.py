from __future__ import annotations

import json
import math
import sys
import typing as t
from collections import abc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import polars as pl
from scipy import stats

from submax import CapacityError, DomainError, SubmaxError, UnderTargetError
from submax.algorithms import (
    ENUMERATION_BUDGET,
    Algorithm,
    RunRecord,
    run_algorithm,
    run_igp,
    run_las,
)
from submax.matrix import derive_seed, gaussian_stream_max, gen_gaussian
from submax.theory import PREDICTION_T, b_n, predicted_ave

DEFAULT_MASTER_SEED = 20130215
QUANTILE_LEVELS = (0.05, 0.5, 0.95)

PREDICTION_TARGET: dict[Algorithm, PREDICTION_T] = {
    Algorithm.LAS: "las",
    Algorithm.GREEDY: "greedy",
    Algorithm.IGP: "igp",
    Algorithm.BRUTE: "global",
}

TRIAL_SCHEMA = {
    "trial": pl.Int64,
    "seed": pl.UInt64,
    "ave": pl.Float64,
    "t_las": pl.Int64,
    "m": pl.Int64,
    "error": pl.String,
}
CSV_COLUMNS = ("trial", "seed", "ave", "t_las", "m")


@dataclass(frozen=True, slots=True)
class TrialConfig:
    """
    Parameters of a batch of seeded trials.

    Trial `t` runs on `gen_gaussian(n, n, derive_seed(master_seed, t))` for
    `t in [first_trial, first_trial + trials)`, so batches over disjoint trial ranges can be run
    separately and merged.
    """

    alg: Algorithm
    n: int
    k: int
    trials: int
    master_seed: int = DEFAULT_MASTER_SEED
    theta_override: float | None = None
    first_trial: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "alg", Algorithm(self.alg))

        if self.trials < 1:
            raise DomainError(f"At least one trial is required, received: {self.trials}")
        if self.first_trial < 0:
            raise DomainError(
                f"First trial index must be non-negative, received: {self.first_trial}"
            )
        if self.n < 3:
            raise DomainError(f"Trials require n >= 3, received: {self.n}")
        if not 1 <= self.k <= self.n:
            raise DomainError(f"k must lie in [1, {self.n}], received: {self.k}")
        if self.alg is Algorithm.GREEDY and self.k < 2:
            raise DomainError(f"Greedy search requires k >= 2, received: {self.k}")
        if self.alg is Algorithm.BRUTE and math.comb(self.n, self.k) ** 2 > ENUMERATION_BUDGET:
            raise CapacityError(
                f"Brute force at n={self.n}, k={self.k} exceeds the enumeration budget of "
                f"{ENUMERATION_BUDGET}"
            )
        if self.theta_override is not None and self.alg is not Algorithm.GREEDY:
            raise DomainError(
                f"A threshold only applies to greedy search, received alg: {self.alg.value}"
            )

    @property
    def trial_indices(self) -> range:  # noqa: D102
        return range(self.first_trial, self.first_trial + self.trials)

    def to_dict(self) -> dict[str, t.Any]:  # noqa: D102
        out = asdict(self)
        out["alg"] = self.alg.value
        return out


def _empty_row(trial: int, seed: int) -> dict[str, t.Any]:
    return {"trial": trial, "seed": seed, "ave": None, "t_las": None, "m": None, "error": None}


def run_trial(cfg: TrialConfig, trial: int, seed: int) -> dict[str, t.Any]:
    """
    Run a single trial and return its per-trial record.

    Package errors are recorded in the `error` field rather than raised; a short greedy clique still
    reports the side it reached.
    """
    row = _empty_row(trial, seed)
    try:
        matrix = gen_gaussian(cfg.n, cfg.n, seed)
        record = run_algorithm(cfg.alg, matrix, cfg.k, theta=cfg.theta_override)
    except UnderTargetError as e:
        row["m"] = e.achieved
        row["error"] = str(e)
        return row
    except SubmaxError as e:
        row["error"] = f"{type(e).__name__}: {e}"
        return row

    row["ave"] = record.ave
    row["t_las"] = record.t_las
    row["m"] = record.m
    return row


def _log(msg: str, verbose: bool) -> None:
    if verbose:
        print(msg, file=sys.stderr)


def _parallel_map(
    func: abc.Callable[..., t.Any], args: abc.Sequence[tuple], threads: int
) -> list[t.Any]:
    # Results come back in submission order regardless of the worker count
    if threads <= 1:
        return [func(*a) for a in args]

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda a: func(*a), args))


@dataclass(frozen=True, slots=True)
class TrialStats:
    """
    Aggregate statistics of a batch of trials.

    Statistics are always recomputed from `per_trial` sorted by trial index, so any partition of the
    trials merged back together reproduces the monolithic values bit for bit.
    """

    config: TrialConfig
    per_trial: pl.DataFrame
    mean_ave: float
    std_ave: float
    quantiles: tuple[float, float, float]
    t_las_histogram: dict[int, int] | None
    prediction_asymptotic: float
    prediction_finite: float

    @property
    def n_failed(self) -> int:  # noqa: D102
        return self.per_trial.filter(pl.col("ave").is_null()).height

    @classmethod
    def from_table(cls, config: TrialConfig, per_trial: pl.DataFrame) -> TrialStats:
        """Compute the summary statistics of the provided per-trial records."""
        per_trial = per_trial.sort("trial")
        aves = per_trial.get_column("ave").drop_nulls().to_numpy()
        if aves.size == 0:
            raise SubmaxError(f"All {per_trial.height} trials failed for {config.to_dict()}")

        mean_ave = math.fsum(aves) / aves.size
        if aves.size > 1:
            std_ave = math.sqrt(math.fsum((aves - mean_ave) ** 2) / (aves.size - 1))
        else:
            std_ave = 0.0
        q05, q50, q95 = (float(q) for q in np.quantile(aves, QUANTILE_LEVELS))

        histogram = None
        if config.alg is Algorithm.LAS:
            counts = per_trial.get_column("t_las").drop_nulls().value_counts().sort("t_las")
            histogram = {int(v): int(c) for v, c in counts.iter_rows()}

        target = PREDICTION_TARGET[config.alg]
        return cls(
            config=config,
            per_trial=per_trial,
            mean_ave=mean_ave,
            std_ave=std_ave,
            quantiles=(q05, q50, q95),
            t_las_histogram=histogram,
            prediction_asymptotic=predicted_ave(target, config.n, config.k),
            prediction_finite=predicted_ave(target, config.n, config.k, finite_correction=True),
        )

    def merge(self, other: TrialStats) -> TrialStats:
        """
        Combine two batches over disjoint, adjacent trial ranges of the same experiment.

        Merging is associative and commutative. The merged trial range must be contiguous so that
        the merged config still describes exactly the trials it holds.
        """
        mine = replace(self.config, trials=1, first_trial=0)
        theirs = replace(other.config, trials=1, first_trial=0)
        if mine != theirs:
            raise DomainError(f"Cannot merge stats of differing experiments: {mine} vs. {theirs}")

        combined = pl.concat([self.per_trial, other.per_trial])
        trial_idx = combined.get_column("trial")
        if trial_idx.n_unique() != combined.height:
            raise DomainError("Cannot merge stats with overlapping trial indices.")

        first, last = int(trial_idx.min()), int(trial_idx.max())
        if last - first + 1 != combined.height:
            raise DomainError(
                f"Cannot merge stats with a gap in trial indices, [{first}, {last}] holds "
                f"{combined.height} trials."
            )

        config = replace(self.config, trials=combined.height, first_trial=first)
        return TrialStats.from_table(config, combined)

    def to_dict(self) -> dict[str, t.Any]:
        """Dump the summary into a dictionary; per-trial records are left to `to_csv`."""
        histogram = None
        if self.t_las_histogram is not None:
            histogram = {str(v): c for v, c in self.t_las_histogram.items()}

        q05, q50, q95 = self.quantiles
        return {
            "config": self.config.to_dict(),
            "completed": self.per_trial.height - self.n_failed,
            "failed": self.n_failed,
            "mean_ave": self.mean_ave,
            "std_ave": self.std_ave,
            "quantiles": {"q05": q05, "q50": q50, "q95": q95},
            "t_las_histogram": histogram,
            "prediction_asymptotic": self.prediction_asymptotic,
            "prediction_finite": self.prediction_finite,
        }

    def to_json(self) -> str:  # noqa: D102
        return json.dumps(self.to_dict())

    def to_csv(self, out_filepath: Path) -> None:
        """Dump the per-trial records as CSV with header `trial,seed,ave,t_las,m`."""
        self.per_trial.select(CSV_COLUMNS).write_csv(out_filepath, line_terminator="\n")


def run_trials(cfg: TrialConfig, threads: int = 1, verbose: bool = False) -> TrialStats:
    """
    Run the configured batch of trials and aggregate the results.

    Seeds are derived up front and records are collected in trial order, so the output does not
    depend on `threads`.
    """
    seeds = [(trial, derive_seed(cfg.master_seed, trial)) for trial in cfg.trial_indices]
    _log(f"Running {cfg.trials} {cfg.alg.value} trials at n={cfg.n}, k={cfg.k} ...", verbose)

    rows = _parallel_map(lambda trial, seed: run_trial(cfg, trial, seed), seeds, threads)

    per_trial = pl.DataFrame(rows, schema=TRIAL_SCHEMA)
    for row in rows:
        if row["error"] is not None:
            _log(f"Trial {row['trial']} failed: {row['error']}", verbose)

    return TrialStats.from_table(cfg, per_trial)


def run_single(
    alg: Algorithm | str, n: int, k: int, seed: int, theta: float | None = None
) -> RunRecord:
    """Run one algorithm on the square matrix regenerated from `seed`."""
    return run_algorithm(alg, gen_gaussian(n, n, seed), k, theta=theta)


def t_las_tail(trial_stats: TrialStats, threshold: int) -> float:
    """Calculate the empirical `P(T_LAS > threshold)` over the completed trials of an LAS batch."""
    if trial_stats.config.alg is not Algorithm.LAS:
        raise DomainError(
            f"Iteration tails require LAS stats, received: {trial_stats.config.alg.value}"
        )

    counts = trial_stats.per_trial.get_column("t_las").drop_nulls()
    return float((counts > threshold).sum() / counts.len())


def sample_max_normalized(
    n: int, trials: int, seed: int, threads: int = 1
) -> np.ndarray:
    """
    Draw normalized maxima `sqrt(2 log n) (L_n - b_n)` of `n` fresh standard normals per trial.

    Trial `t` uses the stream seeded by `derive_seed(seed, t)`.
    """
    if n < 10:
        raise DomainError(f"Normalized maxima require n >= 10, received: {n}")
    if trials < 1:
        raise DomainError(f"At least one trial is required, received: {trials}")

    scale = math.sqrt(2 * math.log(n))
    center = b_n(n)
    args = [(derive_seed(seed, trial), n) for trial in range(trials)]
    maxima = _parallel_map(gaussian_stream_max, args, threads)
    return scale * (np.array(maxima, dtype=np.float64) - center)


def ks_statistic(
    samples: abc.Sequence[float] | np.ndarray, cdf: abc.Callable[[float], float]
) -> float:
    """Calculate the Kolmogorov-Smirnov distance between the samples' empirical CDF and `cdf`."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise DomainError("KS statistic requires at least one sample.")

    res = stats.kstest(samples, np.vectorize(cdf, otypes=[np.float64]))
    return float(res.statistic)


def band_coverage(samples: abc.Sequence[float] | np.ndarray, n: int) -> float:
    """
    Calculate the fraction of normalized maxima inside the extreme value band.

    `L_n` within `b_n +/- log log n / sqrt(2 log n)` is the same event as `|sample| <= log log n`.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise DomainError("Band coverage requires at least one sample.")
    if n < 3:
        raise DomainError(f"Band requires n >= 3, received: {n}")

    return float(np.mean(np.abs(samples) <= math.log(math.log(n))))


class IgpComparison(t.NamedTuple):  # noqa: D101
    ratio_of_means: float
    win_fraction: float
    igp_mean: float
    las_mean: float


def _paired_trial(n: int, k: int, seed: int) -> tuple[float, float]:
    matrix = gen_gaussian(n, n, seed)
    return run_igp(matrix, k).ave, run_las(matrix, k).ave


def igp_vs_las(
    n: int, k: int, trials: int, seed: int = DEFAULT_MASTER_SEED, threads: int = 1
) -> IgpComparison:
    """
    Compare IGP against LAS on paired trials.

    Both algorithms run on the same matrix for each trial index, seeded as in `run_trials`.
    """
    if trials < 1:
        raise DomainError(f"At least one trial is required, received: {trials}")
    if n < 3 or not 1 <= k <= n:
        raise DomainError(f"Comparison requires n >= 3 and 1 <= k <= n, received: n={n}, k={k}")

    args = [(n, k, derive_seed(seed, trial)) for trial in range(trials)]
    pairs = np.array(_parallel_map(_paired_trial, args, threads), dtype=np.float64)
    igp_mean = math.fsum(pairs[:, 0]) / trials
    las_mean = math.fsum(pairs[:, 1]) / trials

    return IgpComparison(
        ratio_of_means=igp_mean / las_mean,
        win_fraction=float(np.mean(pairs[:, 0] > pairs[:, 1])),
        igp_mean=igp_mean,
        las_mean=las_mean,
    )
