from __future__ import annotations

import itertools
import json
import math
import typing as t
from collections import abc
from dataclasses import dataclass
from enum import Enum

import numpy as np

from submax.algorithms import brute_force, enumerate_local_maxima, run_igp, run_las
from submax.experiments import (
    DEFAULT_MASTER_SEED,
    band_coverage,
    ks_statistic,
    sample_max_normalized,
)
from submax.matrix import (
    GaussianMatrix,
    Selection,
    anova,
    ave,
    derive_seed,
    gen_gaussian,
    is_local_max,
    overlap_cholesky,
    psi_col,
    psi_reconstruct,
    psi_row,
    reconstruct,
)
from submax.overlap import (
    critical_alpha1,
    critical_alpha2,
    f_overlap,
    overlap_exponent_numeric,
    projection_gap,
    quartic_stationary_roots,
    region_components,
    region_grid,
)
from submax.theory import (
    TAIL_SWITCH,
    gumbel_cdf,
    gumbel_reference,
    log_normal_tail,
    normal_quantile,
    normal_tail,
    normal_tail_bounds,
)

# Reference values
ALPHA1_REF = 1.224744871
ALPHA2_REF = 1.360827635
GAP_REF = (0.28, 0.40)

TAIL_GRID = np.linspace(2.0, 8.0, 601)
GUMBEL_N = 10**6
GUMBEL_TRIALS = 2000
ORACLE_INSTANCES = 50
ORACLE_ROUNDING = 1e-12
DECOMPOSITION_INSTANCES = 100
PSI_N_CONTEXT = 1000
EXPONENT_CASES = tuple(itertools.product((1.1, 1.2, 1.3), (0.25, 0.5)))


class Suite(Enum):  # noqa: D101
    TAILS = "tails"
    ANOVA = "anova"
    GUMBEL = "gumbel"
    ORACLE = "oracle"
    OGP = "ogp"


@dataclass(frozen=True, slots=True)
class Check:  # noqa: D101
    name: str
    value: float | int | list[float] | None
    expected: str
    passed: bool

    def __post_init__(self) -> None:
        # numpy comparisons yield np.bool_, which json cannot encode
        object.__setattr__(self, "passed", bool(self.passed))
        if isinstance(self.value, np.generic):
            object.__setattr__(self, "value", self.value.item())

    @classmethod
    def within(cls, name: str, value: float, target: float, tol: float) -> Check:  # noqa: D102
        return cls(name, value, f"{target} +/- {tol}", abs(value - target) <= tol)

    @classmethod
    def at_most(cls, name: str, value: float, limit: float) -> Check:  # noqa: D102
        return cls(name, value, f"<= {limit}", value <= limit)


@dataclass(frozen=True, slots=True)
class VerifyReport:  # noqa: D101
    suite: Suite
    seed: int
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:  # noqa: D102
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict[str, t.Any]:  # noqa: D102
        return {
            "suite": self.suite.value,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "value": c.value, "expected": c.expected, "passed": c.passed}
                for c in self.checks
            ],
        }

    def to_json(self) -> str:  # noqa: D102
        return json.dumps(self.to_dict())


def tails_suite(seed: int, threads: int = 1) -> list[Check]:
    """Check the tail function against its Mills-ratio bounds and the quantile."""
    grid = TAIL_GRID.tolist()
    inside = sum(bool(normal_tail_bounds(u).contains(normal_tail(u))) for u in grid)

    inversion_err = max(abs(-normal_quantile(normal_tail(u)) - u) for u in grid)

    # Both evaluation paths should meet at the switch point
    below = log_normal_tail(TAIL_SWITCH)
    above = log_normal_tail(math.nextafter(TAIL_SWITCH, math.inf))

    return [
        Check("tail_inside_bounds", int(inside), f"== {TAIL_GRID.size}", inside == TAIL_GRID.size),
        Check.at_most("quantile_inverts_tail", inversion_err, 1e-9),
        Check.at_most("log_tail_switch_jump", abs(above - below), 1e-9),
    ]


def _random_family(rng: np.random.Generator) -> list[list[int]]:
    # Each subset holds a private element, so the indicator vectors are independent
    r = int(rng.integers(2, 9))
    k = int(rng.integers(2, 8))
    pool = np.arange(r, r + k + 5)
    return [[a, *rng.choice(pool, size=k - 1, replace=False).tolist()] for a in range(r)]


def anova_suite(seed: int, threads: int = 1) -> list[Check]:
    """Check the ANOVA and Psi round trips and the overlap factorization on random inputs."""
    anova_err = psi_err = chol_err = norm_err = 0.0
    for i in range(DECOMPOSITION_INSTANCES):
        k = i % 20 + 1
        block = gen_gaussian(k, k, derive_seed(seed, i)).entries
        anova_err = max(anova_err, float(np.abs(reconstruct(anova(block)) - block).max()))
        for psi in (psi_row, psi_col):
            rebuilt = psi_reconstruct(psi(block, PSI_N_CONTEXT))
            psi_err = max(psi_err, float(np.abs(rebuilt - block).max()))

        rng = np.random.default_rng(derive_seed(seed, DECOMPOSITION_INSTANCES + i))
        family = _random_family(rng)
        chol = overlap_cholesky(family)
        size = len(family[0])
        sigma = np.array([[len(set(a) & set(b)) / size for b in family] for a in family])
        chol_err = max(chol_err, float(np.abs(chol @ chol.T - sigma).max()))
        norm_err = max(norm_err, float(np.abs(np.linalg.norm(chol, axis=1) - 1).max()))

    return [
        Check.at_most("anova_round_trip", anova_err, 1e-12),
        Check.at_most("psi_round_trip", psi_err, 1e-10),
        Check.at_most("cholesky_residual", chol_err, 1e-10),
        Check.at_most("cholesky_row_norm", norm_err, 1e-10),
    ]


def gumbel_suite(seed: int, threads: int = 1) -> list[Check]:
    """Compare normalized Gaussian maxima against the standard Gumbel law."""
    samples = sample_max_normalized(GUMBEL_N, GUMBEL_TRIALS, seed, threads=threads)
    ref = gumbel_reference()

    band = math.log(math.log(GUMBEL_N))
    band_mass = ref.cdf(band) - ref.cdf(-band)

    return [
        Check.within("sample_mean", float(samples.mean()), round(ref.mean, 3), 0.10),
        Check.at_most("ks_statistic", ks_statistic(samples, gumbel_cdf), 0.05),
        Check.within("p_nonpositive", float(np.mean(samples <= 0)), round(ref.cdf(0), 4), 0.03),
        Check.within(
            "band_coverage", band_coverage(samples, GUMBEL_N), round(band_mass, 4), 0.03
        ),
    ]


def naive_best(matrix: GaussianMatrix, k: int) -> tuple[Selection, float]:
    """
    Scan every `(row set, column set)` pair, keeping the first maximizer in lexicographic order.

    NOTE: Only suitable for tiny instances.
    """
    best_sel, best_val = None, -math.inf
    for rows in itertools.combinations(range(matrix.n), k):
        for cols in itertools.combinations(range(matrix.m), k):
            sel = Selection(rows=rows, cols=cols)
            val = ave(matrix, sel)
            if val > best_val:
                best_sel, best_val = sel, val

    assert best_sel is not None
    return best_sel, best_val


def naive_local_maxima(matrix: GaussianMatrix, k: int) -> list[Selection]:
    """Filter every `(row set, column set)` pair through `is_local_max`."""
    return [
        Selection(rows=rows, cols=cols)
        for rows in itertools.combinations(range(matrix.n), k)
        for cols in itertools.combinations(range(matrix.m), k)
        if is_local_max(matrix, Selection(rows=rows, cols=cols))
    ]


def oracle_suite(seed: int, threads: int = 1, n: int = 8, k: int = 2) -> list[Check]:
    """Cross-check the exact searches against naive enumeration and the heuristics."""
    brute_mismatch = local_mismatch = dominated = las_not_local = 0
    for i in range(ORACLE_INSTANCES):
        matrix = gen_gaussian(n, n, derive_seed(seed, i))
        selection, best = brute_force(matrix, k)
        naive_sel, naive_val = naive_best(matrix, k)
        brute_mismatch += selection != naive_sel or best != naive_val

        local = enumerate_local_maxima(matrix, k)
        local_mismatch += local != naive_local_maxima(matrix, k)

        las = run_las(matrix, k)
        las_not_local += not is_local_max(matrix, las.selection)
        # IGP sums its steps rather than averaging the block, allow for rounding
        dominated += best < las.ave or best < run_igp(matrix, k).ave - ORACLE_ROUNDING

    return [
        Check("brute_matches_naive", brute_mismatch, "== 0", brute_mismatch == 0),
        Check("local_maxima_match_naive", local_mismatch, "== 0", local_mismatch == 0),
        Check("brute_dominates_heuristics", dominated, "== 0", dominated == 0),
        Check("las_is_local_max", las_not_local, "== 0", las_not_local == 0),
    ]


def ogp_suite(seed: int, threads: int = 1) -> list[Check]:
    """Check the critical levels, region topology, and the pair-count exponent."""
    alpha1, alpha2 = critical_alpha1(), critical_alpha2()
    root = quartic_stationary_roots(alpha2)[0].y

    checks = [
        Check.within("alpha1", alpha1, ALPHA1_REF, 1e-8),
        Check.within("alpha2", alpha2, ALPHA2_REF, 1e-6),
        Check.at_most("f_at_onset", abs(f_overlap(alpha2, root, root)), 1e-8),
    ]

    for alpha, expected in ((1.0, 1), (1.30, 1), (1.364, 2), (1.40, 2)):
        components = region_components(region_grid(alpha))
        checks.append(
            Check(f"components_{alpha}", components, f"== {expected}", components == expected)
        )

    gap = projection_gap(region_grid(1.364), "y2")
    gap_ok = gap is not None and all(abs(g - r) <= 0.02 for g, r in zip(gap, GAP_REF))
    checks.append(
        Check("gap_1.364", list(gap) if gap else None, f"{list(GAP_REF)} +/- 0.02", gap_ok)
    )

    for alpha, y in EXPONENT_CASES:
        numeric = overlap_exponent_numeric(1e12, 20, alpha, y, y)
        checks.append(
            Check.at_most(f"exponent_{alpha}_{y}", abs(numeric - f_overlap(alpha, y, y)), 0.25)
        )

    return checks


SUITES: dict[Suite, abc.Callable[[int, int], list[Check]]] = {
    Suite.TAILS: tails_suite,
    Suite.ANOVA: anova_suite,
    Suite.GUMBEL: gumbel_suite,
    Suite.ORACLE: oracle_suite,
    Suite.OGP: ogp_suite,
}


def run_suite(
    suite: Suite | str, seed: int = DEFAULT_MASTER_SEED, threads: int = 1
) -> VerifyReport:
    """Run the named verification suite and collect its checks into a report."""
    suite = Suite(suite)
    checks = SUITES[suite](seed, threads)
    return VerifyReport(suite=suite, seed=seed, checks=tuple(checks))
