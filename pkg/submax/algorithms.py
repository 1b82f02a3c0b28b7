from __future__ import annotations

import itertools
import json
import math
import typing as t
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from submax import CapacityError, DomainError, NumericError, UnderTargetError
from submax.matrix import GaussianMatrix, Selection, ave, is_local_max
from submax.theory import theta_n

# Largest number of (row set, column set) pairs the exact searches may stand in for
ENUMERATION_BUDGET = 10**8


class Algorithm(Enum):  # noqa: D101
    LAS = "las"
    GREEDY = "greedy"
    IGP = "igp"
    BRUTE = "brute"


def _top_k(sums: np.ndarray, k: int) -> tuple[int, ...]:
    # Stable sort on the negated sums keeps the smallest indices among ties
    picked = np.argsort(-sums, kind="stable")[:k]
    return tuple(sorted(int(i) for i in picked))


def _check_k(matrix: GaussianMatrix, k: int) -> None:
    if not 1 <= k <= min(matrix.n, matrix.m):
        raise DomainError(
            f"k must lie in [1, {min(matrix.n, matrix.m)}] for a ({matrix.n}, {matrix.m}) matrix, "
            f"received: {k}"
        )


class LasStep(t.NamedTuple):  # noqa: D101
    iteration: int
    selection: Selection
    ave: float


@dataclass(frozen=True, slots=True)
class LasResult:
    """
    Outcome of a Large Average Submatrix search.

    `trace` holds the initial selection as iteration `0` followed by one record per completed search
    step, the last of which is the confirming step counted by `t_las`.
    """

    selection: Selection
    t_las: int
    trace: tuple[LasStep, ...] = field(repr=False)
    converged: bool = True

    @property
    def ave(self) -> float:  # noqa: D102
        return self.trace[-1].ave


def run_las(
    matrix: GaussianMatrix,
    k: int,
    init: Selection | None = None,
    max_steps: int | None = None,
) -> LasResult:
    """
    Alternate column and row best responses until a search returns the incumbent set.

    Each search picks the `k` lines with the largest sums over the current opposite set, preferring
    the lexicographically smallest set among ties. The initial selection defaults to the first `k`
    rows and columns.

    The loop stops at the first confirming search from step 2 onward; a confirming first step only
    shows that the initial columns answer the initial rows, so the row search still runs. Every
    search step counts towards `t_las`, the confirming one included.

    `max_steps` defaults to `C(n, k) * C(m, k)`, the number of distinct selections; exceeding it
    raises `NumericError`.
    """
    _check_k(matrix, k)
    if init is None:
        init = Selection(rows=tuple(range(k)), cols=tuple(range(k)))
    if init.shape != (k, k):
        raise DomainError(f"Initial selection must be {k} x {k}, received: {init.shape}")
    init.validate_for(matrix)

    if max_steps is None:
        max_steps = math.comb(matrix.n, k) * math.comb(matrix.m, k)

    entries = matrix.entries
    rows, cols = init.rows, init.cols
    trace = [LasStep(0, init, ave(matrix, init))]
    step = 0
    while True:
        step += 1
        if step > max_steps:
            raise NumericError(
                f"LAS did not converge within {max_steps} steps (n={matrix.n}, k={k})"
            )

        if step % 2:
            found = _top_k(entries[list(rows), :].sum(axis=0), k)
            confirmed = found == cols
            cols = found
        else:
            found = _top_k(entries[:, list(cols)].sum(axis=1), k)
            confirmed = found == rows
            rows = found

        current = Selection(rows=rows, cols=cols)
        trace.append(LasStep(step, current, ave(matrix, current)))
        if confirmed and step >= 2:
            break

    return LasResult(selection=current, t_las=step, trace=tuple(trace))


@dataclass(frozen=True, slots=True)
class GreedyResult:
    """Balanced clique of side `m`, every entry above `theta`; `ave` is `None` when `m = 0`."""

    selection: Selection
    m: int
    theta: float
    ave: float | None


def run_greedy(matrix: GaussianMatrix, theta: float) -> GreedyResult:
    """
    Grow a clique of the bipartite graph with edges `M_ij > theta` one node at a time.

    Starting from the smallest row with an edge, columns and rows are added alternately, each time
    taking the smallest-index node adjacent to every node already chosen on the other side. The
    construction stops once no fresh node is available and the first `m` rows and columns form the
    balanced clique.
    """
    adjacency = matrix.entries > theta
    rows_with_edges = np.flatnonzero(adjacency.any(axis=1))
    if rows_with_edges.size == 0:
        return GreedyResult(selection=Selection(rows=(), cols=()), m=0, theta=theta, ave=None)

    first_row = int(rows_with_edges[0])
    rows = [first_row]
    cols: list[int] = []
    row_taken = np.zeros(matrix.n, dtype=bool)
    col_taken = np.zeros(matrix.m, dtype=bool)
    row_taken[first_row] = True
    cand_rows = np.ones(matrix.n, dtype=bool)
    cand_cols = adjacency[first_row].copy()

    while True:
        fresh = np.flatnonzero(cand_cols & ~col_taken)
        if fresh.size == 0:
            break
        j = int(fresh[0])
        cols.append(j)
        col_taken[j] = True
        cand_rows &= adjacency[:, j]

        fresh = np.flatnonzero(cand_rows & ~row_taken)
        if fresh.size == 0:
            break
        i = int(fresh[0])
        rows.append(i)
        row_taken[i] = True
        cand_cols &= adjacency[i]

    m = min(len(rows), len(cols))
    selection = Selection.of(rows[:m], cols[:m])
    return GreedyResult(selection=selection, m=m, theta=theta, ave=ave(matrix, selection))


def greedy_for_k(matrix: GaussianMatrix, k: int, theta: float | None = None) -> GreedyResult:
    """
    Run the greedy clique construction at `theta_n(n, k)`, keeping the first `k` nodes per side.

    If the clique comes up short, `UnderTargetError` is raised carrying the achieved side and the
    untruncated result.
    """
    if k < 2:
        raise DomainError(f"Greedy search requires k >= 2, received: {k}")
    _check_k(matrix, k)

    if theta is None:
        theta = theta_n(matrix.n, k)

    result = run_greedy(matrix, theta)
    if result.m < k:
        raise UnderTargetError(
            f"Greedy clique reached m={result.m} < k={k} at theta={theta}",
            achieved=result.m,
            result=result,
        )

    # Picks are increasing in index, so the first k picked nodes are the k smallest selected
    selection = Selection(rows=result.selection.rows[:k], cols=result.selection.cols[:k])
    return GreedyResult(selection=selection, m=k, theta=theta, ave=ave(matrix, selection))


@dataclass(frozen=True, slots=True)
class IgpResult:  # noqa: D101
    selection: Selection
    step_sums: tuple[float, ...]
    ave: float


def run_igp(matrix: GaussianMatrix, k: int) -> IgpResult:
    """
    Build a `k x k` submatrix one line at a time, each drawn from its own block of fresh indices.

    Rows and columns are partitioned into blocks `P_i = [(i - 1) w, i w)` with `w = floor(n / k)`.
    Row `0` seeds the selection; step `r` adds the column of `P_r` with the largest sum over the
    current rows, then, while fewer than `k` rows are held, the row of `P_(r+1)` with the largest
    sum over the current columns.

    NOTE: Every entry of the final submatrix is added by exactly one step, so `ave` is the sum of
    `step_sums` over `k^2`.
    """
    if k < 1:
        raise DomainError(f"k must be positive, received: {k}")

    row_width, col_width = matrix.n // k, matrix.m // k
    if row_width < 1 or col_width < 1:
        raise DomainError(f"Block width floor(n / k) is zero for ({matrix.n}, {matrix.m}), k={k}")

    entries = matrix.entries
    rows = [0]
    cols: list[int] = []
    step_sums: list[float] = []
    for r in range(k):
        block = np.arange(r * col_width, (r + 1) * col_width)
        sums = entries[np.ix_(rows, block)].sum(axis=0)
        best = int(np.argmax(sums))  # argmax returns the first maximizer
        cols.append(int(block[best]))
        step_sums.append(float(sums[best]))

        if r + 1 < k:
            block = np.arange((r + 1) * row_width, (r + 2) * row_width)
            sums = entries[np.ix_(block, cols)].sum(axis=1)
            best = int(np.argmax(sums))
            rows.append(int(block[best]))
            step_sums.append(float(sums[best]))

    return IgpResult(
        selection=Selection(rows=tuple(rows), cols=tuple(cols)),
        step_sums=tuple(step_sums),
        ave=math.fsum(step_sums) / k**2,
    )


def _check_budget(matrix: GaussianMatrix, k: int, budget: int) -> None:
    n_pairs = math.comb(matrix.n, k) * math.comb(matrix.m, k)
    if n_pairs > budget:
        raise CapacityError(
            f"Enumerating {n_pairs} selections for ({matrix.n}, {matrix.m}), k={k} exceeds the "
            f"budget of {budget}"
        )


def _best_responses(matrix: GaussianMatrix, k: int) -> t.Iterator[tuple[Selection, float]]:
    # Row sets in lexicographic order, each paired with its best column response and that total
    for rows in itertools.combinations(range(matrix.n), k):
        col_sums = matrix.entries[list(rows), :].sum(axis=0)
        cols = _top_k(col_sums, k)
        yield Selection(rows=rows, cols=cols), float(col_sums[list(cols)].sum())


def brute_force(
    matrix: GaussianMatrix, k: int, budget: int = ENUMERATION_BUDGET
) -> tuple[Selection, float]:
    """
    Find the exact maximum average `k x k` submatrix.

    For a fixed row set the best column set is the `k` largest column sums, so only row sets are
    enumerated. The first maximizer in lexicographic order is kept.
    """
    _check_k(matrix, k)
    _check_budget(matrix, k, budget)

    best_sel, best_total = None, -math.inf
    for selection, total in _best_responses(matrix, k):
        if total > best_total:
            best_sel, best_total = selection, total

    assert best_sel is not None
    return best_sel, ave(matrix, best_sel)


def enumerate_local_maxima(
    matrix: GaussianMatrix, k: int, budget: int = ENUMERATION_BUDGET
) -> list[Selection]:
    """
    List every locally maximum `k x k` selection, in lexicographic order of row sets.

    A local maximum is column dominant, so its columns are the best response to its rows; testing
    that single candidate per row set covers all of them for matrices without tied column sums.
    Row sets are distinct, so no selection is produced twice.
    """
    _check_k(matrix, k)
    _check_budget(matrix, k, budget)

    return [sel for sel, _ in _best_responses(matrix, k) if is_local_max(matrix, sel)]


@dataclass(frozen=True, slots=True)
class RunRecord:
    """Algorithm-independent view of a single run, as reported by `submax run` and the sweeps."""

    alg: Algorithm
    selection: Selection
    ave: float | None
    t_las: int | None = None
    step_sums: tuple[float, ...] | None = None
    m: int | None = None
    theta: float | None = None

    def to_dict(self, n: int, k: int, seed: int | None = None) -> dict[str, t.Any]:
        """
        Dump the run into a dictionary, with the run's matrix context.

        Fields that do not apply to the algorithm are omitted, as is a `None` seed.
        """
        out: dict[str, t.Any] = {"alg": self.alg.value, "n": n, "k": k, "seed": seed}
        out.update(self.selection.to_dict())
        out.update(
            {
                "ave": self.ave,
                "t_las": self.t_las,
                "step_sums": list(self.step_sums) if self.step_sums is not None else None,
                "m": self.m,
                "theta": self.theta,
            }
        )
        return {key: val for key, val in out.items() if val is not None}

    def to_json(self, n: int, k: int, seed: int | None = None) -> str:  # noqa: D102
        return json.dumps(self.to_dict(n, k, seed))


def run_algorithm(
    alg: Algorithm | str, matrix: GaussianMatrix, k: int, theta: float | None = None
) -> RunRecord:
    """
    Dispatch a single run of the requested algorithm.

    `theta` only applies to the greedy search, which otherwise uses `theta_n(n, k)`. A short greedy
    clique raises `UnderTargetError` with the record of the untruncated clique attached.
    """
    alg = Algorithm(alg)
    if alg is Algorithm.LAS:
        las = run_las(matrix, k)
        return RunRecord(alg=alg, selection=las.selection, ave=las.ave, t_las=las.t_las)
    elif alg is Algorithm.GREEDY:
        try:
            greedy = greedy_for_k(matrix, k, theta=theta)
        except UnderTargetError as e:
            short = t.cast(GreedyResult, e.result)
            e.result = RunRecord(
                alg=alg, selection=short.selection, ave=short.ave, m=short.m, theta=short.theta
            )
            raise
        return RunRecord(
            alg=alg, selection=greedy.selection, ave=greedy.ave, m=greedy.m, theta=greedy.theta
        )
    elif alg is Algorithm.IGP:
        igp = run_igp(matrix, k)
        return RunRecord(alg=alg, selection=igp.selection, ave=igp.ave, step_sums=igp.step_sums)
    else:
        selection, best = brute_force(matrix, k)
        return RunRecord(alg=alg, selection=selection, ave=best)
