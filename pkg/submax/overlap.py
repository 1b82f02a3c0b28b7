from __future__ import annotations

import json
import math
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl
from scipy import integrate, ndimage, optimize, special

from submax import DomainError, NumericError
from submax.theory import NUMERIC_T, log_normal_tail

DEFAULT_RESOLUTION = 800
MIN_RESOLUTION = 16
DEFAULT_DELTA = 0.02

# Integration window half-width, in units of the shared component's standard deviation
QUAD_HALF_WIDTH = 12
QUAD_REL_TOL = 1e-10

QUARTIC_TOL = 1e-12
BISECTION_TOL = 1e-13
CLOSED_FORM_TOL = 1e-9

ALPHA1_CLOSED = math.sqrt(1.5)
ALPHA2_CLOSED = 5 * math.sqrt(2) / (3 * math.sqrt(3))

AXIS_T: t.TypeAlias = t.Literal["y1", "y2"]


def _check_fraction(name: str, y: float) -> None:
    if not 0 <= y <= 1:
        raise DomainError(f"Overlap fraction '{name}' must lie in [0, 1], received: {y}")


def f_overlap(alpha: float, y1: float, y2: float) -> float:
    """
    Evaluate the pair-count exponent `f(alpha, y1, y2) = 4 - y1 - y2 - 2 alpha^2 / (1 + y1 y2)`.

    `n^(k f)` is the expected number of pairs of `k x k` submatrices at average level
    `alpha sqrt(2 log n / k)` sharing `y1 k` rows and `y2 k` columns.
    """
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, received: {alpha}")
    _check_fraction("y1", y1)
    _check_fraction("y2", y2)

    return 4 - y1 - y2 - 2 * alpha**2 / (1 + y1 * y2)


def _f_array(alpha: float, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    return 4 - y1 - y2 - 2 * alpha**2 / (1 + y1 * y2)


def _quartic(y: float, alpha: float) -> float:
    return y**4 + 2 * y**2 - 2 * alpha**2 * y + 1


class StationaryRoot(t.NamedTuple):  # noqa: D101
    y: float
    multiplicity: int


def quartic_stationary_roots(alpha: float) -> list[StationaryRoot]:
    """
    Locate the real roots in `[0, 1]` of `y^4 + 2y^2 - 2 alpha^2 y + 1 = 0`.

    These are the stationary points of `f(alpha, y, y)` along the diagonal. The quartic is strictly
    convex, so it has at most two real roots, one on each side of its unique minimizer (the real
    root of the increasing cubic derivative). Each root is bracketed and polished with Brent's
    method; a minimum that touches zero is reported once as a double root.
    """
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, received: {alpha}")

    a2 = alpha**2
    if a2 == 0:
        # (y^2 + 1)^2 has no real roots
        return []

    def deriv(y: float) -> float:
        return 4 * y**3 + 4 * y - 2 * a2

    y_min = optimize.brentq(deriv, 0.0, max(1.0, a2), xtol=1e-16, rtol=4 * np.finfo(float).eps)
    q_min = _quartic(y_min, alpha)

    if q_min > QUARTIC_TOL:
        return []

    if q_min >= -QUARTIC_TOL:
        return [StationaryRoot(y_min, 2)] if y_min <= 1 else []

    roots = []
    lo_root = optimize.brentq(_quartic, 0.0, y_min, args=(alpha,), xtol=1e-16)
    roots.append(lo_root)

    # q(hi) >= hi * (hi^3 - 2 alpha^2) > 0
    hi = 1 + 2 * a2
    hi_root = optimize.brentq(_quartic, y_min, hi, args=(alpha,), xtol=1e-16)
    roots.append(hi_root)

    return [StationaryRoot(y, 1) for y in roots if 0 <= y <= 1]


def _diagonal_minimum(alpha: float) -> float:
    # Value of f at the diagonal local minimum, positive sentinel when no stationary point exists
    roots = quartic_stationary_roots(alpha)
    if not roots:
        return 1.0

    y = roots[0].y
    return f_overlap(alpha, y, y)


def critical_alpha1() -> float:
    """
    Return the largest alpha for which `f(alpha, ., .)` is non-negative on all of `[0, 1]^2`.

    With no interior stationary points the minimum of `f` sits on the boundary, at `(1, 0)` or
    `(1, 1)`, so the threshold is where `min(3 - 2 alpha^2, 2 - alpha^2)` reaches zero. Both
    defining conditions are checked at the closed form `sqrt(3/2)` before it is returned.
    """
    alpha = ALPHA1_CLOSED
    boundary = min(3 - 2 * alpha**2, 2 - alpha**2)
    if abs(boundary) > CLOSED_FORM_TOL:
        raise NumericError(f"Boundary condition failed at alpha1 = {alpha}: min value {boundary}")

    if quartic_stationary_roots(alpha):
        raise NumericError(f"Unexpected stationary point of f at alpha1 = {alpha}")

    return alpha


def critical_alpha2(tol: float = BISECTION_TOL, max_iter: int = 200) -> float:
    """
    Locate the onset of the overlap gap by bisection over `(alpha1, sqrt(2))`.

    The bracket tracks the sign of the diagonal local minimum of `f`, which decreases in alpha once
    the stationary quartic has real roots. The result is cross-checked against `5 sqrt(2) / (3
    sqrt(3))`.
    """
    lo, hi = critical_alpha1(), math.sqrt(2)
    g_lo, g_hi = _diagonal_minimum(lo), _diagonal_minimum(hi)
    if not (g_lo > 0 > g_hi):
        raise NumericError(f"No sign change on [{lo}, {hi}]: g_lo={g_lo}, g_hi={g_hi}")

    for _ in range(max_iter):
        if hi - lo <= tol:
            break

        mid = 0.5 * (lo + hi)
        if _diagonal_minimum(mid) > 0:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericError(f"Bisection did not converge, final bracket [{lo}, {hi}]")

    alpha = 0.5 * (lo + hi)
    if abs(alpha - ALPHA2_CLOSED) > CLOSED_FORM_TOL:
        raise NumericError(f"Bisection result {alpha} disagrees with closed form {ALPHA2_CLOSED}")

    return alpha


@dataclass(slots=True)
class RegionGrid:
    """
    Rasterized evaluation of `f(alpha, y1, y2)` over `[0, 1]^2` at cell centers.

    Row `i` of `f_values` is the `y1` cell `(i + 0.5) / resolution`, column `j` the `y2` cell.
    """

    alpha: float
    resolution: int
    f_values: np.ndarray
    mask: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.mask = self.f_values >= 0

    @property
    def centers(self) -> np.ndarray:  # noqa: D102
        return (np.arange(self.resolution) + 0.5) / self.resolution

    def summary(self) -> dict[str, t.Any]:
        """Build the JSON sidecar describing the grid's topology."""
        gap = projection_gap(self, "y2")
        return {
            "alpha": self.alpha,
            "resolution": self.resolution,
            "components": region_components(self),
            "gap": list(gap) if gap is not None else None,
        }

    def to_csv(self, out_filepath: Path) -> None:
        """
        Dump the `f` values as a headerless CSV, one `y1` cell per line in ascending order.

        A JSON sidecar with the same stem is written alongside.
        """
        df = pl.DataFrame(
            self.f_values, schema=[f"y2_{j}" for j in range(self.resolution)], orient="row"
        )
        df.write_csv(out_filepath, include_header=False, line_terminator="\n")
        out_filepath.with_suffix(".json").write_text(json.dumps(self.summary()))


def region_grid(alpha: float, resolution: int = DEFAULT_RESOLUTION) -> RegionGrid:
    """Evaluate `f(alpha, ., .)` on a `resolution x resolution` grid of cell centers."""
    if resolution < MIN_RESOLUTION:
        raise DomainError(f"Resolution must be at least {MIN_RESOLUTION}, received: {resolution}")
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, received: {alpha}")

    centers = (np.arange(resolution) + 0.5) / resolution
    y1, y2 = np.meshgrid(centers, centers, indexing="ij")
    return RegionGrid(alpha=alpha, resolution=resolution, f_values=_f_array(alpha, y1, y2))


def region_components(grid: RegionGrid) -> int:
    """Count the 4-connected components of the achievable region."""
    _, n_components = ndimage.label(grid.mask)
    return int(n_components)


def _true_runs(flags: np.ndarray) -> list[tuple[int, int]]:
    # Inclusive (start, end) index pairs of consecutive True runs
    padded = np.concatenate(([False], flags, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def projection_gap(grid: RegionGrid, axis: AXIS_T) -> tuple[float, float] | None:
    """
    Find the widest band of forbidden overlaps along the specified axis.

    The achievable region is projected onto `axis`; if the projection splits into two or more
    intervals, the widest empty stretch between them is returned as `(lo, hi)`, the achievable
    cell centers bounding it. Otherwise `None` is returned.
    """
    if axis == "y1":
        projection = grid.mask.any(axis=1)
    elif axis == "y2":
        projection = grid.mask.any(axis=0)
    else:
        raise DomainError(f"Axis must be 'y1' or 'y2', received: '{axis}'")

    runs = _true_runs(projection)
    if len(runs) < 2:
        return None

    centers = grid.centers
    best: tuple[float, float] | None = None
    for (_, prev_end), (next_start, _) in zip(runs, runs[1:]):
        lo, hi = float(centers[prev_end]), float(centers[next_start])
        if best is None or hi - lo > best[1] - best[0]:
            best = (lo, hi)

    return best


def overlap_prob_exponent_closed(alpha: float, k: int, k1: int, k2: int) -> float:
    """Return the limiting probability exponent `-2 alpha^2 k^2 / (k^2 + k1 k2)`."""
    if k <= 0:
        raise DomainError(f"k must be positive, received: {k}")
    if not (0 <= k1 <= k and 0 <= k2 <= k):
        raise DomainError(f"Overlaps must lie in [0, k], received: k1={k1}, k2={k2}, k={k}")

    return -2 * alpha**2 * k**2 / (k**2 + k1 * k2)


def _log_interval(lo: float, hi: float) -> float:
    # log(Phi(hi) - Phi(lo)) for a standard normal, lo < hi
    if lo >= 0:
        log_q_lo = log_normal_tail(lo)
        return log_q_lo + math.log1p(-math.exp(log_normal_tail(hi) - log_q_lo))
    if hi <= 0:
        return _log_interval(-hi, -lo)

    return math.log1p(-math.exp(log_normal_tail(hi)) - math.exp(log_normal_tail(-lo)))


def overlap_log_probability(
    n: NUMERIC_T, k: int, alpha: float, k1: int, k2: int, delta: float = DEFAULT_DELTA
) -> float:
    """
    Calculate the log probability that two `k x k` submatrices sharing `k1` rows and `k2` columns
    both have average value in `[(alpha - delta), (alpha + delta)] sqrt(2 log n / k)`.

    The two entry sums are `X + Y1` and `X + Y2`, with the shared block `X ~ N(0, k1 k2)` and
    independent remainders `Y ~ N(0, k^2 - k1 k2)`. Conditioning on `X` leaves a squared interval
    probability, integrated against the density of `X` in log space. The log integrand is strongly
    concave, so a window of `QUAD_HALF_WIDTH` standard deviations of `X` around its maximizer holds
    all but a negligible part of the mass.
    """
    if n <= 1 or k < 1:
        raise DomainError(f"Requires n > 1 and k >= 1, received: n={n}, k={k}")
    if not (0 <= k1 <= k and 0 <= k2 <= k):
        raise DomainError(f"Overlaps must lie in [0, k], received: k1={k1}, k2={k2}, k={k}")
    if not 0 < delta < alpha:
        raise DomainError(f"delta must lie in (0, alpha), received: {delta}")

    scale = k**2 * math.sqrt(2 * math.log(n) / k)
    a, b = (alpha - delta) * scale, (alpha + delta) * scale
    var_x = k1 * k2
    var_y = k**2 - k1 * k2

    if var_y == 0:
        return _log_interval(a / k, b / k)

    sd_y = math.sqrt(var_y)
    if var_x == 0:
        return 2 * _log_interval(a / sd_y, b / sd_y)

    sd_x = math.sqrt(var_x)
    log_norm = -0.5 * math.log(2 * math.pi * var_x)

    def log_integrand(x: float) -> float:
        return (
            log_norm
            - x * x / (2 * var_x)
            + 2 * _log_interval((a - x) / sd_y, (b - x) / sd_y)
        )

    # The integrand peaks between 0 and the window's upper edge
    peak = optimize.minimize_scalar(
        lambda x: -log_integrand(x),
        bounds=(-QUAD_HALF_WIDTH * sd_x, b + QUAD_HALF_WIDTH * sd_x),
        method="bounded",
        options={"xatol": 1e-10 * sd_x},
    )
    x_star = float(peak.x)
    g_star = log_integrand(x_star)

    lo, hi = x_star - QUAD_HALF_WIDTH * sd_x, x_star + QUAD_HALF_WIDTH * sd_x
    value, abserr = integrate.quad(
        lambda x: math.exp(log_integrand(x) - g_star),
        lo,
        hi,
        points=[x_star],
        epsabs=0.0,
        epsrel=QUAD_REL_TOL,
        limit=400,
    )
    if not value > 0 or abserr > 1e-6 * value:
        raise NumericError(
            f"Quadrature did not converge: value={value}, abserr={abserr}, "
            f"window=[{lo}, {hi}], peak={x_star}, (n, k, k1, k2)=({n}, {k}, {k1}, {k2})"
        )

    return g_star + math.log(value)


def _log_ordered_pair_count(n: NUMERIC_T, k: int, overlap: int) -> float:
    # log of n! / ((k - o)! o! (k - o)! (n - 2k + o)!), the ordered pairs of k-subsets sharing o
    falling = 2 * k - overlap
    log_falling = math.fsum(np.log(n - np.arange(falling, dtype=np.float64)).tolist())
    return log_falling - 2 * special.gammaln(k - overlap + 1) - special.gammaln(overlap + 1)


def _window_counts(y: float, k: int, delta: float) -> list[int]:
    lo, hi = (y - delta) * k, (y + delta) * k
    return [c for c in range(k + 1) if lo < c < hi]


def overlap_exponent_numeric(
    n: NUMERIC_T, k: int, alpha: float, y1: float, y2: float, delta: float = DEFAULT_DELTA
) -> float:
    """
    Calculate `log E|O(alpha, y1, y2, delta)| / (k log n)` by direct summation.

    `O` is the set of pairs of `k x k` submatrices with average in the `delta` window around
    `alpha sqrt(2 log n / k)` and row/column overlap fractions within `delta` of `(y1, y2)`. Each
    `(k1, k2)` term is the product of the ordered pair counts and `overlap_log_probability`, and the
    terms are accumulated with a single log-sum-exp over a fixed `(k1, k2)` ordering.

    NOTE: The asymptotic regime requires `k <= c log n`; this is not enforced.
    """
    if k < 2:
        raise DomainError(f"k must be at least 2, received: {k}")
    if not 0 < delta < 0.1:
        raise DomainError(f"delta must lie in (0, 0.1), received: {delta}")
    _check_fraction("y1", y1)
    _check_fraction("y2", y2)
    if n < 2 * k:
        raise DomainError(f"n must be at least 2k, received: n={n}, k={k}")

    rows, cols = _window_counts(y1, k, delta), _window_counts(y2, k, delta)
    if not rows or not cols:
        raise DomainError(f"No integer overlap counts within delta={delta} of ({y1}, {y2}), k={k}")

    terms = []
    for k1 in rows:
        log_rows = _log_ordered_pair_count(n, k, k1)
        for k2 in cols:
            log_cols = _log_ordered_pair_count(n, k, k2)
            terms.append(log_rows + log_cols + overlap_log_probability(n, k, alpha, k1, k2, delta))

    return float(special.logsumexp(terms)) / (k * math.log(n))
