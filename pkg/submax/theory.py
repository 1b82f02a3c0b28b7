from __future__ import annotations

import math
import typing as t
from collections import abc
from dataclasses import dataclass

import numpy as np
from scipy import special

from submax import DomainError

NUMERIC_T: t.TypeAlias = int | float
PREDICTION_T: t.TypeAlias = t.Literal["las", "greedy", "igp", "global"]

# Past this point the erfc path underflows relative precision, switch to the asymptotic series
TAIL_SWITCH = 8.0
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)

# AS241 (PPND16) coefficients, central region |q| <= 0.425
_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
_B = (
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
# Intermediate tail, r <= 5
_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
_D = (
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
# Far tail, r > 5
_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_F = (
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _horner(coeffs: abc.Sequence[float], x: np.ndarray) -> np.ndarray:
    # Coefficients are stored lowest order first
    acc = np.full_like(x, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc *= x
        acc += c

    return acc


def _rational(num: abc.Sequence[float], den: abc.Sequence[float], x: np.ndarray) -> np.ndarray:
    out = _horner(num, x)
    out /= _horner(den, x)
    return out


def normal_quantile_array(p: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """
    Vectorized standard normal quantile using Wichura's AS241 (PPND16) rational approximations.

    The mapping is monotone in `p` and uses only elementwise arithmetic, `log`, and `sqrt`, so a
    stream of uniforms maps to the same normals on any IEEE-754 platform. Results are written into
    `out` if provided, which must match the shape of `p`.

    NOTE: No domain checking is performed, values outside of `(0, 1)` produce `nan` or `inf`.
    """
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5

    # The central branch is evaluated everywhere, then the tail entries are overwritten
    r = q * q
    np.subtract(0.180625, r, out=r)
    if out is None:
        out = np.empty_like(p)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        np.multiply(q, _horner(_A, r), out=out)
        out /= _horner(_B, r)

    tail = np.flatnonzero(np.abs(q) > 0.425)
    if tail.size:
        qt = q.flat[tail]
        pt = p.flat[tail]
        with np.errstate(divide="ignore", invalid="ignore"):
            rt = np.sqrt(-np.log(np.minimum(pt, 1.0 - pt)))

        far = rt > 5.0
        val = _rational(_C, _D, rt - 1.6)
        if far.any():
            val[far] = _rational(_E, _F, rt[far] - 5.0)

        out.flat[tail] = np.copysign(val, qt)

    return out


def normal_quantile(p: float) -> float:
    """Return the standard normal quantile of `p`, which must lie strictly inside `(0, 1)`."""
    if not 0 < p < 1:
        raise DomainError(f"Quantile probability must lie in (0, 1), received: {p}")

    return float(normal_quantile_array(np.array([p]))[0])


def _log_tail_asymptotic(u: float) -> float:
    # Terms of the divergent series shrink until j ~ u^2 / 2; stop at the smallest one
    inv_u2 = 1.0 / (u * u)
    term = 1.0
    total = 1.0
    for j in range(1, 64):
        nxt = -term * (2 * j - 1) * inv_u2
        if abs(nxt) >= abs(term):
            break

        total += nxt
        term = nxt

    return -0.5 * u * u - math.log(u) - _LOG_SQRT_2PI + math.log(total)


def normal_tail(u: float) -> float:
    """
    Calculate the standard normal upper tail probability `Q(u) = 1 - Phi(u)`.

    For `u <= 8` the value comes from the rational `erfc` approximation; beyond that the
    log-asymptotic expansion is exponentiated. See `log_normal_tail` for the log-value accessor.
    """
    if u > TAIL_SWITCH:
        return math.exp(_log_tail_asymptotic(u))

    return float(0.5 * special.erfc(u / math.sqrt(2)))


def log_normal_tail(u: float) -> float:
    """Calculate `log Q(u)`, finite for every finite `u`."""
    if u > TAIL_SWITCH:
        return _log_tail_asymptotic(u)

    return float(special.log_ndtr(-u))


@dataclass(frozen=True, slots=True)
class TailBounds:  # noqa: D101
    lower: float
    upper: float

    def contains(self, value: float) -> bool:  # noqa: D102
        return self.lower <= value <= self.upper


def normal_tail_bounds(u: float) -> TailBounds:
    """
    Return the Mills-ratio sandwich for the upper normal tail at `u > 0`.

    The upper bound is `phi(u) / u` and the lower bound is `phi(u) / u * (1 - 2 / u^2)`, clipped at
    zero for `u < sqrt(2)`.
    """
    if u <= 0:
        raise DomainError(f"Tail bounds require u > 0, received: {u}")

    upper = math.exp(-0.5 * u * u - _LOG_SQRT_2PI) / u
    lower = max(upper * (1 - 2 / (u * u)), 0.0)
    return TailBounds(lower=lower, upper=upper)


def b_n(n: NUMERIC_T) -> float:
    """
    Calculate the classical centering constant for the maximum of `n` standard normals.

    `b_n = sqrt(2 log n) - log(4 pi log n) / (2 sqrt(2 log n))`. Any real `n >= 3` is accepted.
    """
    if n < 3:
        raise DomainError(f"b_n requires n >= 3, received: {n}")

    log_n = math.log(n)
    root = math.sqrt(2 * log_n)
    return root - math.log(4 * math.pi * log_n) / (2 * root)


def theta_n(n: NUMERIC_T, k: int) -> float:
    """Solve `Q(theta) = n^(-1/k)` for the greedy clique threshold."""
    if n < 2 or k < 1:
        raise DomainError(f"theta_n requires n >= 2 and k >= 1, received: n={n}, k={k}")

    p = n ** (-1 / k)
    # Upper tail via symmetry keeps full relative precision for small p; + 0.0 folds -0.0
    return -normal_quantile(p) + 0.0


def greedy_clique_size(n: NUMERIC_T, theta: float) -> float:
    """Estimate the clique side `log n / log(1 / p)` the greedy construction reaches at `theta`."""
    if n < 2:
        raise DomainError(f"Clique size estimate requires n >= 2, received: {n}")

    return math.log(n) / -log_normal_tail(theta)


def predicted_ave(
    alg: PREDICTION_T, n: NUMERIC_T, k: int, finite_correction: bool = False
) -> float:
    """
    Predict the average value of the submatrix an algorithm reaches on an `n x n` Gaussian matrix.

    Without `finite_correction` the asymptotic levels are returned:
        * `"las"`, `"greedy"`: `sqrt(2 log n / k)`
        * `"igp"`: `(4/3) sqrt(2 log n / k)`
        * `"global"`: `2 sqrt(log n / k)`

    With `finite_correction` the extreme-value centering replaces `sqrt(2 log n)`:
        * `"las"`: `b_n / sqrt(k)`
        * `"greedy"`: `theta_n(n, k)`
        * `"igp"`: per-step estimates `sqrt(r) b_{n/k}` summed over all `2k - 1` steps, over `k^2`;
          blocks of fewer than 3 lines have no centering constant, so the asymptotic level is used
        * `"global"`: no finite form is available, the asymptotic level is returned
    """
    if n < 3 or not 1 <= k <= n:
        raise DomainError(f"Predictions require n >= 3 and 1 <= k <= n, received: n={n}, k={k}")

    log_n = math.log(n)
    base = math.sqrt(2 * log_n / k)

    if alg == "global":
        return 2 * math.sqrt(log_n / k)

    if not finite_correction:
        if alg in ("las", "greedy"):
            return base
        elif alg == "igp":
            return 4 / 3 * base
    else:
        if alg == "las":
            return b_n(n) / math.sqrt(k)
        elif alg == "greedy":
            return theta_n(n, k)
        elif alg == "igp":
            block = math.floor(n / k)
            if block < 3:
                return 4 / 3 * base

            root_sums = math.fsum(math.sqrt(r) for r in range(1, k + 1))
            root_sums += math.fsum(math.sqrt(r) for r in range(1, k))
            return root_sums * b_n(block) / k**2

    raise DomainError(f"Unknown prediction target: '{alg}'")


def igp_error_scale(n: NUMERIC_T, k: int) -> float:
    """Return the IGP error envelope `max((1/k) sqrt(log n / k), log log n / sqrt(log n))`."""
    if n < 3 or k < 1:
        raise DomainError(f"IGP error scale requires n >= 3 and k >= 1, received: n={n}, k={k}")

    log_n = math.log(n)
    return max(math.sqrt(log_n / k) / k, math.log(log_n) / math.sqrt(log_n))


def extreme_value_band(n: NUMERIC_T) -> float:
    """
    Return the half-width `log log n / sqrt(2 log n)` of the band around `b_n`.

    The maximum of `n` standard normals falls inside `b_n +/- band` with probability at least
    `probability_floor(n)` once `n` is large.
    """
    if n < 3:
        raise DomainError(f"Band requires n >= 3, received: {n}")

    log_n = math.log(n)
    return math.log(log_n) / math.sqrt(2 * log_n)


def probability_floor(n: NUMERIC_T) -> float:  # noqa: D103
    return 1 - math.log(n) ** -1.4


class GumbelReference(t.NamedTuple):  # noqa: D101
    mean: float
    variance: float
    cdf: abc.Callable[[float], float]


def gumbel_cdf(w: float) -> float:  # noqa: D103
    return math.exp(-math.exp(-w))


def gumbel_reference() -> GumbelReference:
    """Return the standard Gumbel law, the limit of `sqrt(2 log n) (L_n - b_n)`."""
    return GumbelReference(mean=float(np.euler_gamma), variance=math.pi**2 / 6, cdf=gumbel_cdf)
