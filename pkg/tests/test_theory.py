import math

import numpy as np
import pytest
from scipy import stats

from submax import DomainError
from submax.theory import (
    TAIL_SWITCH,
    b_n,
    extreme_value_band,
    greedy_clique_size,
    gumbel_cdf,
    gumbel_reference,
    igp_error_scale,
    log_normal_tail,
    normal_quantile,
    normal_quantile_array,
    normal_tail,
    normal_tail_bounds,
    predicted_ave,
    probability_floor,
    theta_n,
)

QUANTILE_CASES = (
    (0.5, 0.0),
    (0.975, 1.959963984540054),
    (0.025, -1.959963984540054),
    (1e-10, -6.361340902404056),
    (0.9, 1.2815515655446004),
)


@pytest.mark.parametrize(("p", "truth"), QUANTILE_CASES)
def test_normal_quantile(p: float, truth: float) -> None:
    assert normal_quantile(p) == pytest.approx(truth, rel=1e-12, abs=1e-15)


def test_normal_quantile_matches_scipy() -> None:
    p = np.concatenate((np.logspace(-300, -1, 200), np.linspace(0.01, 0.99, 99)))
    assert normal_quantile_array(p) == pytest.approx(stats.norm.ppf(p), rel=1e-12)


def test_normal_quantile_monotone() -> None:
    p = np.linspace(1e-6, 1 - 1e-6, 10_001)
    assert np.all(np.diff(normal_quantile_array(p)) > 0)


def test_normal_quantile_into_buffer() -> None:
    p = np.linspace(1e-9, 1 - 1e-9, 35).reshape(5, 7)
    out = np.zeros((10, 7))
    normal_quantile_array(p, out=out[:5])

    assert np.array_equal(out[:5], normal_quantile_array(p))
    assert not out[5:].any()


@pytest.mark.parametrize("p", (0.0, 1.0, -0.1, 1.5))
def test_normal_quantile_domain_raises(p: float) -> None:
    with pytest.raises(DomainError, match="Quantile"):
        normal_quantile(p)


@pytest.mark.parametrize("u", (-3.0, 0.0, 1.0, 4.5, 7.9))
def test_normal_tail_matches_scipy(u: float) -> None:
    assert normal_tail(u) == pytest.approx(stats.norm.sf(u), rel=1e-12)


@pytest.mark.parametrize("u", (8.5, 12.0, 30.0))
def test_normal_tail_asymptotic(u: float) -> None:
    assert normal_tail(u) == pytest.approx(stats.norm.sf(u), rel=1e-10)
    assert log_normal_tail(u) == pytest.approx(stats.norm.logsf(u), rel=1e-12)


def test_normal_tail_symmetry() -> None:
    for u in np.linspace(-8, 8, 161).tolist():
        assert normal_tail(u) + normal_tail(-u) == pytest.approx(1, abs=1e-12)


def test_log_tail_continuous_at_switch() -> None:
    below = log_normal_tail(TAIL_SWITCH)
    above = log_normal_tail(math.nextafter(TAIL_SWITCH, math.inf))
    assert above == pytest.approx(below, abs=1e-9)


def test_log_tail_finite_far_out() -> None:
    assert math.isfinite(log_normal_tail(1e4))
    assert log_normal_tail(-40.0) == pytest.approx(0.0, abs=1e-300)


def test_tail_sandwich_grid() -> None:
    for u in np.linspace(2, 8, 601):
        assert normal_tail_bounds(u).contains(normal_tail(u))


def test_tail_bounds_clip() -> None:
    bounds = normal_tail_bounds(1.0)
    assert bounds.lower == 0.0
    assert bounds.upper == pytest.approx(stats.norm.pdf(1.0))


def test_tail_bounds_domain_raises() -> None:
    with pytest.raises(DomainError, match="u > 0"):
        normal_tail_bounds(0.0)


B_N_CASES = (
    (100, 2.36625),
    (5000, 3.56115),
    (1e6, 4.76600),
)


@pytest.mark.parametrize(("n", "truth"), B_N_CASES)
def test_b_n(n: float, truth: float) -> None:
    assert b_n(n) == pytest.approx(truth, abs=1e-4)


def test_b_n_domain_raises() -> None:
    with pytest.raises(DomainError, match="n >= 3"):
        b_n(2)


@pytest.mark.parametrize(("n", "k"), ((1e4, 3), (5000, 2), (50, 2), (1e6, 10)))
def test_theta_n_tail(n: float, k: int) -> None:
    theta = theta_n(n, k)
    assert normal_tail(theta) == pytest.approx(n ** (-1 / k), rel=1e-10)
    assert greedy_clique_size(n, theta) == pytest.approx(k, rel=1e-9)


def test_b_n_monotone() -> None:
    values = [b_n(n) for n in np.geomspace(3.5, 1e12, 200)]
    assert all(b < a for b, a in zip(values, values[1:]))


@pytest.mark.parametrize("k", (2, 5, 20))
def test_theta_n_monotone_in_n(k: int) -> None:
    values = [theta_n(n, k) for n in np.geomspace(10, 1e12, 100)]
    assert all(b < a for b, a in zip(values, values[1:]))


def test_theta_n_decreasing_in_k() -> None:
    values = [theta_n(1e6, k) for k in range(2, 30)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_theta_n_domain_raises() -> None:
    with pytest.raises(DomainError, match="theta_n"):
        theta_n(1, 2)


def test_predicted_ave_asymptotic() -> None:
    base = math.sqrt(2 * math.log(5000) / 3)
    assert predicted_ave("las", 5000, 3) == pytest.approx(2.383, abs=1e-3)
    assert predicted_ave("greedy", 5000, 3) == pytest.approx(base)
    assert predicted_ave("igp", 5000, 3) == pytest.approx(4 / 3 * base)
    assert predicted_ave("global", 5000, 3) == pytest.approx(2 * math.sqrt(math.log(5000) / 3))


def test_predicted_ave_finite() -> None:
    assert predicted_ave("las", 5000, 3, finite_correction=True) == pytest.approx(2.056, abs=1e-3)
    assert predicted_ave("greedy", 1e4, 3, finite_correction=True) == pytest.approx(theta_n(1e4, 3))

    # k = 2: (sqrt(1) + sqrt(2) + sqrt(1)) b_(n/2) / 4
    expected = (2 + math.sqrt(2)) * b_n(50) / 4
    assert predicted_ave("igp", 100, 2, finite_correction=True) == pytest.approx(expected)


@pytest.mark.parametrize(("n", "k"), ((10, 5), (3, 3), (8, 4), (100, 51)))
def test_predicted_ave_igp_small_blocks(n: int, k: int) -> None:
    finite = predicted_ave("igp", n, k, finite_correction=True)
    assert finite == predicted_ave("igp", n, k)


def test_predicted_ave_igp_smallest_centered_block() -> None:
    root_sums = sum(math.sqrt(r) for r in range(1, 6)) + sum(math.sqrt(r) for r in range(1, 5))
    expected = root_sums * b_n(3) / 25
    assert predicted_ave("igp", 15, 5, finite_correction=True) == pytest.approx(expected)


def test_predicted_ave_bad_alg_raises() -> None:
    with pytest.raises(DomainError, match="Unknown"):
        predicted_ave("anneal", 100, 2)  # type: ignore[arg-type]


def test_predicted_ave_bad_k_raises() -> None:
    with pytest.raises(DomainError, match="1 <= k <= n"):
        predicted_ave("las", 100, 101)


def test_igp_error_scale() -> None:
    log_n = math.log(1e6)
    expected = max(math.sqrt(log_n / 2) / 2, math.log(log_n) / math.sqrt(log_n))
    assert igp_error_scale(1e6, 2) == pytest.approx(expected)


def test_extreme_value_band() -> None:
    log_n = math.log(1e6)
    assert extreme_value_band(1e6) == pytest.approx(math.log(log_n) / math.sqrt(2 * log_n))
    assert probability_floor(1e6) == pytest.approx(1 - log_n**-1.4)


def test_gumbel_reference() -> None:
    ref = gumbel_reference()
    assert ref.mean == pytest.approx(0.5772156649)
    assert ref.variance == pytest.approx(math.pi**2 / 6)
    assert ref.cdf(0) == pytest.approx(math.exp(-1))
    assert gumbel_cdf(-50) == pytest.approx(0.0)
