import json
import math
from pathlib import Path

import numpy as np
import polars as pl
import pytest

from submax import DomainError
from submax.overlap import (
    critical_alpha1,
    critical_alpha2,
    f_overlap,
    overlap_exponent_numeric,
    overlap_log_probability,
    overlap_prob_exponent_closed,
    projection_gap,
    quartic_stationary_roots,
    region_components,
    region_grid,
)

F_CASES = (
    (1.0, 0.0, 0.0, 2.0),
    (1.0, 1.0, 1.0, 1.0),
    (1.2, 0.5, 0.25, 4 - 0.75 - 2 * 1.44 / 1.125),
)


@pytest.mark.parametrize(("alpha", "y1", "y2", "truth"), F_CASES)
def test_f_overlap(alpha: float, y1: float, y2: float, truth: float) -> None:
    assert f_overlap(alpha, y1, y2) == pytest.approx(truth)


@pytest.mark.parametrize(("alpha", "y1", "y2"), ((1.0, -0.1, 0.5), (1.0, 0.5, 1.1), (-1.0, 0, 0)))
def test_f_overlap_domain_raises(alpha: float, y1: float, y2: float) -> None:
    with pytest.raises(DomainError):
        f_overlap(alpha, y1, y2)


def test_quartic_no_roots() -> None:
    assert quartic_stationary_roots(0.0) == []
    assert quartic_stationary_roots(1.0) == []


def test_quartic_two_roots() -> None:
    alpha = 1.3
    roots = quartic_stationary_roots(alpha)

    assert len(roots) == 2
    for root in roots:
        assert 0 <= root.y <= 1
        assert root.multiplicity == 1
        assert abs(root.y**4 + 2 * root.y**2 - 2 * alpha**2 * root.y + 1) <= 1e-10


def test_quartic_root_at_gap_onset() -> None:
    roots = quartic_stationary_roots(critical_alpha2())
    assert roots[0].y == pytest.approx(1 / 3, abs=1e-7)


def test_critical_alphas() -> None:
    assert critical_alpha1() == pytest.approx(1.224744871, abs=1e-8)
    assert critical_alpha2() == pytest.approx(1.360827635, abs=1e-6)


def test_f_vanishes_at_gap_onset() -> None:
    alpha = critical_alpha2()
    y = quartic_stationary_roots(alpha)[0].y
    assert f_overlap(alpha, y, y) == pytest.approx(0, abs=1e-8)


COMPONENT_CASES = ((1.0, 1), (1.30, 1), (1.364, 2), (1.40, 2))


@pytest.mark.parametrize(("alpha", "components"), COMPONENT_CASES)
def test_region_components(alpha: float, components: int) -> None:
    assert region_components(region_grid(alpha)) == components


def test_projection_gap() -> None:
    grid = region_grid(1.364)
    lo, hi = projection_gap(grid, "y2")

    assert lo == pytest.approx(0.28, abs=0.02)
    assert hi == pytest.approx(0.40, abs=0.02)
    assert projection_gap(grid, "y1") == pytest.approx((lo, hi), abs=2 / grid.resolution)


def test_projection_gap_connected_region() -> None:
    assert projection_gap(region_grid(1.0), "y1") is None


def test_projection_gap_bad_axis_raises() -> None:
    with pytest.raises(DomainError, match="Axis"):
        projection_gap(region_grid(1.0, 16), "y3")  # type: ignore[arg-type]


def test_region_grid_bad_resolution_raises() -> None:
    with pytest.raises(DomainError, match="Resolution"):
        region_grid(1.0, 4)


def test_quartic_no_roots_at_first_critical_level() -> None:
    assert quartic_stationary_roots(math.sqrt(1.5)) == []


def test_region_shrinks_with_alpha() -> None:
    masks = [region_grid(alpha, 64).mask for alpha in (1.0, 1.25, 1.3, 1.35, 1.4, 1.5)]
    for wide, narrow in zip(masks, masks[1:]):
        assert not (narrow & ~wide).any()
        assert narrow.sum() < wide.sum()


@pytest.mark.parametrize("alpha", (1.0, 1.3, 1.364, 1.4))
def test_region_symmetric(alpha: float) -> None:
    grid = region_grid(alpha, 128)
    assert np.abs(grid.f_values - grid.f_values.T).max() <= 1e-12
    assert np.array_equal(grid.mask, grid.mask.T)


def test_region_corner_uses_cell_centers() -> None:
    # f vanishes exactly at (1, 1) for alpha = sqrt(2), the corner cell center sits just outside
    alpha = math.sqrt(2)
    assert f_overlap(alpha, 1, 1) == pytest.approx(0, abs=1e-12)
    assert not region_grid(alpha).mask[-1, -1]
    assert region_grid(1.41).mask[-1, -1]


def test_region_csv_and_sidecar(tmp_path: Path) -> None:
    grid = region_grid(1.4, 32)
    out = tmp_path / "region.csv"
    grid.to_csv(out)

    df = pl.read_csv(out, has_header=False)
    assert df.shape == (32, 32)
    assert df[0, 0] == pytest.approx(grid.f_values[0, 0])
    assert df[3, 7] == pytest.approx(grid.f_values[3, 7])

    sidecar = json.loads(out.with_suffix(".json").read_text())
    assert sidecar == grid.summary()
    assert sidecar["resolution"] == 32


def test_closed_probability_exponent() -> None:
    assert overlap_prob_exponent_closed(1.2, 20, 20, 20) == pytest.approx(-1.44)
    assert overlap_prob_exponent_closed(1.2, 20, 0, 0) == pytest.approx(-2.88)


PROBABILITY_CASES = ((20, 20, 0.1), (0, 0, 0.15), (10, 10, 0.15), (5, 15, 0.15))


@pytest.mark.parametrize(("k1", "k2", "tol"), PROBABILITY_CASES)
def test_log_probability_tracks_closed_form(k1: int, k2: int, tol: float) -> None:
    n, k, alpha = 1e12, 20, 1.2
    numeric = overlap_log_probability(n, k, alpha, k1, k2) / (k * math.log(n))
    assert numeric == pytest.approx(overlap_prob_exponent_closed(alpha, k, k1, k2), abs=tol)


def test_log_probability_bad_delta_raises() -> None:
    with pytest.raises(DomainError, match="delta"):
        overlap_log_probability(1e6, 10, 0.01, 5, 5, delta=0.02)


EXPONENT_CASES = [(a, y) for a in (1.1, 1.2, 1.3) for y in (0.25, 0.5)]


@pytest.mark.parametrize(("alpha", "y"), EXPONENT_CASES)
def test_exponent_consistency(alpha: float, y: float) -> None:
    numeric = overlap_exponent_numeric(1e12, 20, alpha, y, y, 0.02)
    assert numeric == pytest.approx(f_overlap(alpha, y, y), abs=0.25)


BAD_EXPONENT_ARGS = (
    ({"k": 1}, "k must be at least 2"),
    ({"delta": 0.2}, "delta"),
    ({"n": 30}, "at least 2k"),
    ({"k": 2, "y1": 0.25, "y2": 0.25}, "No integer overlap"),
)


@pytest.mark.parametrize(("overrides", "match"), BAD_EXPONENT_ARGS)
def test_exponent_bad_args_raise(overrides: dict, match: str) -> None:
    kwargs = {"n": 1e12, "k": 20, "alpha": 1.2, "y1": 0.5, "y2": 0.5, "delta": 0.02}
    kwargs.update(overrides)
    with pytest.raises(DomainError, match=match):
        overlap_exponent_numeric(**kwargs)


def test_exponent_decreases_with_alpha() -> None:
    values = [overlap_exponent_numeric(1e12, 20, alpha, 0.5, 0.5) for alpha in (1.0, 1.1, 1.2, 1.3)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_exponent_converges_with_n() -> None:
    target = f_overlap(1.2, 0.5, 0.5)
    errors = [
        abs(overlap_exponent_numeric(10.0**p, 20, 1.2, 0.5, 0.5) - target) for p in (6, 8, 10, 12)
    ]
    assert all(a >= b for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 0.25
