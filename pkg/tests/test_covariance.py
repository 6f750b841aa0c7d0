"""Closed-form solves and determinants for the block covariance."""

import numpy as np
import pytest

from splitplot import (
    CovarianceModel,
    ValidationError,
    VarianceComponents,
    WholePlotLayout,
    build_v,
    log_det_v,
    solve_v,
)


def random_layout(rng, max_runs=12):
    n = int(rng.integers(2, max_runs + 1))
    r = int(rng.integers(1, n + 1))
    if r > 1:
        cuts = np.sort(rng.choice(np.arange(1, n), size=r - 1, replace=False))
    else:
        cuts = np.array([], dtype=int)
    sizes = np.diff(np.concatenate([[0], cuts, [n]]))
    return WholePlotLayout(tuple(int(v) for v in np.repeat(np.arange(1, r + 1), sizes)))


# ---------------------------------------------------------------- layout


def test_layout_sizes_and_indicator():
    layout = WholePlotLayout((1, 1, 1, 2, 2, 3))
    assert layout.n_runs == 6
    assert layout.n_plots == 3
    assert layout.sizes.tolist() == [3, 2, 1]
    z = layout.indicator()
    assert z.shape == (6, 3)
    # Z Z' is exactly the same-plot mask
    a = layout.zero_based
    assert np.array_equal(z @ z.T, (a[:, None] == a[None, :]).astype(float))


@pytest.mark.parametrize(
    "assignment",
    [
        (),
        (0, 1),
        (1, 3),          # plot 2 missing
        (2, 2),          # does not start at 1
        (1.0, 1.0),      # not integers
    ],
)
def test_layout_validation(assignment):
    with pytest.raises(ValidationError):
        WholePlotLayout(assignment)


def test_components_validation():
    assert VarianceComponents(2.0, 4.0).ratio == 0.5
    assert VarianceComponents(0.0, 1.0).ratio == 0.0
    with pytest.raises(ValidationError):
        VarianceComponents(-1.0, 1.0)
    with pytest.raises(ValidationError):
        VarianceComponents(1.0, 0.0)
    with pytest.raises(ValidationError):
        VarianceComponents(float("nan"), 1.0)


# ---------------------------------------------------------------- hand cases


def test_two_run_plot_by_hand():
    # V = [[2, 1], [1, 2]], inverse = [[2, -1], [-1, 2]] / 3
    cov = CovarianceModel(WholePlotLayout((1, 1)), VarianceComponents(1.0, 1.0))
    assert np.array_equal(build_v(cov), [[2.0, 1.0], [1.0, 2.0]])
    out = solve_v(cov, np.array([1.0, 0.0]))
    assert out == pytest.approx([2.0 / 3.0, -1.0 / 3.0], abs=1e-15)
    assert log_det_v(cov) == pytest.approx(np.log(3.0), abs=1e-15)


def test_zero_plot_variance_collapses_to_scaled_identity():
    cov = CovarianceModel(
        WholePlotLayout((1, 1, 2, 2, 2)), VarianceComponents(0.0, 2.5)
    )
    assert np.array_equal(build_v(cov), 2.5 * np.eye(5))
    b = np.arange(5.0)
    assert solve_v(cov, b) == pytest.approx(b / 2.5, abs=1e-15)
    assert log_det_v(cov) == pytest.approx(5 * np.log(2.5), abs=1e-12)


def test_solve_preserves_rhs_shape():
    cov = CovarianceModel(WholePlotLayout((1, 1, 2)), VarianceComponents(1.0, 1.0))
    vec = solve_v(cov, np.ones(3))
    assert vec.shape == (3,)
    mat = solve_v(cov, np.ones((3, 4)))
    assert mat.shape == (3, 4)
    assert np.array_equal(mat[:, 0], vec)
    with pytest.raises(ValidationError):
        solve_v(cov, np.ones(4))


# ---------------------------------------------------------------- dense oracle


def test_closed_form_matches_dense_oracle():
    """solve_v and log_det_v against numpy dense linear algebra."""
    rng = np.random.default_rng(7)
    for _ in range(200):
        layout = random_layout(rng)
        comps = VarianceComponents(
            float(rng.uniform(0.0, 5.0)), float(rng.uniform(0.2, 5.0))
        )
        cov = CovarianceModel(layout, comps)
        v = build_v(cov)
        b = rng.normal(size=(layout.n_runs, 3))
        assert solve_v(cov, b) == pytest.approx(np.linalg.solve(v, b), abs=1e-10)
        sign, ld = np.linalg.slogdet(v)
        assert sign > 0
        assert log_det_v(cov) == pytest.approx(ld, abs=1e-10)


def test_covariance_is_positive_definite():
    rng = np.random.default_rng(11)
    for _ in range(20):
        cov = CovarianceModel(
            random_layout(rng),
            VarianceComponents(float(rng.uniform(0, 10)), float(rng.uniform(0.1, 10))),
        )
        np.linalg.cholesky(build_v(cov))  # raises if not PD
