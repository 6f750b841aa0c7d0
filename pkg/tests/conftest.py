"""Shared fixtures: the rolling-tin model and a reference 24-run design."""

import pytest

from splitplot import DesignSpec, boomerang_model, generate_design


@pytest.fixture(scope="session")
def tin_model():
    return boomerang_model()


@pytest.fixture(scope="session")
def tin_design(tin_model):
    """Seed-0 D-optimal 24-run, 6-plot design for the rolling-tin model."""
    spec = DesignSpec(
        model=tin_model, n_runs=24, n_whole_plots=6, ratio=1.0, n_starts=20, seed=0
    )
    return generate_design(spec)
