"""Block covariance for the two-error split-plot model.

Run j inside whole plot i observes

    Y_ij = f(w_i, s_ij)' beta + gamma_i + eps_ij

with a shared plot effect gamma_i ~ N(0, sigma2_gamma) and a run error
eps_ij ~ N(0, sigma2_eps).  Stacking runs gives

    V = sigma2_eps * I + sigma2_gamma * Z Z'

where Z is the run-to-plot indicator.  Within one plot of size m the block
is compound symmetric (sigma2_eps + sigma2_gamma on the diagonal,
sigma2_gamma off it) and both the inverse and the determinant are closed
form, so solves cost O(n) instead of O(n^3):

    block inverse: (1 / sigma2_eps) * (I - c * J),
                   c = sigma2_gamma / (sigma2_eps + m * sigma2_gamma)
    log det V    = sum_i [ (m_i - 1) * log sigma2_eps
                           + log(sigma2_eps + m_i * sigma2_gamma) ]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class WholePlotLayout:
    """Run-to-whole-plot assignment; plot indices are 1..r, every plot nonempty."""

    assignment: tuple[int, ...]

    def __post_init__(self):
        if len(self.assignment) == 0:
            raise ValidationError("layout needs at least one run")
        arr = np.asarray(self.assignment)
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValidationError("whole-plot indices must be integers")
        r = int(arr.max())
        if arr.min() < 1 or set(np.unique(arr)) != set(range(1, r + 1)):
            raise ValidationError("whole-plot indices must cover 1..r with no gaps")

    @property
    def n_runs(self) -> int:
        return len(self.assignment)

    @property
    def n_plots(self) -> int:
        return int(max(self.assignment))

    @property
    def zero_based(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=int) - 1

    @property
    def sizes(self) -> np.ndarray:
        """Runs per plot, indexed by plot."""
        return np.bincount(self.zero_based, minlength=self.n_plots)

    def indicator(self) -> np.ndarray:
        """Z, the n x r run-to-plot indicator matrix."""
        z = np.zeros((self.n_runs, self.n_plots))
        z[np.arange(self.n_runs), self.zero_based] = 1.0
        return z


@dataclass(frozen=True)
class VarianceComponents:
    sigma2_gamma: float
    sigma2_epsilon: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2_gamma) and self.sigma2_gamma >= 0):
            raise ValidationError("sigma2_gamma must be finite and >= 0")
        if not (np.isfinite(self.sigma2_epsilon) and self.sigma2_epsilon > 0):
            raise ValidationError("sigma2_epsilon must be finite and > 0")

    @property
    def ratio(self) -> float:
        """eta = sigma2_gamma / sigma2_epsilon."""
        return self.sigma2_gamma / self.sigma2_epsilon


@dataclass(frozen=True)
class CovarianceModel:
    layout: WholePlotLayout
    components: VarianceComponents


def build_v(model: CovarianceModel) -> np.ndarray:
    """Dense n x n covariance matrix; meant for checks and small n."""
    a = model.layout.zero_based
    same_plot = a[:, None] == a[None, :]
    v = model.components.sigma2_gamma * same_plot.astype(float)
    v[np.diag_indices_from(v)] += model.components.sigma2_epsilon
    return v


def solve_v(model: CovarianceModel, rhs: np.ndarray) -> np.ndarray:
    """V^{-1} rhs through the per-plot closed form; rhs is (n,) or (n, k)."""
    b = np.asarray(rhs, dtype=float)
    one_dim = b.ndim == 1
    if one_dim:
        b = b[:, None]
    if b.shape[0] != model.layout.n_runs:
        raise ValidationError(
            f"rhs has {b.shape[0]} rows, layout has {model.layout.n_runs} runs"
        )
    a = model.layout.zero_based
    sizes = model.layout.sizes
    s2e = model.components.sigma2_epsilon
    s2g = model.components.sigma2_gamma
    plot_sums = np.zeros((model.layout.n_plots, b.shape[1]))
    np.add.at(plot_sums, a, b)
    shrink = s2g / (s2e + sizes * s2g)
    out = (b - shrink[a, None] * plot_sums[a]) / s2e
    return out[:, 0] if one_dim else out


def log_det_v(model: CovarianceModel) -> float:
    sizes = model.layout.sizes
    s2e = model.components.sigma2_epsilon
    s2g = model.components.sigma2_gamma
    return float(np.sum((sizes - 1) * np.log(s2e) + np.log(s2e + sizes * s2g)))
