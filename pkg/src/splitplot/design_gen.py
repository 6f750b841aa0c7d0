"""D-optimal design generation under restricted randomization.

The run order of a split-plot experiment cannot be fully randomized, so
the design search respects the whole-plot structure from the start: hard
factor settings are decided per whole plot and move jointly for all of its
runs, easy factor settings are decided run by run.  Candidate designs are
scored with the information determinant under the two-error covariance,

    log det( X' V^{-1} X ),   V = I + ratio * Z Z'

where the error variance is fixed at 1 (the criterion ranking only depends
on the variance ratio, not the scale).  Optimization is multi-start
coordinate exchange: from a random feasible design, sweep every coordinate
against its candidate values and keep any strict improvement, until a full
sweep improves the criterion by at most 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel, VarianceComponents, WholePlotLayout, solve_v
from .errors import NumericalError, ValidationError
from .model_spec import Factor, ModelSpec

EXCHANGE_TOL = 1e-9
_MAX_SWEEPS = 100


def assign_whole_plot_sizes(n_runs: int, n_whole_plots: int) -> tuple[int, ...]:
    """Split runs over plots as evenly as possible, larger plots first."""
    if n_whole_plots < 1:
        raise ValidationError("need at least one whole plot")
    if n_runs < n_whole_plots:
        raise ValidationError(
            f"{n_runs} runs cannot fill {n_whole_plots} whole plots"
        )
    base, rem = divmod(n_runs, n_whole_plots)
    return tuple([base + 1] * rem + [base] * (n_whole_plots - rem))


@dataclass(frozen=True)
class DesignSpec:
    """Inputs of a design search."""

    model: ModelSpec
    n_runs: int
    n_whole_plots: int
    ratio: float = 1.0
    n_starts: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_runs < self.model.n_parameters:
            raise ValidationError(
                f"{self.n_runs} runs cannot estimate {self.model.n_parameters} parameters"
            )
        assign_whole_plot_sizes(self.n_runs, self.n_whole_plots)
        if self.n_whole_plots < self.model.whole_plot_model_df:
            raise ValidationError(
                f"{self.n_whole_plots} whole plots cannot carry "
                f"{self.model.whole_plot_model_df} whole-plot model df"
            )
        if not (np.isfinite(self.ratio) and self.ratio >= 0):
            raise ValidationError("ratio must be finite and >= 0")
        if self.n_starts < 1:
            raise ValidationError("n_starts must be >= 1")


@dataclass(frozen=True)
class Design:
    """A concrete run plan.

    settings holds one row per run and one column per factor: continuous
    factors as coded values in [-1, +1], categorical factors as level
    indices.  Hard-to-change factors are constant within each whole plot.
    """

    factors: tuple[Factor, ...]
    whole_plot: tuple[int, ...]
    settings: np.ndarray
    criterion: float | None = None
    spec: DesignSpec | None = None

    def __post_init__(self):
        arr = np.array(self.settings, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "settings", arr)
        layout = WholePlotLayout(tuple(int(w) for w in self.whole_plot))
        object.__setattr__(self, "whole_plot", layout.assignment)
        if arr.shape != (layout.n_runs, len(self.factors)):
            raise ValidationError(
                f"settings shape {arr.shape} does not match "
                f"{layout.n_runs} runs x {len(self.factors)} factors"
            )
        a0 = layout.zero_based
        for j, f in enumerate(self.factors):
            col = arr[:, j]
            if f.is_categorical:
                if np.any(col != col.astype(int)) or col.min() < 0 or col.max() > f.n_levels - 1:
                    raise ValidationError(f"invalid level codes for factor {f.name!r}")
            elif col.min() < -1.0 or col.max() > 1.0:
                raise ValidationError(f"coded values for factor {f.name!r} leave [-1, +1]")
            if f.hard_to_change:
                for plot in range(layout.n_plots):
                    vals = col[a0 == plot]
                    if np.any(vals != vals[0]):
                        raise ValidationError(
                            f"hard-to-change factor {f.name!r} varies inside whole plot {plot + 1}"
                        )

    @property
    def n_runs(self) -> int:
        return len(self.whole_plot)

    @property
    def layout(self) -> WholePlotLayout:
        return WholePlotLayout(self.whole_plot)

    @property
    def sizes(self) -> np.ndarray:
        return self.layout.sizes


def model_matrix(model: ModelSpec, settings) -> np.ndarray:
    """Expand raw settings (n x n_factors, or a single row) to model columns."""
    s = np.asarray(settings, dtype=float)
    if s.ndim == 1:
        s = s[None, :]
    if s.shape[1] != len(model.factors):
        raise ValidationError(
            f"settings have {s.shape[1]} columns, model has {len(model.factors)} factors"
        )
    cols = {f.name: f.coded_columns(s[:, i]) for i, f in enumerate(model.factors)}
    parts = [np.ones((s.shape[0], 1))]
    for t in model.terms:
        block = cols[t.factors[0]]
        for name in t.factors[1:]:
            other = cols[name]
            # all pairwise column products, row-wise
            block = (block[:, :, None] * other[:, None, :]).reshape(s.shape[0], -1)
        parts.append(block)
    return np.hstack(parts)


def column_labels(model: ModelSpec) -> tuple[str, ...]:
    """One label per model-matrix column, aligned with model_matrix output."""
    def factor_labels(f: Factor) -> list[str]:
        if f.is_categorical and f.n_levels > 2:
            return [f"{f.name}[{lev}]" for lev in f.levels[:-1]]
        return [f.name]

    labels = ["intercept"]
    by_name = {f.name: f for f in model.factors}
    for t in model.terms:
        combo = [""]
        for name in t.factors:
            combo = [f"{a}*{b}" if a else b for a in combo for b in factor_labels(by_name[name])]
        labels.extend(combo)
    return tuple(labels)


def expand_model_matrix(design: Design, model: ModelSpec) -> np.ndarray:
    """Model matrix of a design; column order matches column_labels(model)."""
    if tuple(f.name for f in design.factors) != model.factor_names:
        raise ValidationError("design and model disagree on factors")
    return model_matrix(model, design.settings)


def d_criterion(design: Design, model: ModelSpec, ratio: float = 1.0) -> float:
    """log det(X' V^{-1} X) at unit error variance; -inf when singular."""
    if not (np.isfinite(ratio) and ratio >= 0):
        raise ValidationError("ratio must be finite and >= 0")
    x = expand_model_matrix(design, model)
    cov = CovarianceModel(design.layout, VarianceComponents(ratio, 1.0))
    m = x.T @ solve_v(cov, x)
    sign, ld = np.linalg.slogdet(m)
    if sign <= 0 or not np.isfinite(ld):
        return float("-inf")
    return float(ld)


def _candidates(f: Factor) -> np.ndarray:
    if f.is_categorical:
        return np.arange(f.n_levels, dtype=float)
    return np.array([-1.0, 0.0, 1.0])


class _Exchanger:
    """One coordinate-exchange run over a fixed layout."""

    def __init__(self, model: ModelSpec, sizes, ratio: float):
        self.model = model
        self.sizes = np.asarray(sizes)
        self.r = len(sizes)
        self.n = int(self.sizes.sum())
        self.a0 = np.repeat(np.arange(self.r), self.sizes)
        self.shrink = ratio / (1.0 + self.sizes * ratio)
        self.plot_rows = [np.flatnonzero(self.a0 == i) for i in range(self.r)]
        self.cands = [_candidates(f) for f in model.factors]
        self.hard = [i for i, f in enumerate(model.factors) if f.hard_to_change]
        self.easy = [i for i, f in enumerate(model.factors) if not f.hard_to_change]

    def criterion(self, settings: np.ndarray) -> float:
        x = model_matrix(self.model, settings)
        ps = np.zeros((self.r, x.shape[1]))
        np.add.at(ps, self.a0, x)
        m = x.T @ x - ps.T @ (ps * self.shrink[:, None])
        sign, ld = np.linalg.slogdet(m)
        if sign <= 0 or not np.isfinite(ld):
            return float("-inf")
        return float(ld)

    def random_start(self, rng) -> np.ndarray:
        settings = np.empty((self.n, len(self.model.factors)))
        for fi in self.hard:
            per_plot = rng.choice(self.cands[fi], size=self.r)
            settings[:, fi] = per_plot[self.a0]
        for fi in self.easy:
            settings[:, fi] = rng.choice(self.cands[fi], size=self.n)
        return settings

    def _scan(self, settings, rows, fi, best, rng):
        """Try every candidate for one coordinate; ties keep the incumbent."""
        current = settings[rows[0], fi]
        best_cand, best_val = current, best
        for cand in self.cands[fi]:
            if cand == current:
                continue
            settings[rows, fi] = cand
            val = self.criterion(settings)
            if val > best_val:
                best_cand, best_val = cand, val
        if best_val == float("-inf"):
            # every choice singular: re-randomize to escape the flat region
            best_cand = rng.choice(self.cands[fi])
        settings[rows, fi] = best_cand
        assert best_val >= best  # exchange never walks downhill
        return best_val

    def run(self, rng):
        settings = self.random_start(rng)
        best = self.criterion(settings)
        for _ in range(_MAX_SWEEPS):
            sweep_start = best
            for plot in range(self.r):
                for fi in self.hard:
                    best = self._scan(settings, self.plot_rows[plot], fi, best, rng)
            for run in range(self.n):
                for fi in self.easy:
                    best = self._scan(settings, np.array([run]), fi, best, rng)
            if best == float("-inf"):
                continue  # still escaping a singular start
            if best - sweep_start <= EXCHANGE_TOL:
                break
        return settings, best


def generate_design(spec: DesignSpec) -> Design:
    """Multi-start coordinate exchange; returns the best design found.

    Deterministic for a fixed seed: start k draws from a generator seeded
    with (seed, 0, k), and ties between starts keep the earliest one.
    """
    sizes = assign_whole_plot_sizes(spec.n_runs, spec.n_whole_plots)
    worker = _Exchanger(spec.model, sizes, spec.ratio)
    best_settings, best_val = None, float("-inf")
    for k in range(spec.n_starts):
        rng = np.random.default_rng((spec.seed, 0, k))
        settings, val = worker.run(rng)
        if val > best_val:
            best_settings, best_val = settings.copy(), val
    if best_settings is None or best_val == float("-inf"):
        raise NumericalError(
            "no nonsingular design found; check the run budget against the model"
        )
    whole_plot = tuple(int(i) for i in np.repeat(np.arange(1, spec.n_whole_plots + 1), sizes))
    return Design(
        factors=spec.model.factors,
        whole_plot=whole_plot,
        settings=best_settings,
        criterion=best_val,
        spec=spec,
    )
