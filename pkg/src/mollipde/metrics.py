"""Correlation metrics, multi-run aggregation and noise-trend extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, UndefinedCorrelationError
from .grids import GridField
from .calculus import mollify
from .kernels import MollifierKernel, discretize


def pearson(x, y) -> float:
    """Pearson correlation coefficient; raises on zero variance."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size or x.size < 2:
        raise InvalidArgumentError("pearson needs two equal-length vectors of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.sum(dx * dx))
    sy = np.sqrt(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance input; correlation undefined")
    r = float(np.sum(dx * dy) / (sx * sy))
    return min(1.0, max(-1.0, r))


@dataclass
class RunStatistics:
    """Aggregates of a recovered parameter field across repeated runs."""

    run_count: int
    predicted_means: list
    predicted_variances: list
    mean_corr: float
    trend_corr: float
    laplacian_corr: float = None
    noise_corr: float = None
    per_run_trend_corr: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "run_count": self.run_count,
            "predicted_means": self.predicted_means,
            "predicted_variances": self.predicted_variances,
            "mean_corr": self.mean_corr,
            "trend_corr": self.trend_corr,
            "laplacian_corr": self.laplacian_corr,
            "noise_corr": self.noise_corr,
            "per_run_trend_corr": self.per_run_trend_corr,
        }


def aggregate_runs(per_run_fields, truth) -> RunStatistics:
    """Mean-corr of the run-averaged prediction plus average per-run corr.

    ``mean_corr`` correlates the across-run average of the prediction with the
    truth over space/time; ``trend_corr`` averages each run's own correlation
    with the truth, which measures how well individual runs track the varying
    component (pearson is translation invariant, so centering is implicit).
    """
    fields = [np.asarray(f, dtype=float).ravel() for f in per_run_fields]
    if len(fields) < 2:
        raise InvalidArgumentError("aggregate_runs needs at least two runs")
    truth = np.asarray(truth, dtype=float).ravel()
    stacked = np.stack(fields)
    per_run = [pearson(f, truth) for f in fields]
    return RunStatistics(
        run_count=len(fields),
        predicted_means=[float(f.mean()) for f in fields],
        predicted_variances=[float(f.var()) for f in fields],
        mean_corr=pearson(stacked.mean(axis=0), truth),
        trend_corr=float(np.mean(per_run)),
        per_run_trend_corr=per_run,
    )


def noise_profile(field: GridField, window_radius: float,
                  family=None) -> GridField:
    """Local fluctuation-magnitude trend of a field.

    Subtracts a running local mean (zeroth-order mollifier of the given
    window radius), takes the magnitude of the residual, and smooths that
    magnitude with the same window so the result is a trend (envelope) rather
    than the raw pointwise deviations.
    """
    from .kernels import KernelFamily

    family = family or KernelFamily.EXP_BUMP
    kernel = MollifierKernel(family, support_radius=window_radius,
                             dimension=field.dimension)
    stencil = discretize(kernel, field.spacing, (0,) * field.dimension)
    local_mean = mollify(field, stencil)
    deviation = field.with_values(np.abs(field.values - local_mean.values),
                                  margin=local_mean.margin)
    return mollify(deviation, stencil)


def noise_trend_correlation(predicted: GridField, truth: GridField,
                            window_radius: float) -> float:
    """Correlation between predicted and true fluctuation-magnitude trends."""
    p = noise_profile(predicted, window_radius)
    t = noise_profile(truth, window_radius)
    margin = tuple(max(a, b) for a, b in zip(p.margin, t.margin))
    sl = tuple(slice(m, n - m) for m, n in zip(margin, p.shape))
    return pearson(p.values[sl], t.values[sl])


def central_difference_laplacian(values: np.ndarray, spacing) -> np.ndarray:
    """Five-point Laplacian oracle; valid one cell in from each edge."""
    values = np.asarray(values, dtype=float)
    if np.isscalar(spacing):
        spacing = (float(spacing),) * values.ndim
    out = np.zeros_like(values)
    if values.ndim == 1:
        out[1:-1] = (values[2:] - 2 * values[1:-1] + values[:-2]) / spacing[0] ** 2
        return out
    out[1:-1, 1:-1] = ((values[2:, 1:-1] - 2 * values[1:-1, 1:-1] + values[:-2, 1:-1])
                       / spacing[0] ** 2
                       + (values[1:-1, 2:] - 2 * values[1:-1, 1:-1] + values[1:-1, :-2])
                       / spacing[1] ** 2)
    return out
