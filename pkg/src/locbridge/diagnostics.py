"""Summary statistics for generated samples and trajectories."""

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .exceptions import DataError, ParameterError

__all__ = [
    "DiagnosticsReport",
    "empirical_covariance",
    "centered_rows",
    "uncenter_rows",
    "histogram",
    "histogram_overlap",
    "autocovariance",
    "transition_rate",
    "batch_means_se",
    "report",
]

DEFAULT_BINS = 61


def empirical_covariance(samples):
    """Unbiased covariance of the rows of ``samples`` (shape (n, d))."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise DataError("empirical_covariance needs at least two samples")
    centered = samples - samples.mean(axis=0)
    return centered.T @ centered / (samples.shape[0] - 1)


def _center_index(d):
    # the diagonal entry lands at 1-based position ceil(d/2)
    return ceil(d / 2) - 1


def centered_rows(cov):
    """Cyclically shift row ``a`` so its diagonal entry sits in the middle.

    Returns
    -------
    rows : ndarray of shape (d, d)
    row_mean : ndarray of shape (d,)
        Average of the centered rows.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DataError(f"expected a square matrix, got shape {cov.shape}")
    d = cov.shape[0]
    c = _center_index(d)
    rows = np.array([np.roll(cov[a], c - a) for a in range(d)])
    return rows, rows.mean(axis=0)


def uncenter_rows(rows):
    """Inverse of :func:`centered_rows`."""
    rows = np.asarray(rows)
    d = rows.shape[0]
    c = _center_index(d)
    return np.array([np.roll(rows[a], a - c) for a in range(d)])


def histogram(samples, bins=DEFAULT_BINS, range=None, component=None, density=False):
    """Fixed-range histogram over all entries, or over one column.

    Without ``range`` the bins span the empirical min/max.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if component is not None:
        samples = samples[:, component]
    values = samples.ravel()
    if values.size == 0:
        raise DataError("histogram of an empty sample")
    if range is None:
        range = (values.min(), values.max())
    if range[0] == range[1]:
        range = (range[0] - 0.5, range[1] + 0.5)
    counts, edges = np.histogram(values, bins=bins, range=range, density=density)
    return edges, counts


def histogram_overlap(a, b, bins=DEFAULT_BINS, range=None):
    """Intersection ``sum min(p, q)`` of the two normalized histograms (in [0, 1])."""
    a = np.ravel(a)
    b = np.ravel(b)
    if range is None:
        range = (min(a.min(), b.min()), max(a.max(), b.max()))
    pa, _ = np.histogram(a, bins=bins, range=range)
    pb, _ = np.histogram(b, bins=bins, range=range)
    return float(np.minimum(pa / a.size, pb / b.size).sum())


def autocovariance(series, tau_max):
    """``R(tau) = 1/(n - tau) sum_t (x_t - xbar)(x_{t+tau} - xbar)``.

    A 2-D ``series`` (n, K) is treated as K scalar series whose
    autocovariances are averaged.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if tau_max < 0 or tau_max >= n:
        raise ParameterError(f"tau_max={tau_max} must lie in [0, {n - 1}]")
    xc = x - x.mean(axis=0)
    R = np.empty(tau_max + 1)
    for tau in range(tau_max + 1):
        R[tau] = np.mean(np.sum(xc[:n - tau] * xc[tau:], axis=0) / (n - tau))
    return R


def transition_rate(trajectories):
    """Fraction of adjacent pairs whose signs differ (zero counts as positive).

    ``trajectories`` has one trajectory per row.
    """
    x = np.atleast_2d(np.asarray(trajectories, dtype=np.float64))
    if x.shape[1] < 2:
        raise DataError("trajectories need at least two time points")
    positive = x >= 0
    flips = positive[:, 1:] != positive[:, :-1]
    return float(flips.mean())


def batch_means_se(series, n_batches=20):
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0] // n_batches * n_batches
    if n < n_batches:
        raise DataError("series too short for batch means")
    means = x[:n].reshape(n_batches, -1, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


@dataclass
class DiagnosticsReport:
    centered_rows: np.ndarray
    row_mean: np.ndarray
    histogram: tuple
    autocov: np.ndarray = None
    transition_rate: float = None
    extras: dict = field(default_factory=dict)

    def to_csv(self, prefix):
        """Write one CSV per statistic; returns the list of paths."""
        paths = []

        def save(name, array, header):
            path = f"{prefix}_{name}.csv"
            np.savetxt(path, array, delimiter=",", header=header, comments="")
            paths.append(path)

        save("centered_rows", self.centered_rows,
             ",".join(f"c{i}" for i in range(self.centered_rows.shape[1])))
        save("row_mean", np.column_stack([np.arange(self.row_mean.size), self.row_mean]),
             "offset,value")
        edges, counts = self.histogram
        save("histogram", np.column_stack([edges[:-1], edges[1:], counts]),
             "left,right,count")
        if self.autocov is not None:
            save("autocov", np.column_stack([np.arange(self.autocov.size), self.autocov]),
                 "tau,R")
        scalars = dict(self.extras)
        if self.transition_rate is not None:
            scalars["transition_rate"] = self.transition_rate
        if scalars:
            path = f"{prefix}_scalars.csv"
            with open(path, "w") as fh:
                fh.write("name,value\n")
                for k, v in scalars.items():
                    fh.write(f"{k},{v!r}\n")
            paths.append(path)
        return paths


def report(samples, series=None, tau_max=None, trajectories=None, bins=DEFAULT_BINS,
           hist_range=None):
    """Bundle the figure statistics of ``samples`` (n, d).

    ``series`` feeds the autocovariance, ``trajectories`` the transition rate.
    """
    rows, row_mean = centered_rows(empirical_covariance(samples))
    hist = histogram(samples, bins=bins, range=hist_range)
    autocov = None
    if series is not None:
        tau_max = min(len(series) - 1, 100) if tau_max is None else tau_max
        autocov = autocovariance(series, tau_max)
    rate = transition_rate(trajectories) if trajectories is not None else None
    return DiagnosticsReport(rows, row_mean, hist, autocov, rate)
