"""Classical dependence measures and their permutation tests.

Pearson correlation, windowed cross-correlation, distance correlation,
HSIC with Gaussian kernels, and binned (conditional) mutual information,
each computable per signal pair and testable against a circular-shift or
pair-shuffle null. Direct O(T^2) formulations throughout; these are
comparison baselines, not optimized estimators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .significance import NullFit, TestResult, empirical_p_value, fit_pearson3
from .signals import Dataset

__all__ = [
    "pearson_r",
    "wcc",
    "distance_correlation",
    "hsic_gaussian",
    "mutual_information_binned",
    "conditional_mi_binned",
    "default_bins",
    "BaselineConfig",
    "baseline_statistic",
    "baseline_test",
    "BASELINE_METHODS",
]


def _as_series(signal) -> np.ndarray:
    arr = np.asarray(signal, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[0] != 1:
            raise ValueError("baseline measures expect single-channel signals")
        arr = arr[0]
    if arr.ndim != 1:
        raise ValueError("signal must be 1-D or (1, T)")
    return arr


def pearson_r(x, y) -> float:
    """Product-moment correlation of two equal-length series."""
    x, y = _as_series(x), _as_series(y)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length series with T >= 2")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((xc * xc).sum()), np.sqrt((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        raise ValueError("pearson_r undefined for a zero-variance signal")
    return float((xc * yc).sum() / (sx * sy))


def wcc(x, y, window: int, max_lag: int) -> float:
    """Windowed cross-correlation.

    Slides non-overlapping windows over x; at each lag in
    [-max_lag, max_lag], correlates the window with the lag-shifted window
    of y. The statistic is the maximum over lags of the mean absolute
    correlation over windows. Degenerate-variance windows are skipped.
    """
    x, y = _as_series(x), _as_series(y)
    t = x.size
    if y.size != t:
        raise ValueError("x and y must have equal length")
    if not 1 <= window <= t:
        raise ValueError("window must be in [1, T]")
    if not 0 <= max_lag < window:
        raise ValueError("max_lag must be in [0, window)")
    best = None
    for lag in range(-max_lag, max_lag + 1):
        vals = []
        for a in range(0, t - window + 1, window):
            b = a + lag
            if b < 0 or b + window > t:
                continue
            xw, yw = x[a:a + window], y[b:b + window]
            if xw.std() == 0.0 or yw.std() == 0.0:
                continue
            vals.append(abs(pearson_r(xw, yw)))
        if vals:
            mean_here = float(np.mean(vals))
            best = mean_here if best is None else max(best, mean_here)
    if best is None:
        raise ValueError("every window was degenerate; wcc undefined")
    return best


def distance_correlation(x, y) -> float:
    """Distance correlation via double-centered pairwise distances, O(T^2).

    Returns 0 (with a warning) for constant inputs, where the distance
    variance degenerates.
    """
    x, y = _as_series(x), _as_series(y)
    t = x.size
    if y.size != t or t < 3:
        raise ValueError("need equal-length series with T >= 3")
    a = np.abs(x[:, None] - x[None, :])
    b = np.abs(y[:, None] - y[None, :])
    aa = a - a.mean(axis=0) - a.mean(axis=1)[:, None] + a.mean()
    bb = b - b.mean(axis=0) - b.mean(axis=1)[:, None] + b.mean()
    dcov2 = (aa * bb).mean()
    dvarx = (aa * aa).mean()
    dvary = (bb * bb).mean()
    if dvarx <= 0.0 or dvary <= 0.0:
        warnings.warn("degenerate input: constant signal, distance correlation set to 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.sqrt(max(dcov2, 0.0) / np.sqrt(dvarx * dvary)))


def _gaussian_gram(x: np.ndarray) -> np.ndarray:
    """Gaussian kernel matrix with median-heuristic bandwidth.

    A constant signal has no nonzero distances to take a median of, but its
    kernel matrix is all-ones for every bandwidth, so that limit is used.
    """
    d = np.abs(x[:, None] - x[None, :])
    nz = d[np.triu_indices(x.size, k=1)]
    nz = nz[nz > 0.0]
    if nz.size == 0:
        return np.ones((x.size, x.size))
    s = float(np.median(nz))
    return np.exp(-(d * d) / (2.0 * s * s))


def hsic_gaussian(x, y) -> float:
    """Biased HSIC V-statistic trace(KHLH)/T^2 with Gaussian kernels.

    Bandwidths follow the median heuristic (median nonzero pairwise
    distance, per signal); centering annihilates constant signals, so
    those yield exactly 0.
    """
    x, y = _as_series(x), _as_series(y)
    t = x.size
    if y.size != t or t < 4:
        raise ValueError("need equal-length series with T >= 4")
    k = _gaussian_gram(x)
    l = _gaussian_gram(y)
    h = np.eye(t) - 1.0 / t
    return float(np.trace(k @ h @ l @ h) / (t * t))


def default_bins(t: int) -> int:
    """ceil(sqrt(T/5)) clamped to [4, 32]."""
    return int(np.clip(np.ceil(np.sqrt(t / 5.0)), 4, 32))


def _bin_indices(v: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        raise ValueError("degenerate range; binning undefined")
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def _entropy_from_counts(counts: np.ndarray) -> float:
    p = counts[counts > 0].astype(np.float64)
    p /= p.sum()
    return float(-(p * np.log(p)).sum())


def mutual_information_binned(x, y, bins: int | None = None) -> float:
    """Plug-in mutual information (nats) from an equal-width joint histogram."""
    x, y = _as_series(x), _as_series(y)
    t = x.size
    if y.size != t:
        raise ValueError("x and y must have equal length")
    b = default_bins(t) if bins is None else int(bins)
    if b < 2 or t < b:
        raise ValueError("need bins >= 2 and T >= bins")
    ix, iy = _bin_indices(x, b), _bin_indices(y, b)
    joint = np.zeros((b, b))
    np.add.at(joint, (ix, iy), 1.0)
    h_x = _entropy_from_counts(joint.sum(axis=1))
    h_y = _entropy_from_counts(joint.sum(axis=0))
    h_xy = _entropy_from_counts(joint)
    return max(h_x + h_y - h_xy, 0.0)


def conditional_mi_binned(x, y, bins: int | None = None) -> float:
    """Plug-in I(x[t]; y[t] | x[t-1], y[t-1]) from a 4-way histogram."""
    x, y = _as_series(x), _as_series(y)
    t = x.size
    if y.size != t:
        raise ValueError("x and y must have equal length")
    b = default_bins(t) if bins is None else int(bins)
    if b < 2 or t < b + 1:
        raise ValueError("need bins >= 2 and T >= bins + 1")
    ix, iy = _bin_indices(x, b), _bin_indices(y, b)
    # cells indexed (a, b, c, d) = (x[t], y[t], x[t-1], y[t-1])
    flat = ((ix[1:] * b + iy[1:]) * b + ix[:-1]) * b + iy[:-1]
    counts = np.bincount(flat, minlength=b ** 4).reshape(b, b, b, b).astype(np.float64)
    h_acd = _entropy_from_counts(counts.sum(axis=1))
    h_bcd = _entropy_from_counts(counts.sum(axis=0))
    h_cd = _entropy_from_counts(counts.sum(axis=(0, 1)))
    h_abcd = _entropy_from_counts(counts)
    return max(h_acd + h_bcd - h_cd - h_abcd, 0.0)


# per-pair statistics used for dataset-level testing; pearson enters as |r|
# so sign cancellation cannot mask dependence
BASELINE_METHODS = ("pearson", "wcc", "dc", "hsic", "mi", "cmi")


@dataclass
class BaselineConfig:
    """Method choice plus permutation-test parameters."""

    method: str = "pearson"
    n_permutations: int = 200
    scheme: str = "circular-shift"  # or "pair-shuffle"
    guard: int = 50
    wcc_window: int | None = None  # default T // 8
    wcc_max_lag: int = 50
    bins: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in BASELINE_METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {BASELINE_METHODS}")
        if self.scheme not in ("circular-shift", "pair-shuffle"):
            raise ValueError("scheme must be 'circular-shift' or 'pair-shuffle'")
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")
        if self.guard < 0:
            raise ValueError("guard must be >= 0")


def baseline_statistic(method: str, x, y, config: BaselineConfig) -> float:
    t = _as_series(x).size
    if method == "pearson":
        return abs(pearson_r(x, y))
    if method == "wcc":
        window = config.wcc_window if config.wcc_window is not None else max(2, t // 8)
        max_lag = min(config.wcc_max_lag, window - 1)
        return wcc(x, y, window, max_lag)
    if method == "dc":
        return distance_correlation(x, y)
    if method == "hsic":
        return hsic_gaussian(x, y)
    if method == "mi":
        return mutual_information_binned(x, y, config.bins)
    if method == "cmi":
        return conditional_mi_binned(x, y, config.bins)
    raise ValueError(f"unknown method {method!r}")


def _dataset_statistic(method, xs, ys, config) -> float:
    return float(np.mean([baseline_statistic(method, x, y, config) for x, y in zip(xs, ys)]))


def baseline_test(method: str, dataset: Dataset, config: BaselineConfig,
                  rng: np.random.Generator | None = None) -> TestResult:
    """Permutation test of the dataset-mean statistic.

    The circular-shift null rotates each y by an offset uniform on
    [guard, T-guard], preserving autocorrelation; the pair-shuffle null
    permutes the x-y pairing across the dataset. The headline p-value is
    the add-one empirical rank; a moment-matched tail fit is attached when
    the null has enough spread to support one.
    """
    t = dataset.length
    if config.scheme == "circular-shift" and config.guard >= t / 2:
        raise ValueError(f"guard {config.guard} must be < T/2 = {t / 2}")
    base = int(config.seed) if rng is None else int(rng.integers(0, 2 ** 62))
    xs = [p.x for p in dataset.pairs]
    ys = [p.y for p in dataset.pairs]
    observed = _dataset_statistic(method, xs, ys, config)

    null = np.empty(config.n_permutations)
    for k in range(config.n_permutations):
        r = np.random.default_rng([base, 9, k])
        if config.scheme == "circular-shift":
            shifted = [np.roll(y, int(r.integers(config.guard, t - config.guard + 1)), axis=1)
                       for y in ys]
            null[k] = _dataset_statistic(method, xs, shifted, config)
        else:
            perm = r.permutation(len(ys))
            null[k] = _dataset_statistic(method, xs, [ys[j] for j in perm], config)

    emp = empirical_p_value(observed, null)
    fit: NullFit | None
    try:
        fit = fit_pearson3(null)
    except ValueError:
        fit = None
    return TestResult(observed, emp, config.n_permutations, fit, emp)
