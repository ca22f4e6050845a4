"""Synthetic data: event-process simulations and benchmark generators.

Two families live here. The first simulates the windowed inner-product
statistics z+ (aligned) and z- (lagged) of binary event processes and pins
them against closed-form rates, the mean gap, and the midpoint threshold.
The second builds benchmark datasets: paired signals made by convolving
shared-event processes with kernels from a small analytic wavelet bank,
with circular lags, linearly ramped event rates, kernel-filtered noise at
a target SNR, and a shared-event fraction knob for dependence strength.

Every generator is a pure function of (config, seed): per-pair substreams
are derived from the seed by index, so outputs are identical no matter how
the work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial import hermite_e

from .signals import Dataset, SignalPair

__all__ = [
    "BernoulliConfig",
    "AnalyticRates",
    "analytic_pc",
    "ZSimResult",
    "simulate_z",
    "classify_by_theta",
    "SCENARIOS",
    "scenario_config",
    "KernelSpec",
    "kernel_bank",
    "WaveletDatasetConfig",
    "gen_wavelet_dataset",
    "XiDatasetConfig",
    "gen_xi_dataset",
    "apply_noise_snr",
]


# ---------------------------------------------------------------------------
# Event-process model and closed forms
# ---------------------------------------------------------------------------

def _check_rates(p, p_alpha, p_beta, p_eps_x, p_eps_y):
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0,1), got {p}")
    if not 0.0 < p_alpha <= 1.0:
        raise ValueError(f"p_alpha must be in (0,1], got {p_alpha}")
    if not 0.0 < p_beta <= 1.0:
        raise ValueError(f"p_beta must be in (0,1], got {p_beta}")
    if not 0.0 <= p_eps_x < 1.0:
        raise ValueError(f"p_eps_x must be in [0,1), got {p_eps_x}")
    if not 0.0 <= p_eps_y < 1.0:
        raise ValueError(f"p_eps_y must be in [0,1), got {p_eps_y}")


class AnalyticRates(NamedTuple):
    p_plus: float
    p_minus: float
    gap: float


def analytic_pc(p: float, p_alpha: float, p_beta: float,
                p_eps_x: float = 0.0, p_eps_y: float = 0.0) -> AnalyticRates:
    """Closed-form rates of the aligned/misaligned product processes.

    Returns (p_plus, p_minus, gap) where gap = p_plus - p_minus =
    p(1-p) * p_alpha * p_beta * (1-p_eps_x)(1-p_eps_y).
    """
    _check_rates(p, p_alpha, p_beta, p_eps_x, p_eps_y)
    q, qa, qb = 1.0 - p, 1.0 - p_alpha, 1.0 - p_beta
    ex, ey = p_eps_x, p_eps_y
    qex, qey = 1.0 - ex, 1.0 - ey
    p_plus = (p * p_alpha * p_beta
              + ex * ey
              + p * p_alpha * qb * qex * ey
              + p * qa * p_beta * ex * qey
              - p * p_alpha * p_beta * ex * ey)
    p_minus = (p * p * p_alpha * p_beta
               + ex * ey
               + p * p_alpha * qb * qex * ey
               + p * qa * p_beta * ex * qey
               - p * p * p_alpha * p_beta * ex * ey
               + p * q * p_alpha * p_beta * (ey * qex + ex * qey))
    gap = p * q * p_alpha * p_beta * qex * qey
    return AnalyticRates(p_plus, p_minus, gap)


@dataclass
class BernoulliConfig:
    """Parameters of the five binary processes and the comparison window.

    ``ramp`` (p_start, p_end), when set, replaces the constant event rate p
    with a linear ramp across the simulated horizon (the shared process
    becomes non-stationary). ``tau_prime`` is the misalignment lag. Its
    default is w for stationary configs, which keeps every draw of the
    lagged product independent, and 1 under a ramp, so the aligned and
    lagged windows see comparable rate profiles.
    """

    p: float = 0.5
    p_alpha: float = 1.0
    p_beta: float = 1.0
    p_eps_x: float = 0.0
    p_eps_y: float = 0.0
    w: int = 100
    tau_prime: int | None = None
    ramp: tuple[float, float] | None = None

    def __post_init__(self):
        _check_rates(self.p, self.p_alpha, self.p_beta, self.p_eps_x, self.p_eps_y)
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if self.tau_prime is None:
            self.tau_prime = self.w if self.ramp is None else 1
        if self.tau_prime == 0:
            raise ValueError("z- requires nonzero lag (tau_prime != 0)")
        if self.ramp is not None:
            lo, hi = self.ramp
            if not (0.0 < lo < 1.0 and 0.0 < hi < 1.0):
                raise ValueError("ramp endpoints must be in (0,1)")

    def rate_curve(self, n: int) -> np.ndarray:
        """Event rate of the shared process at each simulated time step."""
        if self.ramp is None:
            return np.full(n, self.p)
        return np.linspace(self.ramp[0], self.ramp[1], n)


@dataclass
class ZSimResult:
    z_plus: np.ndarray
    z_minus: np.ndarray
    mean_plus: float
    mean_minus: float
    var_plus: float
    var_minus: float
    analytic_p_plus: float
    analytic_p_minus: float
    theta: float
    trials: int
    config: BernoulliConfig


def _analytic_means(config: BernoulliConfig):
    """Exact expectations of z+ and z-, valid for ramped rates too.

    The aligned product shares the event draw at each step, giving the
    closed-form aligned rate; the lagged product factorizes because its two
    factors touch disjoint event indices.
    """
    tau = config.tau_prime
    offset = max(0, -tau)
    n = config.w + abs(tau)
    rate = config.rate_curve(n)
    px = rate * config.p_alpha * (1.0 - config.p_eps_x) + config.p_eps_x
    py = rate * config.p_beta * (1.0 - config.p_eps_y) + config.p_eps_y
    xs = np.arange(offset, offset + config.w)
    plus = np.mean([analytic_pc(rate[t], config.p_alpha, config.p_beta,
                                config.p_eps_x, config.p_eps_y).p_plus for t in xs])
    minus = float(np.mean(px[xs] * py[xs + tau]))
    return float(plus), minus


def simulate_z(config: BernoulliConfig, trials: int,
               rng: np.random.Generator) -> ZSimResult:
    """Monte Carlo draws of the aligned and lagged window statistics."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tau = config.tau_prime
    offset = max(0, -tau)
    n = config.w + abs(tau)
    rate = config.rate_curve(n)
    xs = slice(offset, offset + config.w)
    ys = slice(offset + tau, offset + tau + config.w)

    z_plus = np.empty(trials)
    z_minus = np.empty(trials)
    chunk = max(1, int(2e7 / n))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        h = rng.random((m, n)) < rate
        a = rng.random((m, n)) < config.p_alpha
        b = rng.random((m, n)) < config.p_beta
        ex = rng.random((m, n)) < config.p_eps_x
        ey = rng.random((m, n)) < config.p_eps_y
        hx = (a & h) | ex
        hy = (b & h) | ey
        z_plus[done:done + m] = (hx[:, xs] & hy[:, xs]).mean(axis=1)
        z_minus[done:done + m] = (hx[:, xs] & hy[:, ys]).mean(axis=1)
        done += m

    p_plus, p_minus = _analytic_means(config)
    return ZSimResult(
        z_plus=z_plus,
        z_minus=z_minus,
        mean_plus=float(z_plus.mean()),
        mean_minus=float(z_minus.mean()),
        var_plus=float(z_plus.var()),
        var_minus=float(z_minus.var()),
        analytic_p_plus=p_plus,
        analytic_p_minus=p_minus,
        theta=0.5 * (p_plus + p_minus),
        trials=trials,
        config=config,
    )


def classify_by_theta(z_plus, z_minus, theta: float) -> float:
    """Balanced misclassification rate of thresholding at theta."""
    z_plus = np.asarray(z_plus, dtype=np.float64)
    z_minus = np.asarray(z_minus, dtype=np.float64)
    if z_plus.size == 0 or z_minus.size == 0:
        raise ValueError("both sample sets must be nonempty")
    return 0.5 * (float(np.mean(z_plus < theta)) + float(np.mean(z_minus > theta)))


# The five standard dependence scenarios used by the simulation CLI: from
# deterministic dependence with perfect event recovery (a) through
# stochastic dependence and noisy recovery (b, c) to non-stationary ramped
# rates (d, e). The base rate 0.5 and the 0.2->0.8 ramp are this package's
# documented defaults.
SCENARIOS = {
    "a": dict(p=0.5, p_alpha=1.0, p_beta=1.0, p_eps_x=0.0, p_eps_y=0.0, ramp=None),
    "b": dict(p=0.5, p_alpha=0.5, p_beta=0.5, p_eps_x=0.0, p_eps_y=0.0, ramp=None),
    "c": dict(p=0.5, p_alpha=0.5, p_beta=0.5, p_eps_x=0.5, p_eps_y=0.5, ramp=None),
    "d": dict(p=0.5, p_alpha=1.0, p_beta=1.0, p_eps_x=0.0, p_eps_y=0.0, ramp=(0.2, 0.8)),
    "e": dict(p=0.5, p_alpha=0.5, p_beta=0.5, p_eps_x=0.5, p_eps_y=0.5, ramp=(0.2, 0.8)),
}


def scenario_config(name: str, w: int, tau_prime: int | None = None) -> BernoulliConfig:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return BernoulliConfig(w=w, tau_prime=tau_prime, **SCENARIOS[name])


# ---------------------------------------------------------------------------
# Analytic kernel bank
# ---------------------------------------------------------------------------

_FAMILIES = ("ricker", "gauss_deriv1", "gauss_deriv2", "gauss_deriv3",
             "gauss_deriv4", "real_morlet", "haar", "raised_cosine")
_ZERO_MEAN = ("ricker", "gauss_deriv1", "gauss_deriv2", "gauss_deriv3",
              "gauss_deriv4", "haar")


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family name plus a dilation; support grows with scale."""

    family: str = "ricker"
    scale: float = 2.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; "
                             f"choose from {_FAMILIES}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def kernel_bank(spec: KernelSpec) -> np.ndarray:
    """Sample the kernel on its support, unit L2 norm.

    Zero-mean families additionally have their sample mean removed so they
    sum to zero exactly despite discretization.
    """
    half = max(1, int(round(5.0 * spec.scale)))
    if spec.family == "haar":
        half = max(1, int(round(2.5 * spec.scale)))
        k = np.concatenate([np.ones(half), -np.ones(half)])
    else:
        u = np.arange(-half, half + 1) / spec.scale
        if spec.family == "ricker":
            k = (1.0 - u * u) * np.exp(-0.5 * u * u)
        elif spec.family.startswith("gauss_deriv"):
            order = int(spec.family[-1])
            coeffs = np.zeros(order + 1)
            coeffs[order] = 1.0
            k = hermite_e.hermeval(u, coeffs) * np.exp(-0.5 * u * u)
        elif spec.family == "real_morlet":
            k = np.cos(5.0 * u) * np.exp(-0.5 * u * u)
        elif spec.family == "raised_cosine":
            k = 0.5 * (1.0 + np.cos(np.pi * np.clip(u / 5.0, -1.0, 1.0)))
        else:  # pragma: no cover - guarded by KernelSpec
            raise ValueError(spec.family)
    if spec.family in _ZERO_MEAN:
        k = k - k.mean()
    norm = np.linalg.norm(k)
    return k / norm


def _convolve_same(signal: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.convolve(signal, kernel, mode="same")


# ---------------------------------------------------------------------------
# Benchmark dataset generators
# ---------------------------------------------------------------------------

def apply_noise_snr(clean: np.ndarray, snr: float | None,
                    noise: np.ndarray | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Add noise rescaled so std(clean)/std(noise) equals ``snr`` exactly.

    ``snr=None`` means noiseless passthrough. When no noise array is given,
    white Gaussian noise is drawn from ``rng``.
    """
    clean = np.asarray(clean, dtype=np.float64)
    if snr is None or np.isinf(snr):
        return clean.copy()
    if snr <= 0:
        raise ValueError("snr must be positive")
    cstd = clean.std()
    if cstd == 0:
        raise ValueError("clean signal has zero variance; SNR is undefined")
    if noise is None:
        if rng is None:
            raise ValueError("need a noise array or an rng to draw one")
        noise = rng.standard_normal(clean.shape)
    noise = np.asarray(noise, dtype=np.float64)
    nstd = noise.std()
    if nstd == 0:
        raise ValueError("noise has zero variance; cannot rescale")
    return clean + noise * (cstd / (snr * nstd))


@dataclass
class WaveletDatasetConfig:
    """Recipe for one benchmark dataset of kernel-convolved event pairs.

    Per pair: a fresh event process with a linearly ramped rate, thinned
    into the two signals, convolved with the dataset's two kernels; the
    second signal is circularly shifted by a random lag; kernel-filtered
    noise is added at the target SNR.
    """

    n_pairs: int = 500
    t_length: int = 1000
    kernel_x: KernelSpec = field(default_factory=lambda: KernelSpec("ricker", 2.0))
    kernel_y: KernelSpec = field(default_factory=lambda: KernelSpec("gauss_deriv1", 3.0))
    noise_kernel_x: KernelSpec = field(default_factory=lambda: KernelSpec("real_morlet", 2.0))
    noise_kernel_y: KernelSpec = field(default_factory=lambda: KernelSpec("haar", 2.0))
    event_rate: float = 0.02
    rate_slope: float = 0.8
    lag_range: tuple[int, int] = (0, 50)
    p_alpha: float = 1.0
    p_beta: float = 1.0
    snr: float | None = 1.0
    noise_rate: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if not 0.0 < self.event_rate < 1.0:
            raise ValueError("event_rate must be in (0,1)")
        if not 0.0 <= self.rate_slope < 1.0:
            raise ValueError("rate_slope must be in [0,1)")
        lo, hi = self.lag_range
        if not 0 <= lo <= hi < self.t_length:
            raise ValueError("lag_range must satisfy 0 <= lo <= hi < t_length")
        if self.noise_rate is None:
            self.noise_rate = self.event_rate

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for key in ("kernel_x", "kernel_y", "noise_kernel_x", "noise_kernel_y"):
            spec = d[key]
            d[key] = {"family": spec.family, "scale": spec.scale}
        d["lag_range"] = list(self.lag_range)
        return d


def _ramped_events(rng, t_length, base_rate, slope_mag):
    slope = rng.uniform(-slope_mag, slope_mag)
    t = np.arange(t_length)
    rate = base_rate * (1.0 + slope * (2.0 * t / max(t_length - 1, 1) - 1.0))
    rate = np.clip(rate, 0.0, 1.0)
    return (rng.random(t_length) < rate).astype(np.float64)


def gen_wavelet_dataset(config: WaveletDatasetConfig) -> Dataset:
    """Build one benchmark dataset; deterministic for a given config."""
    k1 = kernel_bank(config.kernel_x)
    k2 = kernel_bank(config.kernel_y)
    nk1 = kernel_bank(config.noise_kernel_x)
    nk2 = kernel_bank(config.noise_kernel_y)
    t_len = config.t_length
    for name, k in (("kernel_x", k1), ("kernel_y", k2),
                    ("noise_kernel_x", nk1), ("noise_kernel_y", nk2)):
        if len(k) > t_len:
            raise ValueError(f"{name} support {len(k)} exceeds signal length {t_len}")

    pairs = []
    for i in range(config.n_pairs):
        rng = np.random.default_rng([config.seed, 7, i])
        h = _ramped_events(rng, t_len, config.event_rate, config.rate_slope)
        hx = h * (rng.random(t_len) < config.p_alpha)
        hy = h * (rng.random(t_len) < config.p_beta)
        clean_x = _convolve_same(hx, k1)
        clean_y = _convolve_same(hy, k2)
        lag = int(rng.integers(config.lag_range[0], config.lag_range[1] + 1))
        clean_y = np.roll(clean_y, lag)

        noise_x = _convolve_same((rng.random(t_len) < config.noise_rate).astype(float), nk1)
        noise_y = _convolve_same((rng.random(t_len) < config.noise_rate).astype(float), nk2)
        x = _add_noise_if_possible(clean_x, config.snr, noise_x)
        y = _add_noise_if_possible(clean_y, config.snr, noise_y)
        pairs.append(SignalPair(x[None], y[None]))

    manifest = {
        "generator": "wavelet_benchmark",
        "seed": config.seed,
        "config": config.to_dict(),
        "n": config.n_pairs,
        "t": t_len,
        "kx": 1,
        "ky": 1,
    }
    return Dataset(pairs, manifest)


def _add_noise_if_possible(clean, snr, noise):
    # an event-free pair (possible at tiny rates) stays noiseless rather
    # than erroring the whole dataset
    if snr is not None and (clean.std() == 0 or noise.std() == 0):
        return clean.copy()
    return apply_noise_snr(clean, snr, noise)


@dataclass
class XiDatasetConfig:
    """Recipe for dependence-strength sweeps.

    ``xi`` is the probability that a master event fires in both signals;
    otherwise the event goes to exactly one of them, keeping each signal's
    marginal event rate fixed at ``event_rate`` for every xi. xi=0 draws the
    two event processes independently.
    """

    xi: float = 1.0
    n_pairs: int = 100
    t_length: int = 600
    kernel_x: KernelSpec = field(default_factory=lambda: KernelSpec("ricker", 2.0))
    kernel_y: KernelSpec = field(default_factory=lambda: KernelSpec("gauss_deriv2", 2.5))
    noise_kernel_x: KernelSpec = field(default_factory=lambda: KernelSpec("real_morlet", 2.0))
    noise_kernel_y: KernelSpec = field(default_factory=lambda: KernelSpec("haar", 2.0))
    event_rate: float = 0.02
    noise_rate: float | None = None
    snr: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("xi must be in [0,1]")
        if not 0.0 < self.event_rate < 0.5:
            raise ValueError("event_rate must be in (0, 0.5)")
        if self.noise_rate is None:
            self.noise_rate = self.event_rate

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for key in ("kernel_x", "kernel_y", "noise_kernel_x", "noise_kernel_y"):
            spec = d[key]
            d[key] = {"family": spec.family, "scale": spec.scale}
        return d


def xi_event_pair(xi: float, rate: float, t_length: int, rng: np.random.Generator):
    """Draw one (h_x, h_y) event pair with shared fraction xi.

    For xi>0, a master process at rate 2*rate/(1+xi) is thinned: each event
    is shared with probability xi, else assigned to one signal by a fair
    coin. For xi=0 the processes are drawn independently at ``rate``.
    """
    if xi == 0.0:
        hx = rng.random(t_length) < rate
        hy = rng.random(t_length) < rate
        return hx.astype(np.float64), hy.astype(np.float64)
    master_rate = 2.0 * rate / (1.0 + xi)
    master = rng.random(t_length) < master_rate
    shared = rng.random(t_length) < xi
    to_x = rng.random(t_length) < 0.5
    hx = master & (shared | to_x)
    hy = master & (shared | ~to_x)
    return hx.astype(np.float64), hy.astype(np.float64)


def gen_xi_dataset(config: XiDatasetConfig) -> Dataset:
    """Paired signals whose dependence strength is controlled by xi."""
    k1 = kernel_bank(config.kernel_x)
    k2 = kernel_bank(config.kernel_y)
    nk1 = kernel_bank(config.noise_kernel_x)
    nk2 = kernel_bank(config.noise_kernel_y)
    if max(len(k1), len(k2), len(nk1), len(nk2)) > config.t_length:
        raise ValueError("kernel support exceeds signal length")
    t_len = config.t_length
    pairs = []
    for i in range(config.n_pairs):
        rng = np.random.default_rng([config.seed, 8, i])
        hx, hy = xi_event_pair(config.xi, config.event_rate, t_len, rng)
        x = _convolve_same(hx, k1)
        y = _convolve_same(hy, k2)
        if config.snr is not None:
            noise_x = _convolve_same((rng.random(t_len) < config.noise_rate).astype(float), nk1)
            noise_y = _convolve_same((rng.random(t_len) < config.noise_rate).astype(float), nk2)
            x = _add_noise_if_possible(x, config.snr, noise_x)
            y = _add_noise_if_possible(y, config.snr, noise_y)
        pairs.append(SignalPair(x[None], y[None]))
    manifest = {
        "generator": "xi_sweep",
        "seed": config.seed,
        "config": config.to_dict(),
        "n": config.n_pairs,
        "t": config.t_length,
        "kx": 1,
        "ky": 1,
    }
    return Dataset(pairs, manifest)
