"""
Empirical summaries used by every rate check: exact Kolmogorov distance to the
standard normal, central moments, exceedance curves and log-log slope fits.
"""
import math
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats as sps

from src.config import config
from src.errors import EmptySample, NonPositiveSd, NonPositiveValue, TooFewPoints
from src.models import EmpiricalSummary, TailCurve

ONE_SIGMA_ALPHA = math.erfc(1.0 / math.sqrt(2.0))


def normal_cdf(x) -> np.ndarray:
    """Phi via scipy's erfc-based ndtr (absolute error far below 1e-10)."""
    return special.ndtr(x)


def _as_sample(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise EmptySample("Sample is empty")
    return arr


def empirical_kolmogorov(samples, mean: float, sd: float) -> float:
    """
    sup_t |F_N(t) - Phi(t)| for the samples standardised by (mean, sd).

    The sup is attained at a jump of F_N, so both one-sided gaps at every
    order statistic are enough.
    """
    arr = _as_sample(samples)
    if not sd > 0:
        raise NonPositiveSd(f"Standard deviation must be positive, got {sd}")
    w = np.sort((arr - mean) / sd)
    count = w.size
    phi = normal_cdf(w)
    upper = np.arange(1, count + 1) / count - phi
    lower = phi - np.arange(0, count) / count
    return float(min(1.0, max(np.abs(upper).max(), np.abs(lower).max())))


def central_moment(samples, r: float) -> float:
    """Mean of |x - sample mean|^r."""
    arr = _as_sample(samples)
    return float(np.mean(np.abs(arr - arr.mean()) ** r))


def dkw_width(count: int, alpha: Optional[float] = None) -> float:
    """Dvoretzky-Kiefer-Wolfowitz band: P(sup|F_N - F| > width) <= alpha."""
    alpha = config.dkw_alpha if alpha is None else alpha
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * count))


def summarize(samples, orders: Optional[Iterable[float]] = None) -> EmpiricalSummary:
    """Mean, unbiased variance, central moments and d_K (omitted when the variance is 0)."""
    arr = _as_sample(samples)
    orders = config.moment_orders if orders is None else tuple(orders)
    mean = float(arr.mean())
    variance = float(arr.var(ddof=1)) if arr.size > 1 else 0.0
    moments: Dict[float, float] = {float(r): central_moment(arr, r) for r in orders}
    degenerate = not variance > 0
    d_k = None if degenerate else empirical_kolmogorov(arr, mean, math.sqrt(variance))
    return EmpiricalSummary(
        count=int(arr.size),
        mean=mean,
        variance=variance,
        central_moments=moments,
        d_kolmogorov=d_k,
        degenerate=degenerate,
    )


def tail_curve(samples, thresholds: Sequence[float]) -> TailCurve:
    """Empirical P(|x| >= t) per threshold with binomial standard errors."""
    arr = np.abs(np.asarray(samples, dtype=float).ravel())
    th = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(th) <= 0):
        raise ValueError(f"Thresholds must be strictly increasing: {th.tolist()}")
    if arr.size == 0:
        zeros = np.zeros_like(th)
        return TailCurve(thresholds=th, exceedance=zeros, standard_errors=zeros.copy())
    ordered = np.sort(arr)
    # count of samples >= t
    counts = arr.size - np.searchsorted(ordered, th, side='left')
    p = counts / arr.size
    return TailCurve(thresholds=th, exceedance=p, standard_errors=np.sqrt(p * (1.0 - p) / arr.size))


def _regress(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    fit = sps.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.stderr)


def fit_log_slope(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """
    Least-squares fit of log y on log x.

    :return: (slope, intercept, slope standard error)
    :raises TooFewPoints: fewer than 3 points
    :raises NonPositiveValue: a coordinate is <= 0
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise TooFewPoints(f"Need at least 3 points for a slope fit, got {len(pts)}")
    if np.any(pts <= 0):
        raise NonPositiveValue("Log-log fit needs strictly positive coordinates")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(y) == 0:
        return 0.0, float(y[0]), 0.0
    return _regress(x, y)


def fit_exp_rate(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """Least-squares fit of log y on x (geometric tail decay rate per unit of x)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise TooFewPoints(f"Need at least 3 points for a rate fit, got {len(pts)}")
    if np.any(pts[:, 1] <= 0):
        raise NonPositiveValue("Exponential-rate fit needs strictly positive y values")
    return _regress(pts[:, 0], np.log(pts[:, 1]))


def variance_error(samples) -> float:
    """Large-sample standard error of the sample variance, sqrt((m4 - s^4) / N)."""
    arr = _as_sample(samples)
    s2 = float(arr.var(ddof=1)) if arr.size > 1 else 0.0
    m4 = central_moment(arr, 4.0)
    return math.sqrt(max(m4 - s2 ** 2, 0.0) / arr.size)


def kolmogorov_error(count: int) -> float:
    """DKW band at the one-sigma level (alpha = P(|N| > 1)); used as the error bar of d_K."""
    return dkw_width(count, ONE_SIGMA_ALPHA)
