"""
Sample statistics for Monte Carlo estimates.

Standard errors are per complex component (real and imaginary part separately)
from the unbiased sample variance.
"""

from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy import stats

SE_FLOOR = 1e-12


class SampleSummary(NamedTuple):
    mean: NDArray[np.complex128]
    se_real: NDArray[np.float64]
    se_imag: NDArray[np.float64]
    count: int


def summarize(samples: NDArray) -> SampleSummary:
    """Mean and standard errors over the leading axis."""
    samples = np.asarray(samples, dtype=np.complex128)
    count = samples.shape[0]
    mean = samples.mean(axis=0)
    if count < 2:
        zeros = np.zeros(mean.shape)
        return SampleSummary(mean, zeros, zeros, count)
    se_real = samples.real.std(axis=0, ddof=1) / np.sqrt(count)
    se_imag = samples.imag.std(axis=0, ddof=1) / np.sqrt(count)
    return SampleSummary(mean, se_real, se_imag, count)


def z_scores(summary: SampleSummary, oracle: NDArray, envelope: float = 0.0) -> NDArray[np.float64]:
    """
    Per-entry `max(|Re diff| / SE_re, |Im diff| / SE_im)`.

    `envelope` is subtracted from each component difference first (a known
    bias allowance); standard errors are floored at `SE_FLOOR`.
    """
    diff = summary.mean - np.asarray(oracle, dtype=np.complex128)
    real = np.maximum(np.abs(diff.real) - envelope, 0) / np.maximum(summary.se_real, SE_FLOOR)
    imag = np.maximum(np.abs(diff.imag) - envelope, 0) / np.maximum(summary.se_imag, SE_FLOOR)
    return np.maximum(real, imag)


def paired_z_scores(first: NDArray, second: NDArray) -> NDArray[np.float64]:
    """z-scores of the mean of `first - second` against zero for paired samples."""
    return z_scores(summarize(np.asarray(first) - np.asarray(second)), 0.0)


def refinement_slope(steps: NDArray, errors: NDArray) -> float:
    """Least-squares slope of `log(error)` against `log(step)`."""
    steps = np.asarray(steps, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    keep = errors > 0
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(steps[keep]), np.log(errors[keep]), 1)
    return float(slope)


def two_sample_ks(first: NDArray, second: NDArray) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value of two samples."""
    result = stats.ks_2samp(np.asarray(first), np.asarray(second))
    return float(result.statistic), float(result.pvalue)
