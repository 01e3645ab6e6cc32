"""Normal-distribution utilities and detection-threshold calibration.

The dual-sketch guard decides "manipulated or not" by comparing the salted
and unsalted estimates. On clean streams their normalized difference is
approximately Normal(0, sigma) with

    sigma = 1.04 * sqrt(1/M_salted + 1/M_unsalted)

so a threshold d_t set at z standard deviations yields a false-positive
probability of about Phi(-z). The helpers here compute sigma, the standard
normal CDF, and the inverse problem (threshold for a desired false-positive
rate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Relative standard deviation of the raw estimator is ~ ERROR_CONSTANT/sqrt(M).
ERROR_CONSTANT = 1.04

_SQRT2 = math.sqrt(2.0)
_BISECT_TOL = 1e-10


def normal_cdf(x: float) -> float:
    """Standard normal CDF Phi(x), absolute error well below 1e-9.

    Evaluated as erfc(-x/sqrt(2))/2; the platform erfc is a correctly-rounded
    implementation of the standard rational/continued-fraction approximations,
    which keeps far tails (Phi(-6) ~ 1e-9) accurate where a naive series in
    float64 would lose everything to cancellation.
    """
    if not math.isfinite(x):
        raise ValueError(f"normal_cdf needs a finite argument, got {x!r}")
    return 0.5 * math.erfc(-x / _SQRT2)


def sns_sigma(m_salted: int, m_unsalted: int) -> float:
    """Relative std of the clean-stream gap between the two estimates.

    Both register counts must be powers of two >= 16 (valid sketch
    geometries). Symmetric in its arguments.
    """
    for name, m in (("m_salted", m_salted), ("m_unsalted", m_unsalted)):
        if m < 16 or m & (m - 1):
            raise ValueError(f"{name} must be a power of two >= 16, got {m}")
    return ERROR_CONSTANT * math.sqrt(1.0 / m_salted + 1.0 / m_unsalted)


def threshold_for_fp(fp_target: float, sigma: float) -> float:
    """Smallest threshold d_t with Phi(-d_t/sigma) <= fp_target.

    Inverts normal_cdf by bisection (interval shrunk to 1e-10), so the
    result is minimal up to that tolerance and always on the safe side:
    the achieved false-positive probability never exceeds fp_target.
    """
    if not 0.0 < fp_target < 0.5:
        raise ValueError(f"fp_target must be in (0, 0.5), got {fp_target!r}")
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    lo, hi = 0.0, 1.0
    while normal_cdf(-hi) > fp_target:
        hi *= 2.0
        if hi > 64.0:
            # erfc underflows around z ~ 38; nothing representable is this far out.
            raise ValueError(f"fp_target {fp_target!r} is below float64 resolution")
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if normal_cdf(-mid) <= fp_target:
            hi = mid
        else:
            lo = mid
    return hi * sigma


@dataclass(frozen=True)
class DetectionParams:
    """Calibrated detection settings for a dual-sketch guard.

    sigma: relative std of the clean normalized estimate difference.
    d_t: detection threshold, as a fraction of the salted estimate.
    fp_target: the false-positive probability the threshold was chosen for.
    """

    sigma: float
    d_t: float
    fp_target: float

    def __post_init__(self) -> None:
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not self.d_t > 0.0:
            raise ValueError(f"d_t must be positive, got {self.d_t!r}")
        if not 0.0 < self.fp_target < 0.5:
            raise ValueError(f"fp_target must be in (0, 0.5), got {self.fp_target!r}")

    @classmethod
    def calibrated(cls, m_salted: int, m_unsalted: int, fp_target: float) -> "DetectionParams":
        """Choose d_t from the geometry so clean streams alarm with
        probability <= fp_target."""
        sigma = sns_sigma(m_salted, m_unsalted)
        return cls(sigma=sigma, d_t=threshold_for_fp(fp_target, sigma), fp_target=fp_target)

    @classmethod
    def with_threshold(cls, m_salted: int, m_unsalted: int, d_t: float) -> "DetectionParams":
        """Take d_t as given and record the false-positive rate it implies."""
        sigma = sns_sigma(m_salted, m_unsalted)
        return cls(sigma=sigma, d_t=d_t, fp_target=normal_cdf(-d_t / sigma))

    @property
    def implied_fp(self) -> float:
        """False-positive probability of the configured threshold."""
        return normal_cdf(-self.d_t / self.sigma)
