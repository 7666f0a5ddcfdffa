"""Numerical kernels for the target-adjusting loop.

``fit_log_curve`` is closed-form ordinary least squares for
``f(x) = a + b*ln(x)`` (regress ``y`` on ``u = ln x``). ``lognormal_mode_sample``
draws from the log-normal whose *mode* is the requested value.

Gaussian variates come from ``numpy.random.Generator.normal`` (ziggurat on a
PCG64 stream), so draws are reproducible for a fixed stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    pass


class DegenerateFitError(ValueError):
    """All abscissae equal (``var(ln x) == 0``); the slope is undefined."""


@dataclass(frozen=True)
class CurveFit:
    a: float
    b: float
    n: int
    residual_rms: float

    def __call__(self, x):
        return self.a + self.b * np.log(x)


def fit_log_curve(x: Sequence[float], y: Sequence[float]) -> CurveFit:
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-d sequences of equal length")
    if xs.size < 2:
        raise DegenerateFitError(f"need at least 2 samples, got {xs.size}")
    if not np.all(np.isfinite(xs)) or np.any(xs <= 0):
        raise DomainError("all x must be finite and > 0")
    if not np.all(np.isfinite(ys)):
        raise DomainError("all y must be finite")

    u = np.log(xs)
    u_mean = u.mean()
    y_mean = ys.mean()
    du = u - u_mean
    # population moments; the 1/n factors cancel in the ratio
    var_u = float(np.mean(du * du))
    if var_u <= 1e-300 or np.all(u == u[0]):
        raise DegenerateFitError("all x are equal; ln(x) has zero variance")
    cov_uy = float(np.mean(du * (ys - y_mean)))
    b = cov_uy / var_u
    a = float(y_mean - b * u_mean)
    resid = ys - (a + b * u)
    rms = float(math.sqrt(np.mean(resid * resid)))
    return CurveFit(a=a, b=float(b), n=int(xs.size), residual_rms=rms)


def eval_slope(fit: CurveFit, x: float) -> float:
    """Derivative of the fitted curve, ``b / x``."""
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x!r}")
    return fit.b / x


def optimal_for_slope(fit: CurveFit, slope: float) -> float:
    """Abscissa where the tangent slope equals ``slope``: ``b / slope``."""
    if not slope > 0:
        raise DomainError(f"slope must be > 0, got {slope!r}")
    return fit.b / slope


def lognormal_mu_for_mode(mode: float, sigma: float) -> float:
    # mode of a log-normal is exp(mu - sigma^2)
    return math.log(mode) + sigma * sigma


def lognormal_mode_sample(mode: float, sigma: float, rng: np.random.Generator, size=None):
    if not mode > 0:
        raise DomainError(f"mode must be > 0, got {mode!r}")
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma!r}")
    if sigma == 0:
        return mode if size is None else np.full(size, float(mode))
    mu = lognormal_mu_for_mode(mode, sigma)
    g = rng.normal(mu, sigma, size=size)
    return float(np.exp(g)) if size is None else np.exp(g)
