"""Simple linear regression with the diagnostics reported alongside it.

Coefficients come from the closed-form normal equations on centred data.
Diagnostics: F test, Breusch-Pagan (Koenker's studentized form by default)
and Durbin-Watson with a normal approximation to its null distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


class DegenerateRegressorError(ValueError):
    """The regressor has no variance, so the slope is not identified."""


@dataclass(frozen=True)
class OLSFit:
    intercept: float
    slope: float
    intercept_se: float
    slope_se: float
    n_obs: int
    sse: float
    r2: float
    adj_r2: float
    f_stat: float
    f_p: float
    t_stat: float
    p_value: float
    x: np.ndarray
    y: np.ndarray

    @property
    def df_resid(self) -> int:
        return self.n_obs - 2

    @property
    def fitted(self) -> np.ndarray:
        return self.intercept + self.slope * self.x

    @property
    def residuals(self) -> np.ndarray:
        return self.y - self.fitted

    def predict(self, x) -> np.ndarray:
        return self.intercept + self.slope * np.asarray(x, dtype=float)


def ols(x, y) -> OLSFit:
    """Least-squares fit of ``y = intercept + slope * x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 observations, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in regression input")

    xbar, ybar = x.mean(), y.mean()
    dx, dy = x - xbar, y - ybar
    sxx = float(dx @ dx)
    if sxx <= 1e-12 * max(1.0, float(x @ x)):
        raise DegenerateRegressorError("regressor has (near) zero variance")
    sxy = float(dx @ dy)
    syy = float(dy @ dy)
    slope = sxy / sxx
    intercept = ybar - slope * xbar

    resid = y - (intercept + slope * x)
    sse = float(resid @ resid)
    df = n - 2
    sigma2 = sse / df
    slope_se = math.sqrt(sigma2 / sxx)
    intercept_se = math.sqrt(sigma2 * (1.0 / n + xbar * xbar / sxx))

    if syy > 0:
        r2 = max(0.0, min(1.0, 1.0 - sse / syy))
    else:
        r2 = 1.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df

    if slope_se > 0:
        t_stat = slope / slope_se
        p_value = float(2.0 * stats.t.sf(abs(t_stat), df))
    else:
        # exact fit: flat data carries no evidence of a slope, a sloped line is certain
        t_stat = 0.0 if slope == 0 else math.copysign(math.inf, slope)
        p_value = 1.0 if slope == 0 else 0.0
    f_stat = t_stat * t_stat
    f_p = p_value if math.isfinite(f_stat) else 0.0

    return OLSFit(
        intercept=intercept,
        slope=slope,
        intercept_se=intercept_se,
        slope_se=slope_se,
        n_obs=n,
        sse=sse,
        r2=r2,
        adj_r2=adj_r2,
        f_stat=f_stat,
        f_p=f_p,
        t_stat=t_stat,
        p_value=p_value,
        x=x,
        y=y,
    )


def breusch_pagan(fit: OLSFit, studentize: bool = True) -> tuple[float, float]:
    """Heteroscedasticity test: squared residuals regressed on the regressor.

    Returns ``(statistic, p_value)`` against a chi-squared with one degree of
    freedom. The studentized (Koenker) statistic is ``n * R^2`` of the
    auxiliary regression; the original form is ``ESS / (2 sigma^4)``.
    """
    e2 = fit.residuals**2
    n = fit.n_obs
    centred = e2 - e2.mean()
    tss = float(centred @ centred)
    if tss == 0.0:
        return 0.0, 1.0
    x = fit.x
    dx = x - x.mean()
    b = float(dx @ centred) / float(dx @ dx)
    ess = b * b * float(dx @ dx)
    if studentize:
        stat = n * ess / tss
    else:
        sigma2 = float(e2.sum()) / n
        stat = ess / (2.0 * sigma2 * sigma2)
    return stat, float(stats.chi2.sf(stat, 1))


def durbin_watson(fit: OLSFit) -> tuple[float, float]:
    """Durbin-Watson statistic and one-sided p-value for positive autocorrelation.

    The null mean and variance of the statistic are computed exactly for the
    design ``[1, x]``; the p-value uses a normal approximation with those moments.
    """
    e = fit.residuals
    denom = float(e @ e)
    if denom == 0.0:
        return math.nan, math.nan
    d = float(np.sum(np.diff(e) ** 2)) / denom
    mean, var = _dw_null_moments(fit.x)
    if var <= 0:
        return d, math.nan
    p = float(stats.norm.cdf((d - mean) / math.sqrt(var)))
    return d, p


def _dw_null_moments(x: np.ndarray) -> tuple[float, float]:
    n, k = x.size, 2
    if n > 2000:
        return 2.0, 4.0 / n
    X = np.column_stack([np.ones(n), x])
    q, _ = np.linalg.qr(X)
    # A = D'D for the first-difference operator D
    A = np.diag(np.full(n, 2.0)) - np.eye(n, k=1) - np.eye(n, k=-1)
    A[0, 0] = A[-1, -1] = 1.0
    MA = A - q @ (q.T @ A)
    MAM = MA - (MA @ q) @ q.T
    p_tr = float(np.trace(MAM))
    q_tr = float(np.sum(MAM * MAM.T))
    m = n - k
    mean = p_tr / m
    var = 2.0 * (q_tr - p_tr * mean) / (m * (m + 2))
    return mean, var
