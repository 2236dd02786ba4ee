"""Log-log least squares for convergence and decay rates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    prefactor: float
    ci_low: float
    ci_high: float
    r_squared: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "ci": [self.ci_low, self.ci_high],
            "r_squared": self.r_squared,
            "samples": self.samples,
        }


def loglog_fit(x, y, min_samples: int = 4, confidence: float = 0.95) -> PowerFit:
    """Fit y ~ C x^p by least squares on (log x, log y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < min_samples:
        raise FitError(f"need at least {min_samples} samples, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("log-log fit needs positive data")
    res = stats.linregress(np.log(x), np.log(y))
    dof = x.size - 2
    half = stats.t.ppf(0.5 + confidence / 2.0, dof) * res.stderr if dof > 0 else np.inf
    return PowerFit(
        float(res.slope),
        float(np.exp(res.intercept)),
        float(res.slope - half),
        float(res.slope + half),
        float(res.rvalue ** 2),
        int(x.size),
    )
