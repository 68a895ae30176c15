"""Straight-line and frequency-response fits.

The nonlinear fitter is a plain Levenberg-Marquardt loop (Gauss-Newton step
with Marquardt's diagonal damping). It stops when the relative parameter
step drops below ``xtol``; running out of iterations raises
:class:`ConvergenceError` carrying the last iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .series import ValidationError

__all__ = [
    "FitResult",
    "ConvergenceError",
    "fit_line",
    "levenberg_marquardt",
    "fit_frequency_response",
    "MODELS",
]


@dataclass
class FitResult:
    parameters: dict
    residual_norm: float
    covariance_diag: dict
    iterations: int = 0
    converged: bool = True
    model: str = ""
    units: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.residual_norm < 0:
            raise ValidationError("residual_norm must be >= 0")
        if not all(math.isfinite(v) for v in self.parameters.values()):
            raise ValidationError("fit produced non-finite parameters")

    def stderr(self, name: str) -> float:
        return math.sqrt(self.covariance_diag[name])


class ConvergenceError(RuntimeError):
    def __init__(self, message, parameters, residual_norm, iterations):
        super().__init__(message)
        self.parameters = parameters
        self.residual_norm = residual_norm
        self.iterations = iterations


def fit_line(x, y, sigma=None) -> FitResult:
    """Least-squares line ``y = slope * x + intercept``.

    With ``sigma`` the fit is weighted and the covariance uses the given
    absolute uncertainties; without it, ordinary least squares with the
    residual variance (undefined, reported as NaN, for two points).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D and the same length")
    if np.unique(x).size < 2:
        raise ValidationError("need at least two distinct x values")
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    sw, sx, sy = w.sum(), (w * x).sum(), (w * y).sum()
    xm, ym = sx / sw, sy / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    dof = x.size - 2
    if sigma is None:
        s2 = (resid**2).sum() / dof if dof > 0 else float("nan")
    else:
        s2 = 1.0
    var_slope = s2 / sxx
    var_intercept = s2 * (1.0 / sw + xm**2 / sxx)
    return FitResult(
        {"slope": float(slope), "intercept": float(intercept)},
        float(np.sqrt((resid**2).sum())),
        {"slope": float(var_slope), "intercept": float(var_intercept)},
        model="line",
    )


def levenberg_marquardt(residual: Callable, jacobian: Callable, p0: Sequence[float],
                        xtol: float = 1e-10, max_iter: int = 100, lam0: float = 1e-3):
    """Minimize ``sum(residual(p)**2)``.

    Returns ``(p, cost, jtj, iterations)`` where ``jtj`` is the undamped
    normal matrix at the solution.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    cost = float(r @ r)
    lam = lam0
    for it in range(1, max_iter + 1):
        j = jacobian(p)
        jtj = j.T @ j
        g = j.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(jtj + lam * np.diag(diag), -g, rcond=None)[0]
            trial = p + step
            r_trial = residual(trial)
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial <= cost:
                lam = max(lam / 10, 1e-12)
                break
            lam *= 10
            if lam > 1e16:
                step = np.zeros_like(p)
                trial, r_trial, cost_trial = p, r, cost
                break
        p, r, cost = trial, r_trial, cost_trial
        if np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol):
            j = jacobian(p)
            return p, cost, j.T @ j, it
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations", p.tolist(), math.sqrt(cost), max_iter
    )


def _ratio_freq(f, eps_h, eps_e):
    return eps_h + eps_e * f


def _ratio_freq_jac(f, eps_h, eps_e):
    return np.column_stack([np.ones_like(f), f])


def _attenuation(f, h, f_e):
    return (1 - h) / np.sqrt(1 + (f / f_e) ** 2)


def _attenuation_jac(f, h, f_e):
    root = np.sqrt(1 + (f / f_e) ** 2)
    d_h = -1 / root
    d_fe = (1 - h) * (f**2 / f_e**3) / root**3
    return np.column_stack([d_h, d_fe])


# name -> (parameter names, model, jacobian, default start, parameter units)
MODELS = {
    "ratio-freq": (("eps_h", "eps_e"), _ratio_freq, _ratio_freq_jac, None, ("A/A", "A/A/Hz")),
    "attenuation": (("h", "f_e"), _attenuation, _attenuation_jac, (0.0, 100.0), ("1", "Hz")),
}


def fit_frequency_response(f, values, model: str = "ratio-freq", amplitude: float = 1.0,
                           p0=None, fixed: Mapping[str, float] | None = None,
                           xtol: float = 1e-10, max_iter: int = 100) -> FitResult:
    """Fit a frequency-response model by Levenberg-Marquardt.

    ``ratio-freq``: ``values`` are current differences (A) at drive
    ``amplitude`` (A), modeled as ``amplitude * (eps_h + eps_e f)``.
    ``attenuation``: ``values`` are relative flux transfers, modeled as
    ``(1 - h) / sqrt(1 + (f/f_e)^2)``.
    Parameters listed in ``fixed`` are held at the given values.
    """
    if model not in MODELS:
        raise ValidationError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    names, fn, jac, default, units = MODELS[model]
    f = np.asarray(f, dtype=float)
    y = np.asarray(values, dtype=float)
    if f.shape != y.shape or f.ndim != 1:
        raise ValidationError("f and values must be 1-D and the same length")
    if np.any(f < 0):
        raise ValidationError("frequencies must be >= 0")
    scale = amplitude if model == "ratio-freq" else 1.0
    fixed = dict(fixed or {})
    unknown = set(fixed) - set(names)
    if unknown:
        raise ValidationError(f"cannot fix unknown parameters {sorted(unknown)}")
    free = [k for k in names if k not in fixed]
    if f.size < len(free) + 1:
        raise ValidationError(f"need at least {len(free) + 1} points for {len(free)} parameters")

    if p0 is None:
        if default is not None:
            start = dict(zip(names, default))
        else:
            line = fit_line(f, y / scale) if np.unique(f).size > 1 else None
            start = (
                {"eps_h": line.parameters["intercept"], "eps_e": line.parameters["slope"]}
                if line else {"eps_h": float(np.mean(y / scale)), "eps_e": 0.0}
            )
    else:
        start = dict(zip(names, p0))

    def full(p):
        vals = dict(fixed)
        vals.update(zip(free, p))
        return [vals[k] for k in names]

    idx = [names.index(k) for k in free]

    def residual(p):
        return y - scale * fn(f, *full(p))

    def jacobian(p):
        return -scale * jac(f, *full(p))[:, idx]

    p, cost, jtj, iters = levenberg_marquardt(
        residual, jacobian, [start[k] for k in free], xtol=xtol, max_iter=max_iter
    )
    dof = f.size - len(free)
    s2 = cost / dof if dof > 0 else float("nan")
    try:
        cov = np.linalg.inv(jtj) * s2
        var = np.diag(cov)
    except np.linalg.LinAlgError:
        var = np.full(len(free), np.nan)
    params = dict(zip(names, full(p)))
    cov_diag = {k: 0.0 for k in fixed}
    cov_diag.update({k: float(v) for k, v in zip(free, var)})
    return FitResult(
        {k: float(v) for k, v in params.items()},
        math.sqrt(cost),
        cov_diag,
        iterations=iters,
        model=model,
        units=dict(zip(names, units)),
    )
