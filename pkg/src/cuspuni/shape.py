"""Universal local shapes of a density near a cusp, small gap or small minimum."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import BadFit, DomainError

SQRT3 = np.sqrt(3.0)


def psi_edge(lam):
    """Edge shape function.

    Substituting ``sqrt(lam) = sinh(u/2)`` collapses the algebraic form to
    ``sinh(u/3)/2``, which has no cancellation anywhere on ``[0, inf)``.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("psi_edge requires lambda >= 0")
    out = 0.5 * np.sinh(2.0 * np.arcsinh(np.sqrt(lam)) / 3.0)
    return out if out.ndim else float(out)


def psi_min(lam):
    """Minimum shape function, even in its argument.

    With ``lam = sinh(u)`` the algebraic form reduces to ``cosh(u/3) - 1``,
    written as ``2 sinh(u/6)^2`` to keep full relative precision near 0.
    """
    lam = np.asarray(lam, dtype=float)
    out = 2.0 * np.sinh(np.arcsinh(np.abs(lam)) / 6.0) ** 2
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CuspModel:
    gamma: float
    location: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")


@dataclass(frozen=True)
class EdgeModel:
    delta: float
    gamma: float
    location: float = 0.0  # right edge of the gap

    def __post_init__(self):
        if not (self.delta > 0 and self.gamma > 0):
            raise DomainError("delta and gamma must be positive")


@dataclass(frozen=True)
class MinModel:
    rho_m: float
    gamma: float
    location: float = 0.0

    def __post_init__(self):
        if not (self.rho_m > 0 and self.gamma > 0):
            raise DomainError("rho_m and gamma must be positive")


ShapeModel = CuspModel | EdgeModel | MinModel


def cusp_density(gamma, omega):
    return SQRT3 * gamma ** (4.0 / 3.0) * np.abs(omega) ** (1.0 / 3.0) / (2 * np.pi)


def model_density(model: ShapeModel, omega):
    """Leading-order density at distance ``omega`` from the model's base point."""
    omega = np.asarray(omega, dtype=float)
    if isinstance(model, CuspModel):
        out = cusp_density(model.gamma, omega)
    elif isinstance(model, EdgeModel):
        if np.any(omega < 0):
            raise DomainError("edge model is evaluated to the right of the edge")
        out = (SQRT3 * (2 * model.gamma) ** (4.0 / 3.0) * model.delta ** (1.0 / 3.0)
               * psi_edge(omega / model.delta) / (2 * np.pi))
    elif isinstance(model, MinModel):
        c = 3 * SQRT3 * model.gamma**4 / (2 * (np.pi * model.rho_m) ** 3)
        out = model.rho_m * (1.0 + psi_min(c * omega))
    else:
        raise DomainError(f"unknown model {model!r}")
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def model_profile(model: ShapeModel, x):
    """Two-sided density of the model at absolute positions ``x``."""
    x = np.asarray(x, dtype=float)
    if isinstance(model, EdgeModel):
        right = x - model.location
        left = (model.location - model.delta) - x
        out = np.zeros_like(x)
        r = right >= 0
        l = left >= 0
        out[r] = model_density(model, right[r])
        out[l] = model_density(model, left[l])
        return out
    return np.asarray(model_density(model, x - model.location), dtype=float)


@dataclass(frozen=True)
class Classification:
    model: ShapeModel
    residual: float
    residuals: dict


def _fit(kind, x, y, scale, guess):
    floor = 1e-3 * scale

    def build(p):
        if kind == "cusp":
            return CuspModel(np.exp(p[1]), p[0])
        if kind == "edge":
            return EdgeModel(np.exp(p[1]), np.exp(p[2]), p[0])
        return MinModel(np.exp(p[1]), np.exp(p[2]), p[0])

    def resid(p):
        return (model_profile(build(p), x) - y) / (y + floor)

    sol = least_squares(resid, guess, method="lm", max_nfev=4000)
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return build(sol.x), rms


def classify_profile(profile, window, contrast: float = 2.0, tie: float = 0.05,
                     max_residual: float = 0.10) -> Classification:
    """Least-squares classification of the single near-cusp feature in ``window``.

    A feature must have ``contrast`` between the density at both window ends
    and its lowest value, otherwise the window is featureless.
    """
    lo, hi = map(float, window)
    g = profile.grid
    sel = (g >= lo) & (g <= hi)
    x = g[sel]
    y = profile.density(x) if getattr(profile, "has_exact_density", False) else profile.rho[sel]
    if x.size < 8:
        raise BadFit("too few samples in window")
    scale = float(y.max())
    kmin = int(np.argmin(y))
    ymin = float(y[kmin])
    if min(y[0], y[-1]) < contrast * ymin or kmin in (0, x.size - 1):
        raise BadFit("no near-cusp feature in window")
    width = hi - lo
    c0 = float(x[kmin])
    far = np.abs(x - c0) > 0.05 * width
    g0 = np.median((2 * np.pi * y[far] / (SQRT3 * np.abs(x[far] - c0) ** (1 / 3))) ** 0.75)
    g0 = float(max(g0, 1e-6))
    fits = {}
    fits["cusp"] = _fit("cusp", x, y, scale, [c0, np.log(g0)])
    zero = np.nonzero(y <= 1e-8 * scale)[0]
    if zero.size:
        d0 = max(float(x[zero[-1]] - x[zero[0]]), 1e-3 * width)
        ep0 = float(x[zero[-1]])
    else:
        d0, ep0 = 1e-4 * width, c0
    fits["edge"] = _fit("edge", x, y, scale, [ep0, np.log(d0), np.log(g0)])
    fits["min"] = _fit("min", x, y, scale, [c0, np.log(max(ymin, 1e-6 * scale)), np.log(g0)])
    residuals = {k: v[1] for k, v in fits.items()}
    best = min(residuals, key=residuals.get)
    if residuals["cusp"] <= (1 + tie) * residuals[best]:
        best = "cusp"
    model, res = fits[best]
    if res > max_residual:
        raise BadFit(f"best residual {res:.3g} exceeds {max_residual}")
    return Classification(model, res, residuals)
