"""Bernstein functions of subordinator families and the verlog-type bound.

phi is the Laplace exponent: E exp(-lam S_t) = exp(-t phi(lam)). Families
follow the usual catalogue: stable lam^{alpha/d_w} (alpha = d_w reproduces the
identity), finite mixtures of stables, stable with drift, relativistic,
log-perturbed stable, and a custom callable. Subordination itself acts either
spectrally (operators module) or at path level (montecarlo module).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .geometry import D_W

FAMILIES = (
    "identity-drift",
    "stable",
    "stable-mixture",
    "stable-with-drift",
    "relativistic",
    "log-stable",
    "custom",
)


@dataclass(frozen=True)
class SubordinatorSpec:
    family: str
    alpha: float = D_W          # stable index, gamma = alpha / d_w
    drift: float = 0.0          # b >= 0 (stable-with-drift, identity-drift)
    mass: float = 1.0           # mu > 0 (relativistic)
    beta: float = 0.0           # log exponent (log-stable)
    mixture: tuple = ()         # alphas of a stable mixture
    custom_phi: object = None   # callable lam -> phi(lam)

    def __post_init__(self):
        f = self.family
        if f not in FAMILIES:
            raise ValueError(f"unknown subordinator family {f!r}")
        if f == "identity-drift":
            b = self.drift if self.drift > 0 else 1.0
            object.__setattr__(self, "drift", b)
        elif f == "stable":
            if not (0 < self.alpha <= D_W):
                raise ValueError("stable requires alpha in (0, d_w]")
        elif f == "stable-mixture":
            if not self.mixture:
                raise ValueError("mixture requires a nonempty alpha list")
            if any(not (0 < a < D_W) for a in self.mixture):
                raise ValueError("mixture alphas must lie in (0, d_w)")
            object.__setattr__(self, "mixture", tuple(float(a) for a in self.mixture))
        elif f == "stable-with-drift":
            if not (0 < self.alpha < D_W) or self.drift <= 0:
                raise ValueError("stable-with-drift requires alpha in (0, d_w), b > 0")
        elif f == "relativistic":
            if not (0 < self.alpha < D_W) or self.mass <= 0:
                raise ValueError("relativistic requires alpha in (0, d_w), mu > 0")
        elif f == "log-stable":
            a, b = self.alpha, self.beta
            ok = 0 < a < D_W and (-a < b < 0 or 0 < b < D_W - a)
            if not ok:
                raise ValueError("log-stable requires alpha in (0,d_w), "
                                 "beta in (-alpha,0) or (0, d_w - alpha)")
        elif f == "custom":
            if not callable(self.custom_phi):
                raise ValueError("custom family requires a callable phi")

    @property
    def gamma(self) -> float:
        """Stable exponent alpha / d_w."""
        return self.alpha / D_W

    def phi(self, lam):
        """Laplace exponent, vectorized over lam >= 0."""
        lam = np.asarray(lam, dtype=float)
        f = self.family
        if f == "identity-drift":
            out = self.drift * lam
        elif f == "stable":
            out = np.power(lam, self.gamma)
        elif f == "stable-mixture":
            out = sum(np.power(lam, a / D_W) for a in self.mixture)
        elif f == "stable-with-drift":
            out = self.drift * lam + np.power(lam, self.gamma)
        elif f == "relativistic":
            m = self.mass ** (D_W / self.alpha)
            out = np.power(lam + m, self.gamma) - self.mass
        elif f == "log-stable":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.power(lam, self.gamma) * np.power(np.log1p(lam),
                                                           self.beta / D_W)
            out = np.where(lam == 0.0, 0.0, out)   # 0 * inf at the origin
        else:
            out = np.asarray([self.custom_phi(x) for x in np.atleast_1d(lam)])
            out = out.reshape(np.shape(lam))
        return out if out.shape else float(out)

    def bernstein_sanity(self, lam_max: float = 100.0, npts: int = 1000) -> bool:
        """Numeric check: phi(0) = 0, phi nondecreasing and concave on a grid."""
        grid = np.linspace(0.0, lam_max, npts)
        vals = np.atleast_1d(self.phi(grid))
        if abs(vals[0]) > 1e-12:
            return False
        d1 = np.diff(vals)
        if np.any(d1 < -1e-10):
            return False
        return not np.any(np.diff(d1) > 1e-9)


def bernstein_eval(spec: SubordinatorSpec, lam) -> float:
    if np.any(np.asarray(lam) < 0):
        raise ValueError("lam must be non-negative")
    return spec.phi(lam)


def verlog_bound(spec: SubordinatorSpec, t: float) -> float:
    """Numeric t * int_0^1 phi(lam)/lam dlam + e^{-1} (adaptive quadrature)."""
    if t < 0:
        raise ValueError("t must be non-negative")

    def integrand(lam):
        return float(spec.phi(lam)) / lam

    val, err = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=200)
    if not np.isfinite(val) or (val > 0 and err / val > 1e-8):
        raise ValueError("phi(lam)/lam is not integrable near 0 for this family")
    return t * val + math.exp(-1.0)
