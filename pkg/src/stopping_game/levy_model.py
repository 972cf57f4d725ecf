"""Spectrally positive jump-diffusion with exponential upward jumps.

The process is

    X_t = X_0 - mu t + nu B_t + sum_{n <= M_t} Z_n,

with ``M`` a Poisson process of rate ``alpha`` and ``Z_n ~ Exp(beta)``.  Its
Laplace exponent ``psi(s) = log E[exp(-s X_1)]`` is rational in ``s``, so the
equation ``psi(s) = q`` reduces to a polynomial and every scale function is a
finite exponential sum over its roots.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import DomainError, NearlyRepeatedRoots

ROOT_SEPARATION = 1e-8


class VariationClass(enum.Enum):
    BOUNDED = "bounded"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LevyModel:
    """Parameters of the jump-diffusion.

    Parameters
    ----------
    mu : float
        Downward drift rate.  Must be positive when ``nu == 0``, otherwise
        the process would be a subordinator.
    nu : float
        Brownian volatility, ``nu >= 0``.
    alpha : float
        Intensity of the upward jumps, ``alpha >= 0``.
    beta : float
        Rate of the exponential jump sizes, ``beta > 0``.
    """

    mu: float
    nu: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("mu", "nu", "alpha", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.nu < 0:
            raise DomainError(f"nu must be >= 0, got {self.nu}")
        if self.alpha < 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise DomainError(f"beta must be > 0, got {self.beta}")
        if self.nu == 0 and self.mu <= 0:
            raise DomainError("nu = 0 requires mu > 0 (subordinators are excluded)")

    @property
    def variation(self) -> VariationClass:
        return VariationClass.UNBOUNDED if self.nu > 0 else VariationClass.BOUNDED

    @property
    def bounded_variation(self) -> bool:
        return self.nu == 0

    def psi(self, s):
        return laplace_exponent(self, s)

    def dpsi(self, s):
        return laplace_exponent_derivative(self, s)

    def phi(self, q: float) -> float:
        return phi(self, q)

    def roots(self, q: float) -> "RootSet":
        return equation_roots(self, q)


@dataclass(frozen=True)
class RootSet:
    """All roots of ``psi(s) = q`` (the pole ``s = -beta`` excluded)."""

    q: float
    roots: np.ndarray = field(repr=False)
    phi: float

    def __len__(self):
        return len(self.roots)


def _check_domain(model: LevyModel, s):
    s_arr = np.asarray(s)
    if np.isrealobj(s_arr) and np.any(s_arr <= -model.beta):
        raise DomainError(f"psi is undefined for s <= -beta = {-model.beta}")


def _psi_raw(model: LevyModel, s):
    return (model.mu * s + 0.5 * model.nu**2 * s * s
            + model.alpha * (model.beta / (model.beta + s) - 1.0))


def _dpsi_raw(model: LevyModel, s):
    return model.mu + model.nu**2 * s - model.alpha * model.beta / (model.beta + s) ** 2


def laplace_exponent(model: LevyModel, s):
    """``psi(s) = mu s + nu^2 s^2 / 2 + alpha (beta / (beta + s) - 1)``.

    Accepts scalars or arrays; complex arguments are evaluated by analytic
    continuation (used to check roots).
    """
    _check_domain(model, s)
    return _psi_raw(model, s)


def laplace_exponent_derivative(model: LevyModel, s):
    _check_domain(model, s)
    return _dpsi_raw(model, s)


def phi(model: LevyModel, q: float) -> float:
    """Right inverse ``Phi(q) = sup{s >= 0 : psi(s) = q}``.

    ``psi`` is convex with ``psi(0) = 0`` and ``psi(s) -> inf``, so doubling an
    upper bracket and bisecting is unconditionally safe.
    """
    return _phi_cached(model, float(q))


@lru_cache(maxsize=1024)
def _phi_cached(model: LevyModel, q: float) -> float:
    if not q > 0:
        raise DomainError(f"q must be > 0, got {q}")
    lo, hi = 0.0, 1.0
    while _psi_raw(model, hi) <= q:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _psi_raw(model, mid) > q:
            hi = mid
        else:
            lo = mid
    s = 0.5 * (lo + hi)
    step = (_psi_raw(model, s) - q) / _dpsi_raw(model, s)
    if abs(step) < hi - lo + 1e-12:
        s -= step
    return s


def _polynomial(model: LevyModel, q: float) -> np.polynomial.Polynomial:
    """Numerator of ``psi(s) - q`` after clearing the pole at ``-beta``."""
    P = np.polynomial.Polynomial
    quad = P([-q, model.mu, 0.5 * model.nu**2])
    if model.alpha == 0:
        return quad.trim()
    return ((quad - model.alpha) * P([model.beta, 1.0]) + model.alpha * model.beta).trim()


def equation_roots(model: LevyModel, q: float) -> RootSet:
    """Every root of ``psi(s) = q``, each polished by one Newton step.

    Raises
    ------
    NearlyRepeatedRoots
        If two roots are closer than ``1e-8``.
    """
    return _roots_cached(model, float(q))


@lru_cache(maxsize=1024)
def _roots_cached(model: LevyModel, q: float) -> RootSet:
    if not q > 0:
        raise DomainError(f"q must be > 0, got {q}")
    poly = _polynomial(model, q)
    dpoly = poly.deriv()
    raw = poly.roots().astype(complex)
    polished = []
    for s in raw:
        # Newton on the polynomial (no pole); keep the step only if it helps
        d = dpoly(s)
        if d != 0:
            cand = s - poly(s) / d
            if abs(poly(cand)) < abs(poly(s)):
                s = cand
        if abs(s.imag) < 1e-12 * max(1.0, abs(s)):
            s = complex(s.real, 0.0)
        polished.append(s)
    roots = np.array(sorted(polished, key=lambda z: (z.real, z.imag)))
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if abs(roots[i] - roots[j]) <= ROOT_SEPARATION:
                raise NearlyRepeatedRoots(
                    f"roots {roots[i]} and {roots[j]} of psi(s) = {q} nearly coincide")
    phi_q = phi(model, q)
    # the polished Phi from bisection is at least as accurate; keep the two consistent
    k = int(np.argmin(np.abs(roots - phi_q)))
    roots[k] = complex(phi_q, 0.0)
    return RootSet(q=q, roots=roots, phi=phi_q)


def variation_class(model: LevyModel) -> VariationClass:
    return model.variation
