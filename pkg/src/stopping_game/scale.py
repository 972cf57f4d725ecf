"""Scale functions of the jump-diffusion and the fluctuation identities built on them.

Every scale-type object is an exponential sum over the roots of
``psi(s) = q``: ``W^(q)(x) = sum_i exp(theta_i x) / psi'(theta_i)`` for
``x >= 0``.  Integrals of exponential sums (``Z``, the composite ``W`` and the
reward integral ``Gamma`` for puts) are evaluated term by term in closed form.

All evaluation functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import DomainError
from .levy_model import LevyModel, _polynomial, equation_roots, laplace_exponent, phi
from .quadrature import adaptive_simpson

__all__ = [
    "ExpSum", "ZFunction", "scale_function", "z_function",
    "w", "w_prime", "z", "z_prime", "script_w", "gamma_integral",
    "exit_down_one_sided", "exit_down_two_sided", "exit_up_overshoot_laplace",
    "resolvent_two_sided",
]


def _scalar_or_array(out, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(np.real(out))
    return np.real(out)


def _exprel(z):
    """``(exp(z) - 1) / z`` with the removable singularity filled in."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def _exp_divided_difference(p, r, x, shift=0.0):
    """``(exp(p x) - exp(r x)) / (p - r) * exp(-shift x)`` without cancellation.

    Symmetric in ``p`` and ``r``; the larger rate is factored out so the
    ``exprel`` argument is never positive.
    """
    p, r = np.broadcast_arrays(np.asarray(p), np.asarray(r))
    swap = np.real(p) > np.real(r)
    hi = np.where(swap, p, r)
    lo = np.where(swap, r, p)
    return np.exp((hi - shift) * x) * x * _exprel((lo - hi) * x)


@dataclass(frozen=True)
class ExpSum:
    """``x -> sum_i residue_i exp(root_i x)`` on ``x >= 0``, zero on ``x < 0``.

    ``at_zero`` pins the value at the origin to its exact limit (``0`` for
    unbounded variation, ``1/mu`` for bounded variation) instead of relying
    on the numerical cancellation of the residues.
    """

    roots: np.ndarray = field(repr=False)
    residues: np.ndarray = field(repr=False)
    q: float
    at_zero: float

    @classmethod
    def from_model(cls, model: LevyModel, q: float) -> "ExpSum":
        rs = equation_roots(model, q)
        roots = rs.roots
        # psi - q = P / (beta + s), so 1/psi'(root) = (beta + root) / P'(root); this stays
        # accurate for a root sitting next to the pole
        dpoly = _polynomial(model, q).deriv()
        residues = (roots + model.beta) / dpoly(roots) if model.alpha > 0 else 1.0 / dpoly(roots)
        if np.all(roots.imag == 0):
            roots, residues = roots.real.copy(), np.real(residues).copy()
        at_zero = 0.0 if model.nu > 0 else 1.0 / model.mu
        return cls(roots=roots, residues=residues, q=float(q), at_zero=at_zero)

    @property
    def dominant(self) -> float:
        return float(np.max(np.real(self.roots)))

    def scaled(self, x, shift: float):
        """``W(x) exp(-shift x)``; finite for large ``x`` when ``shift`` dominates."""
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 0.0)[..., None]
        val = np.real(np.sum(self.residues * np.exp((self.roots - shift) * xs), axis=-1))
        val = np.where(x == 0, self.at_zero, val)
        return np.where(x < 0, 0.0, val)

    def __call__(self, x):
        return _scalar_or_array(self.scaled(x, 0.0), x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 0.0)[..., None]
        val = np.real(np.sum(self.residues * self.roots * np.exp(self.roots * xs), axis=-1))
        return _scalar_or_array(np.where(x < 0, 0.0, val), x)

    def laplace_integral(self, theta: float, x):
        """``int_0^x exp(-theta u) W(u) du`` for ``x >= 0`` (zero for ``x <= 0``)."""
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 0.0)[..., None]
        val = np.real(np.sum(self.residues * xs * _exprel((self.roots - theta) * xs), axis=-1))
        return _scalar_or_array(np.where(x <= 0, 0.0, val), x)


@dataclass(frozen=True)
class ZFunction:
    """``Z^(r)(x; theta) = e^{theta x}(1 + (r - psi(theta)) int_0^x e^{-theta u} W^(r)(u) du)``."""

    underlying: ExpSum
    theta: float
    r: float
    coefficient: float  # r - psi(theta)

    @property
    def dominant(self) -> float:
        return max(self.theta, self.underlying.dominant)

    def scaled(self, x, shift: float):
        """``Z(x) exp(-shift x)``."""
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 0.0)[..., None]
        W = self.underlying
        terms = W.residues * _exp_divided_difference(W.roots, self.theta, xs, shift)
        pos = np.exp((self.theta - shift) * np.maximum(x, 0.0)) + self.coefficient * np.real(
            np.sum(terms, axis=-1))
        neg = np.exp((self.theta - shift) * np.minimum(x, 0.0))
        return np.where(x <= 0, neg, pos)

    def __call__(self, x):
        return _scalar_or_array(self.scaled(x, 0.0), x)

    def derivative(self, x):
        """``theta Z(x) + (r - psi(theta)) W^(r)(x)``; undefined at ``0`` if ``W(0) > 0``."""
        x = np.asarray(x, dtype=float)
        if self.underlying.at_zero > 0 and np.any(x == 0):
            raise DomainError("Z' has a kink at x = 0 for bounded variation")
        val = self.theta * self.scaled(x, 0.0) + self.coefficient * self.underlying.scaled(x, 0.0)
        return _scalar_or_array(val, x)

    def log(self, x):
        """``log Z(x)``; exact ``theta x`` on ``x <= 0``, scaled evaluation above."""
        x = np.asarray(x, dtype=float)
        m = self.dominant
        xp = np.maximum(x, 0.0)
        pos = m * xp + np.log(self.scaled(xp, m))
        return np.where(x <= 0, self.theta * x, pos)

    def ratio(self, x1, x2):
        """``Z(x1) / Z(x2)`` evaluated in log space."""
        out = np.exp(self.log(x1) - self.log(x2))
        return _scalar_or_array(out, x1, x2)


@lru_cache(maxsize=1024)
def scale_function(model: LevyModel, q: float) -> ExpSum:
    """The ``q``-scale function ``W^(q)`` as an :class:`ExpSum` (cached)."""
    return ExpSum.from_model(model, float(q))


@lru_cache(maxsize=1024)
def z_function(model: LevyModel, r: float, theta: float) -> ZFunction:
    if not r > 0:
        raise DomainError(f"r must be > 0, got {r}")
    if theta < 0:
        raise DomainError(f"theta must be >= 0, got {theta}")
    return ZFunction(underlying=scale_function(model, r), theta=float(theta), r=float(r),
                     coefficient=float(r - laplace_exponent(model, theta)))


def w(model: LevyModel, q: float, x):
    """``W^(q)(x)``."""
    return scale_function(model, q)(x)


def w_prime(model: LevyModel, q: float, x):
    if np.any(np.asarray(x) <= 0):
        raise DomainError("W' is evaluated on x > 0 only")
    return scale_function(model, q).derivative(x)


def z(model: LevyModel, r: float, theta: float, x):
    """``Z^(r)(x; theta)``; equal to ``exp(theta x)`` for ``x <= 0``."""
    return z_function(model, r, theta)(x)


def z_prime(model: LevyModel, r: float, theta: float, x):
    """Derivative of ``Z^(r)(.; theta)``.

    With ``theta = Phi(q)`` and ``r = q + lam`` this is
    ``Phi(q) Z + lam W^(q+lam)``.
    """
    return z_function(model, r, theta).derivative(x)


def _convolution(Wq: ExpSum, Wr: ExpSum, x, b):
    """``int_0^x W^(r)(x-u) W^(q)(u+b) du`` for ``x >= 0``, ``b >= 0``."""
    xs = np.maximum(np.asarray(x, dtype=float), 0.0)[..., None, None]
    bs = np.asarray(b, dtype=float)[..., None, None]
    ci = Wq.residues[:, None]
    ti = Wq.roots[:, None]
    dj = Wr.residues[None, :]
    ej = Wr.roots[None, :]
    terms = ci * dj * np.exp(ti * bs) * _exp_divided_difference(ti, ej, xs)
    return np.real(np.sum(terms, axis=(-2, -1)))


def script_w(model: LevyModel, q: float, lam: float, b, x):
    """``W^(q)(x+b) + lam int_0^x W^(q+lam)(x-u) W^(q)(u+b) du``."""
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    Wq = scale_function(model, q)
    Wr = scale_function(model, q + lam)
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    x, b = np.broadcast_arrays(x, b)
    # for b < 0 the integrand vanishes on u < -b; shift the variable
    x_eff = np.where(b < 0, x + b, x)
    b_eff = np.maximum(b, 0.0)
    conv = _convolution(Wq, Wr, np.maximum(x_eff, 0.0), b_eff)
    val = Wq.scaled(x + b, 0.0) + np.where(x_eff > 0, lam * conv, 0.0)
    val = np.where(x <= 0, Wq.scaled(x + b, 0.0), val)
    return _scalar_or_array(val, x, b)


def gamma_integral(model: LevyModel, q: float, lam: float, reward, x, l):
    """``Gamma(x; l) = int_0^{l-x} f(u+x) W^(q+lam)(u) du``, zero when ``x >= l``.

    Closed form when the reward provides ``integrate_exp`` (puts do);
    otherwise adaptive Simpson to ``1e-10`` absolute.
    """
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    Wr = scale_function(model, q + lam)
    x = np.asarray(x, dtype=float)
    l = np.asarray(l, dtype=float)
    x, l = np.broadcast_arrays(x, l)
    L = np.maximum(l - x, 0.0)
    # x only matters where the interval is non-empty; keep exp(x) finite elsewhere
    x_safe = np.where(L > 0, x, 0.0)
    closed = reward.integrate_exp(x_safe[..., None], L[..., None], Wr.roots)
    if closed is not None:
        val = np.real(np.sum(Wr.residues * closed, axis=-1))
    else:
        flat = [
            adaptive_simpson(lambda u, x0=x0: reward.f(u + x0) * Wr(u), 0.0, float(L0))
            if L0 > 0 else 0.0
            for x0, L0 in zip(x_safe.ravel(), L.ravel())
        ]
        val = np.array(flat).reshape(x.shape)
    val = np.where(L > 0, val, 0.0)
    return _scalar_or_array(val, x, l)


def exit_down_one_sided(model: LevyModel, q: float, x):
    """``E_x[e^{-q tau_0^-}; tau_0^- < inf] = exp(-Phi(q) x)`` for ``x >= 0``."""
    if np.any(np.asarray(x) < 0):
        raise DomainError("x must be >= 0")
    return _scalar_or_array(np.exp(-phi(model, q) * np.asarray(x, dtype=float)), x)


def _check_wedge(x, b):
    if b <= 0:
        raise DomainError(f"b must be > 0, got {b}")
    if np.any(np.asarray(x) < 0) or np.any(np.asarray(x) > b):
        raise DomainError("x must lie in [0, b]")


def exit_down_two_sided(model: LevyModel, q: float, x, b: float):
    """``E_x[e^{-q tau_0^-}; tau_b^+ > tau_0^-] = W(b-x) / W(b)``."""
    _check_wedge(x, b)
    W = scale_function(model, q)
    return _scalar_or_array(W.scaled(b - np.asarray(x, dtype=float), 0.0) / W(b), x)


def exit_up_overshoot_laplace(model: LevyModel, q: float, x, b: float, theta: float):
    """``E_x[e^{-q tau_b^+ - theta (X - b)}; tau_0^- > tau_b^+]``."""
    _check_wedge(x, b)
    if theta < 0:
        raise DomainError(f"theta must be >= 0, got {theta}")
    W = scale_function(model, q)
    Z = z_function(model, q, theta)
    y = b - np.asarray(x, dtype=float)
    val = Z.scaled(y, 0.0) - Z(b) / W(b) * W.scaled(y, 0.0)
    return _scalar_or_array(val, x)


def resolvent_two_sided(model: LevyModel, q: float, f, x: float, a: float, b: float,
                        tol: float = 1e-10) -> float:
    """``E_x[int_0^{tau_a^- ^ tau_b^+} e^{-qs} f(X_s) ds]`` via its scale-function density.

    ``f`` is a callable or an object with an ``f`` method (a reward).
    """
    if not a < b:
        raise DomainError("need a < b")
    if x <= a or x >= b:
        return 0.0
    func = f.f if hasattr(f, "f") else f
    W = scale_function(model, q)
    ratio = W(b - x) / W(b - a)

    def integrand(u):
        return func(b - u) * (ratio * W(b - a - u) - W(b - x - u))

    # W(b-x-u) switches off at u = b - x
    return (adaptive_simpson(integrand, 0.0, b - x, tol)
            + adaptive_simpson(integrand, b - x, b - a, tol))
