"""Stopping rewards and the auxiliary functions whose sign changes bound the thresholds.

A reward ``f`` is strictly decreasing, continuously differentiable and
concave on the real line, and changes sign at a single point ``x_bar``.
The put payoff ``K - exp(x)`` is the concrete instance used throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NoFiniteRoot
from .levy_model import LevyModel, phi
from .scale import _exprel, scale_function

NEG_INF = -math.inf
"""Sentinel for a sign-change point that does not exist on the real line."""

_FD_STEP = 1e-5


class Reward:
    """Base class for rewards.

    Subclasses implement :meth:`f`; :meth:`df` and :meth:`d2f` fall back to
    central finite differences when not overridden.
    """

    def f(self, x):
        raise NotImplementedError

    def df(self, x):
        h = _FD_STEP
        return (self.f(x + h) - self.f(x - h)) / (2 * h)

    def d2f(self, x):
        h = _FD_STEP
        return (self.f(x + h) - 2 * self.f(x) + self.f(x - h)) / (h * h)

    def __call__(self, x):
        return self.f(x)

    @property
    def x_bar(self) -> float:
        return _decreasing_root(self.f, 0.0)

    def integrate_exp(self, x, length, rates):
        """``int_0^length f(u + x) exp(rate u) du`` in closed form, or ``None``."""
        return None


@dataclass(frozen=True)
class Put(Reward):
    """Put payoff ``K - exp(x)`` on the log price."""

    strike: float

    def __post_init__(self):
        if not self.strike > 0:
            raise DomainError(f"strike must be > 0, got {self.strike}")

    def f(self, x):
        return self.strike - np.exp(x)

    def df(self, x):
        return -np.exp(x)

    def d2f(self, x):
        return -np.exp(x)

    @property
    def x_bar(self) -> float:
        return math.log(self.strike)

    def integrate_exp(self, x, length, rates):
        return (self.strike * length * _exprel(rates * length)
                - np.exp(x) * length * _exprel((rates + 1.0) * length))


@dataclass(frozen=True)
class GameRewards:
    """Rewards of the continuously observing player C and the periodically observing player P."""

    reward_c: Reward
    reward_p: Reward

    def __post_init__(self):
        if isinstance(self.reward_c, Put) and isinstance(self.reward_p, Put):
            if not self.reward_c.strike < self.reward_p.strike:
                raise DomainError("player C's strike must be strictly below player P's")
            return
        grid = np.linspace(min(self.reward_c.x_bar, self.reward_p.x_bar) - 10,
                           max(self.reward_c.x_bar, self.reward_p.x_bar) + 10, 401)
        if not np.all(self.reward_c.f(grid) < self.reward_p.f(grid)):
            raise DomainError("f_c < f_p must hold everywhere")

    @classmethod
    def puts(cls, k_c: float, k_p: float) -> "GameRewards":
        return cls(Put(k_c), Put(k_p))


def _decreasing_root(func, upper_guess: float, tol: float = 1e-13):
    """Sign-change point of a decreasing function, or ``NEG_INF`` if it stays negative."""
    hi = upper_guess
    step = 1.0
    while func(hi) > 0:
        hi += step
        step *= 2
        if step > 1e6:
            raise NoFiniteRoot("function stays positive")
    lo = hi - 1.0
    step = 1.0
    while func(lo) <= 0:
        lo -= step
        step *= 2
        if step > 2.0**60:
            return NEG_INF
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if func(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def x_bar(reward: Reward) -> float:
    return reward.x_bar


def h_c_o(model: LevyModel, q: float, reward_c: Reward, x):
    """``Phi(q) f_c(x) + f_c'(x)``: derivative sign of the single-player value in the threshold."""
    return phi(model, q) * reward_c.f(x) + reward_c.df(x)


def a_underbar(model: LevyModel, q: float, reward_c: Reward) -> float:
    """Optimal single-player threshold, the sign change of :func:`h_c_o`.

    Raises
    ------
    NoFiniteRoot
        If ``h_c_o`` never becomes positive (no optimal stopping time).
    """
    p = phi(model, q)
    if isinstance(reward_c, Put):
        return math.log(p * reward_c.strike / (1.0 + p))
    root = _decreasing_root(lambda x: h_c_o(model, q, reward_c, x), reward_c.x_bar)
    if root == NEG_INF:
        raise NoFiniteRoot("h_c^o has no finite root; player C never stops alone")
    return root


def _c_weight(model: LevyModel, q: float, lam: float) -> float:
    """``Phi(q) + lam W^(q+lam)(0)``."""
    if not lam > 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    return phi(model, q) + lam * scale_function(model, q + lam).at_zero


def h_c(model: LevyModel, q: float, lam: float, reward_c: Reward, x):
    return _c_weight(model, q, lam) * reward_c.f(x) + reward_c.df(x)


def h_p(model: LevyModel, q: float, reward_p: Reward, x):
    return phi(model, q) * reward_p.f(x) + reward_p.df(x)


def x_under(model: LevyModel, q: float, lam: float, reward: Reward, which: str) -> float:
    """Sign change of ``h_c`` (``which='c'``) or ``h_p`` (``which='p'``).

    Returns :data:`NEG_INF` when ``h_p`` has no finite root.  A missing root
    of ``h_c`` means ``a_underbar = -inf`` and raises :class:`NoFiniteRoot`.
    """
    if which == "c":
        weight = _c_weight(model, q, lam)
        if isinstance(reward, Put):
            return math.log(weight * reward.strike / (1.0 + weight))
        root = _decreasing_root(lambda x: h_c(model, q, lam, reward, x), reward.x_bar)
        if root == NEG_INF:
            raise NoFiniteRoot("h_c has no finite root")
        return root
    if which == "p":
        if isinstance(reward, Put):
            p = phi(model, q)
            return math.log(reward.strike * p / (1.0 + p))
        return _decreasing_root(lambda x: h_p(model, q, reward, x), reward.x_bar)
    raise ValueError(f"which must be 'c' or 'p', got {which!r}")


def v_single_player(model: LevyModel, q: float, reward_c: Reward, x, a: float):
    """Value of stopping at the first passage below ``a`` with no opponent."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= a, reward_c.f(x), np.exp(phi(model, q) * (a - x)) * reward_c.f(a))
    return float(out) if out.ndim == 0 else out
