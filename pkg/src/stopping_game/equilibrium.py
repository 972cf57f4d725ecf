"""Threshold strategies, first-order conditions and the Nash equilibrium of the game.

Player C observes the process continuously and stops at the first passage
below ``a``; player P observes it at the arrival times of an independent
rate-``lam`` Poisson process and stops at the first observation below ``l``.
The first to stop collects their reward, the other gets nothing.

Notation follows the code, not any external text: ``I(a; l)`` is the
first-order function of player C (its root is the best response
``a~(l)``) and ``J(l; a)`` the one of player P (root ``l~(a)``).  An
equilibrium is a root of ``l -> J(l; a~(l))``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError, NoBestResponse, NoBracket, NoSignChange
from .levy_model import LevyModel, phi
from .rewards import GameRewards, Put, a_underbar, x_under
from .scale import ZFunction, gamma_integral, scale_function, script_w, z_function

SCAN_POINTS = 2000
SCAN_EPS = 1e-9
_MAX_BISECTIONS = 200


def _out(value, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(value)
    return np.asarray(value, dtype=float)


@dataclass(frozen=True)
class GameSpec:
    """Model, discount rate, observation rate and rewards of one game instance."""

    model: LevyModel
    q: float
    lam: float
    rewards: GameRewards

    def __post_init__(self):
        if not self.q > 0:
            raise DomainError(f"q must be > 0, got {self.q}")
        if not self.lam > 0:
            raise DomainError(f"lambda must be > 0, got {self.lam}")
        # fails with NoFiniteRoot when player C would never stop alone
        a_underbar(self.model, self.q, self.rewards.reward_c)

    @classmethod
    def case_study(cls, **overrides) -> "GameSpec":
        """The put case study: ``nu=0.2, alpha=1, beta=2, q=0.05, mu=0.31333, K_c=50, K_p=60, lam=1``."""
        params = dict(mu=0.31333, nu=0.2, alpha=1.0, beta=2.0, q=0.05, lam=1.0,
                      k_c=50.0, k_p=60.0)
        params.update(overrides)
        return cls(model=LevyModel(params["mu"], params["nu"], params["alpha"], params["beta"]),
                   q=params["q"], lam=params["lam"],
                   rewards=GameRewards.puts(params["k_c"], params["k_p"]))

    def with_lambda(self, lam: float) -> "GameSpec":
        return replace(self, lam=lam)

    def with_rewards(self, rewards: GameRewards) -> "GameSpec":
        return replace(self, rewards=rewards)

    @property
    def f_c(self):
        return self.rewards.reward_c

    @property
    def f_p(self):
        return self.rewards.reward_p

    @cached_property
    def phi(self) -> float:
        return phi(self.model, self.q)

    @cached_property
    def W(self):
        """``W^(q+lam)``."""
        return scale_function(self.model, self.q + self.lam)

    @cached_property
    def Z(self) -> ZFunction:
        """``Z^(q+lam)(.; Phi(q))``."""
        return z_function(self.model, self.q + self.lam, self.phi)

    @cached_property
    def x_bar_c(self) -> float:
        return self.f_c.x_bar

    @cached_property
    def x_bar_p(self) -> float:
        return self.f_p.x_bar

    @cached_property
    def a_underbar(self) -> float:
        return a_underbar(self.model, self.q, self.f_c)

    @cached_property
    def x_under_c(self) -> float:
        return x_under(self.model, self.q, self.lam, self.f_c, "c")

    @cached_property
    def x_under_p(self) -> float:
        return x_under(self.model, self.q, self.lam, self.f_p, "p")

    def gamma(self, x, l):
        return gamma_integral(self.model, self.q, self.lam, self.f_p, x, l)

    def w_over_z(self, y):
        """``W^(q+lam)(y) / Z^(q+lam)(y; Phi(q))`` with the growth factored out."""
        m = self.Z.dominant
        return self.W.scaled(y, m) / self.Z.scaled(y, m)


@dataclass(frozen=True)
class Equilibrium:
    """Solved equilibrium thresholds and solver diagnostics."""

    a_star: float
    l_star: float
    i_residual: float
    j_residual: float
    all_roots: tuple
    pareto_minimal: bool
    brackets: tuple = field(default=(), repr=False)

    @property
    def unique(self) -> bool:
        return len(self.all_roots) == 1


# --- value functions of threshold strategies ---------------------------------------------------

def v_c(spec: GameSpec, x, a, l):
    """Player C's value of ``(tau_a^-, T_l^-)``.

    For ``l <= a`` the ratio formula reduces to the single-player value
    ``exp(Phi(q)(a-x)) f_c(a)``, so no branch is needed.
    """
    x, a, l = (np.asarray(v, dtype=float) for v in (x, a, l))
    val = np.where(x <= a, spec.f_c.f(x), spec.f_c.f(a) * spec.Z.ratio(l - x, l - a))
    return _out(val, x, a, l)


def v_p(spec: GameSpec, x, a, l):
    """Player P's value of ``(tau_a^-, T_l^-)``; zero for ``x <= a`` and for ``l <= a``."""
    x, a, l = (np.asarray(v, dtype=float) for v in (x, a, l))
    inner = spec.Z.ratio(l - x, l - a) * spec.gamma(a, l) - spec.gamma(x, l)
    val = np.where(x <= a, 0.0, spec.lam * inner)
    return _out(val, x, a, l)


def _check_finite_order(a, l, b):
    if np.any(np.asarray(b) < np.asarray(l)) or np.any(np.asarray(l) < np.asarray(a)):
        raise DomainError("finite-horizon values need b >= l >= a")


def _script_ratio(spec: GameSpec, x, a, l, b):
    Wb = lambda y: script_w(spec.model, spec.q, spec.lam, b - l, y)
    return Wb(l - x) / Wb(l - a)


def v_c_finite(spec: GameSpec, x, a, l, b):
    """Player C's value when the game is also killed at the first passage above ``b``."""
    _check_finite_order(a, l, b)
    x, a, l, b = (np.asarray(v, dtype=float) for v in (x, a, l, b))
    val = np.where(x <= a, spec.f_c.f(x), spec.f_c.f(a) * _script_ratio(spec, x, a, l, b))
    return _out(val, x, a, l, b)


def v_p_finite(spec: GameSpec, x, a, l, b):
    """Player P's value when the game is also killed at the first passage above ``b``."""
    _check_finite_order(a, l, b)
    x, a, l, b = (np.asarray(v, dtype=float) for v in (x, a, l, b))
    inner = _script_ratio(spec, x, a, l, b) * spec.gamma(a, l) - spec.gamma(x, l)
    val = np.where(x <= a, 0.0, spec.lam * inner)
    return _out(val, x, a, l, b)


# --- first-order functions -----------------------------------------------------------------------

def big_i(spec: GameSpec, a, l):
    """``I(a; l) = f_c'(a) + Phi f_c(a) + lam W^(q+lam)(l-a) v_c(l; a, l)``.

    Equals ``h_c(l)`` at ``a = l``.
    """
    a, l = np.asarray(a, dtype=float), np.asarray(l, dtype=float)
    fa = spec.f_c.f(a)
    val = spec.f_c.df(a) + spec.phi * fa + spec.lam * spec.w_over_z(l - a) * fa
    return _out(val, a, l)


def big_j(spec: GameSpec, l, a):
    """``J(l; a) = f_p(l) Z^(q+lam)(l-a; Phi(q)) - lam Gamma(a; l)``; ``J(a; a) = f_p(a)``."""
    l, a = np.asarray(l, dtype=float), np.asarray(a, dtype=float)
    val = spec.f_p.f(l) * spec.Z.scaled(l - a, 0.0) - spec.lam * spec.gamma(a, l)
    return _out(val, l, a)


def dv_c_da(spec: GameSpec, x, a, l):
    """Closed-form ``d v_c / d a``, valid for ``a < min(l, x)``."""
    if np.any(np.asarray(a) >= np.minimum(l, x)):
        raise DomainError("dv_c/da needs a < min(l, x)")
    return _out(spec.Z.ratio(np.asarray(l) - x, np.asarray(l) - a) * big_i(spec, a, l), x, a, l)


def dv_p_dl(spec: GameSpec, x, a, l):
    """Closed-form ``d v_p / d l`` for ``x >= a``, ``l > a``, ``l != x``."""
    x, a, l = (np.asarray(v, dtype=float) for v in (x, a, l))
    if np.any(x < a) or np.any(l <= a) or np.any(l == x):
        raise DomainError("dv_p/dl needs x >= a, l > a and l != x")
    ratio = spec.Z.ratio(l - x, l - a)
    weight = ratio * spec.W.scaled(l - a, 0.0) - spec.W.scaled(l - x, 0.0)
    gap = spec.f_p.f(l) - v_p(spec, l, a, l)
    return _out(spec.lam * weight * gap, x, a, l)


# --- best responses ------------------------------------------------------------------------------

def _bisect_vectorized(func, lo, hi, positive_at_lo=True):
    """Bisection on elementwise brackets; ``func`` must change sign on each."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        active = (mid != lo) & (mid != hi)
        if not np.any(active):
            break
        val = func(mid)
        go_right = (val > 0) if positive_at_lo else (val < 0)
        lo = np.where(active & go_right, mid, lo)
        hi = np.where(active & ~go_right, mid, hi)
    return 0.5 * (lo + hi)


def _best_response_a(spec: GameSpec, l):
    l = np.asarray(l, dtype=float)
    lo = np.full(l.shape, spec.x_under_c)
    hi = np.maximum(np.minimum(spec.x_bar_c, l), lo)
    return _bisect_vectorized(lambda a: big_i(spec, a, l), lo, hi)


def best_response_a(spec: GameSpec, l):
    """Player C's best response ``a~(l)``, the unique root of ``I(.; l)`` on ``[x_c, min(x_bar_c, l)]``.

    Raises
    ------
    NoBestResponse
        If ``l`` lies below the lower bound ``x_under_c``.
    """
    if np.any(np.asarray(l) < spec.x_under_c):
        raise NoBestResponse(f"no best response for l < x_under_c = {spec.x_under_c:.12g}")
    return _out(_best_response_a(spec, l), l)


def best_response_l(spec: GameSpec, a):
    """Player P's best response ``l~(a)``, the unique root of ``J(.; a)`` on ``[a, x_bar_p]``.

    When ``h_p`` has a finite root the bracket starts at ``max(a, x_under_p)``,
    where ``J`` is still positive.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a >= spec.x_bar_p):
        raise DomainError("best response of P needs a < x_bar_p")
    lo = np.maximum(a, spec.x_under_p)
    hi = np.full(a.shape, spec.x_bar_p)
    return _out(_bisect_vectorized(lambda l: big_j(spec, l, a), lo, hi), a)


# --- equilibrium ---------------------------------------------------------------------------------

def _equilibrium_gap(spec: GameSpec, l):
    return big_j(spec, l, _best_response_a(spec, l))


def solve_equilibrium(spec: GameSpec, grid_size: int = SCAN_POINTS,
                      eps: float = SCAN_EPS) -> Equilibrium:
    """Scan ``l -> J(l; a~(l))`` and return the equilibrium with the smallest root.

    The smallest root is the Pareto-superior equilibrium; every resolvable
    root of the grid is recorded in ``all_roots``.

    Raises
    ------
    NoSignChange
        If the end-point signs are wrong or no sign change is found.
    """
    lo_end, hi_end = spec.x_under_c, spec.x_bar_p
    start = float(_equilibrium_gap(spec, lo_end))
    end = float(_equilibrium_gap(spec, hi_end))
    if not (start > 0 and end < 0):
        raise NoSignChange(f"end-point signs J(x_c)={start:.3g}, J(x_bar_p)={end:.3g}")
    grid = np.linspace(lo_end + eps, hi_end - eps, grid_size)
    gap = _equilibrium_gap(spec, grid)
    sign = np.sign(gap)
    brackets = []
    for i in np.flatnonzero(sign[:-1] * sign[1:] <= 0):
        if sign[i] == 0 and i > 0 and sign[i - 1] * sign[i + 1] > 0:
            continue
        brackets.append((float(grid[i]), float(grid[i + 1])))
    if not brackets:
        raise NoSignChange("no sign change of J(l; a~(l)) on the scan grid")
    roots = []
    for lo, hi in brackets:
        g_lo = _equilibrium_gap(spec, lo)
        if g_lo == 0:
            roots.append(lo)
            continue
        root = float(_bisect_vectorized(lambda l: _equilibrium_gap(spec, l), lo, hi,
                                        positive_at_lo=g_lo > 0))
        if not roots or root > roots[-1]:
            roots.append(root)
    l_star = roots[0]
    a_star = float(_best_response_a(spec, l_star))
    return Equilibrium(a_star=a_star, l_star=l_star,
                       i_residual=float(big_i(spec, a_star, l_star)),
                       j_residual=float(big_j(spec, l_star, a_star)),
                       all_roots=tuple(roots), pareto_minimal=True,
                       brackets=tuple(brackets))


# --- comparative statics -------------------------------------------------------------------------

def _value_gap(spec: GameSpec, x: float, k_c: float) -> float:
    k_p = spec.f_p.strike
    s = spec.with_rewards(GameRewards.puts(k_c, k_p))
    eq = solve_equilibrium(s)
    return v_c(s, x, eq.a_star, eq.l_star) - v_p(s, x, eq.a_star, eq.l_star)


def value_of_information(spec: GameSpec, x: float, tol: float = 1e-6,
                         coarse_points: int = 9) -> float:
    """Strike gap ``K_p - K_c`` at which both equilibrium values coincide at ``x``.

    Only put rewards are supported; ``K_p`` is kept and ``K_c`` is searched
    on ``(1, K_p)``.

    Raises
    ------
    NoBracket
        If the value gap has no sign change, or is not monotone in ``K_c``.
    """
    if not (isinstance(spec.f_c, Put) and isinstance(spec.f_p, Put)):
        raise DomainError("value of information is defined for put rewards")
    k_p = spec.f_p.strike
    if not k_p > 1:
        raise NoBracket("need K_p > 1")
    ks = np.linspace(1.0, k_p, coarse_points + 2)[1:-1]
    gaps = np.array([_value_gap(spec, x, k) for k in ks])
    steps = np.diff(gaps)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise NoBracket("value gap is not monotone in K_c on the coarse grid")
    change = np.flatnonzero(np.sign(gaps[:-1]) != np.sign(gaps[1:]))
    if change.size == 0:
        # extend to the ends of the open interval before giving up
        ends = (1.0 + 1e-9, k_p * (1 - 1e-9))
        end_gaps = [_value_gap(spec, x, k) for k in ends]
        ks = np.concatenate([[ends[0]], ks, [ends[1]]])
        gaps = np.concatenate([[end_gaps[0]], gaps, [end_gaps[1]]])
        change = np.flatnonzero(np.sign(gaps[:-1]) != np.sign(gaps[1:]))
        if change.size == 0:
            raise NoBracket("v_c - v_p does not change sign for K_c in (1, K_p)")
    i = int(change[0])
    # Brent keeps the bracket of the bisection and converges in far fewer solves
    k_c = brentq(lambda k: _value_gap(spec, x, k), ks[i], ks[i + 1], xtol=1e-13, rtol=1e-15,
                 maxiter=_MAX_BISECTIONS)
    if abs(_value_gap(spec, x, k_c)) > tol:
        raise NoBracket(f"value gap {abs(_value_gap(spec, x, k_c)):.3g} above tolerance {tol}")
    return k_p - k_c


@dataclass(frozen=True)
class SweepRow:
    lam: float
    a_star: float
    l_star: float
    x: np.ndarray = field(repr=False)
    v_c: np.ndarray = field(repr=False)
    v_p: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    @property
    def v_c_monotone(self) -> bool:
        """``v_c(x; a*, l*)`` is pointwise non-increasing in lambda on the x-grid."""
        vals = np.array([r.v_c for r in self.rows])
        return bool(np.all(np.diff(vals, axis=0) <= 1e-12))

    @property
    def thresholds_monotone(self) -> bool:
        a = np.array([r.a_star for r in self.rows])
        l = np.array([r.l_star for r in self.rows])
        return bool(np.all(np.diff(a) >= 0) and np.all(np.diff(l) >= 0))


def sweep_lambda(spec: GameSpec, lambdas, x_grid=None, workers: int = 1) -> SweepResult:
    """Equilibria and value curves over a sorted list of observation rates."""
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise DomainError("need at least one lambda")
    if lambdas != sorted(lambdas):
        raise DomainError("lambdas must be sorted")
    if x_grid is None:
        x_grid = np.log(np.linspace(20.0, 100.0, 81))
    x_grid = np.asarray(x_grid, dtype=float)

    def one(lam):
        s = spec.with_lambda(lam)
        eq = solve_equilibrium(s)
        return SweepRow(lam=lam, a_star=eq.a_star, l_star=eq.l_star, x=x_grid,
                        v_c=v_c(s, x_grid, eq.a_star, eq.l_star),
                        v_p=v_p(s, x_grid, eq.a_star, eq.l_star))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, lambdas))
    else:
        rows = [one(lam) for lam in lambdas]
    return SweepResult(rows=tuple(rows))


def pareto_check(spec: GameSpec, eq: Equilibrium, x_grid) -> bool:
    """Minimal-root equilibrium weakly dominates every other recorded root for both players."""
    best_c = v_c(spec, x_grid, eq.a_star, eq.l_star)
    best_p = v_p(spec, x_grid, eq.a_star, eq.l_star)
    for l in eq.all_roots[1:]:
        a = float(_best_response_a(spec, l))
        if np.any(v_c(spec, x_grid, a, l) > best_c + 1e-12):
            return False
        if np.any(v_p(spec, x_grid, a, l) > best_p + 1e-12):
            return False
    return True


__all__ = [
    "GameSpec", "Equilibrium", "v_c", "v_p", "v_c_finite", "v_p_finite", "big_i", "big_j",
    "dv_c_da", "dv_p_dl", "best_response_a", "best_response_l", "solve_equilibrium",
    "value_of_information", "sweep_lambda", "SweepResult", "SweepRow", "pareto_check",
]
