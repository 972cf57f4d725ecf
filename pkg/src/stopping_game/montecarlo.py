"""Monte Carlo simulation of the stopping game.

Paths are simulated event by event.  Between consecutive events (upward
jump of ``X``, observation time of player P, horizon) the process is a
drifted Brownian motion, so the endpoint is Gaussian and the downward
crossing of ``a`` is decided by the Brownian-bridge crossing probability

    P(min < a | x, x1) = exp(-2 (x - a)(x1 - a) / (nu^2 dt)).

Given a crossing, the passage time is drawn from its exact conditional law
(an inverse-Gaussian variable after the change ``r = s / (dt - s)``).  The
scheme therefore has no time-discretisation bias.  A plain grid scheme
(endpoint detection on a ``dt`` grid) is available as ``scheme="grid"``.

Randomness is drawn block by block from counter-based streams keyed by
``(seed, block index)``; every block consumes the same number of variates
per step whatever the strategy, so results do not depend on the number of
workers and different thresholds share common random numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .equilibrium import Equilibrium, GameSpec
from .exceptions import DomainError
from .levy_model import LevyModel

TRUNCATED, STOPPED_C, STOPPED_P, KILLED = 0, 1, 2, 3
_ALIVE = -1


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``dt`` is the grid step of the ``"grid"`` scheme; the exact scheme only
    uses it as an upper bound on event-free intervals when ``max_step`` is
    not set.
    """

    dt: float = 1e-3
    horizon: float = 200.0
    paths: int = 100_000
    seed: int = 20240607
    scheme: str = "exact"
    antithetic: bool = False
    workers: int = 1
    block_size: int = 8192
    max_step: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if not self.horizon > 0:
            raise DomainError(f"horizon must be > 0, got {self.horizon}")
        if self.paths < 2:
            raise DomainError("need at least two paths")
        if self.scheme not in ("exact", "grid"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.antithetic and (self.paths % 2 or self.block_size % 2):
            raise DomainError("antithetic sampling needs even paths and block_size")
        if self.workers < 1 or self.block_size < 2:
            raise DomainError("workers >= 1 and block_size >= 2 required")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def check_discount(self, q: float):
        if q * self.horizon < 9:
            raise DomainError(f"q * horizon = {q * self.horizon:.3g} < 9; truncation bias too large")


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    truncated_fraction: float

    def within(self, value: float, k: float = 3.0, bias: float = 0.0) -> bool:
        """``|mean - value| <= k stderr + bias |value|``."""
        return abs(self.mean - value) <= k * self.stderr + bias * abs(value)


@dataclass
class Outcomes:
    """Per-path stopping outcome: kind, time and position of ``X`` at the stop."""

    kind: np.ndarray
    time: np.ndarray
    position: np.ndarray
    antithetic: bool = False
    block_size: int = field(default=0, repr=False)

    def discounted(self, q: float, which: int, payoff) -> np.ndarray:
        hit = self.kind == which
        out = np.zeros(self.kind.shape)
        out[hit] = np.exp(-q * self.time[hit]) * payoff(self.position[hit])
        return out

    def estimate(self, values: np.ndarray) -> Estimate:
        return _estimate(values, self.kind == TRUNCATED, self.antithetic, self.block_size)


def _pair_means(values, antithetic, block_size):
    """Average antithetic partners; each block stores the plain half first."""
    if not antithetic:
        return values
    means = []
    for start in range(0, len(values), block_size):
        chunk = values[start:start + block_size]
        half = len(chunk) // 2
        means.append(0.5 * (chunk[:half] + chunk[half:]))
    return np.concatenate(means)


def _estimate(values, truncated, antithetic=False, block_size=0) -> Estimate:
    units = _pair_means(np.asarray(values, dtype=float), antithetic, block_size)
    n = len(values)
    se = float(np.std(units, ddof=1) / math.sqrt(len(units))) if len(units) > 1 else 0.0
    return Estimate(mean=float(np.mean(units)), stderr=se, n=n,
                    truncated_fraction=float(np.mean(truncated)))


# --- path simulation ---------------------------------------------------------------------------

def _streams(seed: int, block: int):
    main = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block, 0))))
    obs = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block, 1))))
    return main, obs


def _passage_fraction(rng, dist0, dist1, var, n):
    """Conditional passage time of a Brownian bridge, as a fraction of the interval.

    ``dist0`` and ``dist1`` are the distances of the start and end points to
    the barrier on the start side (``dist1 <= 0`` means the end point lies
    beyond it; the reflected end point then gives the same law).
    """
    d0 = np.maximum(dist0, 1e-300)
    d1 = np.maximum(np.abs(dist1), 1e-300)
    mean = np.minimum(d0 / d1, 1e300)
    shape = np.maximum(d0 * d0 / var, 1e-300)
    r = rng.wald(mean, shape, size=n)
    return np.where(np.isfinite(r), r / (1.0 + r), 1.0)


def _simulate_block(model: LevyModel, lam: float, x0: float, a: float, l: float,
                    b: float | None, cfg: SimConfig, block: int, n: int):
    rng, obs_rng = _streams(cfg.seed, block)
    anti = cfg.antithetic
    m = n // 2 if anti else n
    mu, nu, alpha, beta = model.mu, model.nu, model.alpha, model.beta
    observe = lam > 0 and l > -math.inf
    exact = cfg.scheme == "exact"
    cap = cfg.max_step if cfg.max_step is not None else (math.inf if exact else cfg.dt)
    if not exact:
        cap = min(cap, cfg.dt)

    def shared(v):
        return np.concatenate([v, v]) if anti else v

    def normals():
        z = rng.standard_normal(m)
        return np.concatenate([z, -z]) if anti else z

    def uniforms():
        u = rng.random(m)
        return np.concatenate([u, 1.0 - u]) if anti else u

    kind = np.full(n, _ALIVE, dtype=np.int8)
    time = np.full(n, np.nan)
    pos = np.full(n, np.nan)
    if x0 <= a:
        kind[:], time[:], pos[:] = STOPPED_C, 0.0, x0
        return kind, time, pos
    if b is not None and (x0 > b or (x0 == b and nu > 0)):
        kind[:], time[:], pos[:] = KILLED, 0.0, x0
        return kind, time, pos

    x = np.full(n, float(x0))
    t = np.zeros(n)
    horizon = cfg.horizon
    while True:
        alive = kind == _ALIVE
        if not alive.any():
            break
        wait_j = shared(rng.exponential(1.0 / alpha, m)) if alpha > 0 else np.full(n, np.inf)
        wait_o = shared(obs_rng.exponential(1.0 / lam, m)) if observe else np.full(n, np.inf)
        limit = np.minimum(cap, horizon - t)
        step = np.minimum(np.minimum(wait_j, wait_o), limit)
        is_jump = wait_j <= np.minimum(wait_o, limit)
        is_obs = ~is_jump & (wait_o <= limit)
        z = normals()
        u_a = uniforms()
        var = nu * nu * step
        x1 = x - mu * step + nu * np.sqrt(step) * z

        frac_a = _passage_fraction(rng, x - a, x1 - a, np.maximum(var, 1e-300), n)
        if not exact:
            cross_a = x1 < a
            tau_a = t + step
            pos_a = x1
        elif nu > 0:
            p = np.where(x1 <= a, 1.0, np.exp(-2.0 * (x - a) * np.maximum(x1 - a, 0.0)
                                               / np.maximum(var, 1e-300)))
            cross_a = u_a < p
            tau_a = t + step * frac_a
            pos_a = np.full(n, a)
        else:
            cross_a = x1 <= a
            tau_a = t + (x - a) / mu
            pos_a = np.full(n, a)

        if b is not None:
            u_b = uniforms()
            frac_b = _passage_fraction(rng, b - x, b - x1, np.maximum(var, 1e-300), n)
            if not exact:
                cross_b = x1 > b
                tau_b = t + step
            elif nu > 0:
                p = np.where(x1 >= b, 1.0, np.exp(-2.0 * (b - x) * np.maximum(b - x1, 0.0)
                                                   / np.maximum(var, 1e-300)))
                cross_b = u_b < p
                tau_b = t + step * frac_b
            else:
                cross_b = np.zeros(n, dtype=bool)
                tau_b = np.full(n, np.inf)
        else:
            cross_b = np.zeros(n, dtype=bool)
            tau_b = np.full(n, np.inf)

        jump_size = shared(rng.exponential(1.0 / beta, m)) if alpha > 0 else np.zeros(n)

        c_wins = alive & cross_a & (~cross_b | (tau_a <= tau_b))
        killed = alive & cross_b & ~c_wins
        kind[c_wins], time[c_wins], pos[c_wins] = STOPPED_C, tau_a[c_wins], pos_a[c_wins]
        kind[killed], time[killed], pos[killed] = KILLED, tau_b[killed], b if b is not None else 0

        cont = alive & ~c_wins & ~killed
        t = np.where(cont, t + step, t)
        x = np.where(cont, x1, x)
        jumped = cont & is_jump
        x = np.where(jumped, x + jump_size, x)
        if b is not None:
            over = jumped & (x > b)
            kind[over], time[over], pos[over] = KILLED, t[over], x[over]
        p_stops = cont & is_obs & (x < l)
        kind[p_stops], time[p_stops], pos[p_stops] = STOPPED_P, t[p_stops], x[p_stops]
        out_of_time = (kind == _ALIVE) & (t >= horizon)
        kind[out_of_time], time[out_of_time], pos[out_of_time] = TRUNCATED, t[out_of_time], x[out_of_time]
    return kind, time, pos


def simulate_outcomes(model: LevyModel, lam: float, x: float, a: float, l: float,
                      b: float | None, cfg: SimConfig) -> Outcomes:
    """Simulate ``cfg.paths`` paths of the game and record how each one ends.

    ``l = -inf`` switches player P off; ``b = None`` removes the upper barrier.
    """
    sizes = [min(cfg.block_size, cfg.paths - s) for s in range(0, cfg.paths, cfg.block_size)]
    work = [(i, n) for i, n in enumerate(sizes)]

    def run(item):
        i, n = item
        return _simulate_block(model, lam, float(x), float(a), float(l), b, cfg, i, n)

    if cfg.workers > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, work))
    else:
        parts = [run(item) for item in work]
    kind, time, pos = (np.concatenate(v) for v in zip(*parts))
    return Outcomes(kind=kind, time=time, position=pos, antithetic=cfg.antithetic,
                    block_size=cfg.block_size)


def _two_sided_cap(model: LevyModel, a: float, b: float) -> float:
    # keeps a double crossing within one interval below exp(-72)
    if model.nu == 0:
        return math.inf
    return ((b - a) / (6.0 * model.nu)) ** 2


def simulate_game(spec: GameSpec, x: float, a: float, l: float, cfg: SimConfig):
    """Estimates of ``(V_c, V_p)`` for the strategy pair ``(tau_a^-, T_l^-)``."""
    if a > l:
        raise DomainError("simulate_game needs a <= l")
    cfg.check_discount(spec.q)
    out = simulate_outcomes(spec.model, spec.lam, x, a, l, None, cfg)
    vc = out.discounted(spec.q, STOPPED_C, spec.f_c.f)
    vp = out.discounted(spec.q, STOPPED_P, spec.f_p.f)
    return out.estimate(vc), out.estimate(vp)


def simulate_game_two_sided(spec: GameSpec, x: float, a: float, l: float, b: float,
                            cfg: SimConfig):
    """As :func:`simulate_game`, with the game killed at the first passage above ``b``."""
    if not a <= l <= b:
        raise DomainError("simulate_game_two_sided needs a <= l <= b")
    cfg.check_discount(spec.q)
    if cfg.scheme == "exact":
        cap = _two_sided_cap(spec.model, a, b)
        if cfg.max_step is None or cfg.max_step > cap:
            cfg = replace(cfg, max_step=cap)
    out = simulate_outcomes(spec.model, spec.lam, x, a, l, b, cfg)
    vc = out.discounted(spec.q, STOPPED_C, spec.f_c.f)
    vp = out.discounted(spec.q, STOPPED_P, spec.f_p.f)
    return out.estimate(vc), out.estimate(vp)


def simulate_single_player(model: LevyModel, q: float, reward_c, x: float, a: float,
                           cfg: SimConfig) -> Estimate:
    """``E_x[exp(-q tau_a^-) f_c(X at tau_a^-)]`` without an opponent."""
    cfg.check_discount(q)
    out = simulate_outcomes(model, 0.0, x, a, -math.inf, None, cfg)
    return out.estimate(out.discounted(q, STOPPED_C, reward_c.f))


def simulate_exit_discount(model: LevyModel, q: float, x: float, a: float,
                           cfg: SimConfig, b: float | None = None) -> Estimate:
    """``E_x[exp(-q tau_a^-); tau_a^- < tau_b^+]`` (``b=None``: no upper barrier)."""
    cfg.check_discount(q)
    if b is not None and cfg.scheme == "exact":
        cfg = replace(cfg, max_step=min(cfg.max_step or math.inf, _two_sided_cap(model, a, b)))
    out = simulate_outcomes(model, 0.0, x, a, -math.inf, b, cfg)
    return out.estimate(out.discounted(q, STOPPED_C, np.ones_like))


# --- empirical best-response scan ------------------------------------------------------------

@dataclass(frozen=True)
class PlayerScan:
    grid: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    optimum: float
    optimum_mean: float
    best: float
    best_mean: float
    gap_stderr: float
    consistent: bool


@dataclass(frozen=True)
class ScanReport:
    x: float
    c: PlayerScan
    p: PlayerScan

    @property
    def passed(self) -> bool:
        return self.c.consistent and self.p.consistent


def _scan(values_at, grid, optimum, k=3.0) -> PlayerScan:
    """``values_at(t)`` returns per-path discounted payoffs sharing common random numbers."""
    base, est = values_at(optimum)
    per_path = [values_at(g)[0] for g in grid]
    means = np.array([est(v).mean for v in per_path])
    i = int(np.argmax(means))
    diff = est(per_path[i] - base)
    consistent = bool(diff.mean <= k * diff.stderr) or means[i] <= est(base).mean
    return PlayerScan(grid=np.asarray(grid), means=means, optimum=float(optimum),
                      optimum_mean=est(base).mean, best=float(grid[i]), best_mean=float(means[i]),
                      gap_stderr=diff.stderr, consistent=consistent)


def empirical_best_response_scan(spec: GameSpec, eq: Equilibrium, x: float, grid_size: int,
                                 cfg: SimConfig) -> ScanReport:
    """Compare the analytic thresholds with the best thresholds on a grid, by simulation.

    Player C's threshold ``a`` ranges over ``[x_under_c, min(x_bar_c, l*)]``
    with ``l*`` fixed; player P's ``l`` over ``[a*, x_bar_p]`` with ``a*``
    fixed.  A player's scan is consistent when the empirical maximum exceeds
    the value at the analytic optimum by at most 3 standard errors of the
    paired difference.
    """
    cfg.check_discount(spec.q)
    a_star, l_star = eq.a_star, eq.l_star
    if grid_size <= 1:
        a_grid = np.array([a_star])
        l_grid = np.array([l_star])
    else:
        a_grid = np.linspace(spec.x_under_c, min(spec.x_bar_c, l_star), grid_size)
        l_grid = np.linspace(a_star, spec.x_bar_p, grid_size)

    def c_values(a):
        out = simulate_outcomes(spec.model, spec.lam, x, a, l_star, None, cfg)
        return out.discounted(spec.q, STOPPED_C, spec.f_c.f), out.estimate

    def p_values(l):
        out = simulate_outcomes(spec.model, spec.lam, x, a_star, l, None, cfg)
        return out.discounted(spec.q, STOPPED_P, spec.f_p.f), out.estimate

    return ScanReport(x=float(x), c=_scan(c_values, a_grid, a_star),
                      p=_scan(p_values, l_grid, l_star))
