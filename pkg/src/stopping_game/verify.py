"""Numerical verification that a threshold pair is a Nash equilibrium.

The checks evaluate the infinitesimal generator of the process on the
closed-form value of player P, test the variational inequalities, the sign
change of the auxiliary function that characterises player C's problem, and
smooth fit at both thresholds.  Every check produces a :class:`Check`; the
verifier never raises.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad

from .equilibrium import Equilibrium, GameSpec, big_i, v_c, v_p

GENERATOR_TOL = 1e-5
FIRST_ORDER_TOL = 1e-8
SMOOTH_FIT_TOL = 1e-5
INEQUALITY_SLACK = 1e-10
FD_STEP = 1e-4
GENERATOR_STEP = 1e-3


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class VerificationReport:
    a_star: float
    l_star: float
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, value, tolerance, detail=""):
        self.checks.append(Check(name, bool(passed), float(value), float(tolerance), detail))

    def to_dict(self) -> dict:
        return {"a_star": self.a_star, "l_star": self.l_star, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}

    def to_text(self) -> str:
        lines = [f"a_star = {self.a_star:.17g}", f"l_star = {self.l_star:.17g}"]
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"{flag} {c.name}: value={c.value:.6e} tol={c.tolerance:.1e}"
                         + (f" ({c.detail})" if c.detail else ""))
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def compensated_drift(spec: GameSpec) -> float:
    """Drift coefficient when small jumps (``z < 1``) are compensated."""
    m = spec.model
    return m.mu - m.alpha * (1.0 - (1.0 + m.beta) * math.exp(-m.beta)) / m.beta


def step_size(spec: GameSpec, base: float = FD_STEP, reach: float = 5.0) -> float:
    """Difference step scaled down by the fastest exponential rate of the value functions."""
    rate = max(1.0, spec.W.dominant, spec.phi)
    return base * min(1.0, reach / rate)


def generator_step(spec: GameSpec) -> float:
    # Richardson tolerates a coarser step; evaluation noise dominates below it
    return step_size(spec, base=GENERATOR_STEP, reach=20.0)


def _central(v, x, h):
    v0, vp, vm = v(x), v(x + h), v(x - h)
    return (vp - vm) / (2 * h), (vp - 2 * v0 + vm) / (h * h)


def generator(spec: GameSpec, v, x: float, kinks=(), h: float | None = None) -> float:
    """Apply the generator of the jump-diffusion to ``v`` at ``x``.

    Derivatives are Richardson-extrapolated central differences; the jump
    part is integrated with ``scipy.integrate.quad``, split at ``z = 1`` and
    at every ``kink - x`` in the integration range.  The tail beyond
    ``60 / beta`` is dropped (relative weight below ``e^-60``).
    """
    m = spec.model
    h = generator_step(spec) if h is None else h
    d1_h, d2_h = _central(v, x, h)
    d1_half, d2_half = _central(v, x, h / 2)
    d1 = (4 * d1_half - d1_h) / 3
    d2 = (4 * d2_half - d2_h) / 3
    out = -compensated_drift(spec) * d1 + 0.5 * m.nu**2 * d2
    if m.alpha > 0:
        v0 = v(x)

        def integrand(z):
            small = d1 * z if z < 1 else 0.0
            return (v(x + z) - v0 - small) * m.beta * math.exp(-m.beta * z)

        z_max = max([1.0, *(k - x for k in kinks)]) + 60.0 / m.beta
        cuts = sorted({1.0, *(k - x for k in kinks if k - x > 0)})
        edges = [0.0, *cuts, z_max]
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        out += m.alpha * total
    return float(out)


def _one_sided_3pt(v, x, h, side):
    return side * (-3 * v(x) + 4 * v(x + side * h) - v(x + 2 * side * h)) / (2 * h)


def one_sided_derivative(v, x, h, side):
    """One-sided three-point derivative with one Richardson step; ``side=+1`` looks right."""
    return (4 * _one_sided_3pt(v, x, h / 2, side) - _one_sided_3pt(v, x, h, side)) / 3


def hazard(spec: GameSpec, l_star: float, z):
    """``Phi(q) + lam W^(q+lam)(l*+z) / Z^(q+lam)(l*+z; Phi(q))``."""
    return spec.phi + spec.lam * spec.w_over_z(l_star + np.asarray(z, dtype=float))


def h_hat(spec: GameSpec, l_star: float, y):
    """Auxiliary function for player C in reflected coordinates ``y = -x``."""
    y = np.asarray(y, dtype=float)
    return spec.f_c.f(-y) + spec.f_c.df(-y) / hazard(spec, l_star, y)


def _guarded(report, name, tol, fn):
    try:
        passed, value, detail = fn()
    except Exception as exc:  # a failing report, never an exception
        report.add(name, False, float("nan"), tol, f"{type(exc).__name__}: {exc}")
        return
    report.add(name, passed, value, tol, detail)


def verify_equilibrium(spec: GameSpec, eq: Equilibrium, grid_points: int = 12) -> VerificationReport:
    """Run every optimality check on ``(eq.a_star, eq.l_star)``."""
    a, l = eq.a_star, eq.l_star
    report = VerificationReport(a_star=a, l_star=l)
    if not (math.isfinite(a) and math.isfinite(l) and a < l):
        report.add("finite_thresholds", False, float("nan"), 0.0, "need finite a* < l*")
        return report
    vp_fn = lambda x: v_p(spec, x, a, l)
    vc_fn = lambda x: v_c(spec, x, a, l)
    lam, q = spec.lam, spec.q

    def first_order_c():
        val = abs(big_i(spec, a, l))
        return val <= FIRST_ORDER_TOL, val, "|I(a*; l*)|"

    def first_order_p():
        val = abs(spec.f_p.f(l) - v_p(spec, l, a, l))
        return val <= FIRST_ORDER_TOL, val, "|f_p(l*) - v_p(l*)|"

    def gen_above():
        xs = np.linspace(l, l + 3.0, grid_points + 1)[1:]
        xs = xs[xs - l > 10 * generator_step(spec)]
        res = [abs(generator(spec, vp_fn, x) - q * vp_fn(x)) for x in xs]
        return max(res) <= GENERATOR_TOL, max(res), "(L - q) v_p above l*"

    def gen_between():
        margin = min(10 * generator_step(spec), (l - a) / 10)
        xs = np.linspace(a + margin, l - margin, grid_points)
        res = [abs(generator(spec, vp_fn, x, kinks=(l,)) - (q + lam) * vp_fn(x)
                   + lam * spec.f_p.f(x)) for x in xs]
        return max(res) <= GENERATOR_TOL, max(res), "(L - q - lam) v_p + lam f_p on (a*, l*)"

    def ineq_above():
        xs = np.linspace(l, l + 5.0, 201)
        gap = float(np.min(v_p(spec, xs, a, l) - spec.f_p.f(xs)))
        return gap >= -INEQUALITY_SLACK, gap, "min(v_p - f_p) on [l*, l*+5]"

    def ineq_between():
        xs = np.linspace(a, l, 201)
        gap = float(np.max(v_p(spec, xs, a, l) - spec.f_p.f(xs)))
        return gap <= INEQUALITY_SLACK, gap, "max(v_p - f_p) on [a*, l*]"

    def zero_below():
        xs = np.linspace(a - 3.0, a, 101)
        val = float(np.max(np.abs(v_p(spec, xs, a, l))))
        return val == 0.0, val, "max |v_p| on [a*-3, a*]"

    def h_hat_flip():
        y0 = -a
        left = np.linspace(y0 - 2.0, y0 - 1e-6, 200)
        right = np.linspace(y0 + 1e-6, y0 + 2.0, 200)
        worst_left = float(np.max(h_hat(spec, l, left)))
        worst_right = float(np.min(h_hat(spec, l, right)))
        ok = worst_left <= 0 and worst_right > 0
        return ok, abs(float(h_hat(spec, l, y0))), f"max left {worst_left:.3e}, min right {worst_right:.3e}"

    def fit_c_at_a():
        h = step_size(spec)
        jump = abs(one_sided_derivative(vc_fn, a, h, +1) - float(spec.f_c.df(a)))
        return jump <= SMOOTH_FIT_TOL, jump, "v_c' jump at a*"

    def fit_c_at_l():
        h = step_size(spec)
        jump = abs(one_sided_derivative(vc_fn, l, h, +1) - one_sided_derivative(vc_fn, l, h, -1))
        kink_expected = spec.model.bounded_variation
        ok = (jump > SMOOTH_FIT_TOL) if kink_expected else (jump <= SMOOTH_FIT_TOL)
        return ok, jump, ("kink expected" if kink_expected else "no kink expected")

    def fit_p_at_l():
        h = step_size(spec)
        jump = abs(one_sided_derivative(vp_fn, l, h, +1) - one_sided_derivative(vp_fn, l, h, -1))
        return jump <= SMOOTH_FIT_TOL, jump, "v_p' jump at l*"

    def c_shape():
        xs = np.linspace(a, a + 8.0, 801)[1:]
        vals = v_c(spec, xs, a, l)
        d1 = np.diff(vals)
        d2 = np.diff(vals, 2)
        worst = max(float(np.max(d1)), float(-np.min(d2)))
        ok = np.all(d1 < 0) and np.all(d2 >= -1e-12)
        return ok, worst, "v_c decreasing and convex on (a*, a*+8]"

    _guarded(report, "first_order_c", FIRST_ORDER_TOL, first_order_c)
    _guarded(report, "first_order_p", FIRST_ORDER_TOL, first_order_p)
    _guarded(report, "generator_above_l", GENERATOR_TOL, gen_above)
    _guarded(report, "generator_between", GENERATOR_TOL, gen_between)
    _guarded(report, "v_p_dominates_f_p_above_l", INEQUALITY_SLACK, ineq_above)
    _guarded(report, "v_p_below_f_p_between", INEQUALITY_SLACK, ineq_between)
    _guarded(report, "v_p_zero_below_a", 0.0, zero_below)
    _guarded(report, "h_hat_sign_change", 0.0, h_hat_flip)
    _guarded(report, "smooth_fit_c_at_a", SMOOTH_FIT_TOL, fit_c_at_a)
    _guarded(report, "kink_c_at_l", SMOOTH_FIT_TOL, fit_c_at_l)
    _guarded(report, "smooth_fit_p_at_l", SMOOTH_FIT_TOL, fit_p_at_l)
    _guarded(report, "v_c_decreasing_convex", 0.0, c_shape)
    return report
