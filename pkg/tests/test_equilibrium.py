import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from stopping_game import (DomainError, GameRewards, NoBestResponse, NoSignChange, best_response_a,
                           best_response_l, big_i, big_j, dv_c_da, dv_p_dl, solve_equilibrium,
                           sweep_lambda, v_c, v_c_finite, v_p, v_p_finite, value_of_information)
from stopping_game.equilibrium import GameSpec, pareto_check
from stopping_game.rewards import Put, h_c

LOG = math.log


def argmax_on(fn, lo, hi):
    """Bounded scalar maximisation polished from a coarse grid."""
    grid = np.linspace(lo, hi, 401)
    vals = np.array([fn(t) for t in grid])
    i = int(np.argmax(vals))
    left, right = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: -fn(t), bounds=(left, right), method="bounded",
                          options={"xatol": 1e-12})
    return res.x


def test_spec_validation():
    with pytest.raises(DomainError):
        GameSpec.case_study(q=0.0)
    with pytest.raises(DomainError):
        GameSpec.case_study(lam=0.0)
    with pytest.raises(DomainError):
        GameSpec.case_study(k_c=60.0, k_p=50.0)


def test_spec_cached_quantities(spec):
    assert spec.phi == pytest.approx(1.3153712715887156, rel=1e-12)
    assert spec.x_bar_c == pytest.approx(LOG(50))
    assert spec.x_bar_p == pytest.approx(LOG(60))
    assert spec.x_under_c == pytest.approx(spec.a_underbar)
    assert spec.with_lambda(2.0).lam == 2.0
    assert spec.with_rewards(GameRewards.puts(40, 60)).f_c.strike == 40


def test_values_below_lower_threshold(spec):
    a, l = LOG(35), LOG(50)
    xs = np.linspace(a - 2, a, 7)
    assert np.allclose(v_c(spec, xs, a, l), spec.f_c.f(xs))
    assert np.all(v_p(spec, xs, a, l) == 0.0)


def test_v_c_reduces_to_single_player_when_l_below_a(spec):
    a = LOG(40)
    xs = np.linspace(a, a + 3, 9)
    expected = np.exp(spec.phi * (a - xs)) * spec.f_c.f(a)
    assert np.allclose(v_c(spec, xs, a, a - 0.5), expected, rtol=1e-12)


def test_values_continuous_at_a(spec):
    a, l = LOG(35), LOG(50)
    assert v_c(spec, a + 1e-10, a, l) == pytest.approx(spec.f_c.f(a), rel=1e-8)
    assert abs(v_p(spec, a + 1e-10, a, l)) < 1e-6


def test_values_are_positive_and_decreasing(spec, eq):
    xs = np.linspace(eq.a_star + 1e-3, eq.l_star + 4, 200)
    vc = v_c(spec, xs, eq.a_star, eq.l_star)
    vp = v_p(spec, xs, eq.a_star, eq.l_star)
    assert np.all(vc > 0) and np.all(np.diff(vc) < 0)
    assert np.all(vp > 0)
    assert np.all(np.diff(vp[xs > eq.l_star]) < 0)


def test_finite_horizon_converges(spec):
    a, l, x = LOG(30), LOG(40), LOG(45)
    ref_c, ref_p = v_c(spec, x, a, l), v_p(spec, x, a, l)
    gaps = [abs(v_c_finite(spec, x, a, l, l + d) - ref_c) for d in (1.0, 3.0, 10.0)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6
    assert v_p_finite(spec, x, a, l, l + 15) == pytest.approx(ref_p, rel=1e-8)
    with pytest.raises(DomainError):
        v_c_finite(spec, x, a, l, l - 0.1)
    with pytest.raises(DomainError):
        v_p_finite(spec, x, l, a, l + 1)


def test_big_j_at_diagonal(spec):
    a = np.linspace(2.0, 4.0, 7)
    assert np.allclose(big_j(spec, a, a), spec.f_p.f(a), rtol=1e-12)


def test_big_i_at_diagonal(spec):
    a = np.linspace(2.0, 4.0, 7)
    assert np.allclose(big_i(spec, a, a), h_c(spec.model, spec.q, spec.lam, spec.f_c, a), atol=1e-12)


@pytest.mark.parametrize("x", [LOG(40), LOG(55), LOG(80)])
def test_dv_c_da_matches_difference(spec, x):
    a, l, h = LOG(33), LOG(50), 1e-6
    fd = (v_c(spec, x, a + h, l) - v_c(spec, x, a - h, l)) / (2 * h)
    assert dv_c_da(spec, x, a, l) == pytest.approx(fd, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("x", [LOG(40), LOG(55), LOG(80)])
def test_dv_p_dl_matches_difference(spec, x):
    a, l, h = LOG(33), LOG(50), 1e-6
    fd = (v_p(spec, x, a, l + h) - v_p(spec, x, a, l - h)) / (2 * h)
    assert dv_p_dl(spec, x, a, l) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_derivative_domains(spec):
    with pytest.raises(DomainError):
        dv_c_da(spec, LOG(40), LOG(45), LOG(50))
    with pytest.raises(DomainError):
        dv_p_dl(spec, LOG(40), LOG(33), LOG(40))


@pytest.mark.parametrize("l", [LOG(32), LOG(40), LOG(55), LOG(70)])
def test_best_response_a_maximises_v_c(spec, l):
    x = l + 0.5
    lo, hi = spec.x_under_c - 0.3, min(spec.x_bar_c, l, x) - 1e-6
    brute = argmax_on(lambda a: float(v_c(spec, x, a, l)), lo, hi)
    assert float(best_response_a(spec, l)) == pytest.approx(brute, abs=1e-5)


@pytest.mark.parametrize("a", [LOG(30), LOG(36), LOG(45)])
def test_best_response_l_maximises_v_p(spec, a):
    x = spec.x_bar_p + 0.5
    brute = argmax_on(lambda l: float(v_p(spec, x, a, l)), a + 1e-6, spec.x_bar_p + 0.2)
    assert float(best_response_l(spec, a)) == pytest.approx(brute, abs=1e-5)


def test_best_responses_vectorised(spec):
    ls = np.array([LOG(32), LOG(40), LOG(55)])
    vec = best_response_a(spec, ls)
    assert np.allclose(vec, [float(best_response_a(spec, v)) for v in ls], atol=0)
    assert np.all(np.abs(big_i(spec, vec, ls)) < 1e-10)


def test_best_response_errors(spec):
    with pytest.raises(NoBestResponse):
        best_response_a(spec, spec.x_under_c - 0.1)
    with pytest.raises(DomainError):
        best_response_l(spec, spec.x_bar_p)


def test_default_equilibrium(spec, eq):
    assert eq.a_star == pytest.approx(3.69595458095458, abs=1e-9)
    assert eq.l_star == pytest.approx(4.016121652721161, abs=1e-9)
    assert eq.unique and eq.pareto_minimal
    assert abs(eq.i_residual) < 1e-10 and abs(eq.j_residual) < 1e-10
    assert float(best_response_a(spec, eq.l_star)) == pytest.approx(eq.a_star, abs=1e-12)
    assert float(best_response_l(spec, eq.a_star)) == pytest.approx(eq.l_star, abs=1e-10)


def test_equilibrium_is_mutual_best_response_by_brute_force(spec, eq):
    x = eq.l_star + 0.3
    a_bf = argmax_on(lambda a: float(v_c(spec, x, a, eq.l_star)), spec.x_under_c, spec.x_bar_c)
    l_bf = argmax_on(lambda l: float(v_p(spec, x, eq.a_star, l)), eq.a_star + 1e-6, spec.x_bar_p)
    assert a_bf == pytest.approx(eq.a_star, abs=1e-6)
    assert l_bf == pytest.approx(eq.l_star, abs=1e-6)


def test_threshold_ordering(spec, eq, bv_spec, bv_eq):
    for s, e in ((spec, eq), (bv_spec, bv_eq)):
        assert s.a_underbar <= s.x_under_c <= e.a_star < s.x_bar_c
        assert e.a_star < e.l_star < s.x_bar_p


def test_value_at_l_matches_reward(spec, eq):
    assert float(v_p(spec, eq.l_star, eq.a_star, eq.l_star)) == pytest.approx(
        float(spec.f_p.f(eq.l_star)), abs=1e-9)


def test_pareto_check(spec, eq):
    assert pareto_check(spec, eq, np.log(np.linspace(20, 100, 41)))


def test_solver_with_nearly_equal_strikes():
    spec = GameSpec.case_study(k_c=50.0, k_p=50.0 + 1e-9)
    try:
        eq = solve_equilibrium(spec)
    except NoSignChange:
        return
    assert eq.a_star < eq.l_star


@settings(max_examples=12, deadline=None)
@given(lam=st.floats(0.05, 50.0), nu=st.sampled_from([0.0, 0.1, 0.2, 0.4]))
def test_equilibrium_invariants(lam, nu):
    spec = GameSpec.case_study(lam=lam, nu=nu)
    eq = solve_equilibrium(spec, grid_size=400)
    assert spec.x_under_c <= eq.a_star < spec.x_bar_c
    assert eq.a_star < eq.l_star < spec.x_bar_p
    assert abs(eq.i_residual) < 1e-8
    assert abs(eq.j_residual) < 1e-8


def test_sweep_validation(spec):
    with pytest.raises(DomainError):
        sweep_lambda(spec, [])
    with pytest.raises(DomainError):
        sweep_lambda(spec, [2.0, 1.0])


def test_sweep_workers_agree(spec):
    serial = sweep_lambda(spec, [0.5, 1.0, 2.0])
    threaded = sweep_lambda(spec, [0.5, 1.0, 2.0], workers=3)
    for r1, r2 in zip(serial.rows, threaded.rows):
        assert r1.a_star == r2.a_star and r1.l_star == r2.l_star
        assert np.array_equal(r1.v_c, r2.v_c)
    assert serial.v_c_monotone


def test_value_of_information_closes_gap(spec):
    x = LOG(60)
    delta = value_of_information(spec, x)
    k_c = spec.f_p.strike - delta
    s = spec.with_rewards(GameRewards.puts(k_c, spec.f_p.strike))
    e = solve_equilibrium(s)
    assert abs(float(v_c(s, x, e.a_star, e.l_star)) - float(v_p(s, x, e.a_star, e.l_star))) <= 1e-6
    assert delta == pytest.approx(7.5915332875785, abs=1e-6)


def test_value_of_information_needs_puts(spec):
    from stopping_game.rewards import Reward

    class Line(Reward):
        def __init__(self, c):
            self.c = c

        def f(self, x):
            return self.c - np.asarray(x, dtype=float)

    s = spec.with_rewards(GameRewards(Line(3.5), Line(4.0)))
    with pytest.raises(DomainError):
        value_of_information(s, LOG(60))


def test_value_ratio_constant_above_l(spec, eq):
    # both values decay like exp(-Phi x) above l*, so the indifference strike cannot depend on x there
    xs = eq.l_star + np.array([0.01, 0.3, 1.0, 2.5])
    ratio = v_c(spec, xs, eq.a_star, eq.l_star) / v_p(spec, xs, eq.a_star, eq.l_star)
    assert np.allclose(ratio, ratio[0], rtol=1e-12)
