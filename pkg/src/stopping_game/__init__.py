"""Nash equilibria of a two-player stopping game between a continuously observing
and a periodically observing player, driven by a spectrally positive jump-diffusion."""

from .equilibrium import (
    Equilibrium,
    GameSpec,
    best_response_a,
    best_response_l,
    big_i,
    big_j,
    dv_c_da,
    dv_p_dl,
    solve_equilibrium,
    sweep_lambda,
    v_c,
    v_c_finite,
    v_p,
    v_p_finite,
    value_of_information,
)
from .exceptions import (
    DomainError,
    NearlyRepeatedRoots,
    NoBestResponse,
    NoBracket,
    NoFiniteRoot,
    NoSignChange,
    StoppingGameError,
)
from .levy_model import LevyModel, VariationClass, equation_roots, phi
from .rewards import GameRewards, Put, Reward, a_underbar, v_single_player, x_under
from .scale import scale_function, script_w, w, z, z_function

__version__ = "0.1.0"
