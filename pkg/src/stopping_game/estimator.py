"""scikit-learn style wrapper around the equilibrium solver.

``fit`` solves the game for the hyper-parameters; ``predict`` maps log
prices to the two equilibrium values.  There is no training data: ``X`` in
``fit`` is accepted and ignored so the object drops into pipelines and
``GridSearchCV``-style parameter sweeps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .equilibrium import GameSpec, solve_equilibrium, v_c, v_p


class NashStoppingGame(BaseEstimator):
    """Equilibrium of the put game as an estimator.

    Parameters
    ----------
    mu, nu, alpha, beta : float
        Jump-diffusion parameters.
    q : float
        Discount rate.
    lam : float
        Observation rate of the periodically observing player.
    k_c, k_p : float
        Put strikes of the continuously and periodically observing players.
    grid_size : int
        Scan grid used to bracket equilibrium roots.
    """

    def __init__(self, mu=0.31333, nu=0.2, alpha=1.0, beta=2.0, q=0.05, lam=1.0,
                 k_c=50.0, k_p=60.0, grid_size=2000):
        self.mu = mu
        self.nu = nu
        self.alpha = alpha
        self.beta = beta
        self.q = q
        self.lam = lam
        self.k_c = k_c
        self.k_p = k_p
        self.grid_size = grid_size

    def _spec(self) -> GameSpec:
        return GameSpec.case_study(mu=self.mu, nu=self.nu, alpha=self.alpha, beta=self.beta,
                                       q=self.q, lam=self.lam, k_c=self.k_c, k_p=self.k_p)

    def fit(self, X=None, y=None):
        self.spec_ = self._spec()
        self.equilibrium_ = solve_equilibrium(self.spec_, grid_size=self.grid_size)
        self.a_star_ = self.equilibrium_.a_star
        self.l_star_ = self.equilibrium_.l_star
        return self

    def predict(self, X):
        """Equilibrium values at log prices ``X`` (one column), shape ``(n, 2)``: ``v_c``, ``v_p``."""
        check_is_fitted(self, "equilibrium_")
        X = check_array(X, ensure_2d=False).reshape(-1)
        vals_c = v_c(self.spec_, X, self.a_star_, self.l_star_)
        vals_p = v_p(self.spec_, X, self.a_star_, self.l_star_)
        return np.column_stack([np.atleast_1d(vals_c), np.atleast_1d(vals_p)])

    def thresholds(self, prices=False):
        check_is_fitted(self, "equilibrium_")
        pair = (self.a_star_, self.l_star_)
        return tuple(np.exp(pair)) if prices else pair
