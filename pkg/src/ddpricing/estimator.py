"""scikit-learn style front end for the marginal-cost pricing scheme.

``MarginalCostPricer`` is fitted on supply paths (rows of ``X``) and then
maps demand bundles to deadline price menus, so it drops into pipelines,
``clone`` and ``get_params`` like any other estimator.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .pricing import cost_from_scenarios, menu_from_scenarios
from .supply import ScenarioSet, SupplyModel, scenario_set


class MarginalCostPricer(BaseEstimator):
    """Deadline price menus from an empirical or enumerated supply distribution.

    Parameters
    ----------
    c0 : float
        Firm-supply price per kWh.

    Attributes
    ----------
    scenarios_ : ScenarioSet
        The fitted supply paths and weights.
    n_features_in_ : int
        Horizon ``N``.
    """

    def __init__(self, c0=1.0):
        self.c0 = c0

    def fit(self, X, y=None, sample_weight=None):
        """Store supply paths. With ``sample_weight`` the rows are treated as an
        exact scenario list; without, as an equally weighted Monte Carlo sample."""
        X = check_array(X, dtype=float)
        if np.any(X < 0):
            raise ValueError("supply paths must be nonnegative")
        if not self.c0 > 0:
            raise ValueError("c0 must be > 0")
        if sample_weight is None:
            sc = ScenarioSet(X, np.full(len(X), 1.0 / len(X)), False)
        else:
            w = np.asarray(sample_weight, dtype=float)
            if w.shape != (len(X),) or np.any(w < 0) or not w.sum() > 0:
                raise ValueError("sample_weight must be nonnegative with one entry per row")
            sc = ScenarioSet(X, w / w.sum(), True)
        self.scenarios_ = sc
        self.n_features_in_ = X.shape[1]
        return self

    def fit_model(self, model: SupplyModel, samples=None, seed=0):
        """Fit from a :class:`SupplyModel`, enumerating when possible."""
        n = model.horizon()
        if n is None:
            raise ValueError("model horizon is ambiguous; fit on sampled paths instead")
        sc = scenario_set(model, n, samples, seed)
        return self.fit(sc.paths, sample_weight=sc.weights if sc.exact else None)

    def _bundles(self, X):
        check_is_fitted(self, "scenarios_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} deadlines, pricer was fitted with {self.n_features_in_}")
        if np.any(X < 0):
            raise ValueError("demand bundles must be nonnegative")
        return X

    def predict(self, X):
        """Price menu for each bundle row, shape ``(n_bundles, N)``."""
        X = self._bundles(X)
        return np.array([menu_from_scenarios(x, self.scenarios_, self.c0).p for x in X])

    def predict_menu(self, x):
        """Full :class:`PriceMenu` (with standard errors) for one bundle."""
        x = self._bundles(np.atleast_2d(x))[0]
        return menu_from_scenarios(x, self.scenarios_, self.c0)

    def expected_cost(self, X):
        """Expected firm-supply cost for each bundle row."""
        X = self._bundles(X)
        return np.array([cost_from_scenarios(x, self.scenarios_, self.c0).value for x in X])

    def profit(self, X, prices):
        """Supplier's expected profit ``p.x - Q*(x)`` at posted ``prices``."""
        X = self._bundles(X)
        return X @ np.asarray(prices, dtype=float) - self.expected_cost(X)
