"""Show the within estimator agreeing with explicit country dummies, and HC1 by hand."""

import numpy as np

from infodemic.regress import DesignMatrix, fixed_effects_fit, lsdv_fit, ols
from infodemic.specs import get_model
from infodemic.synthetic import simulate_panel

panel, truth = simulate_panel(n_countries=6, n_periods=120, seed=5)
spec = get_model("1b")
within, dummies = fixed_effects_fit(panel, spec), lsdv_fit(panel, spec)
print("planted:", truth["betas"])
for name in spec.regressors:
    print(f"{name:<18} within {within.coefficients[name]:.6f}  dummies {dummies.coefficients[name]:.6f}")

rng = np.random.default_rng(0)
X = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
y = X @ [1.0, 0.5, -0.3] + rng.normal(size=50) * (1 + X[:, 1] ** 2)
fit = ols(DesignMatrix(("const", "a", "b"), X), y)
bread = np.linalg.inv(X.T @ X)
e = fit.residuals
manual = 50 / 47 * bread @ (X.T * e**2) @ X @ bread
print("\nHC1 max abs difference from a hand-built sandwich:", np.abs(fit.covariance - manual).max())
