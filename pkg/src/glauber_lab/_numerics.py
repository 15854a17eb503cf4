"""Small numerical helpers: spectra of reversible chains and a multi-start
quasi-Newton search used for every adversarial ratio search."""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.optimize import minimize


def reversible_eigenvalues(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Eigenvalues (descending) of a chain reversible w.r.t. ``pi``.

    Symmetrises ``D^{1/2} P D^{-1/2}`` and calls a symmetric solver.
    """
    s = np.sqrt(pi)
    S = s[:, None] * P / s[None, :]
    S = 0.5 * (S + S.T)
    return np.linalg.eigvalsh(S)[::-1]


def spectral_gap(P: np.ndarray, pi: np.ndarray) -> float:
    """``1 - lambda_2`` for a reversible chain (1 for a one-state chain)."""
    ev = reversible_eigenvalues(P, pi)
    return 1.0 - float(ev[1]) if len(ev) > 1 else 1.0


def multistart_minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], starts,
                        bounds=None, maxiter: int = 500, gtol: float = 1e-10):
    """Run L-BFGS-B from every start; return ``(best value, best x, values at starts)``."""
    best_val, best_x, start_vals = np.inf, None, []
    for x0 in starts:
        v0, _ = fun(x0)
        start_vals.append(v0)
        if v0 < best_val:
            best_val, best_x = v0, np.array(x0, dtype=float)
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-15})
        v, _ = fun(res.x)
        if np.isfinite(v) and v < best_val:
            best_val, best_x = v, res.x
    return float(best_val), best_x, start_vals


def random_starts(rng: np.random.Generator, dim: int, count: int, scales=(0.3, 1.0, 3.0)):
    """Gaussian starting points cycling through a few scales."""
    return [rng.normal(0.0, scales[i % len(scales)], dim) for i in range(count)]
