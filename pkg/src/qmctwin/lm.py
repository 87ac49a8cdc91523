"""Weighted Levenberg-Marquardt for small dense problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LMResult:
    params: np.ndarray
    cov: np.ndarray
    chi2: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list)
    singular: bool = False


def levenberg_marquardt(residual, jacobian, p0, weights, xscale=None, max_iter: int = 200,
                        rtol: float = 1e-8, mu0: float = 1e-3) -> LMResult:
    """Minimise ``sum(w * r(p)**2)``.

    ``residual(p)`` returns model minus data, ``jacobian(p)`` its derivative
    (n_data, n_params). A step is accepted only if it does not raise the
    objective, so ``history`` (objective after each accepted step) is
    non-increasing. Converged when every ``|step_i| < rtol * xscale_i``.
    Marquardt's diagonal scaling keeps the iterates unchanged when the data and
    weights are rescaled together.
    """
    p = np.asarray(p0, dtype=float).copy()
    w = np.asarray(weights, dtype=float)
    xscale = np.abs(p) + 1e-300 if xscale is None else np.asarray(xscale, dtype=float)
    r = residual(p)
    chi2 = float(np.sum(w * r * r))
    history = [chi2]
    mu = mu0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        J = jacobian(p)
        A = J.T @ (w[:, None] * J)
        g = J.T @ (w * r)
        d = np.diag(A).copy()
        d[d <= 0] = max(float(d.max()), 1.0) * 1e-12
        accepted = False
        while mu < 1e16:
            try:
                step = np.linalg.solve(A + mu * np.diag(d), -g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            p_new = p + step
            r_new = residual(p_new)
            chi2_new = float(np.sum(w * r_new * r_new))
            if np.isfinite(chi2_new) and chi2_new <= chi2:
                accepted = True
                break
            mu *= 10
        if not accepted:
            # no descent direction left at machine precision
            converged = True
            break
        p, r, chi2 = p_new, r_new, chi2_new
        history.append(chi2)
        mu = max(mu / 10, 1e-15)
        if np.all(np.abs(step) < rtol * xscale):
            converged = True
            break

    J = jacobian(p)
    A = J.T @ (w[:, None] * J)
    singular = np.linalg.cond(A) > 1e14
    cov = np.linalg.pinv(A) if singular else np.linalg.inv(A)
    return LMResult(p, cov, chi2, converged, it, history, bool(singular))
