"""Damped Gauss-Newton least squares shared by the histogram and spectrum fits."""

from dataclasses import dataclass

import numpy as np


@dataclass
class FitResult:
    params: np.ndarray
    cost: float
    converged: bool
    n_iter: int


def numeric_jacobian(fun, x, f0=None, step=1e-6):
    """Forward-difference Jacobian of a residual vector function."""
    if f0 is None:
        f0 = np.asarray(fun(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        xp = np.array(x, dtype=float)
        h = step * max(1.0, abs(xp[i]))
        xp[i] += h
        jac[:, i] = (np.asarray(fun(xp), dtype=float) - f0) / h
    return jac


def least_squares_lm(fun, x0, jac=None, max_iter=200, ftol=1e-10, lam0=1e-3,
                     lam_max=1e14):
    """Minimize ``sum(fun(x)**2)`` with Levenberg-Marquardt damping.

    The fit counts as converged once an accepted step improves the cost by
    less than ``ftol`` in relative terms, or once no damped step can improve
    it at all (a numerical stationary point). Hitting ``max_iter`` before
    either happens leaves ``converged`` False. The best parameters seen are
    returned in every case; accepted steps are monotone in cost, so they are
    also the last accepted ones.

    ``jac(x)`` may supply an analytic Jacobian; the default is a
    forward-difference approximation.
    """
    x = np.asarray(x0, dtype=float).copy()
    if x.ndim != 1:
        raise ValueError("x0 must be a 1-D parameter vector")
    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals at the initial point are not finite")
    cost = float(r @ r)
    lam = lam0
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if cost == 0.0:
            converged = True
            break
        if jac is not None:
            jmat = np.asarray(jac(x), dtype=float)
        else:
            jmat = numeric_jacobian(fun, x, r)
        grad = jmat.T @ r
        jtj = jmat.T @ jmat
        diag = np.diag(jtj).copy()
        diag[~(diag > 0)] = 1.0
        accepted = False
        while lam <= lam_max:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(jtj + lam * np.diag(diag), -grad,
                                        rcond=None)[0]
            x_new = x + delta
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True
            break
        improvement = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam * 0.3, 1e-12)
        if improvement < ftol:
            converged = True
            break
    return FitResult(params=x, cost=cost, converged=converged, n_iter=n_iter)
