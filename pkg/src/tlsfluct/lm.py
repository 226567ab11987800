"""
Bounded Levenberg-Marquardt least squares.

Minimises ``0.5 * sum(r(x)**2)`` subject to box bounds. Steps solve the
damped normal equations in augmented form

    [J; sqrt(mu) D] dx = [-r; 0]

with Marquardt scaling ``D = sqrt(diag(J^T J))``. Bounds are handled by
projecting trial points onto the box and freezing variables that sit on a
bound with the gradient pointing outwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = np.finfo(float).eps


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    fun: np.ndarray
    jac: np.ndarray
    nfev: int
    njev: int
    status: int
    message: str
    active_mask: np.ndarray
    history: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status > 0


STATUS_MESSAGES = {
    0: "maximum number of function evaluations exceeded",
    1: "gradient norm below gtol",
    2: "relative cost reduction below ftol",
    3: "relative step size below xtol",
    -1: "residuals or Jacobian not finite",
}


def numerical_jacobian(fun, x, f0=None, lb=None, ub=None, rel_step=None):
    """Central differences, falling back to one-sided steps at a bound."""
    x = np.asarray(x, dtype=float)
    if f0 is None:
        f0 = np.asarray(fun(x), dtype=float)
    if rel_step is None:
        rel_step = _EPS ** (1 / 3)
    h = rel_step * np.maximum(1.0, np.abs(x))
    lb = np.full_like(x, -np.inf) if lb is None else lb
    ub = np.full_like(x, np.inf) if ub is None else ub
    jac = np.empty((f0.size, x.size), dtype=f0.dtype)
    nfev = 0
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        up = x[j] + h[j] <= ub[j]
        dn = x[j] - h[j] >= lb[j]
        if up and dn:
            xp[j] += h[j]
            xm[j] -= h[j]
            jac[:, j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * h[j])
            nfev += 2
        elif up:
            xp[j] += h[j]
            jac[:, j] = (np.asarray(fun(xp)) - f0) / h[j]
            nfev += 1
        else:
            xm[j] -= h[j]
            jac[:, j] = (f0 - np.asarray(fun(xm))) / h[j]
            nfev += 1
    return jac, nfev


def _as_real(r, J):
    """Complex residuals become stacked real and imaginary parts."""
    if np.iscomplexobj(r) or np.iscomplexobj(J):
        return np.concatenate([r.real, r.imag]), np.vstack([J.real, J.imag])
    return r, J


def levenberg_marquardt(fun, x0, jac=None, bounds=(-np.inf, np.inf), ftol=1e-12, xtol=1e-12,
                        gtol=1e-12, max_nfev=None, mu0=1e-3, keep_history=False) -> LMResult:
    """Bounded Levenberg-Marquardt.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> residuals`` (real or complex 1-D array).
    x0 : array_like
        Starting point; clipped into the bounds.
    jac : callable, optional
        ``jac(x) -> (m, n)`` Jacobian; central differences when omitted.
    bounds : 2-tuple of float or array_like
        Lower and upper bounds.
    ftol, xtol, gtol : float
        Relative cost reduction, relative step size and projected gradient
        infinity-norm tolerances.
    max_nfev : int, optional
        Evaluation budget (default ``200 * (n + 1)``).
    mu0 : float
        Initial damping relative to ``max(diag(J^T J))``.

    Returns
    -------
    LMResult
        ``status > 0`` on convergence, ``0`` if the budget ran out and ``-1``
        if non-finite values appeared.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lb = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
    ub = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
    if np.any(lb >= ub):
        raise ValueError("each lower bound must be smaller than the upper bound")
    x = np.clip(x, lb, ub)
    if max_nfev is None:
        max_nfev = 200 * (n + 1)

    def evaluate_jac(xc, rc):
        if jac is None:
            J, k = numerical_jacobian(fun, xc, rc, lb, ub)
            return np.asarray(J), k
        return np.asarray(jac(xc)), 0

    r_raw = np.asarray(fun(x))
    nfev = 1
    J_raw, k = evaluate_jac(x, r_raw)
    nfev += k
    njev = 1
    r, J = _as_real(r_raw, J_raw)
    cost = 0.5 * float(r @ r)
    history = []
    status = 0
    nu = 2.0
    mu = None
    active = np.zeros(n, dtype=bool)

    while True:
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
            status = -1
            break
        grad = J.T @ r
        # variables on a bound whose descent direction leaves the box
        active = ((x <= lb) & (grad > 0)) | ((x >= ub) & (grad < 0))
        free = ~active
        if np.max(np.abs(grad[free]), initial=0.0) <= gtol * max(1.0, cost):
            status = 1
            break
        if nfev >= max_nfev:
            status = 0
            break
        Jf = J[:, free]
        d2 = np.sum(Jf**2, axis=0)
        d2 = np.where(d2 > 0, d2, 1.0)
        if mu is None:
            mu = mu0 * float(d2.max())
        A = np.vstack([Jf, np.diag(np.sqrt(mu * d2))])
        b = np.concatenate([-r, np.zeros(Jf.shape[1])])
        step_f, *_ = np.linalg.lstsq(A, b, rcond=None)
        step = np.zeros(n)
        step[free] = step_f
        x_new = np.clip(x + step, lb, ub)
        actual_step = x_new - x
        r_new_raw = np.asarray(fun(x_new))
        nfev += 1
        r_new, _ = _as_real(r_new_raw, np.zeros((r_new_raw.size, 0)))
        cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
        # predicted reduction of the linear model along the projected step
        lin = r + J @ actual_step
        pred = cost - 0.5 * float(lin @ lin)
        rho = (cost - cost_new) / pred if pred > 0 else -1.0
        if keep_history:
            history.append({"x": x.copy(), "cost": cost, "mu": mu, "rho": rho})
        if rho > 0:
            rel_step = np.linalg.norm(actual_step) / (np.linalg.norm(x) + xtol)
            rel_cost = (cost - cost_new) / max(cost, _EPS)
            x, r_raw, cost = x_new, r_new_raw, cost_new
            J_raw, k = evaluate_jac(x, r_raw)
            nfev += k
            njev += 1
            r, J = _as_real(r_raw, J_raw)
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if rel_cost < ftol and rho > 0.25:
                status = 2
                break
            if rel_step < xtol:
                status = 3
                break
        else:
            if np.linalg.norm(actual_step) <= xtol * (np.linalg.norm(x) + xtol):
                status = 3
                break
            mu *= nu
            nu *= 2.0
    return LMResult(x=x, cost=cost, fun=r_raw, jac=J_raw, nfev=nfev, njev=njev, status=status,
                    message=STATUS_MESSAGES[status], active_mask=active, history=history)


def covariance(jac, residuals, n_params=None, active=None):
    """Linearised parameter covariance ``s^2 (J^T J)^-1``.

    ``s^2`` is the residual variance ``sum(r^2) / (m - n)``. Active (bound)
    parameters are excluded and get zero variance.
    """
    r, J = _as_real(np.asarray(residuals), np.asarray(jac))
    m, n = J.shape
    if active is None:
        active = np.zeros(n, dtype=bool)
    free = ~np.asarray(active, dtype=bool)
    dof = max(m - int(free.sum()), 1)
    s2 = float(r @ r) / dof
    cov = np.zeros((n, n))
    Jf = J[:, free]
    cov_f = np.linalg.pinv(Jf.T @ Jf)
    cov[np.ix_(free, free)] = cov_f * s2
    return cov
