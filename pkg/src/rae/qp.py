"""Risk-averse best response: a concave QP over the epsilon-floored simplex.

Given an opponent mixture, the best response maximizes::

    u @ sigma - gamma * sigma @ C @ sigma
    s.t. sigma >= epsilon, sum(sigma) = 1

with ``u = M @ varsigma`` and ``C`` the opponent-weighted covariance. The
solver substitutes ``sigma = epsilon + x`` and runs a primal active-set
method on ``{x >= 0, sum(x) = 1 - n*epsilon}``. Bound constraints enter and
leave the working set one at a time, always choosing the lowest index among
ties, so degenerate problems resolve deterministically.

A grid-enumeration oracle (:func:`brute_force_best_response`) and a
minimum-variance checker are included for verification on small games.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ConfigurationError, SolverError, ValidationError
from .game import validate_strategy
from .risk import RiskProfile, clamp_variance, covariance_matrix

DEFAULT_TOL = 1e-8
RIDGE = 1e-10
MAX_GRID_ACTIONS = 4
_GRID_CHUNK = 2_000_000


@dataclass(frozen=True, eq=False)
class BestResponseResult:
    strategy: np.ndarray
    objective_value: float
    kkt_residual: float
    iterations: int
    method: str = "active-set"

    @property
    def probs(self) -> np.ndarray:
        return self.strategy


def _project_capped_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = total}`` (sort-based)."""
    n = v.size
    mu = np.sort(v)[::-1]
    css = np.cumsum(mu) - total
    idx = np.arange(1, n + 1)
    rho = np.nonzero(mu - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def kkt_residual(x: np.ndarray, Q: np.ndarray, c: np.ndarray, total: float) -> float:
    """Scaled KKT violation of ``min 0.5 x'Qx + c'x`` on the capped simplex.

    Stationarity on the free set plus dual feasibility on the bound set,
    divided by ``max(1, |gradient|_inf)``.
    """
    g = Q @ x + c
    free = x > 1e-13 * max(total, 1e-300)
    if not free.any():
        free = x == x.max()
    nu = g[free].mean()
    stat = np.abs(g[free] - nu).max()
    bound = ~free
    dual = max(0.0, float(-(g[bound] - nu).min())) if bound.any() else 0.0
    return float(max(stat, dual) / max(1.0, np.abs(g).max()))


def _active_set(Q, c, total, tol, max_iter):
    n = c.size
    k = int(np.argmin(c))
    x = np.zeros(n)
    x[k] = total
    free = np.zeros(n, dtype=bool)
    free[k] = True
    for it in range(1, max_iter + 1):
        F = np.flatnonzero(free)
        g = Q @ x + c
        m = F.size
        if m == 1:
            p_F = np.zeros(1)
            nu = g[F[0]]
        else:
            K = np.empty((m + 1, m + 1))
            K[:m, :m] = Q[np.ix_(F, F)]
            K[:m, :m].flat[:: m + 1] += RIDGE
            K[:m, m] = -1.0
            K[m, :m] = 1.0
            K[m, m] = 0.0
            rhs = np.concatenate([-g[F], [0.0]])
            sol = np.linalg.solve(K, rhs)
            if not np.all(np.isfinite(sol)):
                raise np.linalg.LinAlgError("non-finite active-set step")
            p_F = sol[:m]
            nu = sol[m]
        neg = p_F < 0
        alpha = 1.0
        block = -1
        if neg.any():
            ratios = np.full(m, np.inf)
            ratios[neg] = -x[F][neg] / p_F[neg]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha = max(ratios[j], 0.0)
                block = F[j]
        x[F] += alpha * p_F
        if block >= 0:
            x[block] = 0.0
            free[block] = False
            np.maximum(x, 0.0, out=x)
            continue
        # x is now the minimizer on the current face; check bound multipliers.
        g = Q @ x + c
        nu = g[free].mean()
        W = np.flatnonzero(~free)
        if W.size == 0:
            return x, it
        lam = g[W] - nu
        j = int(np.argmin(lam))
        if lam[j] >= -tol * max(1.0, np.abs(g).max()):
            return x, it
        free[W[j]] = True
    raise SolverError("active-set iteration cap reached", last_iterate=x, residual=kkt_residual(x, Q, c, total))


def _projected_gradient(Q, c, total, tol, max_iter, x0=None):
    n = c.size
    L = float(np.linalg.norm(Q, 2)) if np.any(Q) else 0.0
    step = 1.0 / L if L > 0 else 1.0
    x = np.full(n, total / n) if x0 is None else _project_capped_simplex(x0, total)
    y = x.copy()
    t = 1.0
    for it in range(1, max_iter + 1):
        x_new = _project_capped_simplex(y - step * (Q @ y + c), total)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if it % 10 == 0 and kkt_residual(x, Q, c, total) <= tol:
            return x, it
    res = kkt_residual(x, Q, c, total)
    if res <= tol:
        return x, max_iter
    raise SolverError("projected-gradient fallback did not converge", last_iterate=x, residual=res)


def solve_mean_variance_qp(u, C, gamma: float, epsilon: float, tol: float = DEFAULT_TOL,
                           max_iter: int | None = None) -> BestResponseResult:
    """Maximize ``u @ s - gamma * s @ C @ s`` over the epsilon-floored simplex.

    Args:
        u: per-action expected payoffs.
        C: symmetric PSD matrix (the weighted covariance).
        gamma: non-negative risk weight.
        epsilon: probability floor, ``epsilon * len(u) < 1``.
        tol: bound on the scaled KKT residual.
        max_iter: active-set step cap; defaults to ``10 * n**2``.

    Raises:
        ConfigurationError: infeasible floor or non-positive tolerance.
        SolverError: both the active-set method and the fallback failed.
    """
    u = np.asarray(u, dtype=float)
    C = np.asarray(C, dtype=float)
    n = u.size
    if tol <= 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    if n == 1:
        s = np.ones(1)
        return BestResponseResult(s, float(u[0] - gamma * C[0, 0]), 0.0, 0)
    if epsilon < 0 or epsilon * n >= 1:
        raise ConfigurationError(f"epsilon={epsilon} infeasible for {n} actions")
    total = 1.0 - n * epsilon
    Q = 2.0 * gamma * C
    c = Q.sum(axis=1) * epsilon - u
    cap = max_iter if max_iter is not None else 10 * n * n
    method = "active-set"
    try:
        x, iters = _active_set(Q, c, total, tol, cap)
    except (np.linalg.LinAlgError, SolverError) as exc:
        method = "projected-gradient"
        x0 = getattr(exc, "last_iterate", None)
        x, iters = _projected_gradient(Q, c, total, tol, max(cap, 20_000), x0)
    x = np.maximum(x, 0.0)
    x *= total / x.sum()
    res = kkt_residual(x, Q, c, total)
    if res > tol:
        raise SolverError(f"KKT residual {res:.3e} exceeds tol {tol:.1e}", last_iterate=epsilon + x, residual=res)
    sigma = epsilon + x
    var = clamp_variance(float(sigma @ C @ sigma), float(np.abs(C).max()))
    return BestResponseResult(sigma, float(u @ sigma - gamma * var), res, iters, method)


def risk_averse_best_response(varsigma, M, profile: RiskProfile, tol: float = DEFAULT_TOL) -> BestResponseResult:
    """Best response to ``varsigma`` under the mean-variance objective."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValidationError(f"payoff matrix must be 2-D, got shape {M.shape}")
    q = validate_strategy(varsigma, M.shape[1])
    profile.check(M.shape[0])
    return solve_mean_variance_qp(M @ q, covariance_matrix(q, M), profile.gamma, profile.epsilon, tol)


# -- verification oracles --------------------------------------------------------


def _compositions(parts: int, budget: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``budget`` (parts <= 3)."""
    if parts == 1:
        return np.array([[budget]])
    if parts == 2:
        k = np.arange(budget + 1)
        return np.column_stack([k, budget - k])
    i, j = np.divmod(np.arange((budget + 1) ** 2), budget + 1)
    keep = i + j <= budget
    i, j = i[keep], j[keep]
    return np.column_stack([i, j, budget - i - j])


def _grid_chunks(n: int, epsilon: float, grid_step: float):
    """Yield arrays of epsilon-floored simplex grid points, lexicographic order."""
    total = 1.0 - n * epsilon
    K = max(1, int(round(total / grid_step)))
    if n == 1:
        yield np.ones((1, 1))
        return
    if n <= 3:
        yield epsilon + total * _compositions(n, K) / K
        return
    for k0 in range(K + 1):
        rest = _compositions(n - 1, K - k0)
        pts = np.column_stack([np.full(len(rest), k0), rest])
        for start in range(0, len(pts), _GRID_CHUNK):
            yield epsilon + total * pts[start:start + _GRID_CHUNK] / K


def _check_grid_args(n: int, profile: RiskProfile, grid_step: float) -> None:
    if n > MAX_GRID_ACTIONS:
        raise CapabilityError(f"grid enumeration supports at most {MAX_GRID_ACTIONS} actions, got {n}")
    if not 0 < grid_step <= 0.1:
        raise ConfigurationError(f"grid_step must lie in (0, 0.1], got {grid_step}")
    profile.check(n)


def brute_force_search(varsigma, M, profile: RiskProfile, grid_step: float = 1e-3):
    """Grid argmax of the total utility. Returns ``(strategy, objective)``."""
    M = np.asarray(M, dtype=float)
    q = validate_strategy(varsigma, M.shape[1])
    n = M.shape[0]
    _check_grid_args(n, profile, grid_step)
    u = M @ q
    C = covariance_matrix(q, M)
    best_val, best = -np.inf, None
    for pts in _grid_chunks(n, profile.epsilon, grid_step):
        vals = pts @ u - profile.gamma * np.einsum("ij,jk,ik->i", pts, C, pts)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best = float(vals[i]), pts[i].copy()
    return best, best_val


def brute_force_best_response(varsigma, M, profile: RiskProfile, grid_step: float = 1e-3) -> np.ndarray:
    """Grid-enumeration best response (test oracle, at most four actions)."""
    return brute_force_search(varsigma, M, profile, grid_step)[0]


def check_min_variance(varsigma, M, profile: RiskProfile, result, grid_step: float = 1e-3,
                       slack: float = 1e-9) -> bool:
    """True iff no grid point reaching the result's expected utility has lower variance.

    ``result`` may be a :class:`BestResponseResult` or a bare strategy. Both
    comparisons carry ``slack`` scaled by the payoff magnitude to absorb
    round-off.
    """
    M = np.asarray(M, dtype=float)
    q = validate_strategy(varsigma, M.shape[1])
    n = M.shape[0]
    _check_grid_args(n, profile, grid_step)
    sigma = np.asarray(getattr(result, "strategy", result), dtype=float)
    u = M @ q
    C = covariance_matrix(q, M)
    target_eu = float(sigma @ u)
    target_var = float(sigma @ C @ sigma)
    scale = max(1.0, float(np.abs(M).max()))
    eu_slack = slack * scale
    var_slack = slack * scale * scale
    for pts in _grid_chunks(n, profile.epsilon, grid_step):
        eu = pts @ u
        ok = eu >= target_eu - eu_slack
        if not ok.any():
            continue
        cand = pts[ok]
        var = np.einsum("ij,jk,ik->i", cand, C, cand)
        if (var < target_var - var_slack).any():
            return False
    return True
