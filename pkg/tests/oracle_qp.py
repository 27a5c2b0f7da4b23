"""Independent QP oracle used to verify the package solver and path engine.

Projected-gradient (FISTA with restarts) on the box/equality feasible
set, followed by a reduced-KKT polish and a full KKT verification.  No
code is shared with the package: the objective, projection, and
optimality measure are built here from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def project_box_equality(v: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection onto {mu in [0,C]^n : y @ mu = 0}.

    The balance lam -> y @ clip(v - lam y, 0, C) is piecewise linear and
    nonincreasing with knots where components hit a bound; the root is
    found exactly by scanning the sorted knots.
    """
    knots = np.sort(np.concatenate([y * v, y * (v - C)]))
    vals = (np.clip(v[None, :] - knots[:, None] * y[None, :], 0.0, C) @ y)
    k = int(np.searchsorted(-vals, 0.0, side="left"))
    if k == 0:
        lam = knots[0]
    elif k >= knots.size:
        lam = knots[-1]
    else:
        v0, v1 = vals[k - 1], vals[k]
        lam0, lam1 = knots[k - 1], knots[k]
        lam = lam0 if v0 == v1 else lam0 + (lam1 - lam0) * v0 / (v0 - v1)
    return np.clip(v - lam * y, 0.0, C)


def kkt_residual(Q: np.ndarray, q: np.ndarray, y: np.ndarray, C: float, mu: np.ndarray) -> float:
    """Maximal pairwise optimality violation plus feasibility defects."""
    g = Q @ mu + q
    yg = y * g
    tol_b = 1e-11 * max(C, 1.0)
    pos = y > 0
    up = np.where(pos, mu < C - tol_b, mu > tol_b)
    low = np.where(pos, mu > tol_b, mu < C - tol_b)
    res = 0.0
    if up.any() and low.any():
        res = max(res, float(np.max(yg[low]) - np.min(yg[up])))
    res = max(res, abs(float(y @ mu)))
    res = max(res, float(np.max(-mu, initial=0.0)))
    res = max(res, float(np.max(mu - C, initial=0.0)))
    return max(res, 0.0)


@dataclass
class OracleResult:
    mu: np.ndarray
    value: float  # minimized objective value 1/2 mu Q mu + q mu
    kkt: float
    iterations: int
    polished: bool


def _polish(Q, q, y, C, mu, grad_tol=1e-7):
    """Solve the stationarity system on the estimated interior set exactly."""
    n = mu.shape[0]
    g = Q @ mu + q
    yg = y * g
    tol_mu = 1e-6 * max(C, 1.0)
    interior = (mu > tol_mu) & (mu < C - tol_mu)
    if interior.any():
        b = -float(np.mean(yg[interior]))
    else:
        b = -float(np.median(yg))
    grad = g + b * y
    floor = (~interior) & (grad > 0)
    cap = (~interior) & (grad <= 0)
    s_idx = np.flatnonzero(interior)
    if s_idx.size == 0:
        return None
    k = s_idx.size
    mu_fix = np.where(cap, C, 0.0)
    mu_fix[s_idx] = 0.0
    rhs_grad = -(q[s_idx] + (Q[np.ix_(s_idx, np.flatnonzero(~interior))] @ mu_fix[~interior]))
    mat = np.zeros((k + 1, k + 1))
    mat[0, 1:] = y[s_idx]
    mat[1:, 0] = y[s_idx]
    mat[1:, 1:] = Q[np.ix_(s_idx, s_idx)]
    rhs = np.zeros(k + 1)
    rhs[0] = -float(y[~interior] @ mu_fix[~interior])
    rhs[1:] = rhs_grad
    try:
        sol = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    mu_new = mu_fix.copy()
    mu_new[s_idx] = sol[1:]
    if np.any(mu_new < -1e-12) or np.any(mu_new > C + 1e-12):
        return None
    return np.clip(mu_new, 0.0, C)


def solve_qp(
    gram: np.ndarray,
    y: np.ndarray,
    q: np.ndarray,
    C: float,
    target: float = 1e-10,
    max_iter: int = 200_000,
) -> OracleResult:
    """Minimize 1/2 mu^T Q mu + q^T mu over the box/equality set (Q = yy^T * gram)."""
    y = y.astype(float)
    Q = np.outer(y, y) * gram
    n = y.shape[0]
    eigs = np.linalg.eigvalsh(Q)
    L = max(float(eigs[-1]), 1e-12)
    step = 1.0 / L
    mu = project_box_equality(np.zeros(n), y, C)
    w = mu.copy()
    t = 1.0
    best = mu
    best_res = kkt_residual(Q, q, y, C, mu)

    def val(m: np.ndarray) -> float:
        return 0.5 * float(m @ (Q @ m)) + float(q @ m)

    prev_val = val(mu)
    it = 0
    while it < max_iter and best_res > target:
        it += 1
        grad = Q @ w + q
        mu_new = project_box_equality(w - step * grad, y, C)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = mu_new + ((t - 1.0) / t_new) * (mu_new - mu)
        mu, t = mu_new, t_new
        if it % 25 == 0:
            cur = val(mu)
            if cur > prev_val:  # FISTA restart
                w = mu.copy()
                t = 1.0
            prev_val = cur
            res = kkt_residual(Q, q, y, C, mu)
            if res < best_res:
                best, best_res = mu.copy(), res
            if res <= max(1e-3, target * 1e3):
                polished = _polish(Q, q, y, C, mu)
                if polished is not None:
                    pres = kkt_residual(Q, q, y, C, polished)
                    if pres < best_res:
                        best, best_res = polished, pres
                    if pres <= target:
                        return OracleResult(
                            mu=polished, value=val(polished), kkt=pres,
                            iterations=it, polished=True,
                        )
    res = kkt_residual(Q, q, y, C, mu)
    if res < best_res:
        best, best_res = mu, res
    polished = _polish(Q, q, y, C, best)
    pol = False
    if polished is not None:
        pres = kkt_residual(Q, q, y, C, polished)
        if pres < best_res:
            best, best_res, pol = polished, pres, True
    return OracleResult(mu=best, value=val(best), kkt=best_res, iterations=it, polished=pol)


@dataclass
class FairOracleSolution:
    mu: np.ndarray
    value: float      # minimized dual objective including the constant term
    p: float          # primal optimal value (= -value)
    kkt: float
    binding: bool
    sign: int
    eps_max: float
    b: float
    gamma: float


@dataclass
class OracleProblem:
    """Cached per-(dataset, C) pieces shared across tolerance values."""

    X: np.ndarray
    y: np.ndarray
    C: float
    u: np.ndarray
    unsq: float
    f: np.ndarray
    gram_raw: np.ndarray
    gram_defl: np.ndarray
    unc: OracleResult
    cov0: float
    eps_max: float


def prepare_problem(X, y, z, C, target: float = 1e-10) -> OracleProblem:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    n = X.shape[0]
    u = (z - z.mean()) @ X
    unsq = float(u @ u)
    gram_raw = X @ X.T
    unc = solve_qp(gram_raw, y, -np.ones(n), C, target=target)
    if unsq > 1e-30:
        f = X @ u
        proj = X - np.outer(f / unsq, u)
        gram_defl = proj @ proj.T
        gram_defl = 0.5 * (gram_defl + gram_defl.T)
        cov0 = float((unc.mu * y) @ f) / n
    else:
        f = np.zeros(n)
        gram_defl = gram_raw
        cov0 = 0.0
    return OracleProblem(
        X=X, y=y, C=C, u=u, unsq=unsq, f=f, gram_raw=gram_raw,
        gram_defl=gram_defl, unc=unc, cov0=cov0, eps_max=abs(cov0),
    )


def solve_fair_svm(
    X: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    C: float,
    eps: float,
    target: float = 1e-10,
    prob: OracleProblem | None = None,
) -> FairOracleSolution:
    """Full independent solve of the covariance-bounded dual at tolerance eps."""
    if prob is None:
        prob = prepare_problem(X, y, z, C, target=target)
    n = prob.y.shape[0]
    y = prob.y
    C = prob.C

    if prob.unsq <= 1e-30 or eps >= prob.eps_max:
        b = _offset(prob.gram_raw, y, -np.ones(n), C, prob.unc.mu)
        return FairOracleSolution(
            mu=prob.unc.mu, value=prob.unc.value, p=-prob.unc.value,
            kkt=prob.unc.kkt, binding=False, sign=0, eps_max=prob.eps_max,
            b=b, gamma=0.0,
        )
    sign = 1 if prob.cov0 > 0 else -1
    q = -1.0 + sign * n * eps / prob.unsq * (y * prob.f)
    res = solve_qp(prob.gram_defl, y, q, C, target=target)
    const = -((n * eps) ** 2) / (2.0 * prob.unsq)
    value = res.value + const
    T = float((res.mu * y) @ prob.f)
    gamma = n * (T - sign * n * eps) / prob.unsq
    b = _offset(prob.gram_defl, y, q, C, res.mu)
    return FairOracleSolution(
        mu=res.mu, value=value, p=-value, kkt=res.kkt,
        binding=True, sign=sign, eps_max=prob.eps_max, b=b, gamma=gamma,
    )


def _offset(gram, y, q, C, mu) -> float:
    g = y * (gram @ (y * mu)) + q
    yg = y * g
    tol = 1e-8 * max(C, 1.0)
    interior = (mu > tol) & (mu < C - tol)
    if interior.any():
        return -float(np.mean(yg[interior]))
    pos = y > 0
    up = np.where(pos, mu < C - tol, mu > tol)
    low = np.where(pos, mu > tol, mu < C - tol)
    hi = float(np.min(yg[up])) if up.any() else 0.0
    lo = float(np.max(yg[low])) if low.any() else hi
    return -0.5 * (lo + hi)
