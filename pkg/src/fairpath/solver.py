"""Dual solver for the covariance-bounded soft-margin SVM.

The box/equality QP is solved by pairwise coordinate descent on the
equality manifold (two-index updates that keep sum_i mu_i y_i = 0),
stopping on a first-order KKT violation measure.  The binding side of
the covariance constraint is detected from the unconstrained solution's
covariance; with binding sign s the minimized objective is

    D(mu) = 1/2 mu^T Q mu - sum_i mu_i
            + s * n*eps/||u||^2 * sum_i mu_i y_i <x_i,u>
            - n^2 eps^2 / (2 ||u||^2),

where Q_ij = y_i y_j <(I-P_u)x_i, (I-P_u)x_j>.  The reported objective
is p(eps) = -D(mu*), the primal optimal value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, Dataset, GroupStats, group_stats
from .kernel import ProjectedKernel, projected_kernel

DEFAULT_TOL = 1e-8
GRAD_TIE_TOL = 1e-7
MU_TIE_FACTOR = 1e-7


class SolverError(RuntimeError):
    """Solve did not reach the KKT tolerance within the iteration budget."""

    def __init__(self, message: str, kkt_violation: float):
        super().__init__(message)
        self.kkt_violation = kkt_violation


class StateError(RuntimeError):
    """Operation requires solver state that is not available."""


class UndefinedPriceError(RuntimeError):
    """Shadow price is undefined because the constraint is vacuous (u = 0)."""


class OffsetIndeterminateError(RuntimeError):
    """No margin support vectors; the offset is only bracketed."""


@dataclass(frozen=True)
class DualSolution:
    """KKT point of the dual program at a fixed tolerance eps.

    ``gradient`` is the per-point derivative of the minimized dual
    objective including the offset term: grad_j = y_j(theta^T x_j + b) - 1.
    ``free``/``support``/``error`` partition the indices by its sign
    (grad > 0 -> free, mu = 0; grad < 0 -> error, mu = C; else support).
    ``sign`` is the binding side of the covariance bound (+1, -1, or 0
    when inactive).  When inactive, beta_minus = beta_plus = 0 by
    convention (at most one may ever be nonzero).
    """

    mu: np.ndarray
    b: float
    gamma: float
    beta_minus: float
    beta_plus: float
    epsilon: float
    C: float
    objective: float
    gradient: np.ndarray
    free: tuple[int, ...]
    support: tuple[int, ...]
    error: tuple[int, ...]
    sign: int
    binding: bool
    eps_max: float
    kkt_violation: float
    cov_term: float  # (1/n) sum_i mu_i y_i <x_i, u>

    def __post_init__(self):
        for name in ("mu", "gradient"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def V(self) -> float:
        return abs(self.gamma)

    @property
    def lambdas(self) -> np.ndarray:
        """Multipliers of the slack nonnegativity constraints, C - mu."""
        return self.C - self.mu

    @property
    def partition(self) -> dict[str, tuple[int, ...]]:
        return {"F": self.free, "S": self.support, "E": self.error}


@dataclass(frozen=True)
class PrimalSolution:
    """Hyperplane recovered from a converged dual solution."""

    theta: np.ndarray
    b: float
    xi: np.ndarray
    hinge_loss: float
    cov_gap: float
    offset_bracketed: bool = False

    def __post_init__(self):
        for name in ("theta", "xi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def decision_values(self, features: np.ndarray) -> np.ndarray:
        return features @ self.theta + self.b

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Signs of the decision values; exact zeros resolve to +1."""
        vals = self.decision_values(features)
        return np.where(vals >= 0.0, 1, -1)


def _pairwise_descent(
    gram: np.ndarray,
    y: np.ndarray,
    q: np.ndarray,
    C: float,
    tol: float,
    max_iter: int,
):
    """Minimize 1/2 mu^T Q mu + q^T mu over the box/equality feasible set.

    Q_ij = y_i y_j gram_ij.  Returns (mu, g, violation, iterations) with
    g the plain gradient Q mu + q (no offset term).
    """
    n = y.shape[0]
    mu = np.zeros(n)
    g = q.copy()
    yg = y * g
    pos = y > 0
    diag = np.diag(gram).copy()
    it = 0
    refresh = 8192
    last_stall = (-1, -1)
    while it < max_iter:
        it += 1
        if it % refresh == 0:
            g = y * (gram @ (y * mu)) + q
            yg = y * g
        at_cap = mu >= C
        at_floor = mu <= 0.0
        up_mask = np.where(pos, ~at_cap, ~at_floor)
        low_mask = np.where(pos, ~at_floor, ~at_cap)
        yg_up = np.where(up_mask, yg, np.inf)
        yg_low = np.where(low_mask, yg, -np.inf)
        i = int(np.argmin(yg_up))
        violation = float(np.max(yg_low)) - yg_up[i]
        if violation <= tol:
            break
        # Second-order partner choice: maximal decrease along the pair.
        diff = yg_low - yg_up[i]
        eta_vec = np.maximum(diag + gram[i, i] - 2.0 * gram[:, i], 1e-12)
        gains = np.where(diff > 0.0, diff * diff / eta_vec, -np.inf)
        j = int(np.argmax(gains))
        pair_gap = yg[j] - yg[i]
        cap_i = (C - mu[i]) if pos[i] else mu[i]
        cap_j = mu[j] if pos[j] else (C - mu[j])
        eta = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        t_newton = pair_gap / eta if eta > 1e-15 else np.inf
        t = min(t_newton, cap_i, cap_j)
        if t <= 1e-16 * max(C, 1.0):
            # Numerically stuck pair: snap the limiting variable onto its
            # bound so the working-set masks exclude it next round.
            if cap_i <= cap_j:
                mu[i] = C if pos[i] else 0.0
            else:
                mu[j] = 0.0 if pos[j] else C
            if (i, j) == last_stall:
                break
            last_stall = (i, j)
            continue
        last_stall = (-1, -1)
        if t == cap_i:
            mu[i] = C if pos[i] else 0.0
        else:
            mu[i] += y[i] * t
        if t == cap_j:
            mu[j] = 0.0 if pos[j] else C
        else:
            mu[j] -= y[j] * t
        delta = t * (gram[:, i] - gram[:, j])
        g += y * delta
        yg += delta
    g = y * (gram @ (y * mu)) + q
    yg = y * g
    at_cap = mu >= C
    at_floor = mu <= 0.0
    up_mask = np.where(pos, ~at_cap, ~at_floor)
    low_mask = np.where(pos, ~at_floor, ~at_cap)
    violation = float(
        np.max(np.where(low_mask, yg, -np.inf)) - np.min(np.where(up_mask, yg, np.inf))
    )
    return mu, g, max(violation, 0.0), it


def _offset_from_state(mu: np.ndarray, y: np.ndarray, g: np.ndarray, C: float):
    """Offset b making grad_j = g_j + b y_j vanish on the margin set.

    With interior points the result is the least-squares fit of the
    margin equations; otherwise the midpoint of the feasible bracket is
    used and flagged.
    """
    yg = y * g
    mu_tol = MU_TIE_FACTOR * C
    interior = (mu > mu_tol) & (mu < C - mu_tol)
    if interior.any():
        return float(-yg[interior].mean()), False
    pos = y > 0
    up_mask = np.where(pos, mu < C - mu_tol, mu > mu_tol)
    low_mask = np.where(pos, mu > mu_tol, mu < C - mu_tol)
    hi = float(np.min(np.where(up_mask, yg, np.inf)))
    lo = float(np.max(np.where(low_mask, yg, -np.inf)))
    if not np.isfinite(hi):
        hi = lo
    if not np.isfinite(lo):
        lo = hi
    return float(-(lo + hi) / 2.0), True


def classify_from_gradient(
    mu: np.ndarray,
    grad: np.ndarray,
    C: float,
    grad_tol: float = GRAD_TIE_TOL,
    mu_tol: float | None = None,
):
    """Partition indices into (free, support, error) from the gradient sign.

    grad_j > tol -> free (mu_j = 0); grad_j < -tol -> error (mu_j = C);
    otherwise support.  Points whose mu contradicts the gradient class by
    more than the mu tolerance also default to support, so membership
    transitions always pass through the margin.
    """
    if mu_tol is None:
        mu_tol = MU_TIE_FACTOR * C
    free_mask = grad > grad_tol
    error_mask = grad < -grad_tol
    free_mask &= mu <= mu_tol
    error_mask &= mu >= C - mu_tol
    support_mask = ~(free_mask | error_mask)
    idx = np.arange(mu.shape[0])
    return (
        tuple(idx[free_mask].tolist()),
        tuple(idx[support_mask].tolist()),
        tuple(idx[error_mask].tolist()),
    )


def dual_objective(
    kern: ProjectedKernel,
    ds: Dataset,
    C: float,
    eps: float,
    sign: int,
    mu: np.ndarray,
) -> float:
    """Value of the minimized dual objective D at mu for the given binding sign."""
    y = ds.labels.astype(float)
    if sign == 0:
        gram = kern.raw_gram()
        quad = 0.5 * float(mu @ (y * (gram @ (y * mu))))
        return quad - float(mu.sum())
    coeff = sign * ds.n * eps / kern.u_norm_sq
    quad = 0.5 * float(mu @ (y * (kern.gram @ (y * mu))))
    lin = -float(mu.sum()) + coeff * float(mu @ (y * kern.fair_lin))
    const = -(ds.n * eps) ** 2 / (2.0 * kern.u_norm_sq)
    return quad + lin + const


def solve_dual(
    kern: ProjectedKernel,
    ds: Dataset,
    C: float,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = 2_000_000,
) -> DualSolution:
    """Solve the covariance-bounded dual at tolerance eps.

    The unconstrained problem is solved first; if its covariance gap is
    within eps the bound is inactive and that solution is returned with
    gamma = 0.  Otherwise the sign of the unconstrained covariance picks
    the binding side and the eps-dependent linear term.
    """
    if C <= 0:
        raise DataError(f"C must be positive, got {C}")
    if eps < 0:
        raise DataError(f"eps must be nonnegative, got {eps}")
    y = ds.labels.astype(float)
    if not ((y > 0).any() and (y < 0).any()):
        raise DataError("need at least one point of each label")

    gram_raw = kern.raw_gram()
    q_unc = -np.ones(ds.n)
    mu0, g0, viol0, it0 = _pairwise_descent(gram_raw, y, q_unc, C, tol, max_iter)
    if viol0 > 10.0 * tol:
        raise SolverError(
            f"unconstrained solve stopped at KKT violation {viol0:.3e}", viol0
        )
    # Covariance of the unconstrained separator: theta0^T u / n.
    cov0 = float((mu0 * y) @ kern.fair_lin) / ds.n if not kern.vacuous else 0.0
    eps_max = abs(cov0)

    if kern.vacuous or eps >= eps_max:
        b0, _ = _offset_from_state(mu0, y, g0, C)
        grad = g0 + b0 * y
        free, support, error = classify_from_gradient(mu0, grad, C)
        objective = -dual_objective(kern, ds, C, eps, 0, mu0)
        return DualSolution(
            mu=mu0,
            b=b0,
            gamma=0.0,
            beta_minus=0.0,
            beta_plus=0.0,
            epsilon=eps,
            C=C,
            objective=objective,
            gradient=grad,
            free=free,
            support=support,
            error=error,
            sign=0,
            binding=False,
            eps_max=eps_max,
            kkt_violation=viol0,
            cov_term=cov0,
        )

    sign = 1 if cov0 > 0 else -1
    coeff = sign * ds.n * eps / kern.u_norm_sq
    q = -1.0 + coeff * (y * kern.fair_lin)
    mu, g, viol, _ = _pairwise_descent(kern.gram, y, q, C, tol, max_iter)
    if viol > 10.0 * tol:
        raise SolverError(f"solve stopped at KKT violation {viol:.3e}", viol)
    b, _ = _offset_from_state(mu, y, g, C)
    grad = g + b * y
    free, support, error = classify_from_gradient(mu, grad, C)
    T = float((mu * y) @ kern.fair_lin)
    gamma = ds.n * (T - sign * ds.n * eps) / kern.u_norm_sq
    objective = -dual_objective(kern, ds, C, eps, sign, mu)
    return DualSolution(
        mu=mu,
        b=b,
        gamma=gamma,
        beta_minus=eps if sign < 0 else 0.0,
        beta_plus=eps if sign > 0 else 0.0,
        epsilon=eps,
        C=C,
        objective=objective,
        gradient=grad,
        free=free,
        support=support,
        error=error,
        sign=sign,
        binding=True,
        eps_max=eps_max,
        kkt_violation=viol,
        cov_term=T / ds.n,
    )


def recover_primal(
    sol: DualSolution, ds: Dataset, stats: GroupStats | None = None
) -> PrimalSolution:
    """Recover (theta, b, xi) from the stationarity conditions.

    theta = sum_i mu_i y_i x_i - (gamma/n) u.  The offset is the
    least-squares fit of the margin equations over the support set; with
    an empty support set the feasibility-bracket midpoint is used and
    the solution flagged.
    """
    if stats is None:
        stats = group_stats(ds)
    y = ds.labels.astype(float)
    theta = (sol.mu * y) @ ds.features - (sol.gamma / ds.n) * stats.u
    scores = ds.features @ theta
    if sol.support:
        s = np.asarray(sol.support)
        b = float(np.mean(y[s] - scores[s]))
        bracketed = False
    else:
        g0 = y * scores - 1.0
        b, bracketed = _offset_from_state(sol.mu, y, g0, sol.C)
    xi = np.maximum(0.0, 1.0 - y * (scores + b))
    cov_gap = abs(float(theta @ stats.u)) / ds.n
    return PrimalSolution(
        theta=theta,
        b=b,
        xi=xi,
        hinge_loss=float(xi.sum()),
        cov_gap=cov_gap,
        offset_bracketed=bracketed,
    )


def partition(
    sol: DualSolution, kern: ProjectedKernel, tol: float = GRAD_TIE_TOL
) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """Re-derive the (free, support, error) index partition from the gradient."""
    if sol.gradient is None:
        raise StateError("gradient unavailable on this solution")
    return classify_from_gradient(sol.mu, sol.gradient, sol.C, grad_tol=tol)


def shadow_price(sol: DualSolution, kern: ProjectedKernel) -> float:
    """Multiplier of the covariance bound: marginal loss per unit of eps.

    Zero when the bound is inactive; undefined when u = 0.  Recomputed
    from the stored mu summary rather than echoing sol.gamma.
    """
    if kern.vacuous:
        raise UndefinedPriceError("covariance bound is vacuous (u = 0)")
    if not sol.binding:
        return 0.0
    n = sol.n
    return n * n * (sol.cov_term - sol.sign * sol.epsilon) / kern.u_norm_sq


def global_sensitivity_bound(sol0: DualSolution, eps: float) -> float:
    """Certified lower bound on p(eps) from the eps = 0 solution.

    p(eps) >= p(0) - eps * |gamma(0)| for all eps >= 0.
    """
    if sol0.epsilon != 0.0:
        raise StateError("bound must be anchored at the eps = 0 solution")
    return sol0.objective - eps * abs(sol0.gamma)


def solve_at(
    ds: Dataset, C: float, eps: float, tol: float = DEFAULT_TOL
) -> tuple[DualSolution, PrimalSolution, ProjectedKernel, GroupStats]:
    """Convenience wrapper: stats + kernel + dual + primal in one call."""
    stats = group_stats(ds)
    kern = projected_kernel(ds, stats)
    sol = solve_dual(kern, ds, C, eps, tol=tol)
    primal = recover_primal(sol, ds, stats)
    return sol, primal, kern, stats
