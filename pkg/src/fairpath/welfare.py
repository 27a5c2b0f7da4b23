"""Group welfares, Pareto comparisons, and implied social-welfare weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset, GroupMissingError
from .solver import PrimalSolution

log = logging.getLogger(__name__)

A_DOMINATES = "a_dominates"
B_DOMINATES = "b_dominates"
EQUAL = "equal"
INCOMPARABLE = "incomparable"


class MonotonicityError(ValueError):
    """Marginal utilities must be strictly positive."""


@dataclass(frozen=True)
class WelfareTriple:
    """(learner objective, group-0 welfare, group-1 welfare).

    The learner prefers lower p; each group prefers higher W.
    """

    p: float
    w0: float
    w1: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p, self.w0, self.w1)


@dataclass(frozen=True)
class WeightProfile:
    """Per-individual welfare weights w_i = k / m_i, normalized to sum 1."""

    w: np.ndarray
    k: float
    budget: float
    m: np.ndarray

    def __post_init__(self):
        for name in ("w", "m"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _allocated_mask(mu: np.ndarray, labels: np.ndarray, C: float) -> np.ndarray:
    cap = mu >= C - 1e-8 * C
    return (~cap & (labels == 1)) | (cap & (labels == -1))


def group_welfare_heuristic(
    mu: np.ndarray, labels: np.ndarray, groups: np.ndarray, C: float
) -> tuple[float, float]:
    """Fraction of each group counted as positively classified, read off mu.

    A point counts iff (mu_i < C and y_i = +1) or (mu_i = C and y_i = -1):
    a capped multiplier is treated as a misclassification.  (The second
    clause is stated for y_i = 0 in some pseudocode conventions; labels
    here are {-1,+1}, so it reads y_i = -1.)
    """
    mu = np.asarray(mu, dtype=float)
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    n0 = int((groups == 0).sum())
    n1 = int((groups == 1).sum())
    if n0 == 0 or n1 == 0:
        raise GroupMissingError(f"both groups must be nonempty (n0={n0}, n1={n1})")
    allocated = _allocated_mask(mu, labels, C)
    w0 = float(allocated[groups == 0].sum()) / n0
    w1 = float(allocated[groups == 1].sum()) / n1
    return w0, w1


def group_welfare_counts(
    mu: np.ndarray, labels: np.ndarray, groups: np.ndarray, C: float
) -> tuple[int, int]:
    """Raw positively-allocated counts per group under the mu heuristic."""
    allocated = _allocated_mask(np.asarray(mu, dtype=float), np.asarray(labels), C)
    groups = np.asarray(groups)
    return int(allocated[groups == 0].sum()), int(allocated[groups == 1].sum())


def group_welfare_exact(
    primal: PrimalSolution, ds: Dataset
) -> tuple[float, float]:
    """Group welfares from the recovered hyperplane's actual predictions.

    W_z = (1/n_z) sum_{i: z_i=z} (sign(theta^T x_i + b) + 1)/2, with exact
    zeros resolved to +1 (logged).
    """
    vals = primal.decision_values(ds.features)
    ties = int((vals == 0.0).sum())
    if ties:
        log.info("group_welfare_exact: %d decision value(s) exactly 0, taken as +1", ties)
    yhat = np.where(vals >= 0.0, 1, -1)
    pos = (yhat + 1) / 2.0
    z = ds.groups
    n0 = int((z == 0).sum())
    n1 = int((z == 1).sum())
    if n0 == 0 or n1 == 0:
        raise GroupMissingError(f"both groups must be nonempty (n0={n0}, n1={n1})")
    return float(pos[z == 0].mean()), float(pos[z == 1].mean())


def welfare_disagreement(
    mu: np.ndarray, C: float, primal: PrimalSolution, ds: Dataset
) -> int:
    """Number of points where the mu heuristic and the sign rule disagree.

    A capped mu only certifies a margin violation (xi > 0), not an actual
    misclassification (xi > 1), so the two counts can differ.
    """
    heur = _allocated_mask(np.asarray(mu, dtype=float), ds.labels, C)
    exact = primal.predict(ds.features) == 1
    return int((heur != exact).sum())


def pareto_compare(a: WelfareTriple, b: WelfareTriple) -> str:
    """Partial order on welfare triples.

    a dominates b iff a.p <= b.p, a.w0 >= b.w0, a.w1 >= b.w1 with at
    least one strict; symmetrically for b; 'equal' if identical,
    'incomparable' otherwise.
    """
    a_weak = a.p <= b.p and a.w0 >= b.w0 and a.w1 >= b.w1
    b_weak = b.p <= a.p and b.w0 >= a.w0 and b.w1 >= a.w1
    if a_weak and b_weak:
        return EQUAL
    if a_weak:
        return A_DOMINATES
    if b_weak:
        return B_DOMINATES
    return INCOMPARABLE


def implied_weights(m: np.ndarray, budget: float) -> WeightProfile:
    """Weights under which a fixed allocation is Planner-optimal.

    w_i = k / m_i with k = 1 / sum_j (1/m_j), so sum w = 1 and
    w_i m_i = k for all i.
    """
    m = np.asarray(m, dtype=float)
    if np.any(m <= 0.0) or not np.all(np.isfinite(m)):
        bad = np.flatnonzero(~(m > 0.0)).tolist()
        raise MonotonicityError(f"marginal utilities must be > 0; offending {bad}")
    k = 1.0 / float((1.0 / m).sum())
    return WeightProfile(w=k / m, k=k, budget=float(budget), m=m)


def reference_weights(kind: str, utilities: np.ndarray) -> np.ndarray:
    """Benchmark weight vectors: uniform, or all weight on the worst-off.

    Rawlsian ties split equally among the minimizers (logged).
    """
    u = np.asarray(utilities, dtype=float)
    n = u.shape[0]
    if n < 1:
        raise ValueError("need at least one individual")
    if kind == "benthamite":
        return np.full(n, 1.0 / n)
    if kind == "rawlsian":
        lo = u.min()
        winners = np.flatnonzero(u == lo)
        if winners.size > 1:
            log.info("rawlsian tie among %d minimizers; weight split equally", winners.size)
        w = np.zeros(n)
        w[winners] = 1.0 / winners.size
        return w
    raise ValueError(f"unknown reference kind {kind!r}")


@dataclass(frozen=True)
class QuadraticUtility:
    """u(x_i, h) = a_i h - beta h^2 / 2, strictly increasing while h < a_i/beta.

    ``binary_gain`` gives the utility step u(x,1) - u(x,0) used when the
    good is allocated whole.
    """

    a: np.ndarray
    beta: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if np.any(a <= 0.0):
            raise MonotonicityError("per-point utility slopes must be positive")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    def marginal(self, h: np.ndarray) -> np.ndarray:
        return self.a - self.beta * np.asarray(h, dtype=float)

    def binary_gain(self) -> np.ndarray:
        gain = self.a - self.beta / 2.0
        if np.any(gain <= 0.0):
            raise MonotonicityError("utility not increasing over the unit allocation")
        return gain


def utility_from_features(
    features: np.ndarray, a0: float = 1.0, beta: float = 0.5
) -> QuadraticUtility:
    """Default concave utility family with slopes derived from feature norms."""
    norms = np.linalg.norm(np.asarray(features, dtype=float), axis=1)
    return QuadraticUtility(a=a0 + norms, beta=beta)


def planner_allocation(
    w: np.ndarray, utility: QuadraticUtility, budget: float
) -> tuple[np.ndarray, float]:
    """Maximize sum_i w_i u(x_i, h_i) s.t. sum h_i <= budget, h >= 0.

    Water-filling on the common marginal value k: h_i = (a_i - k/w_i)/beta
    clipped at 0, with k pinned by the budget.  Requires the budget to
    bind (k > 0), i.e. the utility still increasing at the allocation.
    """
    w = np.asarray(w, dtype=float)
    a, beta = utility.a, utility.beta
    if np.any(w <= 0.0):
        raise ValueError("weights must be positive for a full allocation")
    if float((a / beta).sum()) <= budget:
        raise MonotonicityError("budget does not bind; marginal value would be 0")

    def spend(k: float) -> float:
        return float(np.maximum(0.0, (a - k / w) / beta).sum())

    k_hi = float((w * a).max())
    k_lo = 0.0
    for _ in range(200):
        k_mid = 0.5 * (k_lo + k_hi)
        if spend(k_mid) > budget:
            k_lo = k_mid
        else:
            k_hi = k_mid
    k = 0.5 * (k_lo + k_hi)
    h = np.maximum(0.0, (a - k / w) / beta)
    return h, k


def weights_roundtrip_check(
    w: np.ndarray, utility: QuadraticUtility, budget: float
) -> float:
    """Allocate under w, re-derive weights from the marginals, compare.

    Returns max_i |w_i - w_hat_i| over the allocated support (weights
    renormalized over that support when some h_i = 0).
    """
    w = np.asarray(w, dtype=float)
    h, _ = planner_allocation(w, utility, budget)
    m = utility.marginal(h)
    if np.any(m[h > 0] <= 0.0):
        raise MonotonicityError("utility not strictly increasing at the allocation")
    active = h > 0
    profile = implied_weights(m[active], budget)
    w_ref = w[active] / w[active].sum()
    return float(np.max(np.abs(profile.w - w_ref)))
