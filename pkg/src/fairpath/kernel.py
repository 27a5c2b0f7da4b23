"""Projection-deflated linear kernel used by the covariance-bounded dual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, GroupStats


@dataclass(frozen=True)
class ProjectedKernel:
    """Gram data after removing feature components along u.

    gram[i, j] = <(I - P_u) x_i, (I - P_u) x_j> with P_u = u u^T / ||u||^2;
    fair_lin[i] = <x_i, u>.  When ``u_norm_sq`` is 0 the constraint is
    vacuous: ``gram`` equals the raw Gram matrix and ``fair_lin`` is 0.
    """

    u: np.ndarray
    u_norm_sq: float
    gram: np.ndarray
    fair_lin: np.ndarray

    def __post_init__(self):
        for name in ("u", "gram", "fair_lin"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def vacuous(self) -> bool:
        return self.u_norm_sq == 0.0

    def raw_gram(self) -> np.ndarray:
        """Undeflated Gram matrix <x_i, x_j>."""
        if self.vacuous:
            return self.gram
        return self.gram + np.outer(self.fair_lin, self.fair_lin) / self.u_norm_sq


def projected_kernel(ds: Dataset, stats: GroupStats) -> ProjectedKernel:
    """Build the deflated Gram matrix and the per-point <x_i, u> vector.

    A ||u||^2 below round-off of its own accumulation (relative to the
    feature scale) is snapped to exactly 0 so downstream code can branch
    on ``vacuous`` without tolerance juggling.
    """
    x = ds.features
    u = stats.u
    u_norm_sq = float(u @ u)
    scale = float(np.abs(x).max(initial=0.0)) * ds.n
    if u_norm_sq <= (1e-12 * max(scale, 1.0)) ** 2:
        gram = x @ x.T
        return ProjectedKernel(
            u=np.zeros(ds.d),
            u_norm_sq=0.0,
            gram=gram,
            fair_lin=np.zeros(ds.n),
        )
    fair_lin = x @ u
    x_defl = x - np.outer(fair_lin / u_norm_sq, u)
    gram = x_defl @ x_defl.T
    gram = 0.5 * (gram + gram.T)  # enforce exact symmetry
    return ProjectedKernel(u=u, u_norm_sq=u_norm_sq, gram=gram, fair_lin=fair_lin)
