"""Shared instance generators and fixtures."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from fairpath.data import Dataset, standardize

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
ADULT_ANALOG = DATA_DIR / "adult_analog_500.csv"

SCHEMA_TEXT = """\
age=feature
education-num=feature
hours-per-week=feature
sex=group
income=label
encoding.label.+1=>50K
encoding.label.-1=<=50K
encoding.group.0=Female
encoding.group.1=Male
"""


def make_instance(
    n: int,
    d: int,
    seed: int,
    label_sep: float = 1.4,
    group_shift: float = 0.6,
    label_group_corr: float = 0.35,
    standardized: bool = True,
) -> Dataset:
    """Random two-cluster instance with group-correlated features.

    Group and label are correlated and the group shifts the features
    along a direction nearly orthogonal to the label direction, so the
    covariance bound binds below a nontrivial eps_max while the deflated
    problem keeps its label signal (the strict-convexity condition the
    sensitivity analysis relies on holds generically).
    """
    rng = np.random.default_rng(seed)
    while True:
        y = rng.choice([-1, 1], size=n)
        flip = rng.random(n) > label_group_corr
        z = np.where(y > 0, 1, 0)
        z = np.where(flip, rng.integers(0, 2, size=n), z)
        if 0 < z.sum() < n and 0 < (y > 0).sum() < n:
            break
    dir_y = rng.standard_normal(d)
    dir_y /= np.linalg.norm(dir_y)
    dir_z = rng.standard_normal(d)
    dir_z -= (dir_z @ dir_y) * dir_y  # keep the group shift off the label axis
    if np.linalg.norm(dir_z) < 1e-9:
        dir_z = np.roll(dir_y, 1)
        dir_z -= (dir_z @ dir_y) * dir_y
    dir_z /= np.linalg.norm(dir_z)
    dir_z = 0.95 * dir_z + 0.05 * dir_y
    x = (
        rng.standard_normal((n, d))
        + np.outer(y * label_sep, dir_y)
        + np.outer((z - 0.5) * group_shift, dir_z)
    )
    ds = Dataset(features=x, labels=y, groups=z, ids=())
    return standardize(ds) if standardized else ds


def solver_corpus(count: int, seed0: int = 0, n_max: int = 40) -> list[Dataset]:
    """Random instances kept only if the margin set stays small at eps = 0.

    The mu-equivalence checks presuppose a unique dual optimum, which the
    sensitivity analysis guarantees only under its strict-convexity
    technical condition; instances whose deflated problem collapses
    (margin set larger than d+1 at eps = 0) are regenerated.
    """
    from fairpath.kernel import projected_kernel
    from fairpath.data import group_stats
    from fairpath.solver import solve_dual

    out: list[Dataset] = []
    seed = seed0
    while len(out) < count:
        rng = np.random.default_rng(seed)
        n = int(rng.integers(12, n_max + 1))
        d = int(rng.integers(2, 4))
        ds = make_instance(n, d, seed)
        seed += 1
        stats = group_stats(ds)
        kern = projected_kernel(ds, stats)
        ok = True
        for C in (0.5, 1.0, 2.0):
            sol = solve_dual(kern, ds, C, 0.0)
            if len(sol.support) > d + 1:
                ok = False
                break
        if ok:
            out.append(ds)
    return out


def tiny_separable() -> Dataset:
    """Four points, linearly separable with margin, both groups present."""
    x = np.array([[2.0, 2.0], [3.0, 3.5], [-2.0, -2.0], [-3.0, -2.5]])
    y = np.array([1, 1, -1, -1])
    z = np.array([0, 1, 1, 0])
    return Dataset(features=x, labels=y, groups=z, ids=())


@pytest.fixture(scope="session")
def adult_analog() -> Dataset:
    import io

    from fairpath.data import load_dataset, load_schema

    schema = load_schema(io.StringIO(SCHEMA_TEXT))
    return standardize(load_dataset(ADULT_ANALOG, schema))
