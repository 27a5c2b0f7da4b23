"""Enumerate all labelings of a point set achievable by affine hyperplanes.

For every size-d subset V and every free vertex v in V, the hyperplane
through V is rotated about the flat spanned by V \\ {v} away from v, then
translated toward v, leaving every point strictly off the plane; the
induced sign vector is recorded (both orientations).  The two all-one-side
labelings are added directly with a hyperplane beyond the hull.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

log = logging.getLogger(__name__)


class DegeneracyError(RuntimeError):
    """Points remain degenerate after the perturbation budget."""


@dataclass(frozen=True)
class PointCloud:
    """n points in R^d with a general-position certificate.

    The certificate holds when every (d+1)-subset is affinely
    independent (scaled determinant test, relative tolerance 1e-10).
    """

    points: np.ndarray
    general_position: bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be 2-D, got shape {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class LabelingWitness:
    """A sign vector with a hyperplane strictly realizing it.

    Every point satisfies signs_i * (theta^T x_i + b) > 0; ``margin`` is
    the smallest such normalized clearance.
    """

    signs: tuple[int, ...]
    theta: np.ndarray
    b: float
    margin: float

    def __post_init__(self):
        arr = np.asarray(self.theta, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "theta", arr)

    def decision_values(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.theta + self.b

    def flipped(self) -> "LabelingWitness":
        return LabelingWitness(
            signs=tuple(-s for s in self.signs),
            theta=-self.theta,
            b=-self.b,
            margin=self.margin,
        )


def check_general_position(points: np.ndarray, rel_tol: float = 1e-10) -> bool:
    """True iff every (d+1)-subset of points is affinely independent."""
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    if n <= d:
        # Fewer points than d+1: only require full affine independence.
        subsets = [tuple(range(n))] if n >= 2 else []
        for idx in subsets:
            diffs = pts[list(idx[1:])] - pts[idx[0]]
            if np.linalg.matrix_rank(diffs, tol=rel_tol * max(1.0, np.abs(pts).max())) < len(idx) - 1:
                return False
        return True
    scale = max(1.0, float(np.abs(pts).max()))
    for idx in itertools.combinations(range(n), d + 1):
        diffs = (pts[list(idx[1:])] - pts[idx[0]]) / scale
        det = float(np.linalg.det(diffs))
        if abs(det) <= rel_tol:
            return False
    return True


def make_point_cloud(points: np.ndarray) -> PointCloud:
    pts = np.asarray(points, dtype=float)
    return PointCloud(points=pts, general_position=check_general_position(pts))


def perturb_degenerate(pc: PointCloud, seed: int, max_attempts: int = 100) -> PointCloud:
    """Seeded jitter of magnitude 1e-7 * data scale until the certificate holds."""
    if pc.general_position:
        return pc
    rng = np.random.default_rng(seed)
    scale = float(np.abs(pc.points).max())
    if scale == 0.0:
        scale = 1.0
    for attempt in range(1, max_attempts + 1):
        jitter = rng.standard_normal(pc.points.shape) * (1e-7 * scale * attempt)
        pts = pc.points + jitter
        if check_general_position(pts):
            log.info("perturb_degenerate: certificate restored after %d attempt(s)", attempt)
            return PointCloud(points=pts, general_position=True)
    raise DegeneracyError(f"still degenerate after {max_attempts} perturbations")


def _hyperplane_through(pts: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Unit normal and offset of the hyperplane through d points (None if degenerate)."""
    d = pts.shape[1]
    if d == 1:
        return np.ones(1), float(pts[0, 0])
    diffs = pts[1:] - pts[0]
    _, svals, vt = np.linalg.svd(diffs)
    if svals.size and svals[-1] <= 1e-12 * max(svals[0], 1.0):
        return None
    theta = vt[-1]
    return theta, float(theta @ pts[0])


def _ridge_rotation_direction(
    theta: np.ndarray, ridge: np.ndarray
) -> tuple[np.ndarray, float] | None:
    """A second hyperplane (phi, psi) through the ridge, orthogonal to theta."""
    d = theta.shape[0]
    if ridge.shape[0] <= 1:
        # Ridge is a point (d = 2) or empty: any direction orthogonal to theta.
        basis = np.eye(d)
    else:
        diffs = ridge[1:] - ridge[0]
        _, svals, vt = np.linalg.svd(diffs, full_matrices=True)
        rank = int(np.sum(svals > 1e-12 * max(svals[0] if svals.size else 1.0, 1.0)))
        if rank < ridge.shape[0] - 1:
            return None
        basis = vt[rank:]  # orthogonal complement of the ridge directions
    # Remove the theta component; what is left spans the rotation plane.
    proj = basis - np.outer(basis @ theta, theta)
    norms = np.linalg.norm(proj, axis=1)
    k = int(np.argmax(norms))
    if norms[k] <= 1e-12:
        return None
    phi = proj[k] / norms[k]
    anchor = ridge[0] if ridge.shape[0] else None
    psi = float(phi @ anchor) if anchor is not None else 0.0
    return phi, psi


def pivot_translate(
    points: np.ndarray,
    subset: tuple[int, ...],
    free_vertex: int,
    shrink_budget: int = 80,
) -> LabelingWitness:
    """Rotate the subset hyperplane away from the free vertex, then translate.

    The rotation angle and translation are chosen adaptively, starting
    from half the clearance of the off-plane points and halving until no
    point changes side; the free vertex ends strictly positive and the
    pivot set strictly negative.
    """
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    v = free_vertex
    ridge_idx = [i for i in subset if i != v]
    base = _hyperplane_through(pts[list(subset)])
    if base is None:
        raise DegeneracyError(f"subset {subset} is affinely dependent")
    theta, b = base
    vals = pts @ theta - b
    off = [i for i in range(n) if i not in subset]
    off_vals = vals[off] if off else np.array([1.0])

    if d >= 2:
        rot = _ridge_rotation_direction(theta, pts[ridge_idx])
        if rot is None:
            raise DegeneracyError(f"ridge of subset {subset} is degenerate")
        phi, psi = rot
        v_move = float(pts[v] @ phi - psi)
        if v_move == 0.0:
            raise DegeneracyError(f"free vertex {v} lies on the ridge flat")
        direction = 1.0 if v_move > 0 else -1.0
        phi_vals = pts @ phi - psi
        denom = float(np.abs(phi_vals[off]).max()) if off else 1.0
        t = 0.5 * float(np.abs(off_vals).min()) / max(denom, 1e-30)
        ok = False
        for _ in range(shrink_budget):
            new_vals = vals + direction * t * phi_vals
            if (
                new_vals[v] > 0.0
                and (not off or np.all(np.sign(new_vals[off]) == np.sign(off_vals)))
            ):
                ok = True
                break
            t *= 0.5
        if not ok:
            raise DegeneracyError(f"no admissible rotation for subset {subset}")
        theta = theta + direction * t * phi
        b = b + direction * t * psi
        vals = new_vals
    else:
        # d = 1: the hyperplane is the point itself; only the translate applies.
        pass

    # Translate toward the free vertex: ridge points go strictly negative.
    moving = [i for i in range(n) if i != v and vals[i] != 0.0]
    clearance = float(np.abs(vals[moving]).min()) if moving else abs(vals[v]) or 1.0
    if d == 1:
        b = b - 0.5 * clearance
    else:
        delta = 0.5 * min(vals[v], clearance)
        ok = False
        for _ in range(shrink_budget):
            new_vals = vals - delta
            signs_prev = np.sign(vals[off]) if off else np.array([])
            if (
                new_vals[v] > 0.0
                and all(new_vals[i] < 0.0 for i in ridge_idx)
                and (not off or np.all(np.sign(new_vals[off]) == signs_prev))
            ):
                ok = True
                break
            delta *= 0.5
        if not ok:
            raise DegeneracyError(f"no admissible translation for subset {subset}")
        b = b + delta

    final = pts @ theta - b
    if np.any(final == 0.0) or final[v] <= 0.0:
        raise DegeneracyError(f"degenerate final position for subset {subset}")
    signs = tuple(1 if x > 0 else -1 for x in final)
    margin = float(np.min(signs * final) / np.linalg.norm(theta))
    if margin <= 0.0:
        raise DegeneracyError(f"nonpositive margin for subset {subset}")
    return LabelingWitness(signs=signs, theta=theta, b=float(-b), margin=margin)


@dataclass(frozen=True)
class EnumerationResult:
    """Deduplicated labelings plus the operation count used for scaling checks."""

    witnesses: tuple[LabelingWitness, ...]
    work: int  # pivot-translate operations performed
    skipped_subsets: int

    @property
    def sign_vectors(self) -> set[tuple[int, ...]]:
        return {w.signs for w in self.witnesses}


def _trivial_witnesses(pts: np.ndarray) -> list[LabelingWitness]:
    n, d = pts.shape
    theta = np.zeros(d)
    theta[0] = 1.0
    b = 1.0 - float((pts @ theta).min())  # plane strictly below the hull
    margin = float((pts @ theta + b).min())
    all_pos = LabelingWitness(signs=(1,) * n, theta=theta, b=b, margin=margin)
    return [all_pos, all_pos.flipped()]


def enumerate_labelings(pc: PointCloud, threads: int = 1) -> EnumerationResult:
    """All sign vectors achievable by an affine hyperplane, with witnesses.

    Requires n > d.  Degenerate subsets are skipped (and logged) when the
    cloud carries no general-position certificate; certified clouds never
    hit them.
    """
    pts = pc.points
    n, d = pts.shape
    if n <= d:
        raise ValueError(f"need more points than dimensions (n={n}, d={d})")
    found: dict[tuple[int, ...], LabelingWitness] = {}
    for w in _trivial_witnesses(pts):
        found.setdefault(w.signs, w)
    work = 0
    skipped = 0

    def handle(subset: tuple[int, ...]) -> tuple[int, int, list[LabelingWitness]]:
        ops = 0
        out: list[LabelingWitness] = []
        for v in subset:
            ops += 1
            try:
                w = pivot_translate(pts, subset, v)
            except DegeneracyError:
                if pc.general_position:
                    raise
                return ops, 1, out
            out.append(w)
        return ops, 0, out

    subsets = itertools.combinations(range(n), d)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(handle, subsets))
    else:
        results = [handle(s) for s in subsets]
    for ops, skip, wits in results:
        work += ops
        skipped += skip
        if skip:
            log.info("enumerate_labelings: skipped a degenerate subset")
        for w in wits:
            found.setdefault(w.signs, w)
            flipped = w.flipped()
            found.setdefault(flipped.signs, flipped)
    ordered = tuple(found[k] for k in sorted(found))
    return EnumerationResult(witnesses=ordered, work=work, skipped_subsets=skipped)


def separability_oracle(
    pc: PointCloud, signs
) -> tuple[bool, LabelingWitness | None]:
    """Decide strict separability of a sign vector by linear feasibility.

    Solves signs_i (theta^T x_i + b) >= 1 with free variables; returns a
    witness on success.
    """
    pts = pc.points
    n, d = pts.shape
    s = np.asarray(signs, dtype=float)
    if s.shape != (n,) or not np.all(np.isin(s, (-1.0, 1.0))):
        raise ValueError("signs must be a length-n vector over {-1,+1}")
    A_ub = -s[:, None] * np.hstack([pts, np.ones((n, 1))])
    b_ub = -np.ones(n)
    res = linprog(
        c=np.zeros(d + 1),
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=[(None, None)] * (d + 1),
        method="highs",
    )
    if not res.success:
        return False, None
    theta = res.x[:d]
    b = float(res.x[d])
    vals = pts @ theta + b
    margin = float(np.min(s * vals) / max(np.linalg.norm(theta), 1e-300))
    if margin <= 0.0:
        return False, None
    witness = LabelingWitness(
        signs=tuple(int(x) for x in s), theta=theta, b=b, margin=margin
    )
    return True, witness


def cover_count(n: int, d: int) -> int:
    """Number of hyperplane-achievable labelings of n general-position points in R^d."""
    from math import comb

    return 2 * sum(comb(n - 1, k) for k in range(d + 1))
