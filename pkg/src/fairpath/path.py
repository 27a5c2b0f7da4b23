"""Exact piecewise-linear path of the dual variables as the tolerance varies.

Starting from the solution at eps = 0, each stable segment moves the
support-set multipliers linearly with slopes from a bordered linear
system; segment ends are the first membership transition among the
free/support/error sets.  Tracing stops where the covariance bound
ceases to bind (eps_max, the unconstrained solution's covariance gap).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, GroupStats, group_stats
from .kernel import ProjectedKernel, projected_kernel
from .solver import (
    DualSolution,
    SolverError,
    classify_from_gradient,
    dual_objective,
    recover_primal,
    solve_dual,
)
from .welfare import (
    A_DOMINATES,
    B_DOMINATES,
    EQUAL,
    WelfareTriple,
    group_welfare_counts,
    group_welfare_exact,
    group_welfare_heuristic,
    pareto_compare,
)

SIMULTANEOUS_TOL = 1e-10
CONTINUITY_FACTOR = 1e-7
REPAIR_KKT_TOL = 1e-5

EVENT_E_TO_S = "E->S"
EVENT_F_TO_S = "F->S"
EVENT_S_TO_F = "S->F"
EVENT_S_TO_E = "S->E"
EVENT_TERMINAL = "terminal"
EVENT_START = "start"


class PathDegenerateError(RuntimeError):
    """Bordered slope system is singular even after jitter."""


class PathIncompleteError(RuntimeError):
    """Event budget exhausted; carries the partial path."""

    def __init__(self, message: str, path: "SolutionPath"):
        super().__init__(message)
        self.path = path


@dataclass(frozen=True)
class SlopeSystem:
    """Per-unit-eps slopes of the offset (r0) and support multipliers (r)."""

    r0: float
    r: np.ndarray  # length n; zero off the support set
    support: tuple[int, ...]
    matrix: np.ndarray
    rhs: np.ndarray
    residual: float
    jittered: bool

    def __post_init__(self):
        for name in ("r", "matrix", "rhs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class StableRange:
    """Perturbation interval (lower, upper) keeping the partition fixed.

    ``m``/``M`` expose every point's individual lower/upper threshold;
    the binding indices and their transition kinds identify the events
    at each end.
    """

    lower: float
    upper: float
    lower_index: int | None
    lower_kind: str | None
    upper_index: int | None
    upper_kind: str | None
    m: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        for name in ("m", "M"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class SegmentWelfare:
    triple: WelfareTriple  # p plus heuristic group welfares
    w0_exact: float
    w1_exact: float
    count0: int
    count1: int


@dataclass(frozen=True)
class PathSegment:
    eps_lo: float
    eps_hi: float
    mu_lo: np.ndarray
    b_lo: float
    r0: float
    r: np.ndarray
    d: np.ndarray
    g: np.ndarray
    free: tuple[int, ...]
    support: tuple[int, ...]
    error: tuple[int, ...]
    welfare: SegmentWelfare

    def __post_init__(self):
        for name in ("mu_lo", "r", "d", "g"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def mu_at(self, eps: float) -> np.ndarray:
        return self.mu_lo + self.r * (eps - self.eps_lo)

    def b_at(self, eps: float) -> float:
        return self.b_lo + self.r0 * (eps - self.eps_lo)


@dataclass(frozen=True)
class Breakpoint:
    eps: float
    kind: str
    index: int | None
    welfare_before: WelfareTriple | None
    welfare_after: WelfareTriple | None


@dataclass(frozen=True)
class SolutionPath:
    """Breakpoints, per-segment slopes, and welfare data over [0, eps_max]."""

    C: float
    sign: int
    eps_max: float
    n: int
    segments: tuple[PathSegment, ...]
    breakpoints: tuple[Breakpoint, ...]
    terminal_mu: np.ndarray
    terminal_b: float
    terminal_welfare: SegmentWelfare
    ids: tuple[str, ...]
    diagnostics: tuple[str, ...]
    complete: bool = True

    def __post_init__(self):
        arr = np.asarray(self.terminal_mu, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "terminal_mu", arr)

    def mu_at(self, eps: float) -> np.ndarray:
        if eps >= self.eps_max or not self.segments:
            return self.terminal_mu.copy()
        for seg in self.segments:
            if seg.eps_lo <= eps <= seg.eps_hi:
                return seg.mu_at(eps)
        return self.segments[-1].mu_at(eps)

    def welfare_at(self, eps: float) -> SegmentWelfare:
        if eps >= self.eps_max or not self.segments:
            return self.terminal_welfare
        for seg in self.segments:
            if seg.eps_lo <= eps < seg.eps_hi:
                return seg.welfare
        return self.segments[-1].welfare

    @property
    def eps_nodes(self) -> np.ndarray:
        """Segment endpoints: 0, each interior breakpoint, eps_max."""
        if not self.segments:
            return np.array([self.eps_max])
        return np.array([s.eps_lo for s in self.segments] + [self.eps_max])

    @property
    def mu_nodes(self) -> np.ndarray:
        if not self.segments:
            return self.terminal_mu[None, :]
        rows = [s.mu_lo for s in self.segments]
        rows.append(self.segments[-1].mu_at(self.eps_max))
        return np.vstack(rows)


def gradient_at(
    kern: ProjectedKernel,
    labels: np.ndarray,
    C: float,
    eps: float,
    sign: int,
    mu: np.ndarray,
    b: float,
) -> np.ndarray:
    """grad_j = sum_i mu_i y_i y_j K_ij + s n eps y_j <x_j,u>/||u||^2 + b y_j - 1."""
    y = labels.astype(float)
    grad = y * (kern.gram @ (y * mu)) + b * y - 1.0
    if sign != 0 and not kern.vacuous:
        grad = grad + sign * mu.shape[0] * eps / kern.u_norm_sq * (y * kern.fair_lin)
    return grad


def slopes(
    support: tuple[int, ...],
    labels: np.ndarray,
    kern: ProjectedKernel,
    sign: int,
) -> SlopeSystem:
    """Solve the bordered system for the support-set sensitivities.

    Row 0 keeps sum_i mu_i y_i = 0; the remaining rows keep the support
    gradients at zero as eps moves.  A numerically singular kernel block
    gets diagonal jitter (1e-10 * trace / |S|) before failing.
    """
    n = labels.shape[0]
    s_idx = np.asarray(support, dtype=int)
    k = s_idx.size
    if k == 0:
        raise PathDegenerateError("empty support set; slope system undefined")
    y_s = labels[s_idx].astype(float)
    mat = np.zeros((k + 1, k + 1))
    mat[0, 1:] = y_s
    mat[1:, 0] = y_s
    mat[1:, 1:] = np.outer(y_s, y_s) * kern.gram[np.ix_(s_idx, s_idx)]
    v = np.zeros(k + 1)
    if kern.vacuous:
        scale = 0.0
    else:
        v[1:] = y_s * kern.fair_lin[s_idx]
        scale = -sign * n / kern.u_norm_sq
    v_norm = float(np.linalg.norm(v))
    jittered = False
    work = mat
    for attempt in range(2):
        try:
            sol = np.linalg.solve(work, v)
        except np.linalg.LinAlgError:
            sol = None
        if sol is not None:
            residual = float(np.linalg.norm(work @ sol - v))
            if residual <= 1e-9 * max(v_norm, 1e-30):
                break
        if attempt == 1:
            raise PathDegenerateError(
                f"slope system singular for support of size {k}"
            )
        jitter = 1e-10 * float(np.trace(mat[1:, 1:])) / k
        work = mat.copy()
        work[1:, 1:] += np.eye(k) * max(jitter, 1e-300)
        jittered = True
    r_full = np.zeros(n)
    r_full[s_idx] = sol[1:] * scale
    return SlopeSystem(
        r0=float(sol[0] * scale),
        r=r_full,
        support=tuple(int(i) for i in s_idx),
        matrix=mat,
        rhs=v * scale,
        residual=float(np.linalg.norm(work @ sol - v)),
        jittered=jittered,
    )


def cross_derivatives(
    slope_sys: SlopeSystem,
    kern: ProjectedKernel,
    labels: np.ndarray,
    sign: int,
) -> np.ndarray:
    """Per-unit-eps drift of every gradient entry under the segment slopes.

    d_j = sum_{i in S} r_i y_i y_j K_ij + r0 y_j + s n y_j <x_j,u>/||u||^2.
    The explicit tolerance term is included: it is what the gradient's
    own eps dependence contributes, and the support rows of the slope
    system cancel exactly against it (d_j = 0 on the support set).
    """
    y = labels.astype(float)
    n = y.shape[0]
    d = y * (kern.gram @ (y * slope_sys.r)) + slope_sys.r0 * y
    if sign != 0 and not kern.vacuous:
        d = d + sign * n / kern.u_norm_sq * (y * kern.fair_lin)
    return d


def stable_range(
    mu: np.ndarray,
    grad: np.ndarray,
    C: float,
    free: tuple[int, ...],
    support: tuple[int, ...],
    error: tuple[int, ...],
    slope_sys: SlopeSystem,
    d: np.ndarray,
) -> StableRange:
    """Largest perturbation interval with no membership transitions.

    Free/error points bound the move by g_j / d_j (g_j = -grad_j) on the
    side where their gradient drifts toward zero; support points bound it
    where mu_j + r_j * delta would hit 0 or C.
    """
    n = mu.shape[0]
    m = np.full(n, -np.inf)
    M = np.full(n, np.inf)
    kind_lo: dict[int, str] = {}
    kind_hi: dict[int, str] = {}
    g = -grad
    for j in free:
        dj = d[j]
        if dj > 0.0:
            m[j] = g[j] / dj
            kind_lo[j] = EVENT_F_TO_S
        elif dj < 0.0:
            M[j] = g[j] / dj
            kind_hi[j] = EVENT_F_TO_S
    for j in error:
        dj = d[j]
        if dj > 0.0:
            M[j] = g[j] / dj
            kind_hi[j] = EVENT_E_TO_S
        elif dj < 0.0:
            m[j] = g[j] / dj
            kind_lo[j] = EVENT_E_TO_S
    for j in support:
        rj = slope_sys.r[j]
        if rj > 0.0:
            m[j] = -mu[j] / rj
            M[j] = (C - mu[j]) / rj
            kind_lo[j] = EVENT_S_TO_F
            kind_hi[j] = EVENT_S_TO_E
        elif rj < 0.0:
            m[j] = (C - mu[j]) / rj
            M[j] = -mu[j] / rj
            kind_lo[j] = EVENT_S_TO_E
            kind_hi[j] = EVENT_S_TO_F
    lower = float(np.max(m)) if n else -np.inf
    upper = float(np.min(M)) if n else np.inf
    lower_index = int(np.argmax(m)) if np.isfinite(lower) else None
    upper_index = int(np.argmin(M)) if np.isfinite(upper) else None
    return StableRange(
        lower=lower,
        upper=upper,
        lower_index=lower_index,
        lower_kind=kind_lo.get(lower_index) if lower_index is not None else None,
        upper_index=upper_index,
        upper_kind=kind_hi.get(upper_index) if upper_index is not None else None,
        m=m,
        M=M,
    )


@dataclass
class _TraceState:
    eps: float
    mu: np.ndarray
    b: float
    free: list[int]
    support: list[int]
    error: list[int]


def _segment_welfare(
    kern: ProjectedKernel,
    ds: Dataset,
    stats: GroupStats,
    C: float,
    sign: int,
    mu: np.ndarray,
    b: float,
    eps: float,
) -> SegmentWelfare:
    """Welfare triple evaluated at one tolerance value inside a segment."""
    p = -dual_objective(kern, ds, C, eps, sign, mu)
    w0h, w1h = group_welfare_heuristic(mu, ds.labels, ds.groups, C)
    c0, c1 = group_welfare_counts(mu, ds.labels, ds.groups, C)
    y = ds.labels.astype(float)
    theta = (mu * y) @ ds.features
    if sign != 0 and not kern.vacuous:
        cov_term = float((mu * y) @ kern.fair_lin) / ds.n
        gamma = ds.n * ds.n * (cov_term - sign * eps) / kern.u_norm_sq
        theta = theta - (gamma / ds.n) * stats.u
    vals = ds.features @ theta + b
    pos = np.where(vals >= 0.0, 1.0, 0.0)
    z = ds.groups
    w0e = float(pos[z == 0].mean())
    w1e = float(pos[z == 1].mean())
    return SegmentWelfare(
        triple=WelfareTriple(p=p, w0=w0h, w1=w1h),
        w0_exact=w0e,
        w1_exact=w1e,
        count0=c0,
        count1=c1,
    )


def _kkt_residual(
    kern: ProjectedKernel,
    labels: np.ndarray,
    C: float,
    eps: float,
    sign: int,
    state: _TraceState,
) -> float:
    grad = gradient_at(kern, labels, C, eps, sign, state.mu, state.b)
    res = abs(float(state.mu @ labels)) / max(C, 1.0)
    if state.support:
        res = max(res, float(np.max(np.abs(grad[state.support]))))
    if state.free:
        res = max(res, float(np.max(np.maximum(0.0, -grad[state.free]))))
    if state.error:
        res = max(res, float(np.max(np.maximum(0.0, grad[state.error]))))
    res = max(res, float(np.max(-state.mu, initial=0.0)) / max(C, 1.0))
    res = max(res, float(np.max(state.mu - C, initial=0.0)) / max(C, 1.0))
    return res


def _apply_events(
    state: _TraceState, events: list[tuple[int, str]], C: float
) -> None:
    tol = CONTINUITY_FACTOR * C
    for j, kind in events:
        if kind == EVENT_E_TO_S:
            assert abs(state.mu[j] - C) <= tol, "discontinuous E->S multiplier"
            state.mu[j] = C
            state.error.remove(j)
            state.support.append(j)
        elif kind == EVENT_F_TO_S:
            assert abs(state.mu[j]) <= tol, "discontinuous F->S multiplier"
            state.mu[j] = 0.0
            state.free.remove(j)
            state.support.append(j)
        elif kind == EVENT_S_TO_F:
            assert abs(state.mu[j]) <= tol, "discontinuous S->F multiplier"
            state.mu[j] = 0.0
            state.support.remove(j)
            state.free.append(j)
        elif kind == EVENT_S_TO_E:
            assert abs(state.mu[j] - C) <= tol, "discontinuous S->E multiplier"
            state.mu[j] = C
            state.support.remove(j)
            state.error.append(j)
        else:
            raise ValueError(f"unknown event kind {kind!r}")
    state.support.sort()
    state.free.sort()
    state.error.sort()


def advance(
    state: _TraceState,
    slope_sys: SlopeSystem,
    rng: StableRange,
    delta: float,
    events: list[tuple[int, str]],
    C: float,
) -> None:
    """Move the state to eps + delta along the segment and apply events."""
    s = state.support
    state.mu[s] = state.mu[s] + slope_sys.r[s] * delta
    np.clip(state.mu, 0.0, C, out=state.mu)
    state.b += slope_sys.r0 * delta
    state.eps += delta
    _apply_events(state, events, C)


def _state_from_solution(sol: DualSolution) -> _TraceState:
    return _TraceState(
        eps=sol.epsilon,
        mu=sol.mu.copy(),
        b=sol.b,
        free=list(sol.free),
        support=list(sol.support),
        error=list(sol.error),
    )


def _diff_partitions(before: _TraceState, after: _TraceState) -> list[tuple[int, str]]:
    def setname(st: _TraceState, j: int) -> str:
        if j in st.free:
            return "F"
        if j in st.error:
            return "E"
        return "S"

    out = []
    for j in range(before.mu.shape[0]):
        a, b = setname(before, j), setname(after, j)
        if a != b:
            out.append((j, f"{a}->{b}"))
    return out


def trace_path(
    ds: Dataset,
    C: float,
    tol: float = 1e-8,
    max_events: int | None = None,
) -> SolutionPath:
    """Trace mu(eps) upward from eps = 0 until the bound stops binding.

    Each iteration solves the slope system, finds the stable range, and
    advances to its upper end; a failed post-advance KKT check triggers a
    cold re-solve (recorded as a repair).  Welfares are evaluated at
    segment midpoints to avoid boundary ambiguity.
    """
    stats = group_stats(ds)
    kern = projected_kernel(ds, stats)
    if max_events is None:
        max_events = 10 * ds.n
    diagnostics: list[str] = [
        "cross-derivatives include the explicit tolerance gradient term"
    ]
    sol0 = solve_dual(kern, ds, C, 0.0, tol=tol)
    eps_max = sol0.eps_max

    term_sol = solve_dual(kern, ds, C, eps_max, tol=tol)
    term_welfare = _segment_welfare(
        kern, ds, stats, C, 0, term_sol.mu, term_sol.b, eps_max
    )

    if kern.vacuous or eps_max <= 0.0:
        return SolutionPath(
            C=C,
            sign=0,
            eps_max=eps_max,
            n=ds.n,
            segments=(),
            breakpoints=(
                Breakpoint(
                    eps=eps_max,
                    kind=EVENT_TERMINAL,
                    index=None,
                    welfare_before=None,
                    welfare_after=term_welfare.triple,
                ),
            ),
            terminal_mu=term_sol.mu.copy(),
            terminal_b=term_sol.b,
            terminal_welfare=term_welfare,
            ids=ds.ids,
            diagnostics=tuple(diagnostics),
        )

    sign = sol0.sign
    labels = ds.labels
    state = _state_from_solution(sol0)
    segments: list[PathSegment] = []
    raw_events: list[tuple[float, str, int | None]] = []
    complete = True

    def cold_resolve(eps: float, note: str) -> None:
        nonlocal state
        prev = state
        try:
            sol = solve_dual(kern, ds, C, min(eps, eps_max), tol=tol)
        except SolverError:
            # Degenerate repair solves may stall just above the target
            # tolerance; accept a looser KKT point and note it.
            sol = solve_dual(kern, ds, C, min(eps, eps_max), tol=100.0 * tol)
            note = f"{note}; relaxed tolerance"
        state = _state_from_solution(sol)
        moved = _diff_partitions(prev, state)
        diagnostics.append(
            f"repair: cold re-solve at eps={eps:.12g} ({note}); moves={moved}"
        )

    repairs = 0  # consecutive repairs without a completed segment

    def repair_nudge() -> float:
        base = 1e-8 * (4.0 ** max(repairs - 1, 0))
        return min(base, (eps_max - state.eps) / 2.0)

    while state.eps < eps_max - 1e-15:
        if len(segments) >= max_events or repairs > 40:
            complete = False
            diagnostics.append(
                f"budget exhausted at eps={state.eps:.12g} "
                f"(segments={len(segments)}, consecutive repairs={repairs})"
            )
            break
        slope_sys = None
        if state.support:
            try:
                slope_sys = slopes(tuple(state.support), labels, kern, sign)
            except PathDegenerateError:
                pass
        if slope_sys is None:
            repairs += 1
            cold_resolve(
                state.eps + repair_nudge(),
                "empty support set" if not state.support else "degenerate slope system",
            )
            continue
        d = cross_derivatives(slope_sys, kern, labels, sign)
        grad = gradient_at(kern, labels, C, state.eps, sign, state.mu, state.b)
        rng = stable_range(
            state.mu,
            grad,
            C,
            tuple(state.free),
            tuple(state.support),
            tuple(state.error),
            slope_sys,
            d,
        )
        remaining = eps_max - state.eps
        terminal_here = not np.isfinite(rng.upper) or rng.upper >= remaining - 1e-12
        delta = remaining if terminal_here else rng.upper
        if not terminal_here and delta <= 1e-12:
            repairs += 1
            cold_resolve(state.eps + repair_nudge(), "zero-length segment")
            continue
        repairs = 0
        eps_mid = state.eps + delta / 2.0
        mu_mid = state.mu + slope_sys.r * (delta / 2.0)
        b_mid = state.b + slope_sys.r0 * (delta / 2.0)
        welfare = _segment_welfare(kern, ds, stats, C, sign, mu_mid, b_mid, eps_mid)
        segments.append(
            PathSegment(
                eps_lo=state.eps,
                eps_hi=state.eps + delta,
                mu_lo=state.mu.copy(),
                b_lo=state.b,
                r0=slope_sys.r0,
                r=slope_sys.r.copy(),
                d=d.copy(),
                g=(-grad).copy(),
                free=tuple(state.free),
                support=tuple(state.support),
                error=tuple(state.error),
                welfare=welfare,
            )
        )
        if terminal_here:
            raw_events.append((eps_max, EVENT_TERMINAL, None))
            break
        hitters = [
            (int(j), kind)
            for j, kind in (
                (j, _upper_kind_for(j, state, slope_sys, d))
                for j in np.flatnonzero(rng.M <= rng.upper + SIMULTANEOUS_TOL)
            )
            if kind is not None
        ]
        advance(state, slope_sys, rng, delta, hitters, C)
        raw_events.append((state.eps, hitters[0][1], hitters[0][0]))
        if len(hitters) > 1:
            diagnostics.append(
                f"simultaneous events at eps={state.eps:.12g}: {hitters}"
            )
            cold_resolve(state.eps, "simultaneous breakpoints")
            continue
        res = _kkt_residual(kern, labels, C, state.eps, sign, state)
        if res > REPAIR_KKT_TOL:
            cold_resolve(state.eps, f"post-advance KKT residual {res:.3e}")

    if complete and (not raw_events or raw_events[-1][1] != EVENT_TERMINAL):
        raw_events.append((eps_max, EVENT_TERMINAL, None))

    breakpoints: list[Breakpoint] = []
    for i, (eps, kind, index) in enumerate(raw_events):
        before = segments[i].welfare.triple if i < len(segments) else None
        if kind == EVENT_TERMINAL:
            after = term_welfare.triple
        else:
            after = (
                segments[i + 1].welfare.triple
                if i + 1 < len(segments)
                else term_welfare.triple
            )
        breakpoints.append(
            Breakpoint(
                eps=eps, kind=kind, index=index, welfare_before=before, welfare_after=after
            )
        )

    path = SolutionPath(
        C=C,
        sign=sign,
        eps_max=eps_max,
        n=ds.n,
        segments=tuple(segments),
        breakpoints=tuple(breakpoints),
        terminal_mu=term_sol.mu.copy(),
        terminal_b=term_sol.b,
        terminal_welfare=term_welfare,
        ids=ds.ids,
        diagnostics=tuple(diagnostics),
        complete=complete,
    )
    if not complete:
        raise PathIncompleteError("path tracing exhausted its budget", path)
    return path


def _upper_kind_for(
    j: int, state: _TraceState, slope_sys: SlopeSystem, d: np.ndarray
) -> str | None:
    j = int(j)
    if j in state.support:
        return EVENT_S_TO_E if slope_sys.r[j] > 0 else EVENT_S_TO_F
    if j in state.free:
        return EVENT_F_TO_S
    if j in state.error:
        return EVENT_E_TO_S
    return None


def classify_event(bp: Breakpoint) -> str:
    """Pareto tag for the more-fair (lower-eps) side of a breakpoint.

    'dominates': the lower-eps triple dominates the higher-eps one;
    'dominated': it is dominated; 'neutral': equal; 'mixed': incomparable.
    """
    if bp.welfare_before is None or bp.welfare_after is None:
        return "neutral"
    cmp = pareto_compare(bp.welfare_before, bp.welfare_after)
    if cmp == A_DOMINATES:
        return "dominates"
    if cmp == B_DOMINATES:
        return "dominated"
    if cmp == EQUAL:
        return "neutral"
    return "mixed"
