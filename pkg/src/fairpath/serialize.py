"""Deterministic JSON/CSV writers for the file contracts.

Floats serialize with 17 significant digits, which round-trips IEEE
doubles bit-exactly; key order is fixed by construction so repeated runs
produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .path import Breakpoint, SolutionPath, classify_event
from .solver import DualSolution, PrimalSolution


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def dumps_canonical(obj: Any, indent: int = 0) -> str:
    """JSON text with .17g floats; dict order is preserved as given."""
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {dumps_canonical(v, indent + 2)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj.tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        flat = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq)
        if flat:
            return "[" + ", ".join(dumps_canonical(v) for v in seq) + "]"
        items = [f"{pad}  {dumps_canonical(v, indent + 2)}" for v in seq]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    return json.dumps(obj)


def solution_to_dict(sol: DualSolution, primal: PrimalSolution) -> dict:
    return {
        "epsilon": sol.epsilon,
        "C": sol.C,
        "objective": sol.objective,
        "mu": sol.mu,
        "b": sol.b,
        "gamma": sol.gamma,
        "beta_minus": sol.beta_minus,
        "beta_plus": sol.beta_plus,
        "partition": {
            "F": list(sol.free),
            "S": list(sol.support),
            "E": list(sol.error),
        },
        "theta": primal.theta,
        "cov_gap": primal.cov_gap,
        "xi": primal.xi,
        "hinge_loss": primal.hinge_loss,
        "sign": sol.sign,
        "binding": sol.binding,
        "eps_max": sol.eps_max,
        "kkt_violation": sol.kkt_violation,
        "offset_bracketed": primal.offset_bracketed,
    }


def solution_from_dict(doc: dict) -> tuple[dict, np.ndarray, np.ndarray]:
    """Parsed solution document: (raw dict, mu array, theta array)."""
    return doc, np.asarray(doc["mu"], dtype=float), np.asarray(doc["theta"], dtype=float)


def write_solution(path, sol: DualSolution, primal: PrimalSolution) -> None:
    text = dumps_canonical(solution_to_dict(sol, primal)) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


def read_solution(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _row(cells) -> str:
    out = []
    for c in cells:
        if isinstance(c, (float, np.floating)):
            out.append(format_float(float(c)))
        else:
            out.append(str(c))
    return ",".join(out) + "\n"


def _breakpoint_rows(path: SolutionPath):
    """One row per node: the start, each interior event, the terminal point."""
    rows = []
    if path.segments:
        first = path.segments[0]
        rows.append((0.0, EVENT_ROW_START, "", first.welfare))
    for i, bp in enumerate(path.breakpoints):
        if bp.kind == "terminal":
            welfare = path.terminal_welfare
        else:
            welfare = (
                path.segments[i + 1].welfare
                if i + 1 < len(path.segments)
                else path.terminal_welfare
            )
        rows.append((bp.eps, bp.kind, "" if bp.index is None else bp.index, welfare))
    return rows


EVENT_ROW_START = "start"


def write_path_csv(
    breakpoints_file, mu_file, path: SolutionPath, extended: bool = True
) -> None:
    """Write the breakpoint table and the per-point multiplier snapshots.

    The extended table adds exact-rule welfares plus relative (percent of
    the unconstrained baseline) and absolute (count change against the
    same baseline) variants of each group welfare.
    """
    base = path.terminal_welfare
    rows = _breakpoint_rows(path)
    with open(breakpoints_file, "w") as fh:
        if extended:
            fh.write(
                "epsilon,objective,W0,W1,W0_exact,W1_exact,"
                "W0_rel_pct,W1_rel_pct,W0_abs,W1_abs,event_kind,event_index\n"
            )
        else:
            fh.write("epsilon,objective,W0,W1,event_kind,event_index\n")
        for eps, kind, index, welfare in rows:
            t = welfare.triple
            if extended:
                rel0 = 100.0 * t.w0 / base.triple.w0 if base.triple.w0 else float("nan")
                rel1 = 100.0 * t.w1 / base.triple.w1 if base.triple.w1 else float("nan")
                fh.write(
                    _row(
                        [
                            eps,
                            t.p,
                            t.w0,
                            t.w1,
                            welfare.w0_exact,
                            welfare.w1_exact,
                            rel0,
                            rel1,
                            welfare.count0 - base.count0,
                            welfare.count1 - base.count1,
                            kind,
                            index,
                        ]
                    )
                )
            else:
                fh.write(_row([eps, t.p, t.w0, t.w1, kind, index]))

    eps_nodes = path.eps_nodes
    mu_nodes = path.mu_nodes
    with open(mu_file, "w") as fh:
        fh.write("epsilon," + ",".join(path.ids) + "\n")
        for eps, mu in zip(eps_nodes, mu_nodes):
            fh.write(_row([eps, *mu]))


def path_to_dict(path: SolutionPath) -> dict:
    events = []
    for bp in path.breakpoints:
        events.append(
            {
                "epsilon": bp.eps,
                "kind": bp.kind,
                "index": bp.index,
                "pareto": classify_event(bp),
                "welfare_before": None
                if bp.welfare_before is None
                else list(bp.welfare_before.as_tuple()),
                "welfare_after": None
                if bp.welfare_after is None
                else list(bp.welfare_after.as_tuple()),
            }
        )
    segments = []
    for seg in path.segments:
        segments.append(
            {
                "eps_lo": seg.eps_lo,
                "eps_hi": seg.eps_hi,
                "r0": seg.r0,
                "r": seg.r,
                "free": list(seg.free),
                "support": list(seg.support),
                "error": list(seg.error),
                "p": seg.welfare.triple.p,
                "W0": seg.welfare.triple.w0,
                "W1": seg.welfare.triple.w1,
                "W0_exact": seg.welfare.w0_exact,
                "W1_exact": seg.welfare.w1_exact,
            }
        )
    return {
        "C": path.C,
        "sign": path.sign,
        "eps_max": path.eps_max,
        "n": path.n,
        "complete": path.complete,
        "breakpoints": events,
        "segments": segments,
        "terminal": {
            "mu": path.terminal_mu,
            "b": path.terminal_b,
            "p": path.terminal_welfare.triple.p,
            "W0": path.terminal_welfare.triple.w0,
            "W1": path.terminal_welfare.triple.w1,
        },
        "diagnostics": list(path.diagnostics),
    }


def write_path_json(file, path: SolutionPath) -> None:
    with open(file, "w") as fh:
        fh.write(dumps_canonical(path_to_dict(path)) + "\n")


def write_weights_csv(file, ids, profile) -> None:
    with open(file, "w") as fh:
        fh.write("id,m,w\n")
        for i, (m, w) in enumerate(zip(profile.m, profile.w)):
            fh.write(_row([ids[i], m, w]))


def write_weights_meta(file, profile, utility_params: dict) -> None:
    doc = {"k": profile.k, "B": profile.budget, "utility": utility_params}
    with open(file, "w") as fh:
        fh.write(dumps_canonical(doc) + "\n")


def write_labelings_csv(file, ids, witnesses) -> None:
    with open(file, "w") as fh:
        fh.write(",".join(ids) + "\n")
        for w in witnesses:
            fh.write(",".join(str(s) for s in w.signs) + "\n")


def write_witnesses_json(file, witnesses) -> None:
    doc = [
        {"signs": list(w.signs), "theta": w.theta, "b": w.b, "margin": w.margin}
        for w in witnesses
    ]
    with open(file, "w") as fh:
        fh.write(dumps_canonical(doc) + "\n")
