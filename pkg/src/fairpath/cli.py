"""Command-line entry point: fit, path, weights, and enumerate workflows.

Exit codes: 0 success, 2 input error, 3 solver error, 4 incomplete path.
Every command is deterministic given (config, seed); outputs are
byte-identical across repeated runs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .data import DataError, group_stats, load_dataset, load_schema, standardize
from .dichotomies import (
    DegeneracyError,
    cover_count,
    enumerate_labelings,
    make_point_cloud,
    perturb_degenerate,
)
from .kernel import projected_kernel
from .path import PathIncompleteError, trace_path
from .serialize import (
    read_solution,
    write_labelings_csv,
    write_path_csv,
    write_path_json,
    write_solution,
    write_weights_csv,
    write_weights_meta,
    write_witnesses_json,
)
from .solver import SolverError, recover_primal, solve_dual
from .welfare import MonotonicityError, implied_weights, utility_from_features

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_PATH_INCOMPLETE = 4


def _read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"config line not key=value: {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file supplying any flag")
    p.add_argument("--data", help="delimited table (comma or tab, header row)")
    p.add_argument("--schema", help="schema file: column roles and encodings")
    p.add_argument("--C", type=float, default=None, help="box bound (default 1.0)")
    p.add_argument("--tol", type=float, default=None, help="KKT tolerance (default 1e-8)")
    p.add_argument("--seed", type=int, default=None, help="seed (default 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")
    p.add_argument("--out", default=None, help="output directory (default .)")
    p.add_argument(
        "--no-standardize",
        action="store_true",
        help="skip the default feature standardization",
    )


def _merge(args: argparse.Namespace, keys: list[str]) -> dict:
    """Config-file values fill gaps; explicit flags win."""
    cfg = _read_config(args.config) if args.config else {}
    merged: dict = {}
    for key in keys:
        flag_val = getattr(args, key, None)
        if flag_val is None or flag_val is False:
            if key in cfg:
                merged[key] = cfg[key]
                continue
        merged[key] = flag_val
    return merged


_CASTS = {
    "C": float,
    "eps": float,
    "tol": float,
    "seed": int,
    "threads": int,
    "util_a0": float,
    "util_beta": float,
    "budget": int,
    "eps_max_auto": lambda v: str(v).lower() in ("1", "true", "yes"),
    "no_standardize": lambda v: str(v).lower() in ("1", "true", "yes"),
}


def _finalize(merged: dict) -> dict:
    out = dict(merged)
    for key, cast in _CASTS.items():
        if key in out and isinstance(out[key], str):
            out[key] = cast(out[key])
    out.setdefault("C", None)
    out["C"] = 1.0 if out.get("C") is None else float(out["C"])
    out["tol"] = 1e-8 if out.get("tol") is None else float(out["tol"])
    out["seed"] = 0 if out.get("seed") is None else int(out["seed"])
    out["threads"] = 1 if out.get("threads") is None else int(out["threads"])
    out["out"] = Path(out.get("out") or ".")
    return out


def _load(cfg: dict):
    if not cfg.get("data") or not cfg.get("schema"):
        raise DataError("--data and --schema are required")
    schema = load_schema(cfg["schema"])
    ds = load_dataset(cfg["data"], schema)
    if not cfg.get("no_standardize"):
        ds = standardize(ds)
    return ds


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _finalize(
        _merge(args, ["data", "schema", "C", "eps", "eps_max_auto", "tol", "seed", "threads", "out", "no_standardize"])
    )
    ds = _load(cfg)
    stats = group_stats(ds)
    kern = projected_kernel(ds, stats)
    if cfg.get("eps") is None:
        raise DataError("fit needs --eps (absolute, or a fraction with --eps-max-auto)")
    eps = float(cfg["eps"])
    if cfg.get("eps_max_auto"):
        probe = solve_dual(kern, ds, cfg["C"], float("inf"), tol=cfg["tol"])
        eps = eps * probe.eps_max
    sol = solve_dual(kern, ds, cfg["C"], eps, tol=cfg["tol"])
    primal = recover_primal(sol, ds, stats)
    cfg["out"].mkdir(parents=True, exist_ok=True)
    write_solution(cfg["out"] / "solution.json", sol, primal)
    print(f"wrote {cfg['out'] / 'solution.json'} (gamma={sol.gamma:.6g})")
    return EXIT_OK


def cmd_path(args: argparse.Namespace) -> int:
    cfg = _finalize(
        _merge(args, ["data", "schema", "C", "tol", "seed", "threads", "out", "no_standardize"])
    )
    ds = _load(cfg)
    cfg["out"].mkdir(parents=True, exist_ok=True)
    bp_file = cfg["out"] / "path_breakpoints.csv"
    mu_file = cfg["out"] / "path_mu.csv"
    json_file = cfg["out"] / "path.json"
    try:
        path = trace_path(ds, cfg["C"], tol=cfg["tol"])
    except PathIncompleteError as exc:
        write_path_csv(bp_file, mu_file, exc.path)
        write_path_json(json_file, exc.path)
        print(f"partial path written to {cfg['out']} (budget exhausted)", file=sys.stderr)
        return EXIT_PATH_INCOMPLETE
    write_path_csv(bp_file, mu_file, path)
    write_path_json(json_file, path)
    print(
        f"wrote {bp_file}, {mu_file}, {json_file} "
        f"({len(path.breakpoints)} breakpoints, eps_max={path.eps_max:.6g})"
    )
    return EXIT_OK


def cmd_weights(args: argparse.Namespace) -> int:
    cfg = _finalize(
        _merge(
            args,
            ["data", "schema", "C", "tol", "seed", "threads", "out",
             "no_standardize", "solution", "util_a0", "util_beta", "budget"],
        )
    )
    ds = _load(cfg)
    sol_file = cfg.get("solution") or str(cfg["out"] / "solution.json")
    doc = read_solution(sol_file)
    theta = np.asarray(doc["theta"], dtype=float)
    b = float(doc["b"])
    yhat = np.where(ds.features @ theta + b >= 0.0, 1, -1)
    budget = cfg.get("budget")
    if budget is None:
        budget = int((yhat == 1).sum())
    a0 = cfg.get("util_a0")
    beta = cfg.get("util_beta")
    utility = utility_from_features(
        ds.features, a0=1.0 if a0 is None else a0, beta=0.5 if beta is None else beta
    )
    profile = implied_weights(utility.binary_gain(), budget)
    cfg["out"].mkdir(parents=True, exist_ok=True)
    write_weights_csv(cfg["out"] / "weights.csv", ds.ids, profile)
    write_weights_meta(
        cfg["out"] / "weights.json",
        profile,
        {"family": "quadratic", "a0": 1.0 if a0 is None else a0, "beta": 0.5 if beta is None else beta},
    )
    print(f"wrote {cfg['out'] / 'weights.csv'} (k={profile.k:.6g}, B={budget})")
    return EXIT_OK


def cmd_enumerate(args: argparse.Namespace) -> int:
    cfg = _finalize(
        _merge(args, ["data", "schema", "C", "tol", "seed", "threads", "out", "no_standardize"])
    )
    ds = _load(cfg)
    pc = make_point_cloud(ds.features)
    if not pc.general_position:
        pc = perturb_degenerate(pc, seed=cfg["seed"])
    if pc.n <= pc.d:
        raise DataError(f"need more points than dimensions (n={pc.n}, d={pc.d})")
    result = enumerate_labelings(pc, threads=cfg["threads"])
    cfg["out"].mkdir(parents=True, exist_ok=True)
    write_labelings_csv(cfg["out"] / "labelings.csv", ds.ids, result.witnesses)
    write_witnesses_json(cfg["out"] / "witnesses.json", result.witnesses)
    predicted = cover_count(pc.n, pc.d)
    print(
        f"found {len(result.witnesses)} labelings; "
        f"count law predicts {predicted} for n={pc.n}, d={pc.d}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairpath",
        description="Covariance-bounded SVM fits, tolerance paths, welfare weights, and labeling enumeration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="solve at a single tolerance and write solution.json")
    _add_common(p_fit)
    p_fit.add_argument("--eps", type=float, default=None, help="covariance tolerance")
    p_fit.add_argument(
        "--eps-max-auto",
        dest="eps_max_auto",
        action="store_true",
        help="interpret --eps as a fraction of the auto-detected eps_max",
    )
    p_fit.set_defaults(func=cmd_fit)

    p_path = sub.add_parser("path", help="trace the full tolerance path and write CSV/JSON")
    _add_common(p_path)
    p_path.set_defaults(func=cmd_path)

    p_w = sub.add_parser("weights", help="implied welfare weights for a saved solution")
    _add_common(p_w)
    p_w.add_argument("--solution", default=None, help="solution.json path (default <out>/solution.json)")
    p_w.add_argument("--util-a0", dest="util_a0", type=float, default=None)
    p_w.add_argument("--util-beta", dest="util_beta", type=float, default=None)
    p_w.add_argument("--budget", type=int, default=None, help="allocation budget (default: positive predictions)")
    p_w.set_defaults(func=cmd_weights)

    p_e = sub.add_parser("enumerate", help="enumerate hyperplane-achievable labelings")
    _add_common(p_e)
    p_e.set_defaults(func=cmd_enumerate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, MonotonicityError, DegeneracyError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
