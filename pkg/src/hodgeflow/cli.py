"""Experiment runner: mechanism tests, standalone projection, CTDE toy, diagnostics.

    hodgeflow <subcommand> --config <path> [--out <dir>] [--seed <int>] [--threads <int>]

Subcommands: mechanism-rps, mechanism-2d, mechanism-logistic, mechanism-3d,
project, ctde, diagnose. Configs are JSON validated against
docs/config.schema.json (unknown keys rejected); outputs are CSV/JSON with
floats printed at 17 significant digits so identical configs and seeds give
byte-identical files, plus SVG phase plots. Seeds run in parallel worker
threads; HODGEFLOW_THREADS overrides --threads.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import diagnostics as diag
from . import svg
from .ctde import LogitPolicyPair, MatrixGame, StackedGameField, ctde_train
from .dynamics import (
    DomainSpec,
    GraphProjParams,
    RunConfig,
    Trajectory,
    orbit_diameter,
    path_length,
    retract,
    rk4_trajectory,
    run_dynamics,
)
from .fields import (
    RPS,
    BilinearSkew2D,
    Field,
    Linear3D,
    Logistic2x2,
    PotentialPlusSkew,
    QuadraticPotential,
    eval_field,
    eval_field_batch,
)
from .graph import build_knn_graph, laplacian_apply, solve_poisson
from .metric import Metric
from .neural import NeuralProjConfig
from .projection import (
    EdgeFlow,
    edge_flow,
    gradient_flow,
    lift_all_directions,
    lift_node_direction,
    project_flow,
)

DOCS_DIR = Path(__file__).resolve().parents[2] / "docs"
_FINAL_WINDOW = 200

EXPERIMENTS = (
    "mechanism-rps",
    "mechanism-2d",
    "mechanism-logistic",
    "mechanism-3d",
    "project",
    "ctde",
    "diagnose",
)

DEFAULTS = {
    "common": {
        "seeds": [0, 1, 2, 3, 4],
        "steps": 2000,
        "eta": 0.05,
        "eta_schedule": "constant",
        "refresh_rate": 8,
        "buffer_size": 500,
        "k": 8,
        "weight_scheme": "uniform",
        "sigma": None,
        "ridge": 1e-4,
        "modes": ["raw", "graph_projected"],
        "out_dir": "out",
        "threads": 1,
    },
    # the RPS/logistic fields are dominantly cyclic; the projection graph
    # needs its cycle space to dominate its cut space, hence the larger k
    "mechanism-rps": {"x0": [0.5, 0.3, 0.2, 0.2, 0.3, 0.5], "k": 32, "k_nonpot": 32},
    "mechanism-2d": {"x0": [1.5, 1.0], "rho": 0.5, "buffer_size": 400},
    "mechanism-logistic": {"x0": [0.8, -0.6], "k": 32, "eta": 0.02, "buffer_size": 400},
    "mechanism-3d": {"x0": [1.5, 1.0, -1.2], "rho": 0.5},
    "ctde": {
        "game": "coordination",
        "steps": 5000,
        "eta": 0.3,
        "buffer_size": 256,
        "weight_scheme": "gaussian",
        "seeds": [0, 1, 2],
    },
    "diagnose": {"solver_max_iter": None, "seeds": [0]},
    "project": {},
}


def format_float(x) -> str:
    return f"{float(x):.17g}"


def _jsonify(doc):
    """Render JSON with 17-significant-digit floats and NaN -> null."""
    if isinstance(doc, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {_jsonify(v)}" for k, v in doc.items())
        return "{" + items + "}"
    if isinstance(doc, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_jsonify(v) for v in doc) + "]"
    if isinstance(doc, (bool, np.bool_)):
        return "true" if doc else "false"
    if isinstance(doc, (int, np.integer)):
        return str(int(doc))
    if doc is None:
        return "null"
    if isinstance(doc, (float, np.floating)):
        return "null" if not np.isfinite(doc) else format_float(doc)
    return json.dumps(doc)


def write_json(doc, path: Path) -> None:
    path.write_text(_jsonify(doc) + "\n", encoding="utf-8")


def load_schema(name: str) -> dict:
    return json.loads((DOCS_DIR / name).read_text(encoding="utf-8"))


def load_config(path: str | None, experiment: str, overrides: dict) -> dict:
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS.get(experiment, {}))
    cfg["experiment"] = experiment
    if path is not None:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
        validator = Draft202012Validator(load_schema("config.schema.json"))
        errors = sorted(validator.iter_errors(user), key=lambda e: e.json_path)
        if errors:
            msgs = "; ".join(f"{e.json_path}: {e.message}" for e in errors)
            raise ValueError(f"config does not match schema: {msgs}")
        if "experiment" in user and user["experiment"] != experiment:
            raise ValueError(
                f"config experiment {user['experiment']!r} does not match "
                f"subcommand {experiment!r}"
            )
        cfg.update(user)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    cfg["experiment"] = experiment
    return cfg


def _build_field(cfg: dict) -> tuple[Field, DomainSpec]:
    exp = cfg["experiment"]
    if exp == "mechanism-rps":
        return RPS(), DomainSpec.simplex_product([3, 3])
    if exp == "mechanism-2d":
        return BilinearSkew2D(rho=cfg.get("rho", 0.5)), DomainSpec.unconstrained(2)
    if exp == "mechanism-logistic":
        kwargs = {}
        if "payoff_a" in cfg:
            kwargs["payoff_a"] = np.array(cfg["payoff_a"], dtype=float)
        if "payoff_b" in cfg:
            kwargs["payoff_b"] = np.array(cfg["payoff_b"], dtype=float)
        return Logistic2x2(**kwargs), DomainSpec.unconstrained(2)
    if exp == "mechanism-3d":
        return Linear3D(rho=cfg.get("rho", 0.5)), DomainSpec.unconstrained(3)
    raise ValueError(f"no field for experiment {exp!r}")


def _graph_params(cfg: dict) -> GraphProjParams:
    return GraphProjParams(
        k=cfg["k"],
        weight_scheme=cfg["weight_scheme"],
        sigma=cfg.get("sigma"),
        ridge=cfg["ridge"],
    )


def _neural_params(cfg: dict, seed: int) -> NeuralProjConfig:
    return NeuralProjConfig(seed=seed, **cfg.get("neural", {}))


def _run_config(cfg: dict, mode: str, seed: int) -> RunConfig:
    return RunConfig(
        steps=cfg["steps"],
        eta=cfg["eta"],
        eta_schedule=cfg["eta_schedule"],
        refresh_rate=cfg["refresh_rate"],
        buffer_size=cfg["buffer_size"],
        mode=mode,
        seed=seed,
    )


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    d = traj.iterates.shape[1]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step"]
            + [f"x_{i}" for i in range(d)]
            + ["field_norm", "proj_norm", "nonpot"]
        )
        t_steps = traj.steps
        for t in range(t_steps + 1):
            row = [str(t)] + [format_float(v) for v in traj.iterates[t]]
            if t < t_steps:
                row += [
                    format_float(traj.field_norm[t]),
                    format_float(traj.proj_norm[t]),
                    format_float(traj.nonpot[t]) if np.isfinite(traj.nonpot[t]) else "nan",
                ]
            else:
                row += ["nan", "nan", "nan"]
            writer.writerow(row)


def _phase_svg(exp: str, mode: str, traj: Trajectory, path: Path) -> None:
    if exp == "mechanism-rps":
        curves = [svg.barycentric_xy(traj.iterates[:, :3]), svg.barycentric_xy(traj.iterates[:, 3:])]
        doc = svg.polyline_svg(curves, [f"{mode} p", f"{mode} q"], triangle=True,
                               title="simplex trajectories")
    elif exp == "mechanism-logistic":
        curves = [1.0 / (1.0 + np.exp(-traj.iterates))]
        doc = svg.polyline_svg(curves, [mode], title="(p, q) phase plot")
    elif exp == "mechanism-3d":
        curves = [svg.project_3d(traj.iterates)]
        doc = svg.polyline_svg(curves, [mode], title="isometric trajectory")
    else:
        curves = [traj.iterates[:, :2]]
        doc = svg.polyline_svg(curves, [mode], title="phase plot")
    path.write_text(doc, encoding="utf-8")


def _nonpot_stats(traj: Trajectory):
    vals = traj.nonpot[np.isfinite(traj.nonpot)]
    if len(vals) == 0:
        return None, None
    return float(vals.mean()), float(vals.min())


def _l2_cosine(a: np.ndarray, b: np.ndarray):
    den = float(np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.sum(a * b) / den) if den > 0 else None


def nonpot_trajectory_region(
    field: Field,
    domain: DomainSpec,
    traj: Trajectory,
    n_samples: int,
    k: int,
    seed: int,
    spacing: float = 0.02,
    jitter: float = 0.05,
) -> float:
    """NonPot of the raw field over a graph of trajectory-region samples.

    Visited points thinned to `spacing`, topped up with retracted Gaussian
    jitter: a thin full-dimensional thickening of the orbit region whose
    cycle structure the projection can resolve.
    """
    rng = np.random.default_rng(seed + 977)
    kept = [traj.iterates[0]]
    for p in traj.iterates[1:]:
        if np.linalg.norm(p - kept[-1]) > spacing:
            kept.append(p)
    kept = kept[: n_samples // 2]
    base = np.array(kept)
    extra = base[rng.integers(0, len(base), size=max(0, n_samples - len(base)))]
    jit = [retract(domain, p) for p in extra + jitter * rng.normal(size=extra.shape)]
    points = np.vstack([base, np.array(jit)]) if jit else base
    graph = build_knn_graph(points, k=min(k, len(points) - 1))
    omega = edge_flow(graph, eval_field_batch(field, points))
    return project_flow(graph, omega).nonpot


def _mechanism_seed_run(cfg: dict, seed: int, out: Path) -> dict:
    exp = cfg["experiment"]
    field, domain = _build_field(cfg)
    x0 = np.array(cfg["x0"], dtype=float)
    results: dict = {}
    trajs: dict = {}
    raw_traj = None
    for mode in cfg["modes"]:
        run_cfg = _run_config(cfg, mode, seed)
        hook = None
        refresh_cos: list = []
        if exp == "mechanism-3d" and mode == "graph_projected":
            sub_rng = np.random.default_rng(seed + 31337)

            def hook(graph, phi, ridge, _rng=sub_rng, _acc=refresh_cos):
                sel = _rng.choice(graph.num_nodes, size=min(64, graph.num_nodes), replace=False)
                dirs = np.stack(
                    [lift_node_direction(graph, phi, i, ridge=ridge) for i in sel]
                )
                cos = _l2_cosine(dirs, -graph.positions[sel])
                _acc.append(np.nan if cos is None else cos)

        proj_params = (
            _neural_params(cfg, seed) if mode == "neural_projected" else _graph_params(cfg)
        )
        traj = run_dynamics(
            field, domain, x0, run_cfg, proj_params=proj_params, refresh_hook=hook
        )
        trajs[mode] = traj
        if mode == "raw":
            raw_traj = traj
        write_trajectory_csv(out / f"trajectory_{mode}_{seed}.csv", traj)

        window = min(_FINAL_WINDOW, traj.steps)
        nonpot_mean, nonpot_min = _nonpot_stats(traj)
        entry = {
            "orbit_diameter": orbit_diameter(traj, traj.steps + 1),
            "final_window_diameter": orbit_diameter(traj, window),
            "path_length": path_length(traj),
            "nonpot_mean": nonpot_mean,
            "nonpot_refresh_min": nonpot_min,
            "final_point": traj.iterates[-1],
        }
        if exp == "mechanism-3d":
            x_t = traj.iterates[:-1]
            dirs = traj.directions
            nx = np.linalg.norm(x_t, axis=1)
            nd = np.linalg.norm(dirs, axis=1)
            series = np.where(
                (nx > 1e-12) & (nd > 1e-12),
                np.sum(dirs * (-x_t), axis=1) / np.maximum(nx * nd, 1e-300),
                np.nan,
            )
            entry["cosine_series"] = series
            if mode == "graph_projected":
                entry["cosine_mean"] = float(np.nanmean(refresh_cos)) if refresh_cos else None
            else:
                entry["cosine_mean"] = _l2_cosine(dirs, -x_t)
        if exp == "mechanism-2d" and mode != "raw":
            # compare step directions with the raw field over the transit
            # phase (the raw run's own convergence window); at the noise
            # floor both vectors are lifting noise and their angle says
            # nothing about trajectory agreement
            raw_at = eval_field_batch(field, traj.iterates[:-1])
            nd = np.linalg.norm(traj.directions, axis=1)
            nf = np.linalg.norm(raw_at, axis=1)
            if raw_traj is not None:
                raw_nf = raw_traj.field_norm
                transit = int(np.sum(raw_nf >= 0.05 * raw_nf.max()))
                active = np.zeros(traj.steps, dtype=bool)
                active[:transit] = True
            else:
                active = (nd >= 0.05 * nd.max()) & (nf >= 0.05 * nf.max())
            active &= (nd > 1e-300) & (nf > 1e-300)
            cos = np.sum(traj.directions[active] * raw_at[active], axis=1) / (
                nd[active] * nf[active]
            )
            entry["direction_agreement"] = float(cos.mean()) if active.any() else None
        results[mode] = entry

    if exp == "mechanism-rps" and raw_traj is not None:
        results["raw"]["nonpot_trajectory_region"] = nonpot_trajectory_region(
            field, domain, raw_traj, cfg["buffer_size"], cfg.get("k_nonpot", 32), seed
        )
    if seed == cfg["seeds"][0]:
        for mode, traj in trajs.items():
            _phase_svg(exp, mode, traj, out / f"phase_{mode}.svg")
    return results


def _ctde_game(cfg: dict) -> MatrixGame:
    if "payoff_a" in cfg or "payoff_b" in cfg:
        a = np.array(cfg["payoff_a"], dtype=float)
        b = np.array(cfg.get("payoff_b", cfg["payoff_a"]), dtype=float)
        return MatrixGame(A=a, B=b)
    if cfg.get("game") == "matching_pennies":
        return MatrixGame.matching_pennies()
    return MatrixGame.coordination()


def _ctde_seed_run(cfg: dict, seed: int, out: Path) -> dict:
    game = _ctde_game(cfg)
    field = StackedGameField(game)
    m, n = game.shape
    if "x0" in cfg:
        x0 = np.array(cfg["x0"], dtype=float)
        policies0 = LogitPolicyPair(theta1=x0[:m], theta2=x0[m:])
    else:
        rng = np.random.default_rng(seed)
        policies0 = LogitPolicyPair(
            theta1=0.3 * rng.normal(size=m), theta2=0.3 * rng.normal(size=n)
        )
    results: dict = {}
    trajs: dict = {}
    for mode in cfg["modes"]:
        run_cfg = _run_config(cfg, mode, seed)
        proj_params = (
            _neural_params(cfg, seed) if mode == "neural_projected" else _graph_params(cfg)
        )
        traj, metrics = ctde_train(game, policies0, run_cfg, proj_params=proj_params)
        trajs[mode] = traj
        write_trajectory_csv(out / f"trajectory_{mode}_{seed}.csv", traj)
        p, q = field.split(traj.iterates[-1]).distributions()
        nonpot_mean, nonpot_min = _nonpot_stats(traj)
        ratio = traj.proj_norm / np.maximum(traj.field_norm, 1e-300)
        results[mode] = {
            "orbit_diameter": orbit_diameter(traj, traj.steps + 1),
            "final_window_diameter": orbit_diameter(traj, min(_FINAL_WINDOW, traj.steps)),
            "path_length": path_length(traj),
            "nonpot_mean": nonpot_mean,
            "nonpot_refresh_min": nonpot_min,
            "final_point": traj.iterates[-1],
            "final_max_prob": [float(p.max()), float(q.max())],
            "final_payoffs": [float(metrics.payoff1[-1]), float(metrics.payoff2[-1])],
            "mean_step_ratio": float(ratio.mean()),
        }
    if seed == cfg["seeds"][0]:
        for mode in trajs:
            curve = np.stack(
                [
                    [field.split(x).distributions()[0][0] for x in trajs[mode].iterates],
                    [field.split(x).distributions()[1][0] for x in trajs[mode].iterates],
                ],
                axis=1,
            )
            doc = svg.polyline_svg([curve], [mode], title="(p_0, q_0) phase plot")
            (out / f"phase_{mode}.svg").write_text(doc, encoding="utf-8")
    return results


def cmd_mechanism(cfg: dict) -> Path:
    """Run raw and projected variants per seed and write CSV + summary + SVG files."""
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    runner = _ctde_seed_run if cfg["experiment"] == "ctde" else _mechanism_seed_run
    threads = _thread_count(cfg)
    seeds = cfg["seeds"]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(lambda s: runner(cfg, s, out), seeds))
    else:
        per_seed = [runner(cfg, s, out) for s in seeds]
    summary = {
        "experiment": cfg["experiment"],
        "config": {k: v for k, v in cfg.items() if k not in ("out_dir", "threads")},
        "seeds": {str(s): r for s, r in zip(seeds, per_seed)},
    }
    write_json(summary, out / "summary.json")
    return out


cmd_ctde = cmd_mechanism


def load_tabulated(path: str):
    """Build a nearest-sample lookup field from the samples CSV format."""
    from .fields import Tabulated

    points, values = read_samples_csv(path)
    return Tabulated(points=points, values=values)


def read_samples_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read `x_0..x_{d-1},F_0..F_{d-1}` rows; errors carry the line number."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        xs = [h for h in header if h.startswith("x_")]
        fs = [h for h in header if h.startswith("F_")]
        if len(xs) == 0 or len(xs) != len(fs) or xs + fs != header:
            raise ValueError(
                f"{path}:1: header must be x_0..x_{{d-1}},F_0..F_{{d-1}}, got {header}"
            )
        d = len(xs)
        points, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 * d:
                raise ValueError(f"{path}:{lineno}: expected {2 * d} columns, got {len(row)}")
            try:
                nums = [float(v) for v in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            points.append(nums[:d])
            values.append(nums[d:])
    if len(points) < 2:
        raise ValueError(f"{path}: need at least 2 sample rows, got {len(points)}")
    return np.array(points), np.array(values)


def cmd_project(
    input_csv: str,
    k: int = 8,
    weight_scheme: str = "uniform",
    sigma: float | None = None,
    metric_file: str | None = None,
    ridge: float = 1e-4,
    out_dir: str = "out",
) -> Path:
    """Standalone projection of a sampled field: Poisson solve + lifting."""
    points, values = read_samples_csv(input_csv)
    metric = None
    if metric_file is not None:
        doc = json.loads(Path(metric_file).read_text(encoding="utf-8"))
        metric = Metric(points.shape[1], np.array(doc["matrix"], dtype=float))
    graph = build_knn_graph(points, k, metric=metric, weight_scheme=weight_scheme, sigma=sigma)
    omega = edge_flow(graph, values, metric=metric)
    result = project_flow(graph, omega)
    dirs = lift_all_directions(graph, result.phi, metric=metric, ridge=ridge)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(
        {
            "num_nodes": graph.num_nodes,
            "num_edges": graph.num_edges,
            "num_components": len(np.unique(graph.components)),
            "k": graph.k,
            "weight_scheme": graph.weight_scheme,
            "energy_total": result.energy_total,
            "energy_pot": result.energy_pot,
            "energy_cyc": result.energy_cyc,
            "nonpot": result.nonpot,
            "solver_residual": result.solver_residual,
        },
        out / "projection.json",
    )
    with (out / "potential.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "phi"])
        for i, v in enumerate(result.phi.values):
            writer.writerow([str(i), format_float(v)])
    with (out / "edges.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "w", "omega", "omega_pot", "omega_cyc"])
        for e, (i, j) in enumerate(graph.edges):
            writer.writerow(
                [
                    str(int(i)),
                    str(int(j)),
                    format_float(graph.weights[e]),
                    format_float(omega.values[e]),
                    format_float(result.omega_pot.values[e]),
                    format_float(result.omega_cyc.values[e]),
                ]
            )
    with (out / "directions.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node"] + [f"g_{i}" for i in range(points.shape[1])])
        for i, g in enumerate(dirs):
            writer.writerow([str(i)] + [format_float(v) for v in g])
    return out


def _check(name, violation, tolerance, details="", lhs=None, rhs=None):
    ok = bool(violation <= tolerance)
    return {
        "name": name,
        "pass": ok,
        "violation": float(violation),
        "tolerance": float(tolerance),
        "lhs": lhs,
        "rhs": rhs,
        "details": details,
    }


def run_diagnostics(solver_max_iter: int | None = None, seed: int = 0) -> dict:
    """Run the cross-module invariant suite; returns the report document."""
    rng = np.random.default_rng(seed)
    checks = []

    pts = rng.normal(size=(120, 3))
    graph = build_knn_graph(pts, k=6)
    phi = rng.normal(size=120)
    psi = rng.normal(size=120)
    sym = abs(psi @ laplacian_apply(graph, phi) - phi @ laplacian_apply(graph, psi))
    scale = max(1.0, abs(phi @ laplacian_apply(graph, phi)))
    checks.append(_check("laplacian_symmetry", sym / scale, 1e-10))
    quad = min(
        float(v @ laplacian_apply(graph, v)) for v in rng.normal(size=(20, 120))
    )
    checks.append(_check("laplacian_psd", max(0.0, -quad), 1e-12))
    kern = float(np.abs(laplacian_apply(graph, np.ones(120))).max())
    checks.append(_check("laplacian_kernel", kern, 0.0))

    rhs = rng.normal(size=120)
    rhs -= rhs.mean()
    sol = solve_poisson(graph, rhs)
    res = float(np.linalg.norm(laplacian_apply(graph, sol.values) - rhs))
    checks.append(_check("poisson_residual", res, 1e-8))

    omega = EdgeFlow(values=rng.normal(size=graph.num_edges), graph=graph)
    result = project_flow(graph, omega, max_iter=solver_max_iter, strict=False)
    orth = diag.orthogonality_report(result, graph, trials=50, seed=seed)
    checks.append(
        _check(
            "orthogonality",
            orth,
            1e-7,
            details="residual vs random gradient flows"
            + (f" (solver max_iter={solver_max_iter})" if solver_max_iter else ""),
        )
    )
    pyth = abs(result.energy_total - result.energy_pot - result.energy_cyc)
    checks.append(_check("pythagorean", pyth, 1e-6 * result.energy_total))
    nonpots = []
    for _ in range(100):
        om = EdgeFlow(values=rng.normal(size=graph.num_edges), graph=graph)
        nonpots.append(project_flow(graph, om).nonpot)
    nonpots.append(project_flow(graph, EdgeFlow(np.zeros(graph.num_edges), graph)).nonpot)
    worst = max(max(0.0, -min(nonpots)), max(0.0, max(nonpots) - 1.0))
    checks.append(_check("nonpot_bounds", worst, 0.0, details="0 <= NonPot <= 1"))

    base = project_flow(graph, omega)
    prev = -1.0
    monotone = True
    for s in (0.5, 1.0, 2.0, 4.0):
        scaled = EdgeFlow(base.omega_pot.values + s * base.omega_cyc.values, graph)
        val = project_flow(graph, scaled).nonpot
        monotone = monotone and (val > prev)
        prev = val
    checks.append(_check("nonpot_monotone", 0.0 if monotone else 1.0, 0.0))

    skew = BilinearSkew2D(rho=1.0, contraction=0.0)
    worst_ratio = 0.0
    for eta in (0.01, 0.1, 0.5):
        run = run_dynamics(
            skew,
            DomainSpec.unconstrained(2),
            np.array([1.0, 0.5]),
            RunConfig(steps=200, eta=eta, mode="raw", seed=0),
        )
        r2 = np.sum(run.iterates**2, axis=1)
        worst_ratio = max(worst_ratio, float(np.abs(r2[1:] / r2[:-1] - (1 + eta**2)).max()))
    checks.append(_check("euler_blowup", worst_ratio, 1e-12))
    z = rk4_trajectory(skew, np.array([1.0, 0.5]), 1e-3, 10000)
    drift = float(np.abs(np.sum(z**2, axis=1) - np.sum(z[0] ** 2)).max())
    checks.append(_check("rk4_conservation", drift, 1e-8))

    A = rng.normal(size=(4, 4))
    quad_field = QuadraticPotential(Q=A @ A.T + 0.5 * np.eye(4), c=rng.uniform(-0.5, 0.5, 4))
    box = DomainSpec.box(-np.ones(4), np.ones(4))
    params = diag.params_for_box(quad_field, box, T=200)
    run = run_dynamics(
        quad_field,
        box,
        np.clip(rng.uniform(-1, 1, 4), -1, 1),
        RunConfig(steps=200, eta=params.eta, mode="exact_potential", seed=seed),
        reference_potential=quad_field.potential,
    )
    dx2 = np.sum(np.diff(run.iterates, axis=0) ** 2, axis=1)
    phi_vals = run.phi_values
    lyap = float(np.max(phi_vals[:-1] + dx2 / (2 * params.eta) - phi_vals[1:]))
    checks.append(_check("lyapunov_improvement", max(0.0, lyap), 1e-10))
    gsum = float(np.sum(dx2) / params.eta**2)
    bound = (2.0 / params.eta) * (params.Phi_max - params.Phi_min)
    checks.append(
        _check("cycle_impossibility", gsum, bound * (1 + 1e-9), lhs=gsum, rhs=bound)
    )

    gaps = [
        diag.stampacchia_gap(rng.normal(size=4), np.clip(rng.uniform(-1, 1, 4), -1, 1), box)
        for _ in range(50)
    ]
    checks.append(_check("gap_nonnegative", max(0.0, -min(gaps)), 1e-12))

    skew4 = np.zeros((4, 4))
    skew4[0, 1], skew4[1, 0], skew4[2, 3], skew4[3, 2] = 1.0, -1.0, -0.5, 0.5
    mix = PotentialPlusSkew(base=quad_field, S=skew4, rho=0.25)
    split_viol = 0.0
    for _ in range(20):
        x = np.clip(rng.uniform(-1, 1, 4), -1, 1)
        gap = diag.stampacchia_gap(-eval_field(mix, x), x, box)
        gphi = diag.gap_phi(mix.grad_potential(x), x, box)
        split_viol = max(
            split_viol, gap - gphi - params.D * np.linalg.norm(mix.residual(x))
        )
    checks.append(_check("gap_residual_split", max(0.0, split_viol), 1e-9))

    map_viol = 0.0
    for t in range(run.steps):
        g_eta = (run.iterates[t + 1] - run.iterates[t]) / params.eta
        gphi = diag.gap_phi(quad_field.grad_potential(run.iterates[t]), run.iterates[t], box)
        map_viol = max(
            map_viol,
            gphi - (params.D + params.eta * params.G) * np.linalg.norm(g_eta),
        )
    checks.append(_check("gap_mapping_bound", max(0.0, map_viol), 1e-9))

    prev_stat = np.inf
    stat_monotone = True
    bound_ok = True
    lhs_last = rhs_last = None
    for t_steps in (10, 100, 1000):
        p = diag.params_for_box(mix, box, T=t_steps)
        tr = run_dynamics(
            mix,
            box,
            np.clip(rng.uniform(-1, 1, 4), -1, 1),
            RunConfig(steps=t_steps, eta=p.eta, mode="exact_potential", seed=seed),
        )
        rep = diag.check_gap_bound(tr, p, mix, box)
        bound_ok = bound_ok and rep.holds
        stat_monotone = stat_monotone and rep.stationarity_term < prev_stat
        prev_stat = rep.stationarity_term
        lhs_last, rhs_last = rep.lhs, rep.rhs
        p_i = diag.params_for_box(mix, box, T=t_steps, delta_bar=0.05)
        tr_i = run_dynamics(
            mix,
            box,
            np.clip(rng.uniform(-1, 1, 4), -1, 1),
            RunConfig(
                steps=t_steps, eta=p_i.eta, mode="exact_potential", seed=seed,
                noise_delta=0.05,
            ),
        )
        rep_i = diag.check_gap_bound(tr_i, p_i, mix, box, inexact=True)
        bound_ok = bound_ok and rep_i.holds
    checks.append(
        _check(
            "gap_bound_sweep",
            0.0 if (bound_ok and stat_monotone) else 1.0,
            0.0,
            details="exact + inexact bounds over T in {10,100,1000}; first term decreasing",
            lhs=lhs_last,
            rhs=rhs_last,
        )
    )

    return {"all_pass": all(c["pass"] for c in checks), "checks": checks}


def cmd_diagnose(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    report = run_diagnostics(
        solver_max_iter=cfg.get("solver_max_iter"), seed=cfg["seeds"][0]
    )
    write_json(report, out / "diagnostics.json")
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['name']} (violation {c['violation']:.3e} <= {c['tolerance']:.3e})")
    return 0 if report["all_pass"] else 1


def _thread_count(cfg: dict) -> int:
    env = os.environ.get("HODGEFLOW_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(cfg.get("threads", 1)))


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="hodgeflow",
        description="Hodge projection of sampled update fields: mechanism "
        "experiments, standalone projection, CTDE toy, and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for exp in EXPERIMENTS:
        p = sub.add_parser(exp)
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="run a single seed")
        p.add_argument("--threads", type=int, default=None)
        if exp == "project":
            p.add_argument("--input", required=True, help="samples CSV (x_*, F_* columns)")
            p.add_argument("--k", type=int, default=8)
            p.add_argument("--weights", choices=["uniform", "gaussian"], default="uniform")
            p.add_argument("--sigma", type=float, default=None)
            p.add_argument("--metric", default=None, help="JSON file with {'matrix': [[...]]}")
            p.add_argument("--ridge", type=float, default=1e-4)
    args = parser.parse_args(argv)

    overrides = {"out_dir": args.out, "threads": args.threads}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    try:
        cfg = load_config(args.config, args.command, overrides)
        if args.command == "project":
            cmd_project(
                args.input,
                k=args.k,
                weight_scheme=args.weights,
                sigma=args.sigma,
                metric_file=args.metric,
                ridge=args.ridge,
                out_dir=cfg["out_dir"],
            )
            return 0
        if args.command == "diagnose":
            return cmd_diagnose(cfg)
        cmd_mechanism(cfg)
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
