"""Command line entry points: optimize, simulate, gradcheck, benchmark.

Exit codes: 0 ok, 1 numerical failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .objective import generalized_infidelity, trace_infidelity
from .optimizer import minimize, random_init_alpha
from .propagation import PropagationError, Propagator, WindowGrid
from .runtime import BENCHMARK_COLUMNS, ParallelEvaluator, TaskError, benchmark_gradient
from .shooting import (
    ShootingProblem, ShootingVariables, init_by_rollout, pack, pack_gradient, packed_objective,
    unpack,
)

log = logging.getLogger("msqoc")

GRADCHECK_FAIL = 1e-5
# settings that never change numerical output; kept out of saved artifacts
RUNTIME_ONLY = ("workers", "output_dir")
HISTORY_COLUMNS = ("iter", "objective", "generalized_infidelity", "penalty_value",
                   "rollout_estimate", "projected_gradnorm", "step_length", "walltime_s")


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _bounds(problem: ShootingProblem, box: float):
    lo = np.full(problem.size, -np.inf)
    hi = np.full(problem.size, np.inf)
    lo[:problem.num_alpha] = -box
    hi[:problem.num_alpha] = box
    return lo, hi


def zero_boundary_mask(problem: ShootingProblem) -> np.ndarray:
    """Parameters of the two splines that are nonzero at each end of [0, T]."""
    param = problem.prop.param
    d1 = param.num_splines
    mask = np.zeros(problem.size, dtype=bool)
    for ell in range(param.total_params):
        s = param.unindex(ell)[2]
        mask[ell] = s < 2 or s >= d1 - 2
    return mask


def optimize_once(cfg: RunConfig, sigma: float, workers: int | None = None):
    """Random init, roll-out initialization of W, then projected L-BFGS."""
    pb = cfg.problem(sigma=sigma)
    oc = cfg.optimizer_config()
    alpha0 = random_init_alpha(pb.prop.param, cfg.seed, cfg.init_amplitude_mhz)
    lo, hi = _bounds(pb, oc.box_bound)
    if cfg.zero_boundary:
        mask = zero_boundary_mask(pb)
        lo[mask] = hi[mask] = 0.0
        alpha0[mask[:pb.num_alpha]] = 0.0
    x0 = pack(pb, init_by_rollout(pb, alpha0))
    with ParallelEvaluator(pb, workers or cfg.workers, cfg.block_size) as ev:
        def fun(x):
            rep, ga, gw = ev.gradient(unpack(pb, x))
            return rep.total, pack_gradient(pb, ga, gw), rep

        def progress(rec):
            if rec.iter % 50 == 0:
                log.info("sigma=%g iter %d  obj %.4e  J %.3e  est %.3e", sigma, rec.iter,
                         rec.objective, rec.generalized_infidelity, rec.rollout_estimate)

        t0 = time.perf_counter()
        res = minimize(fun, x0, oc, lo, hi,
                       stop=lambda rep: rep.rollout_estimate <= oc.tol_estimate,
                       callback=progress)
        wall = time.perf_counter() - t0
    return pb, res, wall


def cmd_optimize(cfg: RunConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for sigma in cfg.sigmas:
        pb, res, wall = optimize_once(cfg, sigma)
        runs.append((sigma, pb, res, wall))
        log.info("sigma=%g: %s after %d iterations", sigma, res.status, res.iterations)
    # fewest iterations wins, converged runs first
    sigma, pb, res, wall = min(runs, key=lambda r: (r[2].status != "converged", r[2].iterations))

    v = unpack(pb, res.x)
    U_ro = pb.prop.rollout(v.alpha)
    rep = res.info
    report = {
        "testcase": cfg.name,
        "status": res.status,
        "iterations": res.iterations,
        "windows": pb.num_windows,
        "total_steps": pb.prop.grid.total_steps,
        "sigma": sigma,
        "mu": pb.mu,
        "final_objective": res.fun,
        "final_generalized_infidelity": rep.generalized_infidelity,
        "penalty_value": rep.penalty_value,
        "tikhonov": rep.tikhonov,
        "energy": rep.energy,
        "rollout_estimate": rep.rollout_estimate,
        "rollout_infidelity": generalized_infidelity(U_ro, pb.target),
        "rollout_trace_infidelity": trace_infidelity(U_ro, pb.target),
        "constraint_norms": rep.constraint_norms,
        "sigma_scan": [{"sigma": s, "status": r.status, "iterations": r.iterations}
                       for s, _, r, _ in runs],
        "walltime_s": wall,
    }
    write_csv(out / "history.csv", HISTORY_COLUMNS, [dataclasses.asdict(h) for h in res.history])
    write_pulses(out / "pulses.csv", pb.prop, v.alpha)
    write_json(out / "params.json", {
        "alpha": v.alpha.tolist(),
        "total_steps": pb.prop.grid.total_steps,
        "num_splines": pb.prop.param.num_splines,
        "layout": "per (qubit, carrier): num_splines real then num_splines imaginary, rad/ns",
        "config": {k: v for k, v in cfg.to_dict().items() if k not in RUNTIME_ONLY},
    })
    write_json(out / "report.json", report)
    return report


def write_pulses(path: Path, prop: Propagator, alpha):
    t = prop.grid.times()
    d = prop.param.control_values(t, alpha) / (2 * np.pi) * 1e3
    rows = []
    for k, tk in enumerate(t):
        for j in range(d.shape[1]):
            rows.append({"t_ns": float(tk), "qubit": j, "re_d_mhz": float(d[k, j].real),
                         "im_d_mhz": float(d[k, j].imag)})
    write_csv(path, ("t_ns", "qubit", "re_d_mhz", "im_d_mhz"), rows)


def cmd_simulate(cfg: RunConfig, alpha_file: str | None, out: Path) -> dict:
    steps = cfg.resolved_steps()
    if alpha_file is not None:
        try:
            data = json.loads(Path(alpha_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"alpha: cannot read {alpha_file}: {exc}") from exc
        alpha = np.asarray(data["alpha"] if isinstance(data, dict) else data, dtype=float)
        if isinstance(data, dict) and "total_steps" in data:
            steps = int(data["total_steps"])
    else:
        alpha = None
    param = cfg.parameterization()
    if alpha is None:
        alpha = np.zeros(param.total_params)
    if alpha.shape != (param.total_params,):
        raise ConfigError(f"alpha: expected {param.total_params} parameters, got {alpha.size}")
    prop = Propagator(cfg.system_spec(), param, WindowGrid(cfg.duration_ns, steps, 1))
    V = cfg.target_gate()
    U = prop.rollout(alpha)
    result = {
        "total_steps": steps,
        "trace_infidelity": trace_infidelity(U, V),
        "generalized_infidelity": generalized_infidelity(U, V),
        "unitarity_error": float(np.linalg.norm(U.conj().T @ U - np.eye(len(U)))),
        "U_re": U.real.tolist(),
        "U_im": U.imag.tolist(),
    }
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "simulate.json", result)
    return result


def gradient_check(problem: ShootingProblem, vars: ShootingVariables, components: int = 50,
                   step: float = 1e-5, seed: int = 0, workers: int = 1) -> dict:
    """Adjoint gradient against central differences in packed coordinates.

    Samples up to ``components`` entries from each block (alpha, Re W, Im W).
    """
    x = pack(problem, vars)
    with ParallelEvaluator(problem, workers) as ev:
        _, ga, gw = ev.gradient(vars)
    g = pack_gradient(problem, ga, gw)
    gscale = np.linalg.norm(g)
    d, n = problem.num_alpha, problem.n
    blocks = {"alpha": np.arange(d)}
    if problem.num_windows > 1:
        w = np.arange(d, problem.size).reshape(-1, 2, n * n)
        blocks["re_W"] = w[:, 0].ravel()
        blocks["im_W"] = w[:, 1].ravel()
    rng = np.random.default_rng(seed)
    result = {}
    for name, idx in blocks.items():
        pick = np.sort(rng.choice(idx, min(components, idx.size), replace=False))
        rel, absmax = 0.0, 0.0
        for i in pick:
            e = np.zeros_like(x)
            e[i] = step
            fd = (packed_objective(problem, x + e) - packed_objective(problem, x - e)) / (2 * step)
            err = abs(g[i] - fd)
            absmax = max(absmax, err)
            if abs(g[i]) > 1e-10 * gscale:
                rel = max(rel, err / max(abs(g[i]), abs(fd)))
        result[name] = {"components": int(pick.size), "max_rel_err": float(rel),
                        "max_abs_err": float(absmax)}
    return result


def gradcheck_point(cfg: RunConfig, sigma: float | None = None, perturbation: float = 0.05):
    """Random controls and roll-out states perturbed off the feasible set."""
    pb = cfg.problem(sigma=sigma)
    alpha = random_init_alpha(pb.prop.param, cfg.seed, cfg.init_amplitude_mhz)
    vars = init_by_rollout(pb, alpha)
    rng = np.random.default_rng(cfg.seed + 1)
    vars.windows = [W + perturbation * (rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape))
                    for W in vars.windows]
    return pb, vars


def cmd_gradcheck(cfg: RunConfig, out: Path, components: int = 50, step: float = 1e-5) -> dict:
    results = {}
    for sigma in cfg.sigmas:
        pb, vars = gradcheck_point(cfg, sigma)
        results[str(sigma)] = gradient_check(pb, vars, components, step, cfg.seed, cfg.workers)
    worst = max(b["max_rel_err"] for r in results.values() for b in r.values())
    report = {"testcase": cfg.name, "windows": cfg.windows, "step": step,
              "max_rel_err": worst, "passed": bool(worst <= GRADCHECK_FAIL), "by_sigma": results}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "gradcheck.json", report)
    return report


def cmd_benchmark(cfg: RunConfig, window_counts, worker_counts, out: Path, repeats: int = 3):
    lcm = math.lcm(*window_counts)
    steps = math.ceil(cfg.total_steps / lcm) * lcm
    rows = benchmark_gradient(lambda M: cfg.problem(windows=M, total_steps=steps), cfg.name,
                              window_counts, worker_counts, repeats, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "benchmark.csv", BENCHMARK_COLUMNS, rows)
    return rows


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msqoc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi_windows=False):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--preset", help="builtin test case: qft4, qft8, qft16")
        sp.add_argument("--windows", type=str if multi_windows else int,
                        help="time windows M" + (" (comma list)" if multi_windows else ""))
        sp.add_argument("--workers", type=str if multi_windows else int,
                        help="worker threads" + (" (comma list)" if multi_windows else ""))
        sp.add_argument("--sigma", help="state scaling, or comma list to scan")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--total-steps", type=int)
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--out", help="output directory")

    common(sub.add_parser("optimize", help="optimize controls"))
    sp = sub.add_parser("simulate", help="roll out a control vector")
    common(sp)
    sp.add_argument("--alpha", help="params.json from an optimize run")
    sp = sub.add_parser("gradcheck", help="compare adjoint gradient with finite differences")
    common(sp)
    sp.add_argument("--components", type=int, default=50)
    sp.add_argument("--step", type=float, default=1e-5)
    sp = sub.add_parser("benchmark", help="time gradient evaluations")
    common(sp, multi_windows=True)
    sp.add_argument("--repeats", type=int, default=3)
    return p


def _config_from_args(args) -> RunConfig:
    sigma = None
    if args.sigma is not None:
        vals = [float(v) for v in args.sigma.split(",") if v]
        sigma = vals[0] if len(vals) == 1 else vals
    overrides = dict(seed=args.seed, sigma=sigma, total_steps=args.total_steps,
                     max_iters=args.max_iters, output_dir=args.out)
    if args.command != "benchmark":
        overrides.update(windows=args.windows, workers=args.workers)
    if args.config is None and args.preset is None:
        raise ConfigError("config: give --config or --preset")
    return load_config(args.config, args.preset, **overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _config_from_args(args)
        out = Path(cfg.output_dir)
        if args.command == "optimize":
            rep = cmd_optimize(cfg, out)
            print(f"status={rep['status']} iterations={rep['iterations']} "
                  f"estimate={rep['rollout_estimate']:.3e} rollout={rep['rollout_infidelity']:.3e}")
        elif args.command == "simulate":
            rep = cmd_simulate(cfg, args.alpha, out)
            print(f"trace_infidelity={rep['trace_infidelity']:.17g} "
                  f"generalized_infidelity={rep['generalized_infidelity']:.17g}")
        elif args.command == "gradcheck":
            rep = cmd_gradcheck(cfg, out, args.components, args.step)
            for sigma, blocks in rep["by_sigma"].items():
                for name, b in blocks.items():
                    print(f"sigma={sigma} {name}: max_rel_err={b['max_rel_err']:.3e} "
                          f"({b['components']} components)")
            if not rep["passed"]:
                print(f"gradient check failed: {rep['max_rel_err']:.3e} > {GRADCHECK_FAIL}",
                      file=sys.stderr)
                return 1
        elif args.command == "benchmark":
            Ms = _int_list(args.windows) if args.windows else [1, 2, 4, 8]
            ws = _int_list(args.workers) if args.workers else [1]
            rows = cmd_benchmark(cfg, Ms, ws, out, args.repeats)
            for r in rows:
                eff = r["speedup"] / r["workers"]
                print(f"{r['testcase']} M={r['M']} workers={r['workers']} "
                      f"{r['grad_walltime_s']:.4f}s speedup={r['speedup']:.2f} efficiency={eff:.2f}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (PropagationError, TaskError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
