"""Experiment pipeline: datasets, PAoI-vs-lambda, PAoI CDF and timing sweeps.

Each command writes CSV files with a header row and a ``<name>.meta.json``
sibling that holds the full configuration, seeds and software versions.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from .analytics import link_geometry, network_objective
from .config import ExperimentConfig
from .gli.net import NetConfig, NetParams, infer, init_params, prepare_batch, infer_batch
from .gli.weights import load_params
from .model import Layout, LayoutGenSpec, TrafficParams, distance_matrix, generate_layout, load_layout, save_layout, seeds_from
from .schedulers import coordinate_descent, projected_gradient, uniform_policy
from .simulator import SimConfig
from .simulator import run as simulate


def environment() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "machine": platform.machine(),
        "processor": platform.processor(),
        "system": platform.system(),
    }


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return v


def write_meta(csv_path, cfg: ExperimentConfig, **extra) -> Path:
    meta = {"config": cfg.to_dict(), "environment": environment(), **extra}
    path = Path(str(csv_path) + ".meta.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _out(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out_dir) / cfg.experiment
    path.mkdir(parents=True, exist_ok=True)
    return path


def _map(cfg: ExperimentConfig, fn, items):
    """Ordered map over independent jobs, optionally on a thread pool."""
    items = list(items)
    if cfg.threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(cfg.threads) as pool:
        return list(pool.map(fn, items))


# -- datasets ------------------------------------------------------------------------

def gen_spec(cfg: ExperimentConfig, seed: int, n_links: int | None = None) -> LayoutGenSpec:
    lay = cfg.layout
    return LayoutGenSpec(n_links or lay.n_links, lay.side_length, lay.d_min, lay.d_max, seed)


def cmd_gen_dataset(cfg: ExperimentConfig, out: Path | None = None) -> Path:
    """Write train/test layout files plus a manifest of counts and seeds."""
    out = Path(out) if out is not None else Path(cfg.out_dir) / cfg.experiment / "dataset"
    n_train, n_test = cfg.dataset.n_train, cfg.dataset.n_test
    seeds = seeds_from(cfg.seed, n_train + n_test)
    splits = {"train": seeds[:n_train], "test": seeds[n_train:]}
    for split, split_seeds in splits.items():
        def job(k, split=split, split_seeds=split_seeds):
            save_layout(generate_layout(gen_spec(cfg, split_seeds[k])), out / split / f"layout_{k:05d}.csv")
        _map(cfg, job, range(len(split_seeds)))
    manifest = {
        "master_seed": cfg.seed,
        "layout": asdict(cfg.layout),
        "n_train": n_train,
        "n_test": n_test,
        "train_seeds": splits["train"],
        "test_seeds": splits["test"],
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(path, split: str, limit: int | None = None) -> list[Layout]:
    files = sorted((Path(path) / split).glob("layout_*.csv"))
    if not files:
        raise FileNotFoundError(f"no layouts under {Path(path) / split}")
    return [load_layout(f) for f in files[:limit]]


def eval_layouts(cfg: ExperimentConfig, count: int, salt: int) -> list[Layout]:
    if cfg.eval_dataset:
        return load_dataset(cfg.eval_dataset, "test", count)
    return [generate_layout(gen_spec(cfg, s)) for s in seeds_from(cfg.seed + salt, count)]


# -- methods ---------------------------------------------------------------------------

def load_net(cfg: ExperimentConfig) -> tuple[NetParams, NetConfig]:
    if not cfg.weights:
        raise FileNotFoundError("method gli_net needs a weights file (config key 'weights')")
    if not Path(cfg.weights).exists():
        raise FileNotFoundError(f"weights file {cfg.weights} not found")
    return load_params(cfg.weights, cfg.net)


def policies(cfg: ExperimentConfig, method: str, layouts, tr: TrafficParams, geos, net=None) -> list[np.ndarray]:
    if method == "uniform":
        return [uniform_policy(lay.n_links, cfg.uniform_p) for lay in layouts]
    if method == "coordinate_descent":
        return _map(cfg, lambda k: coordinate_descent(layouts[k], cfg.channel, tr, cfg.optimizer, geo=geos[k]).policy,
                    range(len(layouts)))
    if method == "projected_gradient":
        return _map(cfg, lambda k: projected_gradient(layouts[k], cfg.channel, tr, cfg.optimizer, geo=geos[k]).policy,
                    range(len(layouts)))
    if method == "gli_net":
        params, ncfg = net
        batch = prepare_batch(layouts, ncfg)
        p = infer_batch(batch, params, ncfg)
        return [p[batch.layout_slice(b)] for b in range(len(layouts))]
    raise ValueError(method)


def _sim_mean(cfg: ExperimentConfig, layout: Layout, p, tr: TrafficParams, seed: int) -> float:
    stats = simulate(SimConfig(layout, p, cfg.channel, tr, n_slots=cfg.sim_slots, seed=seed))
    return stats.network_mean_paoi()


# -- figures ---------------------------------------------------------------------------

LAMBDA_HEADER = ["lambda", "method", "mean_paoi", "sim_paoi", "ci95"]


def cmd_paoi_vs_lambda(cfg: ExperimentConfig) -> Path:
    """Mean analytic PAoI per (lambda, method) over the evaluation layouts."""
    net = load_net(cfg) if "gli_net" in cfg.methods else None
    layouts = eval_layouts(cfg, cfg.n_eval_layouts, salt=1)
    geos = [link_geometry(distance_matrix(lay), cfg.channel) for lay in layouts]
    sim_seeds = seeds_from(cfg.seed + 2, len(layouts))
    rows = []
    for lam in cfg.lambdas:
        tr = TrafficParams(lam, cfg.traffic.slot_duration)
        for method in cfg.methods:
            pols = policies(cfg, method, layouts, tr, geos, net)
            vals = [network_objective(p, tr=tr, geo=g).mean_paoi for p, g in zip(pols, geos)]
            row = {"lambda": lam, "method": method, "mean_paoi": float(np.mean(vals)),
                   "sim_paoi": float("nan"), "ci95": float("nan")}
            if cfg.sim_slots > 0:
                sims = np.array(_map(cfg, lambda k: _sim_mean(cfg, layouts[k], pols[k], tr, sim_seeds[k]),
                                     range(len(layouts))))
                row["sim_paoi"] = float(sims.mean())
                row["ci95"] = float(1.96 * sims.std(ddof=1) / np.sqrt(len(sims))) if len(sims) > 1 else float("nan")
            rows.append(row)
    path = write_csv(_out(cfg) / "paoi_vs_lambda.csv", LAMBDA_HEADER, rows)
    write_meta(path, cfg, note="'uniform' is a fixed-probability ALOHA stand-in for the adaptive benchmark",
               n_layouts=len(layouts))
    return path


CDF_HEADER = ["method", "rank", "layout", "mean_paoi", "cdf"]


def cmd_paoi_cdf(cfg: ExperimentConfig) -> Path:
    """Per-layout mean PAoI for each method, sorted, with its empirical CDF."""
    if cfg.n_cdf_layouts < 2:
        raise ValueError("the CDF needs at least two layouts")
    net = load_net(cfg) if "gli_net" in cfg.methods else None
    layouts = eval_layouts(cfg, cfg.n_cdf_layouts, salt=3)
    geos = [link_geometry(distance_matrix(lay), cfg.channel) for lay in layouts]
    tr = TrafficParams(cfg.cdf_lambda, cfg.traffic.slot_duration)
    rows = []
    n = len(layouts)
    for method in cfg.methods:
        pols = policies(cfg, method, layouts, tr, geos, net)
        vals = np.array([network_objective(p, tr=tr, geo=g).mean_paoi for p, g in zip(pols, geos)])
        order = np.argsort(vals, kind="stable")
        for rank, k in enumerate(order, start=1):
            rows.append({"method": method, "rank": rank, "layout": int(k), "mean_paoi": float(vals[k]),
                         "cdf": rank / n})
    path = write_csv(_out(cfg) / "paoi_cdf.csv", CDF_HEADER, rows)
    write_meta(path, cfg, n_layouts=n, arrival_rate=cfg.cdf_lambda)
    return path


TIMING_HEADER = ["N", "method", "median_ms", "reps"]


def loglog_slope(ns, times) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(times, float)), 1)[0])


def time_single_layout(method: str, layout: Layout, cfg: ExperimentConfig, net, reps: int) -> float:
    """Median wall time (ms) to produce a policy for one layout, after one warm-up."""
    def once():
        t0 = time.perf_counter()
        if method == "gli_net":
            infer(layout, *net)
        elif method == "coordinate_descent":
            coordinate_descent(layout, cfg.channel, cfg.traffic, cfg.optimizer)
        elif method == "projected_gradient":
            projected_gradient(layout, cfg.channel, cfg.traffic, cfg.optimizer)
        else:
            uniform_policy(layout.n_links, cfg.uniform_p)
        return (time.perf_counter() - t0) * 1e3

    once()
    return float(np.median([once() for _ in range(reps)]))


def cmd_bench_timing(cfg: ExperimentConfig) -> tuple[Path, dict[str, float]]:
    methods = [m for m in cfg.methods if m != "uniform"] or ["gli_net", "coordinate_descent"]
    net = None
    if "gli_net" in methods:
        if cfg.weights:
            net = load_net(cfg)
        else:
            # timing does not depend on the weight values
            net = (init_params(cfg.net), cfg.net)
    seeds = seeds_from(cfg.seed + 4, len(cfg.bench.n_values))
    rows = []
    per_method = {m: [] for m in methods}
    for n_links, seed in zip(cfg.bench.n_values, seeds):
        layout = generate_layout(gen_spec(cfg, seed, n_links))
        for m in methods:
            ms = time_single_layout(m, layout, cfg, net, cfg.bench.reps)
            per_method[m].append(ms)
            rows.append({"N": n_links, "method": m, "median_ms": ms, "reps": cfg.bench.reps})
    slopes = {m: loglog_slope(cfg.bench.n_values, t) for m, t in per_method.items()}
    path = write_csv(_out(cfg) / "bench_timing.csv", TIMING_HEADER, rows)
    write_meta(path, cfg, loglog_slopes=slopes, random_weights=bool(net and not cfg.weights),
               timed_at=time.strftime("%Y-%m-%dT%H:%M:%S"))
    return path, slopes


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, seed=seed)
