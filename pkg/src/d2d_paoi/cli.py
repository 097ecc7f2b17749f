"""Command-line entry point: ``d2d-paoi <subcommand> [options]``.

Exit status: 0 success, 1 validation failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .analytics import link_geometry, network_objective, paoi_breakdown
from .config import ExperimentConfig, load_config
from .gli.net import init_params, prepare_batch
from .gli.training import train
from .gli.weights import WeightsFormatError, save_params
from .model import LayoutGenerationError, distance_matrix, generate_layout, load_layout, save_layout, seeds_from
from .schedulers import coordinate_descent, load_policy_csv, projected_gradient, uniform_policy, write_policy_csv, write_trace_csv
from .simulator import SimConfig, write_samples_csv, write_summary_csv
from .simulator import run as simulate

log = logging.getLogger("d2d_paoi")


class BadInput(Exception):
    pass


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment config")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    g.add_argument("--out-dir", default=argparse.SUPPRESS, help="output root directory")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for independent jobs")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return g


def _policy_args(sp):
    grp = sp.add_mutually_exclusive_group()
    grp.add_argument("--policy", help="policy CSV (link,p)")
    grp.add_argument("--uniform", type=float, help="use the same access probability on every link")


def build_parser() -> argparse.ArgumentParser:
    glob = _global_flags()
    ap = argparse.ArgumentParser(prog="d2d-paoi", description=__doc__.splitlines()[0], parents=[glob])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", parents=[glob], help="generate a train/test layout dataset")
    sp.add_argument("--n-train", type=int)
    sp.add_argument("--n-test", type=int)
    sp.add_argument("--n-links", type=int)
    sp.add_argument("--dest", help="dataset directory (default <out-dir>/<experiment>/dataset)")
    sp.add_argument("--single", help="write one layout to this CSV path instead of a dataset")

    sp = sub.add_parser("analyze", parents=[glob], help="closed-form per-link PAoI breakdown")
    sp.add_argument("--layout", required=True)
    _policy_args(sp)

    sp = sub.add_parser("simulate", parents=[glob], help="slot-level Monte Carlo run")
    sp.add_argument("--layout", required=True)
    _policy_args(sp)
    sp.add_argument("--slots", type=int, default=100_000)
    sp.add_argument("--forced-success", type=float)
    sp.add_argument("--saturated", action="store_true")
    sp.add_argument("--interference", choices=("policy", "backlogged"), default="policy")
    sp.add_argument("--samples", action="store_true", help="also dump every PAoI sample")

    sp = sub.add_parser("optimize", parents=[glob], help="optimize a policy for one layout")
    sp.add_argument("--layout", required=True)
    sp.add_argument("--method", choices=("coordinate_descent", "projected_gradient", "cd", "pg"),
                    default="coordinate_descent")

    sp = sub.add_parser("train", parents=[glob], help="train the GLI network")
    sp.add_argument("--dataset", help="dataset directory from 'gen' (default: generate layouts from the config)")
    sp.add_argument("--n-layouts", type=int, help="limit / number of training layouts")
    sp.add_argument("--n-links", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--learning-rate", type=float)

    sp = sub.add_parser("infer", parents=[glob], help="policy from trained weights")
    sp.add_argument("--layout", required=True)
    sp.add_argument("--weights")

    for name, helptext in (("paoi-vs-lambda", "mean PAoI per arrival rate and method"),
                           ("paoi-cdf", "per-layout PAoI distribution per method"),
                           ("bench-timing", "single-layout optimization time vs N")):
        sp = sub.add_parser(name, parents=[glob], help=helptext)
        sp.add_argument("--methods", nargs="+")
        sp.add_argument("--weights")

    sp = sub.add_parser("validate", parents=[glob], help="run the oracle checks")
    sp.add_argument("--level", choices=("quick", "full"), default="quick")
    sp.add_argument("--report", help="write the JSON report here (default stdout)")
    return ap


def _config(args) -> ExperimentConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out_dir", None),
        "threads": getattr(args, "threads", None),
    }
    cfg = load_config(getattr(args, "config", None), **overrides)
    if getattr(args, "methods", None):
        cfg = replace(cfg, methods=tuple(args.methods))
    if getattr(args, "weights", None):
        cfg = replace(cfg, weights=args.weights)
    return cfg


def _out(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out_dir) / cfg.experiment
    path.mkdir(parents=True, exist_ok=True)
    return path


def _policy(args, n: int) -> np.ndarray:
    if args.policy:
        p = load_policy_csv(args.policy)
        if p.shape != (n,):
            raise BadInput(f"policy has {p.size} entries, layout has {n} links")
        return p
    return uniform_policy(n, args.uniform if args.uniform is not None else 0.5)


def cmd_gen(args, cfg):
    lay = cfg.layout
    if args.n_links:
        lay = replace(lay, n_links=args.n_links)
    cfg = replace(cfg, layout=lay)
    if args.single:
        save_layout(generate_layout(ex.gen_spec(cfg, cfg.seed)), args.single)
        print(args.single)
        return 0
    ds = cfg.dataset
    ds = replace(ds, n_train=args.n_train if args.n_train is not None else ds.n_train,
                 n_test=args.n_test if args.n_test is not None else ds.n_test)
    print(ex.cmd_gen_dataset(replace(cfg, dataset=ds), args.dest))
    return 0


def cmd_analyze(args, cfg):
    layout = load_layout(args.layout)
    p = _policy(args, layout.n_links)
    dm = distance_matrix(layout)
    rows = []
    for i in range(layout.n_links):
        b = paoi_breakdown(i, p, dm, cfg.channel, cfg.traffic)
        rows.append({"link": i, "p": p[i], **asdict(b)})
    path = ex.write_csv(_out(cfg) / "analyze.csv", list(rows[0]), rows)
    ex.write_meta(path, cfg, layout=args.layout)
    print(f"mean_paoi {network_objective(p, dm, cfg.channel, cfg.traffic).mean_paoi!r}")
    return 0


def cmd_simulate(args, cfg):
    layout = load_layout(args.layout)
    p = _policy(args, layout.n_links)
    sc = SimConfig(layout, p, cfg.channel, cfg.traffic, n_slots=args.slots, seed=cfg.seed,
                   forced_success_prob=args.forced_success, saturated=args.saturated,
                   interference=args.interference, record_samples=args.samples)
    st = simulate(sc)
    out = _out(cfg)
    write_summary_csv(st, out / "sim_summary.csv")
    ex.write_meta(out / "sim_summary.csv", cfg, layout=args.layout, slots=args.slots,
                  forced_success_prob=args.forced_success, saturated=args.saturated,
                  interference=args.interference)
    if args.samples:
        write_samples_csv(st, out / "sim_samples.csv")
        ex.write_meta(out / "sim_samples.csv", cfg, layout=args.layout, slots=args.slots)
    print(f"mean_paoi {st.network_mean_paoi()!r}")
    return 0


def cmd_optimize(args, cfg):
    layout = load_layout(args.layout)
    method = {"cd": "coordinate_descent", "pg": "projected_gradient"}.get(args.method, args.method)
    fn = coordinate_descent if method == "coordinate_descent" else projected_gradient
    trace = fn(layout, cfg.channel, cfg.traffic, cfg.optimizer)
    out = _out(cfg)
    write_trace_csv(trace, out / f"{method}_trace.csv")
    write_policy_csv(trace.policy, out / f"{method}_policy.csv")
    for name in (f"{method}_trace.csv", f"{method}_policy.csv"):
        ex.write_meta(out / name, cfg, layout=args.layout, iterations=trace.iterations, converged=trace.converged)
    print(f"mean_paoi {trace.objective[-1]!r} iterations {trace.iterations} converged {trace.converged}")
    return 0


def cmd_train(args, cfg):
    net = cfg.net
    net = replace(net, **{k: v for k, v in (("epochs", args.epochs), ("resolution", args.resolution),
                                               ("learning_rate", args.learning_rate)) if v is not None})
    if args.n_links:
        cfg = replace(cfg, layout=replace(cfg.layout, n_links=args.n_links))
    cfg = replace(cfg, net=net)
    if args.dataset:
        layouts = ex.load_dataset(args.dataset, "train", args.n_layouts)
    else:
        count = args.n_layouts or cfg.dataset.n_train
        layouts = [generate_layout(ex.gen_spec(cfg, s)) for s in seeds_from(cfg.seed, count)]
    if any(lay.side_length != layouts[0].side_length for lay in layouts):
        raise BadInput("training layouts must share one side length")
    params, curve = train(layouts, init_params(net), net, cfg.channel, cfg.traffic)
    out = _out(cfg)
    save_params(params, net, out / "weights.bin")
    path = ex.write_csv(out / "training_curve.csv", ["epoch", "train_loss", "val_loss", "learning_rate", "wall_s"],
                        curve.rows())
    ex.write_meta(path, cfg, dataset=args.dataset, n_layouts=len(layouts))
    print(out / "weights.bin")
    return 0


def cmd_infer(args, cfg):
    from .gli.net import infer_batch

    params, net = ex.load_net(cfg)
    layout = load_layout(args.layout)
    batch = prepare_batch([layout], net)
    p = infer_batch(batch, params, net)
    out = _out(cfg)
    write_policy_csv(p, out / "gli_net_policy.csv")
    ex.write_meta(out / "gli_net_policy.csv", cfg, layout=args.layout)
    geo = link_geometry(distance_matrix(layout), cfg.channel)
    print(f"mean_paoi {network_objective(p, tr=cfg.traffic, geo=geo).mean_paoi!r}")
    return 0


def cmd_paoi_vs_lambda(args, cfg):
    print(ex.cmd_paoi_vs_lambda(cfg))
    return 0


def cmd_paoi_cdf(args, cfg):
    print(ex.cmd_paoi_cdf(cfg))
    return 0


def cmd_bench_timing(args, cfg):
    path, slopes = ex.cmd_bench_timing(cfg)
    print(path)
    for m, s in slopes.items():
        print(f"{m} loglog_slope {s:.3f}")
    return 0


def cmd_validate(args, cfg):
    from .validate import run_checks

    report = run_checks(cfg.seed, args.level)
    text = json.dumps(report, indent=2, sort_keys=True, default=ex._json_default)
    if args.report:
        Path(args.report).write_text(text + "\n")
        for c in report["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} error={c['error']:.3g} tol={c['tolerance']:.3g}")
    else:
        print(text)
    return 0 if report["passed"] else 1


COMMANDS = {
    "gen": cmd_gen, "analyze": cmd_analyze, "simulate": cmd_simulate, "optimize": cmd_optimize,
    "train": cmd_train, "infer": cmd_infer, "paoi-vs-lambda": cmd_paoi_vs_lambda, "paoi-cdf": cmd_paoi_cdf,
    "bench-timing": cmd_bench_timing, "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (BadInput, ValueError, FileNotFoundError, WeightsFormatError, LayoutGenerationError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
