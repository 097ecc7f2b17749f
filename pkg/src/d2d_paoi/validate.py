"""Oracle checks bundled as a release gate.

``run_checks`` returns a JSON-serializable report: one entry per check with
its measured error, the tolerance it was held to and a pass flag.
"""

from __future__ import annotations

import hashlib
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analytics, oracles
from .analytics import link_geometry, network_objective, paoi_from_fail_prob, preemption_prob
from .config import ExperimentConfig
from .gli.net import NetConfig, batch_loss, infer, init_params, loss_and_gradients, policies_before_final_round, prepare_batch
from .gli.training import train
from .model import ChannelParams, LayoutGenSpec, TrafficParams, distance_matrix, generate_layout, save_layout, seeds_from
from .schedulers import OptimizerConfig, coordinate_descent, projected_gradient
from .simulator import SimConfig, empirical_success_probability
from .simulator import run as simulate

# small deployment area so that links interfere noticeably
DENSE = dict(side_length=100.0, d_min=2.0, d_max=30.0)

SIZES = {
    "quick": dict(subset_layouts=20, max_n=10, mc_draws=10**6, grad_instances=10, sim_slots=400_000,
                  sinr_layouts=1, cd_instances=5),
    "full": dict(subset_layouts=100, max_n=12, mc_draws=10**7, grad_instances=100, sim_slots=10**6,
                 sinr_layouts=10, cd_instances=50),
}


def dense_layout(n: int, seed: int):
    return generate_layout(LayoutGenSpec(n, seed=seed, **DENSE))


def _entry(name, error, tolerance, passed=None, **detail):
    error = float(error)
    if passed is None:
        passed = bool(np.isfinite(error) and error <= tolerance)
    return {"name": name, "passed": bool(passed), "error": error, "tolerance": float(tolerance), **detail}


def check_subset_oracle(seed, size, success_fn=None):
    """Closed-form success probability vs enumeration of interferer subsets."""
    success_fn = success_fn or analytics.success_probabilities
    ch = ChannelParams()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, s in enumerate(seeds_from(seed, size["subset_layouts"])):
        n = 2 + k % (size["max_n"] - 1)
        dm = distance_matrix(dense_layout(n, s))
        p = rng.uniform(0.05, 1.0, n)
        fast = np.asarray(success_fn(p, dm, ch))
        for i in range(n):
            ref = oracles.success_by_enumeration(i, p, dm, ch)
            worst = max(worst, abs(fast[i] - ref) / abs(ref))
    return _entry("subset_oracle", worst, 1e-12, layouts=size["subset_layouts"])


def check_fading_mc(seed, size):
    """Conditional success (two-link example) vs Monte Carlo over Rayleigh fades, in standard errors."""
    ch = ChannelParams(noise_power=0.0)
    dm = np.array([[10.0, 1.0], [20.0, 1.0]])
    exact = analytics.cond_success_given_active_set(0, [1], dm, ch)
    est, se = oracles.success_by_fading_mc(0, [1], dm, ch, size["mc_draws"], seed)
    return _entry("fading_monte_carlo", abs(est - exact) / se, 3.0, exact=exact, estimate=est)


def check_quadrature(seed, size):
    worst = 0.0
    for lam in (1e-3, 0.1, 0.5, 1.0, 3.0):
        for mu in (0.5, 1.0, 2.0):
            ref = oracles.generation_interval_by_quadrature(lam, mu)
            worst = max(worst, abs(analytics.effective_generation_interval(lam, mu) - ref) / ref)
    return _entry("generation_interval_quadrature", worst, 1e-10)


def check_objective_gradient(seed, size):
    ch, tr = ChannelParams(), TrafficParams()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for s in seeds_from(seed, size["grad_instances"]):
        geo = link_geometry(distance_matrix(dense_layout(5, s)), ch)
        p = rng.uniform(0.1, 0.9, 5)
        g = network_objective(p, tr=tr, geo=geo, want_grad=True).grad
        fd = oracles.central_difference(lambda x: network_objective(x, tr=tr, geo=geo).mean_paoi, p, 1e-6)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    return _entry("objective_gradient", worst, 1e-6, instances=size["grad_instances"])


def check_queueing(seed, size):
    """Forced-success simulator vs closed-form mean PAoI and preemption probability."""
    lay = generate_layout(LayoutGenSpec(1, seed=seed))
    worst_rel, worst_z = 0.0, 0.0
    for q in (0.0, 0.2, 0.5):
        for lam in (0.2, 0.5, 1.0):
            tr = TrafficParams(lam, 1.0)
            st = simulate(SimConfig(lay, np.ones(1), ChannelParams(), tr, n_slots=size["sim_slots"],
                                    seed=seed, forced_success_prob=1.0 - q))
            exact = paoi_from_fail_prob(q, tr).e_paoi
            worst_rel = max(worst_rel, abs(st.network_mean_paoi() - exact) / exact)
            gamma = preemption_prob(lam)
            trials = st.preempted[0] + st.eligible[0]
            z = abs(st.preemption_frequency()[0] - gamma) / np.sqrt(gamma * (1 - gamma) / trials)
            worst_z = max(worst_z, z)
    tol = 0.01 if size["sim_slots"] >= 10**6 else 0.02
    return [_entry("queueing_paoi", worst_rel, tol), _entry("preemption_frequency", worst_z, 3.0)]


def check_sinr_end_to_end(seed, size):
    ch, tr = ChannelParams(), TrafficParams()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for s in seeds_from(seed + 1, size["sinr_layouts"]):
        lay = dense_layout(10, s)
        p = rng.uniform(0.3, 1.0, 10)
        exact = network_objective(p, distance_matrix(lay), ch, tr).mean_paoi
        st = simulate(SimConfig(lay, p, ch, tr, n_slots=size["sim_slots"], seed=s))
        worst = max(worst, abs(st.network_mean_paoi() - exact) / exact)
    return _entry("simulator_vs_analytics", worst, 0.03, layouts=size["sinr_layouts"])


def check_phy_saturated(seed, size):
    ch = ChannelParams()
    lay = dense_layout(6, seed)
    p = np.random.default_rng(seed).uniform(0.3, 1.0, 6)
    exact = analytics.success_probabilities(p, distance_matrix(lay), ch)
    st = simulate(SimConfig(lay, p, ch, TrafficParams(), n_slots=size["sim_slots"], seed=seed, saturated=True))
    z = [abs(empirical_success_probability(st, i) - exact[i]) / np.sqrt(exact[i] * (1 - exact[i]) / st.eligible[i])
         for i in range(6)]
    # with six links a single 3-sigma excursion is plausible; require five of six
    inside = int(sum(v <= 3.0 for v in z))
    return _entry("saturated_success_frequency", max(z), 3.0, passed=inside >= 5, links_inside=inside)


def gli_gradient_error(seed: int) -> dict[str, float]:
    """Per-tensor relative error of network gradients vs central differences (down-scaled net)."""
    ch, tr = ChannelParams(), TrafficParams()
    cfg = NetConfig(resolution=20, conv_filter_sizes=(3, 3, 3), hidden_sizes=(8, 8), feedback_rounds=2, seed=seed)
    lays = [generate_layout(LayoutGenSpec(5, 100.0, 2.0, 30.0, s)) for s in seeds_from(seed, 2)]
    batch = prepare_batch(lays, cfg, ch)
    params = init_params(cfg)
    params.conv_b[:] = 0.05
    prev = policies_before_final_round(batch, params, cfg)
    _, grads, _ = loss_and_gradients(batch, params, cfg, tr, prev_p=prev)
    names = ["conv1", "conv2", "conv3", "conv_bias", "W1", "b1", "W2", "b2", "W3", "b3"]
    errs = {}
    for name, w, g in zip(names, params.tensors(), grads.tensors()):
        def f(x, w=w):
            saved = w.copy()
            w[...] = x
            out = batch_loss(batch, params, cfg, tr, prev_p=prev)
            w[...] = saved
            return out
        fd = oracles.central_difference(f, w.copy(), 1e-5)
        scale = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
        errs[name] = float(np.linalg.norm(g - fd) / scale)
    return errs


def check_gli_gradient(seed, size):
    errs = gli_gradient_error(seed)
    return _entry("gli_parameter_gradient", max(errs.values()), 1e-5, per_tensor=errs)


def check_cd_vs_grid(seed, size):
    ch, tr = ChannelParams(), TrafficParams()
    ocfg = OptimizerConfig()
    K = analytics.paoi_constant(tr)
    worst, monotone = 0.0, True
    for s in seeds_from(seed + 2, size["cd_instances"]):
        lay = generate_layout(LayoutGenSpec(2, 100.0, 2.0, 30.0, s))
        geo = link_geometry(distance_matrix(lay), ch)
        trace = coordinate_descent(lay, ch, tr, ocfg, geo=geo)
        monotone &= bool(np.all(np.diff(trace.update_objective) <= 0))
        c, nf = geo.coupling, geo.noise_factor

        def obj(P1, P2):
            s1 = P1 * nf[0] * (1 - P2 * c[1, 0])
            s2 = P2 * nf[1] * (1 - P1 * c[0, 1])
            return 0.5 * (K / s1 + K / s2) + tr.slot_duration

        best, _ = oracles.grid_search_2d(obj, ocfg.p_floor)
        worst = max(worst, abs(trace.objective[-1] - best))
    return [_entry("cd_vs_grid_search", worst, 1e-3, instances=size["cd_instances"]),
            _entry("cd_trace_monotone", 0.0 if monotone else 1.0, 0.0, passed=monotone)]


# -- determinism --------------------------------------------------------------------------

def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if isinstance(a, (bytes, str)):
            h.update(a.encode() if isinstance(a, str) else a)
        else:
            h.update(np.ascontiguousarray(np.asarray(a, dtype=np.float64)).tobytes())
    return h.hexdigest()


def pipeline_hashes(seed: int) -> dict[str, str]:
    """One hash per pipeline stage; everything here must repeat bit for bit."""
    from .experiments import cmd_gen_dataset, cmd_paoi_cdf, cmd_paoi_vs_lambda

    ch, tr = ChannelParams(), TrafficParams()
    out = {}
    lay = dense_layout(8, seed)
    with tempfile.TemporaryDirectory() as tmp:
        save_layout(lay, Path(tmp) / "l.csv")
        out["layout"] = _digest((Path(tmp) / "l.csv").read_bytes(), Path(tmp, "l.csv.meta").read_bytes())
    p = np.linspace(0.2, 0.9, 8)
    rep = network_objective(p, distance_matrix(lay), ch, tr, want_grad=True)
    out["analytics"] = _digest(rep.per_link_paoi, rep.grad)
    st = simulate(SimConfig(lay, p, ch, tr, n_slots=20_000, seed=seed, record_samples=True))
    out["simulator"] = _digest(st.delivered, st.paoi_sum, st.paoi_sumsq, st.preempted, st.eligible,
                               st.samples)
    cd = coordinate_descent(lay, ch, tr)
    pg = projected_gradient(lay, ch, tr)
    out["optimizers"] = _digest(cd.policy, cd.objective, pg.policy, pg.objective)
    cfg = NetConfig(resolution=20, conv_filter_sizes=(3, 3, 3), hidden_sizes=(8, 8), epochs=2, batch_size=4,
                    seed=seed)
    lays = [generate_layout(LayoutGenSpec(6, 100.0, 2.0, 30.0, s)) for s in seeds_from(seed, 12)]
    params, curve = train(lays, init_params(cfg), cfg, ch, tr)
    out["training"] = _digest(*params.tensors(), curve.train_loss, curve.val_loss)
    out["inference"] = _digest(infer(lay, params, cfg))
    with tempfile.TemporaryDirectory() as tmp:
        ecfg = ExperimentConfig(experiment="det", seed=seed, out_dir=tmp, lambdas=(0.3, 0.7),
                                n_eval_layouts=2, n_cdf_layouts=3, sim_slots=2000,
                                layout=replace(ExperimentConfig().layout, n_links=6))
        ecfg = replace(ecfg, dataset=replace(ecfg.dataset, n_train=2, n_test=1))
        ds = cmd_gen_dataset(ecfg)
        files = sorted(ds.rglob("*"))
        out["dataset"] = _digest(*[f.read_bytes() for f in files if f.is_file()])
        csv1 = cmd_paoi_vs_lambda(ecfg)
        csv2 = cmd_paoi_cdf(ecfg)
        out["experiments"] = _digest(csv1.read_bytes(), csv2.read_bytes())
    return out


def check_determinism(seed, size):
    first, second = pipeline_hashes(seed), pipeline_hashes(seed)
    differing = sorted(k for k in first if first[k] != second[k])
    return _entry("determinism", len(differing), 0, stages=sorted(first), differing=differing)


CHECKS = [
    check_subset_oracle, check_fading_mc, check_quadrature, check_objective_gradient, check_queueing,
    check_phy_saturated, check_sinr_end_to_end, check_gli_gradient, check_cd_vs_grid, check_determinism,
]


def run_checks(seed: int = 0, level: str = "quick", success_fn=None, only=None) -> dict:
    """Run every check; ``success_fn`` substitutes the closed-form success function (mutation testing)."""
    if level not in SIZES:
        raise ValueError(f"unknown level {level!r}; choose from {sorted(SIZES)}")
    size = SIZES[level]
    results = []
    for check in CHECKS:
        if only and check.__name__.removeprefix("check_") not in only:
            continue
        t0 = time.perf_counter()
        kwargs = {"success_fn": success_fn} if check is check_subset_oracle else {}
        out = check(seed, size, **kwargs)
        for entry in out if isinstance(out, list) else [out]:
            entry["seconds"] = round(time.perf_counter() - t0, 3)
            results.append(entry)
    return {"seed": seed, "level": level, "passed": all(r["passed"] for r in results), "checks": results}
