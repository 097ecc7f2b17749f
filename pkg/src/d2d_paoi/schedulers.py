"""Non-learned policy optimizers: uniform ALOHA, coordinate descent, projected gradient."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .analytics import LinkGeometry, link_geometry, network_objective, paoi_constant
from .model import ChannelParams, Layout, TrafficParams, distance_matrix

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 200
    tol: float = 1e-9
    p_floor: float = 1e-4
    scalar_evals: int = 40
    learning_rate: float = 1.0
    momentum: float = 0.9
    max_step_halvings: int = 30

    def __post_init__(self):
        if not 0 < self.p_floor < 1:
            raise ValueError("p_floor must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.scalar_evals < 4:
            raise ValueError("scalar_evals must be >= 4")


@dataclass
class OptimizerTrace:
    objective: list[float]
    policy: np.ndarray
    iterations: int
    wall_time: float
    converged: bool
    wall_ms: list[float] = field(default_factory=list)
    update_objective: np.ndarray | None = None
    op_count: int = 0


def uniform_policy(n: int, p: float) -> np.ndarray:
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    return np.full(n, float(p))


def _geometry(layout: Layout, ch: ChannelParams) -> LinkGeometry:
    return link_geometry(distance_matrix(layout), ch)


def coordinate_descent(layout: Layout, ch: ChannelParams, tr: TrafficParams,
                       cfg: OptimizerConfig = OptimizerConfig(), init=None,
                       geo: LinkGeometry | None = None) -> OptimizerTrace:
    """Cyclic exact line minimization of the network mean peak AoI.

    Each one-link subproblem K/(x b) + sum_k B_k / (1 - x c_k) is convex in x,
    so a golden-section search over [p_floor, 1] finds its minimum.
    """
    t0 = time.perf_counter()
    if geo is None:
        geo = _geometry(layout, ch)
    n = geo.n_links
    p = uniform_policy(n, 0.5) if init is None else np.clip(np.asarray(init, dtype=np.float64), cfg.p_floor, 1.0)
    if not np.isfinite(network_objective(p, tr=tr, geo=geo).mean_paoi):
        p = uniform_policy(n, 0.5)
    K = paoi_constant(tr)
    p, obj, stamps, n_sweeps, converged, updates, ops = _cd_kernel(
        geo.coupling, geo.noise_factor, K, tr.slot_duration, p, cfg.p_floor, cfg.tol,
        cfg.max_iters, cfg.scalar_evals, t0,
    )
    wall = time.perf_counter() - t0
    return OptimizerTrace(
        objective=obj[: n_sweeps + 1].tolist(),
        policy=p,
        iterations=n_sweeps,
        wall_time=wall,
        converged=converged,
        wall_ms=((stamps[: n_sweeps + 1] - t0) * 1e3).tolist(),
        update_objective=updates[: n_sweeps * n + 1].copy(),
        op_count=int(ops),
    )


def cd_ops_per_sweep(n_links: int, scalar_evals: int) -> int:
    """Interferer-term evaluations performed by one coordinate-descent sweep."""
    n = n_links
    return n * (2 * (n - 1) + (scalar_evals + 1) * n) + n * (n - 1)


@numba.njit(cache=True)
def _now():
    with numba.objmode(t="float64"):
        t = time.perf_counter()
    return t


@numba.njit(cache=True)
def _full_success(p, coupling, noise):
    n = p.shape[0]
    succ = np.empty(n)
    for i in range(n):
        s = noise[i] * p[i]
        for j in range(n):
            if j != i:
                s *= 1.0 - p[j] * coupling[j, i]
        succ[i] = s
    return succ


@numba.njit(cache=True)
def _mean_paoi(succ, K, mu):
    acc = 0.0
    for s in succ:
        acc += K / s if s > 0 else np.inf
    return acc / succ.shape[0] + mu


@numba.njit(cache=True)
def _line_value(x, i, base_i, loo, coupling, K, mu):
    n = loo.shape[0]
    acc = K / (x * base_i)
    for k in range(n):
        if k != i:
            acc += K / (loo[k] * (1.0 - x * coupling[i, k]))
    return acc / n + mu


@numba.njit(cache=True, nogil=True)
def _cd_kernel(coupling, noise, K, mu, p, p_floor, tol, max_iters, evals, t0):
    n = p.shape[0]
    p = p.copy()
    obj = np.empty(max_iters + 1)
    stamps = np.empty(max_iters + 1)
    updates = np.empty(max_iters * n + 1)
    loo = np.empty(n)
    ops = 0
    succ = _full_success(p, coupling, noise)
    obj[0] = _mean_paoi(succ, K, mu)
    stamps[0] = _now()
    updates[0] = obj[0]
    f_run = obj[0]
    n_up = 1
    converged = False
    sweeps = 0
    for it in range(max_iters):
        for i in range(n):
            base_i = noise[i]
            for j in range(n):
                if j != i:
                    base_i *= 1.0 - p[j] * coupling[j, i]
            for k in range(n):
                if k != i:
                    loo[k] = succ[k] / (1.0 - p[i] * coupling[i, k])
            ops += 2 * (n - 1)
            f_cur = _line_value(p[i], i, base_i, loo, coupling, K, mu)
            # golden section on [p_floor, 1]; the endpoints count toward the budget
            a, b = p_floor, 1.0
            fa = _line_value(a, i, base_i, loo, coupling, K, mu)
            fb = _line_value(b, i, base_i, loo, coupling, K, mu)
            best_x, best_f = a, fa
            if fb < best_f:
                best_x, best_f = b, fb
            x1 = b - GOLDEN * (b - a)
            x2 = a + GOLDEN * (b - a)
            f1 = _line_value(x1, i, base_i, loo, coupling, K, mu)
            f2 = _line_value(x2, i, base_i, loo, coupling, K, mu)
            used = 4
            while True:
                if f1 < best_f or (f1 == best_f and x1 < best_x):
                    best_x, best_f = x1, f1
                if f2 < best_f or (f2 == best_f and x2 < best_x):
                    best_x, best_f = x2, f2
                if used >= evals:
                    break
                if f1 <= f2:
                    b, x2, f2 = x2, x1, f1
                    x1 = b - GOLDEN * (b - a)
                    f1 = _line_value(x1, i, base_i, loo, coupling, K, mu)
                else:
                    a, x1, f1 = x1, x2, f2
                    x2 = a + GOLDEN * (b - a)
                    f2 = _line_value(x2, i, base_i, loo, coupling, K, mu)
                used += 1
            ops += (evals + 1) * n
            # accept only a clear improvement so rounding cannot reverse monotonicity
            if best_f < f_cur - 1e-12 * abs(f_cur):
                p[i] = best_x
                for k in range(n):
                    if k != i:
                        succ[k] = loo[k] * (1.0 - best_x * coupling[i, k])
                succ[i] = best_x * base_i
                # running objective: add the decrease measured on a single evaluation path
                f_run += best_f - f_cur
            updates[n_up] = f_run
            n_up += 1
        succ = _full_success(p, coupling, noise)
        ops += n * (n - 1)
        sweeps += 1
        obj[sweeps] = _mean_paoi(succ, K, mu)
        stamps[sweeps] = _now()
        if obj[sweeps - 1] - obj[sweeps] < tol:
            converged = True
            break
    return p, obj, stamps, sweeps, converged, updates, ops


def projected_gradient(layout: Layout, ch: ChannelParams, tr: TrafficParams,
                       cfg: OptimizerConfig = OptimizerConfig(), init=None,
                       geo: LinkGeometry | None = None) -> OptimizerTrace:
    """Heavy-ball gradient descent projected onto [p_floor, 1]^N; keeps the best iterate."""
    t0 = time.perf_counter()
    if geo is None:
        geo = _geometry(layout, ch)
    n = geo.n_links
    p = uniform_policy(n, 0.5) if init is None else np.clip(np.asarray(init, dtype=np.float64), cfg.p_floor, 1.0)
    eta = cfg.learning_rate
    vel = np.zeros(n)
    rep = network_objective(p, tr=tr, geo=geo, want_grad=True)
    best_p, best_f = p.copy(), rep.mean_paoi
    trace, stamps = [rep.mean_paoi], [0.0]
    halvings = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        vel = cfg.momentum * vel - eta * rep.grad
        cand = np.clip(p + vel, cfg.p_floor, 1.0)
        new = network_objective(cand, tr=tr, geo=geo, want_grad=True)
        if not np.isfinite(new.mean_paoi) or new.mean_paoi > rep.mean_paoi:
            # overshoot: shrink the step and drop the accumulated velocity
            if halvings >= cfg.max_step_halvings:
                break
            eta *= 0.5
            halvings += 1
            vel[:] = 0.0
            trace.append(rep.mean_paoi)
            stamps.append((time.perf_counter() - t0) * 1e3)
            continue
        step = rep.mean_paoi - new.mean_paoi
        p, rep = cand, new
        trace.append(rep.mean_paoi)
        stamps.append((time.perf_counter() - t0) * 1e3)
        if rep.mean_paoi < best_f:
            best_p, best_f = p.copy(), rep.mean_paoi
        if step < cfg.tol and np.max(np.abs(vel)) < 1e-6:
            converged = True
            break
    return OptimizerTrace(
        objective=trace, policy=best_p, iterations=it, wall_time=time.perf_counter() - t0,
        converged=converged, wall_ms=stamps,
    )


# -- CSV outputs ---------------------------------------------------------------

def write_trace_csv(trace: OptimizerTrace, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter", "objective", "wall_ms"])
        for k, (obj, ms) in enumerate(zip(trace.objective, trace.wall_ms)):
            w.writerow([k, repr(float(obj)), f"{ms:.3f}"])


def write_policy_csv(p, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["link", "p"])
        for k, v in enumerate(p):
            w.writerow([k, repr(float(v))])


def load_policy_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows or set(rows[0]) != {"link", "p"}:
        raise ValueError(f"{path}: expected columns link,p")
    rows.sort(key=lambda r: int(r["link"]))
    return np.array([float(r["p"]) for r in rows])
