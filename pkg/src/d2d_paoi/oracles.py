"""Independent reference computations used by the test suite and `validate`.

These deliberately avoid the vectorized paths they are meant to check.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import integrate

from .analytics import cond_success_given_active_set
from .model import ChannelParams


def success_by_enumeration(i: int, p, dm, ch: ChannelParams) -> float:
    """Average success of link i summed over every interferer activation subset."""
    p = np.asarray(p, dtype=np.float64)
    others = [j for j in range(len(p)) if j != i]
    total = 0.0
    for mask in itertools.product((0, 1), repeat=len(others)):
        weight = 1.0
        active = []
        for j, on in zip(others, mask):
            if on:
                weight *= p[j]
                active.append(j)
            else:
                weight *= 1.0 - p[j]
        total += weight * cond_success_given_active_set(i, active, dm, ch)
    return p[i] * total


def success_by_fading_mc(i: int, active, dm, ch: ChannelParams, n_draws: int, seed: int = 0):
    """Monte Carlo of SINR_i > beta over exponential fades; returns (estimate, std err)."""
    rng = np.random.default_rng(seed)
    dm = np.asarray(dm, dtype=np.float64)
    a = ch.pathloss_exp
    hits = 0
    chunk = 1_000_000
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        sig = ch.tx_power * rng.exponential(size=m) * dm[i, i] ** -a
        interf = np.zeros(m)
        for j in active:
            interf += ch.tx_power * rng.exponential(size=m) * dm[j, i] ** -a
        hits += int(np.count_nonzero(sig > ch.capture_ratio * (ch.noise_power + interf)))
        done += m
    est = hits / n_draws
    return est, np.sqrt(max(est * (1 - est), 1e-300) / n_draws)


def generation_interval_by_quadrature(arrival_rate: float, slot_duration: float) -> float:
    lam, mu = arrival_rate, slot_duration
    num, _ = integrate.quad(lambda s: s * lam * np.exp(-s * lam), 0.0, mu, epsabs=0, epsrel=1e-13)
    den, _ = integrate.quad(lambda s: lam * np.exp(-s * lam), 0.0, mu, epsabs=0, epsrel=1e-13)
    return num / den


def central_difference(f, x: np.ndarray, step: float) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x (x is not modified)."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = f(x)
        flat[k] = orig - step
        down = f(x)
        flat[k] = orig
        gflat[k] = (up - down) / (2 * step)
    return g


def naive_correlate_same(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded, centered 2-D cross-correlation by explicit loops."""
    R0, R1 = x.shape
    c = kernel.shape[0]
    r = c // 2
    out = np.zeros_like(x, dtype=np.float64)
    for u in range(R0):
        for v in range(R1):
            acc = 0.0
            for a in range(c):
                for b in range(c):
                    uu, vv = u + a - r, v + b - r
                    if 0 <= uu < R0 and 0 <= vv < R1:
                        acc += kernel[a, b] * x[uu, vv]
            out[u, v] = acc
    return out


def grid_search_2d(objective, p_floor: float, step: float = 1e-3):
    """Exhaustive search of a two-link objective(p1_array, p2_array) on a square grid."""
    axis = np.arange(p_floor, 1.0 + step / 2, step)
    axis = np.unique(np.append(np.minimum(axis, 1.0), 1.0))
    P1, P2 = np.meshgrid(axis, axis, indexing="ij")
    vals = objective(P1, P2)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    return float(vals[k]), (float(P1[k]), float(P2[k]))
