"""Slot-level Monte Carlo of the D2D network.

Time is continuous and measured in the arrival-rate unit; slot k covers
((k-1) mu, k mu]. Each link has a one-packet buffer fed by a Poisson
stream. A packet is served for one slot length mu starting at its
generation instant. An arrival inside that window replaces it (preemption).
A window that survives ends inside exactly one slot. The link's transmission
outcome is decided by that slot's activation coin, fading draw and SINR
capture test. A packet that fails, or whose link is not activated, is
discarded: it never waits for a later slot.

Interference: by default every link activates with probability p_j in every
slot whether or not it holds a packet, which is the stationary randomized
policy behind the closed-form success probability. ``interference="backlogged"``
instead lets only links that are actually attempting a transmission interfere.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .model import ChannelParams, Layout, TrafficParams, check_policy, distance_matrix


@dataclass
class SimConfig:
    layout: Layout
    policy: np.ndarray
    channel: ChannelParams = field(default_factory=ChannelParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    n_slots: int = 100_000
    seed: int = 0
    forced_success_prob: float | None = None
    saturated: bool = False
    interference: str = "policy"
    record_samples: bool = False

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        if self.interference not in ("policy", "backlogged"):
            raise ValueError(f"unknown interference mode {self.interference!r}")
        if self.forced_success_prob is not None and not 0 <= self.forced_success_prob <= 1:
            raise ValueError("forced_success_prob must lie in [0, 1]")
        p = np.asarray(self.policy, dtype=np.float64)
        if p.shape != (self.layout.n_links,) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("policy must hold one probability in [0, 1] per link")
        self.policy = p


@dataclass
class SimStats:
    slot_duration: float
    n_slots: int
    wall_time: float
    generated: np.ndarray
    preempted: np.ndarray
    eligible: np.ndarray  # slots in which an un-preempted service window ended
    attempted: np.ndarray  # ... and the link was activated
    delivered: np.ndarray
    paoi_count: np.ndarray
    paoi_sum: np.ndarray
    paoi_sumsq: np.ndarray
    y_sum: np.ndarray
    y_sumsq: np.ndarray
    samples: np.ndarray | None = None  # rows (link, delivery_slot, paoi)

    @property
    def n_links(self) -> int:
        return len(self.delivered)

    @property
    def mean_paoi(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.paoi_sum / self.paoi_count

    @property
    def mean_interdeparture(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.y_sum / self.paoi_count

    def paoi_stderr(self) -> np.ndarray:
        n = self.paoi_count
        with np.errstate(invalid="ignore", divide="ignore"):
            var = (self.paoi_sumsq - self.paoi_sum**2 / n) / (n - 1)
            return np.sqrt(var / n)

    def network_mean_paoi(self) -> float:
        return float(np.mean(self.mean_paoi))

    def preemption_frequency(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.preempted / (self.preempted + self.eligible)


def empirical_success_probability(stats: SimStats, i: int) -> float:
    """Deliveries per eligible slot for link i (NaN if the link never had one)."""
    if stats.eligible[i] == 0:
        return float("nan")
    return stats.delivered[i] / stats.eligible[i]


def run(cfg: SimConfig) -> SimStats:
    ch, tr = cfg.channel, cfg.traffic
    dm = distance_matrix(cfg.layout)
    gain = ch.tx_power * dm ** (-ch.pathloss_exp)
    seed32 = int(np.random.SeedSequence(cfg.seed).generate_state(1)[0])
    forced = -1.0 if cfg.forced_success_prob is None else float(cfg.forced_success_prob)
    t0 = time.perf_counter()
    out = _simulate(
        int(cfg.n_slots), float(tr.slot_duration), float(tr.arrival_rate), cfg.policy, gain,
        float(ch.noise_power), float(ch.capture_ratio), forced, bool(cfg.saturated),
        cfg.interference == "backlogged", seed32, bool(cfg.record_samples),
    )
    wall = time.perf_counter() - t0
    counts, sums, s_link, s_slot, s_paoi, n_samples = out
    samples = None
    if cfg.record_samples:
        samples = np.column_stack([s_link[:n_samples], s_slot[:n_samples], s_paoi[:n_samples]])
    return SimStats(
        slot_duration=tr.slot_duration, n_slots=cfg.n_slots, wall_time=wall,
        generated=counts[0], preempted=counts[1], eligible=counts[2], attempted=counts[3],
        delivered=counts[4], paoi_count=counts[5], paoi_sum=sums[0], paoi_sumsq=sums[1],
        y_sum=sums[2], y_sumsq=sums[3], samples=samples,
    )


@numba.njit(cache=True)
def _advance(i, t_end, mu, scale, next_arr, has_pkt, gen, counts):
    """Process link i's arrivals up to t_end; True if a window resolves by t_end."""
    while True:
        if has_pkt[i]:
            end = gen[i] + mu
            if next_arr[i] < end:
                if next_arr[i] > t_end:
                    return False
                counts[1, i] += 1  # preempted
                counts[0, i] += 1
                gen[i] = next_arr[i]
                next_arr[i] += np.random.exponential(scale)
            else:
                return end <= t_end
        else:
            if next_arr[i] > t_end:
                return False
            has_pkt[i] = True
            counts[0, i] += 1
            gen[i] = next_arr[i]
            next_arr[i] += np.random.exponential(scale)


@numba.njit(cache=True, nogil=True)
def _simulate(n_slots, mu, lam, p, gain, noise, beta, forced, saturated, backlogged, seed, record):
    np.random.seed(seed)
    N = p.shape[0]
    scale = 1.0 / lam
    counts = np.zeros((6, N), dtype=np.int64)
    sums = np.zeros((4, N))
    next_arr = np.empty(N)
    for i in range(N):
        next_arr[i] = np.random.exponential(scale)
    has_pkt = np.zeros(N, dtype=np.bool_)
    gen = np.zeros(N)
    last_del_time = np.full(N, np.nan)
    last_del_gen = np.full(N, np.nan)
    resolving = np.zeros(N, dtype=np.bool_)
    activated = np.zeros(N, dtype=np.bool_)
    interferer = np.zeros(N, dtype=np.bool_)
    success = np.zeros(N, dtype=np.bool_)
    cap = N * n_slots if record else 1
    s_link = np.empty(cap, dtype=np.int64)
    s_slot = np.empty(cap, dtype=np.int64)
    s_paoi = np.empty(cap)
    n_samples = 0

    for k in range(1, n_slots + 1):
        t_end = k * mu
        for i in range(N):
            if saturated:
                has_pkt[i] = True
                gen[i] = t_end - mu
                counts[0, i] += 1
                resolving[i] = True
            else:
                resolving[i] = _advance(i, t_end, mu, scale, next_arr, has_pkt, gen, counts)
        for j in range(N):
            activated[j] = np.random.random() < p[j]
            interferer[j] = activated[j] and (resolving[j] or not backlogged)
        for i in range(N):
            success[i] = False
            if not (resolving[i] and activated[i]):
                continue
            counts[3, i] += 1
            if forced >= 0.0:
                success[i] = np.random.random() < forced
            else:
                sig = np.random.exponential(1.0) * gain[i, i]
                interf = 0.0
                for j in range(N):
                    if j != i and interferer[j]:
                        interf += np.random.exponential(1.0) * gain[j, i]
                success[i] = sig > beta * (noise + interf)
        for i in range(N):
            if not resolving[i]:
                continue
            counts[2, i] += 1
            done = gen[i] + mu
            if success[i]:
                counts[4, i] += 1
                if not np.isnan(last_del_gen[i]):
                    a_peak = done - last_del_gen[i]
                    y = done - last_del_time[i]
                    counts[5, i] += 1
                    sums[0, i] += a_peak
                    sums[1, i] += a_peak * a_peak
                    sums[2, i] += y
                    sums[3, i] += y * y
                    if record:
                        s_link[n_samples] = i
                        s_slot[n_samples] = k
                        s_paoi[n_samples] = a_peak
                        n_samples += 1
                last_del_time[i] = done
                last_del_gen[i] = gen[i]
            has_pkt[i] = False
            if not saturated:
                _advance(i, t_end, mu, scale, next_arr, has_pkt, gen, counts)
    return counts, sums, s_link, s_slot, s_paoi, n_samples


# -- CSV outputs ---------------------------------------------------------------

def write_samples_csv(stats: SimStats, path) -> None:
    if stats.samples is None:
        raise ValueError("run the simulation with record_samples=True")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["link", "delivery_slot", "paoi"])
        for link, slot, a in stats.samples:
            w.writerow([int(link), int(slot), repr(float(a))])


SUMMARY_HEADER = [
    "link", "generated", "preempted", "eligible", "attempted", "delivered",
    "success_prob", "preempt_freq", "mean_paoi", "paoi_stderr", "mean_y", "n_paoi",
]


def summary_rows(stats: SimStats) -> list[dict]:
    rows = []
    mp, se, my, pf = stats.mean_paoi, stats.paoi_stderr(), stats.mean_interdeparture, stats.preemption_frequency()
    for i in range(stats.n_links):
        rows.append({
            "link": i,
            "generated": int(stats.generated[i]),
            "preempted": int(stats.preempted[i]),
            "eligible": int(stats.eligible[i]),
            "attempted": int(stats.attempted[i]),
            "delivered": int(stats.delivered[i]),
            "success_prob": empirical_success_probability(stats, i),
            "preempt_freq": float(pf[i]),
            "mean_paoi": float(mp[i]),
            "paoi_stderr": float(se[i]),
            "mean_y": float(my[i]),
            "n_paoi": int(stats.paoi_count[i]),
        })
    return rows


def write_summary_csv(stats: SimStats, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(summary_rows(stats))
