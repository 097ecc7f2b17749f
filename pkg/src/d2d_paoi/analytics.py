"""Closed-form success probability and peak-AoI analysis.

Notation used throughout: ``succ`` is the per-slot success probability of a
link under the randomized policy, ``q = 1 - succ`` its failure probability,
``gamma`` the probability an update is preempted during its service slot.
The average peak age of link i is

    E[A_P] = 1 / (lam * (1 - gamma) * (1 - q)) + mu

so with ``K = 1 / (lam * (1 - gamma))`` the network mean is
``mean_i(K / succ_i) + mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ChannelParams, TrafficParams

SUCC_FLOOR = 1e-9  # q is clamped to <= 1 - SUCC_FLOOR wherever a finite value is needed


@dataclass(frozen=True)
class LinkGeometry:
    """Per-layout constants of the success-probability product.

    ``coupling[j, i]`` is the probability that an active transmitter j
    knocks out link i (zero on the diagonal); ``noise_factor[i]`` the
    noise-only success probability of link i.
    """

    coupling: np.ndarray
    noise_factor: np.ndarray

    @property
    def n_links(self) -> int:
        return len(self.noise_factor)


def link_geometry(dm: np.ndarray, ch: ChannelParams) -> LinkGeometry:
    dm = np.asarray(dm, dtype=np.float64)
    direct = np.diag(dm)
    # 1 / (1 + d_ii^-a / (beta d_ji^-a)) written with ratios to avoid under/overflow
    ratio = (dm / direct[None, :]) ** ch.pathloss_exp
    coupling = 1.0 / (1.0 + ratio / ch.capture_ratio)
    np.fill_diagonal(coupling, 0.0)
    noise_factor = np.exp(-ch.capture_ratio * ch.noise_power * direct**ch.pathloss_exp / ch.tx_power)
    return LinkGeometry(coupling, noise_factor)


def cond_success_given_active_set(i, active, dm, ch: ChannelParams) -> float:
    """Success probability of link i over Rayleigh fades when exactly the
    transmitters in ``active`` interfere."""
    active = list(active)
    if i in active:
        raise ValueError("link i cannot interfere with itself")
    dm = np.asarray(dm, dtype=np.float64)
    a, beta = ch.pathloss_exp, ch.capture_ratio
    d_ii = dm[i, i]
    out = math.exp(-beta * ch.noise_power / (ch.tx_power * d_ii**-a))
    for j in active:
        out *= 1.0 / (1.0 + beta * dm[j, i] ** -a / d_ii**-a)
    return out


def interference_survival(p: np.ndarray, geo: LinkGeometry) -> np.ndarray:
    """base[i] = noise_i * prod_{j != i} (1 - p_j c_ji), so that succ = p * base."""
    return geo.noise_factor * np.prod(1.0 - p[:, None] * geo.coupling, axis=0)


def success_probabilities(p, dm=None, ch: ChannelParams | None = None, geo: LinkGeometry | None = None):
    """Per-slot success probability of every link under policy ``p``."""
    p = np.asarray(p, dtype=np.float64)
    if geo is None:
        geo = link_geometry(dm, ch)
    return p * interference_survival(p, geo)


def success_probability(i: int, p, dm, ch: ChannelParams) -> float:
    return float(success_probabilities(p, dm, ch)[i])


def preemption_prob(arrival_rate: float, slot_duration: float = 1.0) -> float:
    """Probability that another update arrives during a service slot."""
    return -math.expm1(-slot_duration * arrival_rate)


def effective_generation_interval(arrival_rate: float, slot_duration: float = 1.0) -> float:
    """Mean interarrival time given that it is shorter than one service slot."""
    lam, mu = arrival_rate, slot_duration
    if preemption_prob(lam, mu) == 0.0:
        raise ValueError("preemption is impossible; the conditional mean is undefined")
    x = lam * mu
    if x < 1e-3:
        # 1/x - 1/(e^x - 1) cancels badly near 0; use its Taylor series
        return mu * (0.5 - x / 12.0 + x**3 / 720.0)
    # 1/lam + mu (1 - 1/gamma) == mu * (1/x - 1/expm1(x))
    return mu * (1.0 / x - 1.0 / math.expm1(x))


def paoi_constant(tr: TrafficParams) -> float:
    """K = 1 / (lam (1 - gamma)); E[A_P] = K / succ + mu."""
    return math.exp(tr.slot_duration * tr.arrival_rate) / tr.arrival_rate


@dataclass(frozen=True)
class PaoiBreakdown:
    succ_prob: float
    fail_prob: float
    preempt_prob: float
    e_T: float
    e_W: float
    e_S: float
    e_Y: float
    e_paoi: float


def paoi_from_fail_prob(q: float, tr: TrafficParams) -> PaoiBreakdown:
    lam, mu = tr.arrival_rate, tr.slot_duration
    g = preemption_prob(lam, mu)
    e_W = 1.0 / lam
    if q >= 1.0:
        inf = math.inf
        return PaoiBreakdown(1.0 - q, q, g, inf, e_W, mu, inf, inf)
    # The recursion's printed closed form has (1 - beta) in the denominator;
    # the E[Y] expression derived from it uses (1 - gamma), which is what we use.
    denom = lam * (1.0 - g) * (1.0 - q)
    e_T = (g + q - g * q) / denom
    e_Y = 1.0 / denom
    return PaoiBreakdown(1.0 - q, q, g, e_T, e_W, mu, e_Y, e_Y + mu)


def paoi_breakdown(i: int, p, dm, ch: ChannelParams, tr: TrafficParams) -> PaoiBreakdown:
    succ = success_probability(i, p, dm, ch)
    return paoi_from_fail_prob(1.0 - succ, tr)


@dataclass
class ObjectiveReport:
    per_link_paoi: np.ndarray
    mean_paoi: float
    grad: np.ndarray | None = None
    clamped: bool = False


def objective_grad(p: np.ndarray, geo: LinkGeometry, K: float, surrogate: bool = True):
    """Gradient of mean_i(K / max(succ_i, floor)) with respect to p.

    With ``surrogate=True`` clamped links contribute the derivative of
    K / succ evaluated at the floor (so descent can leave p ~ 0); with
    ``surrogate=False`` they contribute zero, the exact derivative of the
    clamped function.
    """
    base = interference_survival(p, geo)
    succ = p * base
    n = len(p)
    low = succ < SUCC_FLOOR
    s = np.where(low, SUCC_FLOOR, succ)
    w = K / (s * s)  # -d(K/s)/ds
    if not surrogate:
        w = np.where(low, 0.0, w)
    # d succ_i / d p_i = base_i ; d succ_i / d p_j = -c_ji succ_i / (1 - p_j c_ji)
    cross = geo.coupling / (1.0 - p[:, None] * geo.coupling)  # [j, i]
    return (-w * base + cross @ (w * succ)) / n


def network_objective(p, dm=None, ch: ChannelParams | None = None, tr: TrafficParams | None = None,
                      want_grad: bool = False, geo: LinkGeometry | None = None) -> ObjectiveReport:
    """Per-link and mean average peak AoI of policy ``p`` (optionally with gradient)."""
    p = np.asarray(p, dtype=np.float64)
    if geo is None:
        geo = link_geometry(dm, ch)
    K = paoi_constant(tr)
    succ = p * interference_survival(p, geo)
    with np.errstate(divide="ignore"):
        per_link = np.where(succ > 0, K / succ, np.inf) + tr.slot_duration
    report = ObjectiveReport(per_link, float(per_link.mean()))
    if want_grad:
        report.grad = objective_grad(p, geo, K)
        report.clamped = bool(np.any(succ < SUCC_FLOOR))
    return report


def mean_paoi(p, geo: LinkGeometry, tr: TrafficParams) -> float:
    return network_objective(p, tr=tr, geo=geo).mean_paoi
