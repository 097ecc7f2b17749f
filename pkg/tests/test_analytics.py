import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from d2d_paoi import oracles
from d2d_paoi.analytics import (
    SUCC_FLOOR, cond_success_given_active_set, effective_generation_interval, link_geometry,
    network_objective, paoi_breakdown, paoi_from_fail_prob, preemption_prob, success_probabilities,
    success_probability,
)
from d2d_paoi.model import ChannelParams, Layout, TrafficParams, distance_matrix

from conftest import dense_layout, mirror_pair

NOISELESS = ChannelParams(noise_power=0.0)

# Reference values computed once from independent oracles and frozen here.
EIGHT_NINTHS = 0.888888888888889  # two-link conditional success, fade Monte Carlo agreed at 3 sigma
NOISE_ONLY_50M = 0.9999987500007812  # exp(-1.25e-6)
GAMMA_HALF = 0.3934693402873666  # 1 - exp(-0.5)
GEN_INTERVAL_HALF = 0.4585059174632018  # quadrature of the truncated exponential mean
PAOI_Q0_LAM1 = 3.718281828459045  # e + 1
PAOI_Q02_LAM05 = 5.121803176750321
PAOI_Q0_LAM05 = 4.297442541400256


def two_link_dm():
    # d11 = 10, d21 = 20
    return np.array([[10.0, 30.0], [20.0, 10.0]])


def test_cond_success_no_noise_no_interference():
    assert cond_success_given_active_set(0, [], two_link_dm(), NOISELESS) == 1.0


def test_cond_success_one_interferer():
    assert cond_success_given_active_set(0, [1], two_link_dm(), NOISELESS) == pytest.approx(EIGHT_NINTHS, rel=1e-14)


def test_cond_success_one_interferer_vs_fade_mc():
    est, se = oracles.success_by_fading_mc(0, [1], two_link_dm(), NOISELESS, 10**7, seed=1)
    assert abs(est - 8 / 9) < 3 * se


def test_cond_success_noise_only():
    dm = np.array([[50.0]])
    assert cond_success_given_active_set(0, [], dm, ChannelParams()) == pytest.approx(NOISE_ONLY_50M, rel=1e-15)
    assert NOISE_ONLY_50M == pytest.approx(math.exp(-1.25e-6), rel=1e-15)


def test_cond_success_noise_only_vs_fade_mc():
    # make the noise term large enough for a Monte Carlo estimate to resolve it
    ch = ChannelParams(noise_power=1e-7)
    dm = np.array([[50.0]])
    est, se = oracles.success_by_fading_mc(0, [], dm, ch, 10**6, seed=2)
    assert abs(est - cond_success_given_active_set(0, [], dm, ch)) < 3 * se


def test_cond_success_rejects_self_interference():
    with pytest.raises(ValueError):
        cond_success_given_active_set(0, [0], two_link_dm(), NOISELESS)


def test_success_single_link_equals_p():
    dm = np.array([[10.0]])
    assert success_probability(0, [0.7], dm, NOISELESS) == pytest.approx(0.7, rel=1e-15)


def test_success_zero_access():
    dm = distance_matrix(dense_layout(3, 0))
    assert success_probability(1, [0.5, 0.0, 0.5], dm, ChannelParams()) == 0.0


def test_success_vs_subset_enumeration_n6():
    lay = dense_layout(6, 21)
    dm = distance_matrix(lay)
    p = np.random.default_rng(0).uniform(0.05, 1, 6)
    fast = success_probabilities(p, dm, ChannelParams())
    for i in range(6):
        assert fast[i] == pytest.approx(oracles.success_by_enumeration(i, p, dm, ChannelParams()), rel=1e-12)


@given(st.integers(0, 2**32), st.integers(1, 9))
def test_success_vs_subset_enumeration_property(seed, n):
    dm = distance_matrix(dense_layout(n, seed))
    p = np.random.default_rng(seed).uniform(0.01, 1, n)
    fast = success_probabilities(p, dm, ChannelParams())
    ref = [oracles.success_by_enumeration(i, p, dm, ChannelParams()) for i in range(n)]
    np.testing.assert_allclose(fast, ref, rtol=1e-12)


@given(st.integers(0, 2**32))
def test_success_monotone_in_policy(seed):
    rng = np.random.default_rng(seed)
    dm = distance_matrix(dense_layout(5, seed))
    p = rng.uniform(0.05, 0.9, 5)
    base = success_probabilities(p, dm, ChannelParams())
    j = int(rng.integers(5))
    q = p.copy()
    q[j] += 0.05
    after = success_probabilities(q, dm, ChannelParams())
    others = np.arange(5) != j
    assert np.all(after[others] <= base[others])
    assert after[j] >= base[j]


def test_preemption_prob():
    assert preemption_prob(0.5, 1.0) == pytest.approx(GAMMA_HALF, rel=1e-15)
    assert preemption_prob(1e-300, 1.0) == pytest.approx(0.0, abs=1e-299)
    assert preemption_prob(0.5, 0.0) == 0.0


def test_generation_interval_value_and_quadrature():
    assert effective_generation_interval(0.5, 1.0) == pytest.approx(GEN_INTERVAL_HALF, rel=1e-13)
    assert oracles.generation_interval_by_quadrature(0.5, 1.0) == pytest.approx(GEN_INTERVAL_HALF, rel=1e-12)


def test_generation_interval_closed_form_matches_definition():
    lam, mu = 0.7, 1.3
    g = preemption_prob(lam, mu)
    assert effective_generation_interval(lam, mu) == pytest.approx(1 / lam + mu * (1 - 1 / g), rel=1e-12)


def test_generation_interval_limits():
    assert effective_generation_interval(0.5, 1e3) == pytest.approx(2.0, rel=1e-12)
    small = effective_generation_interval(1e-6, 1.0)
    assert small == pytest.approx(0.5, rel=1e-5)
    assert small == pytest.approx(oracles.generation_interval_by_quadrature(1e-6, 1.0), rel=1e-10)
    with pytest.raises(ValueError):
        effective_generation_interval(0.5, 0.0)


@given(st.floats(1e-5, 5.0), st.floats(0.1, 3.0))
def test_generation_interval_series_branch_continuous(lam, mu):
    ref = oracles.generation_interval_by_quadrature(lam, mu)
    assert effective_generation_interval(lam, mu) == pytest.approx(ref, rel=1e-9)


def test_paoi_closed_form_values():
    assert paoi_from_fail_prob(0.0, TrafficParams(1.0, 1.0)).e_paoi == pytest.approx(PAOI_Q0_LAM1, rel=1e-14)
    assert paoi_from_fail_prob(0.2, TrafficParams(0.5, 1.0)).e_paoi == pytest.approx(PAOI_Q02_LAM05, rel=1e-14)
    assert paoi_from_fail_prob(0.0, TrafficParams(0.5, 1.0)).e_paoi == pytest.approx(PAOI_Q0_LAM05, rel=1e-14)


def test_paoi_q0_waiting_term():
    tr = TrafficParams(0.8, 1.0)
    b = paoi_from_fail_prob(0.0, tr)
    assert b.e_T == pytest.approx(b.preempt_prob / (0.8 * (1 - b.preempt_prob)), rel=1e-14)


@given(st.floats(0.0, 0.999), st.floats(0.01, 5.0), st.floats(0.1, 3.0))
def test_paoi_breakdown_identities(q, lam, mu):
    b = paoi_from_fail_prob(q, TrafficParams(lam, mu))
    assert b.e_Y == pytest.approx(b.e_T + b.e_W, rel=1e-12)
    assert b.e_paoi == pytest.approx(b.e_Y + b.e_S, rel=1e-12)
    assert b.e_Y * lam * (1 - b.preempt_prob) * (1 - q) == pytest.approx(1.0, rel=1e-12)
    assert 0 <= b.preempt_prob <= 1 and 0 <= b.fail_prob <= 1


def test_paoi_infinite_sentinel():
    b = paoi_from_fail_prob(1.0, TrafficParams())
    assert math.isinf(b.e_paoi)
    dm = np.array([[10.0]])
    assert math.isinf(paoi_breakdown(0, [0.0], dm, NOISELESS, TrafficParams()).e_paoi)


def test_single_link_full_access_exact():
    tr = TrafficParams(0.6, 1.0)
    b = paoi_breakdown(0, [1.0], np.array([[10.0]]), NOISELESS, tr)
    assert b.e_paoi == pytest.approx(1 / (0.6 * math.exp(-0.6)) + 1, rel=1e-14)


def test_objective_mean_of_links(ch, tr):
    dm = distance_matrix(dense_layout(7, 3))
    p = np.linspace(0.2, 0.8, 7)
    rep = network_objective(p, dm, ch, tr)
    per = [paoi_breakdown(i, p, dm, ch, tr).e_paoi for i in range(7)]
    np.testing.assert_allclose(rep.per_link_paoi, per, rtol=1e-13)
    assert rep.mean_paoi == pytest.approx(np.mean(per), rel=1e-14)


def test_objective_single_link_decreasing(tr):
    dm = np.array([[10.0]])
    ps = np.linspace(0.05, 1.0, 40)
    vals = [network_objective([x], dm, NOISELESS, tr, want_grad=True) for x in ps]
    assert all(a.mean_paoi > b.mean_paoi for a, b in zip(vals, vals[1:]))
    assert all(v.grad[0] < 0 for v in vals)


@given(st.integers(0, 2**32))
def test_objective_gradient_vs_finite_differences(seed):
    ch, tr = ChannelParams(), TrafficParams()
    geo = link_geometry(distance_matrix(dense_layout(5, seed)), ch)
    p = np.random.default_rng(seed).uniform(0.1, 0.9, 5)
    g = network_objective(p, tr=tr, geo=geo, want_grad=True).grad
    fd = oracles.central_difference(lambda x: network_objective(x, tr=tr, geo=geo).mean_paoi, p, 1e-6)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6


def test_objective_gradient_symmetric_pair(tr):
    rep = network_objective([0.6, 0.6], distance_matrix(mirror_pair()), ChannelParams(), tr, want_grad=True)
    assert rep.grad[0] == pytest.approx(rep.grad[1], rel=1e-13)


def test_objective_gradient_clamped_flag(tr):
    dm = distance_matrix(dense_layout(3, 1))
    rep = network_objective([0.0, 0.5, 0.5], dm, ChannelParams(), tr, want_grad=True)
    assert math.isinf(rep.mean_paoi)
    assert rep.clamped
    assert np.all(np.isfinite(rep.grad))
    assert rep.grad[0] < 0  # pushes the silent link back on
    assert SUCC_FLOOR == 1e-9


def test_pathloss_geometry_reads_cross_distances():
    # swapping which transmitter is near receiver 0 changes only link 0's success
    lay_a = Layout([(0, 0), (0, 20)], [(0, 10), (0, 30)], 100)
    dm = distance_matrix(lay_a)
    s = success_probabilities([1.0, 1.0], dm, NOISELESS)
    assert s[0] == pytest.approx(1 / (1 + (10 / 10) ** 3), rel=1e-14)
    assert s[1] == pytest.approx(1 / (1 + (10 / 30) ** 3), rel=1e-14)
