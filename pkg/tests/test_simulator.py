import math

import numpy as np
import pytest

from d2d_paoi.analytics import network_objective, paoi_from_fail_prob, preemption_prob, success_probabilities
from d2d_paoi.model import ChannelParams, Layout, LayoutGenSpec, TrafficParams, distance_matrix, generate_layout
from d2d_paoi.simulator import SimConfig, empirical_success_probability, run, summary_rows, write_samples_csv, write_summary_csv

from conftest import dense_layout

NOISELESS = ChannelParams(noise_power=0.0)
ONE = Layout([(10.0, 10.0)], [(10.0, 20.0)], 100.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(ONE, [0.5], n_slots=0)
    with pytest.raises(ValueError):
        SimConfig(ONE, [1.5])
    with pytest.raises(ValueError):
        SimConfig(ONE, [0.5, 0.5])
    with pytest.raises(ValueError):
        SimConfig(ONE, [0.5], forced_success_prob=2.0)
    with pytest.raises(ValueError):
        SimConfig(ONE, [0.5], interference="other")


def test_single_link_full_access_paoi():
    st = run(SimConfig(ONE, [1.0], NOISELESS, TrafficParams(0.5, 1.0), n_slots=10**6, seed=1))
    assert st.network_mean_paoi() == pytest.approx(4.29744, rel=0.01)
    assert empirical_success_probability(st, 0) == 1.0


def test_forced_success_paoi():
    st = run(SimConfig(ONE, [1.0], NOISELESS, TrafficParams(0.5, 1.0), n_slots=10**6, seed=2,
                       forced_success_prob=0.8))
    assert st.network_mean_paoi() == pytest.approx(5.12180, rel=0.01)
    p_hat = empirical_success_probability(st, 0)
    assert abs(p_hat - 0.8) < 3 * math.sqrt(0.16 / st.eligible[0])


def test_zero_access_never_attempts():
    lay = dense_layout(4, 3)
    st = run(SimConfig(lay, np.zeros(4), n_slots=20_000, seed=0))
    assert st.delivered.sum() == 0 and st.attempted.sum() == 0
    assert np.all(np.isnan(st.mean_paoi))
    assert st.eligible.sum() > 0


def test_saturated_single_link_success():
    st = run(SimConfig(ONE, [0.7], NOISELESS, n_slots=200_000, seed=3, saturated=True))
    p_hat = empirical_success_probability(st, 0)
    assert st.eligible[0] == 200_000
    assert abs(p_hat - 0.7) < 3 * math.sqrt(0.21 / 200_000)


def test_saturated_two_link_geometry():
    lay = Layout([(50.0, 50.0), (50.0, 80.0)], [(50.0, 60.0), (50.0, 90.0)], 100.0)
    assert distance_matrix(lay)[1, 0] == pytest.approx(20.0)
    st = run(SimConfig(lay, [1.0, 1.0], NOISELESS, n_slots=300_000, seed=4, saturated=True))
    p_hat = empirical_success_probability(st, 0)
    assert abs(p_hat - 8 / 9) < 3 * math.sqrt((8 / 9) * (1 / 9) / 300_000)


def test_saturated_random_layout_matches_success_probability():
    lay = dense_layout(6, 5)
    p = np.random.default_rng(5).uniform(0.3, 1.0, 6)
    exact = success_probabilities(p, distance_matrix(lay), ChannelParams())
    st = run(SimConfig(lay, p, ChannelParams(), n_slots=300_000, seed=6, saturated=True))
    z = [abs(empirical_success_probability(st, i) - exact[i]) / math.sqrt(exact[i] * (1 - exact[i]) / st.eligible[i])
         for i in range(6)]
    assert sum(v < 3 for v in z) >= 5


def test_preemption_frequency():
    for lam in (0.2, 1.0):
        st = run(SimConfig(ONE, [1.0], NOISELESS, TrafficParams(lam, 1.0), n_slots=200_000, seed=7))
        g = preemption_prob(lam)
        n = st.preempted[0] + st.eligible[0]
        assert abs(st.preemption_frequency()[0] - g) < 3 * math.sqrt(g * (1 - g) / n)


def test_paoi_equals_interdeparture_plus_service():
    st = run(SimConfig(dense_layout(3, 1), [0.9, 0.8, 0.7], n_slots=50_000, seed=8, traffic=TrafficParams(0.4, 1.5)))
    np.testing.assert_allclose(st.paoi_sum - st.y_sum, 1.5 * st.paoi_count, rtol=1e-9)
    np.testing.assert_allclose(st.mean_paoi, st.mean_interdeparture + 1.5, rtol=1e-12)


def test_same_seed_identical_stats():
    cfg = SimConfig(dense_layout(5, 2), np.full(5, 0.6), n_slots=30_000, seed=9, record_samples=True)
    a, b = run(cfg), run(cfg)
    for name in ("generated", "preempted", "eligible", "attempted", "delivered", "paoi_sum", "y_sumsq"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.samples, b.samples)
    c = run(SimConfig(cfg.layout, cfg.policy, n_slots=30_000, seed=10))
    assert not np.array_equal(a.paoi_sum, c.paoi_sum)
    assert np.allclose(a.mean_paoi, c.mean_paoi, rtol=0.1)


def test_end_to_end_matches_closed_form():
    ch, tr = ChannelParams(), TrafficParams()
    lay = dense_layout(10, 12)
    p = np.random.default_rng(12).uniform(0.3, 1.0, 10)
    exact = network_objective(p, distance_matrix(lay), ch, tr).mean_paoi
    st = run(SimConfig(lay, p, ch, tr, n_slots=300_000, seed=12))
    assert st.network_mean_paoi() == pytest.approx(exact, rel=0.03)


def test_backlogged_interference_is_milder():
    ch, tr = ChannelParams(), TrafficParams(0.2, 1.0)
    lay = dense_layout(8, 13)
    p = np.full(8, 0.9)
    pol = run(SimConfig(lay, p, ch, tr, n_slots=100_000, seed=1))
    bkl = run(SimConfig(lay, p, ch, tr, n_slots=100_000, seed=1, interference="backlogged"))
    assert bkl.network_mean_paoi() < pol.network_mean_paoi()


def test_samples_and_summary_csv(tmp_path):
    cfg = SimConfig(ONE, [1.0], NOISELESS, n_slots=1000, seed=1, record_samples=True)
    st = run(cfg)
    write_samples_csv(st, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "link,delivery_slot,paoi"
    assert len(lines) - 1 == st.paoi_count[0]
    paoi = np.array([float(x.split(",")[2]) for x in lines[1:]])
    assert paoi.mean() == pytest.approx(st.mean_paoi[0], rel=1e-12)
    write_summary_csv(st, tmp_path / "sum.csv")
    assert (tmp_path / "sum.csv").read_text().startswith("link,generated,")
    assert summary_rows(st)[0]["delivered"] == st.delivered[0]
    with pytest.raises(ValueError):
        write_samples_csv(run(SimConfig(ONE, [1.0], n_slots=10)), tmp_path / "x.csv")


def test_queueing_grid_forced_success():
    # every (q, lambda) pair at 2e5 slots; the million-slot version lives in the acceptance suite
    for q in (0.0, 0.5):
        for lam in (0.2, 1.0):
            tr = TrafficParams(lam, 1.0)
            st = run(SimConfig(ONE, [1.0], NOISELESS, tr, n_slots=200_000, seed=11, forced_success_prob=1 - q))
            assert st.network_mean_paoi() == pytest.approx(paoi_from_fail_prob(q, tr).e_paoi, rel=0.02)


def test_default_area_layout_runs():
    lay = generate_layout(LayoutGenSpec(20, seed=1))
    st = run(SimConfig(lay, np.full(20, 0.5), n_slots=5000, seed=0))
    assert st.n_slots == 5000 and st.wall_time >= 0
