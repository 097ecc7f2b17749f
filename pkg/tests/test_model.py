import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from d2d_paoi.model import (
    ChannelParams, Layout, LayoutGenerationError, LayoutGenSpec, TrafficParams, check_policy,
    distance_matrix, generate_layout, load_layout, save_layout, seeds_from,
)


def test_param_invariants():
    with pytest.raises(ValueError):
        ChannelParams(pathloss_exp=2.0)
    with pytest.raises(ValueError):
        ChannelParams(tx_power=0)
    with pytest.raises(ValueError):
        ChannelParams(noise_power=-1)
    with pytest.raises(ValueError):
        TrafficParams(arrival_rate=0)
    with pytest.raises(ValueError):
        LayoutGenSpec(d_min=0)
    with pytest.raises(ValueError):
        LayoutGenSpec(d_max=700)


def test_default_layout_distances_in_annulus():
    lay = generate_layout(LayoutGenSpec(100, 600, 2, 80, seed=11))
    d = lay.direct_distances()
    assert lay.n_links == 100
    assert d.min() >= 2 and d.max() <= 80
    assert np.all(lay.tx_pos >= 0) and np.all(lay.rx_pos <= 600)


def test_degenerate_annulus_single_pair():
    lay = generate_layout(LayoutGenSpec(1, 600, 2, 2, seed=5))
    assert lay.direct_distances()[0] == pytest.approx(2.0, abs=1e-12)


def test_same_seed_bit_identical():
    spec = LayoutGenSpec(30, seed=99)
    a, b = generate_layout(spec), generate_layout(spec)
    assert a == b
    assert a.tx_pos.tobytes() == b.tx_pos.tobytes()
    assert generate_layout(LayoutGenSpec(30, seed=100)) != a


def test_direct_distance_support_many_layouts():
    # 10^4 layouts of one link each: no direct distance outside [d_min, d_max]
    d = np.concatenate([generate_layout(LayoutGenSpec(1, 600, 2, 80, s)).direct_distances()
                        for s in seeds_from(3, 10_000)])
    assert d.min() >= 2 and d.max() <= 80


def test_receiver_radius_is_area_uniform():
    lay = generate_layout(LayoutGenSpec(4000, 10_000, 10, 20, seed=1))
    r = lay.direct_distances()
    # area-uniform: P(r <= 15) = (15^2 - 10^2) / (20^2 - 10^2)
    assert abs(np.mean(r <= 15) - 125 / 300) < 0.03


def test_generation_failure_reports():
    # receivers can never fit: annulus wider than the square diagonal
    with pytest.raises(LayoutGenerationError):
        generate_layout(LayoutGenSpec(1, 10, 9.9, 9.95, seed=0), max_rx_attempts=2, max_tx_retries=2)


def test_distance_matrix_examples():
    lay = Layout([(0, 0), (5, 5)], [(3, 4), (0, 10)], 20)
    d = distance_matrix(lay)
    assert d[0, 0] == 5.0
    assert d[0, 1] == 10.0


def test_distance_matrix_matches_pairwise_recompute():
    lay = generate_layout(LayoutGenSpec(2, seed=4))
    d = distance_matrix(lay)
    for j in range(2):
        for i in range(2):
            dx, dy = lay.tx_pos[j] - lay.rx_pos[i]
            assert d[j, i] == pytest.approx(np.sqrt(dx * dx + dy * dy), rel=1e-15)


def test_zero_distance_rejected():
    with pytest.raises(ValueError):
        distance_matrix(Layout([(1, 1), (2, 2)], [(3, 3), (1, 1)], 10))


@given(st.integers(0, 2**32), st.integers(2, 12))
def test_distance_matrix_permutation_equivariant(seed, n):
    lay = generate_layout(LayoutGenSpec(n, 200, 2, 50, seed))
    perm = np.random.default_rng(seed).permutation(n)
    d, dp = distance_matrix(lay), distance_matrix(lay.permuted(perm))
    assert np.array_equal(dp, d[np.ix_(perm, perm)])


def test_layout_coordinates_checked():
    with pytest.raises(ValueError):
        Layout([(0, 0)], [(11, 0)], 10)
    with pytest.raises(ValueError):
        Layout([(0, 0)], [(1, 0), (2, 0)], 10)
    lay = Layout([(0, 0)], [(1, 0)], 10)
    with pytest.raises(ValueError):
        lay.tx_pos[0, 0] = 3.0


def test_check_policy():
    assert check_policy([0.5, 1.0], 2).dtype == np.float64
    for bad in ([0.0], [1.2], [[0.5]]):
        with pytest.raises(ValueError):
            check_policy(bad)
    with pytest.raises(ValueError):
        check_policy([0.5], 2)


def test_seeds_from_reproducible_and_distinct():
    a = seeds_from(7, 50)
    assert a == seeds_from(7, 50)
    assert len(set(a)) == 50
    assert all(0 <= s < 2**63 for s in a)


def test_layout_file_roundtrip(tmp_path):
    lay = generate_layout(LayoutGenSpec(25, seed=8))
    save_layout(lay, tmp_path / "l.csv")
    back = load_layout(tmp_path / "l.csv")
    assert back == lay
    assert back.gen_spec == lay.gen_spec
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "link,tx_x,tx_y,rx_x,rx_y"
    meta = (tmp_path / "l.csv.meta").read_text()
    assert "side_length=600.0" in meta and "gen.seed=8" in meta


def test_layout_file_bad_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        load_layout(tmp_path / "x.csv")
