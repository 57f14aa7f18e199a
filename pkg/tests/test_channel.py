import numpy as np
import pytest
from hypothesis import given, strategies as st

from iabsim.channel import (
    ChannelParams, LinkDraws, draw_paths, link_rng, los_angle, miso_from_draws, path_loss,
    realize_channels, sample_daa_channel, sample_miso_channel, sample_siso_channel, siso_from_draws,
    steering_vector,
)
from iabsim.errors import DegenerateGeometry


def naive_miso(tx, rx, n, params, gains, offsets):
    """Direct transcription: sum_k g_k conj(a(theta_k)) / sqrt(K N) / (1 + d^alpha)."""
    tx, rx = np.asarray(tx, float), np.asarray(rx, float)
    d = np.linalg.norm(rx - tx)
    los = np.arctan2(rx[1] - tx[1], rx[0] - tx[0])
    h = np.zeros(n, dtype=complex)
    for g, o in zip(gains, offsets):
        theta = los + params.asd * o
        a = np.array([np.exp(-2j * np.pi * params.spacing_ratio * m * np.sin(theta)) for m in range(n)])
        h += g * np.conj(a)
    return h / np.sqrt(len(gains) * n) / (1 + d**params.pathloss_exponent)


def test_steering_examples():
    assert np.allclose(steering_vector(0.0, 2, 0.5).ravel(), [1 / np.sqrt(2)] * 2)
    assert np.allclose(steering_vector(np.pi / 2, 2, 0.5).ravel(), np.array([1, -1]) / np.sqrt(2))
    a = steering_vector(np.pi / 6, 4, 0.5).ravel()
    expect = np.exp(-1j * np.pi * np.arange(4) * 0.5) / 2.0
    assert np.allclose(a, expect)
    assert steering_vector(0.3, 7, 0.5).shape == (7, 1)
    with pytest.raises(ValueError):
        steering_vector(0.0, 0, 0.5)


def test_los_angle():
    assert los_angle((0, 0, 0), (1, 0, 0)) == pytest.approx(0.0)
    assert los_angle((0, 0, 0), (0, 1, 0)) == pytest.approx(np.pi / 2)
    assert los_angle((0, 0, 0), (1, 1, 0)) == pytest.approx(np.pi / 4)
    with pytest.raises(DegenerateGeometry):
        los_angle((1, 2, 3), (1, 2, 3))


def test_single_path_is_scaled_steering_vector():
    params = ChannelParams(num_paths=1, asd=0.0)
    tx, rx = np.zeros(3), np.array([30.0, 40.0, 0.0])
    h = miso_from_draws(tx, rx, 8, params, np.array([1.0 + 0j]), np.array([0.0]))
    theta = los_angle(tx, rx)
    expect = np.conj(steering_vector(theta, 8, 0.5)).ravel() / (1 + 50.0**3)
    assert np.allclose(h, expect, rtol=1e-12, atol=0)


@given(st.integers(1, 70), st.integers(1, 8), st.integers(0, 1000))
def test_factored_evaluation_matches_direct_sum(n, k, seed):
    r = np.random.default_rng(seed)
    params = ChannelParams(num_paths=k, asd=0.4)
    tx = r.uniform(-50, 50, 3)
    rx = r.uniform(-50, 50, 3)
    g, o = draw_paths(r, k)
    h = miso_from_draws(tx, rx, n, params, g, o)
    assert np.allclose(h, naive_miso(tx, rx, n, params, g, o), rtol=1e-9, atol=0)


def test_batched_links_match_single_links(rng):
    params = ChannelParams()
    users = rng.uniform(-100, 100, (5, 3))
    g = (rng.standard_normal((5, 6)) + 1j * rng.standard_normal((5, 6))) / np.sqrt(2)
    o = rng.uniform(-1, 1, (5, 6))
    batch = miso_from_draws(np.zeros(3), users, 16, params, g, o)
    for i in range(5):
        assert np.allclose(batch[i], naive_miso(np.zeros(3), users[i], 16, params, g[i], o[i]))


def test_path_loss_monotone():
    d = np.linspace(1, 500, 100)
    pl = path_loss(d, 3.0)
    assert np.all(np.diff(pl) < 0)


def test_miso_second_moment():
    """E|h_m|^2 = PL^2 / N for every element, E||h||^2 = PL^2."""
    params = ChannelParams(num_paths=8)
    r = np.random.default_rng(7)
    n, trials = 16, 100_000
    g = (r.standard_normal((trials, 8)) + 1j * r.standard_normal((trials, 8))) / np.sqrt(2)
    o = r.uniform(-1, 1, (trials, 8))
    rx = np.array([20.0, 0.0, 0.0])
    h = miso_from_draws(np.zeros(3), rx, n, params, g, o)
    pl2 = (1 / (1 + 20.0**3)) ** 2
    per_element = np.mean(np.abs(h) ** 2, axis=0)
    assert np.allclose(per_element, pl2 / n, rtol=0.03)
    assert np.mean(np.sum(np.abs(h) ** 2, axis=1)) == pytest.approx(pl2, rel=0.03)


def test_siso_variance_and_determinism():
    params = ChannelParams()
    r = np.random.default_rng(11)
    vals = np.array([sample_siso_channel(np.zeros(3), (5.0, 0, 0), params, r) for _ in range(20_000)])
    # the vectorised route gives the bulk of the samples for the moment check
    g = (r.standard_normal((80_000, 6)) + 1j * r.standard_normal((80_000, 6))) / np.sqrt(2)
    bulk = siso_from_draws(np.zeros(3), np.array([5.0, 0, 0]), params, g.sum(axis=1) / np.sqrt(6))
    allv = np.concatenate([vals, bulk])
    assert np.mean(np.abs(allv) ** 2) == pytest.approx((1 / 126.0) ** 2, rel=0.03)
    a = sample_siso_channel(np.zeros(3), (5.0, 1, 0), params, np.random.default_rng(3))
    b = sample_siso_channel(np.zeros(3), (5.0, 1, 0), params, np.random.default_rng(3))
    assert a == b


def test_siso_single_path_closed_form():
    params = ChannelParams(num_paths=1, asd=0.0)
    h = miso_from_draws(np.zeros(3), np.array([0, 4.0, 0]), 1, params, np.array([1.0 + 0j]), np.array([0.0]))
    assert h[0] == pytest.approx(1 / (1 + 64.0))


def test_siso_equals_one_element_miso(rng):
    params = ChannelParams()
    g, o = draw_paths(rng, 6)
    rx = np.array([10.0, -3.0, 2.0])
    h1 = miso_from_draws(np.zeros(3), rx, 1, params, g, o)[0]
    assert siso_from_draws(np.zeros(3), rx, params, g.sum() / np.sqrt(6)) == pytest.approx(h1)


def test_daa_channel_collapse_and_split_seeds():
    params = ChannelParams()
    rx = np.array([30.0, 20.0, 0.0])
    one = sample_daa_channel([[0, 0, 50.0]], rx, params, np.random.default_rng(5))
    child = np.random.default_rng(5).spawn(1)[0]
    assert one[0, 0] == pytest.approx(sample_siso_channel((0, 0, 50.0), rx, params, child))
    elems = np.random.default_rng(1).uniform(-5, 5, (4, 3)) + [0, 0, 60]
    h = sample_daa_channel(elems, rx, params, np.random.default_rng(9))
    kids = np.random.default_rng(9).spawn(4)
    expect = [sample_siso_channel(e, rx, params, k) for e, k in zip(elems, kids)]
    assert np.allclose(h.ravel(), np.array(expect) / 2.0)


def test_daa_channel_same_point_same_seed_equal():
    params = ChannelParams()
    rx = np.array([30.0, 20.0, 0.0])
    elems = np.tile([0.0, 0.0, 50.0], (4, 1))
    vals = [sample_daa_channel(elems[:1], rx, params, np.random.default_rng(2))[0, 0] for _ in range(4)]
    assert np.allclose(vals, vals[0])


def test_miso_rejects_coincident_points():
    with pytest.raises(DegenerateGeometry):
        sample_miso_channel((1, 1, 1), (1, 1, 1), 4, ChannelParams(), np.random.default_rng(0))


def test_params_validation():
    for bad in ({"num_paths": 0}, {"pathloss_exponent": 0}, {"asd": -1}, {"spacing_ratio": 0}, {"noise_power": 0}):
        with pytest.raises(ValueError):
            ChannelParams(**bad)


def test_link_draws_deterministic_and_independent():
    a = LinkDraws.generate(42, 5, 3, 6)
    b = LinkDraws.generate(42, 5, 3, 6)
    assert np.array_equal(a.donor_user_gains, b.donor_user_gains)
    assert np.array_equal(a.uav_user_coeff, b.uav_user_coeff)
    # adding users does not disturb the draws of existing links
    c = LinkDraws.generate(42, 8, 3, 6)
    assert np.array_equal(c.donor_user_gains[:5], a.donor_user_gains)
    assert np.array_equal(c.uav_uav_coeff, a.uav_uav_coeff)
    g, _ = draw_paths(link_rng(42, 0, 0), 6)
    assert np.array_equal(g, a.donor_user_gains[0])


def test_realize_channels_shapes(rng):
    params = ChannelParams()
    draws = LinkDraws.generate(1, 6, 3, 6)
    users = np.column_stack([rng.uniform(-100, 100, (6, 2)), np.zeros(6)])
    uavs = np.column_stack([rng.uniform(-100, 100, (3, 2)), np.full(3, 60.0)])
    ch = realize_channels((0, 0, 25), 64, users, uavs, params, draws, daa=True)
    assert ch.donor_user.shape == (6, 64) and ch.donor_uav.shape == (3, 64)
    assert ch.uav_user.shape == (3, 6) and np.all(np.diag(ch.uav_uav) == 0)
    assert np.allclose(ch.daa_user, ch.uav_user.T / np.sqrt(3))
