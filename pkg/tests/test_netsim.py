import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lossfl.netsim import (
    NetworkProfile, assign_profiles, round_time, sufficiency_report, transmit,
)


@pytest.mark.parametrize("n, eligible, loss, expected", [
    (100, 0.70, 0.10, 30),
    (100, 0.90, 0.30, 10),
    (100, 1.00, 0.50, 0),
    (10, 0.75, 0.30, 2),
])
def test_assign_profiles_counts(n, eligible, loss, expected):
    profiles = assign_profiles(n, eligible, loss, np.random.default_rng(0))
    bad = [p for p in profiles if not p.sufficient]
    assert len(bad) == expected
    assert all(p.loss_ratio == loss for p in bad)
    assert all(p.loss_ratio == 0.0 for p in profiles if p.sufficient)


def test_insufficient_sets_nest_across_eligible_ratios():
    sets = []
    for e in (0.9, 0.8, 0.7):
        prof = assign_profiles(100, e, 0.1, np.random.default_rng(4))
        sets.append({k for k, p in enumerate(prof) if not p.sufficient})
    assert sets[0] < sets[1] < sets[2]


def test_profile_validation():
    with pytest.raises(ValueError):
        NetworkProfile(False, 1.0)
    with pytest.raises(ValueError):
        assign_profiles(10, 0.0, 0.1, np.random.default_rng(0))


def test_sufficiency_report_is_one_bit():
    assert sufficiency_report(NetworkProfile(True)) == 1
    assert sufficiency_report(NetworkProfile(False, 0.3)) == 0


def test_no_loss_is_exact():
    p = np.random.default_rng(0).normal(size=37)
    res = transmit(p, NetworkProfile(False, 0.0), 5, np.random.default_rng(1))
    assert res.received.tobytes() == p.tobytes()
    assert res.drop_mask.all()
    assert res.packets_total == 8 and res.packets_dropped == 0


def test_forced_mask_zero_fills():
    p = np.array([1.5, 2.5, 3.5, 4.5])
    res = transmit(p, NetworkProfile(False, 0.5), 2, np.random.default_rng(0), forced_packets=[True, False])
    np.testing.assert_array_equal(res.received, [1.5, 2.5, 0.0, 0.0])
    np.testing.assert_array_equal(res.drop_mask, [True, True, False, False])
    assert res.packets_dropped == 1 and res.retransmissions == 0
    assert res.drop_fraction == 0.5


def test_sufficient_clients_retransmit():
    p = np.arange(10.0)
    res = transmit(p, NetworkProfile(True, 0.5), 3, np.random.default_rng(0),
                   forced_packets=[False, True, False, True])
    np.testing.assert_array_equal(res.received, p)
    assert res.drop_mask.all()
    assert res.packets_dropped == 2 and res.retransmissions == 2


def test_drop_frequency_monte_carlo():
    rng = np.random.default_rng(2024)
    prof = NetworkProfile(False, 0.3)
    p = np.ones(1000)
    lost = 0
    for _ in range(10_000):
        lost += np.count_nonzero(~transmit(p, prof, 10, rng).drop_mask)
    assert abs(lost / (10_000 * 1000) - 0.3) < 0.01


def test_masking_is_unbiased_after_scaling():
    rng = np.random.default_rng(7)
    prof = NetworkProfile(False, 0.4)
    p = np.array([2.0, -1.0, 0.5])
    acc = np.zeros(3)
    trials = 20_000
    for _ in range(trials):
        acc += transmit(p, prof, 1, rng).received
    np.testing.assert_allclose(acc / trials, 0.6 * p, rtol=0.02)


@settings(max_examples=50, deadline=None)
@given(dim=st.integers(1, 200), packet=st.integers(1, 64), r=st.floats(0, 0.95), seed=st.integers(0, 2**31))
def test_zero_fill_consistency(dim, packet, r, seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=dim)
    res = transmit(p, NetworkProfile(False, r), packet, rng)
    np.testing.assert_array_equal(res.received, p * res.drop_mask)
    assert res.packets_total == -(-dim // packet)
    # mask is constant within each packet
    blocks = np.split(res.drop_mask, range(packet, dim, packet))
    assert all(b.all() or not b.any() for b in blocks)


def test_transmit_deterministic_per_key():
    from lossfl.rng import Purpose, stream
    p = np.ones(500)
    prof = NetworkProfile(False, 0.5)
    a = transmit(p, prof, 10, stream(1, Purpose.NETWORK, 3, 7)).drop_mask
    b = transmit(p, prof, 10, stream(1, Purpose.NETWORK, 3, 7)).drop_mask
    c = transmit(p, prof, 10, stream(1, Purpose.NETWORK, 3, 8)).drop_mask
    assert (a == b).all() and not (a == c).all()


MB = 1_000_000


@pytest.mark.parametrize("profiles, tra, expected", [
    ([NetworkProfile(True, 0.0, 8.0)], False, 1.0),
    ([NetworkProfile(True, 0.0, 8.0), NetworkProfile(True, 0.0, 2.0)], False, 4.0),
    ([NetworkProfile(False, 0.5, 2.0)], False, 8.0),  # 4 s x (1 + ceil(0.5 / 0.5))
    ([NetworkProfile(False, 0.5, 2.0)], True, 4.0),
])
def test_round_time(profiles, tra, expected):
    assert round_time(profiles, MB, tra) == pytest.approx(expected)


def test_round_time_without_speeds_is_absent():
    assert round_time([NetworkProfile(True)], MB, False) is None
