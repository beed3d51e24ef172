import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddfsim.channel import (
    DESTINATION,
    ActivityState,
    NetworkChannels,
    PowerModel,
    awgn_sample,
    equivalent_gain,
    sample_network_channels,
)
from ddfsim.signal import RotationSchedule, rotation_schedule


def _ch(g_sd=1.0, g_sr=(), g_rd=(), g_rr=None):
    n = len(g_sr)
    g_rr = np.zeros((n, n), dtype=complex) if g_rr is None else np.asarray(g_rr, dtype=complex)
    return NetworkChannels(np.asarray(complex(g_sd)), np.asarray(g_sr, dtype=complex),
                           np.asarray(g_rd, dtype=complex), g_rr)


def test_no_relays_only_direct_link():
    ch = sample_network_channels(0, np.random.default_rng(0))
    assert ch.g_sr.size == ch.g_rd.size == ch.g_rr.size == 0
    assert np.ndim(ch.g_sd) == 0


def test_three_relays_count():
    ch = sample_network_channels(3, np.random.default_rng(0))
    populated = 1 + ch.g_sr.size + ch.g_rd.size + np.count_nonzero(ch.g_rr)
    assert populated == 1 + 3 + 3 + 6
    assert np.all(np.diag(ch.g_rr) == 0)


def test_unit_variance_gains():
    ch = sample_network_channels(2, np.random.default_rng(1), size=100_000)
    for g in (ch.g_sd, ch.g_sr, ch.g_rd, ch.g_rr[:, 0, 1], ch.g_rr[:, 1, 0]):
        assert abs(np.mean(np.abs(g) ** 2) - 1.0) < 0.02


def test_sampling_deterministic():
    a = sample_network_channels(3, np.random.default_rng(9))
    b = sample_network_channels(3, np.random.default_rng(9))
    assert np.array_equal(a.g_rr, b.g_rr) and a.g_sd == b.g_sd


def test_awgn_moments_and_replay():
    pw = PowerModel(10.0)
    n = awgn_sample(np.random.default_rng(2), pw, size=100_000)
    assert abs(np.var(n) - 1.0) < 0.02
    assert abs(np.mean(n)) < 0.02
    assert awgn_sample(np.random.default_rng(4), pw) == awgn_sample(np.random.default_rng(4), pw)


def test_equivalent_gain_identity():
    act = ActivityState(np.zeros((1, 0), dtype=bool))
    rot = RotationSchedule(4, np.zeros((0, 1), dtype=np.int64))
    assert equivalent_gain(DESTINATION, 0, act, rot, _ch(1.0), PowerModel(0.0)) == pytest.approx(1.0)


@pytest.mark.parametrize("index, expected", [(0, math.sqrt(2)), (1, 0.0)])
def test_equivalent_gain_alignment(index, expected):
    # L = 2: index 0 is theta = 0 (constructive), index 1 is theta = pi (destructive)
    rot = RotationSchedule(2, np.array([[index]]))
    act = ActivityState(np.array([[True]]))
    g = equivalent_gain(DESTINATION, 0, act, rot, _ch(1.0, [1.0], [1.0]), PowerModel(0.0))
    assert abs(g - expected) < 1e-12


def test_listening_relay_only():
    act = ActivityState(np.array([[True, False]]))
    rot = rotation_schedule(2, 4, 1)
    ch = sample_network_channels(2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        equivalent_gain(0, 0, act, rot, ch, PowerModel(0.0))
    equivalent_gain(1, 0, act, rot, ch, PowerModel(0.0))


def test_activity_must_be_monotone():
    with pytest.raises(ValueError):
        ActivityState(np.array([[True], [False]]))


def test_zero_rotation_single_relay_reduces_to_superposition():
    rng = np.random.default_rng(5)
    for _ in range(20):
        ch = sample_network_channels(1, rng)
        rot = RotationSchedule(4, np.zeros((1, 3), dtype=np.int64))
        act = ActivityState.from_start_slots([1], 3)
        pw = PowerModel(13.0)
        g = equivalent_gain(DESTINATION, 2, act, rot, ch, pw)
        assert g == pytest.approx(math.sqrt(pw.total_power / 2) * (ch.g_sd + ch.g_rd[0]))


complexes = st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False)


@given(complexes, complexes, st.floats(0, 2 * math.pi))
def test_rotation_pair_energy_identity(g1, g2, theta):
    lhs = abs(g1 + np.exp(1j * theta) * g2) ** 2 + abs(g1 + np.exp(1j * (theta + np.pi)) * g2) ** 2
    rhs = 2 * (abs(g1) ** 2 + abs(g2) ** 2)
    assert abs(lhs - rhs) <= 1e-12 * rhs


@given(st.floats(-20, 60), st.integers(1, 8))
def test_power_conservation(snr_db, k):
    pw = PowerModel(snr_db)
    per = pw.per_node_power(k)
    # every transmitter gets the identical value P/K
    shares = np.full(k, per)
    assert np.all(shares == shares[0])
    assert abs(math.fsum(shares) - pw.total_power) <= 2 * np.spacing(pw.total_power)
