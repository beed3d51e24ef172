import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddfsim import metrics
from ddfsim.engine import FrameConfig, outage_batch
from ddfsim.metrics import (
    BATCH_SIZE,
    CurvePoint,
    InsufficientErrors,
    awgn_reference_curve,
    diversity_slope,
    fer_curve,
    outage_probability,
    read_reference_csv,
    simulate_point,
    t1_distribution,
    threshold_from_curve,
    write_reference_csv,
)
from ddfsim.signal import build_spreading_matrix, qpsk


def _siso_outage(rate, snr_db):
    return 1 - math.exp(-(2**rate - 1) / 10 ** (snr_db / 10))


def test_siso_outage_closed_form():
    cfg = FrameConfig(n_relays=0, rate=2.0, snr_db=10.0, criterion="outage")
    p = outage_probability(cfg, 100_000, seed=3, workers=1)
    assert abs(p.estimate - _siso_outage(2, 10)) <= 3 * p.ci_halfwidth
    assert _siso_outage(2, 10) == pytest.approx(0.2592, abs=1e-4)


def test_zero_rate_never_in_outage():
    cfg = FrameConfig(n_relays=0, rate=0.0, snr_db=-10.0, criterion="outage")
    assert outage_probability(cfg, 5000, seed=1, workers=1).errors_observed == 0


def test_outage_zero_trials_rejected():
    with pytest.raises(ValueError):
        outage_probability(FrameConfig(n_relays=0), 0, seed=1)


@given(st.integers(0, 500), st.integers(1, 10_000))
def test_curve_point_invariants(errors, extra):
    trials = errors + extra
    p = CurvePoint.from_counts(20.0, errors, trials)
    assert p.estimate == errors / trials
    assert p.ci_halfwidth == pytest.approx(1.96 * math.sqrt(p.estimate * (1 - p.estimate) / trials))


def _synthetic(snr_db, c=5.0, d=2.0, n=10**9):
    rho = 10 ** (snr_db / 10)
    p = c / rho**d
    return CurvePoint(snr_db, p, n, int(p * n), 0.0)


def test_slope_of_square_law():
    assert diversity_slope(_synthetic(20), _synthetic(30)).slope == pytest.approx(2.0, abs=1e-12)


def test_slope_of_flat_curve():
    a = CurvePoint.from_counts(10, 500, 1000)
    b = CurvePoint.from_counts(20, 500, 1000)
    assert diversity_slope(a, b).slope == 0.0


def test_slope_needs_errors_and_order():
    with pytest.raises(InsufficientErrors):
        diversity_slope(CurvePoint.from_counts(10, 99, 1000), CurvePoint.from_counts(20, 500, 10**5))
    with pytest.raises(ValueError):
        diversity_slope(_synthetic(30), _synthetic(20))


def test_outage_pathwise_monotone_in_snr_single_relay():
    ch = metrics._channels(FrameConfig(n_relays=1), 5, 0, BATCH_SIZE)
    prev = None
    for snr in (0.0, 5.0, 10.0, 20.0, 30.0):
        cfg = FrameConfig(n_relays=1, snr_db=snr, rate=2.0, criterion="outage")
        _, mi = outage_batch(cfg, ch)
        out = mi < cfg.frame_length * cfg.rate_eff
        if prev is not None:
            assert np.all(out <= prev)
        prev = out


def test_outage_curve_non_increasing_three_relays():
    pts = metrics.outage_curve(FrameConfig(n_relays=3, criterion="outage"), [5, 10, 15], 8000, seed=2, workers=1)
    for a, b in zip(pts, pts[1:]):
        assert b.estimate <= a.estimate + a.ci_halfwidth + b.ci_halfwidth


def test_t1_distribution_normalised():
    hist = t1_distribution(FrameConfig(n_relays=1, snr_db=20.0), 5000, seed=4, workers=1)
    assert set(hist) == {1, 2, 3, 4, 5, 6, "never"}
    assert sum(c for c, _ in hist.values()) == 5000
    assert abs(math.fsum(p for _, p in hist.values()) - 1.0) <= 1e-15


def test_t1_low_snr_is_never():
    hist = t1_distribution(FrameConfig(n_relays=1, snr_db=-30.0), 3000, seed=4, workers=1)
    assert hist["never"][1] > 0.99


@pytest.mark.parametrize("workers", [2, 3])
def test_worker_count_does_not_change_results(workers):
    cfg = FrameConfig(n_relays=1, snr_db=10.0)
    a = simulate_point(cfg, 5 * BATCH_SIZE + 100, 60, seed=9, workers=1)
    b = simulate_point(cfg, 5 * BATCH_SIZE + 100, 60, seed=9, workers=workers)
    assert a == b
    oc = FrameConfig(n_relays=2, snr_db=10.0, criterion="outage")
    assert outage_probability(oc, 3 * BATCH_SIZE + 7, 4, workers=1) == outage_probability(oc, 3 * BATCH_SIZE + 7, 4, workers=workers)


def test_stopping_on_whole_batches():
    cfg = FrameConfig(n_relays=1, snr_db=5.0)
    st = simulate_point(cfg, 20 * BATCH_SIZE, 10, seed=1, workers=1)
    assert st.frame_errors >= 10 and st.trials % BATCH_SIZE == 0
    full = simulate_point(cfg, st.trials, None, seed=1, workers=1)
    assert full == st


def test_unreachable_rate_keeps_relays_silent():
    a = simulate_point(FrameConfig(n_relays=1, snr_db=12.0, criterion="outage", rate=20.0), 2000, None, 5, workers=1)
    assert a.relay_forwards == 0


def test_genie_very_high_snr_has_no_errors():
    pts = fer_curve(FrameConfig(n_relays=1), [40.0], 10_000, None, seed=2, workers=1)
    assert pts[0].errors_observed == 0


@pytest.mark.slow
def test_genie_single_relay_full_diversity():
    pts = fer_curve(FrameConfig(n_relays=1), [20.0, 30.0], 10_000_000, 100, seed=1, workers=1)
    d = diversity_slope(*pts)
    assert abs(d.slope - 2.0) <= 0.4


def test_awgn_reference_zero_power_is_guessing():
    c, U = qpsk(), build_spreading_matrix(6)
    curve = awgn_reference_curve(c, U, None, [-math.inf], 20_000, seed=3)
    fer = curve[0][1]
    expected = 1 - 4.0**-6
    assert abs(fer - expected) <= 3 * math.sqrt(expected * (1 - expected) / 20_000) + 1e-3


def test_awgn_reference_monotone_and_vanishing():
    c, U = qpsk(), build_spreading_matrix(3)
    curve = awgn_reference_curve(c, U, None, [0, 2, 4, 6, 8, 10, 30], 600, seed=1)
    fer = [f for _, f, _ in curve]
    assert all(b <= a for a, b in zip(fer, fer[1:]))
    assert fer[-1] == 0.0


def test_threshold_lookup_smallest_grid_point():
    curve = [(0.0, 0.5, 10), (1.0, 0.02, 10), (2.0, 0.01, 10), (3.0, 0.001, 10)]
    assert threshold_from_curve(curve, 1e-2) == 2.0
    assert threshold_from_curve(curve, 1e-4) == math.inf


def test_reference_csv_round_trip(tmp_path):
    curve = [(0.0, 0.75, 100), (10.0, 0.012345678901234, 100)]
    path = tmp_path / "ref.csv"
    write_reference_csv(curve, path)
    raw = path.read_bytes()
    assert raw.startswith(b"snr_db,fer,trials\n") and b"\r" not in raw
    assert read_reference_csv(path) == curve


def test_reference_cache_reused(tmp_path, monkeypatch):
    monkeypatch.setenv("DDFSIM_CACHE", str(tmp_path))
    c, U = qpsk(), build_spreading_matrix(2)
    a = metrics.reference_curve_cached(c, U, 2, grid=(0.0, 10.0), trials=200, seed=1)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    b = metrics.reference_curve_cached(c, U, 2, grid=(0.0, 10.0), trials=200, seed=1)
    assert a == b


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("DDFSIM_WORKERS", "3")
    assert metrics.worker_count() == 3
    monkeypatch.delenv("DDFSIM_WORKERS")
    assert metrics.worker_count() >= 1
