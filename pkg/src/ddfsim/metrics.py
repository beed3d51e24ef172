"""Monte Carlo estimators: outage, FER, listening time, diversity order.

Random numbers are organised in fixed-size trial batches. Batch ``k`` of
purpose ``p`` draws from a Philox stream keyed by ``(seed, p, k)``, so
any trial's channels, noise and information bits depend only on the
master seed and the trial index. Estimates are therefore identical for
any worker count, and configurations evaluated with the same seed see
common random numbers (the noise has unit variance and SNR only scales
the transmit power).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from .channel import complex_normal, sample_network_channels
from .detect import get_codebook, ml_decode_batch
from .engine import NEVER, FrameConfig, outage_batch, simulate_frames
from .signal import Constellation, SpreadingMatrix

__all__ = [
    "BATCH_SIZE",
    "CurvePoint",
    "PointStats",
    "DiversityEstimate",
    "InsufficientErrors",
    "stream",
    "worker_count",
    "outage_probability",
    "outage_curve",
    "simulate_point",
    "fer_curve",
    "t1_distribution",
    "diversity_slope",
    "awgn_reference_curve",
    "threshold_from_curve",
    "snr_threshold_table",
    "reference_csv_text",
    "write_reference_csv",
    "read_reference_csv",
]

BATCH_SIZE = 2048

_PURPOSE = {"channels": 1, "noise": 2, "info": 3, "awgn": 4}


class InsufficientErrors(ValueError):
    pass


def stream(seed: int, purpose: str, batch: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=(_PURPOSE[purpose], int(batch)))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    env = os.environ.get("DDFSIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class CurvePoint:
    snr_db: float
    estimate: float
    trials: int
    errors_observed: int
    ci_halfwidth: float

    @classmethod
    def from_counts(cls, snr_db: float, errors: int, trials: int) -> "CurvePoint":
        if trials <= 0:
            raise ValueError("a curve point needs at least one trial")
        p = errors / trials
        return cls(float(snr_db), p, int(trials), int(errors), 1.96 * math.sqrt(p * (1 - p) / trials))

    @property
    def low(self) -> float:
        return self.estimate - self.ci_halfwidth

    @property
    def high(self) -> float:
        return self.estimate + self.ci_halfwidth


@dataclass(frozen=True)
class PointStats:
    """Counts behind one signal-level curve point."""

    snr_db: float
    trials: int
    frame_errors: int
    activity_errors: int
    relay_forwards: int
    relay_wrong_forwards: int

    def point(self) -> CurvePoint:
        return CurvePoint.from_counts(self.snr_db, self.frame_errors, self.trials)

    def __add__(self, other: "PointStats") -> "PointStats":
        return PointStats(
            self.snr_db,
            self.trials + other.trials,
            self.frame_errors + other.frame_errors,
            self.activity_errors + other.activity_errors,
            self.relay_forwards + other.relay_forwards,
            self.relay_wrong_forwards + other.relay_wrong_forwards,
        )


@dataclass(frozen=True)
class DiversityEstimate:
    slope: float
    snr_window: tuple
    multiplexing_gain: float = 0.0


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _batch_sizes(trials: int):
    full, rest = divmod(trials, BATCH_SIZE)
    return [BATCH_SIZE] * full + ([rest] if rest else [])


def _channels(cfg: FrameConfig, seed: int, k: int, n: int):
    ch = sample_network_channels(cfg.n_relays, stream(seed, "channels", k), size=BATCH_SIZE)
    return ch[:n]


# outage ----------------------------------------------------------------------

def _outage_batch_job(cfg: FrameConfig, seed: int, k: int, n: int, kind) -> tuple:
    ch = _channels(cfg, seed, k, n)
    act, mi = outage_batch(cfg, ch, kind=kind)
    outage = mi < cfg.frame_length * cfg.rate_eff
    return int(outage.sum()), act


def outage_probability(cfg: FrameConfig, trials: int, seed: int, workers: int | None = None,
                       kind="outage") -> CurvePoint:
    """Probability that the destination collects fewer than ``T * rate_eff`` bits."""
    if trials <= 0:
        raise ValueError("outage_probability needs at least one trial")
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, seed, k, n, kind) for k, n in enumerate(_batch_sizes(trials))]
    errors = sum(e for e, _ in _map(_outage_batch_job, jobs, workers))
    return CurvePoint.from_counts(cfg.snr_db, errors, trials)


def outage_curve(cfg: FrameConfig, snr_list, trials: int, seed: int, workers: int | None = None):
    return [outage_probability(cfg.with_(snr_db=float(s)), trials, seed, workers) for s in snr_list]


def t1_distribution(cfg: FrameConfig, trials: int, seed: int, workers: int | None = None) -> dict:
    """Empirical distribution of the first relay's activation block (outage mode).

    Keys are ``1..B`` and ``"never"``; values are ``(count, probability)``.
    """
    if cfg.n_relays < 1:
        raise ValueError("t1_distribution needs a relay")
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, seed, k, n, "outage") for k, n in enumerate(_batch_sizes(trials))]
    acts = np.concatenate([a[:, 0] for _, a in _map(_outage_batch_job, jobs, workers)])
    B = cfg.num_blocks
    counts = {b: int(np.sum(acts == b)) for b in range(1, B + 1)}
    counts["never"] = int(np.sum(acts == NEVER))
    return {k: (v, v / trials) for k, v in counts.items()}


# signal level ------------------------------------------------------------------

def _fer_batch_job(cfg: FrameConfig, seed: int, k: int, n: int) -> PointStats:
    ch = _channels(cfg, seed, k, n)
    cb = cfg.codebook
    info = stream(seed, "info", k).integers(0, cb.size, size=BATCH_SIZE)[:n]
    rng = stream(seed, "noise", k)
    N, T = cfg.n_relays, cfg.frame_length
    nr = complex_normal(rng, (BATCH_SIZE, N, T))[:n]
    nd = complex_normal(rng, (BATCH_SIZE, T))[:n]
    out = simulate_frames(cfg, ch, info, nr, nd)
    fwd = out.relay_forwarded & (out.act_true < cfg.num_blocks)
    return PointStats(
        cfg.snr_db,
        n,
        int(out.frame_error.sum()),
        int(out.activity_error.sum()),
        int(fwd.sum()),
        int((fwd & ~out.relay_decode_correct).sum()),
    )


def simulate_point(cfg: FrameConfig, max_trials: int, target_errors: int | None, seed: int,
                   workers: int | None = None) -> PointStats:
    """Run batches in index order until ``target_errors`` frame errors or ``max_trials``.

    Stopping is decided on whole batches in order, so the result does not
    depend on how many batches were evaluated concurrently.
    """
    workers = worker_count() if workers is None else workers
    sizes = _batch_sizes(max_trials)
    total = PointStats(cfg.snr_db, 0, 0, 0, 0, 0)
    k = 0
    while k < len(sizes):
        wave = list(range(k, min(k + max(workers, 1), len(sizes))))
        results = _map(_fer_batch_job, [(cfg, seed, j, sizes[j]) for j in wave], workers)
        for r in results:
            total = total + r
            k += 1
            if target_errors is not None and total.frame_errors >= target_errors:
                return total
    return total


def fer_curve(cfg: FrameConfig, snr_list, max_trials: int, target_errors: int | None, seed: int,
              workers: int | None = None, stats: bool = False):
    """Frame error rate at each SNR; with ``stats=True`` returns :class:`PointStats`."""
    out = []
    for s in snr_list:
        st = simulate_point(cfg.with_(snr_db=float(s)), max_trials, target_errors, seed, workers)
        out.append(st if stats else st.point())
    return out


def diversity_slope(p1: CurvePoint, p2: CurvePoint, min_errors: int = 100) -> DiversityEstimate:
    """Negative log-log slope between two curve points (SNR in dB)."""
    if p2.snr_db <= p1.snr_db:
        raise ValueError("second point must be at a higher SNR")
    for p in (p1, p2):
        if p.errors_observed < min_errors:
            raise InsufficientErrors(
                f"{p.errors_observed} errors at {p.snr_db} dB; need at least {min_errors}"
            )
    d = -(math.log10(p2.estimate) - math.log10(p1.estimate)) / ((p2.snr_db - p1.snr_db) / 10.0)
    return DiversityEstimate(d, (p1.snr_db, p2.snr_db))


# AWGN reference curves ---------------------------------------------------------

DEFAULT_REFERENCE_GRID = tuple(float(s) for s in range(0, 71))
DEFAULT_REFERENCE_TRIALS = 4000
DEFAULT_REFERENCE_SEED = 20110


def awgn_reference_curve(c: Constellation, U: SpreadingMatrix, n_observed: int | None, snr_grid,
                         trials: int, seed: int) -> list[tuple]:
    """ML frame error rate over a unit-gain AWGN channel.

    Only the first ``n_observed`` coded symbols are observed (default: the
    whole frame). Returns ``(snr_db, fer, trials)`` rows with the FER made
    non-increasing by isotonic regression. ``-inf`` dB means zero power.
    """
    cb = get_codebook(c, U)
    T = U.dimension
    t = T if n_observed is None else int(n_observed)
    slots = tuple(range(t))
    raw = []
    for s in snr_grid:
        amp = 0.0 if s == -np.inf else math.sqrt(10.0 ** (s / 10.0))
        errors = 0
        for k, n in enumerate(_batch_sizes(trials)):
            rng = stream(seed, "awgn", k)
            info = rng.integers(0, cb.size, size=BATCH_SIZE)[:n]
            noise = complex_normal(rng, (BATCH_SIZE, T))[:n, :t]
            y = amp * cb.codewords[info][:, :t] + noise
            h = np.full((n, t), amp, dtype=complex)
            dec, _ = ml_decode_batch(y, h, slots, cb, hints=[info])
            errors += int(np.sum(dec != info))
        raw.append(errors / trials)
    fer = isotonic_regression(np.asarray(raw), increasing=False).x
    return [(float(s), float(f), int(trials)) for s, f in zip(snr_grid, fer)]


def threshold_from_curve(curve, target_pe: float) -> float:
    """Smallest grid SNR whose reference FER is at most ``target_pe`` (``inf`` if none)."""
    for s, f, _ in curve:
        if f <= target_pe:
            return float(s)
    return math.inf


def reference_csv_text(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", "fer", "trials"])
    for s, f, n in curve:
        w.writerow([repr(float(s)), repr(float(f)), int(n)])
    return buf.getvalue()


def write_reference_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(reference_csv_text(curve))


def read_reference_csv(path) -> list[tuple]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != ["snr_db", "fer", "trials"]:
            raise ValueError(f"{path}: unexpected reference-table header {r.fieldnames}")
        return [(float(row["snr_db"]), float(row["fer"]), int(row["trials"])) for row in r]


def cache_dir() -> Path:
    return Path(os.environ.get("DDFSIM_CACHE", Path.home() / ".cache" / "ddfsim"))


def _reference_key(c: Constellation, U: SpreadingMatrix, t: int, grid, trials, seed) -> str:
    h = hashlib.sha1()
    h.update(np.asarray(grid, dtype=float).tobytes())
    h.update(U.matrix.tobytes())
    h.update(f"{trials}:{seed}".encode())
    return f"awgn_M{c.order}_T{U.dimension}_t{t}_{h.hexdigest()[:12]}.csv"


def reference_curve_cached(c: Constellation, U: SpreadingMatrix, t: int, grid=DEFAULT_REFERENCE_GRID,
                           trials: int = DEFAULT_REFERENCE_TRIALS, seed: int = DEFAULT_REFERENCE_SEED):
    path = cache_dir() / _reference_key(c, U, t, grid, trials, seed)
    if path.exists():
        return read_reference_csv(path)
    curve = awgn_reference_curve(c, U, t, grid, trials, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    write_reference_csv(curve, tmp)
    os.replace(tmp, path)
    return curve


@lru_cache(maxsize=32)
def _threshold_table(order: int, matrix_bytes: bytes, T: int, phase: float, target_pe: float) -> tuple:
    U = SpreadingMatrix(np.frombuffer(matrix_bytes, dtype=complex).reshape(T, T).copy(), phase)
    c = Constellation(order)
    return tuple(threshold_from_curve(reference_curve_cached(c, U, t), target_pe) for t in range(1, T + 1))


def snr_threshold_table(c: Constellation, U: SpreadingMatrix, target_pe: float) -> tuple:
    """Per observed-slot-count SNR thresholds (dB) for the SNR-threshold criterion."""
    return _threshold_table(c.order, U.matrix.tobytes(), U.dimension, U.phase, float(target_pe))
