"""Receiver algorithms over the equivalent time-varying SISO channel.

All decoders are exhaustive maximum likelihood over the ``M**T``
candidate frames. The batched entry points first run a local search
over precomputed nearest-codeword tables: if candidate ``c0`` beats its
``K`` nearest codewords and every remaining codeword is, through the
channel, more than ``2 sqrt(r0)`` away from it (``r0`` its residual),
``c0`` is the unique ML decision and enumeration is skipped. These
shortcuts never change a decision, they only avoid computing it the
long way.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .signal import Codebook, Constellation, SpreadingMatrix, alamouti_combine

__all__ = [
    "ObservationWindow",
    "get_codebook",
    "candidate_metrics",
    "ml_decode",
    "ml_decode_batch",
    "ml_matches_batch",
    "forney_reliability",
    "forney_log_reliability_batch",
    "forney_passes_batch",
    "alamouti_window",
    "alamouti_decode",
    "activation_hypotheses",
    "glrt_decode_batch",
    "glrt_joint_decode",
    "HypothesisBudgetError",
]

# Entries of the (frames x candidates) metric block computed at once.
_CHUNK_ENTRIES = 1 << 22
# Nearest-neighbour tables are only built for codebooks up to this size.
_NEIGHBOUR_LIMIT = 1 << 13
_NEIGHBOURS = 16


class HypothesisBudgetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    y: np.ndarray
    h: np.ndarray
    slot_indices: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        h = np.asarray(self.h, dtype=complex)
        s = np.asarray(self.slot_indices, dtype=int)
        if not (y.shape == h.shape == s.shape):
            raise ValueError("y, h and slot_indices must have the same length")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "slot_indices", s)


@lru_cache(maxsize=16)
def _codebook_cached(order: int, matrix_bytes: bytes, T: int, phase: float) -> Codebook:
    matrix = np.frombuffer(matrix_bytes, dtype=complex).reshape(T, T)
    return Codebook(Constellation(order), SpreadingMatrix(matrix.copy(), phase))


def get_codebook(c: Constellation, U: SpreadingMatrix) -> Codebook:
    return _codebook_cached(c.order, U.matrix.tobytes(), U.dimension, U.phase)


@lru_cache(maxsize=256)
def _basis(cb: Codebook, slots: tuple) -> np.ndarray:
    return np.ascontiguousarray(cb.prefix_basis(slots).T)


@lru_cache(maxsize=64)
def _neighbours(cb: Codebook, slots: tuple):
    """Nearest-codeword table for one slot set, or ``None`` for large codebooks.

    Returns ``(table, beyond)``: ``table[i]`` lists the ``K`` codewords
    closest to ``i`` over ``slots`` (squared distance, nearest first) and
    ``beyond[i]`` is the squared distance from ``i`` to every codeword not
    in ``table[i]`` at the least.
    """
    n = cb.size
    if n > _NEIGHBOUR_LIMIT or n < 2:
        return None
    k = min(_NEIGHBOURS, n - 1)
    c = cb.codewords[:, list(slots)]
    energy = np.sum(np.abs(c) ** 2, axis=1)
    table = np.empty((n, k), dtype=np.int64)
    beyond = np.full(n, np.inf)
    for lo in range(0, n, 512):
        blk = c[lo:lo + 512]
        rows = np.arange(len(blk))
        d = energy[lo:lo + 512, None] + energy[None, :] - 2 * (blk @ np.conj(c).T).real
        d[rows, rows + lo] = np.inf
        part = np.argpartition(d, k, axis=1) if k < n - 1 else np.argsort(d, axis=1)
        near = part[:, :k]
        order = np.argsort(np.take_along_axis(d, near, axis=1), axis=1, kind="stable")
        table[lo:lo + 512] = np.take_along_axis(near, order, axis=1)
        if k < n - 1:
            beyond[lo:lo + 512] = d[rows, part[:, k]]
    # guard the Gram-form rounding
    return table, np.maximum(beyond * (1 - 1e-9) - 1e-12, 0.0)


def _metric_block(y, h, slots, cb: Codebook) -> np.ndarray:
    """Full residuals ``sum_t |y_t - h_t c_t|^2`` for every candidate (rows = frames)."""
    basis = _basis(cb, slots)
    a = np.conj(y) * h
    feat = np.concatenate([-2 * a.real, 2 * a.imag, np.abs(h) ** 2], axis=1)
    return feat @ basis + np.sum(np.abs(y) ** 2, axis=1, keepdims=True)


def candidate_metrics(y, h, slots, cb: Codebook) -> np.ndarray:
    y = np.atleast_2d(y)
    h = np.atleast_2d(h)
    return _metric_block(y, h, tuple(int(s) for s in slots), cb)


def _residual(y, h, cand_idx, slots, cb: Codebook) -> np.ndarray:
    c = cb.codewords[cand_idx][:, list(slots)]
    return np.sum(np.abs(y - h * c) ** 2, axis=1)


def _linear_guess(y, h, slots, cb: Codebook) -> np.ndarray:
    U = cb.spreading.matrix
    z = np.conj(h) * y / (np.abs(h) ** 2 + 1.0)
    soft = z @ np.conj(U[list(slots)])
    labels = cb.constellation.slice(soft)
    M = cb.constellation.order
    return labels @ (M ** np.arange(cb.frame_length - 1, -1, -1))


@dataclass
class _Local:
    """Best candidate found without enumeration and what is known around it."""

    idx: np.ndarray          # (F,) candidate
    res: np.ndarray          # (F,) its residual
    nb_idx: np.ndarray       # (F, K) tabulated neighbours of ``idx``
    nb_res: np.ndarray       # (F, K) their residuals
    bound: np.ndarray        # (F,) lower bound on ``|h (c - idx)|^2`` beyond the neighbours
    others: int              # codewords covered by ``bound``
    certified: np.ndarray    # (F,) ``idx`` is the unique ML decision


def _local_search(y, h, slots, cb: Codebook, hints, steps: int = 2) -> _Local:
    """Start from the linear guess and the hints, then walk to better neighbours."""
    F = y.shape[0]
    cands = [_linear_guess(y, h, slots, cb)]
    cands += [np.broadcast_to(np.asarray(x), (F,)) for x in hints]
    idx = cands[0]
    res = _residual(y, h, idx, slots, cb)
    for c in cands[1:]:
        r = _residual(y, h, c, slots, cb)
        better = r < res
        idx = np.where(better, c, idx)
        res = np.where(better, r, res)
    idx = idx.astype(np.int64)
    hmin = np.min(np.abs(h) ** 2, axis=1)
    nb = _neighbours(cb, slots)
    if nb is None:
        empty_i = np.zeros((F, 0), dtype=np.int64)
        bound = hmin * cb.min_partial_distance(slots)
        ok = bound > 4.0 * res * (1 + 1e-9) + 1e-300
        return _Local(idx, res, empty_i, np.zeros((F, 0)), bound, cb.size - 1, ok)
    table, beyond = nb
    cw = cb.codewords[:, list(slots)]

    def around(rows, centre):
        nb_i = table[centre]
        nb_r = np.sum(np.abs(y[rows, None, :] - h[rows, None, :] * cw[nb_i]) ** 2, axis=2)
        return nb_i, nb_r

    rows = np.arange(F)
    nb_idx, nb_res = around(rows, idx)
    for _ in range(steps):
        j = np.argmin(nb_res[rows], axis=1)
        best = nb_res[rows, j]
        move = best < res[rows]
        if not move.any():
            break
        rows = rows[move]
        idx[rows] = nb_idx[rows, j[move]]
        res[rows] = best[move]
        nb_idx[rows], nb_res[rows] = around(rows, idx[rows])
    bound = hmin * beyond[idx]
    ok = (np.min(nb_res, axis=1) > res * (1 + 1e-9)) & (bound > 4.0 * res * (1 + 1e-9) + 1e-300)
    return _Local(idx, res, nb_idx, nb_res, bound, cb.size - 1 - table.shape[1], ok)


def _enumerate(y, h, slots, cb: Codebook):
    n = y.shape[0]
    idx = np.empty(n, dtype=np.int64)
    met = np.empty(n)
    step = max(1, _CHUNK_ENTRIES // cb.size)
    for lo in range(0, n, step):
        m = _metric_block(y[lo:lo + step], h[lo:lo + step], slots, cb)
        k = np.argmin(m, axis=1)
        idx[lo:lo + step] = k
        met[lo:lo + step] = m[np.arange(len(k)), k]
    return idx, met


def ml_decode_batch(y, h, slots, cb: Codebook, hints=(), certify: bool = True):
    """Exhaustive ML decisions for a stack of windows sharing one slot set.

    Parameters
    ----------
    y, h : (F, S) received samples and equivalent gains.
    slots : the ``S`` frame slots the columns correspond to.
    hints : extra candidate index arrays tried for the certificate only.

    Returns
    -------
    (F,) decided frame indices and (F,) residuals at the decision.
    """
    slots = tuple(int(s) for s in slots)
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    n = y.shape[0]
    if len(slots) == 0:
        return np.zeros(n, dtype=np.int64), np.zeros(n)
    if not certify:
        return _enumerate(y, h, slots, cb)
    loc = _local_search(y, h, slots, cb, hints)
    idx, res, ok = loc.idx, loc.res, loc.certified
    if not ok.all():
        bad = ~ok
        i2, r2 = _enumerate(y[bad], h[bad], slots, cb)
        idx[bad] = i2
        res = res.copy()
        res[bad] = r2
    return idx, res


def ml_matches_batch(y, h, slots, cb: Codebook, truth) -> np.ndarray:
    """Whether the ML decision of each window equals ``truth``."""
    slots = tuple(int(s) for s in slots)
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    truth = np.asarray(truth, dtype=np.int64)
    if len(slots) == 0:
        return truth == 0
    loc = _local_search(y, h, slots, cb, [truth])
    r_truth = _residual(y, h, truth, slots, cb)
    # any other candidate strictly closer rules the truth out
    beaten = (loc.idx != truth) & (loc.res < r_truth)
    beaten |= np.any((loc.nb_idx != truth[:, None]) & (loc.nb_res < r_truth[:, None]), axis=1)
    out = loc.certified & (loc.idx == truth)
    rest = ~loc.certified & ~beaten
    if rest.any():
        i2, _ = _enumerate(y[rest], h[rest], slots, cb)
        out[rest] = i2 == truth[rest]
    return out


def ml_decode(w: ObservationWindow, U: SpreadingMatrix, c: Constellation):
    """ML information frame for one window.

    Returns the decided symbol frame and its log-likelihood
    ``-sum |y - h x|^2 / N0`` (additive constants dropped, ``N0 = 1``).
    """
    cb = get_codebook(c, U)
    idx, res = ml_decode_batch(w.y[None], w.h[None], w.slot_indices, cb, certify=False)
    return cb.symbols[idx[0]].copy(), -float(res[0])


def _log_ratio_from_metrics(m: np.ndarray, noise_variance: float = 1.0):
    ll = -m / noise_variance
    k = np.argmax(ll, axis=1)
    rows = np.arange(len(k))
    best = ll[rows, k]
    rest = ll.copy()
    rest[rows, k] = -np.inf
    shift = rest.max(axis=1)
    lse = shift + np.log(np.sum(np.exp(rest - shift[:, None]), axis=1))
    return k, best - lse


def forney_log_reliability_batch(y, h, slots, cb: Codebook):
    """Decisions and exact log reliability ratios by full enumeration."""
    slots = tuple(int(s) for s in slots)
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    n = y.shape[0]
    idx = np.empty(n, dtype=np.int64)
    lr = np.empty(n)
    step = max(1, _CHUNK_ENTRIES // cb.size)
    for lo in range(0, n, step):
        m = _metric_block(y[lo:lo + step], h[lo:lo + step], slots, cb)
        idx[lo:lo + step], lr[lo:lo + step] = _log_ratio_from_metrics(m)
    return idx, lr


def forney_passes_batch(y, h, slots, cb: Codebook, log_threshold, hints=()):
    """Forney test ``ratio >= threshold`` with the decided index.

    Most frames are settled without enumeration. When the local search
    certifies the ML decision, the tabulated neighbours give the ratio's
    dominant terms exactly and the remaining codewords are bounded through
    the minimum distance beyond them, which brackets the log ratio. An
    uncertified frame is rejected outright when two distinct candidates
    both have residual below the log threshold (one of them is not the
    decision, and the decision's residual is non-negative). Returns
    ``(decision, passes)``; the decision is only meaningful where
    ``passes`` holds.
    """
    slots = tuple(int(s) for s in slots)
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    n = y.shape[0]
    log_threshold = np.broadcast_to(np.asarray(log_threshold, dtype=float), (n,))
    loc = _local_search(y, h, slots, cb, hints)
    idx, r0, ok = loc.idx, loc.res, loc.certified
    with np.errstate(divide="ignore", over="ignore"):
        near = np.sum(np.exp(-(loc.nb_res - r0[:, None])), axis=1)
        far_gap = np.where(ok, (np.sqrt(loc.bound) - np.sqrt(r0)) ** 2 - r0, 0.0)
        far = loc.others * np.exp(-far_gap)
        lr_low = -np.log(near + far)
        lr_high = np.where(near > 0, -np.log(near), np.inf)
    sure = ok & (lr_low >= log_threshold)
    nb_min = loc.nb_res.min(axis=1) if loc.nb_res.shape[1] else np.full(n, np.inf)
    hopeless = (ok & (lr_high < log_threshold)) | (np.maximum(r0, nb_min) < log_threshold)
    passes = sure.copy()
    rest = ~(sure | hopeless)
    if rest.any():
        i2, lr = forney_log_reliability_batch(y[rest], h[rest], slots, cb)
        idx[rest] = i2
        passes[rest] = lr >= log_threshold[rest]
    return idx, passes


def forney_reliability(w: ObservationWindow, U: SpreadingMatrix, c: Constellation, log: bool = False):
    """Likelihood of the ML frame over the summed likelihood of all others.

    With ``log=True`` the natural log of the ratio is returned; the linear
    value overflows to ``inf`` for very reliable observations.
    """
    cb = get_codebook(c, U)
    _, lr = forney_log_reliability_batch(w.y[None], w.h[None], w.slot_indices, cb)
    if log:
        return float(lr[0])
    with np.errstate(over="ignore"):
        return float(np.exp(lr[0]))


def alamouti_window(y, g_s, g_r, start_slot, amp_solo, amp_coop):
    """Equivalent SISO window for the single-relay Alamouti scheme.

    Slots before ``start_slot`` (per frame) keep ``(y, amp_solo * g_s)``;
    every pair ``(2k, 2k+1)`` at or after it is orthogonally combined and
    normalised so that its noise stays unit variance and its residual
    equals the residual of the original pair. Returns ``(y_eq, h_eq)``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    F, T = y.shape
    if T % 2:
        raise ValueError("Alamouti frames need an even number of slots")
    g_s = np.broadcast_to(np.asarray(g_s, dtype=complex), (F,))
    g_r = np.broadcast_to(np.asarray(g_r, dtype=complex), (F,))
    start = np.broadcast_to(np.asarray(start_slot), (F,))
    if np.any((start < T) & (start % 2 == 1)):
        raise ValueError("relay must start on an even slot for Alamouti pairing")
    y_eq = y.copy()
    h_eq = np.repeat((amp_solo * g_s)[:, None], T, axis=1)
    h1 = amp_coop * g_s
    h2 = amp_coop * g_r
    alpha = np.sqrt(np.abs(h1) ** 2 + np.abs(h2) ** 2)
    safe = np.where(alpha > 0, alpha, 1.0)
    for k in range(0, T, 2):
        coop = start <= k
        if not coop.any():
            continue
        z1, z2 = alamouti_combine(y[:, k], y[:, k + 1], h1, h2)
        y_eq[:, k] = np.where(coop, z1 / safe, y_eq[:, k])
        y_eq[:, k + 1] = np.where(coop, z2 / safe, y_eq[:, k + 1])
        h_eq[:, k] = np.where(coop, alpha, h_eq[:, k])
        h_eq[:, k + 1] = np.where(coop, alpha, h_eq[:, k + 1])
    return y_eq, h_eq


def alamouti_decode(y, h_source, h_relay, U: SpreadingMatrix, c: Constellation,
                    start_slot: int, amp_solo: float = 1.0, amp_coop: float | None = None):
    """Decode one Alamouti-DDF frame.

    ``h_source``/``h_relay`` are the raw link gains; ``amp_solo`` and
    ``amp_coop`` the per-node amplitudes before and after relay activation
    (``amp_coop`` defaults to ``amp_solo / sqrt(2)``).
    """
    if amp_coop is None:
        amp_coop = amp_solo / np.sqrt(2)
    y_eq, h_eq = alamouti_window(y, h_source, h_relay, start_slot, amp_solo, amp_coop)
    cb = get_codebook(c, U)
    idx, _ = ml_decode_batch(y_eq, h_eq, range(U.dimension), cb, certify=False)
    return cb.symbols[idx[0]].copy()


def activation_hypotheses(n_relays: int, n_blocks: int) -> list[tuple]:
    """Activity hypotheses in GLRT preference order.

    Each hypothesis gives, per relay, the block at whose end it activates
    (``1..B-1``) or ``None``. Hypotheses with fewer relay transmissions
    come first; ties prefer later activations.
    """
    choices = list(range(1, n_blocks)) + [None]
    hyps = list(itertools.product(choices, repeat=n_relays))

    def key(h):
        blocks = [n_blocks if b is None else b for b in h]
        return (sum(n_blocks - b for b in blocks), tuple(-b for b in blocks))

    return sorted(hyps, key=key)


def glrt_decode_batch(y, hypothesis_gains, cb: Codebook, hints=()):
    """Joint activity/frame ML over a list of hypotheses.

    Parameters
    ----------
    y : (F, T) full-frame samples (or equivalent windows).
    hypothesis_gains : sequence of ``(y_h, h_h)`` or ``h_h`` arrays in
        preference order; a bare gain array reuses ``y``.

    Returns
    -------
    (F,) frame indices, (F,) chosen hypothesis positions, (F,) residuals.
    """
    y = np.asarray(y, dtype=complex)
    n, T = y.shape
    best_idx = np.zeros(n, dtype=np.int64)
    best_hyp = np.zeros(n, dtype=np.int64)
    best_res = np.full(n, np.inf)
    slots = tuple(range(T))
    for k, item in enumerate(hypothesis_gains):
        if isinstance(item, tuple):
            y_h, h_h = item
        else:
            y_h, h_h = y, item
        idx, res = ml_decode_batch(y_h, h_h, slots, cb, hints=hints)
        better = res < best_res
        best_idx = np.where(better, idx, best_idx)
        best_hyp = np.where(better, k, best_hyp)
        best_res = np.where(better, res, best_res)
    return best_idx, best_hyp, best_res


def glrt_joint_decode(y, ch, rot, cfg, hypotheses=None, max_hypotheses: int = 4096):
    """Joint (frame, activation profile) ML decision for one received frame.

    ``hypotheses`` optionally restricts the search to a list of per-relay
    activation tuples (block ``1..B-1`` or ``None``), in preference order.
    Returns ``(symbols, ActivationProfile)``.
    """
    from .engine import ActivationProfile, Scheme, _as_batch, _destination_window, _with_rotations, start_slots

    if rot is not None and cfg.scheme is Scheme.DISTRIBUTED_ROTATION and rot != cfg.rotations:
        cfg = _with_rotations(cfg, rot)
    N, T, Tb, B = cfg.n_relays, cfg.frame_length, cfg.block_length, cfg.num_blocks
    if hypotheses is None:
        if B**N > max_hypotheses:
            raise HypothesisBudgetError(f"{B**N} activity hypotheses exceed the budget {max_hypotheses}")
        hypotheses = activation_hypotheses(N, B)
    chb = _as_batch(ch)
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    windows = []
    for hyp in hypotheses:
        arr = ActivationProfile(tuple(hyp)).to_array()[None]
        windows.append(_destination_window(cfg, chb, y, start_slots(arr, Tb, T)))
    cb = cfg.codebook
    idx, pos, _ = glrt_decode_batch(y, windows, cb)
    return cb.symbols[idx[0]].copy(), ActivationProfile(tuple(hypotheses[int(pos[0])]))
